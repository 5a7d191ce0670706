#include "gst/curate/curate.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "json.hpp"

#include "gst/errors.hpp"
#include "gst/toyworld/scene.hpp"

namespace gst::curate {

void FeatureMatrix::append(std::uint64_t id, std::span<const double> x) {
  if (rows == 0 && cols == 0) cols = x.size();
  if (x.size() != cols) throw DimensionError("feature matrix: row length mismatch");
  values.insert(values.end(), x.begin(), x.end());
  ids.push_back(id);
  ++rows;
}

FeatureMatrix summary_matrix(const std::vector<toyworld::Dialog>& dialogs) {
  FeatureMatrix m;
  for (const auto& d : dialogs) m.append(d.scene_id, toyworld::pooled_features(d.features));
  return m;
}

std::optional<std::vector<double>> cholesky(std::span<const double> a, std::size_t n) {
  if (a.size() != n * n) throw DimensionError("cholesky: matrix is not n x n");
  std::vector<double> l(n * n, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    double d = a[j * n + j];
    for (std::size_t k = 0; k < j; ++k) d -= l[j * n + k] * l[j * n + k];
    if (!(d > 0.0) || !std::isfinite(d)) return std::nullopt;
    const double ljj = std::sqrt(d);
    l[j * n + j] = ljj;
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = a[i * n + j];
      for (std::size_t k = 0; k < j; ++k) s -= l[i * n + k] * l[j * n + k];
      l[i * n + j] = s / ljj;
    }
  }
  return l;
}

namespace {

std::optional<GaussianModel> try_fit(const GaussianModel& base, double lambda) {
  GaussianModel g = base;
  const std::size_t D = g.dim;
  g.lambda = lambda;
  g.cov = g.sample_cov;
  for (std::size_t i = 0; i < D; ++i) {
    for (std::size_t j = 0; j < D; ++j) {
      double& c = g.cov[i * D + j];
      c *= 1.0 - lambda;
      if (i == j) c += lambda * std::max(g.sample_cov[i * D + i], kVarianceFloor);
    }
  }
  auto l = cholesky(g.cov, D);
  if (!l) return std::nullopt;
  g.chol = std::move(*l);
  double log_det = 0.0;
  for (std::size_t i = 0; i < D; ++i) log_det += 2.0 * std::log(g.chol[i * D + i]);
  g.log_norm = -0.5 * (static_cast<double>(D) * std::log(2.0 * std::numbers::pi) + log_det);
  return g;
}

}  // namespace

GaussianModel fit_gaussian(const FeatureMatrix& x, double lambda) {
  if (x.rows < 2) throw ContractError("fit_gaussian: need at least two rows");
  if (x.cols == 0) throw ContractError("fit_gaussian: zero-dimensional features");
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw ContractError("fit_gaussian: lambda outside [0,1]");
  for (double v : x.values) {
    if (!std::isfinite(v)) throw NumericError("fit_gaussian: non-finite feature");
  }
  const std::size_t N = x.rows, D = x.cols;
  GaussianModel g;
  g.dim = D;
  g.mean.assign(D, 0.0);
  for (std::size_t r = 0; r < N; ++r) {
    for (std::size_t j = 0; j < D; ++j) g.mean[j] += x.values[r * D + j];
  }
  for (double& m : g.mean) m /= static_cast<double>(N);
  g.sample_cov.assign(D * D, 0.0);
  std::vector<double> c(D);
  for (std::size_t r = 0; r < N; ++r) {
    for (std::size_t j = 0; j < D; ++j) c[j] = x.values[r * D + j] - g.mean[j];
    for (std::size_t i = 0; i < D; ++i) {
      for (std::size_t j = 0; j <= i; ++j) g.sample_cov[i * D + j] += c[i] * c[j];
    }
  }
  for (std::size_t i = 0; i < D; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      const double v = g.sample_cov[i * D + j] / static_cast<double>(N - 1);
      g.sample_cov[i * D + j] = g.sample_cov[j * D + i] = v;
    }
  }
  if (auto fit = try_fit(g, lambda)) return *fit;
  if (lambda < kEscalatedShrinkage) {
    if (auto fit = try_fit(g, kEscalatedShrinkage)) return *fit;
  }
  throw NumericError("fit_gaussian: covariance not positive definite after shrinkage");
}

double mahalanobis_sq(const GaussianModel& g, std::span<const double> x) {
  if (x.size() != g.dim) {
    throw DimensionError("log_density: expected " + std::to_string(g.dim) + " dims, got " +
                         std::to_string(x.size()));
  }
  const std::size_t D = g.dim;
  // Forward substitution L z = x - mu.
  std::vector<double> z(D);
  double q = 0.0;
  for (std::size_t i = 0; i < D; ++i) {
    double s = x[i] - g.mean[i];
    for (std::size_t k = 0; k < i; ++k) s -= g.chol[i * D + k] * z[k];
    z[i] = s / g.chol[i * D + i];
    q += z[i] * z[i];
  }
  return q;
}

double log_density(const GaussianModel& g, std::span<const double> x) {
  return g.log_norm - 0.5 * mahalanobis_sq(g, x);
}

std::vector<std::uint64_t> top_m_by_score(std::span<const double> scores,
                                          std::span<const std::uint64_t> ids, std::size_t m) {
  if (scores.size() != ids.size()) throw DimensionError("retrieve: scores and ids differ in length");
  if (m > ids.size()) {
    throw ContractError("retrieve: M=" + std::to_string(m) + " exceeds pool size " +
                        std::to_string(ids.size()));
  }
  std::vector<std::size_t> order(ids.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return ids[a] < ids[b];
  });
  std::vector<std::uint64_t> out;
  out.reserve(m);
  for (std::size_t i = 0; i < m; ++i) out.push_back(ids[order[i]]);
  return out;
}

std::vector<std::uint64_t> retrieve_top_m(const GaussianModel& g, const FeatureMatrix& pool,
                                          std::size_t m) {
  std::vector<double> scores(pool.rows);
  for (std::size_t r = 0; r < pool.rows; ++r) scores[r] = log_density(g, pool.row(r));
  return top_m_by_score(scores, pool.ids, m);
}

const char* tau_mode_name(TauMode mode) {
  return mode == TauMode::Absolute ? "absolute" : "percentile";
}

TauMode parse_tau_mode(const std::string& name) {
  if (name == "absolute") return TauMode::Absolute;
  if (name == "percentile") return TauMode::Percentile;
  throw ConfigError("unknown tau mode '" + name + "'");
}

std::string SelectionReport::to_json() const {
  nlohmann::ordered_json j;
  j["tau"] = tau;
  j["mode"] = tau_mode_name(mode);
  j["total"] = total;
  j["selected"] = selected;
  j["utilization"] = utilization;
  return j.dump(2);
}

SelectionReport ppl_select(std::vector<toyworld::Dialog>& silver, double tau, TauMode mode) {
  if (!(tau > 0.0)) throw ContractError("ppl_select: tau must be positive");
  SelectionReport rep;
  rep.tau = tau;
  rep.mode = mode;
  for (auto& d : silver) {
    for (auto& r : d.rounds) {
      if (!r.teacher_ppl) {
        throw DataError("ppl_select: scene " + std::to_string(d.scene_id) +
                        " has a round without teacher_ppl");
      }
      r.selected = *r.teacher_ppl < tau;
      ++rep.total;
      if (r.selected) ++rep.selected;
    }
  }
  rep.utilization =
      rep.total == 0 ? 0.0 : static_cast<double>(rep.selected) / static_cast<double>(rep.total);
  return rep;
}

double percentile(std::vector<double> values, double q) {
  if (values.empty()) throw ContractError("percentile: no values");
  if (!(q >= 0.0 && q <= 100.0)) throw ContractError("percentile: q outside [0,100]");
  std::sort(values.begin(), values.end());
  const double pos = q / 100.0 * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

}  // namespace gst::curate
