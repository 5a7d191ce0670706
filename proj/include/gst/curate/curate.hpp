#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gst/toyworld/dialog.hpp"

namespace gst::curate {

/// N x D row-major matrix of per-scene summary vectors.
struct FeatureMatrix {
  std::size_t rows = 0, cols = 0;
  std::vector<double> values;
  std::vector<std::uint64_t> ids;

  std::span<const double> row(std::size_t i) const { return {values.data() + i * cols, cols}; }
  void append(std::uint64_t id, std::span<const double> x);
};

/// Mean-pooled features of each dialog's scene.
FeatureMatrix summary_matrix(const std::vector<toyworld::Dialog>& dialogs);

struct GaussianModel {
  std::size_t dim = 0;
  std::vector<double> mean;
  std::vector<double> sample_cov;  // unbiased, before shrinkage
  std::vector<double> cov;         // shrunk
  std::vector<double> chol;        // lower factor of `cov`
  double lambda = 0.1;
  double log_norm = 0.0;           // -(D ln 2pi + ln det) / 2
};

inline constexpr double kDefaultShrinkage = 0.1;
inline constexpr double kEscalatedShrinkage = 0.5;
/// Floor on the diagonal target so constant columns stay positive definite.
inline constexpr double kVarianceFloor = 1e-6;

/// Lower Cholesky factor of a symmetric n x n matrix; nullopt unless positive definite.
std::optional<std::vector<double>> cholesky(std::span<const double> a, std::size_t n);

GaussianModel fit_gaussian(const FeatureMatrix& x, double lambda = kDefaultShrinkage);
double log_density(const GaussianModel& g, std::span<const double> x);
/// Squared Mahalanobis distance under the shrunk covariance.
double mahalanobis_sq(const GaussianModel& g, std::span<const double> x);

/// Ids of the M most likely pool rows, best first; ties by ascending id.
std::vector<std::uint64_t> retrieve_top_m(const GaussianModel& g, const FeatureMatrix& pool,
                                          std::size_t m);
/// Same selection rule over precomputed scores.
std::vector<std::uint64_t> top_m_by_score(std::span<const double> scores,
                                          std::span<const std::uint64_t> ids, std::size_t m);

enum class TauMode { Absolute, Percentile };
const char* tau_mode_name(TauMode mode);
TauMode parse_tau_mode(const std::string& name);

struct SelectionReport {
  double tau = 0.0;
  TauMode mode = TauMode::Absolute;
  std::size_t total = 0;
  std::size_t selected = 0;
  double utilization = 0.0;
  std::string to_json() const;
};

/// Flags each silver round selected iff its teacher PPL < tau.
SelectionReport ppl_select(std::vector<toyworld::Dialog>& silver, double tau,
                           TauMode mode = TauMode::Absolute);

/// The q-th percentile (0..100, linear interpolation) of `values`.
double percentile(std::vector<double> values, double q);

}  // namespace gst::curate
