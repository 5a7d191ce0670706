#include "gst/seq2seq/train.hpp"

#include <cmath>
#include <map>
#include <numeric>

#include "gst/errors.hpp"

namespace gst::seq2seq {

namespace nk = numkit;

namespace {

constexpr std::uint64_t kShuffleStream = 0;
constexpr std::uint64_t kAugmentStream = 1;

struct AdamState {
  std::vector<std::vector<double>> m, v;
  long step = 0;
};

void adam_step(ModelParams& model, AdamState& st, const TrainConfig& cfg) {
  auto params = model.named();
  if (st.m.empty()) {
    for (auto& [name, t] : params) {
      st.m.emplace_back(t->size(), 0.0);
      st.v.emplace_back(t->size(), 0.0);
    }
  }
  double scale = 1.0;
  if (cfg.clip_norm > 0.0) {
    double sq = 0.0;
    for (auto& [name, t] : params) {
      for (double g : t->grad()) sq += g * g;
    }
    const double norm = std::sqrt(sq);
    if (norm > cfg.clip_norm) scale = cfg.clip_norm / norm;
  }
  ++st.step;
  const double b1 = cfg.adam.beta1, b2 = cfg.adam.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(st.step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(st.step));
  for (std::size_t p = 0; p < params.size(); ++p) {
    Tensor& t = *params[p].second;
    const auto g = t.grad();
    if (g.empty()) continue;  // unused in this batch
    auto w = t.mutable_data();
    auto& m = st.m[p];
    auto& v = st.v[p];
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double gi = g[i] * scale;
      m[i] = b1 * m[i] + (1.0 - b1) * gi;
      v[i] = b2 * v[i] + (1.0 - b2) * gi * gi;
      w[i] -= cfg.lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg.adam.eps);
    }
  }
}

}  // namespace

int resolved_epochs(const TrainConfig& cfg, std::size_t dataset_size) {
  if (cfg.example_budget == 0 || dataset_size == 0) return cfg.epochs;
  const double e = std::round(static_cast<double>(cfg.example_budget) / dataset_size);
  return std::max(1, static_cast<int>(e));
}

Tensor batch_loss(const ModelParams& model, const std::vector<const Example*>& batch,
                  const std::vector<Context>& contexts) {
  if (batch.empty() || batch.size() != contexts.size()) {
    throw ContractError("batch_loss: batch and contexts must be non-empty and aligned");
  }
  // Ordered by group id so the summation order is fixed.
  std::map<int, std::pair<std::vector<Tensor>, double>> groups;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const Example& ex = *batch[i];
    auto& [terms, weight] = groups[ex.group];
    Tensor l = nll(model, contexts[i], ex.target);
    terms.push_back(ex.weight == 1.0 ? l : nk::scale(l, ex.weight));
    weight += ex.weight;
  }
  std::vector<Tensor> parts;
  for (auto& [id, group] : groups) {
    auto& [terms, weight] = group;
    if (weight <= 0.0) continue;
    parts.push_back(nk::scale(nk::add_n(terms), 1.0 / weight));
  }
  if (parts.empty()) throw ContractError("batch_loss: every example has zero weight");
  return parts.size() == 1 ? parts.front() : nk::add_n(parts);
}

TrainResult train(const ModelParams& init, const std::vector<Example>& data,
                  const TrainConfig& cfg, const AugmentFn& augment) {
  if (data.empty()) throw ContractError("train: empty dataset");
  if (!(cfg.lr > 0.0)) throw ContractError("train: learning rate must be positive");
  if (cfg.batch_size < 1 || cfg.epochs < 0) throw ContractError("train: bad batch size or epochs");

  TrainResult out;
  out.params = init.clone(true);
  const nk::Rng root(cfg.seed);
  AdamState adam;
  std::vector<std::size_t> order(data.size());
  std::size_t batch_id = 0;

  const int epochs = resolved_epochs(cfg, data.size());
  for (int epoch = 0; epoch < epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    nk::Rng shuffle_rng = root.fork(kShuffleStream).fork(epoch);
    shuffle_rng.shuffle(std::span<std::size_t>(order));
    const nk::Rng augment_root = root.fork(kAugmentStream).fork(epoch);

    double epoch_sum = 0.0;
    std::size_t n_batches = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size, ++batch_id) {
      const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
      std::vector<const Example*> batch;
      std::vector<Context> contexts;
      for (std::size_t i = start; i < stop; ++i) {
        const Example& ex = data[order[i]];
        batch.push_back(&ex);
        if (ex.perturb && augment) {
          nk::Rng r = augment_root.fork(order[i]);
          contexts.push_back(augment(ex.ctx, r));
        } else {
          contexts.push_back(ex.ctx);
        }
      }
      out.params.zero_grad();
      double value = 0.0;
      try {
        Tensor loss = batch_loss(out.params, batch, contexts);
        value = loss.item();
        if (!std::isfinite(value)) throw NumericError("non-finite loss");
        nk::backward(loss);
      } catch (const NumericError& e) {
        throw NumericError("train: batch " + std::to_string(batch_id) + " (epoch " +
                           std::to_string(epoch) + "): " + e.what());
      }
      adam_step(out.params, adam, cfg);
      out.batch_loss.push_back(value);
      epoch_sum += value;
      ++n_batches;
    }
    out.epoch_loss.push_back(epoch_sum / static_cast<double>(n_batches));
  }
  out.params.zero_grad();
  return out;
}

double objective(const ModelParams& model, const std::vector<Example>& data) {
  if (data.empty()) throw ContractError("objective: empty dataset");
  nk::NoGradGuard guard;
  std::map<int, std::pair<double, double>> groups;
  for (const Example& ex : data) {
    auto& [sum, weight] = groups[ex.group];
    sum += ex.weight * nll_value(model, ex.ctx, ex.target);
    weight += ex.weight;
  }
  double total = 0.0;
  for (const auto& [id, g] : groups) {
    if (g.second > 0.0) total += g.first / g.second;
  }
  return total;
}

}  // namespace gst::seq2seq
