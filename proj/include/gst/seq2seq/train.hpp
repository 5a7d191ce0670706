#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "gst/numkit/rng.hpp"
#include "gst/seq2seq/model.hpp"

namespace gst::seq2seq {

/// One (context, target) training pair. `group` selects the loss term the
/// example is averaged within; `perturb` marks it for the augment hook.
struct Example {
  Context ctx;
  Tokens target;  // ends with [EOS]
  int group = 0;
  double weight = 1.0;
  bool perturb = false;
};

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct TrainConfig {
  double lr = 1e-3;
  int batch_size = 32;
  int epochs = 10;
  // When > 0, overrides `epochs` with max(1, round(budget / dataset size)).
  std::size_t example_budget = 0;
  std::uint64_t seed = 0;
  AdamConfig adam;
  double clip_norm = 1.0;  // global gradient norm; <= 0 disables
};

int resolved_epochs(const TrainConfig& cfg, std::size_t dataset_size);

/// Rewrites an example's context before the forward pass (MCR masking).
using AugmentFn = std::function<Context(const Context&, numkit::Rng&)>;

struct TrainResult {
  ModelParams params;
  std::vector<double> epoch_loss;  // mean batch loss per epoch
  std::vector<double> batch_loss;  // every batch, in order
};

/// Adam over shuffled mini-batches. The batch loss is the sum over groups of
/// the weighted mean NLL of the group's examples present in the batch.
TrainResult train(const ModelParams& init, const std::vector<Example>& data,
                  const TrainConfig& cfg, const AugmentFn& augment = {});

/// The grouped loss over a whole dataset at fixed parameters (no update).
double objective(const ModelParams& model, const std::vector<Example>& data);

/// Batch loss as a graph tensor; exposed for loss-decomposition checks.
Tensor batch_loss(const ModelParams& model, const std::vector<const Example*>& batch,
                  const std::vector<Context>& contexts);

}  // namespace gst::seq2seq
