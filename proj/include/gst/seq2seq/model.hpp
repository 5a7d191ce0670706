#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "gst/numkit/rng.hpp"
#include "gst/numkit/ops.hpp"
#include "gst/toyworld/scene.hpp"
#include "gst/toyworld/vocab.hpp"

namespace gst::seq2seq {

using numkit::Tensor;
using toyworld::Tokens;

enum class Role { Answerer, Questioner };
const char* role_name(Role role);

struct ModelConfig {
  int vocab_size = 0;
  int d_model = 32;
  int heads = 2;
  int ffn = 64;
  int feature_dim = 16;
  int regions = 9;
  int max_ctx = 128;
  int max_target = 16;
  std::uint64_t hash() const;
  bool operator==(const ModelConfig&) const = default;
};

struct LayerNormParams {
  Tensor gain, bias;
};
struct AttentionParams {
  Tensor wq, wk, wv, wo;
};
struct FeedForwardParams {
  Tensor w1, b1, w2, b2;
};

/// All learnable arrays of one encoder-decoder agent.
struct ModelParams {
  ModelConfig config;
  Role role = Role::Answerer;

  Tensor token_embedding;   // V x d
  Tensor region_proj;       // f x d
  Tensor region_bias;       // d
  Tensor region_pos;        // R x d
  Tensor text_pos;          // max_ctx x d
  Tensor segment;           // 3 x d: regions, history, question

  LayerNormParams enc_ln1, enc_ln2, enc_out_ln;
  AttentionParams enc_attn;
  FeedForwardParams enc_ffn;

  Tensor dec_pos;           // (max_target + 1) x d
  LayerNormParams dec_ln1, dec_ln2, dec_ln3, dec_out_ln;
  AttentionParams dec_self, dec_cross;
  FeedForwardParams dec_ffn;
  Tensor out_proj;          // d x V
  Tensor out_bias;          // V

  static ModelParams init(const ModelConfig& config, Role role, std::uint64_t seed);

  /// Stable (name, tensor) listing used by the optimizer and checkpoints.
  std::vector<std::pair<std::string, Tensor*>> named();
  std::vector<std::pair<std::string, const Tensor*>> named() const;

  /// Deep copy; parameters of the copy track gradients iff `requires_grad`.
  ModelParams clone(bool requires_grad = true) const;
  void zero_grad();
  std::size_t parameter_count() const;
};

/// Encoder input c_t = (v, d_{<t}, q_t). `question` is empty for the
/// questioner. Masks hold one byte per region / per history+question token;
/// an empty mask means every position is attended. A zero byte removes the
/// position from attention (it still occupies its slot).
struct Context {
  toyworld::SceneFeatures features;
  Tokens history;
  Tokens question;
  std::vector<std::uint8_t> region_mask;
  std::vector<std::uint8_t> token_mask;
};

/// Encoder output plus the cross-attention keys/values derived from it,
/// reusable across every target scored against the same context.
struct Encoded {
  Tensor memory;
  Tensor cross_k;
  Tensor cross_v;
  std::vector<std::uint8_t> key_valid;
};

Encoded encode(const ModelParams& model, const Context& ctx);
/// Same, with region features supplied as a tensor (gradient w.r.t. features).
Encoded encode(const ModelParams& model, const Context& ctx, const Tensor& features);

/// Logits [S x V] for decoder inputs [BOS, w_1 .. w_{S-1}].
Tensor decoder_logits(const ModelParams& model, const Encoded& enc, std::span<const int> inputs);

/// Per-token mean NLL of `target` (must end with [EOS]) under teacher forcing.
Tensor nll(const ModelParams& model, const Context& ctx, std::span<const int> target);
Tensor nll(const ModelParams& model, const Encoded& enc, std::span<const int> target);
/// Graph-free evaluation of the same quantity.
double nll_value(const ModelParams& model, const Context& ctx, std::span<const int> target);
double nll_value(const ModelParams& model, const Encoded& enc, std::span<const int> target);

double perplexity(const ModelParams& model, const Context& ctx, std::span<const int> seq);

/// Appends [EOS]; the training target for an answer or question.
Tokens with_eos(std::span<const int> tokens);

}  // namespace gst::seq2seq
