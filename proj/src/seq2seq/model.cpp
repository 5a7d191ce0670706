#include "gst/seq2seq/model.hpp"

#include <cmath>
#include <sstream>

#include "gst/errors.hpp"

namespace gst::seq2seq {

namespace nk = numkit;

namespace {

Tensor normal_init(numkit::Rng& rng, nk::Shape shape, double stddev) {
  std::vector<double> v(nk::shape_size(shape));
  for (double& x : v) x = stddev * rng.normal();
  return Tensor::from_data(std::move(shape), std::move(v), true);
}

Tensor constant(nk::Shape shape, double value) {
  std::vector<double> v(nk::shape_size(shape), value);
  return Tensor::from_data(std::move(shape), std::move(v), true);
}

Tensor linear_init(numkit::Rng& rng, std::size_t in, std::size_t out) {
  return normal_init(rng, {in, out}, std::sqrt(2.0 / static_cast<double>(in + out)));
}

LayerNormParams ln_init(std::size_t d) { return {constant({d}, 1.0), constant({d}, 0.0)}; }

AttentionParams attn_init(numkit::Rng& rng, std::size_t d) {
  return {linear_init(rng, d, d), linear_init(rng, d, d), linear_init(rng, d, d),
          linear_init(rng, d, d)};
}

FeedForwardParams ffn_init(numkit::Rng& rng, std::size_t d, std::size_t hidden) {
  return {linear_init(rng, d, hidden), constant({hidden}, 0.0), linear_init(rng, hidden, d),
          constant({d}, 0.0)};
}

Tensor apply_ln(const LayerNormParams& p, const Tensor& x) {
  return nk::layer_norm(x, p.gain, p.bias);
}

Tensor apply_ffn(const FeedForwardParams& p, const Tensor& x) {
  Tensor h = nk::relu(nk::add_row(nk::matmul(x, p.w1), p.b1));
  return nk::add_row(nk::matmul(h, p.w2), p.b2);
}

// Multi-head attention with pre-projected keys and values.
Tensor multi_head(const AttentionParams& p, int heads, const Tensor& queries, const Tensor& keys,
                  const Tensor& values, const nk::AttentionMask& mask) {
  const std::size_t d = queries.cols();
  const std::size_t dh = d / static_cast<std::size_t>(heads);
  Tensor q = nk::matmul(queries, p.wq);
  if (heads == 1) return nk::matmul(nk::attention(q, keys, values, mask), p.wo);
  std::vector<Tensor> outs;
  outs.reserve(heads);
  for (int h = 0; h < heads; ++h) {
    const std::size_t b = h * dh, e = b + dh;
    outs.push_back(nk::attention(nk::slice_cols(q, b, e), nk::slice_cols(keys, b, e),
                                 nk::slice_cols(values, b, e), mask));
  }
  return nk::matmul(nk::concat_cols(outs), p.wo);
}

void check_tokens(const ModelParams& m, std::span<const int> tokens, const char* what) {
  for (int t : tokens) {
    if (t < 0 || t >= m.config.vocab_size) {
      throw VocabError(std::string(what) + ": token id " + std::to_string(t) +
                       " outside the vocabulary");
    }
  }
}

}  // namespace

const char* role_name(Role role) { return role == Role::Answerer ? "answerer" : "questioner"; }

std::uint64_t ModelConfig::hash() const {
  std::ostringstream s;
  s << "v" << vocab_size << ";d" << d_model << ";h" << heads << ";f" << ffn << ";x" << feature_dim
    << ";r" << regions << ";c" << max_ctx << ";t" << max_target;
  return toyworld::fnv1a64(s.str());
}

ModelParams ModelParams::init(const ModelConfig& cfg, Role role, std::uint64_t seed) {
  if (cfg.vocab_size <= toyworld::kNumSpecials || cfg.d_model <= 0 || cfg.heads <= 0 ||
      cfg.d_model % cfg.heads != 0 || cfg.ffn <= 0 || cfg.feature_dim <= 0 || cfg.regions <= 0 ||
      cfg.max_ctx <= cfg.regions || cfg.max_target <= 0) {
    throw ContractError("model: inconsistent configuration");
  }
  numkit::Rng rng = numkit::Rng(seed).fork(role == Role::Answerer ? 1 : 2);
  const auto V = static_cast<std::size_t>(cfg.vocab_size);
  const auto d = static_cast<std::size_t>(cfg.d_model);
  ModelParams m;
  m.config = cfg;
  m.role = role;
  m.token_embedding = normal_init(rng, {V, d}, 0.3);
  m.region_proj = linear_init(rng, cfg.feature_dim, d);
  m.region_bias = constant({d}, 0.0);
  m.region_pos = normal_init(rng, {static_cast<std::size_t>(cfg.regions), d}, 0.1);
  m.text_pos = normal_init(rng, {static_cast<std::size_t>(cfg.max_ctx), d}, 0.1);
  m.segment = normal_init(rng, {3, d}, 0.1);
  m.enc_ln1 = ln_init(d);
  m.enc_ln2 = ln_init(d);
  m.enc_out_ln = ln_init(d);
  m.enc_attn = attn_init(rng, d);
  m.enc_ffn = ffn_init(rng, d, cfg.ffn);
  m.dec_pos = normal_init(rng, {static_cast<std::size_t>(cfg.max_target + 1), d}, 0.1);
  m.dec_ln1 = ln_init(d);
  m.dec_ln2 = ln_init(d);
  m.dec_ln3 = ln_init(d);
  m.dec_out_ln = ln_init(d);
  m.dec_self = attn_init(rng, d);
  m.dec_cross = attn_init(rng, d);
  m.dec_ffn = ffn_init(rng, d, cfg.ffn);
  m.out_proj = normal_init(rng, {d, V}, 0.02);
  m.out_bias = constant({V}, 0.0);
  return m;
}

std::vector<std::pair<std::string, const Tensor*>> ModelParams::named() const {
  std::vector<std::pair<std::string, const Tensor*>> out;
  const auto ln = [&](const std::string& n, const LayerNormParams& p) {
    out.emplace_back(n + ".gain", &p.gain);
    out.emplace_back(n + ".bias", &p.bias);
  };
  const auto attn = [&](const std::string& n, const AttentionParams& p) {
    out.emplace_back(n + ".wq", &p.wq);
    out.emplace_back(n + ".wk", &p.wk);
    out.emplace_back(n + ".wv", &p.wv);
    out.emplace_back(n + ".wo", &p.wo);
  };
  const auto ffn = [&](const std::string& n, const FeedForwardParams& p) {
    out.emplace_back(n + ".w1", &p.w1);
    out.emplace_back(n + ".b1", &p.b1);
    out.emplace_back(n + ".w2", &p.w2);
    out.emplace_back(n + ".b2", &p.b2);
  };
  out.emplace_back("token_embedding", &token_embedding);
  out.emplace_back("region_proj", &region_proj);
  out.emplace_back("region_bias", &region_bias);
  out.emplace_back("region_pos", &region_pos);
  out.emplace_back("text_pos", &text_pos);
  out.emplace_back("segment", &segment);
  ln("enc.ln1", enc_ln1);
  attn("enc.attn", enc_attn);
  ln("enc.ln2", enc_ln2);
  ffn("enc.ffn", enc_ffn);
  ln("enc.out_ln", enc_out_ln);
  out.emplace_back("dec.pos", &dec_pos);
  ln("dec.ln1", dec_ln1);
  attn("dec.self", dec_self);
  ln("dec.ln2", dec_ln2);
  attn("dec.cross", dec_cross);
  ln("dec.ln3", dec_ln3);
  ffn("dec.ffn", dec_ffn);
  ln("dec.out_ln", dec_out_ln);
  out.emplace_back("out_proj", &out_proj);
  out.emplace_back("out_bias", &out_bias);
  return out;
}

std::vector<std::pair<std::string, Tensor*>> ModelParams::named() {
  std::vector<std::pair<std::string, Tensor*>> out;
  for (auto& [name, t] : std::as_const(*this).named()) {
    out.emplace_back(name, const_cast<Tensor*>(t));
  }
  return out;
}

ModelParams ModelParams::clone(bool requires_grad) const {
  ModelParams copy = *this;
  for (auto& [name, t] : copy.named()) *t = t->clone(requires_grad);
  return copy;
}

void ModelParams::zero_grad() {
  for (auto& [name, t] : named()) t->zero_grad();
}

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : named()) n += t->size();
  return n;
}

Encoded encode(const ModelParams& m, const Context& ctx) {
  const auto& f = ctx.features;
  return encode(m, ctx, Tensor::from_data({f.regions, f.dim}, f.values));
}

Encoded encode(const ModelParams& m, const Context& ctx, const Tensor& features) {
  const ModelConfig& cfg = m.config;
  if (features.rows() != static_cast<std::size_t>(cfg.regions) ||
      features.cols() != static_cast<std::size_t>(cfg.feature_dim)) {
    throw DimensionError("encode: features " + nk::shape_str(features.shape()) +
                         " do not match the model's region layout");
  }
  if (m.role == Role::Questioner && !ctx.question.empty()) {
    throw ContractError("encode: the questioner takes no question tokens");
  }
  if (m.role == Role::Answerer && ctx.question.empty()) {
    throw ContractError("encode: the answerer needs a question");
  }
  check_tokens(m, ctx.history, "encode");
  check_tokens(m, ctx.question, "encode");
  const std::size_t text_len = ctx.history.size() + ctx.question.size();
  if (!ctx.region_mask.empty() && ctx.region_mask.size() != features.rows()) {
    throw DimensionError("encode: region mask length");
  }
  if (!ctx.token_mask.empty() && ctx.token_mask.size() != text_len) {
    throw DimensionError("encode: token mask length");
  }

  // Keep the most recent history when the context would overflow max_ctx.
  const std::size_t budget = static_cast<std::size_t>(cfg.max_ctx - cfg.regions);
  if (ctx.question.size() > budget) throw CapacityError("encode: question exceeds max_ctx");
  const std::size_t keep_hist = std::min(ctx.history.size(), budget - ctx.question.size());
  const std::size_t drop = ctx.history.size() - keep_hist;

  std::vector<int> text(ctx.history.begin() + drop, ctx.history.end());
  text.insert(text.end(), ctx.question.begin(), ctx.question.end());

  const int seg_ids_regions[1] = {0};
  Tensor regions = nk::add(nk::add_row(nk::matmul(features, m.region_proj), m.region_bias),
                           m.region_pos);
  regions = nk::add_row(regions, nk::embedding(m.segment, seg_ids_regions));

  std::vector<Tensor> parts{regions};
  std::vector<std::uint8_t> key_valid(features.rows(), 1);
  if (!ctx.region_mask.empty()) key_valid = ctx.region_mask;
  if (!text.empty()) {
    std::vector<int> seg(text.size(), 1);
    std::fill(seg.begin() + keep_hist, seg.end(), 2);
    std::vector<int> pos(text.size());
    for (std::size_t i = 0; i < pos.size(); ++i) pos[i] = static_cast<int>(i);
    Tensor tok = nk::add(nk::embedding(m.token_embedding, text), nk::embedding(m.text_pos, pos));
    parts.push_back(nk::add(tok, nk::embedding(m.segment, seg)));
    if (ctx.token_mask.empty()) {
      key_valid.resize(key_valid.size() + text.size(), 1);
    } else {
      key_valid.insert(key_valid.end(), ctx.token_mask.begin() + drop, ctx.token_mask.end());
    }
  }
  Tensor x = nk::concat_rows(parts);

  nk::AttentionMask mask;
  if (std::find(key_valid.begin(), key_valid.end(), 0) != key_valid.end()) {
    mask.key_valid = key_valid;
  }
  const int heads = cfg.heads;
  Tensor h = apply_ln(m.enc_ln1, x);
  x = nk::add(x, multi_head(m.enc_attn, heads, h, nk::matmul(h, m.enc_attn.wk),
                            nk::matmul(h, m.enc_attn.wv), mask));
  x = nk::add(x, apply_ffn(m.enc_ffn, apply_ln(m.enc_ln2, x)));
  Encoded enc;
  enc.memory = apply_ln(m.enc_out_ln, x);
  enc.cross_k = nk::matmul(enc.memory, m.dec_cross.wk);
  enc.cross_v = nk::matmul(enc.memory, m.dec_cross.wv);
  enc.key_valid = std::move(mask.key_valid);
  return enc;
}

Tensor decoder_logits(const ModelParams& m, const Encoded& enc, std::span<const int> inputs) {
  if (inputs.empty()) throw ContractError("decoder: empty input");
  if (inputs.size() > static_cast<std::size_t>(m.config.max_target + 1)) {
    throw CapacityError("decoder: sequence longer than max_target");
  }
  check_tokens(m, inputs, "decoder");
  std::vector<int> pos(inputs.size());
  for (std::size_t i = 0; i < pos.size(); ++i) pos[i] = static_cast<int>(i);
  Tensor y = nk::add(nk::embedding(m.token_embedding, inputs), nk::embedding(m.dec_pos, pos));
  const int heads = m.config.heads;

  nk::AttentionMask causal;
  causal.causal = true;
  Tensor h = apply_ln(m.dec_ln1, y);
  y = nk::add(y, multi_head(m.dec_self, heads, h, nk::matmul(h, m.dec_self.wk),
                            nk::matmul(h, m.dec_self.wv), causal));

  nk::AttentionMask cross;
  cross.key_valid = enc.key_valid;
  y = nk::add(y, multi_head(m.dec_cross, heads, apply_ln(m.dec_ln2, y), enc.cross_k, enc.cross_v,
                            cross));
  y = nk::add(y, apply_ffn(m.dec_ffn, apply_ln(m.dec_ln3, y)));
  return nk::add_row(nk::matmul(apply_ln(m.dec_out_ln, y), m.out_proj), m.out_bias);
}

Tokens with_eos(std::span<const int> tokens) {
  Tokens out(tokens.begin(), tokens.end());
  out.push_back(toyworld::kEos);
  return out;
}

Tensor nll(const ModelParams& m, const Encoded& enc, std::span<const int> target) {
  if (target.empty() || target.back() != toyworld::kEos) {
    throw ContractError("nll: target must be non-empty and end with [EOS]");
  }
  check_tokens(m, target, "nll");
  std::vector<int> inputs{toyworld::kBos};
  inputs.insert(inputs.end(), target.begin(), target.end() - 1);
  return nk::cross_entropy_rows(decoder_logits(m, enc, inputs), target);
}

Tensor nll(const ModelParams& m, const Context& ctx, std::span<const int> target) {
  return nll(m, encode(m, ctx), target);
}

double nll_value(const ModelParams& m, const Encoded& enc, std::span<const int> target) {
  nk::NoGradGuard guard;
  return nll(m, enc, target).item();
}

double nll_value(const ModelParams& m, const Context& ctx, std::span<const int> target) {
  nk::NoGradGuard guard;
  return nll(m, encode(m, ctx), target).item();
}

double perplexity(const ModelParams& m, const Context& ctx, std::span<const int> seq) {
  return std::exp(nll_value(m, ctx, seq));
}

}  // namespace gst::seq2seq
