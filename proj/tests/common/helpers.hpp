#pragma once

#include <cmath>
#include <vector>

#include "gst/numkit/rng.hpp"
#include "gst/seq2seq/model.hpp"
#include "gst/toyworld/dataset.hpp"
#include "gst/toyworld/vocab.hpp"

namespace testutil {

inline gst::toyworld::Tokens words(const char* text) {
  return gst::toyworld::Vocab::standard().encode(text);
}

inline gst::seq2seq::ModelConfig small_model() {
  gst::seq2seq::ModelConfig c;
  c.vocab_size = static_cast<int>(gst::toyworld::Vocab::standard().size());
  c.d_model = 16;
  c.heads = 2;
  c.ffn = 32;
  c.feature_dim = 16;
  c.regions = 9;
  c.max_ctx = 128;
  c.max_target = 16;
  return c;
}

/// Small enough for exhaustive finite differences over every parameter.
inline gst::seq2seq::ModelConfig tiny_model() {
  auto c = small_model();
  c.d_model = 8;
  c.ffn = 16;
  c.max_ctx = 64;
  c.max_target = 8;
  return c;
}

inline gst::toyworld::DatasetConfig small_data(int train = 40, int pool = 60) {
  gst::toyworld::DatasetConfig d;
  d.n_train = train;
  d.n_val = 10;
  d.n_test = 10;
  d.pool_size = pool;
  return d;
}

inline std::vector<double> random_vector(gst::numkit::Rng& rng, std::size_t n, double s = 1.0) {
  std::vector<double> v(n);
  for (double& x : v) x = s * rng.normal();
  return v;
}

inline double rel_err(double a, double b) {
  return std::abs(a - b) / std::max(1e-8, std::max(std::abs(a), std::abs(b)));
}

}  // namespace testutil
