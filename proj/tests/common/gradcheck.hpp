#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "gst/numkit/ops.hpp"
#include "gst/numkit/rng.hpp"
#include "gst/numkit/tensor.hpp"

namespace testutil {

// Denominator floor: components below it are compared absolutely at this scale.
inline constexpr double kGradFloor = 1e-6;

struct GradCheck {
  double max_rel = 0.0;
  std::size_t checked = 0;
};

/// Central differences of `f` against reverse mode for every entry of every
/// leaf. `f` must build a scalar from the leaves each time it is called.
inline GradCheck check_gradients(std::vector<gst::numkit::Tensor> leaves,
                                 const std::function<gst::numkit::Tensor()>& f,
                                 double step = 1e-5) {
  for (auto& t : leaves) t.zero_grad();
  gst::numkit::backward(f());
  std::vector<std::vector<double>> analytic;
  for (auto& t : leaves) {
    auto g = t.grad();
    analytic.emplace_back(g.begin(), g.end());
    if (analytic.back().empty()) analytic.back().assign(t.size(), 0.0);
  }
  GradCheck out;
  gst::numkit::NoGradGuard guard;
  for (std::size_t l = 0; l < leaves.size(); ++l) {
    auto data = leaves[l].mutable_data();
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double keep = data[i];
      data[i] = keep + step;
      const double up = f().item();
      data[i] = keep - step;
      const double down = f().item();
      data[i] = keep;
      const double numeric = (up - down) / (2 * step);
      const double a = analytic[l][i];
      const double denom = std::max({std::abs(a), std::abs(numeric), kGradFloor});
      out.max_rel = std::max(out.max_rel, std::abs(a - numeric) / denom);
      ++out.checked;
    }
  }
  return out;
}

}  // namespace testutil

namespace testutil {

/// A small random composition of primitives over fresh leaves. `build`
/// replays the same op sequence, so it can be re-evaluated under
/// perturbation.
struct RandomGraph {
  std::vector<gst::numkit::Tensor> leaves;
  std::function<gst::numkit::Tensor()> build;
};

inline RandomGraph random_graph(gst::numkit::Rng& rng) {
  using namespace gst::numkit;
  auto leaf = [&rng](std::size_t r, std::size_t c) {
    std::vector<double> v(r * c);
    for (double& x : v) x = rng.normal();
    return Tensor::from_data({r, c}, std::move(v), true);
  };
  const std::size_t m = 2 + rng.uniform_int(3);
  std::size_t n = 2 + rng.uniform_int(3);
  RandomGraph g;
  g.leaves.push_back(leaf(m, n));
  // Each step: op code and the indices of the leaves it consumes.
  struct Step {
    int op;
    std::vector<std::size_t> args;
    std::size_t lo = 0, hi = 0;
    std::vector<std::uint8_t> mask;
    double factor = 1.0;
  };
  std::vector<Step> steps;
  const int depth = 2 + static_cast<int>(rng.uniform_int(3));
  for (int d = 0; d < depth; ++d) {
    Step s;
    s.op = static_cast<int>(rng.uniform_int(11));
    switch (s.op) {
      case 0: {  // matmul by a new weight
        const std::size_t k = 2 + rng.uniform_int(3);
        s.args = {g.leaves.size()};
        g.leaves.push_back(leaf(n, k));
        n = k;
        break;
      }
      case 1:  // add_row bias
        s.args = {g.leaves.size()};
        g.leaves.push_back(leaf(1, n));
        break;
      case 2:  // elementwise product
        s.args = {g.leaves.size()};
        g.leaves.push_back(leaf(m, n));
        break;
      case 3:
        s.factor = rng.normal();
        break;
      case 6: {  // layer norm
        s.args = {g.leaves.size(), g.leaves.size() + 1};
        g.leaves.push_back(leaf(1, n));
        g.leaves.push_back(leaf(1, n));
        break;
      }
      case 7: {  // self-attention with causal mask
        s.args = {g.leaves.size(), g.leaves.size() + 1};
        g.leaves.push_back(leaf(n, n));
        g.leaves.push_back(leaf(n, n));
        break;
      }
      case 8:
        s.mask.resize(m * n);
        for (auto& b : s.mask) b = rng.bernoulli(0.3);
        s.factor = rng.normal();
        break;
      case 9:  // duplicate columns then slice them back
        s.lo = rng.uniform_int(n);
        s.hi = s.lo + n;
        break;
      case 10: {  // subtract then add another leaf
        s.args = {g.leaves.size(), g.leaves.size() + 1};
        g.leaves.push_back(leaf(m, n));
        g.leaves.push_back(leaf(m, n));
        break;
      }
      default:  // 4 relu, 5 log-softmax
        break;
    }
    steps.push_back(std::move(s));
  }
  std::vector<double> weights(m * n);
  for (double& w : weights) w = rng.normal();
  std::vector<int> targets(m);
  for (int& t : targets) t = static_cast<int>(rng.uniform_int(n));
  const bool ce_head = rng.bernoulli(0.5);
  auto leaves = g.leaves;
  g.build = [leaves, steps, weights, targets, ce_head, m, n]() {
    Tensor h = leaves[0];
    for (const Step& s : steps) {
      switch (s.op) {
        case 0: h = matmul(h, leaves[s.args[0]]); break;
        case 1: h = add_row(h, leaves[s.args[0]]); break;
        case 2: h = mul(h, leaves[s.args[0]]); break;
        case 3: h = scale(h, s.factor); break;
        case 4: h = relu(h); break;
        case 5: h = log(softmax_rows(h)); break;
        case 6: h = layer_norm(h, leaves[s.args[0]], leaves[s.args[1]]); break;
        case 7: {
          const Tensor q = matmul(h, leaves[s.args[0]]);
          const Tensor k = matmul(h, leaves[s.args[1]]);
          h = attention(q, k, h, AttentionMask{true, {}});
          break;
        }
        case 8: h = masked_fill(h, s.mask, s.factor); break;
        case 9: {
          const Tensor parts[] = {h, h};
          h = slice_cols(concat_cols(parts), s.lo, s.hi);
          break;
        }
        case 10: h = add(sub(h, leaves[s.args[0]]), leaves[s.args[1]]); break;
      }
    }
    if (ce_head) return cross_entropy_rows(h, targets);
    return sum(mul(h, Tensor::from_data({m, n}, weights)));
  };
  return g;
}

}  // namespace testutil

#include "gst/seq2seq/model.hpp"

namespace testutil {

/// Finite differences of the answer NLL w.r.t. every parameter and every
/// region feature of one context.
inline GradCheck check_model_gradients(const gst::seq2seq::ModelParams& model,
                                       const gst::seq2seq::Context& ctx,
                                       const gst::toyworld::Tokens& target) {
  using namespace gst;
  seq2seq::ModelParams m = model.clone(true);
  const numkit::Tensor v = numkit::Tensor::from_data(
      {ctx.features.regions, ctx.features.dim}, ctx.features.values, true);
  std::vector<numkit::Tensor> leaves{v};
  for (auto& [name, t] : m.named()) leaves.push_back(*t);
  return check_gradients(leaves, [&] {
    return seq2seq::nll(m, seq2seq::encode(m, ctx, v), target);
  });
}

}  // namespace testutil
