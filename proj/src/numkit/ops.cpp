#include "gst/numkit/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "gst/errors.hpp"

namespace gst::numkit {

using detail::Node;

namespace {

void require_finite(const Tensor& t, const char* op) {
  if (!t.defined()) throw ContractError(std::string(op) + ": undefined operand");
  // v * 0 is NaN exactly when v is not finite.
  double probe = 0.0;
  for (double v : t.data()) probe += v * 0.0;
  if (probe != 0.0) throw NumericError(std::string(op) + ": non-finite operand");
}

void require_matrix(const Tensor& t, const char* op) {
  if (t.rank() != 2) {
    throw DimensionError(std::string(op) + ": expected a matrix, got " + shape_str(t.shape()));
  }
}

Tensor make_result(Shape shape, std::vector<double> value, std::initializer_list<Tensor> parents,
                   std::function<void(Node&)> rule) {
  Tensor out = Tensor::from_data(std::move(shape), std::move(value));
  bool track = false;
  if (grad_enabled()) {
    for (const Tensor& p : parents) track = track || p.requires_grad();
  }
  if (track) {
    Node& n = *out.node();
    n.requires_grad = true;
    for (const Tensor& p : parents) n.parents.push_back(p.node());
    n.backward = std::move(rule);
  }
  return out;
}

Tensor make_result_n(Shape shape, std::vector<double> value, std::span<const Tensor> parents,
                     std::function<void(Node&)> rule) {
  Tensor out = Tensor::from_data(std::move(shape), std::move(value));
  bool track = false;
  if (grad_enabled()) {
    for (const Tensor& p : parents) track = track || p.requires_grad();
  }
  if (track) {
    Node& n = *out.node();
    n.requires_grad = true;
    for (const Tensor& p : parents) n.parents.push_back(p.node());
    n.backward = std::move(rule);
  }
  return out;
}

// Returns the parent's gradient buffer if it participates in the sweep.
double* grad_of(Node& self, std::size_t i) {
  Node& p = *self.parents[i];
  if (!p.requires_grad) return nullptr;
  p.ensure_grad();
  return p.grad.data();
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k) {
    throw DimensionError("matmul: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  require_finite(a, "matmul");
  require_finite(b, "matmul");
  std::vector<double> out(m * n, 0.0);
  const double* A = a.data().data();
  const double* B = b.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    double* row = out.data() + i * n;
    for (std::size_t kk = 0; kk < k; ++kk) {
      const double aik = A[i * k + kk];
      const double* brow = B + kk * n;
      for (std::size_t j = 0; j < n; ++j) row[j] += aik * brow[j];
    }
  }
  return make_result({m, n}, std::move(out), {a, b}, [m, k, n](Node& self) {
    const double* G = self.grad.data();
    const double* A = self.parents[0]->value.data();
    const double* B = self.parents[1]->value.data();
    if (double* gA = grad_of(self, 0)) {
      for (std::size_t i = 0; i < m; ++i) {
        const double* grow = G + i * n;
        for (std::size_t kk = 0; kk < k; ++kk) {
          const double* brow = B + kk * n;
          double acc = 0.0;
          for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
          gA[i * k + kk] += acc;
        }
      }
    }
    if (double* gB = grad_of(self, 1)) {
      for (std::size_t i = 0; i < m; ++i) {
        const double* grow = G + i * n;
        for (std::size_t kk = 0; kk < k; ++kk) {
          const double aik = A[i * k + kk];
          double* gbrow = gB + kk * n;
          for (std::size_t j = 0; j < n; ++j) gbrow[j] += aik * grow[j];
        }
      }
    }
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError("add: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  require_finite(a, "add");
  require_finite(b, "add");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
  return make_result(a.shape(), std::move(out), {a, b}, [](Node& self) {
    for (std::size_t p = 0; p < 2; ++p) {
      if (double* g = grad_of(self, p)) {
        for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
      }
    }
  });
}

Tensor add_row(const Tensor& a, const Tensor& row) {
  const std::size_t m = a.rows(), n = a.cols();
  if (row.size() != n || row.rows() != 1) {
    throw DimensionError("add_row: " + shape_str(a.shape()) + " + " + shape_str(row.shape()));
  }
  require_finite(a, "add_row");
  require_finite(row, "add_row");
  std::vector<double> out(a.data().begin(), a.data().end());
  const double* r = row.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] += r[j];
  }
  return make_result(a.shape(), std::move(out), {a, row}, [m, n](Node& self) {
    if (double* g = grad_of(self, 0)) {
      for (std::size_t i = 0; i < m * n; ++i) g[i] += self.grad[i];
    }
    if (double* g = grad_of(self, 1)) {
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) g[j] += self.grad[i * n + j];
      }
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) { return add(a, scale(b, -1.0)); }

Tensor mul(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError("mul: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  require_finite(a, "mul");
  require_finite(b, "mul");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
  return make_result(a.shape(), std::move(out), {a, b}, [](Node& self) {
    const auto& av = self.parents[0]->value;
    const auto& bv = self.parents[1]->value;
    if (double* g = grad_of(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * bv[i];
    }
    if (double* g = grad_of(self, 1)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * av[i];
    }
  });
}

Tensor scale(const Tensor& a, double factor) {
  require_finite(a, "scale");
  if (!std::isfinite(factor)) throw NumericError("scale: non-finite factor");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * factor;
  return make_result(a.shape(), std::move(out), {a}, [factor](Node& self) {
    if (double* g = grad_of(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * factor;
    }
  });
}

Tensor relu(const Tensor& a) {
  require_finite(a, "relu");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] > 0.0 ? a.data()[i] : 0.0;
  return make_result(a.shape(), std::move(out), {a}, [](Node& self) {
    const auto& av = self.parents[0]->value;
    if (double* g = grad_of(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) {
        if (av[i] > 0.0) g[i] += self.grad[i];
      }
    }
  });
}

Tensor log(const Tensor& a) {
  require_finite(a, "log");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double v = a.data()[i];
    if (v <= 0.0) throw NumericError("log: non-positive operand");
    out[i] = std::log(v);
  }
  return make_result(a.shape(), std::move(out), {a}, [](Node& self) {
    const auto& av = self.parents[0]->value;
    if (double* g = grad_of(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] / av[i];
    }
  });
}

Tensor concat_rows(std::span<const Tensor> parts) {
  if (parts.empty()) throw DimensionError("concat_rows: no operands");
  const std::size_t n = parts[0].cols();
  std::size_t m = 0;
  for (const Tensor& p : parts) {
    if (p.cols() != n) throw DimensionError("concat_rows: column mismatch");
    require_finite(p, "concat_rows");
    m += p.rows();
  }
  std::vector<double> out;
  out.reserve(m * n);
  std::vector<std::size_t> offsets;
  for (const Tensor& p : parts) {
    offsets.push_back(out.size());
    out.insert(out.end(), p.data().begin(), p.data().end());
  }
  return make_result_n({m, n}, std::move(out), parts, [offsets](Node& self) {
    for (std::size_t p = 0; p < self.parents.size(); ++p) {
      if (double* g = grad_of(self, p)) {
        const std::size_t len = self.parents[p]->value.size();
        for (std::size_t i = 0; i < len; ++i) g[i] += self.grad[offsets[p] + i];
      }
    }
  });
}

Tensor concat_cols(std::span<const Tensor> parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no operands");
  const std::size_t m = parts[0].rows();
  std::size_t n = 0;
  std::vector<std::size_t> col_offsets, widths;
  for (const Tensor& p : parts) {
    if (p.rows() != m) throw DimensionError("concat_cols: row mismatch");
    require_finite(p, "concat_cols");
    col_offsets.push_back(n);
    widths.push_back(p.cols());
    n += p.cols();
  }
  std::vector<double> out(m * n);
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const double* src = parts[p].data().data();
    for (std::size_t i = 0; i < m; ++i) {
      std::copy_n(src + i * widths[p], widths[p], out.data() + i * n + col_offsets[p]);
    }
  }
  return make_result_n({m, n}, std::move(out), parts, [m, n, col_offsets, widths](Node& self) {
    for (std::size_t p = 0; p < self.parents.size(); ++p) {
      if (double* g = grad_of(self, p)) {
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t j = 0; j < widths[p]; ++j) {
            g[i * widths[p] + j] += self.grad[i * n + col_offsets[p] + j];
          }
        }
      }
    }
  });
}

Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t end) {
  const std::size_t m = a.rows(), n = a.cols();
  if (begin >= end || end > m) {
    throw DimensionError("slice_rows: [" + std::to_string(begin) + "," + std::to_string(end) +
                         ") of " + std::to_string(m) + " rows");
  }
  require_finite(a, "slice_rows");
  std::vector<double> out(a.data().begin() + begin * n, a.data().begin() + end * n);
  return make_result({end - begin, n}, std::move(out), {a}, [begin, n](Node& self) {
    if (double* g = grad_of(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[begin * n + i] += self.grad[i];
    }
  });
}

Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t end) {
  const std::size_t m = a.rows(), n = a.cols();
  if (begin >= end || end > n) {
    throw DimensionError("slice_cols: [" + std::to_string(begin) + "," + std::to_string(end) +
                         ") of " + std::to_string(n) + " columns");
  }
  require_finite(a, "slice_cols");
  const std::size_t w = end - begin;
  std::vector<double> out(m * w);
  for (std::size_t i = 0; i < m; ++i) {
    std::copy_n(a.data().data() + i * n + begin, w, out.data() + i * w);
  }
  return make_result({m, w}, std::move(out), {a}, [m, n, w, begin](Node& self) {
    if (double* g = grad_of(self, 0)) {
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < w; ++j) g[i * n + begin + j] += self.grad[i * w + j];
      }
    }
  });
}

Tensor embedding(const Tensor& table, std::span<const int> ids) {
  require_matrix(table, "embedding");
  if (ids.empty()) throw DimensionError("embedding: no ids");
  const std::size_t v = table.rows(), d = table.cols();
  require_finite(table, "embedding");
  std::vector<double> out(ids.size() * d);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= v) {
      throw IndexError("embedding: id " + std::to_string(ids[i]) + " outside vocabulary of " +
                       std::to_string(v));
    }
    std::copy_n(table.data().data() + ids[i] * d, d, out.data() + i * d);
  }
  std::vector<int> idx(ids.begin(), ids.end());
  return make_result({ids.size(), d}, std::move(out), {table}, [idx = std::move(idx), d](Node& self) {
    if (double* g = grad_of(self, 0)) {
      for (std::size_t i = 0; i < idx.size(); ++i) {
        double* row = g + idx[i] * d;
        for (std::size_t j = 0; j < d; ++j) row[j] += self.grad[i * d + j];
      }
    }
  });
}

Tensor softmax_rows(const Tensor& a) {
  const std::size_t m = a.rows(), n = a.cols();
  require_finite(a, "softmax_rows");
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i) {
    const double* x = a.data().data() + i * n;
    double* y = out.data() + i * n;
    const double mx = *std::max_element(x, x + n);
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) z += (y[j] = std::exp(x[j] - mx));
    for (std::size_t j = 0; j < n; ++j) y[j] /= z;
  }
  return make_result(a.shape(), std::move(out), {a}, [m, n](Node& self) {
    if (double* g = grad_of(self, 0)) {
      for (std::size_t i = 0; i < m; ++i) {
        const double* y = self.value.data() + i * n;
        const double* gy = self.grad.data() + i * n;
        double dot = 0.0;
        for (std::size_t j = 0; j < n; ++j) dot += gy[j] * y[j];
        for (std::size_t j = 0; j < n; ++j) g[i * n + j] += y[j] * (gy[j] - dot);
      }
    }
  });
}

Tensor masked_fill(const Tensor& a, std::span<const std::uint8_t> mask, double value) {
  if (mask.size() != a.size()) throw DimensionError("masked_fill: mask size mismatch");
  require_finite(a, "masked_fill");
  if (!std::isfinite(value)) throw NumericError("masked_fill: non-finite fill value");
  std::vector<double> out(a.data().begin(), a.data().end());
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (mask[i]) out[i] = value;
  }
  std::vector<std::uint8_t> m(mask.begin(), mask.end());
  return make_result(a.shape(), std::move(out), {a}, [m = std::move(m)](Node& self) {
    if (double* g = grad_of(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) {
        if (!m[i]) g[i] += self.grad[i];
      }
    }
  });
}

Tensor layer_norm(const Tensor& a, const Tensor& gain, const Tensor& bias, double eps) {
  const std::size_t m = a.rows(), n = a.cols();
  if (gain.size() != n || bias.size() != n) throw DimensionError("layer_norm: parameter width");
  require_finite(a, "layer_norm");
  require_finite(gain, "layer_norm");
  require_finite(bias, "layer_norm");
  std::vector<double> out(m * n), xhat(m * n), inv_std(m);
  const double* G = gain.data().data();
  const double* B = bias.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    const double* x = a.data().data() + i * n;
    double mu = 0.0;
    for (std::size_t j = 0; j < n; ++j) mu += x[j];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) var += (x[j] - mu) * (x[j] - mu);
    var /= static_cast<double>(n);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < n; ++j) {
      xhat[i * n + j] = (x[j] - mu) * inv_std[i];
      out[i * n + j] = xhat[i * n + j] * G[j] + B[j];
    }
  }
  return make_result(a.shape(), std::move(out), {a, gain, bias},
                     [m, n, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& self) {
    const double* gy = self.grad.data();
    const double* G = self.parents[1]->value.data();
    if (double* gg = grad_of(self, 1)) {
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) gg[j] += gy[i * n + j] * xhat[i * n + j];
    }
    if (double* gb = grad_of(self, 2)) {
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) gb[j] += gy[i * n + j];
    }
    if (double* gx = grad_of(self, 0)) {
      const double inv_n = 1.0 / static_cast<double>(n);
      for (std::size_t i = 0; i < m; ++i) {
        double s1 = 0.0, s2 = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
          const double gh = gy[i * n + j] * G[j];
          s1 += gh;
          s2 += gh * xhat[i * n + j];
        }
        for (std::size_t j = 0; j < n; ++j) {
          const double gh = gy[i * n + j] * G[j];
          gx[i * n + j] += inv_std[i] * (gh - inv_n * s1 - xhat[i * n + j] * inv_n * s2);
        }
      }
    }
  });
}

Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, const AttentionMask& mask) {
  require_matrix(q, "attention");
  require_matrix(k, "attention");
  require_matrix(v, "attention");
  const std::size_t n = q.rows(), m = k.rows(), dk = q.cols(), dv = v.cols();
  if (k.cols() != dk || v.rows() != m) {
    throw DimensionError("attention: q" + shape_str(q.shape()) + " k" + shape_str(k.shape()) +
                         " v" + shape_str(v.shape()));
  }
  if (!mask.key_valid.empty() && mask.key_valid.size() != m) {
    throw DimensionError("attention: key mask length");
  }
  if (mask.causal && n != m) throw DimensionError("attention: causal mask needs square scores");
  require_finite(q, "attention");
  require_finite(k, "attention");
  require_finite(v, "attention");

  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dk));
  const double* Q = q.data().data();
  const double* K = k.data().data();
  const double* V = v.data().data();
  std::vector<double> probs(n * m, 0.0);
  std::vector<double> out(n * dv, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double* p = probs.data() + i * m;
    double mx = -std::numeric_limits<double>::infinity();
    bool any = false;
    for (std::size_t j = 0; j < m; ++j) {
      const bool ok = (!mask.causal || j <= i) && (mask.key_valid.empty() || mask.key_valid[j]);
      if (!ok) continue;
      double s = 0.0;
      for (std::size_t c = 0; c < dk; ++c) s += Q[i * dk + c] * K[j * dk + c];
      p[j] = s * inv_sqrt;
      mx = any ? std::max(mx, p[j]) : p[j];
      any = true;
    }
    if (!any) continue;
    double z = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      const bool ok = (!mask.causal || j <= i) && (mask.key_valid.empty() || mask.key_valid[j]);
      p[j] = ok ? std::exp(p[j] - mx) : 0.0;
      z += p[j];
    }
    double* o = out.data() + i * dv;
    for (std::size_t j = 0; j < m; ++j) {
      p[j] /= z;
      if (p[j] == 0.0) continue;
      for (std::size_t c = 0; c < dv; ++c) o[c] += p[j] * V[j * dv + c];
    }
  }
  return make_result({n, dv}, std::move(out), {q, k, v},
                     [n, m, dk, dv, inv_sqrt, probs = std::move(probs)](Node& self) {
    const double* G = self.grad.data();
    const double* Q = self.parents[0]->value.data();
    const double* K = self.parents[1]->value.data();
    const double* V = self.parents[2]->value.data();
    double* gQ = grad_of(self, 0);
    double* gK = grad_of(self, 1);
    double* gV = grad_of(self, 2);
    std::vector<double> dp(m);
    for (std::size_t i = 0; i < n; ++i) {
      const double* p = probs.data() + i * m;
      const double* g = G + i * dv;
      if (gV) {
        for (std::size_t j = 0; j < m; ++j) {
          if (p[j] == 0.0) continue;
          for (std::size_t c = 0; c < dv; ++c) gV[j * dv + c] += p[j] * g[c];
        }
      }
      if (!gQ && !gK) continue;
      double dot = 0.0;
      for (std::size_t j = 0; j < m; ++j) {
        double s = 0.0;
        if (p[j] != 0.0) {
          for (std::size_t c = 0; c < dv; ++c) s += g[c] * V[j * dv + c];
        }
        dp[j] = s;
        dot += s * p[j];
      }
      for (std::size_t j = 0; j < m; ++j) {
        if (p[j] == 0.0) continue;
        const double ds = p[j] * (dp[j] - dot) * inv_sqrt;
        if (gQ) {
          for (std::size_t c = 0; c < dk; ++c) gQ[i * dk + c] += ds * K[j * dk + c];
        }
        if (gK) {
          for (std::size_t c = 0; c < dk; ++c) gK[j * dk + c] += ds * Q[i * dk + c];
        }
      }
    }
  });
}

Tensor sum(const Tensor& a) {
  require_finite(a, "sum");
  double s = 0.0;
  for (double x : a.data()) s += x;
  return make_result({1}, {s}, {a}, [](Node& self) {
    if (double* g = grad_of(self, 0)) {
      const std::size_t len = self.parents[0]->value.size();
      for (std::size_t i = 0; i < len; ++i) g[i] += self.grad[0];
    }
  });
}

Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / static_cast<double>(a.size())); }

Tensor add_n(std::span<const Tensor> parts) {
  if (parts.empty()) throw DimensionError("add_n: no operands");
  std::vector<double> out(parts[0].size(), 0.0);
  for (const Tensor& p : parts) {
    if (p.shape() != parts[0].shape()) throw DimensionError("add_n: shape mismatch");
    require_finite(p, "add_n");
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += p.data()[i];
  }
  return make_result_n(parts[0].shape(), std::move(out), parts, [](Node& self) {
    for (std::size_t p = 0; p < self.parents.size(); ++p) {
      if (double* g = grad_of(self, p)) {
        for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
      }
    }
  });
}

Tensor cross_entropy(const Tensor& logits, int target) {
  if (logits.rows() != 1) throw DimensionError("cross_entropy: expected a single row of logits");
  const int t[1] = {target};
  return cross_entropy_rows(logits, t);
}

Tensor cross_entropy_rows(const Tensor& logits, std::span<const int> targets) {
  const std::size_t m = logits.rows(), v = logits.cols();
  if (targets.size() != m) throw DimensionError("cross_entropy_rows: target count mismatch");
  for (int t : targets) {
    if (t < 0 || static_cast<std::size_t>(t) >= v) {
      throw IndexError("cross_entropy: target " + std::to_string(t) + " outside [0," +
                       std::to_string(v) + ")");
    }
  }
  require_finite(logits, "cross_entropy");
  std::vector<double> probs(m * v);
  double total = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const double* x = logits.data().data() + i * v;
    double* p = probs.data() + i * v;
    const double mx = *std::max_element(x, x + v);
    double z = 0.0;
    for (std::size_t j = 0; j < v; ++j) z += (p[j] = std::exp(x[j] - mx));
    for (std::size_t j = 0; j < v; ++j) p[j] /= z;
    total += -(x[targets[i]] - mx - std::log(z));
  }
  std::vector<int> tg(targets.begin(), targets.end());
  const double inv_m = 1.0 / static_cast<double>(m);
  return make_result({1}, {total * inv_m}, {logits},
                     [m, v, inv_m, tg = std::move(tg), probs = std::move(probs)](Node& self) {
    if (double* g = grad_of(self, 0)) {
      const double s = self.grad[0] * inv_m;
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < v; ++j) g[i * v + j] += s * probs[i * v + j];
        g[i * v + tg[i]] -= s;
      }
    }
  });
}

}  // namespace gst::numkit
