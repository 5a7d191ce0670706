#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "gst/numkit/tensor.hpp"

namespace gst::numkit {

// All operations validate operand shapes (DimensionError) and reject
// non-finite operands (NumericError). Matrices are rank-2; rank-1 tensors
// act as a single row where noted.

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
// a: [m x n], row: [n] or [1 x n], broadcast over rows.
Tensor add_row(const Tensor& a, const Tensor& row);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor relu(const Tensor& a);
Tensor log(const Tensor& a);

Tensor concat_rows(std::span<const Tensor> parts);
Tensor concat_cols(std::span<const Tensor> parts);
Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t end);
Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t end);

// Gathers rows of `table` ([V x d]) -> [ids.size() x d].
Tensor embedding(const Tensor& table, std::span<const int> ids);

Tensor softmax_rows(const Tensor& a);
// Replaces entries whose mask byte is nonzero with `value`.
Tensor masked_fill(const Tensor& a, std::span<const std::uint8_t> mask, double value);
Tensor layer_norm(const Tensor& a, const Tensor& gain, const Tensor& bias, double eps = 1e-5);

struct AttentionMask {
  bool causal = false;
  // Optional, one byte per key row; zero means the key is never attended.
  std::vector<std::uint8_t> key_valid;
};

// softmax(Q K^T / sqrt(dk) + mask) V for Q: [n x dk], K: [m x dk], V: [m x dv].
// A query row with no admissible key yields a zero output row.
Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, const AttentionMask& mask = {});

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
// Elementwise sum of equally shaped tensors in a single node.
Tensor add_n(std::span<const Tensor> parts);

// -log softmax(logits)[target] for a single row of logits.
Tensor cross_entropy(const Tensor& logits, int target);
// Mean over rows of -log softmax(logits[r])[targets[r]].
Tensor cross_entropy_rows(const Tensor& logits, std::span<const int> targets);

}  // namespace gst::numkit
