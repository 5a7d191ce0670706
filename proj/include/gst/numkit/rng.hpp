#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>

namespace gst::numkit {

/// Counter-based generator (Philox-4x32-10). The triple (seed, stream_id,
/// counter) fully determines the next draw, so streams can be forked and
/// replayed without shared state. Every draw helper below consumes a fixed
/// number of 64-bit words and avoids std:: distributions, which are not
/// portable across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream_id = 0, std::uint64_t counter = 0);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream_id() const { return stream_; }
  std::uint64_t counter() const { return counter_; }

  /// Child stream keyed on (this seed, this stream, id); independent of how
  /// many values this generator has already produced.
  Rng fork(std::uint64_t stream_id) const;

  std::uint64_t next_u64();
  /// Uniform on [0, 1) with 53 bits of resolution.
  double uniform();
  /// Standard normal via Box-Muller (two words per draw).
  double normal();
  /// Uniform integer on [0, n); n must be positive.
  std::uint64_t uniform_int(std::uint64_t n);
  bool bernoulli(double p);
  /// Index drawn proportionally to non-negative weights.
  std::size_t categorical(std::span<const double> weights);

  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(uniform_int(i));
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t counter_;
};

/// SplitMix64 finalizer; also used for deriving stream keys.
std::uint64_t mix64(std::uint64_t x);

}  // namespace gst::numkit
