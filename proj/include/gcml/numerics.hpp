#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace gcml {

/// Base error for everything thrown by the simulator.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when a computation produces or receives NaN/Inf.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Dense row-major grid of doubles. Rank 2 holds an H x W image; rank 3
/// holds H x W x C (trailing class axis).
class DenseGrid {
 public:
  DenseGrid() = default;
  explicit DenseGrid(std::vector<std::size_t> shape, double fill = 0.0);
  DenseGrid(std::vector<std::size_t> shape, std::vector<double> values);

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return values_.size(); }
  std::size_t rows() const { return shape_.empty() ? 0 : shape_[0]; }
  std::size_t cols() const { return shape_.size() < 2 ? 0 : shape_[1]; }
  std::size_t channels() const { return shape_.size() < 3 ? 1 : shape_[2]; }

  double& operator()(std::size_t i, std::size_t j) {
    return values_[i * shape_[1] + j];
  }
  double operator()(std::size_t i, std::size_t j) const {
    return values_[i * shape_[1] + j];
  }
  double& operator()(std::size_t i, std::size_t j, std::size_t k) {
    return values_[(i * shape_[1] + j) * shape_[2] + k];
  }
  double operator()(std::size_t i, std::size_t j, std::size_t k) const {
    return values_[(i * shape_[1] + j) * shape_[2] + k];
  }

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }

  bool all_finite() const;

  friend bool operator==(const DenseGrid&, const DenseGrid&) = default;

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> values_;
};

/// Writes softmax(logits) into `out` using max-subtraction.
/// Throws NumericError("non-finite logits") on NaN/Inf input.
void softmax_into(std::span<const double> logits, std::span<double> out);

std::vector<double> softmax(std::span<const double> logits);

/// Counter-based generator: every output is a pure function of
/// (seed, stream_id, counter). Streams never share state, so per-site
/// streams can be advanced in any interleaving.
class RngStream {
 public:
  RngStream() = default;
  RngStream(std::uint64_t seed, std::uint64_t stream_id,
            std::uint64_t counter = 0)
      : seed_(seed), stream_id_(stream_id), counter_(counter) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream_id() const { return stream_id_; }
  std::uint64_t counter() const { return counter_; }

  /// Raw 64-bit output at the current counter; advances by one.
  std::uint64_t next_u64();
  /// Uniform in [0, 1) with 53 random bits.
  double next_uniform();
  /// Uniform integer in [0, bound). bound must be > 0.
  std::uint64_t next_below(std::uint64_t bound);
  /// Uniform integer in [lo, hi] inclusive.
  std::int64_t next_int(std::int64_t lo, std::int64_t hi);
  /// Standard normal via Box-Muller (consumes two counters).
  double next_normal();
  double next_uniform(double lo, double hi) {
    return lo + (hi - lo) * next_uniform();
  }

  /// Child stream whose id mixes this stream's id with `tag`.
  RngStream derive(std::uint64_t tag) const;

  /// Value at an arbitrary counter without advancing.
  std::uint64_t peek(std::uint64_t counter) const;

  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(next_below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

  friend bool operator==(const RngStream&, const RngStream&) = default;

 private:
  std::uint64_t seed_ = 0;
  std::uint64_t stream_id_ = 0;
  std::uint64_t counter_ = 0;
};

std::uint64_t mix64(std::uint64_t x);

// Elementwise helpers on flat vectors.
double dot(std::span<const double> a, std::span<const double> b);
double l2_norm(std::span<const double> a);
double max_abs(std::span<const double> a);
bool all_finite(std::span<const double> a);

}  // namespace gcml
