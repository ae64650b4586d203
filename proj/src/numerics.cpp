#include "gcml/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <numeric>

namespace gcml {

namespace {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

std::size_t product(const std::vector<std::size_t>& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

}  // namespace

DenseGrid::DenseGrid(std::vector<std::size_t> shape, double fill)
    : shape_(std::move(shape)), values_(product(shape_), fill) {
  if (!std::isfinite(fill)) throw NumericError("DenseGrid: non-finite fill");
}

DenseGrid::DenseGrid(std::vector<std::size_t> shape, std::vector<double> values)
    : shape_(std::move(shape)), values_(std::move(values)) {
  if (values_.size() != product(shape_)) {
    throw Error("DenseGrid: value count " + std::to_string(values_.size()) +
                " does not match shape product " +
                std::to_string(product(shape_)));
  }
  if (!all_finite()) throw NumericError("DenseGrid: non-finite values");
}

bool DenseGrid::all_finite() const { return gcml::all_finite(values_); }

void softmax_into(std::span<const double> logits, std::span<double> out) {
  double peak = -std::numeric_limits<double>::infinity();
  for (double z : logits) {
    if (!std::isfinite(z)) throw NumericError("non-finite logits");
    peak = std::max(peak, z);
  }
  double total = 0.0;
  for (std::size_t k = 0; k < logits.size(); ++k) {
    out[k] = std::exp(logits[k] - peak);
    total += out[k];
  }
  const double inv = 1.0 / total;
  for (std::size_t k = 0; k < logits.size(); ++k) out[k] *= inv;
}

std::vector<double> softmax(std::span<const double> logits) {
  if (logits.size() < 2) throw Error("softmax: need at least two classes");
  std::vector<double> out(logits.size());
  softmax_into(logits, out);
  return out;
}

std::uint64_t mix64(std::uint64_t x) {
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::uint64_t RngStream::peek(std::uint64_t counter) const {
  const std::uint64_t key = mix64(seed_ ^ mix64(stream_id_ + kGolden));
  return mix64(mix64(key + counter * kGolden) ^ key);
}

std::uint64_t RngStream::next_u64() { return peek(counter_++); }

double RngStream::next_uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

std::uint64_t RngStream::next_below(std::uint64_t bound) {
  if (bound == 0) throw Error("next_below: bound must be positive");
  // Rejection keeps the draw exactly uniform.
  const std::uint64_t limit = -bound % bound;
  for (;;) {
    const std::uint64_t x = next_u64();
    if (x >= limit) return x % bound;
  }
}

std::int64_t RngStream::next_int(std::int64_t lo, std::int64_t hi) {
  if (hi < lo) throw Error("next_int: empty range");
  const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
  if (span == 0) return static_cast<std::int64_t>(next_u64());
  return lo + static_cast<std::int64_t>(next_below(span));
}

double RngStream::next_normal() {
  const double u1 = 1.0 - next_uniform();  // (0, 1]
  const double u2 = next_uniform();
  return std::sqrt(-2.0 * std::log(u1)) *
         std::cos(2.0 * std::numbers::pi * u2);
}

RngStream RngStream::derive(std::uint64_t tag) const {
  return RngStream(seed_, mix64(stream_id_ * kGolden + mix64(tag)), 0);
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double l2_norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

double max_abs(std::span<const double> a) {
  double m = 0.0;
  for (double v : a) m = std::max(m, std::abs(v));
  return m;
}

bool all_finite(std::span<const double> a) {
  return std::all_of(a.begin(), a.end(),
                     [](double v) { return std::isfinite(v); });
}

}  // namespace gcml
