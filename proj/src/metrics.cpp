#include "gcml/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace gcml {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void require_same(const BinaryMask& a, const BinaryMask& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw Error(std::string(what) + ": mask shapes differ");
  }
}

// Squared 1-D distance transform over the finite entries of `f`
// (lower envelope of parabolas), spacing `s`.
void distance_transform_1d(std::span<const double> f, double s,
                           std::span<double> out) {
  const std::size_t n = f.size();
  const double s2 = s * s;
  std::vector<std::size_t> sites;
  std::vector<double> bounds;
  auto intersect = [&](std::size_t v, std::size_t q) {
    const double dq = static_cast<double>(q), dv = static_cast<double>(v);
    return ((f[q] + s2 * (dq * dq)) - (f[v] + s2 * (dv * dv))) /
           (2.0 * s2 * (dq - dv));
  };
  for (std::size_t q = 0; q < n; ++q) {
    if (!std::isfinite(f[q])) continue;
    while (!sites.empty()) {
      const double x = intersect(sites.back(), q);
      if (!bounds.empty() && x <= bounds.back()) {
        sites.pop_back();
        bounds.pop_back();
      } else {
        bounds.push_back(x);
        break;
      }
    }
    sites.push_back(q);
  }
  if (sites.empty()) {
    std::fill(out.begin(), out.end(), kInf);
    return;
  }
  // bounds[k] separates sites[k] from sites[k + 1].
  std::size_t k = 0;
  for (std::size_t p = 0; p < n; ++p) {
    while (k < bounds.size() && bounds[k] < static_cast<double>(p)) ++k;
    const double d = static_cast<double>(p) - static_cast<double>(sites[k]);
    out[p] = (d * d) * s2 + f[sites[k]];
  }
}

// Squared Euclidean distance from every pixel to the nearest marked pixel.
std::vector<double> squared_distance_map(std::size_t rows, std::size_t cols,
                                         std::span<const std::uint8_t> marked,
                                         double dx, double dy) {
  std::vector<double> grid(rows * cols), tmp(std::max(rows, cols)),
      col_in(rows), col_out(rows);
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) tmp[j] = marked[i * cols + j] ? 0.0 : kInf;
    distance_transform_1d(std::span<const double>(tmp.data(), cols), dx,
                          std::span<double>(grid.data() + i * cols, cols));
  }
  for (std::size_t j = 0; j < cols; ++j) {
    for (std::size_t i = 0; i < rows; ++i) col_in[i] = grid[i * cols + j];
    distance_transform_1d(col_in, dy, col_out);
    for (std::size_t i = 0; i < rows; ++i) grid[i * cols + j] = col_out[i];
  }
  return grid;
}

double nearest_rank_p95(std::vector<double> d) {
  std::sort(d.begin(), d.end());
  const std::size_t rank = (95 * d.size() + 99) / 100;  // ceil(0.95 n)
  return d[rank - 1];
}

}  // namespace

BinaryMask::BinaryMask(std::size_t rows, std::size_t cols,
                       std::vector<std::uint8_t> bits, double dx, double dy)
    : rows_(rows), cols_(cols), bits_(std::move(bits)), dx_(dx), dy_(dy) {
  if (bits_.size() != rows_ * cols_) throw Error("BinaryMask: size mismatch");
  for (auto& b : bits_) {
    if (b > 1) throw Error("BinaryMask: values must be 0 or 1");
  }
  if (!(dx_ > 0.0) || !(dy_ > 0.0)) throw Error("BinaryMask: spacing must be positive");
}

BinaryMask BinaryMask::from_labels(const GroundTruth& gt, int cls) {
  std::vector<std::uint8_t> bits(gt.voxels());
  for (std::size_t v = 0; v < bits.size(); ++v) bits[v] = gt.label(v) == cls ? 1 : 0;
  return BinaryMask(gt.rows(), gt.cols(), std::move(bits));
}

BinaryMask BinaryMask::from_prediction(const ProbMap& probs, int cls) {
  std::vector<std::uint8_t> bits(probs.voxels());
  for (std::size_t v = 0; v < bits.size(); ++v) {
    bits[v] = probs.argmax(v) == static_cast<std::size_t>(cls) ? 1 : 0;
  }
  return BinaryMask(probs.rows(), probs.cols(), std::move(bits));
}

std::size_t BinaryMask::count() const {
  return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), 1));
}

std::vector<std::pair<std::size_t, std::size_t>> boundary_pixels(const BinaryMask& m) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (std::size_t j = 0; j < m.cols(); ++j) {
      if (!m.at(i, j)) continue;
      const bool edge = i == 0 || j == 0 || i + 1 == m.rows() || j + 1 == m.cols();
      if (edge || !m.at(i - 1, j) || !m.at(i + 1, j) || !m.at(i, j - 1) ||
          !m.at(i, j + 1)) {
        out.emplace_back(i, j);
      }
    }
  }
  return out;
}

double dsc(const BinaryMask& pred, const BinaryMask& gt) {
  require_same(pred, gt, "dsc");
  std::size_t inter = 0, a = 0, b = 0;
  for (std::size_t v = 0; v < pred.bits().size(); ++v) {
    a += pred.bits()[v];
    b += gt.bits()[v];
    inter += pred.bits()[v] & gt.bits()[v];
  }
  if (a + b == 0) return 1.0;
  return 2.0 * static_cast<double>(inter) / static_cast<double>(a + b);
}

std::vector<double> directed_surface_distances(const BinaryMask& from,
                                               const BinaryMask& to) {
  require_same(from, to, "surface distance");
  const auto target = boundary_pixels(to);
  std::vector<std::uint8_t> marked(to.rows() * to.cols(), 0);
  for (auto [i, j] : target) marked[i * to.cols() + j] = 1;
  const auto dist2 = squared_distance_map(to.rows(), to.cols(), marked, to.dx(), to.dy());
  std::vector<double> out;
  for (auto [i, j] : boundary_pixels(from)) out.push_back(std::sqrt(dist2[i * to.cols() + j]));
  return out;
}

std::optional<double> hd95(const BinaryMask& pred, const BinaryMask& gt) {
  require_same(pred, gt, "hd95");
  if (pred.empty() || gt.empty()) return std::nullopt;
  return std::max(nearest_rank_p95(directed_surface_distances(pred, gt)),
                  nearest_rank_p95(directed_surface_distances(gt, pred)));
}

std::optional<double> assd(const BinaryMask& pred, const BinaryMask& gt) {
  require_same(pred, gt, "assd");
  if (pred.empty() || gt.empty()) return std::nullopt;
  const auto ab = directed_surface_distances(pred, gt);
  const auto ba = directed_surface_distances(gt, pred);
  double total = 0.0;
  for (double d : ab) total += d;
  for (double d : ba) total += d;
  return total / static_cast<double>(ab.size() + ba.size());
}

double weighted_overall(std::span<const std::pair<double, double>> per_site) {
  if (per_site.empty()) throw Error("weighted_overall: no sites");
  double num = 0.0, den = 0.0;
  for (auto [value, weight] : per_site) {
    if (!(weight > 0.0)) throw Error("weighted_overall: weights must be positive");
    num += value * weight;
    den += weight;
  }
  return num / den;
}

CaseMetrics evaluate_case(const ProbMap& probs, const GroundTruth& gt) {
  if (probs.rows() != gt.rows() || probs.cols() != gt.cols()) {
    throw Error("evaluate_case: shape mismatch");
  }
  CaseMetrics out;
  double hd_sum = 0.0, as_sum = 0.0;
  int hd_n = 0;
  const int classes = probs.num_classes();
  for (int k = 1; k < classes; ++k) {
    const auto pred = BinaryMask::from_prediction(probs, k);
    const auto truth = BinaryMask::from_labels(gt, k);
    out.dsc += dsc(pred, truth);
    if (auto h = hd95(pred, truth)) {
      hd_sum += *h;
      as_sum += *assd(pred, truth);
      ++hd_n;
    }
  }
  out.dsc /= static_cast<double>(classes - 1);
  if (hd_n > 0) {
    out.hd95 = hd_sum / hd_n;
    out.assd = as_sum / hd_n;
  }
  return out;
}

}  // namespace gcml
