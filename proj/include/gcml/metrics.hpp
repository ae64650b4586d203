#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "gcml/losses.hpp"

namespace gcml {

/// 0/1 mask with physical pixel spacing (dx along columns, dy along rows).
class BinaryMask {
 public:
  BinaryMask() = default;
  BinaryMask(std::size_t rows, std::size_t cols, std::vector<std::uint8_t> bits,
             double dx = 1.0, double dy = 1.0);

  static BinaryMask from_labels(const GroundTruth& gt, int cls);
  /// Voxels whose argmax class equals `cls`.
  static BinaryMask from_prediction(const ProbMap& probs, int cls);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  double dx() const { return dx_; }
  double dy() const { return dy_; }
  bool at(std::size_t i, std::size_t j) const { return bits_[i * cols_ + j] != 0; }
  std::size_t count() const;
  bool empty() const { return count() == 0; }
  std::span<const std::uint8_t> bits() const { return bits_; }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<std::uint8_t> bits_;
  double dx_ = 1.0;
  double dy_ = 1.0;
};

/// Foreground pixels with at least one 4-neighbour in the background;
/// outside the grid counts as background.
std::vector<std::pair<std::size_t, std::size_t>> boundary_pixels(const BinaryMask& m);

double dsc(const BinaryMask& pred, const BinaryMask& gt);

/// Distances from each boundary pixel of `from` to the nearest boundary
/// pixel of `to`, in boundary-scan order.
std::vector<double> directed_surface_distances(const BinaryMask& from,
                                               const BinaryMask& to);

/// nullopt when either mask is empty.
std::optional<double> hd95(const BinaryMask& pred, const BinaryMask& gt);
std::optional<double> assd(const BinaryMask& pred, const BinaryMask& gt);

/// sum(v_i n_i) / sum(n_i).
double weighted_overall(std::span<const std::pair<double, double>> per_site);

struct CaseMetrics {
  double dsc = 0.0;
  std::optional<double> hd95;
  std::optional<double> assd;
};

/// Per-foreground-class metrics of the argmax prediction, averaged over the
/// classes where each is defined.
CaseMetrics evaluate_case(const ProbMap& probs, const GroundTruth& gt);

}  // namespace gcml
