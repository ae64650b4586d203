#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "gcml/numerics.hpp"

namespace gcml {

inline constexpr double kJaccardSmooth = 1e-5;
inline constexpr double kProbFloor = 1e-12;
inline constexpr double kRegionEps = 1e-8;
inline constexpr double kDefaultKlClamp = 10.0;
inline constexpr double kNoClamp = std::numeric_limits<double>::infinity();

/// Per-voxel class labels on an H x W grid. Class 0 is background.
class GroundTruth {
 public:
  GroundTruth() = default;
  GroundTruth(std::size_t rows, std::size_t cols, int num_classes,
              std::vector<std::uint8_t> labels);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t voxels() const { return labels_.size(); }
  int num_classes() const { return num_classes_; }
  std::uint8_t label(std::size_t voxel) const { return labels_[voxel]; }
  double foreground(std::size_t voxel) const {
    return labels_[voxel] != 0 ? 1.0 : 0.0;
  }
  std::span<const std::uint8_t> labels() const { return labels_; }

  friend bool operator==(const GroundTruth&, const GroundTruth&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  int num_classes_ = 2;
  std::vector<std::uint8_t> labels_;
};

/// Per-voxel class distributions stored as an H x W x C grid.
class ProbMap {
 public:
  ProbMap() = default;
  /// Validates that every voxel vector lies on the simplex (tolerance 1e-9).
  explicit ProbMap(DenseGrid grid);
  /// Skips validation; used on softmax output which is normalized by
  /// construction.
  static ProbMap trusted(DenseGrid grid);

  std::size_t rows() const { return grid_.rows(); }
  std::size_t cols() const { return grid_.cols(); }
  std::size_t voxels() const { return grid_.rows() * grid_.cols(); }
  int num_classes() const { return static_cast<int>(grid_.channels()); }

  std::span<const double> at(std::size_t voxel) const {
    const auto c = grid_.channels();
    return grid_.values().subspan(voxel * c, c);
  }
  /// 1 - P(background) for C > 2, P(class 1) for C = 2.
  double foreground_prob(std::size_t voxel) const;
  std::size_t argmax(std::size_t voxel) const;

  const DenseGrid& grid() const { return grid_; }

 private:
  DenseGrid grid_;
};

/// Per-voxel +1/-1 weights.
class ContrastMap {
 public:
  ContrastMap() = default;
  ContrastMap(std::size_t rows, std::size_t cols, std::vector<std::int8_t> signs);
  static ContrastMap uniform(std::size_t rows, std::size_t cols, int sign);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t voxels() const { return signs_.size(); }
  double sign(std::size_t voxel) const { return signs_[voxel]; }
  std::span<const std::int8_t> signs() const { return signs_; }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<std::int8_t> signs_;
};

/// Value plus derivative with respect to every entry of the evaluated
/// ProbMap (same H x W x C layout).
struct LossGrad {
  double value = 0.0;
  std::vector<double> d_probs;
};

// Soft Jaccard distance between foreground probability and binary mask,
// averaged one-vs-rest over the C-1 foreground classes when C > 2.
double jaccard_distance(const ProbMap& probs, const GroundTruth& gt);
LossGrad jaccard_distance_grad(const ProbMap& probs, const GroundTruth& gt);

/// Per-voxel KL(P_R || P_S) summed over classes.
std::vector<double> voxel_kl(const ProbMap& p_r, const ProbMap& p_s);
/// Voxel-summed KL divergence.
double kl_divergence(const ProbMap& p_r, const ProbMap& p_s);

/// +1 where argmax of p_s equals the label, else -1. Ties go to the lowest
/// class index.
ContrastMap contrast_map(const ProbMap& p_s, const GroundTruth& gt);

/// Sum over voxels of min(KL_v, kappa) * c_v.
double contrastive_kl(const ProbMap& p_r, const ProbMap& p_s,
                      const ContrastMap& c, double kappa = kDefaultKlClamp);

/// Contrastive KL restricted to ground-truth and predicted foreground,
/// normalized by their combined mass.
double regional_contrastive_kl(const ProbMap& p_r, const ProbMap& p_s,
                               const GroundTruth& gt, const ContrastMap& c,
                               double kappa = kDefaultKlClamp);

enum class Role { kReceiver, kSender };

/// Knobs on the mutual-learning term. Defaults give the full regional
/// contrastive objective.
struct DcmlVariant {
  double kappa = kDefaultKlClamp;
  bool contrast = true;  // false: c = +1 everywhere
  bool regional = true;  // false: whole-image voxel mean of the term
  bool detach_region_weights = false;
};

/// The divergence term alone, with gradient wrt `own`.
LossGrad mutual_term_grad(const ProbMap& own, const ProbMap& peer,
                          const GroundTruth& gt, const DcmlVariant& variant);

/// (1 - lambda) * JD(own) + lambda * rD_CKL(own || peer), contrast taken from
/// the frozen peer. The construction is identical for both roles: the
/// receiver passes (P_R, P_S), the sender passes (P_S, P_R).
double dcml_objective(const ProbMap& own, const ProbMap& peer,
                      const GroundTruth& gt, double lambda, Role role,
                      const DcmlVariant& variant = {});
LossGrad dcml_objective_grad(const ProbMap& own, const ProbMap& peer,
                             const GroundTruth& gt, double lambda, Role role,
                             const DcmlVariant& variant = {});

}  // namespace gcml
