#include "gcml/losses.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace gcml {

namespace {

void require_same_grid(std::size_t r1, std::size_t c1, std::size_t r2,
                       std::size_t c2, const char* what) {
  if (r1 != r2 || c1 != c2) {
    throw Error(std::string(what) + ": shape mismatch (" + std::to_string(r1) +
                "x" + std::to_string(c1) + " vs " + std::to_string(r2) + "x" +
                std::to_string(c2) + ")");
  }
}

void require_same(const ProbMap& a, const ProbMap& b, const char* what) {
  require_same_grid(a.rows(), a.cols(), b.rows(), b.cols(), what);
  if (a.num_classes() != b.num_classes()) {
    throw Error(std::string(what) + ": class count mismatch");
  }
}

void require_same(const ProbMap& a, const GroundTruth& g, const char* what) {
  require_same_grid(a.rows(), a.cols(), g.rows(), g.cols(), what);
}

// KL_v and, optionally, dKL_v/dp_r for one voxel. Floored at zero so that
// rounding never reports a negative divergence.
double voxel_kl_at(std::span<const double> p, std::span<const double> s,
                   double* d_p) {
  double kl = 0.0;
  for (std::size_t y = 0; y < p.size(); ++y) {
    if (p[y] > 0.0) {
      const double log_ratio =
          std::log(p[y]) - std::log(std::max(s[y], kProbFloor));
      kl += p[y] * log_ratio;
      if (d_p != nullptr) d_p[y] = log_ratio + 1.0;
    } else if (d_p != nullptr) {
      d_p[y] = 0.0;
    }
  }
  if (kl < 0.0) {
    if (d_p != nullptr) std::fill(d_p, d_p + p.size(), 0.0);
    return 0.0;
  }
  return kl;
}

double foreground_weight_grad(const ProbMap& probs, std::size_t y) {
  // d foreground_prob / d p_y.
  if (probs.num_classes() == 2) return y == 1 ? 1.0 : 0.0;
  return y == 0 ? -1.0 : 0.0;
}

}  // namespace

GroundTruth::GroundTruth(std::size_t rows, std::size_t cols, int num_classes,
                         std::vector<std::uint8_t> labels)
    : rows_(rows), cols_(cols), num_classes_(num_classes),
      labels_(std::move(labels)) {
  if (num_classes_ < 2) throw Error("GroundTruth: need at least two classes");
  if (labels_.size() != rows_ * cols_) {
    throw Error("GroundTruth: label count does not match grid");
  }
  for (auto l : labels_) {
    if (l >= num_classes_) {
      throw Error("GroundTruth: label " + std::to_string(l) +
                  " outside [0, " + std::to_string(num_classes_) + ")");
    }
  }
}

ProbMap::ProbMap(DenseGrid grid) : grid_(std::move(grid)) {
  if (grid_.rank() != 3 || grid_.channels() < 2) {
    throw Error("ProbMap: expected H x W x C grid with C >= 2");
  }
  for (std::size_t v = 0; v < voxels(); ++v) {
    double total = 0.0;
    for (double p : at(v)) {
      if (p < 0.0 || p > 1.0) throw Error("ProbMap: entry outside [0, 1]");
      total += p;
    }
    if (std::abs(total - 1.0) > 1e-9) {
      throw Error("ProbMap: voxel " + std::to_string(v) +
                  " does not sum to 1");
    }
  }
}

ProbMap ProbMap::trusted(DenseGrid grid) {
  ProbMap m;
  m.grid_ = std::move(grid);
  return m;
}

double ProbMap::foreground_prob(std::size_t voxel) const {
  const auto p = at(voxel);
  return num_classes() == 2 ? p[1] : 1.0 - p[0];
}

std::size_t ProbMap::argmax(std::size_t voxel) const {
  const auto p = at(voxel);
  std::size_t best = 0;
  for (std::size_t k = 1; k < p.size(); ++k) {
    if (p[k] > p[best]) best = k;
  }
  return best;
}

ContrastMap::ContrastMap(std::size_t rows, std::size_t cols,
                         std::vector<std::int8_t> signs)
    : rows_(rows), cols_(cols), signs_(std::move(signs)) {
  if (signs_.size() != rows_ * cols_) {
    throw Error("ContrastMap: sign count does not match grid");
  }
  for (auto s : signs_) {
    if (s != 1 && s != -1) throw Error("ContrastMap: values must be +1/-1");
  }
}

ContrastMap ContrastMap::uniform(std::size_t rows, std::size_t cols, int sign) {
  return ContrastMap(rows, cols,
                     std::vector<std::int8_t>(rows * cols,
                                              static_cast<std::int8_t>(sign)));
}

LossGrad jaccard_distance_grad(const ProbMap& probs, const GroundTruth& gt) {
  require_same(probs, gt, "jaccard_distance");
  const auto classes = static_cast<std::size_t>(probs.num_classes());
  const auto n = probs.voxels();
  LossGrad out;
  out.d_probs.assign(n * classes, 0.0);
  const double scale = 1.0 / static_cast<double>(classes - 1);

  for (std::size_t k = 1; k < classes; ++k) {
    double inter = 0.0, sum_g = 0.0, sum_q = 0.0;
    for (std::size_t v = 0; v < n; ++v) {
      const double g = gt.label(v) == k ? 1.0 : 0.0;
      const double q = probs.at(v)[k];
      inter += g * q;
      sum_g += g;
      sum_q += q;
    }
    const double num = inter + kJaccardSmooth;
    const double den = sum_g + sum_q - inter + kJaccardSmooth;
    out.value += scale * (1.0 - num / den);
    const double den2 = den * den;
    for (std::size_t v = 0; v < n; ++v) {
      const double g = gt.label(v) == k ? 1.0 : 0.0;
      out.d_probs[v * classes + k] = -scale * (g * den - num * (1.0 - g)) / den2;
    }
  }
  return out;
}

double jaccard_distance(const ProbMap& probs, const GroundTruth& gt) {
  require_same(probs, gt, "jaccard_distance");
  const auto classes = static_cast<std::size_t>(probs.num_classes());
  double total = 0.0;
  for (std::size_t k = 1; k < classes; ++k) {
    double inter = 0.0, sum_g = 0.0, sum_q = 0.0;
    for (std::size_t v = 0; v < probs.voxels(); ++v) {
      const double g = gt.label(v) == k ? 1.0 : 0.0;
      const double q = probs.at(v)[k];
      inter += g * q;
      sum_g += g;
      sum_q += q;
    }
    total += 1.0 - (inter + kJaccardSmooth) /
                       (sum_g + sum_q - inter + kJaccardSmooth);
  }
  return total / static_cast<double>(classes - 1);
}

std::vector<double> voxel_kl(const ProbMap& p_r, const ProbMap& p_s) {
  require_same(p_r, p_s, "kl_divergence");
  std::vector<double> out(p_r.voxels());
  for (std::size_t v = 0; v < out.size(); ++v) {
    out[v] = voxel_kl_at(p_r.at(v), p_s.at(v), nullptr);
  }
  return out;
}

double kl_divergence(const ProbMap& p_r, const ProbMap& p_s) {
  double total = 0.0;
  for (double kl : voxel_kl(p_r, p_s)) total += kl;
  return total;
}

ContrastMap contrast_map(const ProbMap& p_s, const GroundTruth& gt) {
  require_same(p_s, gt, "contrast_map");
  std::vector<std::int8_t> signs(p_s.voxels());
  for (std::size_t v = 0; v < signs.size(); ++v) {
    signs[v] = p_s.argmax(v) == gt.label(v) ? 1 : -1;
  }
  return ContrastMap(p_s.rows(), p_s.cols(), std::move(signs));
}

double contrastive_kl(const ProbMap& p_r, const ProbMap& p_s,
                      const ContrastMap& c, double kappa) {
  require_same(p_r, p_s, "contrastive_kl");
  require_same_grid(p_r.rows(), p_r.cols(), c.rows(), c.cols(),
                    "contrastive_kl");
  double total = 0.0;
  for (std::size_t v = 0; v < p_r.voxels(); ++v) {
    total += std::min(voxel_kl_at(p_r.at(v), p_s.at(v), nullptr), kappa) *
             c.sign(v);
  }
  return total;
}

double regional_contrastive_kl(const ProbMap& p_r, const ProbMap& p_s,
                               const GroundTruth& gt, const ContrastMap& c,
                               double kappa) {
  require_same(p_r, p_s, "regional_contrastive_kl");
  require_same(p_r, gt, "regional_contrastive_kl");
  require_same_grid(p_r.rows(), p_r.cols(), c.rows(), c.cols(),
                    "regional_contrastive_kl");
  double by_truth = 0.0, by_prediction = 0.0, mass = 0.0;
  for (std::size_t v = 0; v < p_r.voxels(); ++v) {
    const double klc =
        std::min(voxel_kl_at(p_r.at(v), p_s.at(v), nullptr), kappa) *
        c.sign(v);
    const double g = gt.foreground(v);
    const double q = p_r.foreground_prob(v);
    by_truth += klc * g;
    by_prediction += klc * q;
    mass += g + q;
  }
  return (by_truth + by_prediction) / (mass + kRegionEps);
}

LossGrad mutual_term_grad(const ProbMap& own, const ProbMap& peer,
                          const GroundTruth& gt, const DcmlVariant& variant) {
  require_same(own, peer, "dcml_objective");
  require_same(own, gt, "dcml_objective");
  const auto classes = static_cast<std::size_t>(own.num_classes());
  const auto n = own.voxels();
  const ContrastMap c = variant.contrast ? contrast_map(peer, gt)
                                         : ContrastMap::uniform(own.rows(), own.cols(), 1);

  // d(min(KL_v, kappa) * c_v) / dp_own, per voxel, plus the signed values.
  std::vector<double> klc(n);
  std::vector<double> d_klc(n * classes);
  for (std::size_t v = 0; v < n; ++v) {
    double* d = d_klc.data() + v * classes;
    const double kl = voxel_kl_at(own.at(v), peer.at(v), d);
    if (kl > variant.kappa) {
      std::fill(d, d + classes, 0.0);
      klc[v] = variant.kappa * c.sign(v);
    } else {
      klc[v] = kl * c.sign(v);
      for (std::size_t y = 0; y < classes; ++y) d[y] *= c.sign(v);
    }
  }

  LossGrad out;
  out.d_probs.assign(n * classes, 0.0);

  if (!variant.regional) {
    const double inv_n = 1.0 / static_cast<double>(n);
    for (std::size_t v = 0; v < n; ++v) out.value += klc[v];
    out.value *= inv_n;
    for (std::size_t i = 0; i < d_klc.size(); ++i) out.d_probs[i] = d_klc[i] * inv_n;
    return out;
  }

  double numer = 0.0, denom = kRegionEps;
  for (std::size_t v = 0; v < n; ++v) {
    const double w = gt.foreground(v) + own.foreground_prob(v);
    numer += klc[v] * w;
    denom += w;
  }
  out.value = numer / denom;

  for (std::size_t v = 0; v < n; ++v) {
    const double w = gt.foreground(v) + own.foreground_prob(v);
    for (std::size_t y = 0; y < classes; ++y) {
      double d_numer = d_klc[v * classes + y] * w;
      double d_denom = 0.0;
      if (!variant.detach_region_weights) {
        const double dw = foreground_weight_grad(own, y);
        d_numer += klc[v] * dw;
        d_denom = dw;
      }
      out.d_probs[v * classes + y] = (d_numer - out.value * d_denom) / denom;
    }
  }
  return out;
}

namespace {

void require_lambda(double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) {
    throw Error("dcml_objective: lambda " + std::to_string(lambda) +
                " outside [0, 1]");
  }
}

}  // namespace

LossGrad dcml_objective_grad(const ProbMap& own, const ProbMap& peer,
                             const GroundTruth& gt, double lambda, Role,
                             const DcmlVariant& variant) {
  require_lambda(lambda);
  LossGrad jd = jaccard_distance_grad(own, gt);
  LossGrad out;
  out.value = (1.0 - lambda) * jd.value;
  out.d_probs = std::move(jd.d_probs);
  for (double& d : out.d_probs) d *= (1.0 - lambda);
  if (lambda > 0.0) {
    const LossGrad term = mutual_term_grad(own, peer, gt, variant);
    out.value += lambda * term.value;
    for (std::size_t i = 0; i < out.d_probs.size(); ++i) {
      out.d_probs[i] += lambda * term.d_probs[i];
    }
  }
  return out;
}

double dcml_objective(const ProbMap& own, const ProbMap& peer,
                      const GroundTruth& gt, double lambda, Role role,
                      const DcmlVariant& variant) {
  return dcml_objective_grad(own, peer, gt, lambda, role, variant).value;
}

}  // namespace gcml
