#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "gcml/losses.hpp"
#include "gcml/numerics.hpp"

namespace gcml {

/// Per-voxel patch classifier. Features are the (2r+1)^2 edge-replicated
/// intensity window plus a bias input. hidden_width == 0 gives a linear
/// softmax model; otherwise one tanh hidden layer with its own bias.
struct ArchSpec {
  int patch_radius = 1;
  int hidden_width = 0;
  int num_classes = 2;

  std::size_t feature_dim() const;
  std::size_t parameter_count() const;
  void validate() const;

  friend bool operator==(const ArchSpec&, const ArchSpec&) = default;
};

struct ModelParams {
  ArchSpec arch;
  std::vector<double> weights;

  static ModelParams zeros(const ArchSpec& arch);
  /// i.i.d. uniform in [-scale, scale] drawn from `rng`.
  static ModelParams random_init(const ArchSpec& arch, RngStream& rng,
                                 double scale = 0.1);
  /// Throws if the weight count or finiteness invariant is violated.
  void validate() const;

  friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

// Weight layout. Linear model: logits = W [features], W is C x F with the
// bias input last. Hidden model: W1 (h x F) then W2 (C x (h+1)) row-major,
// bias column last in both.

/// Index of the weight feeding a constant 1 into class `cls`'s logit.
std::size_t class_bias_index(const ArchSpec& arch, int cls);

ProbMap forward(const ModelParams& params, const DenseGrid& image);

enum class ObjectiveKind { kJaccard, kDcmlReceiver, kDcmlSender, kFedProxJaccard };

/// One training image. `peer` is the frozen counterpart's output on this
/// image; required for the mutual-learning objectives unless the objective
/// carries a frozen peer model.
struct TrainingExample {
  const DenseGrid* image = nullptr;
  const GroundTruth* labels = nullptr;
  const ProbMap* peer = nullptr;
};

struct ObjectiveSpec {
  ObjectiveKind kind = ObjectiveKind::kJaccard;
  double lambda = 0.5;
  DcmlVariant dcml;
  /// Frozen counterpart; used to produce peer maps when examples carry none.
  const ModelParams* peer_model = nullptr;
  /// FedProx proximal strength and anchor (the round's global model).
  double mu = 0.0;
  const ModelParams* anchor = nullptr;

  static ObjectiveSpec jaccard() { return {}; }
  static ObjectiveSpec fedprox(double mu, const ModelParams& anchor);
  static ObjectiveSpec dcml_receiver(double lambda, const ModelParams& sender,
                                     DcmlVariant variant = {});
  static ObjectiveSpec dcml_sender(double lambda, const ModelParams& receiver,
                                   DcmlVariant variant = {});
};

struct LossAndGrad {
  double loss = 0.0;
  std::vector<double> grad;
};

/// Batch-mean objective and its exact gradient with respect to the weights.
LossAndGrad loss_and_grad(const ModelParams& params,
                          std::span<const TrainingExample> batch,
                          const ObjectiveSpec& objective);

/// Objective value only (same arithmetic as loss_and_grad().loss).
double objective_value(const ModelParams& params,
                       std::span<const TrainingExample> batch,
                       const ObjectiveSpec& objective);

ModelParams sgd_step(const ModelParams& params, std::span<const double> grad,
                     double eta);

}  // namespace gcml
