#include "gcml/segmenter.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace gcml {

std::size_t ArchSpec::feature_dim() const {
  const auto side = static_cast<std::size_t>(2 * patch_radius + 1);
  return side * side + 1;
}

std::size_t ArchSpec::parameter_count() const {
  const auto f = feature_dim();
  const auto c = static_cast<std::size_t>(num_classes);
  if (hidden_width == 0) return c * f;
  const auto h = static_cast<std::size_t>(hidden_width);
  return h * f + c * (h + 1);
}

void ArchSpec::validate() const {
  if (patch_radius < 0) throw Error("ArchSpec: patch_radius must be >= 0");
  if (hidden_width < 0) throw Error("ArchSpec: hidden_width must be >= 0");
  if (num_classes < 2) throw Error("ArchSpec: num_classes must be >= 2");
}

ModelParams ModelParams::zeros(const ArchSpec& arch) {
  arch.validate();
  return {arch, std::vector<double>(arch.parameter_count(), 0.0)};
}

ModelParams ModelParams::random_init(const ArchSpec& arch, RngStream& rng,
                                     double scale) {
  ModelParams p = zeros(arch);
  for (double& w : p.weights) w = rng.next_uniform(-scale, scale);
  return p;
}

void ModelParams::validate() const {
  arch.validate();
  if (weights.size() != arch.parameter_count()) {
    throw Error("ModelParams: " + std::to_string(weights.size()) +
                " weights, architecture needs " +
                std::to_string(arch.parameter_count()));
  }
  if (!all_finite(weights)) throw NumericError("ModelParams: non-finite weight");
}

std::size_t class_bias_index(const ArchSpec& arch, int cls) {
  const auto f = arch.feature_dim();
  const auto k = static_cast<std::size_t>(cls);
  if (arch.hidden_width == 0) return k * f + (f - 1);
  const auto h = static_cast<std::size_t>(arch.hidden_width);
  return h * f + k * (h + 1) + h;
}

namespace {

// Row-major feature extraction with replicate padding.
void patch_features(const DenseGrid& image, int radius, std::size_t i,
                    std::size_t j, std::span<double> out) {
  const auto rows = static_cast<long>(image.rows());
  const auto cols = static_cast<long>(image.cols());
  std::size_t n = 0;
  for (long di = -radius; di <= radius; ++di) {
    const long ii = std::clamp(static_cast<long>(i) + di, 0L, rows - 1);
    for (long dj = -radius; dj <= radius; ++dj) {
      const long jj = std::clamp(static_cast<long>(j) + dj, 0L, cols - 1);
      out[n++] = image(static_cast<std::size_t>(ii), static_cast<std::size_t>(jj));
    }
  }
  out[n] = 1.0;
}

void check_image(const ModelParams& params, const DenseGrid& image) {
  if (image.rank() != 2 || image.rows() == 0 || image.cols() == 0) {
    throw Error("forward: expected a non-empty 2-D intensity grid");
  }
  if (params.weights.size() != params.arch.parameter_count()) {
    throw Error("forward: parameter vector does not match architecture");
  }
}

// Forward pass that optionally keeps hidden activations (voxel-major).
ProbMap forward_impl(const ModelParams& params, const DenseGrid& image,
                     std::vector<double>* hidden_out) {
  check_image(params, image);
  const auto& arch = params.arch;
  const auto f = arch.feature_dim();
  const auto c = static_cast<std::size_t>(arch.num_classes);
  const auto h = static_cast<std::size_t>(arch.hidden_width);
  const auto rows = image.rows(), cols = image.cols();
  const std::span<const double> w = params.weights;

  DenseGrid probs({rows, cols, c});
  std::vector<double> feat(f), logits(c), act(h + 1);
  if (hidden_out != nullptr) hidden_out->assign(rows * cols * h, 0.0);

  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) {
      patch_features(image, arch.patch_radius, i, j, feat);
      if (h == 0) {
        for (std::size_t k = 0; k < c; ++k) logits[k] = dot(w.subspan(k * f, f), feat);
      } else {
        for (std::size_t u = 0; u < h; ++u) act[u] = std::tanh(dot(w.subspan(u * f, f), feat));
        act[h] = 1.0;
        const auto w2 = w.subspan(h * f);
        for (std::size_t k = 0; k < c; ++k) logits[k] = dot(w2.subspan(k * (h + 1), h + 1), act);
        if (hidden_out != nullptr) {
          std::copy_n(act.begin(), h, hidden_out->begin() + static_cast<long>((i * cols + j) * h));
        }
      }
      softmax_into(logits, probs.values().subspan((i * cols + j) * c, c));
    }
  }
  return ProbMap::trusted(std::move(probs));
}

LossGrad example_loss(const ProbMap& probs, const TrainingExample& ex,
                      const ObjectiveSpec& objective) {
  switch (objective.kind) {
    case ObjectiveKind::kJaccard:
    case ObjectiveKind::kFedProxJaccard:
      return jaccard_distance_grad(probs, *ex.labels);
    case ObjectiveKind::kDcmlReceiver:
    case ObjectiveKind::kDcmlSender: {
      const Role role = objective.kind == ObjectiveKind::kDcmlReceiver
                            ? Role::kReceiver
                            : Role::kSender;
      if (ex.peer != nullptr) {
        return dcml_objective_grad(probs, *ex.peer, *ex.labels, objective.lambda,
                                   role, objective.dcml);
      }
      if (objective.peer_model == nullptr) {
        throw Error("loss_and_grad: mutual-learning objective without a peer");
      }
      const ProbMap peer = forward(*objective.peer_model, *ex.image);
      return dcml_objective_grad(probs, peer, *ex.labels, objective.lambda, role,
                                 objective.dcml);
    }
  }
  throw Error("loss_and_grad: unknown objective");
}

void check_batch(std::span<const TrainingExample> batch) {
  if (batch.empty()) throw Error("loss_and_grad: empty batch");
  for (const auto& ex : batch) {
    if (ex.image == nullptr || ex.labels == nullptr) {
      throw Error("loss_and_grad: example without image or labels");
    }
  }
}

double proximal_value(const ModelParams& params, const ObjectiveSpec& objective,
                      std::span<double> grad) {
  if (objective.kind != ObjectiveKind::kFedProxJaccard) return 0.0;
  if (objective.anchor == nullptr) throw Error("loss_and_grad: FedProx without anchor");
  double sq = 0.0;
  for (std::size_t i = 0; i < params.weights.size(); ++i) {
    const double d = params.weights[i] - objective.anchor->weights[i];
    sq += d * d;
    if (!grad.empty()) grad[i] += objective.mu * d;
  }
  return 0.5 * objective.mu * sq;
}

}  // namespace

ProbMap forward(const ModelParams& params, const DenseGrid& image) {
  return forward_impl(params, image, nullptr);
}

ObjectiveSpec ObjectiveSpec::fedprox(double mu, const ModelParams& anchor) {
  ObjectiveSpec s;
  s.kind = ObjectiveKind::kFedProxJaccard;
  s.mu = mu;
  s.anchor = &anchor;
  return s;
}

ObjectiveSpec ObjectiveSpec::dcml_receiver(double lambda, const ModelParams& sender,
                                           DcmlVariant variant) {
  ObjectiveSpec s;
  s.kind = ObjectiveKind::kDcmlReceiver;
  s.lambda = lambda;
  s.dcml = variant;
  s.peer_model = &sender;
  return s;
}

ObjectiveSpec ObjectiveSpec::dcml_sender(double lambda, const ModelParams& receiver,
                                         DcmlVariant variant) {
  ObjectiveSpec s = dcml_receiver(lambda, receiver, variant);
  s.kind = ObjectiveKind::kDcmlSender;
  return s;
}

LossAndGrad loss_and_grad(const ModelParams& params,
                          std::span<const TrainingExample> batch,
                          const ObjectiveSpec& objective) {
  check_batch(batch);
  const auto& arch = params.arch;
  const auto f = arch.feature_dim();
  const auto c = static_cast<std::size_t>(arch.num_classes);
  const auto h = static_cast<std::size_t>(arch.hidden_width);
  const std::span<const double> w = params.weights;

  LossAndGrad out;
  out.grad.assign(params.weights.size(), 0.0);
  std::vector<double> hidden, feat(f), d_logits(c), d_act(h);

  for (const auto& ex : batch) {
    const ProbMap probs = forward_impl(params, *ex.image, h > 0 ? &hidden : nullptr);
    const LossGrad lg = example_loss(probs, ex, objective);
    out.loss += lg.value;

    const auto rows = ex.image->rows(), cols = ex.image->cols();
    for (std::size_t i = 0; i < rows; ++i) {
      for (std::size_t j = 0; j < cols; ++j) {
        const std::size_t v = i * cols + j;
        const auto p = probs.at(v);
        const double* dp = lg.d_probs.data() + v * c;
        // Softmax Jacobian: dz_k = p_k (dp_k - sum_j p_j dp_j).
        double mean = 0.0;
        for (std::size_t k = 0; k < c; ++k) mean += p[k] * dp[k];
        for (std::size_t k = 0; k < c; ++k) d_logits[k] = p[k] * (dp[k] - mean);

        patch_features(*ex.image, arch.patch_radius, i, j, feat);
        if (h == 0) {
          for (std::size_t k = 0; k < c; ++k) {
            double* g = out.grad.data() + k * f;
            for (std::size_t u = 0; u < f; ++u) g[u] += d_logits[k] * feat[u];
          }
          continue;
        }
        const double* act = hidden.data() + v * h;
        const auto w2 = w.subspan(h * f);
        double* g2 = out.grad.data() + h * f;
        std::fill(d_act.begin(), d_act.end(), 0.0);
        for (std::size_t k = 0; k < c; ++k) {
          for (std::size_t u = 0; u < h; ++u) {
            g2[k * (h + 1) + u] += d_logits[k] * act[u];
            d_act[u] += w2[k * (h + 1) + u] * d_logits[k];
          }
          g2[k * (h + 1) + h] += d_logits[k];
        }
        for (std::size_t u = 0; u < h; ++u) {
          const double d_pre = d_act[u] * (1.0 - act[u] * act[u]);
          double* g1 = out.grad.data() + u * f;
          for (std::size_t q = 0; q < f; ++q) g1[q] += d_pre * feat[q];
        }
      }
    }
  }

  const double inv_b = 1.0 / static_cast<double>(batch.size());
  out.loss *= inv_b;
  for (double& g : out.grad) g *= inv_b;
  out.loss += proximal_value(params, objective, out.grad);

  if (!std::isfinite(out.loss)) {
    throw NumericError("loss_and_grad: non-finite loss (" + std::to_string(out.loss) + ")");
  }
  for (std::size_t i = 0; i < out.grad.size(); ++i) {
    if (!std::isfinite(out.grad[i])) {
      throw NumericError("loss_and_grad: non-finite gradient at weight " + std::to_string(i));
    }
  }
  return out;
}

double objective_value(const ModelParams& params,
                       std::span<const TrainingExample> batch,
                       const ObjectiveSpec& objective) {
  check_batch(batch);
  double total = 0.0;
  for (const auto& ex : batch) {
    total += example_loss(forward(params, *ex.image), ex, objective).value;
  }
  total /= static_cast<double>(batch.size());
  return total + proximal_value(params, objective, {});
}

ModelParams sgd_step(const ModelParams& params, std::span<const double> grad,
                     double eta) {
  if (grad.size() != params.weights.size()) {
    throw Error("sgd_step: gradient length " + std::to_string(grad.size()) +
                " does not match " + std::to_string(params.weights.size()));
  }
  if (!(eta >= 0.0) || !std::isfinite(eta)) throw Error("sgd_step: eta must be finite and >= 0");
  ModelParams next = params;
  for (std::size_t i = 0; i < next.weights.size(); ++i) next.weights[i] -= eta * grad[i];
  return next;
}

}  // namespace gcml
