#include "gcml/selfcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "gcml/federation.hpp"

namespace gcml {

double max_gradient_rel_error(const ModelParams& params,
                              std::span<const TrainingExample> batch,
                              const ObjectiveSpec& objective, double h, double floor) {
  const LossAndGrad lg = loss_and_grad(params, batch, objective);
  double worst = 0.0;
  ModelParams probe = params;
  for (std::size_t i = 0; i < params.weights.size(); ++i) {
    const double w = params.weights[i];
    probe.weights[i] = w + h;
    const double up = objective_value(probe, batch, objective);
    probe.weights[i] = w - h;
    const double down = objective_value(probe, batch, objective);
    probe.weights[i] = w;
    const double numeric = (up - down) / (2.0 * h);
    const double scale = std::max({std::abs(lg.grad[i]), std::abs(numeric), floor});
    worst = std::max(worst, std::abs(lg.grad[i] - numeric) / scale);
  }
  return worst;
}

namespace {

struct Instance {
  DenseGrid image;
  GroundTruth labels;
};

Instance random_instance(RngStream& rng, int num_classes) {
  const auto rows = static_cast<std::size_t>(rng.next_int(3, 8));
  const auto cols = static_cast<std::size_t>(rng.next_int(3, 8));
  std::vector<double> pixels(rows * cols);
  std::vector<std::uint8_t> labels(rows * cols);
  for (std::size_t v = 0; v < pixels.size(); ++v) {
    labels[v] = static_cast<std::uint8_t>(rng.next_below(static_cast<std::uint64_t>(num_classes)));
    pixels[v] = 0.3 * labels[v] + rng.next_uniform();
  }
  return {DenseGrid({rows, cols}, std::move(pixels)),
          GroundTruth(rows, cols, num_classes, std::move(labels))};
}

ProbMap random_probs(RngStream& rng, std::size_t rows, std::size_t cols, int c) {
  std::vector<double> values;
  std::vector<double> logits(static_cast<std::size_t>(c));
  for (std::size_t v = 0; v < rows * cols; ++v) {
    for (double& z : logits) z = 2.0 * rng.next_normal();
    for (double p : softmax(logits)) values.push_back(p);
  }
  return ProbMap::trusted(DenseGrid({rows, cols, static_cast<std::size_t>(c)}, std::move(values)));
}

std::string format_error(double e) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.3g", e);
  return buf;
}

}  // namespace

std::vector<CheckLine> run_self_checks(std::uint64_t seed, int instances) {
  std::vector<CheckLine> out;
  RngStream rng(seed, 0x5e1f);

  double grad_worst = 0.0;
  for (int t = 0; t < instances; ++t) {
    const int c = 2 + t % 2;
    const ArchSpec arch{1, (t / 2) % 2 == 0 ? 0 : 4, c};
    const Instance inst = random_instance(rng, c);
    const ModelParams own = ModelParams::random_init(arch, rng, 0.5);
    const ModelParams peer = ModelParams::random_init(arch, rng, 0.5);
    const TrainingExample ex{&inst.image, &inst.labels, nullptr};
    const std::span<const TrainingExample> batch(&ex, 1);
    for (const auto& spec : {ObjectiveSpec::jaccard(), ObjectiveSpec::dcml_receiver(0.5, peer),
                             ObjectiveSpec::dcml_sender(0.5, peer)}) {
      grad_worst = std::max(grad_worst, max_gradient_rel_error(own, batch, spec));
    }
  }
  out.push_back({"gradients match central differences", grad_worst < 1e-5,
                 "max relative error " + format_error(grad_worst)});

  double id_worst = 0.0, region_worst = 0.0;
  for (int t = 0; t < instances; ++t) {
    const int c = 2 + t % 2;
    const Instance inst = random_instance(rng, c);
    const auto rows = inst.labels.rows(), cols = inst.labels.cols();
    const ProbMap pr = random_probs(rng, rows, cols, c);
    const ProbMap ps = random_probs(rng, rows, cols, c);
    const double kl = kl_divergence(pr, ps);
    const double plus = contrastive_kl(pr, ps, ContrastMap::uniform(rows, cols, 1), kNoClamp);
    const double minus = contrastive_kl(pr, ps, ContrastMap::uniform(rows, cols, -1), kNoClamp);
    id_worst = std::max({id_worst, std::abs(plus - kl), std::abs(minus + kl)});
    const double self = regional_contrastive_kl(pr, pr, inst.labels, contrast_map(pr, inst.labels));
    region_worst = std::max(region_worst, std::abs(self));
  }
  out.push_back({"contrastive KL reduces to +/- KL", id_worst <= 1e-12,
                 "max deviation " + format_error(id_worst)});
  out.push_back({"regional term vanishes on identical maps", region_worst <= 1e-12,
                 "max magnitude " + format_error(region_worst)});

  bool convex = true;
  for (int t = 0; t < instances; ++t) {
    const ArchSpec arch{1, 0, 2};
    const ModelParams r = ModelParams::random_init(arch, rng, 1.0);
    const ModelParams s = ModelParams::random_init(arch, rng, 1.0);
    const ModelParams m = merge_models(r, s, rng.next_uniform(), rng.next_uniform());
    for (std::size_t i = 0; i < m.weights.size(); ++i) {
      const double lo = std::min(r.weights[i], s.weights[i]);
      const double hi = std::max(r.weights[i], s.weights[i]);
      convex = convex && m.weights[i] >= lo && m.weights[i] <= hi;
    }
  }
  out.push_back({"merge is a per-coordinate convex combination", convex, ""});

  const std::uint64_t gcml = comm_bytes(Strategy::kGcml, 8, 4, 1);
  const bool ratios = comm_bytes(Strategy::kFedAvg, 8, 4, 1) == 4 * gcml &&
                      comm_bytes(Strategy::kProxyDml, 8, 4, 1) == 2 * gcml &&
                      4 * comm_bytes(Strategy::kBrainTorrent, 8, 4, 1) == 7 * gcml &&
                      comm_bytes(Strategy::kIm, 8, 4, 1) == 0 &&
                      comm_bytes(Strategy::kPm, 8, 4, 1) == 0;
  out.push_back({"communication ratios 4 : 2 : 1.75 : 1", ratios, ""});
  return out;
}

}  // namespace gcml
