#include <doctest.h>

#include <cmath>

#include "gcml/segmenter.hpp"
#include "oracles.hpp"

using namespace gcml;

namespace {

struct Instance {
  DenseGrid image;
  GroundTruth labels;
};

Instance random_instance(RngStream& rng, std::size_t rows, std::size_t cols, int c) {
  std::vector<double> px(rows * cols);
  std::vector<std::uint8_t> lb(rows * cols);
  for (std::size_t v = 0; v < px.size(); ++v) {
    lb[v] = static_cast<std::uint8_t>(rng.next_below(static_cast<std::uint64_t>(c)));
    px[v] = 0.4 * lb[v] + rng.next_uniform();
  }
  return {DenseGrid({rows, cols}, std::move(px)), GroundTruth(rows, cols, c, std::move(lb))};
}

oracle::Arch to_oracle(const ArchSpec& a) { return {a.patch_radius, a.hidden_width, a.num_classes}; }

std::vector<std::uint8_t> labels_of(const GroundTruth& gt) {
  return {gt.labels().begin(), gt.labels().end()};
}

}  // namespace

TEST_CASE("parameter counts for both architectures") {
  CHECK(ArchSpec{1, 0, 2}.parameter_count() == 20);
  CHECK(ArchSpec{0, 0, 3}.parameter_count() == 6);
  CHECK(ArchSpec{1, 4, 3}.parameter_count() == 4 * 10 + 3 * 5);
  CHECK_THROWS_AS(ArchSpec({1, 0, 1}).validate(), Error);
  CHECK_THROWS_AS(ArchSpec({-1, 0, 2}).validate(), Error);
}

TEST_CASE("bias index addresses the constant input") {
  const ArchSpec lin{1, 0, 2};
  ModelParams p = ModelParams::zeros(lin);
  p.weights[class_bias_index(lin, 1)] = 3.0;
  const auto probs = forward(p, DenseGrid({2, 2}, 0.7));
  CHECK(probs.at(0)[1] == doctest::Approx(1.0 / (1.0 + std::exp(-3.0))).epsilon(1e-15));

  const ArchSpec hid{0, 2, 2};
  ModelParams q = ModelParams::zeros(hid);
  q.weights[class_bias_index(hid, 0)] = -1.0;
  const auto out = forward(q, DenseGrid({1, 1}, 0.3));
  CHECK(out.at(0)[0] == doctest::Approx(1.0 / (1.0 + std::exp(1.0))).epsilon(1e-15));
}

TEST_CASE("forward matches the reference and lies on the simplex") {
  RngStream rng(10, 1);
  for (const ArchSpec arch : {ArchSpec{1, 0, 2}, ArchSpec{2, 0, 3}, ArchSpec{1, 5, 3}}) {
    const auto inst = random_instance(rng, 5, 7, arch.num_classes);
    const auto params = ModelParams::random_init(arch, rng, 0.8);
    const auto probs = forward(params, inst.image);
    const auto ref = oracle::forward(to_oracle(arch), params.weights, inst.image);
    for (std::size_t v = 0; v < probs.voxels(); ++v) {
      double total = 0.0;
      for (int k = 0; k < arch.num_classes; ++k) {
        CHECK(probs.at(v)[k] == doctest::Approx(ref[v][k]).epsilon(1e-13));
        total += probs.at(v)[k];
      }
      CHECK(total == doctest::Approx(1.0).epsilon(1e-14));
    }
  }
}

TEST_CASE("weight gradients match central differences of the reference objective") {
  RngStream rng(11, 2);
  for (int seed = 0; seed < 4; ++seed) {
    for (const ArchSpec arch : {ArchSpec{1, 0, 2}, ArchSpec{1, 3, 3}}) {
      const auto inst = random_instance(rng, 4, 5, arch.num_classes);
      const auto own = ModelParams::random_init(arch, rng, 0.5);
      const auto peer = ModelParams::random_init(arch, rng, 0.5);
      const TrainingExample ex{&inst.image, &inst.labels, nullptr};
      const auto labels = labels_of(inst.labels);
      const auto peer_probs = oracle::forward(to_oracle(arch), peer.weights, inst.image);
      for (const auto& spec : {ObjectiveSpec::jaccard(), ObjectiveSpec::dcml_receiver(0.5, peer)}) {
        const auto analytic = loss_and_grad(own, std::span(&ex, 1), spec);
        const bool mutual = spec.kind != ObjectiveKind::kJaccard;
        auto f = [&](const std::vector<double>& w) {
          const auto p = oracle::forward(to_oracle(arch), w, inst.image);
          return oracle::objective(p, mutual ? &peer_probs : nullptr, labels, mutual ? 0.5 : 0.0, {});
        };
        CHECK(analytic.loss == doctest::Approx(f(own.weights)).epsilon(1e-12));
        const auto fd = oracle::central_difference(f, own.weights, 1e-6);
        CHECK(oracle::max_rel_error(analytic.grad, fd, 1e-4) < 1e-5);
      }
    }
  }
}

TEST_CASE("batch loss is the mean of per-example losses") {
  RngStream rng(12, 3);
  const ArchSpec arch{1, 0, 2};
  const auto a = random_instance(rng, 4, 4, 2), b = random_instance(rng, 3, 5, 2);
  const auto params = ModelParams::random_init(arch, rng);
  const TrainingExample batch[] = {{&a.image, &a.labels, nullptr}, {&b.image, &b.labels, nullptr}};
  const auto both = loss_and_grad(params, batch, ObjectiveSpec::jaccard());
  const auto first = loss_and_grad(params, std::span(batch, 1), ObjectiveSpec::jaccard());
  const auto second = loss_and_grad(params, std::span(batch + 1, 1), ObjectiveSpec::jaccard());
  CHECK(both.loss == doctest::Approx(0.5 * (first.loss + second.loss)).epsilon(1e-15));
  for (std::size_t i = 0; i < both.grad.size(); ++i) {
    CHECK(both.grad[i] == doctest::Approx(0.5 * (first.grad[i] + second.grad[i])).epsilon(1e-13));
  }
  CHECK(objective_value(params, batch, ObjectiveSpec::jaccard()) == both.loss);
}

TEST_CASE("FedProx: mu = 0 gives the Jaccard gradient, mu > 0 adds mu (W - A)") {
  RngStream rng(13, 4);
  const ArchSpec arch{1, 0, 2};
  const auto inst = random_instance(rng, 4, 4, 2);
  const auto params = ModelParams::random_init(arch, rng);
  const auto anchor = ModelParams::random_init(arch, rng);
  const TrainingExample ex{&inst.image, &inst.labels, nullptr};
  const auto jd = loss_and_grad(params, std::span(&ex, 1), ObjectiveSpec::jaccard());
  const auto zero = loss_and_grad(params, std::span(&ex, 1), ObjectiveSpec::fedprox(0.0, anchor));
  CHECK(zero.grad == jd.grad);
  CHECK(zero.loss == jd.loss);
  const auto prox = loss_and_grad(params, std::span(&ex, 1), ObjectiveSpec::fedprox(0.1, anchor));
  double sq = 0.0;
  for (std::size_t i = 0; i < jd.grad.size(); ++i) {
    const double d = params.weights[i] - anchor.weights[i];
    sq += d * d;
    CHECK(prox.grad[i] == doctest::Approx(jd.grad[i] + 0.1 * d).epsilon(1e-13));
  }
  CHECK(prox.loss == doctest::Approx(jd.loss + 0.05 * sq).epsilon(1e-14));
}

TEST_CASE("single-voxel hand-differentiated Jaccard step") {
  // r = 0, C = 2: z_k = a_k x + b_k. Label 1, so JD = 1 - (q + e) / (1 + e)
  // and dJD/dq = -1 / (1 + e) with q = p_1.
  const ArchSpec arch{0, 0, 2};
  ModelParams p{arch, {0.2, -0.1, -0.3, 0.4}};
  const double x = 0.7;
  const DenseGrid image({1, 1}, std::vector<double>{x});
  const GroundTruth gt(1, 1, 2, {1});
  const double z0 = 0.2 * x - 0.1, z1 = -0.3 * x + 0.4;
  const double q = 1.0 / (1.0 + std::exp(z0 - z1));
  const double dq = -1.0 / (1.0 + 1e-5);
  const double dz1 = dq * q * (1.0 - q);
  const std::vector<double> expected{-dz1 * x, -dz1, dz1 * x, dz1};
  const TrainingExample ex{&image, &gt, nullptr};
  const auto lg = loss_and_grad(p, std::span(&ex, 1), ObjectiveSpec::jaccard());
  for (std::size_t i = 0; i < 4; ++i) CHECK(lg.grad[i] == doctest::Approx(expected[i]).epsilon(1e-14));
  const auto stepped = sgd_step(p, lg.grad, 0.5);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(stepped.weights[i] == doctest::Approx(p.weights[i] - 0.5 * expected[i]).epsilon(1e-15));
  }
}

TEST_CASE("sgd_step validation and eta = 0") {
  const ArchSpec arch{1, 0, 2};
  RngStream rng(14, 5);
  const auto p = ModelParams::random_init(arch, rng);
  const std::vector<double> g(p.weights.size(), 1.0);
  CHECK(sgd_step(p, g, 0.0) == p);
  CHECK_THROWS_AS(sgd_step(p, std::vector<double>(3, 0.0), 0.1), Error);
  CHECK_THROWS_AS(sgd_step(p, g, -1.0), Error);
}

TEST_CASE("loss_and_grad rejects bad input") {
  const ArchSpec arch{1, 0, 2};
  const auto p = ModelParams::zeros(arch);
  CHECK_THROWS_AS(loss_and_grad(p, {}, ObjectiveSpec::jaccard()), Error);
  const DenseGrid image({2, 2}, 0.5);
  const GroundTruth gt(2, 2, 2, {0, 1, 0, 1});
  const TrainingExample ex{&image, &gt, nullptr};
  ObjectiveSpec peerless;
  peerless.kind = ObjectiveKind::kDcmlReceiver;
  CHECK_THROWS_AS(loss_and_grad(p, std::span(&ex, 1), peerless), Error);
  ModelParams bad = p;
  bad.weights.pop_back();
  CHECK_THROWS_AS(forward(bad, image), Error);
  CHECK_THROWS_AS(bad.validate(), Error);
}
