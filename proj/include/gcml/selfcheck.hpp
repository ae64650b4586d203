#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gcml/segmenter.hpp"

namespace gcml {

struct CheckLine {
  std::string name;
  bool passed = false;
  std::string detail;
};

/// Largest |analytic - central difference| / max(|analytic|, |numeric|, floor)
/// over every weight. The floor keeps near-zero components from dominating.
double max_gradient_rel_error(const ModelParams& params,
                              std::span<const TrainingExample> batch,
                              const ObjectiveSpec& objective, double h = 1e-6,
                              double floor = 1e-4);

/// Gradient, loss-identity and merge checks on random small instances.
std::vector<CheckLine> run_self_checks(std::uint64_t seed, int instances = 20);

}  // namespace gcml
