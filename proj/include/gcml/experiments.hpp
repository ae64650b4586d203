#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "gcml/federation.hpp"

namespace gcml {

/// Builds fresh site states for every run so cells share data and init.
struct Benchmark {
  std::vector<std::vector<Case>> datasets;
  ArchSpec arch;
  std::uint64_t master_seed = 0;
  std::vector<AvailabilityEvent> availability;

  std::vector<SiteState> sites() const { return make_sites(datasets, arch, master_seed); }
  FederationResult run(const StrategyConfig& config) const;
};

struct CellResult {
  std::string label;
  StrategyConfig config;
  std::optional<FederationResult> result;
  std::string error;

  bool ok() const { return result.has_value(); }
  double final_dsc() const;
};

/// Runs each config against the benchmark. Cells are independent, so they
/// may run on `threads` workers; a throwing cell records its error and the
/// rest still run.
std::vector<CellResult> run_cells(const Benchmark& bench,
                                  std::vector<std::pair<std::string, StrategyConfig>> cells,
                                  int threads);

struct AblationCell {
  std::string label;
  AblationFlags flags;
};

/// Merging only, DML only, +Contrast, +Contrast+Region, Full.
const std::vector<AblationCell>& ablation_lattice();

std::vector<CellResult> run_ablation(const Benchmark& bench, const StrategyConfig& base,
                                     int threads);

/// Same as run_cells over one strategy per cell.
std::vector<CellResult> run_comparison(const Benchmark& bench, const StrategyConfig& base,
                                       const std::vector<Strategy>& strategies, int threads);

struct SeedStudy {
  std::vector<std::uint64_t> streams;
  std::vector<CellResult> trials;
  double mean = 0.0;
  double stddev = 0.0;  ///< sample standard deviation
};

/// Trials differ only in the scheduler stream. `streams` defaults to
/// base.scheduler_stream + 0..n_trials-1.
SeedStudy run_seed_study(const Benchmark& bench, const StrategyConfig& base, int n_trials,
                         int threads, std::vector<std::uint64_t> streams = {});

/// Each warmup value keeps warmup + rounds equal to base.rounds.
std::vector<CellResult> run_warmup_sweep(const Benchmark& bench, const StrategyConfig& base,
                                         const std::vector<int>& warmups, int threads);

std::vector<CellResult> run_pair_sweep(const Benchmark& bench, const StrategyConfig& base,
                                       const std::vector<int>& pair_counts, int threads);

double mean_of(const std::vector<double>& xs);
double sample_stddev(const std::vector<double>& xs);
double median_of(std::vector<double> xs);

/// 6-site 32x32 synthetic benchmark with patch-linear models.
Benchmark default_benchmark(std::uint64_t master_seed);

/// Tuned settings for the desk-scale benchmark.
StrategyConfig default_benchmark_config(Strategy strategy = Strategy::kGcml);

}  // namespace gcml
