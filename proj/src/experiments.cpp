#include "gcml/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "parallel.hpp"

namespace gcml {

FederationResult Benchmark::run(const StrategyConfig& config) const {
  return run_federation(config, sites(), master_seed, availability);
}

double CellResult::final_dsc() const {
  return result ? result->final_weighted_dsc() : std::numeric_limits<double>::quiet_NaN();
}

std::vector<CellResult> run_cells(const Benchmark& bench,
                                  std::vector<std::pair<std::string, StrategyConfig>> cells,
                                  int threads) {
  std::vector<CellResult> out(cells.size());
  for (std::size_t i = 0; i < cells.size(); ++i) {
    out[i].label = std::move(cells[i].first);
    out[i].config = cells[i].second;
    // Outer parallelism replaces the per-site workers inside each run.
    if (threads != 1) out[i].config.threads = 1;
  }
  detail::parallel_for(out.size(), threads, [&](std::size_t i) {
    try {
      out[i].result = bench.run(out[i].config);
    } catch (const std::exception& e) {
      out[i].error = e.what();
    }
  });
  return out;
}

const std::vector<AblationCell>& ablation_lattice() {
  static const std::vector<AblationCell> cells = {
      {"Merging Only", {false, false, true, false}},
      {"DML Only", {false, false, false, true}},
      {"+Contrast", {true, false, false, true}},
      {"+Contrast+Region", {true, true, false, true}},
      {"Full", {true, true, true, true}},
  };
  return cells;
}

std::vector<CellResult> run_ablation(const Benchmark& bench, const StrategyConfig& base,
                                     int threads) {
  std::vector<std::pair<std::string, StrategyConfig>> cells;
  for (const auto& cell : ablation_lattice()) {
    StrategyConfig c = base;
    c.strategy = Strategy::kGcml;
    c.ablation = cell.flags;
    cells.emplace_back(cell.label, c);
  }
  return run_cells(bench, std::move(cells), threads);
}

std::vector<CellResult> run_comparison(const Benchmark& bench, const StrategyConfig& base,
                                       const std::vector<Strategy>& strategies, int threads) {
  if (strategies.size() < 2) throw Error("compare needs at least two strategies");
  std::vector<std::pair<std::string, StrategyConfig>> cells;
  for (Strategy s : strategies) {
    StrategyConfig c = base;
    c.strategy = s;
    cells.emplace_back(std::string(strategy_name(s)), c);
  }
  return run_cells(bench, std::move(cells), threads);
}

SeedStudy run_seed_study(const Benchmark& bench, const StrategyConfig& base, int n_trials,
                         int threads, std::vector<std::uint64_t> streams) {
  if (n_trials < 2) throw Error("seed study needs at least two trials");
  if (streams.empty()) {
    for (int i = 0; i < n_trials; ++i) {
      streams.push_back(base.scheduler_stream + static_cast<std::uint64_t>(i));
    }
  }
  if (streams.size() != static_cast<std::size_t>(n_trials)) {
    throw Error("seed study: expected one scheduler stream per trial");
  }
  SeedStudy study;
  study.streams = streams;
  std::vector<std::pair<std::string, StrategyConfig>> cells;
  for (std::size_t i = 0; i < streams.size(); ++i) {
    StrategyConfig c = base;
    c.scheduler_stream = streams[i];
    cells.emplace_back("trial " + std::to_string(i + 1), c);
  }
  study.trials = run_cells(bench, std::move(cells), threads);
  std::vector<double> dsc;
  for (const auto& t : study.trials) {
    if (t.ok()) dsc.push_back(t.final_dsc());
  }
  if (!dsc.empty()) study.mean = mean_of(dsc);
  if (dsc.size() >= 2) study.stddev = sample_stddev(dsc);
  return study;
}

std::vector<CellResult> run_warmup_sweep(const Benchmark& bench, const StrategyConfig& base,
                                         const std::vector<int>& warmups, int threads) {
  const int budget = base.warmup_rounds + base.rounds;
  std::vector<std::pair<std::string, StrategyConfig>> cells;
  for (int w : warmups) {
    if (w < 0 || w > budget) {
      throw Error("warmup " + std::to_string(w) + " outside the round budget of " +
                  std::to_string(budget));
    }
    StrategyConfig c = base;
    c.warmup_rounds = w;
    c.rounds = budget - w;
    cells.emplace_back("warmup " + std::to_string(w), c);
  }
  return run_cells(bench, std::move(cells), threads);
}

std::vector<CellResult> run_pair_sweep(const Benchmark& bench, const StrategyConfig& base,
                                       const std::vector<int>& pair_counts, int threads) {
  std::vector<std::pair<std::string, StrategyConfig>> cells;
  for (int p : pair_counts) {
    if (p < 1) throw Error("pair count must be >= 1");
    StrategyConfig c = base;
    c.num_pairs = p;
    cells.emplace_back(std::to_string(p) + " pairs", c);
  }
  return run_cells(bench, std::move(cells), threads);
}

double mean_of(const std::vector<double>& xs) {
  if (xs.empty()) throw Error("mean of an empty sample");
  return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

double sample_stddev(const std::vector<double>& xs) {
  if (xs.size() < 2) throw Error("standard deviation needs two samples");
  const double m = mean_of(xs);
  double ss = 0.0;
  for (double x : xs) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(xs.size() - 1));
}

double median_of(std::vector<double> xs) {
  if (xs.empty()) throw Error("median of an empty sample");
  std::sort(xs.begin(), xs.end());
  const std::size_t n = xs.size();
  return n % 2 == 1 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

Benchmark default_benchmark(std::uint64_t master_seed) {
  Benchmark b;
  b.master_seed = master_seed;
  b.arch = ArchSpec{1, 0, 2};
  b.datasets = generate_datasets(default_benchmark_sites(), master_seed);
  return b;
}

StrategyConfig default_benchmark_config(Strategy strategy) {
  StrategyConfig c;
  c.strategy = strategy;
  c.rounds = 100;
  return c;
}

}  // namespace gcml
