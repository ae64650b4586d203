#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "gcml/experiments.hpp"

namespace gcml {

/// Config problem with a location: a JSON path such as "strategy.lambda",
/// or a line/column for syntax errors.
class ConfigError : public Error {
 public:
  using Error::Error;
};

struct DataSource {
  enum class Kind { kDefault, kSites, kNseg };
  Kind kind = Kind::kDefault;
  std::vector<SiteSpec> sites;
  std::vector<std::filesystem::path> nseg_files;
};

struct RunConfig {
  std::uint64_t master_seed = 1;
  DataSource data;
  ArchSpec arch;
  StrategyConfig strategy;
  std::vector<AvailabilityEvent> availability;
  std::filesystem::path out_dir = "gcml_out";
  std::vector<Strategy> compare_strategies;
  int seed_trials = 10;
  std::vector<int> warmup_list = {0, 10, 20};
  std::vector<int> pair_list = {1, 2, 3};
};

/// Parses a JSON config document. Unknown keys and wrong types are errors
/// naming the offending field. `base_dir` resolves relative NSEG paths.
RunConfig parse_config(const std::string& text, const std::filesystem::path& base_dir = {});
RunConfig load_config(const std::filesystem::path& path);

/// Builds the datasets named by the config.
Benchmark build_benchmark(const RunConfig& config);

/// Worker count: the configured value, capped by GCML_SIM_THREADS when set.
int effective_threads(int configured);

/// Full command-line entry point. Returns the process exit code.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace gcml
