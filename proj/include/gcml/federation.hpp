#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "gcml/data.hpp"
#include "gcml/gossip.hpp"
#include "gcml/metrics.hpp"
#include "gcml/segmenter.hpp"

namespace gcml {

enum class Strategy {
  kGcml,
  kIm,
  kPm,
  kFedAvg,
  kFedProx,
  kFedPidAvgLite,
  kBrainTorrent,
  kProxyDml,
};

std::string_view strategy_name(Strategy s);
std::optional<Strategy> parse_strategy(std::string_view name);
const std::vector<Strategy>& all_strategies();

/// Component switches for the GCML exchange. mutual_learning = false skips
/// the alternating updates entirely (the "merging only" cell).
struct AblationFlags {
  bool contrast = true;
  bool regional = true;
  bool merging = true;
  bool mutual_learning = true;

  friend bool operator==(const AblationFlags&, const AblationFlags&) = default;
};

struct StrategyConfig {
  Strategy strategy = Strategy::kGcml;
  double lambda = 0.5;
  double eta = 0.5;
  int batch_size = 4;
  int local_epochs = 1;
  int dcml_epochs = 1;
  int rounds = 100;
  int warmup_rounds = 0;
  /// 0 picks ceil(available / 2) so every site takes part each round.
  int num_pairs = 0;
  int max_incoming = 1;
  double mu = 0.001;
  int bt_finetune_epochs = 2;
  double kappa = kDefaultKlClamp;
  AblationFlags ablation;
  /// Weight the merge by 1/v instead of v.
  bool inverse_merge_weights = false;
  bool detach_region_weights = false;
  /// Selects the scheduler's RNG stream; seed studies vary only this.
  std::uint64_t scheduler_stream = 0;
  /// Worker threads for per-site work; 0 = hardware concurrency.
  int threads = 1;

  void validate() const;
  DcmlVariant dcml_variant() const;
};

struct SiteState {
  SiteId id = 0;
  Splits data;
  ModelParams params;
  RngStream rng;
  bool available = true;
};

struct SiteRoundMetrics {
  SiteId site = 0;
  bool available = true;
  double dsc = 0.0;
  std::optional<double> hd95;
  std::optional<double> assd;
  /// Test cases whose surface metrics were undefined (an empty mask).
  std::size_t undefined_surface = 0;
  double train_loss = 0.0;
  double val_jd = 0.0;
  std::size_t test_cases = 0;
};

struct RoundRecord {
  int round = 0;
  bool warmup = false;
  std::vector<SiteRoundMetrics> sites;
  std::uint64_t comm_bytes = 0;
  std::uint64_t comm_bytes_cum = 0;
  PairSchedule schedule;
  double weighted_dsc = 0.0;
  std::optional<double> weighted_hd95;
  std::optional<double> weighted_assd;
};

/// A site joins or leaves at the start of `round`, or after that round's
/// schedule was drawn when `mid_round` is set.
struct AvailabilityEvent {
  int round = 0;
  SiteId site = 0;
  bool available = false;
  bool mid_round = false;
};

struct FederationResult {
  /// Metrics of the untouched initial models.
  RoundRecord initial;
  std::vector<RoundRecord> rounds;
  std::vector<SiteState> sites;
  std::vector<std::string> events;
  std::vector<std::string> schedule_log;

  double final_weighted_dsc() const;
};

/// Bytes on the wire for one model: one 64-bit float per weight.
std::uint64_t model_bytes(const ArchSpec& arch);

/// Per-round transfers x model_bytes for each strategy.
std::uint64_t comm_bytes(Strategy strategy, std::size_t n_sites, std::size_t num_pairs,
                         std::uint64_t model_bytes);
std::uint64_t transfers_per_round(Strategy strategy, std::size_t n_sites,
                                  std::size_t num_pairs);

/// Mini-batch SGD over the site's training split. Returns the mean batch
/// loss of the final epoch (the current training JD when epochs == 0).
double local_update(SiteState& site, int epochs, double eta, int batch_size,
                    const ObjectiveSpec& objective = ObjectiveSpec::jaccard());

/// Mean JD of `params` over `cases`.
double mean_jaccard(const ModelParams& params, std::span<const Case> cases);

/// Weighted parameter average (v_R W_R + v_S W_S) / (v_R + v_S), or the
/// 1/v-weighted form when `inverse` is set. Each coordinate is kept inside
/// [min(W_R, W_S), max(W_R, W_S)].
ModelParams merge_models(const ModelParams& receiver, const ModelParams& sender,
                         double v_receiver, double v_sender, bool inverse = false);

struct ExchangeOutcome {
  bool ok = true;
  double v_receiver = 0.0;
  double v_sender = 0.0;
  std::string event;
};

/// Mutual learning between the receiver's model and one incoming model on
/// the receiver's training data, then the optional merge.
ExchangeOutcome dcml_exchange(SiteState& receiver, const ModelParams& incoming,
                              const StrategyConfig& config);

/// Sum of n_i W_i / sum n_i.
ModelParams weighted_average(std::span<const ModelParams* const> models,
                             std::span<const double> weights);

SiteRoundMetrics evaluate_site(const SiteState& site);

FederationResult run_federation(const StrategyConfig& config, std::vector<SiteState> sites,
                                std::uint64_t master_seed,
                                std::span<const AvailabilityEvent> availability = {});

/// One row per (round, site): round,site_id,dsc,hd95,assd,train_loss,val_jd,comm_bytes_cum
void write_rounds_csv(std::ostream& out, std::span<const RoundRecord> rounds);
std::string format_float(double v);

/// Named RNG purposes; combined with the master seed and a site id.
enum class StreamTag : std::uint64_t {
  kData = 1,
  kSplit = 2,
  kInit = 3,
  kTrain = 4,
  kScheduler = 5,
  kStrategy = 6,
  kPool = 7,
};
RngStream stream_for(std::uint64_t master_seed, StreamTag tag, std::uint64_t index = 0);

/// Splits each dataset and draws per-site initial weights, all from
/// `master_seed`.
std::vector<SiteState> make_sites(const std::vector<std::vector<Case>>& datasets,
                                  const ArchSpec& arch, std::uint64_t master_seed);
std::vector<std::vector<Case>> generate_datasets(const std::vector<SiteSpec>& specs,
                                                 std::uint64_t master_seed);

}  // namespace gcml
