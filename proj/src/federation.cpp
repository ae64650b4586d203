#include "gcml/federation.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <deque>
#include <limits>
#include <map>
#include <numeric>
#include <ostream>

#include "parallel.hpp"

namespace gcml {

namespace {

constexpr std::array<std::pair<Strategy, std::string_view>, 8> kStrategyNames{{
    {Strategy::kGcml, "GCML"},
    {Strategy::kIm, "IM"},
    {Strategy::kPm, "PM"},
    {Strategy::kFedAvg, "FedAvg"},
    {Strategy::kFedProx, "FedProx"},
    {Strategy::kFedPidAvgLite, "FedPIDAvgLite"},
    {Strategy::kBrainTorrent, "BrainTorrent"},
    {Strategy::kProxyDml, "ProxyDML"},
}};

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

bool is_centralized(Strategy s) {
  return s == Strategy::kFedAvg || s == Strategy::kFedProx || s == Strategy::kFedPidAvgLite;
}

std::vector<TrainingExample> make_batch(std::span<const Case> cases,
                                        std::span<const std::size_t> order) {
  std::vector<TrainingExample> batch;
  batch.reserve(order.size());
  for (auto idx : order) batch.push_back({&cases[idx].image, &cases[idx].labels, nullptr});
  return batch;
}

std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, int batch_size,
                                                    RngStream& rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(order);
  std::vector<std::vector<std::size_t>> out;
  const auto b = static_cast<std::size_t>(batch_size);
  for (std::size_t start = 0; start < n; start += b) {
    out.emplace_back(order.begin() + static_cast<long>(start),
                     order.begin() + static_cast<long>(std::min(n, start + b)));
  }
  return out;
}

}  // namespace

std::string_view strategy_name(Strategy s) {
  for (auto [id, name] : kStrategyNames) {
    if (id == s) return name;
  }
  return "unknown";
}

std::optional<Strategy> parse_strategy(std::string_view name) {
  for (auto [id, n] : kStrategyNames) {
    if (n == name) return id;
  }
  return std::nullopt;
}

const std::vector<Strategy>& all_strategies() {
  static const std::vector<Strategy> all = [] {
    std::vector<Strategy> v;
    for (auto [id, name] : kStrategyNames) v.push_back(id);
    return v;
  }();
  return all;
}

void StrategyConfig::validate() const {
  auto fail = [](const std::string& what) { throw Error("StrategyConfig: " + what); };
  if (!(lambda >= 0.0 && lambda <= 1.0)) fail("lambda must lie in [0, 1]");
  if (!(eta >= 0.0) || !std::isfinite(eta)) fail("eta must be finite and >= 0");
  if (batch_size < 1) fail("batch_size must be >= 1");
  if (local_epochs < 0 || dcml_epochs < 0 || rounds < 0 || warmup_rounds < 0 ||
      bt_finetune_epochs < 0) {
    fail("epoch and round counts must be >= 0");
  }
  if (num_pairs < 0) fail("num_pairs must be >= 0");
  if (max_incoming < 1) fail("max_incoming must be >= 1");
  if (!(mu >= 0.0)) fail("mu must be >= 0");
  if (!(kappa > 0.0)) fail("kappa must be > 0");
  if (threads < 0) fail("threads must be >= 0");
}

DcmlVariant StrategyConfig::dcml_variant() const {
  DcmlVariant v;
  v.kappa = kappa;
  v.contrast = ablation.contrast;
  v.regional = ablation.regional;
  v.detach_region_weights = detach_region_weights;
  return v;
}

double FederationResult::final_weighted_dsc() const {
  return rounds.empty() ? initial.weighted_dsc : rounds.back().weighted_dsc;
}

std::uint64_t model_bytes(const ArchSpec& arch) {
  return static_cast<std::uint64_t>(arch.parameter_count()) * sizeof(double);
}

std::uint64_t transfers_per_round(Strategy strategy, std::size_t n_sites,
                                  std::size_t num_pairs) {
  switch (strategy) {
    case Strategy::kFedAvg:
    case Strategy::kFedProx:
    case Strategy::kFedPidAvgLite:
      return 2 * n_sites;
    case Strategy::kProxyDml:
      return n_sites;
    case Strategy::kBrainTorrent:
      return n_sites == 0 ? 0 : n_sites - 1;
    case Strategy::kGcml:
      return num_pairs;
    case Strategy::kIm:
    case Strategy::kPm:
      return 0;
  }
  return 0;
}

std::uint64_t comm_bytes(Strategy strategy, std::size_t n_sites, std::size_t num_pairs,
                         std::uint64_t bytes_per_model) {
  return transfers_per_round(strategy, n_sites, num_pairs) * bytes_per_model;
}

double local_update(SiteState& site, int epochs, double eta, int batch_size,
                    const ObjectiveSpec& objective) {
  if (site.data.train.empty()) {
    throw Error("local_update: site " + std::to_string(site.id) + " has no training cases");
  }
  if (epochs < 0) throw Error("local_update: epochs must be >= 0");
  const std::span<const Case> train = site.data.train;
  if (epochs == 0) {
    std::vector<std::size_t> all(train.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    const auto batch = make_batch(train, all);
    return objective_value(site.params, batch, objective);
  }
  double last_epoch_loss = 0.0;
  for (int e = 0; e < epochs; ++e) {
    const auto batches = epoch_batches(train.size(), batch_size, site.rng);
    double total = 0.0;
    for (const auto& order : batches) {
      const auto batch = make_batch(train, order);
      const LossAndGrad lg = loss_and_grad(site.params, batch, objective);
      total += lg.loss;
      site.params = sgd_step(site.params, lg.grad, eta);
    }
    last_epoch_loss = total / static_cast<double>(batches.size());
  }
  return last_epoch_loss;
}

double mean_jaccard(const ModelParams& params, std::span<const Case> cases) {
  if (cases.empty()) return 0.0;
  double total = 0.0;
  for (const auto& c : cases) total += jaccard_distance(forward(params, c.image), c.labels);
  return total / static_cast<double>(cases.size());
}

ModelParams merge_models(const ModelParams& receiver, const ModelParams& sender,
                         double v_receiver, double v_sender, bool inverse) {
  if (receiver.weights.size() != sender.weights.size()) {
    throw Error("merge_models: architectures differ");
  }
  if (!(v_receiver >= 0.0) || !(v_sender >= 0.0)) {
    throw Error("merge_models: merge weights must be >= 0");
  }
  double a = v_receiver, b = v_sender;
  if (inverse) {
    if (v_receiver == 0.0) return receiver;
    if (v_sender == 0.0) return sender;
    a = 1.0 / v_receiver;
    b = 1.0 / v_sender;
  }
  if (b == 0.0) return receiver;
  if (a == 0.0) return sender;
  ModelParams out = receiver;
  for (std::size_t i = 0; i < out.weights.size(); ++i) {
    const double r = receiver.weights[i], s = sender.weights[i];
    out.weights[i] = std::clamp((a * r + b * s) / (a + b), std::min(r, s), std::max(r, s));
  }
  return out;
}

ExchangeOutcome dcml_exchange(SiteState& receiver, const ModelParams& incoming,
                              const StrategyConfig& config) {
  if (!(incoming.arch == receiver.params.arch) ||
      incoming.weights.size() != receiver.params.weights.size()) {
    throw Error("dcml_exchange: incoming model does not match the architecture");
  }
  if (receiver.data.train.empty()) {
    throw Error("dcml_exchange: receiver has no training cases");
  }
  ExchangeOutcome outcome;
  ModelParams local = receiver.params;
  ModelParams guest = incoming;
  RngStream rng = receiver.rng;
  try {
    if (config.ablation.mutual_learning) {
      const DcmlVariant variant = config.dcml_variant();
      const std::span<const Case> train = receiver.data.train;
      for (int e = 0; e < config.dcml_epochs; ++e) {
        for (const auto& order : epoch_batches(train.size(), config.batch_size, rng)) {
          const auto batch = make_batch(train, order);
          const auto r = loss_and_grad(local, batch,
                                       ObjectiveSpec::dcml_receiver(config.lambda, guest, variant));
          local = sgd_step(local, r.grad, config.eta);
          const auto s = loss_and_grad(guest, batch,
                                       ObjectiveSpec::dcml_sender(config.lambda, local, variant));
          guest = sgd_step(guest, s.grad, config.eta);
        }
      }
    }
    if (config.ablation.merging) {
      outcome.v_receiver = mean_jaccard(local, receiver.data.val);
      outcome.v_sender = mean_jaccard(guest, receiver.data.val);
      local = merge_models(local, guest, outcome.v_receiver, outcome.v_sender,
                           config.inverse_merge_weights);
    }
  } catch (const NumericError& e) {
    outcome.ok = false;
    outcome.event = "site " + std::to_string(receiver.id) + ": exchange aborted: " + e.what();
    receiver.rng = rng;
    return outcome;
  }
  receiver.params = std::move(local);
  receiver.rng = rng;
  return outcome;
}

ModelParams weighted_average(std::span<const ModelParams* const> models,
                             std::span<const double> weights) {
  if (models.empty() || models.size() != weights.size()) {
    throw Error("weighted_average: need one weight per model");
  }
  double total = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0)) throw Error("weighted_average: negative weight");
    total += w;
  }
  if (!(total > 0.0)) throw Error("weighted_average: weights sum to zero");
  ModelParams out = ModelParams::zeros(models.front()->arch);
  for (std::size_t m = 0; m < models.size(); ++m) {
    if (models[m]->weights.size() != out.weights.size()) {
      throw Error("weighted_average: architectures differ");
    }
    for (std::size_t i = 0; i < out.weights.size(); ++i) {
      out.weights[i] += weights[m] * models[m]->weights[i];
    }
  }
  for (double& w : out.weights) w /= total;
  return out;
}

SiteRoundMetrics evaluate_site(const SiteState& site) {
  SiteRoundMetrics m;
  m.site = site.id;
  m.available = site.available;
  m.test_cases = site.data.test.size();
  double hd = 0.0, as = 0.0;
  std::size_t defined = 0;
  for (const auto& c : site.data.test) {
    const CaseMetrics cm = evaluate_case(forward(site.params, c.image), c.labels);
    m.dsc += cm.dsc;
    if (cm.hd95) {
      hd += *cm.hd95;
      as += *cm.assd;
      ++defined;
    } else {
      ++m.undefined_surface;
    }
  }
  if (!site.data.test.empty()) m.dsc /= static_cast<double>(site.data.test.size());
  if (defined > 0) {
    m.hd95 = hd / static_cast<double>(defined);
    m.assd = as / static_cast<double>(defined);
  }
  m.val_jd = mean_jaccard(site.params, site.data.val);
  return m;
}

namespace {

void summarize(RoundRecord& record) {
  std::vector<std::pair<double, double>> dsc, hd, as;
  for (const auto& s : record.sites) {
    if (s.test_cases == 0) continue;
    const auto w = static_cast<double>(s.test_cases);
    dsc.emplace_back(s.dsc, w);
    if (s.hd95) hd.emplace_back(*s.hd95, w);
    if (s.assd) as.emplace_back(*s.assd, w);
  }
  if (!dsc.empty()) record.weighted_dsc = weighted_overall(dsc);
  if (!hd.empty()) record.weighted_hd95 = weighted_overall(hd);
  if (!as.empty()) record.weighted_assd = weighted_overall(as);
}

// Round loop state shared by all strategies.
class Federation {
 public:
  Federation(const StrategyConfig& config, std::vector<SiteState> sites,
             std::uint64_t master_seed, std::span<const AvailabilityEvent> availability)
      : config_(config),
        sites_(std::move(sites)),
        availability_(availability.begin(), availability.end()),
        scheduler_(site_ids(), stream_for(master_seed, StreamTag::kScheduler)
                                   .derive(config.scheduler_stream),
                   config.max_incoming),
        strategy_rng_(stream_for(master_seed, StreamTag::kStrategy)),
        bytes_per_model_(model_bytes(sites_.front().params.arch)) {
    for (auto& s : sites_) {
      if (!s.available) scheduler_.mark_availability(s.id, false, 0);
    }
    if (config_.strategy == Strategy::kPm) {
      pooled_.id = std::numeric_limits<SiteId>::max();
      pooled_.params = sites_.front().params;
      pooled_.rng = stream_for(master_seed, StreamTag::kPool);
      for (const auto& s : sites_) {
        pooled_.data.train.insert(pooled_.data.train.end(), s.data.train.begin(),
                                  s.data.train.end());
      }
    }
  }

  FederationResult run() {
    FederationResult result;
    result.initial = evaluate(0, false, 0, {});
    const int total = config_.warmup_rounds + config_.rounds;
    std::vector<double> train_loss(sites_.size(), kNaN);
    if (config_.strategy == Strategy::kFedPidAvgLite) init_pid();
    for (int t = 1; t <= total; ++t) {
      apply_availability(t, false);
      const bool warm = t <= config_.warmup_rounds;
      std::fill(train_loss.begin(), train_loss.end(), kNaN);
      local_phase(warm, train_loss);
      PairSchedule schedule;
      schedule.round = t;
      std::uint64_t transfers = 0;
      if (!warm) transfers = exchange_phase(t, schedule);
      else apply_availability(t, true);
      for (auto& line : schedule_trace(schedule)) result.schedule_log.push_back(std::move(line));
      comm_cum_ += transfers * bytes_per_model_;
      RoundRecord rec = evaluate(t, warm, transfers * bytes_per_model_, train_loss);
      rec.schedule = std::move(schedule);
      result.rounds.push_back(std::move(rec));
    }
    result.sites = std::move(sites_);
    result.events = events_;
    for (const auto& e : scheduler_.events()) result.events.push_back(e);
    return result;
  }

 private:
  std::vector<SiteId> site_ids() const {
    std::vector<SiteId> ids;
    for (const auto& s : sites_) ids.push_back(s.id);
    return ids;
  }

  SiteState& site(SiteId id) {
    for (auto& s : sites_) {
      if (s.id == id) return s;
    }
    throw Error("unknown site " + std::to_string(id));
  }

  std::vector<std::size_t> available_indices() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < sites_.size(); ++i) {
      if (sites_[i].available) out.push_back(i);
    }
    return out;
  }

  // Applies this round's events of the requested kind. Mid-round departures
  // also strip the affected pairs from `schedule`.
  void apply_availability(int round, bool mid_round, PairSchedule* schedule = nullptr) {
    for (const auto& ev : availability_) {
      if (ev.round != round || ev.mid_round != mid_round) continue;
      SiteState& s = site(ev.site);
      if (mid_round && !ev.available && schedule != nullptr && s.available) {
        scheduler_.depart_mid_round(*schedule, ev.site);
      } else {
        scheduler_.mark_availability(ev.site, ev.available, round);
      }
      s.available = ev.available;
    }
  }

  void local_phase(bool warm, std::vector<double>& train_loss) {
    const int epochs = config_.local_epochs;
    if (config_.strategy == Strategy::kPm) {
      const double loss = local_update(pooled_, epochs, config_.eta, config_.batch_size);
      for (auto& s : sites_) s.params = pooled_.params;
      std::fill(train_loss.begin(), train_loss.end(), loss);
      return;
    }
    const auto active = available_indices();
    if (is_centralized(config_.strategy) && global_) {
      for (auto i : active) sites_[i].params = *global_;
    }
    const bool prox = config_.strategy == Strategy::kFedProx && !warm;
    detail::parallel_for(active.size(), config_.threads, [&](std::size_t k) {
      SiteState& s = sites_[active[k]];
      if (prox) {
        const ModelParams anchor = s.params;
        train_loss[active[k]] = local_update(s, epochs, config_.eta, config_.batch_size,
                                             ObjectiveSpec::fedprox(config_.mu, anchor));
      } else {
        train_loss[active[k]] = local_update(s, epochs, config_.eta, config_.batch_size);
      }
    });
    if (config_.strategy == Strategy::kFedPidAvgLite) {
      for (auto i : active) record_pid_loss(i, train_loss[i]);
    }
  }

  std::uint64_t exchange_phase(int round, PairSchedule& schedule) {
    switch (config_.strategy) {
      case Strategy::kIm:
      case Strategy::kPm:
        apply_availability(round, true);
        return 0;
      case Strategy::kGcml:
        return gossip_round(round, schedule);
      case Strategy::kProxyDml:
        return ring_round(round, schedule);
      case Strategy::kFedAvg:
      case Strategy::kFedProx:
      case Strategy::kFedPidAvgLite:
        apply_availability(round, true);
        return aggregate_round(round);
      case Strategy::kBrainTorrent:
        apply_availability(round, true);
        return brain_torrent_round(round);
    }
    return 0;
  }

  std::uint64_t gossip_round(int round, PairSchedule& schedule) {
    const auto up = scheduler_.available_sites();
    if (up.size() < 2) {
      events_.push_back("round " + std::to_string(round) + ": fewer than two sites available, no exchange");
      apply_availability(round, true);
      return 0;
    }
    const int capacity = static_cast<int>(up.size()) * config_.max_incoming;
    const int pairs = config_.num_pairs > 0 ? std::min(config_.num_pairs, capacity)
                                            : static_cast<int>((up.size() + 1) / 2);
    schedule = scheduler_.next_round(round, pairs);
    apply_availability(round, true, &schedule);
    run_exchanges(schedule, config_);
    return schedule.pairs.size();
  }

  std::uint64_t ring_round(int round, PairSchedule& schedule) {
    apply_availability(round, true);
    const auto active = available_indices();
    if (active.size() < 2) return 0;
    for (std::size_t k = 0; k < active.size(); ++k) {
      const auto& from = sites_[active[k]];
      const auto& to = sites_[active[(k + 1) % active.size()]];
      schedule.pairs.push_back({from.id, to.id});
    }
    StrategyConfig dml = config_;
    dml.ablation = {false, false, false, true};
    run_exchanges(schedule, dml);
    return schedule.pairs.size();
  }

  void run_exchanges(const PairSchedule& schedule, const StrategyConfig& config) {
    // Senders transmit their post-local-update models.
    std::map<SiteId, ModelParams> sent;
    std::vector<SiteId> receivers;
    for (const auto& p : schedule.pairs) {
      sent.try_emplace(p.sender, site(p.sender).params);
      if (std::find(receivers.begin(), receivers.end(), p.receiver) == receivers.end()) {
        receivers.push_back(p.receiver);
      }
    }
    std::vector<std::vector<std::string>> notes(receivers.size());
    detail::parallel_for(receivers.size(), config.threads, [&](std::size_t k) {
      SiteState& r = site(receivers[k]);
      for (SiteId sender : schedule.incoming(r.id)) {
        const auto outcome = dcml_exchange(r, sent.at(sender), config);
        if (!outcome.ok) {
          notes[k].push_back("round " + std::to_string(schedule.round) + ": " + outcome.event);
        }
      }
    });
    for (auto& n : notes) {
      for (auto& e : n) events_.push_back(std::move(e));
    }
  }

  std::uint64_t aggregate_round(int round) {
    const auto active = available_indices();
    if (active.empty()) {
      events_.push_back("round " + std::to_string(round) + ": no sites available to aggregate");
      return 0;
    }
    std::vector<const ModelParams*> models;
    std::vector<double> weights;
    for (auto i : active) {
      models.push_back(&sites_[i].params);
      weights.push_back(static_cast<double>(sites_[i].data.train.size()));
    }
    if (config_.strategy == Strategy::kFedPidAvgLite) weights = pid_weights(active);
    global_ = weighted_average(models, weights);
    for (auto i : active) sites_[i].params = *global_;
    return transfers_per_round(config_.strategy, active.size(), 0);
  }

  std::uint64_t brain_torrent_round(int round) {
    const auto active = available_indices();
    if (active.size() < 2) {
      events_.push_back("round " + std::to_string(round) + ": fewer than two sites available, no exchange");
      return 0;
    }
    const auto chosen = active[strategy_rng_.next_below(active.size())];
    std::vector<const ModelParams*> models;
    std::vector<double> weights;
    for (auto i : active) {
      models.push_back(&sites_[i].params);
      weights.push_back(static_cast<double>(sites_[i].data.train.size()));
    }
    ModelParams merged = weighted_average(models, weights);
    SiteState& target = sites_[chosen];
    target.params = std::move(merged);
    local_update(target, config_.bt_finetune_epochs, config_.eta, config_.batch_size);
    return transfers_per_round(config_.strategy, active.size(), 0);
  }

  // FedPIDAvg-style weights: sample share, positive loss-decrease share and
  // the share of the recent loss integral, mixed 0.45 / 0.45 / 0.1.
  void init_pid() {
    pid_prev_.assign(sites_.size(), 0.0);
    pid_decrease_.assign(sites_.size(), 0.0);
    pid_history_.assign(sites_.size(), {});
    for (std::size_t i = 0; i < sites_.size(); ++i) {
      pid_prev_[i] = mean_jaccard(sites_[i].params, sites_[i].data.train);
    }
  }

  void record_pid_loss(std::size_t i, double loss) {
    pid_decrease_[i] = std::max(pid_prev_[i] - loss, 0.0);
    pid_prev_[i] = loss;
    auto& h = pid_history_[i];
    h.push_back(loss);
    if (h.size() > 5) h.pop_front();
  }

  std::vector<double> pid_weights(const std::vector<std::size_t>& active) const {
    double n_total = 0.0, d_total = 0.0, i_total = 0.0;
    std::vector<double> n(active.size()), d(active.size()), integ(active.size());
    for (std::size_t k = 0; k < active.size(); ++k) {
      const auto i = active[k];
      n[k] = static_cast<double>(sites_[i].data.train.size());
      d[k] = pid_decrease_[i];
      integ[k] = std::accumulate(pid_history_[i].begin(), pid_history_[i].end(), 0.0);
      n_total += n[k];
      d_total += d[k];
      i_total += integ[k];
    }
    std::vector<double> w(active.size());
    for (std::size_t k = 0; k < active.size(); ++k) {
      const double ns = n[k] / n_total;
      const double ds = d_total > 0.0 ? d[k] / d_total : ns;
      const double is = i_total > 0.0 ? integ[k] / i_total : ns;
      w[k] = 0.45 * ns + 0.45 * ds + 0.1 * is;
    }
    return w;
  }

  RoundRecord evaluate(int round, bool warm, std::uint64_t bytes,
                       const std::vector<double>& train_loss) {
    RoundRecord rec;
    rec.round = round;
    rec.warmup = warm;
    rec.comm_bytes = bytes;
    rec.comm_bytes_cum = comm_cum_;
    rec.sites.resize(sites_.size());
    detail::parallel_for(sites_.size(), config_.threads, [&](std::size_t i) {
      rec.sites[i] = evaluate_site(sites_[i]);
      rec.sites[i].train_loss = train_loss.empty() ? kNaN : train_loss[i];
    });
    summarize(rec);
    return rec;
  }

  StrategyConfig config_;
  std::vector<SiteState> sites_;
  std::vector<AvailabilityEvent> availability_;
  GossipScheduler scheduler_;
  RngStream strategy_rng_;
  std::uint64_t bytes_per_model_;
  std::uint64_t comm_cum_ = 0;
  std::optional<ModelParams> global_;
  SiteState pooled_;
  std::vector<double> pid_prev_, pid_decrease_;
  std::vector<std::deque<double>> pid_history_;
  std::vector<std::string> events_;
};

}  // namespace

FederationResult run_federation(const StrategyConfig& config, std::vector<SiteState> sites,
                                std::uint64_t master_seed,
                                std::span<const AvailabilityEvent> availability) {
  config.validate();
  if (sites.empty()) throw Error("run_federation: no sites");
  const ArchSpec arch = sites.front().params.arch;
  bool any = false;
  for (const auto& s : sites) {
    s.params.validate();
    if (!(s.params.arch == arch)) throw Error("run_federation: sites use different architectures");
    if (s.data.train.empty()) {
      throw Error("run_federation: site " + std::to_string(s.id) + " has no training cases");
    }
    any = any || s.available;
  }
  if (!any) throw Error("run_federation: no available sites");
  for (const auto& ev : availability) {
    if (std::none_of(sites.begin(), sites.end(), [&](const SiteState& s) { return s.id == ev.site; })) {
      throw Error("run_federation: availability event for unknown site " + std::to_string(ev.site));
    }
  }
  return Federation(config, std::move(sites), master_seed, availability).run();
}

std::string format_float(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

void write_rounds_csv(std::ostream& out, std::span<const RoundRecord> rounds) {
  out << "round,site_id,dsc,hd95,assd,train_loss,val_jd,comm_bytes_cum\n";
  for (const auto& r : rounds) {
    for (const auto& s : r.sites) {
      out << r.round << ',' << s.site << ',' << format_float(s.dsc) << ','
          << format_float(s.hd95.value_or(kNaN)) << ',' << format_float(s.assd.value_or(kNaN))
          << ',' << format_float(s.train_loss) << ',' << format_float(s.val_jd) << ','
          << r.comm_bytes_cum << '\n';
    }
  }
}

RngStream stream_for(std::uint64_t master_seed, StreamTag tag, std::uint64_t index) {
  return RngStream(master_seed, static_cast<std::uint64_t>(tag)).derive(index);
}

std::vector<std::vector<Case>> generate_datasets(const std::vector<SiteSpec>& specs,
                                                 std::uint64_t master_seed) {
  std::vector<std::vector<Case>> out;
  for (const auto& spec : specs) {
    RngStream rng = stream_for(master_seed, StreamTag::kData, spec.site_id);
    out.push_back(generate_site(spec, rng));
  }
  return out;
}

std::vector<SiteState> make_sites(const std::vector<std::vector<Case>>& datasets,
                                  const ArchSpec& arch, std::uint64_t master_seed) {
  arch.validate();
  std::vector<SiteState> sites;
  for (std::size_t i = 0; i < datasets.size(); ++i) {
    SiteState s;
    s.id = static_cast<SiteId>(i);
    RngStream split_rng = stream_for(master_seed, StreamTag::kSplit, s.id);
    s.data = split_cases(datasets[i], split_rng);
    for (const auto* part : {&s.data.train, &s.data.val, &s.data.test}) {
      for (const auto& c : *part) {
        if (c.labels.num_classes() != arch.num_classes) {
          throw Error("make_sites: site " + std::to_string(i) + " has " +
                      std::to_string(c.labels.num_classes()) + " classes, model expects " +
                      std::to_string(arch.num_classes));
        }
      }
    }
    RngStream init_rng = stream_for(master_seed, StreamTag::kInit, s.id);
    s.params = ModelParams::random_init(arch, init_rng);
    s.rng = stream_for(master_seed, StreamTag::kTrain, s.id);
    sites.push_back(std::move(s));
  }
  return sites;
}

}  // namespace gcml
