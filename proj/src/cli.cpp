#include "gcml/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <set>
#include <sstream>

#include "gcml/selfcheck.hpp"
#include "parallel.hpp"

namespace gcml {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

std::string join_path(const std::string& parent, const std::string& key) {
  return parent.empty() ? key : parent + "." + key;
}

[[noreturn]] void field_error(const std::string& path, const std::string& what) {
  throw ConfigError("config field '" + path + "': " + what);
}

void reject_unknown(const json& obj, const std::string& path,
                    std::initializer_list<std::string_view> allowed) {
  if (!obj.is_object()) field_error(path.empty() ? "<root>" : path, "expected an object");
  for (const auto& [key, value] : obj.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      field_error(join_path(path, key), "unknown field");
    }
  }
}

void read(const json& obj, const std::string& path, const char* key, bool& dst) {
  if (!obj.contains(key)) return;
  const auto& v = obj.at(key);
  if (!v.is_boolean()) field_error(join_path(path, key), "expected true or false");
  dst = v.get<bool>();
}

void read(const json& obj, const std::string& path, const char* key, int& dst) {
  if (!obj.contains(key)) return;
  const auto& v = obj.at(key);
  if (!v.is_number_integer()) field_error(join_path(path, key), "expected an integer");
  const auto x = v.get<std::int64_t>();
  if (x < std::numeric_limits<int>::min() || x > std::numeric_limits<int>::max()) {
    field_error(join_path(path, key), "integer out of range");
  }
  dst = static_cast<int>(x);
}

void read(const json& obj, const std::string& path, const char* key, std::uint64_t& dst) {
  if (!obj.contains(key)) return;
  const auto& v = obj.at(key);
  if (!v.is_number_unsigned()) field_error(join_path(path, key), "expected a non-negative integer");
  dst = v.get<std::uint64_t>();
}

void read(const json& obj, const std::string& path, const char* key, double& dst) {
  if (!obj.contains(key)) return;
  const auto& v = obj.at(key);
  if (!v.is_number()) field_error(join_path(path, key), "expected a number");
  dst = v.get<double>();
}

void read(const json& obj, const std::string& path, const char* key, std::string& dst) {
  if (!obj.contains(key)) return;
  const auto& v = obj.at(key);
  if (!v.is_string()) field_error(join_path(path, key), "expected a string");
  dst = v.get<std::string>();
}

void read(const json& obj, const std::string& path, const char* key, std::vector<int>& dst) {
  if (!obj.contains(key)) return;
  const auto& v = obj.at(key);
  const auto p = join_path(path, key);
  if (!v.is_array()) field_error(p, "expected an array of integers");
  dst.clear();
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!v[i].is_number_integer()) field_error(p + "[" + std::to_string(i) + "]", "expected an integer");
    dst.push_back(v[i].get<int>());
  }
}

std::string valid_strategy_names() {
  std::string names;
  for (Strategy s : all_strategies()) {
    if (!names.empty()) names += ", ";
    names += strategy_name(s);
  }
  return names;
}

Strategy strategy_from(const std::string& name, const std::string& path) {
  if (auto s = parse_strategy(name)) return *s;
  const std::string msg = "unknown strategy '" + name + "' (valid: " + valid_strategy_names() + ")";
  if (path.empty()) throw Error(msg);
  field_error(path, msg);
}

SiteSpec parse_site(const json& j, const std::string& path, SiteId fallback_id) {
  reject_unknown(j, path, {"site_id", "n_cases", "height", "width", "min_blobs", "max_blobs",
                           "min_radius", "max_radius", "fg_mean", "fg_std", "bg_mean", "bg_std",
                           "noise_std", "num_classes"});
  SiteSpec s;
  s.site_id = fallback_id;
  int id = static_cast<int>(fallback_id);
  read(j, path, "site_id", id);
  if (id < 0) field_error(join_path(path, "site_id"), "must be >= 0");
  s.site_id = static_cast<SiteId>(id);
  read(j, path, "n_cases", s.n_cases);
  read(j, path, "height", s.height);
  read(j, path, "width", s.width);
  read(j, path, "min_blobs", s.min_blobs);
  read(j, path, "max_blobs", s.max_blobs);
  read(j, path, "min_radius", s.min_radius);
  read(j, path, "max_radius", s.max_radius);
  read(j, path, "fg_mean", s.fg_mean);
  read(j, path, "fg_std", s.fg_std);
  read(j, path, "bg_mean", s.bg_mean);
  read(j, path, "bg_std", s.bg_std);
  read(j, path, "noise_std", s.noise_std);
  read(j, path, "num_classes", s.num_classes);
  try {
    s.validate();
  } catch (const Error& e) {
    field_error(path, e.what());
  }
  return s;
}

void parse_strategy_block(const json& j, StrategyConfig& c) {
  const std::string path = "strategy";
  reject_unknown(j, path, {"name", "lambda", "eta", "batch_size", "local_epochs", "dcml_epochs",
                           "rounds", "warmup_rounds", "num_pairs", "max_incoming", "mu",
                           "bt_finetune_epochs", "kappa", "ablation", "inverse_merge_weights",
                           "detach_region_weights", "scheduler_stream", "threads"});
  std::string name;
  read(j, path, "name", name);
  if (!name.empty()) c.strategy = strategy_from(name, "strategy.name");
  read(j, path, "lambda", c.lambda);
  read(j, path, "eta", c.eta);
  read(j, path, "batch_size", c.batch_size);
  read(j, path, "local_epochs", c.local_epochs);
  read(j, path, "dcml_epochs", c.dcml_epochs);
  read(j, path, "rounds", c.rounds);
  read(j, path, "warmup_rounds", c.warmup_rounds);
  read(j, path, "num_pairs", c.num_pairs);
  read(j, path, "max_incoming", c.max_incoming);
  read(j, path, "mu", c.mu);
  read(j, path, "bt_finetune_epochs", c.bt_finetune_epochs);
  read(j, path, "kappa", c.kappa);
  read(j, path, "inverse_merge_weights", c.inverse_merge_weights);
  read(j, path, "detach_region_weights", c.detach_region_weights);
  read(j, path, "scheduler_stream", c.scheduler_stream);
  read(j, path, "threads", c.threads);
  if (j.contains("ablation")) {
    const auto& a = j.at("ablation");
    const std::string ap = "strategy.ablation";
    reject_unknown(a, ap, {"contrast", "regional", "merging", "mutual_learning"});
    read(a, ap, "contrast", c.ablation.contrast);
    read(a, ap, "regional", c.ablation.regional);
    read(a, ap, "merging", c.ablation.merging);
    read(a, ap, "mutual_learning", c.ablation.mutual_learning);
  }
}

std::pair<std::size_t, std::size_t> line_col(const std::string& text, std::size_t byte) {
  std::size_t line = 1, col = 1;
  for (std::size_t i = 0; i + 1 < byte && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return {line, col};
}

}  // namespace

RunConfig parse_config(const std::string& text, const fs::path& base_dir) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    const auto [line, col] = line_col(text, e.byte);
    throw ConfigError("config syntax error at line " + std::to_string(line) + ", column " +
                      std::to_string(col) + ": " + e.what());
  }
  reject_unknown(root, "", {"master_seed", "data", "arch", "strategy", "availability", "out",
                            "compare", "sweeps"});
  RunConfig c;
  read(root, "", "master_seed", c.master_seed);
  std::string out;
  read(root, "", "out", out);
  if (!out.empty()) c.out_dir = out;

  if (root.contains("data")) {
    const auto& d = root.at("data");
    if (d.is_string()) {
      if (d.get<std::string>() != "default") field_error("data", "expected \"default\" or an object");
    } else {
      reject_unknown(d, "data", {"sites", "nseg"});
      if (d.contains("sites") == d.contains("nseg")) {
        field_error("data", "give exactly one of 'sites' or 'nseg'");
      }
      if (d.contains("sites")) {
        const auto& sites = d.at("sites");
        if (!sites.is_array() || sites.empty()) field_error("data.sites", "expected a non-empty array");
        c.data.kind = DataSource::Kind::kSites;
        std::set<SiteId> seen;
        for (std::size_t i = 0; i < sites.size(); ++i) {
          const auto p = "data.sites[" + std::to_string(i) + "]";
          c.data.sites.push_back(parse_site(sites[i], p, static_cast<SiteId>(i)));
          if (!seen.insert(c.data.sites.back().site_id).second) field_error(p, "duplicate site_id");
        }
      } else {
        const auto& files = d.at("nseg");
        if (!files.is_array() || files.empty()) field_error("data.nseg", "expected a non-empty array");
        c.data.kind = DataSource::Kind::kNseg;
        for (std::size_t i = 0; i < files.size(); ++i) {
          if (!files[i].is_string()) {
            field_error("data.nseg[" + std::to_string(i) + "]", "expected a path string");
          }
          fs::path p = files[i].get<std::string>();
          c.data.nseg_files.push_back(p.is_relative() ? base_dir / p : p);
        }
      }
    }
  }

  if (root.contains("arch")) {
    const auto& a = root.at("arch");
    reject_unknown(a, "arch", {"patch_radius", "hidden_width", "num_classes"});
    read(a, "arch", "patch_radius", c.arch.patch_radius);
    read(a, "arch", "hidden_width", c.arch.hidden_width);
    read(a, "arch", "num_classes", c.arch.num_classes);
    try {
      c.arch.validate();
    } catch (const Error& e) {
      field_error("arch", e.what());
    }
  }

  if (root.contains("strategy")) parse_strategy_block(root.at("strategy"), c.strategy);
  try {
    c.strategy.validate();
  } catch (const Error& e) {
    field_error("strategy", e.what());
  }

  if (root.contains("availability")) {
    const auto& events = root.at("availability");
    if (!events.is_array()) field_error("availability", "expected an array");
    for (std::size_t i = 0; i < events.size(); ++i) {
      const auto p = "availability[" + std::to_string(i) + "]";
      reject_unknown(events[i], p, {"round", "site", "available", "mid_round"});
      if (!events[i].contains("round") || !events[i].contains("site")) {
        field_error(p, "needs 'round' and 'site'");
      }
      AvailabilityEvent ev;
      int site = 0;
      read(events[i], p, "round", ev.round);
      read(events[i], p, "site", site);
      read(events[i], p, "available", ev.available);
      read(events[i], p, "mid_round", ev.mid_round);
      if (site < 0) field_error(p + ".site", "must be >= 0");
      if (ev.round < 1) field_error(p + ".round", "must be >= 1");
      ev.site = static_cast<SiteId>(site);
      c.availability.push_back(ev);
    }
  }

  if (root.contains("compare")) {
    const auto& cmp = root.at("compare");
    reject_unknown(cmp, "compare", {"strategies"});
    if (cmp.contains("strategies")) {
      const auto& names = cmp.at("strategies");
      if (!names.is_array()) field_error("compare.strategies", "expected an array of names");
      for (std::size_t i = 0; i < names.size(); ++i) {
        const auto p = "compare.strategies[" + std::to_string(i) + "]";
        if (!names[i].is_string()) field_error(p, "expected a strategy name");
        c.compare_strategies.push_back(strategy_from(names[i].get<std::string>(), p));
      }
    }
  }

  if (root.contains("sweeps")) {
    const auto& s = root.at("sweeps");
    reject_unknown(s, "sweeps", {"seed_trials", "warmup", "pairs"});
    read(s, "sweeps", "seed_trials", c.seed_trials);
    read(s, "sweeps", "warmup", c.warmup_list);
    read(s, "sweeps", "pairs", c.pair_list);
  }
  return c;
}

RunConfig load_config(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.parent_path());
}

Benchmark build_benchmark(const RunConfig& config) {
  Benchmark b;
  b.master_seed = config.master_seed;
  b.arch = config.arch;
  b.availability = config.availability;
  switch (config.data.kind) {
    case DataSource::Kind::kDefault:
      b.datasets = generate_datasets(default_benchmark_sites(), config.master_seed);
      break;
    case DataSource::Kind::kSites:
      b.datasets = generate_datasets(config.data.sites, config.master_seed);
      break;
    case DataSource::Kind::kNseg:
      for (const auto& p : config.data.nseg_files) b.datasets.push_back(load_dataset(p));
      break;
  }
  return b;
}

int effective_threads(int configured) {
  const int requested = detail::resolve_threads(configured);
  const char* env = std::getenv("GCML_SIM_THREADS");
  if (env == nullptr || *env == '\0') return requested;
  char* end = nullptr;
  const long cap = std::strtol(env, &end, 10);
  if (end == env || *end != '\0' || cap < 0) {
    throw ConfigError("GCML_SIM_THREADS must be a non-negative integer, got '" + std::string(env) + "'");
  }
  return std::min(requested, detail::resolve_threads(static_cast<int>(cap)));
}

namespace {

std::string fmt(double v, int precision = 4) {
  if (std::isnan(v)) return "nan";
  std::ostringstream os;
  os << std::fixed << std::setprecision(precision) << v;
  return os.str();
}

std::string fmt(const std::optional<double>& v, int precision = 4) {
  return v ? fmt(*v, precision) : "nan";
}

void write_text_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << content;
  if (!out) throw Error("write failed for " + path.string());
}

void write_lines(const fs::path& path, const std::vector<std::string>& lines) {
  std::string content;
  for (const auto& l : lines) content += l + "\n";
  write_text_file(path, content);
}

void prepare_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw Error("output directory not writable: " + dir.string());
}

// Aligned plain-text table.
std::string text_table(const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> width;
  for (const auto& r : rows) {
    width.resize(std::max(width.size(), r.size()), 0);
    for (std::size_t i = 0; i < r.size(); ++i) width[i] = std::max(width[i], r[i].size());
  }
  std::string out;
  for (const auto& r : rows) {
    std::ostringstream line;
    for (std::size_t i = 0; i < r.size(); ++i) {
      line << (i == 0 ? "" : "  ") << std::left << std::setw(static_cast<int>(width[i])) << r[i];
    }
    std::string text = line.str();
    text.erase(text.find_last_not_of(' ') + 1);
    out += text + "\n";
  }
  return out;
}

std::string csv(const std::vector<std::vector<std::string>>& rows) {
  std::string out;
  for (const auto& r : rows) {
    for (std::size_t i = 0; i < r.size(); ++i) out += (i == 0 ? "" : ",") + r[i];
    out += "\n";
  }
  return out;
}

std::uint64_t total_comm(const FederationResult& r) {
  return r.rounds.empty() ? 0 : r.rounds.back().comm_bytes_cum;
}

const RoundRecord& final_record(const FederationResult& r) {
  return r.rounds.empty() ? r.initial : r.rounds.back();
}

std::string summary_text(const RunConfig& config, const StrategyConfig& sc,
                         const FederationResult& r) {
  std::ostringstream os;
  os << "strategy " << strategy_name(sc.strategy) << "\n"
     << "master_seed " << config.master_seed << "\n"
     << "warmup_rounds " << sc.warmup_rounds << "\n"
     << "rounds " << sc.rounds << "\n\n";
  std::vector<std::vector<std::string>> rows{{"site", "test_cases", "dsc", "hd95", "assd", "undefined_surface"}};
  const auto& last = final_record(r);
  for (const auto& s : last.sites) {
    rows.push_back({std::to_string(s.site), std::to_string(s.test_cases), fmt(s.dsc), fmt(s.hd95),
                    fmt(s.assd), std::to_string(s.undefined_surface)});
  }
  rows.push_back({"weighted", "", fmt(last.weighted_dsc), fmt(last.weighted_hd95),
                  fmt(last.weighted_assd), ""});
  os << text_table(rows) << "\ncomm_bytes_total " << total_comm(r) << "\n";
  return os.str();
}

struct Overrides {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> strategy;
  std::optional<int> rounds, num_pairs, warmup_rounds, batch_size, local_epochs, dcml_epochs,
      max_incoming, bt_finetune_epochs, threads;
  std::optional<double> lambda, eta, mu, kappa;
  std::optional<std::string> out;
};

RunConfig resolve(const Overrides& o) {
  RunConfig c = o.config.empty() ? RunConfig{} : load_config(o.config);
  auto& s = c.strategy;
  if (o.seed) c.master_seed = *o.seed;
  if (o.strategy) s.strategy = strategy_from(*o.strategy, "");
  if (o.rounds) s.rounds = *o.rounds;
  if (o.num_pairs) s.num_pairs = *o.num_pairs;
  if (o.warmup_rounds) s.warmup_rounds = *o.warmup_rounds;
  if (o.batch_size) s.batch_size = *o.batch_size;
  if (o.local_epochs) s.local_epochs = *o.local_epochs;
  if (o.dcml_epochs) s.dcml_epochs = *o.dcml_epochs;
  if (o.max_incoming) s.max_incoming = *o.max_incoming;
  if (o.bt_finetune_epochs) s.bt_finetune_epochs = *o.bt_finetune_epochs;
  if (o.threads) s.threads = *o.threads;
  if (o.lambda) s.lambda = *o.lambda;
  if (o.eta) s.eta = *o.eta;
  if (o.mu) s.mu = *o.mu;
  if (o.kappa) s.kappa = *o.kappa;
  if (o.out) c.out_dir = *o.out;
  try {
    s.validate();
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  s.threads = effective_threads(s.threads);
  return c;
}

int report_cells(const std::vector<CellResult>& cells, std::ostream& err) {
  int failed = 0;
  for (const auto& c : cells) {
    if (!c.ok()) {
      err << "cell '" << c.label << "' failed: " << c.error << "\n";
      ++failed;
    }
  }
  return failed == 0 ? 0 : 1;
}

int cmd_run(const RunConfig& config, std::ostream& out) {
  prepare_dir(config.out_dir);
  const Benchmark bench = build_benchmark(config);
  const FederationResult r = bench.run(config.strategy);
  std::ostringstream rounds;
  std::vector<RoundRecord> all{r.initial};
  all.insert(all.end(), r.rounds.begin(), r.rounds.end());
  write_rounds_csv(rounds, all);
  write_text_file(config.out_dir / "rounds.csv", rounds.str());
  write_lines(config.out_dir / "schedule.log", r.schedule_log);
  write_lines(config.out_dir / "events.log", r.events);
  const std::string summary = summary_text(config, config.strategy, r);
  write_text_file(config.out_dir / "summary.txt", summary);
  out << summary;
  return 0;
}

int cmd_compare(const RunConfig& config, std::ostream& out, std::ostream& err) {
  std::vector<Strategy> strategies = config.compare_strategies;
  if (strategies.empty()) strategies = all_strategies();
  prepare_dir(config.out_dir);
  const Benchmark bench = build_benchmark(config);
  const auto cells = run_comparison(bench, config.strategy, strategies, config.strategy.threads);
  std::vector<std::vector<std::string>> rows{
      {"strategy", "site_id", "dsc", "hd95", "assd", "round0_dsc", "comm_bytes_total"}};
  for (const auto& c : cells) {
    if (!c.ok()) {
      rows.push_back({c.label, "error", "", "", "", "", ""});
      continue;
    }
    const auto& last = final_record(*c.result);
    const auto& init = c.result->initial;
    for (std::size_t i = 0; i < last.sites.size(); ++i) {
      const auto& s = last.sites[i];
      rows.push_back({c.label, std::to_string(s.site), fmt(s.dsc), fmt(s.hd95), fmt(s.assd),
                      fmt(init.sites[i].dsc), std::to_string(total_comm(*c.result))});
    }
    rows.push_back({c.label, "weighted", fmt(last.weighted_dsc), fmt(last.weighted_hd95),
                    fmt(last.weighted_assd), fmt(init.weighted_dsc),
                    std::to_string(total_comm(*c.result))});
    const fs::path sub = config.out_dir / c.label;
    prepare_dir(sub);
    std::ostringstream rounds;
    std::vector<RoundRecord> all{c.result->initial};
    all.insert(all.end(), c.result->rounds.begin(), c.result->rounds.end());
    write_rounds_csv(rounds, all);
    write_text_file(sub / "rounds.csv", rounds.str());
    write_lines(sub / "schedule.log", c.result->schedule_log);
  }
  write_text_file(config.out_dir / "compare.csv", csv(rows));
  const std::string table = text_table(rows);
  write_text_file(config.out_dir / "compare.txt", table);
  out << table;
  return report_cells(cells, err);
}

int cmd_ablate(const RunConfig& config, std::ostream& out, std::ostream& err) {
  prepare_dir(config.out_dir);
  const Benchmark bench = build_benchmark(config);
  const auto cells = run_ablation(bench, config.strategy, config.strategy.threads);
  std::vector<std::vector<std::string>> rows{{"cell", "mutual_learning", "contrast", "regional",
                                              "merging", "dsc", "hd95", "assd", "comm_bytes_total"}};
  auto flag = [](bool b) { return std::string(b ? "1" : "0"); };
  for (const auto& c : cells) {
    const auto& a = c.config.ablation;
    std::vector<std::string> row{c.label, flag(a.mutual_learning), flag(a.contrast),
                                 flag(a.regional), flag(a.merging)};
    if (c.ok()) {
      const auto& last = final_record(*c.result);
      row.insert(row.end(), {fmt(last.weighted_dsc), fmt(last.weighted_hd95),
                             fmt(last.weighted_assd), std::to_string(total_comm(*c.result))});
    } else {
      row.insert(row.end(), {"error", "", "", ""});
    }
    rows.push_back(std::move(row));
  }
  write_text_file(config.out_dir / "ablation.csv", csv(rows));
  const std::string table = text_table(rows);
  write_text_file(config.out_dir / "ablation.txt", table);
  out << table;
  return report_cells(cells, err);
}

int cmd_seedstudy(const RunConfig& config, int trials, std::ostream& out, std::ostream& err) {
  prepare_dir(config.out_dir);
  prepare_dir(config.out_dir / "schedules");
  const Benchmark bench = build_benchmark(config);
  const SeedStudy study = run_seed_study(bench, config.strategy, trials, config.strategy.threads);
  std::vector<std::vector<std::string>> rows{{"trial", "scheduler_stream", "dsc"}};
  for (std::size_t i = 0; i < study.trials.size(); ++i) {
    const auto& t = study.trials[i];
    rows.push_back({std::to_string(i + 1), std::to_string(study.streams[i]),
                    t.ok() ? fmt(t.final_dsc()) : "error"});
    if (t.ok()) {
      write_lines(config.out_dir / "schedules" / ("trial_" + std::to_string(i + 1) + ".log"),
                  t.result->schedule_log);
    }
  }
  rows.push_back({"mean", "", fmt(study.mean)});
  rows.push_back({"std", "", fmt(study.stddev)});
  write_text_file(config.out_dir / "seedstudy.csv", csv(rows));
  const std::string table = text_table(rows);
  write_text_file(config.out_dir / "seedstudy.txt", table);
  out << table;
  return report_cells(study.trials, err);
}

int cmd_sweep(const RunConfig& config, const std::string& kind, std::vector<int> values,
              std::ostream& out, std::ostream& err) {
  if (kind != "warmup" && kind != "pairs") throw ConfigError("sweep kind must be 'warmup' or 'pairs'");
  if (values.empty()) values = kind == "warmup" ? config.warmup_list : config.pair_list;
  if (values.empty()) throw ConfigError("sweep: no values given");
  prepare_dir(config.out_dir);
  const Benchmark bench = build_benchmark(config);
  const auto cells = kind == "warmup"
                         ? run_warmup_sweep(bench, config.strategy, values, config.strategy.threads)
                         : run_pair_sweep(bench, config.strategy, values, config.strategy.threads);
  std::vector<std::vector<std::string>> rows{{kind, "warmup_rounds", "rounds", "num_pairs", "dsc",
                                              "hd95", "assd", "comm_bytes_total"}};
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const auto& c = cells[i];
    std::vector<std::string> row{std::to_string(values[i]), std::to_string(c.config.warmup_rounds),
                                 std::to_string(c.config.rounds), std::to_string(c.config.num_pairs)};
    if (c.ok()) {
      const auto& last = final_record(*c.result);
      row.insert(row.end(), {fmt(last.weighted_dsc), fmt(last.weighted_hd95),
                             fmt(last.weighted_assd), std::to_string(total_comm(*c.result))});
    } else {
      row.insert(row.end(), {"error", "", "", ""});
    }
    rows.push_back(std::move(row));
  }
  write_text_file(config.out_dir / ("sweep_" + kind + ".csv"), csv(rows));
  const std::string table = text_table(rows);
  write_text_file(config.out_dir / ("sweep_" + kind + ".txt"), table);
  out << table;
  return report_cells(cells, err);
}

int cmd_gen_data(const RunConfig& config, std::ostream& out) {
  prepare_dir(config.out_dir);
  const Benchmark bench = build_benchmark(config);
  for (std::size_t i = 0; i < bench.datasets.size(); ++i) {
    const fs::path p = config.out_dir / ("site_" + std::to_string(i) + ".nseg");
    save_dataset(p, bench.datasets[i]);
    out << p.string() << " " << bench.datasets[i].size() << " cases\n";
  }
  return 0;
}

int cmd_check(std::uint64_t seed, int instances, std::ostream& out) {
  bool all = true;
  for (const auto& line : run_self_checks(seed, instances)) {
    out << (line.passed ? "PASS " : "FAIL ") << line.name;
    if (!line.detail.empty()) out << " (" << line.detail << ")";
    out << "\n";
    all = all && line.passed;
  }
  return all ? 0 : 1;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Gossip contrastive mutual learning simulator"};
  app.fallthrough();
  app.require_subcommand(1);
  Overrides o;
  app.add_option("--config", o.config, "JSON config file");
  app.add_option("--seed", o.seed, "master seed");
  app.add_option("--strategy", o.strategy, "strategy name");
  app.add_option("--rounds", o.rounds, "exchange rounds after warmup");
  app.add_option("--num-pairs", o.num_pairs, "gossip pairs per round (0 = auto)");
  app.add_option("--warmup-rounds", o.warmup_rounds);
  app.add_option("--batch-size", o.batch_size);
  app.add_option("--local-epochs", o.local_epochs);
  app.add_option("--dcml-epochs", o.dcml_epochs);
  app.add_option("--max-incoming", o.max_incoming);
  app.add_option("--bt-finetune-epochs", o.bt_finetune_epochs);
  app.add_option("--threads", o.threads);
  app.add_option("--lambda", o.lambda);
  app.add_option("--eta", o.eta);
  app.add_option("--mu", o.mu);
  app.add_option("--kappa", o.kappa);
  app.add_option("--out", o.out, "output directory");

  auto* run = app.add_subcommand("run", "run one strategy");
  auto* compare = app.add_subcommand("compare", "compare strategies on shared data and init");
  std::vector<std::string> strategy_names;
  compare->add_option("--strategies", strategy_names, "strategy names (default: all)");
  auto* ablate = app.add_subcommand("ablate", "ablation lattice of the exchange components");
  auto* seedstudy = app.add_subcommand("seedstudy", "vary only the scheduler stream");
  std::optional<int> trials;
  seedstudy->add_option("--trials", trials, "number of trials");
  auto* sweep = app.add_subcommand("sweep", "warmup or pair-count sweep");
  std::string sweep_kind;
  std::vector<int> sweep_values;
  sweep->add_option("kind", sweep_kind, "warmup | pairs")->required();
  sweep->add_option("--values", sweep_values, "sweep values");
  auto* gen = app.add_subcommand("gen-data", "write the configured datasets as NSEG files");
  auto* check = app.add_subcommand("check", "gradient and loss-identity self-tests");
  int instances = 20;
  check->add_option("--instances", instances, "random instances per check");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  try {
    if (check->parsed()) return cmd_check(o.seed.value_or(1), instances, out);
    RunConfig config = resolve(o);
    if (run->parsed()) return cmd_run(config, out);
    if (compare->parsed()) {
      if (!strategy_names.empty()) {
        config.compare_strategies.clear();
        for (const auto& n : strategy_names) config.compare_strategies.push_back(strategy_from(n, ""));
      }
      const auto n = config.compare_strategies.empty() ? all_strategies().size()
                                                       : config.compare_strategies.size();
      if (n < 2) throw ConfigError("compare needs at least two strategies");
      return cmd_compare(config, out, err);
    }
    if (ablate->parsed()) return cmd_ablate(config, out, err);
    if (seedstudy->parsed()) return cmd_seedstudy(config, trials.value_or(config.seed_trials), out, err);
    if (sweep->parsed()) return cmd_sweep(config, sweep_kind, sweep_values, out, err);
    if (gen->parsed()) return cmd_gen_data(config, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}

}  // namespace gcml
