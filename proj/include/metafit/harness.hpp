#pragma once

// Experiment drivers behind the command-line tool: configuration, task
// generation, training, fitting, ablations and domain-shift runs. Every
// driver writes CSV/JSON into `cfg.out` and is deterministic per seed.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "metafit/adaptive_optimizer.hpp"
#include "metafit/body_model.hpp"
#include "metafit/camera_energy.hpp"
#include "metafit/error.hpp"
#include "metafit/meta_trainer.hpp"
#include "metafit/metrics.hpp"
#include "metafit/synth_tasks.hpp"

namespace metafit {

struct ExperimentConfig {
  std::uint64_t seed = 0;
  std::string out = "out";
  std::string tree_path;        // empty: built-in tree
  std::string tasks_path;       // fit / train input
  std::string heldout_path;     // train: held-out tasks (empty: last 20% of tasks)
  std::string checkpoint_path;  // fit: regressor checkpoint

  std::string profile = "clean";  // gen-tasks
  int count = 100;

  std::string source_domain = "clean";  // ablate, domain-shift
  std::string target_domain = "hard";
  int train_count = 500;
  int test_count = 100;

  bool enable_meta = true;
  bool enable_caching = true;
  bool enable_adaptive_updates = true;

  EnergyConfig energy;
  OptimizerConfig optimizer;
  MetaConfig meta;

  void validate() const {
    energy.validate();
    optimizer.validate();
    meta.validate();
    require(count >= 1 && train_count >= 1 && test_count >= 1, ErrorCode::InvalidConfig,
            "config: counts must be at least 1");
    builtin_profile(profile);
    builtin_profile(source_domain);
    builtin_profile(target_domain);
  }

  /// Optimizer settings with the ablation flags applied.
  OptimizerConfig refinement() const {
    OptimizerConfig o = optimizer;
    o.caching = enable_caching;
    o.adaptive_updates = enable_adaptive_updates;
    return o;
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used == v.size()) return d;
  } catch (const std::exception&) {
  }
  fail(ErrorCode::InvalidConfig, "config: '" + key + "' expects a number, got '" + v + "'");
}

inline long long parse_int(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const long long i = std::stoll(v, &used);
    if (used == v.size()) return i;
  } catch (const std::exception&) {
  }
  fail(ErrorCode::InvalidConfig, "config: '" + key + "' expects an integer, got '" + v + "'");
}

inline std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    if (!v.empty() && v[0] != '-') {
      const unsigned long long u = std::stoull(v, &used, 0);
      if (used == v.size()) return u;
    }
  } catch (const std::exception&) {
  }
  fail(ErrorCode::InvalidConfig, "config: '" + key + "' expects an unsigned integer, got '" + v + "'");
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "on" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "off" || v == "no") return false;
  fail(ErrorCode::InvalidConfig, "config: '" + key + "' expects true/false, got '" + v + "'");
}

inline int parse_count(const std::string& key, const std::string& v) {
  const long long i = parse_int(key, v);
  require(i >= 0 && i <= 100'000'000, ErrorCode::InvalidConfig, "config: '" + key + "' out of range");
  return static_cast<int>(i);
}

}  // namespace detail

/// Applies one `key = value` setting. Keys are flat, with dotted groups for the
/// energy (`energy.*`), optimizer (`optimizer.*`) and meta-training (`meta.*`) settings.
inline void apply_setting(ExperimentConfig& cfg, const std::string& raw_key, const std::string& raw_value) {
  using namespace detail;
  const std::string key = trim(raw_key);
  std::string v = trim(raw_value);
  if (v.size() >= 2 && (v.front() == '"' || v.front() == '\'') && v.back() == v.front()) v = v.substr(1, v.size() - 2);

  auto& o = cfg.optimizer;
  auto& m = cfg.meta;
  const std::map<std::string, std::function<void()>> setters = {
      {"seed", [&] { cfg.seed = parse_u64(key, v); }},
      {"out", [&] { cfg.out = v; }},
      {"tree", [&] { cfg.tree_path = v; }},
      {"tasks", [&] { cfg.tasks_path = v; }},
      {"heldout", [&] { cfg.heldout_path = v; }},
      {"checkpoint", [&] { cfg.checkpoint_path = v; }},
      {"profile", [&] { cfg.profile = v; }},
      {"count", [&] { cfg.count = parse_count(key, v); }},
      {"source_domain", [&] { cfg.source_domain = v; }},
      {"target_domain", [&] { cfg.target_domain = v; }},
      {"train_count", [&] { cfg.train_count = parse_count(key, v); }},
      {"test_count", [&] { cfg.test_count = parse_count(key, v); }},
      {"enable_meta", [&] { cfg.enable_meta = parse_bool(key, v); }},
      {"enable_caching", [&] { cfg.enable_caching = parse_bool(key, v); }},
      {"enable_adaptive_updates", [&] { cfg.enable_adaptive_updates = parse_bool(key, v); }},
      {"energy.lambda_pose", [&] { cfg.energy.lambda_pose = parse_double(key, v); }},
      {"energy.lambda_shape", [&] { cfg.energy.lambda_shape = parse_double(key, v); }},
      {"optimizer.alpha_base", [&] { o.alpha_base = parse_double(key, v); }},
      {"optimizer.gamma", [&] { o.gamma = parse_double(key, v); }},
      {"optimizer.epsilon_conv", [&] { o.epsilon_conv = parse_double(key, v); }},
      {"optimizer.kappa", [&] { o.kappa = parse_double(key, v); }},
      {"optimizer.epsilon_var", [&] { o.epsilon_var = parse_double(key, v); }},
      {"optimizer.sigma_min", [&] { o.sigma_min = parse_double(key, v); }},
      {"optimizer.sigma_max", [&] { o.sigma_max = parse_double(key, v); }},
      {"optimizer.beta_mu", [&] { o.beta_mu = parse_double(key, v); }},
      {"optimizer.beta_sigma", [&] { o.beta_sigma = parse_double(key, v); }},
      {"optimizer.max_iters", [&] { o.max_iters = parse_count(key, v); }},
      {"optimizer.success_window", [&] { o.success_window = parse_count(key, v); }},
      {"optimizer.delta", [&] { o.delta = parse_double(key, v); }},
      {"optimizer.neutral_success_fill", [&] { o.neutral_success_fill = parse_bool(key, v); }},
      {"optimizer.stop_on_small_update", [&] { o.stop_on_small_update = parse_bool(key, v); }},
      {"optimizer.refine_shape", [&] { o.refine_shape = parse_bool(key, v); }},
      {"optimizer.fixed_sigma",
       [&] {
         if (v == "none" || v.empty()) {
           o.fixed_sigma.reset();
         } else {
           o.fixed_sigma = parse_double(key, v);
         }
       }},
      {"optimizer.gradient_mode",
       [&] {
         if (v == "analytic") o.gradient_mode = GradientMode::Analytic;
         else if (v == "coordinate") o.gradient_mode = GradientMode::Coordinate;
         else if (v == "simultaneous") o.gradient_mode = GradientMode::Simultaneous;
         else fail(ErrorCode::InvalidConfig, "config: unknown gradient_mode '" + v + "'");
       }},
      {"optimizer.success_attribution",
       [&] {
         if (v == "global") o.success_attribution = SuccessAttribution::Global;
         else if (v == "per-parameter") o.success_attribution = SuccessAttribution::PerParameter;
         else fail(ErrorCode::InvalidConfig, "config: unknown success_attribution '" + v + "'");
       }},
      {"meta.inner_steps", [&] { m.inner_steps = parse_count(key, v); }},
      {"meta.outer_lr", [&] { m.outer_lr = parse_double(key, v); }},
      {"meta.intermediate_weight", [&] { m.intermediate_weight = parse_double(key, v); }},
      {"meta.intermediate_decay", [&] { m.intermediate_decay = parse_double(key, v); }},
      {"meta.batch_size", [&] { m.batch_size = parse_count(key, v); }},
      {"meta.epochs", [&] { m.epochs = parse_count(key, v); }},
      {"meta.optimizer",
       [&] {
         if (v == "sgd") m.optimizer = OuterOptimizer::Sgd;
         else if (v == "adam") m.optimizer = OuterOptimizer::Adam;
         else fail(ErrorCode::InvalidConfig, "config: unknown meta.optimizer '" + v + "'");
       }},
  };
  const auto it = setters.find(key);
  if (it == setters.end()) fail(ErrorCode::InvalidConfig, "config: unknown key '" + key + "'");
  it->second();
}

/// `key=value` as given to --set.
inline void apply_override(ExperimentConfig& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  require(eq != std::string::npos && eq > 0, ErrorCode::InvalidConfig,
          "override '" + assignment + "' is not of the form key=value");
  apply_setting(cfg, assignment.substr(0, eq), assignment.substr(eq + 1));
}

/// Flat TOML-style text: `key = value` lines, `#` comments, optional
/// `[group]` headers that prefix the following keys with `group.`.
inline void apply_config_text(ExperimentConfig& cfg, const std::string& text) {
  std::istringstream in(text);
  std::vector<CLI::ConfigItem> items;
  try {
    items = CLI::ConfigTOML().from_config(in);
  } catch (const CLI::Error& e) {
    fail(ErrorCode::InvalidConfig, std::string("config: ") + e.what());
  }
  for (const auto& item : items) {
    if (item.name == "++" || item.name == "--") continue;  // section markers
    require(item.inputs.size() <= 1, ErrorCode::InvalidConfig, "config: '" + item.fullname() + "' has several values");
    apply_setting(cfg, item.fullname(), item.inputs.empty() ? "" : item.inputs.front());
  }
}

inline void load_config_file(ExperimentConfig& cfg, const std::string& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorCode::Io, "cannot open config '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  apply_config_text(cfg, buf.str());
}

// Output helpers -------------------------------------------------------------

inline std::string fmt_num(double v) {
  require(std::isfinite(v), ErrorCode::NumericOverflow, "non-finite value in CSV output");
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, const std::string& header) : path_(path.string()) {
    out_.open(path, std::ios::binary);
    require(static_cast<bool>(out_), ErrorCode::Io, "cannot open '" + path_ + "' for writing");
    out_ << header << '\n';
  }

  template <typename... Cells>
  void row(const Cells&... cells) {
    std::string line;
    ((line += cell(cells), line += ','), ...);
    line.pop_back();
    out_ << line << '\n';
    require(static_cast<bool>(out_), ErrorCode::Io, "failed writing '" + path_ + "'");
  }

 private:
  static std::string cell(const std::string& s) { return s; }
  static std::string cell(const char* s) { return s; }
  static std::string cell(double v) { return fmt_num(v); }
  static std::string cell(int v) { return std::to_string(v); }
  static std::string cell(bool v) { return v ? "true" : "false"; }

  std::string path_;
  std::ofstream out_;
};

inline std::filesystem::path prepare_out(const ExperimentConfig& cfg) {
  std::error_code ec;
  std::filesystem::create_directories(cfg.out, ec);
  require(!ec && std::filesystem::is_directory(cfg.out), ErrorCode::Io, "cannot create output directory '" + cfg.out + "'");
  return cfg.out;
}

inline KinematicTree load_tree(const ExperimentConfig& cfg) {
  if (cfg.tree_path.empty()) return default_tree();
  std::ifstream in(cfg.tree_path);
  require(static_cast<bool>(in), ErrorCode::Io, "cannot open tree '" + cfg.tree_path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::InvalidInput, "'" + cfg.tree_path + "': " + e.what());
  }
  return tree_from_json(j);
}

inline std::vector<TaskRecord> load_tasks(const std::string& path, const KinematicTree& tree) {
  require(!path.empty(), ErrorCode::InvalidConfig, "no task file given (set 'tasks')");
  auto tasks = read_tasks(path);
  require(!tasks.empty(), ErrorCode::InvalidInput, "'" + path + "' holds no tasks");
  for (const auto& t : tasks) {
    check_dims(tree, t.gt);
    check_obs(tree, t.obs);
  }
  return tasks;
}

inline double median(std::vector<double> v) {
  require(!v.empty(), ErrorCode::InvalidInput, "median of an empty set");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

inline double mean(const std::vector<double>& v) {
  require(!v.empty(), ErrorCode::InvalidInput, "mean of an empty set");
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

// Records --------------------------------------------------------------------

/// One refined task as reported by the drivers.
struct RunRecord {
  int task_id = 0;
  std::vector<IterationRecord> trace;  // t = 0 (initial state) first
  double mpjpe = 0.0;
  double pa_mpjpe = 0.0;
  double mean_final_sigma = 0.0;
  int iterations = 0;
  StopReason stop_reason = StopReason::MaxIters;
  double wall_seconds = 0.0;
};

inline RunRecord to_run_record(const EvalRecord& e, double wall_seconds) {
  RunRecord r;
  r.task_id = e.task_id;
  r.trace.push_back(e.refinement.initial);
  r.trace.insert(r.trace.end(), e.refinement.trace.begin(), e.refinement.trace.end());
  r.mpjpe = e.mpjpe;
  r.pa_mpjpe = e.pa_mpjpe;
  r.mean_final_sigma = e.refinement.mean_final_sigma();
  r.iterations = e.refinement.iterations_used;
  r.stop_reason = e.refinement.stop_reason;
  r.wall_seconds = wall_seconds;
  return r;
}

/// Refines every task from the regressor's prediction, in task order.
inline std::vector<RunRecord> fit_tasks(const KinematicTree& tree, const Regressor& reg,
                                        const std::vector<TaskRecord>& tasks, const EnergyConfig& ecfg,
                                        const OptimizerConfig& ocfg, std::uint64_t seed) {
  std::vector<RunRecord> out;
  out.reserve(tasks.size());
  for (const auto& t : tasks) {
    const auto start = std::chrono::steady_clock::now();
    const EvalRecord e = evaluate_task(tree, regress(reg, t.obs), t, ecfg, ocfg, seed);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    out.push_back(to_run_record(e, secs));
  }
  return out;
}

inline int count_diverged(const std::vector<RunRecord>& records) {
  return static_cast<int>(std::count_if(records.begin(), records.end(),
                                        [](const RunRecord& r) { return r.stop_reason == StopReason::Diverged; }));
}

inline void write_fit_csvs(const std::filesystem::path& dir, const std::vector<RunRecord>& records) {
  CsvWriter trace(dir / "trace.csv", "task_id,t,energy,mean_sigma,active_count,update_norm");
  CsvWriter summary(dir / "summary.csv", "task_id,mpjpe,pa_mpjpe,mean_final_sigma,iterations,stop_reason");
  for (const auto& r : records) {
    for (const auto& it : r.trace) trace.row(r.task_id, it.t, it.energy, it.mean_sigma, it.active_count, it.update_norm);
    summary.row(r.task_id, r.mpjpe, r.pa_mpjpe, r.mean_final_sigma, r.iterations, to_string(r.stop_reason));
  }
}

// Drivers --------------------------------------------------------------------

inline constexpr std::uint64_t kRegressorInitSalt = 0x72656772ULL;
inline constexpr std::uint64_t kDatasetSalt = 0x64617461ULL;

struct CommandResult {
  int diverged_tasks = 0;
  std::string message;
};

/// Writes tasks.jsonl (and the tree used) for `profile` x `count`.
inline CommandResult run_gen_tasks(const ExperimentConfig& cfg) {
  cfg.validate();
  const auto dir = prepare_out(cfg);
  const KinematicTree tree = load_tree(cfg);
  const auto tasks = generate_dataset(tree, builtin_profile(cfg.profile), cfg.count, cfg.seed);
  write_tasks((dir / "tasks.jsonl").string(), tasks);
  std::ofstream tree_out(dir / "tree.json", std::ios::binary);
  require(static_cast<bool>(tree_out), ErrorCode::Io, "cannot write tree.json");
  tree_out << to_json(tree).dump() << '\n';
  return {0, "wrote " + std::to_string(tasks.size()) + " tasks"};
}

inline Regressor initial_regressor(const KinematicTree& tree, std::uint64_t seed) {
  return Regressor::random(tree.joint_count(), mix_seed(seed, kRegressorInitSalt));
}

/// Meta-training settings for a run; without meta the inner loop is dropped.
inline MetaConfig meta_settings(const ExperimentConfig& cfg, bool meta) {
  MetaConfig m = cfg.meta;
  m.seed = cfg.seed;
  if (!meta) m.inner_steps = 0;
  return m;
}

/// Trains from tasks (held-out set from `heldout` or the last 20% of tasks).
/// The checkpoint is rewritten after every epoch, so a divergence leaves the
/// last good one on disk before the error propagates.
inline CommandResult run_train(const ExperimentConfig& cfg) {
  cfg.validate();
  const auto dir = prepare_out(cfg);
  const KinematicTree tree = load_tree(cfg);
  auto tasks = load_tasks(cfg.tasks_path, tree);
  std::vector<TaskRecord> heldout;
  if (!cfg.heldout_path.empty()) {
    heldout = load_tasks(cfg.heldout_path, tree);
  } else {
    const std::size_t keep = std::max<std::size_t>(1, tasks.size() - tasks.size() / 5);
    heldout.assign(tasks.begin() + static_cast<std::ptrdiff_t>(keep), tasks.end());
    tasks.resize(keep);
  }
  const MetaConfig mcfg = meta_settings(cfg, cfg.enable_meta);
  const OptimizerConfig ocfg = cfg.refinement();
  const std::string ckpt = (dir / "checkpoint.json").string();
  const Regressor init = initial_regressor(tree, cfg.seed);
  save_checkpoint(ckpt, init, cfg.seed, 0);

  CsvWriter curve(dir / "curve.csv", "epoch,mean_final_loss,mean_heldout_mpjpe");
  meta_train(tree, init, tasks, heldout, cfg.energy, ocfg, mcfg, [&](const CurvePoint& p, const Regressor& reg) {
    curve.row(p.epoch, p.mean_final_loss, p.mean_heldout_mpjpe);
    save_checkpoint(ckpt, reg, cfg.seed, p.epoch);
  });
  return {0, "trained " + std::to_string(mcfg.epochs) + " epochs"};
}

/// Refines tasks from the checkpoint's predictions and writes trace/summary CSVs.
inline CommandResult run_fit(const ExperimentConfig& cfg) {
  cfg.validate();
  require(!cfg.checkpoint_path.empty(), ErrorCode::InvalidConfig, "fit needs a checkpoint (set 'checkpoint')");
  const auto dir = prepare_out(cfg);
  const KinematicTree tree = load_tree(cfg);
  const auto tasks = load_tasks(cfg.tasks_path, tree);
  const Checkpoint ckpt = load_checkpoint(cfg.checkpoint_path);
  require(ckpt.regressor.joints() == tree.joint_count(), ErrorCode::InvalidInput,
          "checkpoint joint count does not match the tree");
  const auto records = fit_tasks(tree, ckpt.regressor, tasks, cfg.energy, cfg.refinement(), cfg.seed);
  write_fit_csvs(dir, records);
  const int diverged = count_diverged(records);
  return {diverged, "fitted " + std::to_string(records.size()) + " tasks, " + std::to_string(diverged) + " diverged"};
}

/// Regressors trained with and without the inner loop on the same data.
struct TrainedPair {
  Regressor meta;
  Regressor no_meta;
};

inline TrainedPair train_pair(const KinematicTree& tree, const std::vector<TaskRecord>& train,
                              const ExperimentConfig& cfg) {
  const Regressor init = initial_regressor(tree, cfg.seed);
  const OptimizerConfig full = cfg.optimizer;
  return {meta_train(tree, init, train, {}, cfg.energy, full, meta_settings(cfg, true)).regressor,
          meta_train(tree, init, train, {}, cfg.energy, full, meta_settings(cfg, false)).regressor};
}

struct VariantScore {
  double mean_mpjpe = 0.0;
  double mean_pa_mpjpe = 0.0;
  double median_mpjpe = 0.0;
  int diverged = 0;
};

inline VariantScore score(const std::vector<RunRecord>& records) {
  std::vector<double> e;
  std::vector<double> pa;
  for (const auto& r : records) {
    e.push_back(r.mpjpe);
    pa.push_back(r.pa_mpjpe);
  }
  return {mean(e), mean(pa), median(e), count_diverged(records)};
}

struct AblationRow {
  std::string variant;
  bool meta = true;
  bool caching = true;
  bool adaptive = true;
  std::string sigma_strategy = "adaptive";
  int max_iters = 15;
  VariantScore result;
};

/// Suite for ablate/domain-shift: train and test sets from the source domain,
/// plus a target-domain test set.
struct Suite {
  std::vector<TaskRecord> train;
  std::vector<TaskRecord> source_test;
  std::vector<TaskRecord> target_test;
};

inline Suite make_suite(const KinematicTree& tree, const ExperimentConfig& cfg) {
  const std::uint64_t base = mix_seed(cfg.seed, kDatasetSalt);
  auto [train, test] = domain_pair(tree, builtin_profile(cfg.source_domain), builtin_profile(cfg.source_domain),
                                   {cfg.train_count, cfg.test_count}, base);
  // The target test set shares the source test stream so both see the same poses.
  auto target = domain_pair(tree, builtin_profile(cfg.source_domain), builtin_profile(cfg.target_domain),
                            {1, cfg.test_count}, base)
                    .second;
  return {std::move(train), std::move(test), std::move(target)};
}

/// 2x2x2 flag grid over {meta, caching, adaptive updates}, then the variance
/// study: fixed sigma 0.01 / 0.05 and adaptive sigma at step budgets 5 and 15.
inline std::vector<AblationRow> ablation_rows(const KinematicTree& tree, const Suite& suite,
                                              const ExperimentConfig& cfg, const TrainedPair& regs) {
  std::vector<AblationRow> rows;
  for (bool meta : {false, true}) {
    for (bool caching : {false, true}) {
      for (bool adaptive : {false, true}) {
        AblationRow row;
        row.variant = std::string(meta ? "meta" : "no-meta") + (caching ? "+caching" : "") + (adaptive ? "+adaptive" : "");
        row.meta = meta;
        row.caching = caching;
        row.adaptive = adaptive;
        OptimizerConfig o = cfg.optimizer;
        o.caching = caching;
        o.adaptive_updates = adaptive;
        row.max_iters = o.max_iters;
        row.result = score(fit_tasks(tree, meta ? regs.meta : regs.no_meta, suite.source_test, cfg.energy, o, cfg.seed));
        rows.push_back(row);
      }
    }
  }
  for (int budget : {5, 15}) {
    for (const char* strategy : {"fixed-0.01", "fixed-0.05", "adaptive"}) {
      AblationRow row;
      row.variant = std::string("variance-") + strategy + "@" + std::to_string(budget);
      row.sigma_strategy = strategy;
      row.max_iters = budget;
      OptimizerConfig o = cfg.optimizer;
      o.max_iters = budget;
      if (std::string(strategy) == "fixed-0.01") o.fixed_sigma = 0.01;
      if (std::string(strategy) == "fixed-0.05") o.fixed_sigma = 0.05;
      row.result = score(fit_tasks(tree, regs.meta, suite.source_test, cfg.energy, o, cfg.seed));
      rows.push_back(row);
    }
  }
  return rows;
}

inline CommandResult run_ablation(const ExperimentConfig& cfg) {
  cfg.validate();
  const auto dir = prepare_out(cfg);
  const KinematicTree tree = load_tree(cfg);
  const Suite suite = make_suite(tree, cfg);
  const TrainedPair regs = train_pair(tree, suite.train, cfg);
  const auto rows = ablation_rows(tree, suite, cfg, regs);
  CsvWriter csv(dir / "ablation.csv",
                "variant,enable_meta,enable_caching,enable_adaptive_updates,sigma_strategy,max_iters,mean_mpjpe,"
                "mean_pa_mpjpe,median_mpjpe,diverged");
  int diverged = 0;
  for (const auto& r : rows) {
    csv.row(r.variant, r.meta, r.caching, r.adaptive, r.sigma_strategy, r.max_iters, r.result.mean_mpjpe,
            r.result.mean_pa_mpjpe, r.result.median_mpjpe, r.result.diverged);
    diverged += r.result.diverged;
  }
  return {diverged, "wrote " + std::to_string(rows.size()) + " ablation rows"};
}

struct ShiftRow {
  std::string variant;
  VariantScore source;
  VariantScore target;
};

inline std::vector<ShiftRow> domain_shift_rows(const KinematicTree& tree, const Suite& suite,
                                               const ExperimentConfig& cfg, const TrainedPair& regs) {
  struct Variant {
    const char* name;
    bool meta;
    bool adaptive;
  };
  std::vector<ShiftRow> rows;
  for (const Variant& v : {Variant{"full", true, true}, Variant{"no-meta", false, true},
                           Variant{"no-adaptive", true, false}}) {
    OptimizerConfig o = cfg.optimizer;
    o.adaptive_updates = v.adaptive;
    const Regressor& reg = v.meta ? regs.meta : regs.no_meta;
    rows.push_back({v.name, score(fit_tasks(tree, reg, suite.source_test, cfg.energy, o, cfg.seed)),
                    score(fit_tasks(tree, reg, suite.target_test, cfg.energy, o, cfg.seed))});
  }
  return rows;
}

inline CommandResult run_domain_shift(const ExperimentConfig& cfg) {
  cfg.validate();
  const auto dir = prepare_out(cfg);
  const KinematicTree tree = load_tree(cfg);
  const Suite suite = make_suite(tree, cfg);
  const TrainedPair regs = train_pair(tree, suite.train, cfg);
  CsvWriter csv(dir / "domain_shift.csv",
                "variant,source_domain,target_domain,source_mpjpe,target_mpjpe,delta_mpjpe,source_median_mpjpe,"
                "target_median_mpjpe,delta_median_mpjpe,diverged");
  int diverged = 0;
  for (const auto& r : domain_shift_rows(tree, suite, cfg, regs)) {
    csv.row(r.variant, cfg.source_domain, cfg.target_domain, r.source.mean_mpjpe, r.target.mean_mpjpe,
            r.target.mean_mpjpe - r.source.mean_mpjpe, r.source.median_mpjpe, r.target.median_mpjpe,
            r.target.median_mpjpe - r.source.median_mpjpe, r.source.diverged + r.target.diverged);
    diverged += r.source.diverged + r.target.diverged;
  }
  return {diverged, "wrote domain-shift rows"};
}

/// Process exit code for an error.
inline int exit_code(ErrorCode code) {
  switch (code) {
    case ErrorCode::Io: return 4;
    case ErrorCode::Diverged:
    case ErrorCode::TrainingDivergence:
    case ErrorCode::NumericOverflow: return 3;
    default: return 2;
  }
}

}  // namespace metafit
