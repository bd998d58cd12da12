#pragma once

// Experiment orchestration: a single JSON-configured experiment runs
// simulate -> weights -> train -> evaluate per seed, then aggregates
// cross-seed summaries. Failed seeds are recorded and skipped, never fatal
// to the others. Thread count is a runtime option, not part of the config,
// and never changes any output byte.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "cfeval/core.hpp"
#include "cfeval/estimators.hpp"
#include "cfeval/io.hpp"
#include "cfeval/propensity.hpp"
#include "cfeval/reward_model.hpp"
#include "cfeval/sim.hpp"

namespace cfeval::harness {

using nlohmann::json;

inline constexpr double kDefaultEstimatedClipCap = 20.0;

struct ExperimentConfig {
  sim::SimConfig sim;
  reward::TrainConfig train_proposed;
  reward::TrainConfig train_baseline;
  prop::RatioHyper ratio;
  prop::WeightMode weight_mode = prop::WeightMode::oracle;
  std::optional<double> clip_cap;
  std::vector<est::Method> methods{est::Method::proposed, est::Method::baseline,
                                   est::Method::ips};
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  std::vector<double> beta_grid{0.0, 0.5, 1.0, 2.0};
  double tau = est::kDefaultTau;
  bool ips_self_normalized = true;
  std::string output_dir = "cfeval_out";

  bool operator==(const ExperimentConfig&) const = default;
};

inline ExperimentConfig default_config() {
  ExperimentConfig cfg;
  cfg.train_proposed.weight_mode = reward::TrainMode::proposed;
  cfg.train_baseline.weight_mode = reward::TrainMode::baseline;
  return cfg;
}

inline std::vector<std::string> config_violations(const ExperimentConfig& cfg) {
  std::vector<std::string> out = sim::config_violations(cfg.sim);
  for (const auto& v : reward::config_violations(cfg.train_proposed)) {
    out.push_back("train.proposed: " + v);
  }
  for (const auto& v : reward::config_violations(cfg.train_baseline)) {
    out.push_back("train.baseline: " + v);
  }
  if (cfg.methods.empty()) out.push_back("at least one method is required");
  if (cfg.seeds.empty()) out.push_back("seeds must be nonempty");
  if (cfg.clip_cap && !(*cfg.clip_cap > 0.0)) out.push_back("clip_cap must be positive");
  if (!(cfg.tau > 0.0)) out.push_back("tau must be positive");
  return out;
}

namespace detail {

inline json train_to_json(const reward::TrainConfig& t) {
  return json{{"beta", t.beta},
              {"learning_rate", t.learning_rate},
              {"epochs", t.epochs},
              {"batch_size", t.batch_size},
              {"l2", t.l2},
              {"seed", t.seed},
              {"weight_mode", std::string(reward::train_mode_name(t.weight_mode))},
              {"overlap_floor", t.overlap_floor},
              {"kind", std::string(reward::model_kind_name(t.kind))},
              {"hidden", t.hidden}};
}

inline reward::TrainConfig train_from_json(const json& j, reward::TrainConfig base) {
  base.beta = j.value("beta", base.beta);
  base.learning_rate = j.value("learning_rate", base.learning_rate);
  base.epochs = j.value("epochs", base.epochs);
  base.batch_size = j.value("batch_size", base.batch_size);
  base.l2 = j.value("l2", base.l2);
  base.seed = j.value("seed", base.seed);
  base.overlap_floor = j.value("overlap_floor", base.overlap_floor);
  if (j.contains("kind")) {
    const std::string kind = j.at("kind").get<std::string>();
    if (kind != "linear" && kind != "mlp") {
      throw std::runtime_error("config: unknown model kind '" + kind + "'");
    }
    base.kind = kind == "mlp" ? reward::ModelKind::mlp : reward::ModelKind::linear;
  }
  base.hidden = j.value("hidden", base.hidden);
  return base;
}

}  // namespace detail

// Every default materialized, so the emitted copy fully describes the run.
inline json to_json(const ExperimentConfig& cfg) {
  json methods = json::array();
  for (est::Method m : cfg.methods) methods.push_back(std::string(est::method_name(m)));
  json j{{"sim",
          {{"d", cfg.sim.d},
           {"q", cfg.sim.q},
           {"inventory_size", cfg.sim.inventory_size},
           {"candidates_per_request", cfg.sim.candidates_per_request},
           {"n", cfg.sim.n},
           {"K", cfg.sim.K},
           {"alphas", cfg.sim.alphas},
           {"temperature", cfg.sim.temperature},
           {"seed", cfg.sim.seed},
           {"reward_mode", std::string(reward_mode_name(cfg.sim.reward_mode))},
           {"noise_sigma", cfg.sim.noise_sigma}}},
         {"train",
          {{"proposed", detail::train_to_json(cfg.train_proposed)},
           {"baseline", detail::train_to_json(cfg.train_baseline)}}},
         {"ratio",
          {{"learning_rate", cfg.ratio.learning_rate},
           {"epochs", cfg.ratio.epochs},
           {"batch_size", cfg.ratio.batch_size},
           {"l2", cfg.ratio.l2},
           {"seed", cfg.ratio.seed}}},
         {"weight_mode", std::string(prop::weight_mode_name(cfg.weight_mode))},
         {"methods", methods},
         {"seeds", cfg.seeds},
         {"beta_grid", cfg.beta_grid},
         {"tau", cfg.tau},
         {"ips_self_normalized", cfg.ips_self_normalized},
         {"output_dir", cfg.output_dir}};
  j["clip_cap"] = cfg.clip_cap ? json(*cfg.clip_cap) : json(nullptr);
  return j;
}

// Fills anything the document omits with defaults. clip_cap defaults by
// weight mode: 20 for estimated classifiers (odds can blow up), none for
// oracle ratios.
inline ExperimentConfig config_from_json(const json& j) {
  ExperimentConfig cfg = default_config();
  if (j.contains("sim")) {
    const json& s = j.at("sim");
    cfg.sim.d = s.value("d", cfg.sim.d);
    cfg.sim.q = s.value("q", cfg.sim.q);
    cfg.sim.inventory_size = s.value("inventory_size", cfg.sim.inventory_size);
    cfg.sim.candidates_per_request =
        s.value("candidates_per_request", cfg.sim.candidates_per_request);
    cfg.sim.n = s.value("n", cfg.sim.n);
    cfg.sim.K = s.value("K", cfg.sim.K);
    if (s.contains("alphas")) cfg.sim.alphas = s.at("alphas").get<std::vector<double>>();
    cfg.sim.temperature = s.value("temperature", cfg.sim.temperature);
    cfg.sim.seed = s.value("seed", cfg.sim.seed);
    if (s.contains("reward_mode")) {
      const std::string mode = s.at("reward_mode").get<std::string>();
      io::reward_mode_from_check(mode, "config sim");
      cfg.sim.reward_mode = mode == "gaussian" ? RewardMode::gaussian : RewardMode::bernoulli;
    }
    cfg.sim.noise_sigma = s.value("noise_sigma", cfg.sim.noise_sigma);
  }
  if (j.contains("train")) {
    const json& t = j.at("train");
    // Flat keys apply to both trainers; "proposed"/"baseline" blocks override.
    cfg.train_proposed = detail::train_from_json(t, cfg.train_proposed);
    cfg.train_baseline = detail::train_from_json(t, cfg.train_baseline);
    if (t.contains("proposed")) {
      cfg.train_proposed = detail::train_from_json(t.at("proposed"), cfg.train_proposed);
    }
    if (t.contains("baseline")) {
      cfg.train_baseline = detail::train_from_json(t.at("baseline"), cfg.train_baseline);
    }
  }
  cfg.train_proposed.weight_mode = reward::TrainMode::proposed;
  cfg.train_baseline.weight_mode = reward::TrainMode::baseline;
  if (j.contains("ratio")) {
    const json& r = j.at("ratio");
    cfg.ratio.learning_rate = r.value("learning_rate", cfg.ratio.learning_rate);
    cfg.ratio.epochs = r.value("epochs", cfg.ratio.epochs);
    cfg.ratio.batch_size = r.value("batch_size", cfg.ratio.batch_size);
    cfg.ratio.l2 = r.value("l2", cfg.ratio.l2);
    cfg.ratio.seed = r.value("seed", cfg.ratio.seed);
  }
  if (j.contains("weight_mode")) {
    const auto mode = prop::parse_weight_mode(j.at("weight_mode").get<std::string>());
    if (!mode) {
      throw std::runtime_error("config: unknown weight_mode '" +
                               j.at("weight_mode").get<std::string>() + "'");
    }
    cfg.weight_mode = *mode;
  }
  if (j.contains("clip_cap")) {
    cfg.clip_cap = j.at("clip_cap").is_null() ? std::nullopt
                                              : std::optional<double>(j.at("clip_cap").get<double>());
  } else if (cfg.weight_mode == prop::WeightMode::estimated) {
    cfg.clip_cap = kDefaultEstimatedClipCap;
  }
  if (j.contains("methods")) {
    cfg.methods.clear();
    for (const auto& m : j.at("methods")) {
      const auto parsed = est::parse_method(m.get<std::string>());
      if (!parsed) {
        throw std::runtime_error("config: unknown method '" + m.get<std::string>() + "'");
      }
      cfg.methods.push_back(*parsed);
    }
  }
  if (j.contains("seeds")) cfg.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
  if (j.contains("beta_grid")) cfg.beta_grid = j.at("beta_grid").get<std::vector<double>>();
  cfg.tau = j.value("tau", cfg.tau);
  cfg.ips_self_normalized = j.value("ips_self_normalized", cfg.ips_self_normalized);
  cfg.output_dir = j.value("output_dir", cfg.output_dir);
  return cfg;
}

inline std::string hash_of(const ExperimentConfig& cfg) { return io::config_hash(to_json(cfg)); }

inline sim::SimConfig sim_for_seed(const ExperimentConfig& cfg, std::uint64_t seed) {
  sim::SimConfig sc = cfg.sim;
  sc.seed = seed;
  return sc;
}

// Weights for one seed's bundle. All stage seeds derive from the run seed,
// so the config-level seed fields only matter for direct library calls.
inline prop::WeightTable compute_weights(const EvalBundle& bundle,
                                         const sim::PolicySet* policies,
                                         const ExperimentConfig& cfg, std::uint64_t seed,
                                         int threads,
                                         std::vector<std::optional<double>>* aucs_out = nullptr) {
  prop::WeightTable table;
  std::vector<std::optional<double>> aucs(static_cast<std::size_t>(bundle.meta.K));
  if (cfg.weight_mode == prop::WeightMode::oracle) {
    if (!policies) {
      throw std::invalid_argument("compute_weights: oracle mode needs the policy set");
    }
    table = prop::oracle_weights(bundle, policies->source, policies->targets, threads);
  } else {
    prop::RatioHyper hyper = cfg.ratio;
    hyper.seed = seed;
    std::vector<prop::DensityRatioModel> models;
    models.reserve(static_cast<std::size_t>(bundle.meta.K));
    for (int k = 1; k <= bundle.meta.K; ++k) {
      const auto& target_rows = bundle.targets[static_cast<std::size_t>(k - 1)];
      models.push_back(prop::fit_density_ratio(bundle.source, target_rows, hyper, k));
      aucs[static_cast<std::size_t>(k - 1)] =
          prop::classifier_auc(models.back(), bundle.source, target_rows);
    }
    table = prop::estimate_weights(models, bundle, threads);
  }
  if (cfg.clip_cap) table = prop::clip_weights(table, *cfg.clip_cap);
  if (aucs_out) *aucs_out = std::move(aucs);
  return table;
}

inline reward::RewardModel train_method(const EvalBundle& bundle,
                                        const prop::WeightTable& table,
                                        const ExperimentConfig& cfg, reward::TrainMode mode,
                                        std::uint64_t seed) {
  reward::TrainConfig tc =
      mode == reward::TrainMode::proposed ? cfg.train_proposed : cfg.train_baseline;
  tc.weight_mode = mode;
  tc.reward_mode = bundle.meta.reward_mode;
  tc.seed = seed;
  return reward::train(bundle.source, table, tc);
}

inline std::vector<est::LiftEstimate> estimates_for(const est::Method method,
                                                    const EvalBundle& bundle,
                                                    const prop::WeightTable& table,
                                                    const std::map<est::Method, reward::RewardModel>& models,
                                                    const ExperimentConfig& cfg) {
  std::vector<est::LiftEstimate> out;
  out.reserve(static_cast<std::size_t>(bundle.meta.K));
  for (int k = 1; k <= bundle.meta.K; ++k) {
    if (method == est::Method::ips) {
      out.push_back(est::estimate_lift_ips(bundle.source, table, k, cfg.ips_self_normalized));
    } else {
      out.push_back(est::estimate_lift_dm(models.at(method), bundle, k));
    }
  }
  return out;
}

struct SeedOutcome {
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  std::vector<est::RecoveryReport> reports;
};

// One full seed: simulate, weights, train, evaluate, artifacts on disk.
inline std::vector<est::RecoveryReport> run_seed(const ExperimentConfig& cfg, std::uint64_t seed,
                                                 int threads,
                                                 const std::filesystem::path& seed_dir,
                                                 const std::string& config_hash) {
  const sim::SimConfig sc = sim_for_seed(cfg, seed);
  const sim::RewardGroundTruth truth = sim::make_ground_truth(sc);
  const sim::PolicySet policies = sim::make_policies(sc, truth, threads);
  const EvalBundle bundle = sim::simulate(sc, truth, policies, threads);

  std::filesystem::create_directories(seed_dir);
  io::write_file(seed_dir / "manifest.json",
                 json{{"config_hash", config_hash}, {"seed", seed}}.dump(2) + "\n");
  io::save_bundle(bundle, seed_dir);
  io::save_truth(truth, seed_dir / "truth.json");
  io::save_policies(policies, seed_dir / "policies.json");

  std::vector<std::optional<double>> aucs;
  const prop::WeightTable table = compute_weights(bundle, &policies, cfg, seed, threads, &aucs);
  io::save_weights(table, seed_dir / "weights.jsonl");
  io::save_weights_report(table, prop::weight_diagnostics(table), aucs,
                          seed_dir / "weights_report.json");

  std::map<est::Method, reward::RewardModel> models;
  for (est::Method m : cfg.methods) {
    if (m == est::Method::ips) continue;
    const reward::TrainMode mode = m == est::Method::proposed ? reward::TrainMode::proposed
                                                              : reward::TrainMode::baseline;
    models.emplace(m, train_method(bundle, table, cfg, mode, seed));
    io::save_model(models.at(m), seed_dir / ("reward_model_" +
                                             std::string(est::method_name(m)) + ".json"));
  }

  const std::vector<double> lifts = est::exact_true_lifts(bundle, truth, policies, threads);
  std::vector<est::RecoveryReport> reports;
  for (est::Method m : cfg.methods) {
    reports.push_back(
        est::make_recovery_report(lifts, estimates_for(m, bundle, table, models, cfg), cfg.tau));
  }
  io::save_recovery_reports(reports, config_hash, seed, seed_dir / "recovery_report.json");
  return reports;
}

struct RunResult {
  std::string config_hash;
  std::vector<SeedOutcome> outcomes;
  std::vector<io::SummaryRow> summary_rows;
  std::vector<io::MethodSummary> method_summaries;
  std::optional<double> proposed_win_fraction;
  std::size_t eligible_seeds = 0;

  std::size_t failed() const {
    std::size_t f = 0;
    for (const auto& o : outcomes) f += o.ok ? 0 : 1;
    return f;
  }
};

namespace detail {

inline const est::RecoveryReport* report_for(const SeedOutcome& o, est::Method m) {
  for (const auto& r : o.reports) {
    if (r.method == m) return &r;
  }
  return nullptr;
}

}  // namespace detail

// Cross-seed aggregation: per-(method, seed) rows plus a "mean" row per
// method, and the fraction of eligible seeds where the proposed method's
// rec_cv is strictly lowest.
inline void summarize(const ExperimentConfig& cfg, RunResult& result) {
  for (est::Method m : cfg.methods) {
    io::MethodSummary ms;
    ms.method = std::string(est::method_name(m));
    est::RecAggregate mean_agg;
    double sum_cv = 0.0, sum_avg = 0.0, sum_mad = 0.0, sum_std = 0.0;
    std::size_t n_cv = 0, n_avg = 0;
    for (const SeedOutcome& o : result.outcomes) {
      if (!o.ok) continue;
      const est::RecoveryReport* r = detail::report_for(o, m);
      if (!r) continue;
      io::SummaryRow row;
      row.method = ms.method;
      row.seed = std::to_string(o.seed);
      row.agg = r->aggregate;
      result.summary_rows.push_back(std::move(row));
      if (r->aggregate.rec_cv) {
        sum_cv += *r->aggregate.rec_cv;
        ++n_cv;
        ms.seed_rec_cvs.push_back(*r->aggregate.rec_cv);
      }
      if (r->aggregate.rec_avg) {
        sum_avg += *r->aggregate.rec_avg;
        sum_mad += *r->aggregate.rec_dev_mad;
        sum_std += *r->aggregate.rec_dev_std;
        ++n_avg;
      }
    }
    if (n_cv) {
      mean_agg.rec_cv = sum_cv / static_cast<double>(n_cv);
      ms.mean_rec_cv = mean_agg.rec_cv;
    }
    if (n_avg) {
      mean_agg.rec_avg = sum_avg / static_cast<double>(n_avg);
      mean_agg.rec_dev_mad = sum_mad / static_cast<double>(n_avg);
      mean_agg.rec_dev_std = sum_std / static_cast<double>(n_avg);
    }
    io::SummaryRow mean_row;
    mean_row.method = ms.method;
    mean_row.seed = "mean";
    mean_row.agg = mean_agg;
    result.summary_rows.push_back(std::move(mean_row));
    result.method_summaries.push_back(std::move(ms));
  }

  const bool has_proposed =
      std::find(cfg.methods.begin(), cfg.methods.end(), est::Method::proposed) !=
      cfg.methods.end();
  if (has_proposed && cfg.methods.size() >= 2) {
    std::size_t eligible = 0;
    std::size_t wins = 0;
    for (const SeedOutcome& o : result.outcomes) {
      if (!o.ok) continue;
      bool all_defined = true;
      std::optional<double> proposed_cv;
      double best_other = std::numeric_limits<double>::infinity();
      for (est::Method m : cfg.methods) {
        const est::RecoveryReport* r = detail::report_for(o, m);
        if (!r || !r->aggregate.rec_cv) {
          all_defined = false;
          break;
        }
        if (m == est::Method::proposed) {
          proposed_cv = *r->aggregate.rec_cv;
        } else {
          best_other = std::min(best_other, *r->aggregate.rec_cv);
        }
      }
      if (!all_defined) continue;
      ++eligible;
      if (proposed_cv && *proposed_cv < best_other) ++wins;
    }
    result.eligible_seeds = eligible;
    if (eligible) {
      result.proposed_win_fraction = static_cast<double>(wins) / static_cast<double>(eligible);
    }
  }
}

inline void write_summary_artifacts(const ExperimentConfig& cfg, const RunResult& result) {
  const std::filesystem::path out(cfg.output_dir);
  std::filesystem::create_directories(out);
  io::write_file(out / "config.json", to_json(cfg).dump(2) + "\n");
  io::write_file(out / "summary.csv", io::summary_csv(result.summary_rows));
  io::write_file(out / "comparison.svg", io::comparison_svg(result.method_summaries));

  json methods = json::object();
  for (const auto& ms : result.method_summaries) {
    methods[ms.method] = json{
        {"mean_rec_cv", ms.mean_rec_cv ? json(*ms.mean_rec_cv) : json(nullptr)},
        {"defined_seeds", ms.seed_rec_cvs.size()}};
  }
  json failed = json::array();
  for (const auto& o : result.outcomes) {
    if (!o.ok) failed.push_back(json{{"seed", o.seed}, {"error", o.error}});
  }
  const json j{{"config_hash", result.config_hash},
               {"methods", methods},
               {"proposed_win_fraction", result.proposed_win_fraction
                                             ? json(*result.proposed_win_fraction)
                                             : json(nullptr)},
               {"eligible_seeds", result.eligible_seeds},
               {"failed_seeds", failed}};
  io::write_file(out / "run_summary.json", j.dump(2) + "\n");
}

struct RunOptions {
  int threads = 1;
};

// Full experiment. Seed failures are isolated: each failed seed is recorded
// with its error and the rest keep going.
inline RunResult run(const ExperimentConfig& cfg, const RunOptions& options = {}) {
  {
    const auto violations = config_violations(cfg);
    if (!violations.empty()) {
      throw std::invalid_argument("run: invalid config: " + violations.front());
    }
  }
  RunResult result;
  result.config_hash = hash_of(cfg);
  const std::filesystem::path out(cfg.output_dir);
  for (std::uint64_t seed : cfg.seeds) {
    SeedOutcome outcome;
    outcome.seed = seed;
    try {
      outcome.reports = run_seed(cfg, seed, options.threads,
                                 out / ("seed_" + std::to_string(seed)), result.config_hash);
      outcome.ok = true;
    } catch (const std::exception& e) {
      outcome.error = e.what();
    }
    result.outcomes.push_back(std::move(outcome));
  }
  summarize(cfg, result);
  write_summary_artifacts(cfg, result);
  return result;
}

struct BetaRow {
  double beta = 0.0;
  std::optional<double> mean_rec_cv;
  std::vector<double> seed_rec_cvs;
};

struct SweepResult {
  std::string config_hash;
  std::vector<BetaRow> rows;
  std::vector<SeedOutcome> outcomes;

  std::size_t failed() const {
    std::size_t f = 0;
    for (const auto& o : outcomes) f += o.ok ? 0 : 1;
    return f;
  }
};

// One proposed-method run per beta; bundles, weights and true lifts are
// computed once per seed and shared, only training repeats.
inline SweepResult sweep_beta(const ExperimentConfig& cfg, const RunOptions& options = {}) {
  if (cfg.beta_grid.empty()) throw std::invalid_argument("sweep_beta: empty beta_grid");
  if (std::find(cfg.methods.begin(), cfg.methods.end(), est::Method::proposed) ==
      cfg.methods.end()) {
    throw std::invalid_argument("sweep_beta: proposed method not enabled");
  }
  {
    const auto violations = config_violations(cfg);
    if (!violations.empty()) {
      throw std::invalid_argument("sweep_beta: invalid config: " + violations.front());
    }
  }

  SweepResult result;
  result.config_hash = hash_of(cfg);
  const std::filesystem::path out(cfg.output_dir);
  std::map<double, std::vector<double>> cvs_by_beta;

  std::vector<io::SummaryRow> csv_rows;
  for (std::uint64_t seed : cfg.seeds) {
    SeedOutcome outcome;
    outcome.seed = seed;
    try {
      const std::filesystem::path seed_dir = out / ("seed_" + std::to_string(seed));
      const sim::SimConfig sc = sim_for_seed(cfg, seed);
      const sim::RewardGroundTruth truth = sim::make_ground_truth(sc);
      const sim::PolicySet policies = sim::make_policies(sc, truth, options.threads);
      const EvalBundle bundle = sim::simulate(sc, truth, policies, options.threads);
      std::filesystem::create_directories(seed_dir);
      io::write_file(seed_dir / "manifest.json",
                     json{{"config_hash", result.config_hash}, {"seed", seed}}.dump(2) + "\n");
      io::save_bundle(bundle, seed_dir);
      io::save_truth(truth, seed_dir / "truth.json");
      io::save_policies(policies, seed_dir / "policies.json");
      std::vector<std::optional<double>> aucs;
      const prop::WeightTable table =
          compute_weights(bundle, &policies, cfg, seed, options.threads, &aucs);
      io::save_weights(table, seed_dir / "weights.jsonl");
      io::save_weights_report(table, prop::weight_diagnostics(table), aucs,
                              seed_dir / "weights_report.json");
      const std::vector<double> lifts =
          est::exact_true_lifts(bundle, truth, policies, options.threads);

      for (double beta : cfg.beta_grid) {
        ExperimentConfig beta_cfg = cfg;
        beta_cfg.train_proposed.beta = beta;
        const reward::RewardModel model =
            train_method(bundle, table, beta_cfg, reward::TrainMode::proposed, seed);
        io::save_model(model,
                       seed_dir / ("reward_model_beta_" + io::format_double(beta) + ".json"));
        std::vector<est::LiftEstimate> estimates;
        for (int k = 1; k <= bundle.meta.K; ++k) {
          estimates.push_back(est::estimate_lift_dm(model, bundle, k));
        }
        const est::RecoveryReport report = est::make_recovery_report(lifts, estimates, cfg.tau);
        outcome.reports.push_back(report);
        io::SummaryRow row;
        row.method = io::format_double(beta);
        row.seed = std::to_string(seed);
        row.agg = report.aggregate;
        csv_rows.push_back(std::move(row));
        if (report.aggregate.rec_cv) cvs_by_beta[beta].push_back(*report.aggregate.rec_cv);
      }
      outcome.ok = true;
    } catch (const std::exception& e) {
      outcome.error = e.what();
    }
    result.outcomes.push_back(std::move(outcome));
  }

  for (double beta : cfg.beta_grid) {
    BetaRow row;
    row.beta = beta;
    const auto it = cvs_by_beta.find(beta);
    if (it != cvs_by_beta.end() && !it->second.empty()) {
      row.seed_rec_cvs = it->second;
      double sum = 0.0;
      for (double v : it->second) sum += v;
      row.mean_rec_cv = sum / static_cast<double>(it->second.size());
    }
    io::SummaryRow mean_row;
    mean_row.method = io::format_double(beta);
    mean_row.seed = "mean";
    mean_row.agg.rec_cv = row.mean_rec_cv;
    csv_rows.push_back(std::move(mean_row));
    result.rows.push_back(std::move(row));
  }

  std::filesystem::create_directories(out);
  io::write_file(out / "config.json", to_json(cfg).dump(2) + "\n");
  std::string csv = io::summary_csv(csv_rows);
  csv.replace(0, 6, "beta");  // header starts with "method"
  io::write_file(out / "sweep_beta.csv", csv);
  return result;
}

// External ground truth: replaces each report's true lifts with the values
// from a JSON object keyed by target index, then recomputes every Rec and
// aggregate. This is the real-experiment path where lifts come from A/B
// measurements instead of the simulator oracle.
inline std::vector<est::RecoveryReport> ingest_external_lifts(
    const std::filesystem::path& path, const std::vector<est::RecoveryReport>& reports,
    double tau = est::kDefaultTau) {
  const json j = json::parse(io::read_file(path));
  if (!j.is_object()) {
    throw std::runtime_error(path.string() + ": expected an object mapping k to true lift");
  }
  std::vector<est::RecoveryReport> out;
  for (const est::RecoveryReport& r : reports) {
    std::vector<double> lifts;
    std::vector<est::LiftEstimate> estimates;
    for (const auto& t : r.targets) {
      const std::string key = std::to_string(t.k);
      if (!j.contains(key)) {
        throw std::runtime_error(path.string() + ": missing true lift for target " + key);
      }
      lifts.push_back(j.at(key).get<double>());
      est::LiftEstimate e;
      e.k = t.k;
      e.method = r.method;
      e.value = t.estimated_lift;
      e.n = 0;
      estimates.push_back(e);
    }
    out.push_back(est::make_recovery_report(lifts, estimates, tau));
  }
  return out;
}

// Rebuilds the cross-seed summary from per-seed recovery reports on disk.
// A seed whose report carries a different config hash is treated as failed.
inline RunResult collect_reports(const ExperimentConfig& cfg) {
  RunResult result;
  result.config_hash = hash_of(cfg);
  const std::filesystem::path out(cfg.output_dir);
  for (std::uint64_t seed : cfg.seeds) {
    SeedOutcome outcome;
    outcome.seed = seed;
    const std::filesystem::path path =
        out / ("seed_" + std::to_string(seed)) / "recovery_report.json";
    try {
      const json j = json::parse(io::read_file(path));
      const std::string hash = j.at("config_hash").get<std::string>();
      if (hash != result.config_hash) {
        throw std::runtime_error(path.string() + ": config_hash " + hash +
                                 " does not match this config (" + result.config_hash + ")");
      }
      for (const auto& m : j.at("methods")) {
        outcome.reports.push_back(io::recovery_report_from_json(m));
      }
      outcome.ok = true;
    } catch (const std::exception& e) {
      outcome.error = e.what();
    }
    result.outcomes.push_back(std::move(outcome));
  }
  summarize(cfg, result);
  write_summary_artifacts(cfg, result);
  return result;
}

}  // namespace cfeval::harness
