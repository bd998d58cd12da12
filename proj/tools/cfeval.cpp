// Command-line front end. Subcommands cover the full pipeline (`run`,
// `sweep-beta`, `report`) and the individual stages (`simulate`, `weights`,
// `train`, `evaluate`) operating on per-seed directories, so any stage can
// be re-run or swapped out against artifacts on disk.
//
// Exit codes: 0 all seeds succeeded, 2 some failed, 1 everything failed.

#include <cstdlib>
#include <filesystem>
#include <map>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"

#include "cfeval/harness.hpp"

namespace {

using cfeval::harness::ExperimentConfig;
using nlohmann::json;
namespace fs = std::filesystem;
namespace est = cfeval::est;
namespace io = cfeval::io;
namespace prop = cfeval::prop;
namespace reward = cfeval::reward;
namespace sim = cfeval::sim;

struct CommonFlags {
  std::string config_path;
  std::string output_dir;
  std::string weight_mode;
  std::vector<std::string> methods;
  long long seed_offset = 0;
  int threads = 0;
  std::string external_lifts;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config_path,
                  "Experiment config JSON (falls back to <output-dir>/config.json, then defaults)");
  cmd->add_option("--output-dir", f.output_dir,
                  "Artifact directory (falls back to $CFEVAL_OUTPUT_DIR, then the config)");
  cmd->add_option("--seed-offset", f.seed_offset, "Added to every configured seed");
  cmd->add_option("--methods", f.methods, "Subset of proposed,baseline,ips")->delimiter(',');
  cmd->add_option("--weight-mode", f.weight_mode, "oracle or estimated")
      ->check(CLI::IsMember({"oracle", "estimated"}));
  cmd->add_option("--threads", f.threads, "Worker threads (0 = all hardware threads)");
}

ExperimentConfig make_config(const CommonFlags& f) {
  std::string config_path = f.config_path;
  if (config_path.empty()) {
    std::string dir = f.output_dir;
    if (dir.empty()) {
      if (const char* env = std::getenv("CFEVAL_OUTPUT_DIR"); env && *env) dir = env;
    }
    if (!dir.empty() && fs::exists(fs::path(dir) / "config.json")) {
      config_path = (fs::path(dir) / "config.json").string();
    }
  }
  json raw = json::object();
  if (!config_path.empty()) raw = json::parse(io::read_file(config_path));
  if (!raw.is_object()) throw std::runtime_error(config_path + ": config must be an object");
  if (!f.weight_mode.empty()) raw["weight_mode"] = f.weight_mode;
  if (!f.methods.empty()) raw["methods"] = f.methods;
  ExperimentConfig cfg = cfeval::harness::config_from_json(raw);
  if (f.seed_offset != 0) {
    for (auto& s : cfg.seeds) s += static_cast<std::uint64_t>(f.seed_offset);
  }
  if (!f.output_dir.empty()) {
    cfg.output_dir = f.output_dir;
  } else if (const char* env = std::getenv("CFEVAL_OUTPUT_DIR"); env && *env) {
    cfg.output_dir = env;
  }
  const auto violations = cfeval::harness::config_violations(cfg);
  if (!violations.empty()) {
    std::string msg = "invalid config:";
    for (const auto& v : violations) msg += "\n  - " + v;
    throw std::runtime_error(msg);
  }
  return cfg;
}

int resolve_threads(int flag) {
  if (flag > 0) return flag;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

int exit_code(std::size_t total, std::size_t failed) {
  if (failed == 0) return 0;
  return failed == total ? 1 : 2;
}

fs::path seed_dir(const ExperimentConfig& cfg, std::uint64_t seed) {
  return fs::path(cfg.output_dir) / ("seed_" + std::to_string(seed));
}

// Runs fn once per configured seed, isolating failures.
template <typename Fn>
int for_each_seed(const ExperimentConfig& cfg, const char* stage, Fn&& fn) {
  std::size_t failed = 0;
  for (std::uint64_t seed : cfg.seeds) {
    try {
      fn(seed);
      std::printf("%s seed %llu: ok\n", stage, static_cast<unsigned long long>(seed));
    } catch (const std::exception& e) {
      ++failed;
      std::fprintf(stderr, "%s seed %llu: %s\n", stage,
                   static_cast<unsigned long long>(seed), e.what());
    }
  }
  return exit_code(cfg.seeds.size(), failed);
}

int cmd_simulate(const CommonFlags& f) {
  const ExperimentConfig cfg = make_config(f);
  const int threads = resolve_threads(f.threads);
  const std::string hash = cfeval::harness::hash_of(cfg);
  fs::create_directories(cfg.output_dir);
  io::write_file(fs::path(cfg.output_dir) / "config.json",
                 cfeval::harness::to_json(cfg).dump(2) + "\n");
  return for_each_seed(cfg, "simulate", [&](std::uint64_t seed) {
    const sim::SimConfig sc = cfeval::harness::sim_for_seed(cfg, seed);
    const auto truth = sim::make_ground_truth(sc);
    const auto policies = sim::make_policies(sc, truth, threads);
    const auto bundle = sim::simulate(sc, truth, policies, threads);
    const fs::path dir = seed_dir(cfg, seed);
    fs::create_directories(dir);
    io::write_file(dir / "manifest.json",
                   json{{"config_hash", hash}, {"seed", seed}}.dump(2) + "\n");
    io::save_bundle(bundle, dir);
    io::save_truth(truth, dir / "truth.json");
    io::save_policies(policies, dir / "policies.json");
  });
}

int cmd_weights(const CommonFlags& f) {
  const ExperimentConfig cfg = make_config(f);
  const int threads = resolve_threads(f.threads);
  return for_each_seed(cfg, "weights", [&](std::uint64_t seed) {
    const fs::path dir = seed_dir(cfg, seed);
    const cfeval::EvalBundle bundle = io::load_bundle(dir);
    sim::PolicySet policies;
    const sim::PolicySet* policies_ptr = nullptr;
    if (cfg.weight_mode == prop::WeightMode::oracle) {
      policies = io::load_policies(dir / "policies.json");
      policies_ptr = &policies;
    }
    std::vector<std::optional<double>> aucs;
    const prop::WeightTable table =
        cfeval::harness::compute_weights(bundle, policies_ptr, cfg, seed, threads, &aucs);
    io::save_weights(table, dir / "weights.jsonl");
    io::save_weights_report(table, prop::weight_diagnostics(table), aucs,
                            dir / "weights_report.json");
  });
}

int cmd_train(const CommonFlags& f) {
  const ExperimentConfig cfg = make_config(f);
  return for_each_seed(cfg, "train", [&](std::uint64_t seed) {
    const fs::path dir = seed_dir(cfg, seed);
    const cfeval::EvalBundle bundle = io::load_bundle(dir);
    const prop::WeightTable table = io::load_weights(dir / "weights.jsonl");
    for (est::Method m : cfg.methods) {
      if (m == est::Method::ips) continue;
      const reward::TrainMode mode = m == est::Method::proposed ? reward::TrainMode::proposed
                                                                : reward::TrainMode::baseline;
      const reward::RewardModel model =
          cfeval::harness::train_method(bundle, table, cfg, mode, seed);
      io::save_model(model,
                     dir / ("reward_model_" + std::string(est::method_name(m)) + ".json"));
    }
  });
}

int cmd_evaluate(const CommonFlags& f) {
  const ExperimentConfig cfg = make_config(f);
  const int threads = resolve_threads(f.threads);
  const std::string hash = cfeval::harness::hash_of(cfg);
  return for_each_seed(cfg, "evaluate", [&](std::uint64_t seed) {
    const fs::path dir = seed_dir(cfg, seed);
    const cfeval::EvalBundle bundle = io::load_bundle(dir);
    prop::WeightTable table;
    std::map<est::Method, reward::RewardModel> models;
    for (est::Method m : cfg.methods) {
      if (m == est::Method::ips) {
        table = io::load_weights(dir / "weights.jsonl");
      } else {
        models.emplace(m, io::load_model(dir / ("reward_model_" +
                                                std::string(est::method_name(m)) + ".json")));
      }
    }

    std::vector<double> lifts;
    if (!f.external_lifts.empty()) {
      const json j = json::parse(io::read_file(f.external_lifts));
      for (int k = 1; k <= bundle.meta.K; ++k) {
        const std::string key = std::to_string(k);
        if (!j.contains(key)) {
          throw std::runtime_error(f.external_lifts + ": missing true lift for target " + key);
        }
        lifts.push_back(j.at(key).get<double>());
      }
    } else {
      const auto truth = io::load_truth(dir / "truth.json");
      const auto policies = io::load_policies(dir / "policies.json");
      lifts = est::exact_true_lifts(bundle, truth, policies, threads);
    }

    std::vector<est::RecoveryReport> reports;
    for (est::Method m : cfg.methods) {
      reports.push_back(est::make_recovery_report(
          lifts, cfeval::harness::estimates_for(m, bundle, table, models, cfg), cfg.tau));
    }
    io::save_recovery_reports(reports, hash, seed, dir / "recovery_report.json");
  });
}

void print_summary(const cfeval::harness::RunResult& result) {
  for (const auto& o : result.outcomes) {
    if (o.ok) {
      std::printf("seed %llu: ok\n", static_cast<unsigned long long>(o.seed));
    } else {
      std::fprintf(stderr, "seed %llu: %s\n", static_cast<unsigned long long>(o.seed),
                   o.error.c_str());
    }
  }
  for (const auto& ms : result.method_summaries) {
    std::printf("%-9s mean rec_cv %s over %zu seeds\n", ms.method.c_str(),
                ms.mean_rec_cv ? io::format_double(*ms.mean_rec_cv).c_str() : "undefined",
                ms.seed_rec_cvs.size());
  }
  if (result.proposed_win_fraction) {
    std::printf("proposed strictly lowest rec_cv in %s of %zu eligible seeds\n",
                io::format_double(*result.proposed_win_fraction).c_str(),
                result.eligible_seeds);
  }
}

int cmd_run(const CommonFlags& f) {
  const ExperimentConfig cfg = make_config(f);
  const auto result = cfeval::harness::run(cfg, {.threads = resolve_threads(f.threads)});
  print_summary(result);
  std::printf("summary: %s\n", (fs::path(cfg.output_dir) / "summary.csv").string().c_str());
  return exit_code(result.outcomes.size(), result.failed());
}

int cmd_sweep_beta(const CommonFlags& f) {
  const ExperimentConfig cfg = make_config(f);
  const auto result = cfeval::harness::sweep_beta(cfg, {.threads = resolve_threads(f.threads)});
  for (const auto& row : result.rows) {
    std::printf("beta %s: mean rec_cv %s over %zu seeds\n",
                io::format_double(row.beta).c_str(),
                row.mean_rec_cv ? io::format_double(*row.mean_rec_cv).c_str() : "undefined",
                row.seed_rec_cvs.size());
  }
  std::printf("table: %s\n", (fs::path(cfg.output_dir) / "sweep_beta.csv").string().c_str());
  return exit_code(result.outcomes.size(), result.failed());
}

int cmd_report(const CommonFlags& f) {
  const ExperimentConfig cfg = make_config(f);
  const auto result = cfeval::harness::collect_reports(cfg);
  print_summary(result);
  std::printf("summary: %s\n", (fs::path(cfg.output_dir) / "summary.csv").string().c_str());
  return exit_code(result.outcomes.size(), result.failed());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Counterfactual lift evaluation toolkit"};
  app.require_subcommand(1);

  std::map<std::string, CommonFlags> flags;
  std::map<std::string, int (*)(const CommonFlags&)> handlers{
      {"simulate", cmd_simulate}, {"weights", cmd_weights},     {"train", cmd_train},
      {"evaluate", cmd_evaluate}, {"run", cmd_run},             {"sweep-beta", cmd_sweep_beta},
      {"report", cmd_report}};
  const std::map<std::string, std::string> briefs{
      {"simulate", "Generate per-seed datasets, ground truth and policies"},
      {"weights", "Compute density-ratio weights for existing datasets"},
      {"train", "Train reward models against existing weights"},
      {"evaluate", "Estimate lifts and write recovery reports"},
      {"run", "Full pipeline plus cross-seed summary"},
      {"sweep-beta", "Retrain the proposed method across the beta grid"},
      {"report", "Rebuild the summary from existing recovery reports"}};

  for (const auto& [name, handler] : handlers) {
    CLI::App* cmd = app.add_subcommand(name, briefs.at(name));
    add_common(cmd, flags[name]);
    if (name == "evaluate") {
      cmd->add_option("--external-lifts", flags[name].external_lifts,
                      "JSON object mapping target index to externally measured true lift");
    }
  }

  CLI11_PARSE(app, argc, argv);

  const std::string name = app.get_subcommands().front()->get_name();
  try {
    return handlers.at(name)(flags.at(name));
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
