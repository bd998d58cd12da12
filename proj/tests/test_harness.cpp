#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "catch2/catch_amalgamated.hpp"
#include "cfeval/harness.hpp"
#include "helpers.hpp"

using namespace cfeval;
using nlohmann::json;

namespace {

harness::ExperimentConfig small_config(const std::filesystem::path& out) {
  harness::ExperimentConfig cfg = harness::default_config();
  cfg.sim.d = 2;
  cfg.sim.q = 2;
  cfg.sim.inventory_size = 20;
  cfg.sim.candidates_per_request = 4;
  cfg.sim.n = 300;
  cfg.sim.K = 2;
  cfg.sim.alphas = {0.5, 1.0};
  cfg.train_proposed.epochs = 8;
  cfg.train_proposed.batch_size = 128;
  cfg.train_baseline.epochs = 8;
  cfg.train_baseline.batch_size = 128;
  cfg.seeds = {1, 2};
  cfg.output_dir = out.string();
  return cfg;
}

std::string slurp(const std::filesystem::path& p) { return io::read_file(p); }

}  // namespace

TEST_CASE("an empty json document yields the default config", "[harness]") {
  const auto cfg = harness::config_from_json(json::object());
  REQUIRE(cfg == harness::default_config());
  REQUIRE_FALSE(cfg.clip_cap.has_value());
}

TEST_CASE("configs survive a json round-trip", "[harness]") {
  harness::ExperimentConfig cfg = harness::default_config();
  cfg.sim.n = 1234;
  cfg.sim.reward_mode = RewardMode::gaussian;
  cfg.weight_mode = prop::WeightMode::estimated;
  cfg.clip_cap = 15.0;
  cfg.methods = {est::Method::proposed, est::Method::ips};
  cfg.seeds = {4, 9};
  cfg.beta_grid = {0.0, 3.0};
  cfg.train_proposed.beta = 2.0;
  cfg.ratio.epochs = 4;
  cfg.ips_self_normalized = false;
  cfg.output_dir = "elsewhere";
  const auto back = harness::config_from_json(harness::to_json(cfg));
  REQUIRE(back == cfg);
}

TEST_CASE("flat train keys reach both trainers, blocks override", "[harness]") {
  const auto cfg = harness::config_from_json(json::parse(
      R"({"train": {"epochs": 3, "learning_rate": 0.25, "proposed": {"beta": 2.5}}})"));
  REQUIRE(cfg.train_proposed.epochs == 3);
  REQUIRE(cfg.train_baseline.epochs == 3);
  REQUIRE(cfg.train_proposed.learning_rate == 0.25);
  REQUIRE(cfg.train_baseline.learning_rate == 0.25);
  REQUIRE(cfg.train_proposed.beta == 2.5);
  REQUIRE(cfg.train_baseline.beta == harness::default_config().train_baseline.beta);
}

TEST_CASE("the config hash ignores the output directory", "[harness]") {
  harness::ExperimentConfig a = harness::default_config();
  harness::ExperimentConfig b = a;
  b.output_dir = "/somewhere/else";
  REQUIRE(harness::hash_of(a) == harness::hash_of(b));
  b.sim.n += 1;
  REQUIRE(harness::hash_of(a) != harness::hash_of(b));
}

TEST_CASE("key order in the config document does not change the hash", "[harness]") {
  const auto a = json::parse(R"({"sim": {"n": 500, "d": 4}, "tau": 1e-8})");
  const auto b = json::parse(R"({"tau": 1e-8, "sim": {"d": 4, "n": 500}})");
  REQUIRE(harness::hash_of(harness::config_from_json(a)) ==
          harness::hash_of(harness::config_from_json(b)));
}

TEST_CASE("estimated mode defaults to a clip cap unless told otherwise", "[harness]") {
  const auto est_mode = harness::config_from_json(json{{"weight_mode", "estimated"}});
  REQUIRE(est_mode.clip_cap == harness::kDefaultEstimatedClipCap);
  const auto uncapped =
      harness::config_from_json(json{{"weight_mode", "estimated"}, {"clip_cap", nullptr}});
  REQUIRE_FALSE(uncapped.clip_cap.has_value());
  const auto oracle = harness::config_from_json(json::object());
  REQUIRE_FALSE(oracle.clip_cap.has_value());
}

TEST_CASE("unknown enum strings in configs are rejected", "[harness]") {
  REQUIRE_THROWS_AS(harness::config_from_json(json{{"weight_mode", "guess"}}),
                    std::runtime_error);
  REQUIRE_THROWS_AS(harness::config_from_json(json{{"methods", {"direct"}}}),
                    std::runtime_error);
  REQUIRE_THROWS_AS(
      harness::config_from_json(json{{"sim", {{"reward_mode", "poisson"}}}}),
      std::runtime_error);
}

TEST_CASE("a small experiment runs every seed and writes its artifacts", "[harness]") {
  testkit::TempDir dir("run");
  const auto cfg = small_config(dir.path() / "out");
  const auto result = harness::run(cfg);
  REQUIRE(result.failed() == 0);
  REQUIRE(result.outcomes.size() == 2);
  // three methods times (two seeds plus their mean)
  REQUIRE(result.summary_rows.size() == 9);
  REQUIRE(result.method_summaries.size() == 3);
  REQUIRE(result.proposed_win_fraction.has_value());

  const std::filesystem::path out(cfg.output_dir);
  for (const char* name : {"config.json", "summary.csv", "comparison.svg", "run_summary.json"}) {
    REQUIRE(std::filesystem::exists(out / name));
  }
  for (const char* name :
       {"manifest.json", "bundle_meta.json", "inventory.jsonl", "candidates.jsonl",
        "source.jsonl", "target_1.jsonl", "target_2.jsonl", "truth.json", "policies.json",
        "weights.jsonl", "weights_report.json", "reward_model_proposed.json",
        "reward_model_baseline.json", "recovery_report.json"}) {
    REQUIRE(std::filesystem::exists(out / "seed_1" / name));
    REQUIRE(std::filesystem::exists(out / "seed_2" / name));
  }

  const auto manifest = json::parse(slurp(out / "seed_1" / "manifest.json"));
  REQUIRE(manifest.at("config_hash").get<std::string>() == result.config_hash);
  REQUIRE(manifest.at("seed").get<std::uint64_t>() == 1);

  const std::string csv = slurp(out / "summary.csv");
  REQUIRE(csv.rfind("method,seed,rec_cv", 0) == 0);
  REQUIRE(std::count(csv.begin(), csv.end(), '\n') == 10);
}

TEST_CASE("saved bundles reload byte-equal", "[harness]") {
  testkit::TempDir dir("bundle");
  sim::SimConfig c;
  c.d = 2;
  c.q = 3;
  c.inventory_size = 15;
  c.candidates_per_request = 5;
  c.n = 64;
  c.K = 2;
  c.alphas = {0.25, 0.75};
  c.seed = 12;
  const auto truth = sim::make_ground_truth(c);
  const auto policies = sim::make_policies(c, truth);
  const auto bundle = sim::simulate(c, truth, policies);
  io::save_bundle(bundle, dir.path());
  const auto loaded = io::load_bundle(dir.path());
  REQUIRE(loaded == bundle);
  REQUIRE(validate_bundle(loaded).empty());

  io::save_truth(truth, dir.path() / "truth.json");
  REQUIRE(io::load_truth(dir.path() / "truth.json") == truth);
  io::save_policies(policies, dir.path() / "policies.json");
  REQUIRE(io::load_policies(dir.path() / "policies.json") == policies);
}

TEST_CASE("reruns and thread counts leave the reports byte-identical", "[harness]") {
  testkit::TempDir dir("determinism");
  auto cfg = small_config(dir.path() / "a");
  cfg.weight_mode = prop::WeightMode::estimated;
  cfg.clip_cap = harness::kDefaultEstimatedClipCap;
  cfg.ratio.epochs = 4;

  REQUIRE(harness::run(cfg, {.threads = 1}).failed() == 0);
  const std::string csv_a = slurp(dir.path() / "a" / "summary.csv");
  const std::string rep_a = slurp(dir.path() / "a" / "seed_2" / "recovery_report.json");

  REQUIRE(harness::run(cfg, {.threads = 1}).failed() == 0);
  REQUIRE(slurp(dir.path() / "a" / "summary.csv") == csv_a);
  REQUIRE(slurp(dir.path() / "a" / "seed_2" / "recovery_report.json") == rep_a);

  cfg.output_dir = (dir.path() / "b").string();
  REQUIRE(harness::run(cfg, {.threads = 3}).failed() == 0);
  REQUIRE(slurp(dir.path() / "b" / "summary.csv") == csv_a);
  REQUIRE(slurp(dir.path() / "b" / "seed_2" / "recovery_report.json") == rep_a);
}

TEST_CASE("a failing seed is isolated from the others", "[harness]") {
  testkit::TempDir dir("isolation");
  const auto cfg = small_config(dir.path() / "out");
  std::filesystem::create_directories(dir.path() / "out");
  std::ofstream(dir.path() / "out" / "seed_2").put('x');  // blocks the seed directory

  const auto result = harness::run(cfg);
  REQUIRE(result.failed() == 1);
  REQUIRE(result.outcomes[0].ok);
  REQUIRE_FALSE(result.outcomes[1].ok);
  REQUIRE_FALSE(result.outcomes[1].error.empty());
  REQUIRE(std::filesystem::exists(dir.path() / "out" / "seed_1" / "recovery_report.json"));
  REQUIRE(std::filesystem::exists(dir.path() / "out" / "summary.csv"));

  const auto run_summary = json::parse(slurp(dir.path() / "out" / "run_summary.json"));
  REQUIRE(run_summary.at("failed_seeds").size() == 1);
}

TEST_CASE("report collection reproduces the summary from disk", "[harness]") {
  testkit::TempDir dir("collect");
  const auto cfg = small_config(dir.path() / "out");
  const auto run_result = harness::run(cfg);
  const std::string csv = slurp(dir.path() / "out" / "summary.csv");

  const auto collected = harness::collect_reports(cfg);
  REQUIRE(collected.failed() == 0);
  REQUIRE(collected.summary_rows.size() == run_result.summary_rows.size());
  REQUIRE(slurp(dir.path() / "out" / "summary.csv") == csv);

  auto other = cfg;
  other.sim.n += 7;  // different hash; the stored reports no longer match
  const auto mismatched = harness::collect_reports(other);
  REQUIRE(mismatched.failed() == other.seeds.size());
}

TEST_CASE("beta sweeps retrain only the emphasis model", "[harness]") {
  testkit::TempDir dir("sweep");
  auto cfg = small_config(dir.path() / "out");
  cfg.seeds = {1};
  cfg.beta_grid = {0.0, 1.0};
  const auto sweep = harness::sweep_beta(cfg);
  REQUIRE(sweep.failed() == 0);
  REQUIRE(sweep.rows.size() == 2);
  REQUIRE(sweep.rows[0].beta == 0.0);
  REQUIRE(sweep.rows[1].beta == 1.0);
  REQUIRE(sweep.rows[0].seed_rec_cvs.size() == 1);
  REQUIRE(std::filesystem::exists(dir.path() / "out" / "sweep_beta.csv"));
  const std::string csv = slurp(dir.path() / "out" / "sweep_beta.csv");
  REQUIRE(csv.rfind("beta,seed,rec_cv", 0) == 0);

  // The grid point at the configured beta must agree with a plain run.
  auto direct_cfg = cfg;
  direct_cfg.output_dir = (dir.path() / "direct").string();
  direct_cfg.methods = {est::Method::proposed};
  direct_cfg.train_proposed.beta = 1.0;
  const auto direct = harness::run(direct_cfg);
  REQUIRE(direct.failed() == 0);
  REQUIRE(sweep.rows[1].seed_rec_cvs[0] ==
          *direct.outcomes[0].reports[0].aggregate.rec_cv);
}

TEST_CASE("external truth files replace the oracle lifts", "[harness]") {
  testkit::TempDir dir("external");
  const auto cfg = small_config(dir.path() / "out");
  const auto result = harness::run(cfg);
  const auto& reports = result.outcomes[0].reports;

  json consistent = json::object();
  for (const auto& t : reports[0].targets) {
    consistent[std::to_string(t.k)] = t.true_lift;
  }
  const auto path = dir.path() / "lifts.json";
  io::write_file(path, consistent.dump());
  const auto replayed = harness::ingest_external_lifts(path, reports, cfg.tau);
  REQUIRE(replayed.size() == reports.size());
  for (std::size_t i = 0; i < reports.size(); ++i) {
    REQUIRE(replayed[i].targets == reports[i].targets);
  }

  json scaled = json::object();
  for (const auto& t : reports[0].targets) {
    scaled[std::to_string(t.k)] = t.true_lift * 1.01;
  }
  io::write_file(path, scaled.dump());
  const auto shifted = harness::ingest_external_lifts(path, reports, cfg.tau);
  for (std::size_t i = 0; i < reports.size(); ++i) {
    for (std::size_t k = 0; k < reports[i].targets.size(); ++k) {
      if (!reports[i].targets[k].rec) continue;
      REQUIRE(*shifted[i].targets[k].rec ==
              Catch::Approx(*reports[i].targets[k].rec / 1.01).margin(1e-12));
    }
  }

  json incomplete = json::object();
  incomplete["1"] = 0.01;
  io::write_file(path, incomplete.dump());
  REQUIRE_THROWS_WITH(harness::ingest_external_lifts(path, reports, cfg.tau),
                      Catch::Matchers::ContainsSubstring("2"));
}

TEST_CASE("invalid experiment configs never start running", "[harness]") {
  testkit::TempDir dir("invalid");
  auto cfg = small_config(dir.path() / "out");
  cfg.seeds.clear();
  REQUIRE_THROWS_AS(harness::run(cfg), std::invalid_argument);
  cfg = small_config(dir.path() / "out");
  cfg.clip_cap = -5.0;
  REQUIRE_THROWS_AS(harness::run(cfg), std::invalid_argument);
  cfg = small_config(dir.path() / "out");
  cfg.methods.clear();
  REQUIRE_THROWS_AS(harness::run(cfg), std::invalid_argument);
}
