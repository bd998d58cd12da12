#pragma once

// On-disk formats: dataset files (jsonl per domain), audit files for the
// ground truth and policies, weight and model artifacts, recovery reports,
// the cross-seed CSV summary and the comparison SVG. Doubles are written in
// shortest round-trip form and files end with LF, so equal inputs produce
// byte-equal files.

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "cfeval/core.hpp"
#include "cfeval/estimators.hpp"
#include "cfeval/propensity.hpp"
#include "cfeval/reward_model.hpp"
#include "cfeval/rng.hpp"
#include "cfeval/sim.hpp"

namespace cfeval::io {

using nlohmann::json;

// Shortest decimal string that parses back to the same double. Output files
// never carry NaN or infinity; absent values are JSON null or an empty CSV
// cell.
inline std::string format_double(double v) {
  if (!std::isfinite(v)) throw std::invalid_argument("format_double: non-finite value");
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline void write_file(const std::filesystem::path& path, std::string_view content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open for reading: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

namespace detail {

inline void append_features(std::string& out, std::span<const double> v) {
  out += '[';
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    out += format_double(v[i]);
  }
  out += ']';
}

inline void append_context(std::string& out, const Context& c) {
  out += "{\"request_id\":";
  out += std::to_string(c.request_id);
  out += ",\"features\":";
  append_features(out, c.features);
  out += '}';
}

inline void append_ad(std::string& out, const Ad& a) {
  out += "{\"ad_id\":";
  out += std::to_string(a.ad_id);
  out += ",\"features\":";
  append_features(out, a.features);
  out += '}';
}

inline std::vector<double> features_from(const json& j) {
  std::vector<double> out;
  out.reserve(j.size());
  for (const auto& v : j) out.push_back(v.get<double>());
  return out;
}

inline Context context_from(const json& j) {
  Context c;
  c.request_id = j.at("request_id").get<RequestId>();
  c.features = features_from(j.at("features"));
  return c;
}

inline Ad ad_from(const json& j) {
  Ad a;
  a.ad_id = j.at("ad_id").get<AdId>();
  a.features = features_from(j.at("features"));
  return a;
}

// Applies fn to each nonempty line; line numbers are 1-based for messages.
template <typename Fn>
void for_each_line(const std::filesystem::path& path, Fn&& fn) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open for reading: " + path.string());
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      fn(json::parse(line));
    } catch (const json::exception& e) {
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

}  // namespace detail

inline std::string reward_mode_from_check(const std::string& s, const std::string& where) {
  if (s != "bernoulli" && s != "gaussian") {
    throw std::runtime_error(where + ": unknown reward_mode '" + s + "'");
  }
  return s;
}

inline json meta_to_json(const BundleMeta& m) {
  return json{{"d", m.d},
              {"q", m.q},
              {"K", m.K},
              {"n", m.n},
              {"reward_mode", std::string(reward_mode_name(m.reward_mode))},
              {"oracle_propensities", m.oracle_propensities},
              {"seed", m.seed}};
}

inline BundleMeta meta_from_json(const json& j) {
  BundleMeta m;
  m.d = j.at("d").get<int>();
  m.q = j.at("q").get<int>();
  m.K = j.at("K").get<int>();
  m.n = j.at("n").get<std::size_t>();
  m.reward_mode = j.at("reward_mode").get<std::string>() == "gaussian" ? RewardMode::gaussian
                                                                       : RewardMode::bernoulli;
  reward_mode_from_check(j.at("reward_mode").get<std::string>(), "bundle_meta");
  m.oracle_propensities = j.at("oracle_propensities").get<bool>();
  m.seed = j.at("seed").get<std::uint64_t>();
  return m;
}

// Writes bundle_meta.json, inventory.jsonl, candidates.jsonl, source.jsonl
// and one target_<k>.jsonl per target domain into dir.
inline void save_bundle(const EvalBundle& b, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_file(dir / "bundle_meta.json", meta_to_json(b.meta).dump(2) + "\n");

  std::string buf;
  buf.reserve(b.inventory.size() * 64);
  for (const Ad& a : b.inventory) {
    detail::append_ad(buf, a);
    buf += '\n';
  }
  write_file(dir / "inventory.jsonl", buf);

  std::vector<RequestId> rids;
  rids.reserve(b.candidate_sets.size());
  for (const auto& [rid, _] : b.candidate_sets) rids.push_back(rid);
  std::sort(rids.begin(), rids.end());
  buf.clear();
  for (RequestId rid : rids) {
    buf += "{\"request_id\":";
    buf += std::to_string(rid);
    buf += ",\"candidates\":[";
    const auto& ids = b.candidate_sets.at(rid);
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (i) buf += ',';
      buf += std::to_string(ids[i]);
    }
    buf += "]}\n";
  }
  write_file(dir / "candidates.jsonl", buf);

  buf.clear();
  buf.reserve(b.source.size() * 256);
  for (const LoggedSample& row : b.source) {
    buf += "{\"context\":";
    detail::append_context(buf, row.context);
    buf += ",\"ad\":";
    detail::append_ad(buf, row.ad);
    buf += ",\"reward\":";
    buf += format_double(row.reward);
    if (row.logged_propensity) {
      buf += ",\"logged_propensity\":";
      buf += format_double(*row.logged_propensity);
    }
    buf += "}\n";
  }
  write_file(dir / "source.jsonl", buf);

  for (int k = 1; k <= b.meta.K; ++k) {
    buf.clear();
    buf.reserve(b.meta.n * 192);
    for (const TargetSample& row : b.targets[static_cast<std::size_t>(k - 1)]) {
      buf += "{\"context\":";
      detail::append_context(buf, row.context);
      buf += ",\"ad\":";
      detail::append_ad(buf, row.ad);
      buf += ",\"domain\":";
      buf += std::to_string(row.domain.index);
      buf += "}\n";
    }
    write_file(dir / ("target_" + std::to_string(k) + ".jsonl"), buf);
  }
}

inline EvalBundle load_bundle(const std::filesystem::path& dir) {
  EvalBundle b;
  b.meta = meta_from_json(json::parse(read_file(dir / "bundle_meta.json")));

  detail::for_each_line(dir / "inventory.jsonl",
                        [&](const json& j) { b.inventory.push_back(detail::ad_from(j)); });

  detail::for_each_line(dir / "candidates.jsonl", [&](const json& j) {
    std::vector<AdId> ids;
    for (const auto& v : j.at("candidates")) ids.push_back(v.get<AdId>());
    b.candidate_sets.emplace(j.at("request_id").get<RequestId>(), std::move(ids));
  });

  detail::for_each_line(dir / "source.jsonl", [&](const json& j) {
    LoggedSample row;
    row.context = detail::context_from(j.at("context"));
    row.ad = detail::ad_from(j.at("ad"));
    row.reward = j.at("reward").get<double>();
    if (j.contains("logged_propensity")) {
      row.logged_propensity = j.at("logged_propensity").get<double>();
    }
    b.source.push_back(std::move(row));
  });

  b.targets.resize(static_cast<std::size_t>(b.meta.K));
  for (int k = 1; k <= b.meta.K; ++k) {
    auto& rows = b.targets[static_cast<std::size_t>(k - 1)];
    detail::for_each_line(dir / ("target_" + std::to_string(k) + ".jsonl"), [&](const json& j) {
      TargetSample row;
      row.context = detail::context_from(j.at("context"));
      row.ad = detail::ad_from(j.at("ad"));
      row.domain = DomainId{j.at("domain").get<int>()};
      rows.push_back(std::move(row));
    });
  }
  return b;
}

inline void save_truth(const sim::RewardGroundTruth& t, const std::filesystem::path& path) {
  const json j{{"coefficients", t.coefficients},
               {"noise_mode", std::string(reward_mode_name(t.noise_mode))},
               {"noise_sigma", t.noise_sigma},
               {"link", std::string(sim::link_name(t.link))}};
  write_file(path, j.dump(2) + "\n");
}

inline sim::RewardGroundTruth load_truth(const std::filesystem::path& path) {
  const json j = json::parse(read_file(path));
  sim::RewardGroundTruth t;
  t.coefficients = detail::features_from(j.at("coefficients"));
  t.noise_mode = j.at("noise_mode").get<std::string>() == "gaussian" ? RewardMode::gaussian
                                                                     : RewardMode::bernoulli;
  t.noise_sigma = j.at("noise_sigma").get<double>();
  const std::string link = j.at("link").get<std::string>();
  if (link != "sigmoid" && link != "identity_clipped") {
    throw std::runtime_error(path.string() + ": unknown link '" + link + "'");
  }
  t.link = link == "sigmoid" ? sim::Link::sigmoid : sim::Link::identity_clipped;
  return t;
}

namespace detail {

inline json policy_to_json(const sim::SoftmaxPolicy& p) {
  return json{{"score_weights", p.score_weights},
              {"temperature", p.temperature},
              {"improvement_alpha", p.improvement_alpha}};
}

inline sim::SoftmaxPolicy policy_from_json(const json& j) {
  sim::SoftmaxPolicy p;
  p.score_weights = features_from(j.at("score_weights"));
  p.temperature = j.at("temperature").get<double>();
  p.improvement_alpha = j.at("improvement_alpha").get<double>();
  return p;
}

}  // namespace detail

inline void save_policies(const sim::PolicySet& set, const std::filesystem::path& path) {
  json targets = json::array();
  json alphas = json::array();
  for (const auto& t : set.targets) {
    targets.push_back(detail::policy_to_json(t));
    alphas.push_back(t.improvement_alpha);
  }
  const json j{{"source", detail::policy_to_json(set.source)},
               {"targets", targets},
               {"alphas", alphas},
               {"temperature", set.source.temperature},
               {"attempts", set.attempts}};
  write_file(path, j.dump(2) + "\n");
}

inline sim::PolicySet load_policies(const std::filesystem::path& path) {
  const json j = json::parse(read_file(path));
  sim::PolicySet set;
  set.source = detail::policy_from_json(j.at("source"));
  for (const auto& t : j.at("targets")) set.targets.push_back(detail::policy_from_json(t));
  set.attempts = j.value("attempts", 1);
  return set;
}

// weights.jsonl: one row per (source row, target k), in source-row order.
inline void save_weights(const prop::WeightTable& t, const std::filesystem::path& path) {
  const std::string mode(prop::weight_mode_name(t.mode));
  std::string buf;
  buf.reserve(t.rows() * static_cast<std::size_t>(t.targets()) * 56);
  for (std::size_t i = 0; i < t.rows(); ++i) {
    for (int k = 1; k <= t.targets(); ++k) {
      buf += "{\"request_id\":";
      buf += std::to_string(t.request_ids[i]);
      buf += ",\"k\":";
      buf += std::to_string(k);
      buf += ",\"w\":";
      buf += format_double(t.w[i][static_cast<std::size_t>(k - 1)]);
      buf += ",\"mode\":\"";
      buf += mode;
      buf += "\"}\n";
    }
  }
  write_file(path, buf);
}

inline prop::WeightTable load_weights(const std::filesystem::path& path) {
  prop::WeightTable t;
  std::map<RequestId, std::size_t> row_of;
  int max_k = 0;
  std::vector<std::tuple<RequestId, int, double>> rows;
  std::optional<std::string> mode;
  detail::for_each_line(path, [&](const json& j) {
    rows.emplace_back(j.at("request_id").get<RequestId>(), j.at("k").get<int>(),
                      j.at("w").get<double>());
    const std::string m = j.at("mode").get<std::string>();
    if (mode && *mode != m) throw std::runtime_error(path.string() + ": mixed weight modes");
    mode = m;
    max_k = std::max(max_k, j.at("k").get<int>());
  });
  if (rows.empty()) throw std::runtime_error(path.string() + ": no weight rows");
  if (!prop::parse_weight_mode(*mode)) {
    throw std::runtime_error(path.string() + ": unknown weight mode '" + *mode + "'");
  }
  t.mode = *prop::parse_weight_mode(*mode);
  for (const auto& [rid, k, w] : rows) {
    auto [it, fresh] = row_of.try_emplace(rid, t.request_ids.size());
    if (fresh) {
      t.request_ids.push_back(rid);
      t.w.emplace_back(static_cast<std::size_t>(max_k), 0.0);
    }
    if (k < 1 || k > max_k) throw std::runtime_error(path.string() + ": bad target index");
    t.w[it->second][static_cast<std::size_t>(k - 1)] = w;
  }
  t.clipped.assign(static_cast<std::size_t>(max_k), 0);
  t.saturated.assign(static_cast<std::size_t>(max_k), 0);
  return t;
}

inline void save_weights_report(const prop::WeightTable& t,
                                const std::vector<prop::WeightColumnStats>& stats,
                                const std::vector<std::optional<double>>& aucs,
                                const std::filesystem::path& path) {
  json targets = json::array();
  for (std::size_t i = 0; i < stats.size(); ++i) {
    json row{{"k", stats[i].k},
             {"mean", stats[i].mean},
             {"max", stats[i].max},
             {"ess", stats[i].ess},
             {"clipped_fraction", stats[i].clipped_fraction},
             {"saturated", stats[i].saturated}};
    row["auc"] = i < aucs.size() && aucs[i] ? json(*aucs[i]) : json(nullptr);
    targets.push_back(std::move(row));
  }
  json j{{"mode", std::string(prop::weight_mode_name(t.mode))},
         {"rows", t.rows()},
         {"targets", targets}};
  j["clip_cap"] = t.clip_cap ? json(*t.clip_cap) : json(nullptr);
  write_file(path, j.dump(2) + "\n");
}

inline void save_model(const reward::RewardModel& m, const std::filesystem::path& path) {
  const json j{{"kind", std::string(reward::model_kind_name(m.kind))},
               {"hidden", m.hidden},
               {"d", m.features.d},
               {"q", m.features.q},
               {"theta", m.theta},
               {"link", std::string(reward::link_name(m.link))},
               {"loss_kind", std::string(reward::loss_name(m.loss_kind))},
               {"meta",
                {{"final_loss", m.meta.final_loss},
                 {"epoch_losses", m.meta.epoch_losses},
                 {"weight_mode", std::string(reward::train_mode_name(m.meta.weight_mode))},
                 {"beta", m.meta.beta}}}};
  write_file(path, j.dump(2) + "\n");
}

inline reward::RewardModel load_model(const std::filesystem::path& path) {
  const json j = json::parse(read_file(path));
  reward::RewardModel m;
  m.kind = j.at("kind").get<std::string>() == "mlp" ? reward::ModelKind::mlp
                                                    : reward::ModelKind::linear;
  m.hidden = j.at("hidden").get<int>();
  m.features = FeatureMap{j.at("d").get<int>(), j.at("q").get<int>()};
  m.theta = detail::features_from(j.at("theta"));
  m.link = j.at("link").get<std::string>() == "identity" ? reward::LinkKind::identity
                                                         : reward::LinkKind::sigmoid;
  m.loss_kind = j.at("loss_kind").get<std::string>() == "squared" ? reward::LossKind::squared
                                                                  : reward::LossKind::log_loss;
  const json& meta = j.at("meta");
  m.meta.final_loss = meta.at("final_loss").get<double>();
  m.meta.epoch_losses = detail::features_from(meta.at("epoch_losses"));
  m.meta.weight_mode = meta.at("weight_mode").get<std::string>() == "proposed"
                           ? reward::TrainMode::proposed
                           : reward::TrainMode::baseline;
  m.meta.beta = meta.at("beta").get<double>();
  const std::size_t expect = reward::theta_size(m.kind, m.features.dim(), m.hidden);
  if (m.theta.size() != expect) {
    throw std::runtime_error(path.string() + ": theta length " + std::to_string(m.theta.size()) +
                             " does not match layout (expected " + std::to_string(expect) + ")");
  }
  return m;
}

namespace detail {

inline json opt_to_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

inline std::optional<double> opt_from_json(const json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<double>();
}

}  // namespace detail

inline json recovery_report_to_json(const est::RecoveryReport& r) {
  json targets = json::array();
  for (const auto& t : r.targets) {
    targets.push_back(json{{"k", t.k},
                           {"true_lift", t.true_lift},
                           {"estimated_lift", t.estimated_lift},
                           {"rec", detail::opt_to_json(t.rec)}});
  }
  return json{{"method", std::string(est::method_name(r.method))},
              {"targets", targets},
              {"rec_avg", detail::opt_to_json(r.aggregate.rec_avg)},
              {"rec_dev_mad", detail::opt_to_json(r.aggregate.rec_dev_mad)},
              {"rec_dev_std", detail::opt_to_json(r.aggregate.rec_dev_std)},
              {"rec_cv", detail::opt_to_json(r.aggregate.rec_cv)},
              {"tau", r.tau},
              {"degenerate", r.degenerate}};
}

inline est::RecoveryReport recovery_report_from_json(const json& j) {
  est::RecoveryReport r;
  const auto method = est::parse_method(j.at("method").get<std::string>());
  if (!method) throw std::runtime_error("unknown method '" + j.at("method").get<std::string>() + "'");
  r.method = *method;
  for (const auto& t : j.at("targets")) {
    est::TargetRecovery tr;
    tr.k = t.at("k").get<int>();
    tr.true_lift = t.at("true_lift").get<double>();
    tr.estimated_lift = t.at("estimated_lift").get<double>();
    tr.rec = detail::opt_from_json(t.at("rec"));
    r.targets.push_back(std::move(tr));
  }
  r.aggregate.rec_avg = detail::opt_from_json(j.at("rec_avg"));
  r.aggregate.rec_dev_mad = detail::opt_from_json(j.at("rec_dev_mad"));
  r.aggregate.rec_dev_std = detail::opt_from_json(j.at("rec_dev_std"));
  r.aggregate.rec_cv = detail::opt_from_json(j.at("rec_cv"));
  r.tau = j.at("tau").get<double>();
  r.degenerate = j.at("degenerate").get<bool>();
  return r;
}

inline void save_recovery_reports(const std::vector<est::RecoveryReport>& reports,
                                  const std::string& config_hash, std::uint64_t seed,
                                  const std::filesystem::path& path) {
  json methods = json::array();
  for (const auto& r : reports) methods.push_back(recovery_report_to_json(r));
  const json j{{"config_hash", config_hash}, {"seed", seed}, {"methods", methods}};
  write_file(path, j.dump(2) + "\n");
}

inline std::vector<est::RecoveryReport> load_recovery_reports(
    const std::filesystem::path& path) {
  const json j = json::parse(read_file(path));
  std::vector<est::RecoveryReport> out;
  for (const auto& m : j.at("methods")) out.push_back(recovery_report_from_json(m));
  return out;
}

// Key-sorted JSON with output_dir removed, hashed with FNV-1a. Key order in
// the input never matters; relocating outputs never changes the hash.
inline std::string config_hash(json config) {
  config.erase("output_dir");
  const std::string canon = config.dump();
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(rng::fnv1a(canon)));
  return std::string(buf, 16);
}

struct SummaryRow {
  std::string method;
  std::string seed;
  est::RecAggregate agg;
  bool operator==(const SummaryRow&) const = default;
};

// summary.csv: comma-delimited, LF endings, header mandatory; undefined
// aggregates are empty cells.
inline std::string summary_csv(const std::vector<SummaryRow>& rows) {
  std::string out = "method,seed,rec_cv,rec_avg,rec_dev_mad,rec_dev_std\n";
  const auto cell = [](const std::optional<double>& v) {
    return v ? format_double(*v) : std::string();
  };
  for (const auto& r : rows) {
    out += r.method;
    out += ',';
    out += r.seed;
    out += ',';
    out += cell(r.agg.rec_cv);
    out += ',';
    out += cell(r.agg.rec_avg);
    out += ',';
    out += cell(r.agg.rec_dev_mad);
    out += ',';
    out += cell(r.agg.rec_dev_std);
    out += '\n';
  }
  return out;
}

struct MethodSummary {
  std::string method;
  std::optional<double> mean_rec_cv;
  std::vector<double> seed_rec_cvs;
  bool operator==(const MethodSummary&) const = default;
};

// Static grouped bar chart of mean rec_cv with one dot per seed. No
// timestamps; the header carries a hash of the plotted numbers instead.
inline std::string comparison_svg(const std::vector<MethodSummary>& methods) {
  std::string data_key;
  for (const auto& m : methods) {
    data_key += m.method;
    data_key += m.mean_rec_cv ? format_double(*m.mean_rec_cv) : "-";
    for (double v : m.seed_rec_cvs) data_key += ";" + format_double(v);
  }
  char hash_buf[17];
  std::snprintf(hash_buf, sizeof(hash_buf), "%016llx",
                static_cast<unsigned long long>(rng::fnv1a(data_key)));

  const double width = 640.0;
  const double height = 400.0;
  const double margin_left = 70.0;
  const double margin_bottom = 50.0;
  const double margin_top = 30.0;
  const double plot_w = width - margin_left - 20.0;
  const double plot_h = height - margin_top - margin_bottom;

  double max_v = 0.0;
  for (const auto& m : methods) {
    if (m.mean_rec_cv) max_v = std::max(max_v, std::abs(*m.mean_rec_cv));
    for (double v : m.seed_rec_cvs) max_v = std::max(max_v, std::abs(v));
  }
  if (max_v == 0.0) max_v = 1.0;
  const double scale = plot_h / (max_v * 1.1);
  const double base_y = margin_top + plot_h;

  std::string svg;
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + format_double(width) +
         "\" height=\"" + format_double(height) + "\">\n";
  svg += "<!-- content-hash: " + std::string(hash_buf, 16) + " -->\n";
  svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg += "<text x=\"" + format_double(margin_left) + "\" y=\"18\" font-family=\"sans-serif\" "
         "font-size=\"14\">mean rec_cv per method (dots: seeds)</text>\n";
  svg += "<line x1=\"" + format_double(margin_left) + "\" y1=\"" + format_double(base_y) +
         "\" x2=\"" + format_double(width - 20.0) + "\" y2=\"" + format_double(base_y) +
         "\" stroke=\"black\"/>\n";
  svg += "<line x1=\"" + format_double(margin_left) + "\" y1=\"" + format_double(margin_top) +
         "\" x2=\"" + format_double(margin_left) + "\" y2=\"" + format_double(base_y) +
         "\" stroke=\"black\"/>\n";
  for (int tick = 0; tick <= 4; ++tick) {
    const double v = max_v * 1.1 * tick / 4.0;
    const double y = base_y - v * scale;
    svg += "<line x1=\"" + format_double(margin_left - 4.0) + "\" y1=\"" + format_double(y) +
           "\" x2=\"" + format_double(margin_left) + "\" y2=\"" + format_double(y) +
           "\" stroke=\"black\"/>\n";
    svg += "<text x=\"" + format_double(margin_left - 8.0) + "\" y=\"" + format_double(y + 4.0) +
           "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" +
           format_double(v) + "</text>\n";
  }

  const char* fills[] = {"#4878a8", "#b8860b", "#888888"};
  const double group_w = plot_w / std::max<std::size_t>(methods.size(), 1);
  for (std::size_t i = 0; i < methods.size(); ++i) {
    const auto& m = methods[i];
    const double cx = margin_left + group_w * (static_cast<double>(i) + 0.5);
    const double bar_w = group_w * 0.5;
    if (m.mean_rec_cv) {
      const double h = std::max(0.0, *m.mean_rec_cv) * scale;
      svg += "<rect x=\"" + format_double(cx - bar_w / 2.0) + "\" y=\"" +
             format_double(base_y - h) + "\" width=\"" + format_double(bar_w) + "\" height=\"" +
             format_double(h) + "\" fill=\"" + fills[i % 3] + "\"/>\n";
    }
    for (double v : m.seed_rec_cvs) {
      svg += "<circle cx=\"" + format_double(cx + bar_w * 0.45) + "\" cy=\"" +
             format_double(base_y - std::max(0.0, v) * scale) +
             "\" r=\"3\" fill=\"black\" fill-opacity=\"0.6\"/>\n";
    }
    svg += "<text x=\"" + format_double(cx) + "\" y=\"" + format_double(base_y + 18.0) +
           "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">" + m.method +
           "</text>\n";
  }
  svg += "</svg>\n";
  return svg;
}

}  // namespace cfeval::io
