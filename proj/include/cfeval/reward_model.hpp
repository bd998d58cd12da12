#pragma once

// Reward model h(x,a): generalized-linear on the shared feature map (optional
// one-hidden-layer variant), trained by minibatch SGD either unweighted
// (baseline) or with per-row overlap weights derived from the density-ratio
// table (proposed). Sample weights are frozen inputs; training never touches
// the propensity module.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "cfeval/core.hpp"
#include "cfeval/features.hpp"
#include "cfeval/propensity.hpp"
#include "cfeval/rng.hpp"

namespace cfeval::reward {

enum class LinkKind { sigmoid, identity };
enum class LossKind { log_loss, squared };
enum class ModelKind { linear, mlp };
enum class TrainMode { proposed, baseline };

inline std::string_view link_name(LinkKind l) {
  return l == LinkKind::sigmoid ? "sigmoid" : "identity";
}
inline std::string_view loss_name(LossKind l) {
  return l == LossKind::log_loss ? "log_loss" : "squared";
}
inline std::string_view model_kind_name(ModelKind m) {
  return m == ModelKind::linear ? "linear" : "mlp";
}
inline std::string_view train_mode_name(TrainMode m) {
  return m == TrainMode::proposed ? "proposed" : "baseline";
}

struct TrainMeta {
  double final_loss = 0.0;
  std::vector<double> epoch_losses;
  TrainMode weight_mode = TrainMode::baseline;
  double beta = 0.0;
  bool operator==(const TrainMeta&) const = default;
};

inline std::size_t theta_size(ModelKind kind, int feature_dim, int hidden) {
  if (kind == ModelKind::linear) return static_cast<std::size_t>(feature_dim);
  return static_cast<std::size_t>(hidden) * static_cast<std::size_t>(feature_dim) +
         2 * static_cast<std::size_t>(hidden) + 1;
}

// Parameter layout: linear = one weight per feature (bias included in the
// map); mlp = [W1 row-major hidden x dim; b1; w2; b2].
struct RewardModel {
  ModelKind kind = ModelKind::linear;
  int hidden = 0;
  FeatureMap features{0, 0};
  std::vector<double> theta;
  LinkKind link = LinkKind::sigmoid;
  LossKind loss_kind = LossKind::log_loss;
  TrainMeta meta;

  double raw_score(std::span<const double> phi) const {
    if (kind == ModelKind::linear) {
      double z = 0.0;
      for (std::size_t j = 0; j < phi.size(); ++j) z += theta[j] * phi[j];
      return z;
    }
    const std::size_t dim = phi.size();
    const std::size_t h = static_cast<std::size_t>(hidden);
    const double* w1 = theta.data();
    const double* b1 = w1 + h * dim;
    const double* w2 = b1 + h;
    const double b2 = *(w2 + h);
    double z = b2;
    for (std::size_t j = 0; j < h; ++j) {
      double pre = b1[j];
      const double* row = w1 + j * dim;
      for (std::size_t t = 0; t < dim; ++t) pre += row[t] * phi[t];
      z += w2[j] * std::tanh(pre);
    }
    return z;
  }

  double predict(const Context& x, const Ad& a) const {
    std::vector<double> phi(static_cast<std::size_t>(features.dim()));
    features.write(x, a, phi);
    const double z = raw_score(phi);
    return link == LinkKind::sigmoid ? sim::sigmoid(z) : z;
  }

  bool operator==(const RewardModel&) const = default;
};

struct TrainConfig {
  double beta = 1.0;
  double learning_rate = 0.5;
  int epochs = 60;
  int batch_size = 512;
  double l2 = 1e-6;
  std::uint64_t seed = 11;
  TrainMode weight_mode = TrainMode::proposed;
  RewardMode reward_mode = RewardMode::bernoulli;
  double overlap_floor = 0.0;
  ModelKind kind = ModelKind::linear;
  int hidden = 32;
  bool operator==(const TrainConfig&) const = default;
};

inline std::vector<std::string> config_violations(const TrainConfig& c) {
  std::vector<std::string> out;
  if (!(c.beta >= 0.0)) out.push_back("beta must be nonnegative");
  if (!(c.learning_rate > 0.0)) out.push_back("learning_rate must be positive");
  if (c.epochs < 1) out.push_back("epochs must be >= 1");
  if (c.batch_size < 1) out.push_back("batch_size must be >= 1");
  if (!(c.l2 >= 0.0)) out.push_back("l2 must be nonnegative");
  if (!(c.overlap_floor >= 0.0)) out.push_back("overlap_floor must be nonnegative");
  if (c.kind == ModelKind::mlp && c.hidden < 1) out.push_back("hidden width must be >= 1");
  return out;
}

// Per-row overlap emphasis: sum_k |w_k - 1| + beta * sum_{k<k'} |w_k - w_k'|.
// A row every target agrees on (all w = 1) scores exactly 0.
inline double sample_weight(std::span<const double> row_weights, double beta) {
  double s = 0.0;
  for (double w : row_weights) s += std::abs(w - 1.0);
  for (std::size_t k = 0; k + 1 < row_weights.size(); ++k) {
    for (std::size_t k2 = k + 1; k2 < row_weights.size(); ++k2) {
      s += beta * std::abs(row_weights[k] - row_weights[k2]);
    }
  }
  return s;
}

// Featurized training rows with frozen per-row sample weights.
struct Dataset {
  std::size_t rows = 0;
  std::size_t dim = 0;
  std::vector<double> phi;
  std::vector<double> y;
  std::vector<double> sw;

  std::span<const double> row(std::size_t i) const {
    return std::span<const double>(phi.data() + i * dim, dim);
  }
};

// Proposed mode reads the weight table (which must align row-for-row with
// the data); baseline mode ignores it and uses weight 1 everywhere.
inline Dataset make_dataset(const std::vector<LoggedSample>& rows,
                            const prop::WeightTable& table, const TrainConfig& cfg) {
  if (rows.empty()) throw std::invalid_argument("make_dataset: no training rows");
  const FeatureMap fmap{static_cast<int>(rows.front().context.features.size()),
                        static_cast<int>(rows.front().ad.features.size())};
  Dataset data;
  data.rows = rows.size();
  data.dim = static_cast<std::size_t>(fmap.dim());
  data.phi.resize(data.rows * data.dim);
  data.y.resize(data.rows);
  data.sw.resize(data.rows);

  if (cfg.weight_mode == TrainMode::proposed) {
    if (table.rows() != rows.size()) {
      throw std::invalid_argument("make_dataset: weight table has " +
                                  std::to_string(table.rows()) + " rows, data has " +
                                  std::to_string(rows.size()));
    }
  }
  for (std::size_t i = 0; i < rows.size(); ++i) {
    fmap.write(rows[i].context, rows[i].ad,
               std::span<double>(data.phi.data() + i * data.dim, data.dim));
    data.y[i] = rows[i].reward;
    if (cfg.weight_mode == TrainMode::proposed) {
      if (table.request_ids[i] != rows[i].context.request_id) {
        throw std::invalid_argument(
            "make_dataset: weight table is not aligned with the training rows at index " +
            std::to_string(i));
      }
      data.sw[i] = sample_weight(table.w[i], cfg.beta) + cfg.overlap_floor;
    } else {
      data.sw[i] = 1.0;
    }
  }
  return data;
}

namespace detail {

inline double link_loss_and_dz(LinkKind link, LossKind loss, double z, double y, double& dz) {
  if (loss == LossKind::log_loss) {
    if (link != LinkKind::sigmoid) {
      throw std::invalid_argument("log_loss requires the sigmoid link");
    }
    dz = sim::sigmoid(z) - y;
    return (z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z))) - y * z;
  }
  const double h = link == LinkKind::sigmoid ? sim::sigmoid(z) : z;
  const double diff = h - y;
  dz = 2.0 * diff * (link == LinkKind::sigmoid ? h * (1.0 - h) : 1.0);
  return diff * diff;
}

}  // namespace detail

// Weighted batch objective: sum_i sw_i * L(h(phi_i), y_i) + l2 * |theta|^2 / 2.
// Writes the analytic gradient into `grad` (resized to theta's length).
inline double loss_and_grad(const RewardModel& model, const Dataset& data,
                            std::span<const std::size_t> batch, double l2,
                            std::vector<double>& grad) {
  grad.assign(model.theta.size(), 0.0);
  double loss = 0.0;
  const std::size_t dim = data.dim;
  const std::size_t h = static_cast<std::size_t>(model.hidden);
  std::vector<double> hidden_act(model.kind == ModelKind::mlp ? h : 0);

  for (std::size_t i : batch) {
    const std::span<const double> phi = data.row(i);
    const double swi = data.sw[i];
    double z;
    if (model.kind == ModelKind::linear) {
      z = 0.0;
      for (std::size_t j = 0; j < dim; ++j) z += model.theta[j] * phi[j];
    } else {
      const double* w1 = model.theta.data();
      const double* b1 = w1 + h * dim;
      const double* w2 = b1 + h;
      z = *(w2 + h);
      for (std::size_t j = 0; j < h; ++j) {
        double pre = b1[j];
        const double* row = w1 + j * dim;
        for (std::size_t t = 0; t < dim; ++t) pre += row[t] * phi[t];
        hidden_act[j] = std::tanh(pre);
        z += w2[j] * hidden_act[j];
      }
    }
    double dz;
    loss += swi * detail::link_loss_and_dz(model.link, model.loss_kind, z, data.y[i], dz);
    const double g = swi * dz;
    if (g == 0.0) continue;
    if (model.kind == ModelKind::linear) {
      for (std::size_t j = 0; j < dim; ++j) grad[j] += g * phi[j];
    } else {
      double* gw1 = grad.data();
      double* gb1 = gw1 + h * dim;
      double* gw2 = gb1 + h;
      const double* w2 = model.theta.data() + h * dim + h;
      gw2[h] += g;
      for (std::size_t j = 0; j < h; ++j) {
        gw2[j] += g * hidden_act[j];
        const double dpre = g * w2[j] * (1.0 - hidden_act[j] * hidden_act[j]);
        if (dpre == 0.0) continue;
        gb1[j] += dpre;
        double* grow = gw1 + j * dim;
        for (std::size_t t = 0; t < dim; ++t) grow[t] += dpre * phi[t];
      }
    }
  }
  if (l2 != 0.0) {
    double ridge = 0.0;
    for (std::size_t j = 0; j < model.theta.size(); ++j) {
      ridge += model.theta[j] * model.theta[j];
      grad[j] += l2 * model.theta[j];
    }
    loss += 0.5 * l2 * ridge;
  }
  return loss;
}

// Central-difference gradient of the same objective, for checking.
inline std::vector<double> numeric_gradient(const RewardModel& model, const Dataset& data,
                                            std::span<const std::size_t> batch, double l2,
                                            double eps = 1e-5) {
  RewardModel probe = model;
  std::vector<double> out(model.theta.size());
  std::vector<double> scratch;
  for (std::size_t j = 0; j < model.theta.size(); ++j) {
    const double keep = probe.theta[j];
    probe.theta[j] = keep + eps;
    const double up = loss_and_grad(probe, data, batch, l2, scratch);
    probe.theta[j] = keep - eps;
    const double down = loss_and_grad(probe, data, batch, l2, scratch);
    probe.theta[j] = keep;
    out[j] = (up - down) / (2.0 * eps);
  }
  return out;
}

inline RewardModel init_model(const TrainConfig& cfg, const FeatureMap& fmap) {
  RewardModel m;
  m.kind = cfg.kind;
  m.hidden = cfg.kind == ModelKind::mlp ? cfg.hidden : 0;
  m.features = fmap;
  m.link = cfg.reward_mode == RewardMode::bernoulli ? LinkKind::sigmoid : LinkKind::identity;
  m.loss_kind = cfg.reward_mode == RewardMode::bernoulli ? LossKind::log_loss : LossKind::squared;
  m.theta.assign(theta_size(m.kind, fmap.dim(), m.hidden), 0.0);
  if (m.kind == ModelKind::mlp) {
    // Zero output weights keep the initial prediction flat; random first
    // layer breaks hidden-unit symmetry so gradients can separate units.
    auto stream = rng::derive(cfg.seed, "mlp-init");
    const double scale = 1.0 / std::sqrt(static_cast<double>(fmap.dim()));
    const std::size_t w1_len = static_cast<std::size_t>(m.hidden) *
                               static_cast<std::size_t>(fmap.dim());
    for (std::size_t j = 0; j < w1_len; ++j) m.theta[j] = stream.normal() * scale;
  }
  return m;
}

// Minibatch SGD with a seeded shuffle per epoch. Batch updates use the batch
// mean of the weighted gradient plus the l2 pull; epoch losses are recorded
// over the full dataset.
inline RewardModel train(const std::vector<LoggedSample>& rows, const prop::WeightTable& table,
                         const TrainConfig& cfg) {
  {
    const auto violations = config_violations(cfg);
    if (!violations.empty()) {
      throw std::invalid_argument("train: invalid config: " + violations.front());
    }
  }
  const Dataset data = make_dataset(rows, table, cfg);
  const FeatureMap fmap{static_cast<int>(rows.front().context.features.size()),
                        static_cast<int>(rows.front().ad.features.size())};
  RewardModel model = init_model(cfg, fmap);
  model.meta.weight_mode = cfg.weight_mode;
  model.meta.beta = cfg.weight_mode == TrainMode::proposed ? cfg.beta : 0.0;

  std::vector<std::size_t> order(data.rows);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<std::size_t> all = order;
  std::vector<double> grad;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    auto stream = rng::derive(cfg.seed, "shuffle", static_cast<std::uint64_t>(epoch));
    stream.shuffle(order);
    for (std::size_t start = 0; start < data.rows;
         start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t stop =
          std::min(data.rows, start + static_cast<std::size_t>(cfg.batch_size));
      const std::span<const std::size_t> batch(order.data() + start, stop - start);
      const double batch_loss = loss_and_grad(model, data, batch, 0.0, grad);
      if (!std::isfinite(batch_loss)) {
        throw std::runtime_error("train: loss diverged at epoch " + std::to_string(epoch) +
                                 ", batch " + std::to_string(start / cfg.batch_size) +
                                 "; reduce the learning rate");
      }
      const double inv_b = 1.0 / static_cast<double>(stop - start);
      for (std::size_t j = 0; j < model.theta.size(); ++j) {
        model.theta[j] -= cfg.learning_rate * (grad[j] * inv_b + cfg.l2 * model.theta[j]);
      }
    }
    model.meta.epoch_losses.push_back(loss_and_grad(model, data, all, cfg.l2, grad));
  }
  model.meta.final_loss = model.meta.epoch_losses.back();
  return model;
}

}  // namespace cfeval::reward
