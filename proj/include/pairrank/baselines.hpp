#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pairrank/io.hpp"
#include "pairrank/pairs.hpp"
#include "pairrank/types.hpp"

namespace pairrank::baselines {

/// Training loss blew up (non-finite, or far above its starting value).
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

/// log(1 + exp(z)) without overflow.
inline double softplus(double z) {
  return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
}

// A run diverges when the loss turns non-finite or exceeds this multiple of its initial value.
inline constexpr double kDivergenceFactor = 100.0;

// ---------------------------------------------------------------------------
// RankNet
// ---------------------------------------------------------------------------

/// Pairwise scorer. hidden_width == 0 is a linear scorer s(x) = w^T x;
/// otherwise s(x) = v^T relu(W x + c) with one hidden layer. Output biases are
/// omitted since they cancel in every score difference.
/// Flat parameter layout: linear [w]; hidden [W (row-major, hidden x dim), c, v].
struct RankNetModel {
  std::size_t dim = 0;
  std::size_t hidden_width = 0;
  std::vector<double> params;
  double final_loss = 0.0;
  std::size_t epochs = 0;

  static std::size_t param_count(std::size_t dim, std::size_t hidden) {
    return hidden == 0 ? dim : hidden * dim + 2 * hidden;
  }

  double score(std::span<const double> x) const {
    if (x.size() != dim) throw UsageError("feature dimension does not match RankNet input");
    if (hidden_width == 0) return detail::dot(params, x);
    const double* W = params.data();
    const double* c = W + hidden_width * dim;
    const double* v = c + hidden_width;
    double s = 0.0;
    for (std::size_t h = 0; h < hidden_width; ++h) {
      const double pre = detail::dot({W + h * dim, dim}, x) + c[h];
      if (pre > 0.0) s += v[h] * pre;
    }
    return s;
  }

  /// Adds coeff * d s(x) / d params to `grad`.
  void accumulate_score_grad(std::span<const double> x, double coeff, std::span<double> grad) const {
    if (hidden_width == 0) {
      detail::axpy(coeff, x, grad);
      return;
    }
    const double* W = params.data();
    const double* c = W + hidden_width * dim;
    const double* v = c + hidden_width;
    double* gW = grad.data();
    double* gc = gW + hidden_width * dim;
    double* gv = gc + hidden_width;
    for (std::size_t h = 0; h < hidden_width; ++h) {
      const double pre = detail::dot({W + h * dim, dim}, x) + c[h];
      if (pre <= 0.0) continue;
      gv[h] += coeff * pre;
      const double back = coeff * v[h];
      gc[h] += back;
      detail::axpy(back, x, {gW + h * dim, dim});
    }
  }
};

struct LossGrad {
  double loss = 0.0;
  std::vector<double> grad;
};

/// Mean over pairs of -log sigmoid(s(x_u) - s(x_v)) and its exact gradient.
inline LossGrad ranknet_loss_grad(const RankNetModel& model, const TrainingPairs& tp) {
  if (tp.empty()) throw UsageError("RankNet needs at least one pair");
  if (tp.dim != model.dim) throw UsageError("pair dimension does not match RankNet input");
  std::vector<double> scores(tp.row_count());
  for (std::size_t r = 0; r < scores.size(); ++r) scores[r] = model.score(tp.row(r));

  const double inv_n = 1.0 / static_cast<double>(tp.pair_count());
  std::vector<double> coeff(tp.row_count(), 0.0);
  double loss = 0.0;
  for (const auto& [u, v] : tp.pairs) {
    const double z = scores[u] - scores[v];
    loss += softplus(-z);
    const double dz = -sigmoid(-z) * inv_n;
    coeff[u] += dz;
    coeff[v] -= dz;
  }
  LossGrad out{loss * inv_n, std::vector<double>(model.params.size(), 0.0)};
  for (std::size_t r = 0; r < coeff.size(); ++r)
    if (coeff[r] != 0.0) model.accumulate_score_grad(tp.row(r), coeff[r], out.grad);
  return out;
}

inline RankNetModel init_ranknet(std::size_t dim, std::size_t hidden_width, std::uint64_t seed) {
  RankNetModel m;
  m.dim = dim;
  m.hidden_width = hidden_width;
  m.params.assign(RankNetModel::param_count(dim, hidden_width), 0.0);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  if (hidden_width == 0) {
    for (double& p : m.params) p = 0.01 * normal(rng);
  } else {
    const double s1 = std::sqrt(2.0 / static_cast<double>(dim));
    const double s2 = std::sqrt(1.0 / static_cast<double>(hidden_width));
    std::size_t i = 0;
    for (; i < hidden_width * dim; ++i) m.params[i] = s1 * normal(rng);
    for (std::size_t h = 0; h < hidden_width; ++h) m.params[i++] = 0.01;
    for (std::size_t h = 0; h < hidden_width; ++h) m.params[i++] = s2 * normal(rng);
  }
  return m;
}

struct RankNetParams {
  double lr = 0.1;
  std::size_t epochs = 200;
  std::uint64_t seed = 0;
  std::size_t hidden_width = 0;
};

/// Full-batch gradient descent; `loss_history`, when given, receives the loss before each step.
inline RankNetModel train_ranknet(const TrainingPairs& tp, const RankNetParams& hp,
                                  std::vector<double>* loss_history = nullptr) {
  if (!(hp.lr > 0.0)) throw UsageError("learning rate must be positive");
  if (hp.epochs < 1) throw UsageError("epochs must be >= 1");
  if (tp.empty()) throw UsageError("RankNet needs at least one pair");
  RankNetModel m = init_ranknet(tp.dim, hp.hidden_width, hp.seed);
  double initial = 0.0;
  for (std::size_t e = 0; e < hp.epochs; ++e) {
    auto lg = ranknet_loss_grad(m, tp);
    if (e == 0) initial = lg.loss;
    if (!std::isfinite(lg.loss) || lg.loss > kDivergenceFactor * std::max(initial, 1e-12))
      throw DivergenceError("RankNet training diverged at epoch " + std::to_string(e));
    if (loss_history) loss_history->push_back(lg.loss);
    detail::axpy(-hp.lr, lg.grad, m.params);
  }
  m.final_loss = ranknet_loss_grad(m, tp).loss;
  if (!std::isfinite(m.final_loss) || m.final_loss > kDivergenceFactor * std::max(initial, 1e-12))
    throw DivergenceError("RankNet training diverged after the final epoch");
  m.epochs = hp.epochs;
  return m;
}

// ---------------------------------------------------------------------------
// Pointwise logistic classifier
// ---------------------------------------------------------------------------

struct LogisticModel {
  std::vector<double> w;
  double bias = 0.0;
  double final_loss = 0.0;

  /// Pre-sigmoid logit; ranks identically to the probability.
  double score(std::span<const double> x) const {
    if (x.size() != w.size()) throw UsageError("feature dimension does not match logistic model");
    return detail::dot(w, x) + bias;
  }
  double probability(std::span<const double> x) const { return sigmoid(score(x)); }
};

/// Row-major feature matrix with binary labels.
struct LabeledSet {
  std::size_t dim = 0;
  std::vector<double> rows;
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
  std::span<const double> row(std::size_t i) const { return {rows.data() + i * dim, dim}; }

  void add(std::span<const double> x, int label) {
    if (dim == 0) dim = x.size();
    if (x.size() != dim) throw DataError("dimension mismatch in labeled set");
    rows.insert(rows.end(), x.begin(), x.end());
    labels.push_back(label ? 1 : 0);
  }

  static LabeledSet from_groups(std::span<const QueryGroup> groups, std::size_t dim, int threshold = 3) {
    LabeledSet s;
    s.dim = dim;
    for (const auto& g : groups)
      for (const auto& r : g.candidates) s.add(r.features, r.relevance >= threshold);
    return s;
  }
};

/// Mean binary cross-entropy; gradient laid out as [w..., bias].
inline LossGrad logistic_loss_grad(const LogisticModel& m, const LabeledSet& data) {
  if (data.size() == 0) throw UsageError("logistic loss on an empty set");
  LossGrad out{0.0, std::vector<double>(m.w.size() + 1, 0.0)};
  const double inv_n = 1.0 / static_cast<double>(data.size());
  std::span<double> gw(out.grad.data(), m.w.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    const double z = m.score(data.row(i));
    const int y = data.labels[i];
    out.loss += y ? softplus(-z) : softplus(z);
    const double r = (sigmoid(z) - y) * inv_n;
    detail::axpy(r, data.row(i), gw);
    out.grad.back() += r;
  }
  out.loss *= inv_n;
  return out;
}

struct LogisticParams {
  double lr = 0.5;
  std::size_t epochs = 300;
  std::uint64_t seed = 0;  // parameters start at zero; kept for interface symmetry with RankNet
};

inline LogisticModel train_logistic(const LabeledSet& data, const LogisticParams& hp) {
  if (!(hp.lr > 0.0)) throw UsageError("learning rate must be positive");
  if (hp.epochs < 1) throw UsageError("epochs must be >= 1");
  std::size_t pos = 0;
  for (int l : data.labels) pos += l ? 1 : 0;
  if (pos == 0 || pos == data.size()) throw UsageError("logistic training needs both classes");

  LogisticModel m;
  m.w.assign(data.dim, 0.0);
  double initial = 0.0;
  for (std::size_t e = 0; e < hp.epochs; ++e) {
    auto lg = logistic_loss_grad(m, data);
    if (e == 0) initial = lg.loss;
    if (!std::isfinite(lg.loss) || lg.loss > kDivergenceFactor * initial)
      throw DivergenceError("logistic training diverged at epoch " + std::to_string(e));
    detail::axpy(-hp.lr, std::span<const double>(lg.grad.data(), m.w.size()), m.w);
    m.bias -= hp.lr * lg.grad.back();
  }
  m.final_loss = logistic_loss_grad(m, data).loss;
  return m;
}

// ---------------------------------------------------------------------------
// Scoring and files
// ---------------------------------------------------------------------------

inline double predict_score(const RankNetModel& m, std::span<const double> x) { return m.score(x); }
inline double predict_score(const LogisticModel& m, std::span<const double> x) { return m.score(x); }

template <class Model>
Ranking rank(const Model& m, const QueryGroup& group) {
  std::vector<double> scores;
  scores.reserve(group.size());
  for (const auto& r : group.candidates) scores.push_back(predict_score(m, r.features));
  return rank_by_scores(group, scores);
}

inline nlohmann::json to_json(const RankNetModel& m) {
  return {{"architecture",
           {{"type", "ranknet"},
            {"dim", m.dim},
            {"hidden_width", m.hidden_width},
            {"activation", m.hidden_width == 0 ? "identity" : "relu"}}},
          {"params", m.params},
          {"meta", {{"final_loss", m.final_loss}, {"epochs", m.epochs}}}};
}

inline nlohmann::json to_json(const LogisticModel& m) {
  std::vector<double> flat = m.w;
  flat.push_back(m.bias);
  return {{"architecture", {{"type", "logistic"}, {"dim", m.w.size()}}},
          {"params", flat},
          {"meta", {{"final_loss", m.final_loss}}}};
}

inline RankNetModel ranknet_from_json(const nlohmann::json& j) {
  RankNetModel m;
  try {
    const auto& a = j.at("architecture");
    if (a.at("type").get<std::string>() != "ranknet") throw DataError("not a RankNet model");
    m.dim = a.at("dim").get<std::size_t>();
    m.hidden_width = a.value("hidden_width", std::size_t{0});
    m.params = j.at("params").get<std::vector<double>>();
    if (j.contains("meta")) m.final_loss = j.at("meta").value("final_loss", 0.0);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed RankNet model: ") + e.what());
  }
  if (m.params.size() != RankNetModel::param_count(m.dim, m.hidden_width))
    throw DataError("RankNet parameter count does not match architecture");
  return m;
}

inline LogisticModel logistic_from_json(const nlohmann::json& j) {
  LogisticModel m;
  try {
    const auto& a = j.at("architecture");
    if (a.at("type").get<std::string>() != "logistic") throw DataError("not a logistic model");
    auto dim = a.at("dim").get<std::size_t>();
    auto flat = j.at("params").get<std::vector<double>>();
    if (flat.size() != dim + 1) throw DataError("logistic parameter count does not match architecture");
    m.bias = flat.back();
    flat.pop_back();
    m.w = std::move(flat);
    if (j.contains("meta")) m.final_loss = j.at("meta").value("final_loss", 0.0);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed logistic model: ") + e.what());
  }
  return m;
}

}  // namespace pairrank::baselines
