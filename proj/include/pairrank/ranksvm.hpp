#pragma once

// Linear RankSVM trained with the 1-slack cutting-plane method.
//
// The outer loop repeatedly asks the separation oracle for the constraint
// most violated by the current w, adds it to a working set, and re-solves the
// dual restricted to that set:
//
//   max_a  sum_k b_k a_k - 1/2 sum_{k,l} a_k a_l g_k^T g_l
//   s.t.   a >= 0,  sum_k a_k <= C,            w = sum_k a_k g_k
//
// where each constraint aggregates a selection c in {0,1}^n of preference pairs:
//   g = (1/n) sum_j c_j (x_u_j - x_v_j),   b = |c|_1 / n.
//
// Loss is the mean pairwise hinge, so the primal is
//   1/2 |w|^2 + C * mean_j max(0, 1 - w^T dx_j),
// i.e. the per-pair slack form with C_pair = C / n.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pairrank/io.hpp"
#include "pairrank/pairs.hpp"
#include "pairrank/types.hpp"

namespace pairrank::ranksvm {

struct SolverConfig {
  double C = 1.0;
  double epsilon = 1e-3;
  std::size_t max_outer_iters = 1000;
  double qp_tolerance = 1e-8;
  std::size_t qp_max_iters = 100000;
  bool use_bias = false;
  std::size_t prune_after = 50;  // drop constraints idle (alpha == 0) this many outer iterations

  void validate() const {
    if (!(C > 0.0)) throw UsageError("C must be positive");
    if (!(epsilon > 0.0)) throw UsageError("epsilon must be positive");
    if (!(qp_tolerance > 0.0)) throw UsageError("qp_tolerance must be positive");
    if (max_outer_iters == 0 || qp_max_iters == 0) throw UsageError("iteration limits must be positive");
  }
};

struct TrainingMeta {
  double objective = 0.0;
  double dual_objective = 0.0;
  double duality_gap = 0.0;
  double xi = 0.0;                // working-set slack at the final w
  double final_violation = 0.0;   // separation-oracle violation at the final w
  std::size_t iterations = 0;
  std::size_t working_set_size = 0;
  bool converged = false;
  bool qp_budget_exhausted = false;
  std::vector<double> dual_history;  // restricted dual optimum after each outer iteration
};

struct LinearModel {
  std::vector<double> w;
  double bias = 0.0;
  SolverConfig config;
  TrainingMeta meta;

  std::size_t dim() const { return w.size(); }
};

// ---------------------------------------------------------------------------
// Separation oracle
// ---------------------------------------------------------------------------

struct Cut {
  std::vector<std::uint8_t> selected;  // c_j
  std::vector<double> g;
  double b = 0.0;
  double violation = 0.0;  // b - w^T g
};

/// Selects every pair with margin below 1; this maximizes b - w^T g over c in {0,1}^n.
inline Cut most_violated_constraint(std::span<const double> w, const TrainingPairs& tp) {
  if (w.size() != tp.dim) throw UsageError("weight dimension does not match training pairs");
  const std::size_t n = tp.pair_count();
  Cut cut;
  cut.selected.assign(n, 0);
  cut.g.assign(tp.dim, 0.0);
  if (n == 0) return cut;

  const auto scores = tp.row_scores(w);
  // accumulate per-row coefficients, then one pass over rows builds g
  std::vector<double> coeff(tp.row_count(), 0.0);
  std::size_t count = 0;
  double shortfall = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    const auto [u, v] = tp.pairs[j];
    const double margin = scores[u] - scores[v];
    if (margin < 1.0) {
      cut.selected[j] = 1;
      ++count;
      shortfall += 1.0 - margin;
      coeff[u] += 1.0;
      coeff[v] -= 1.0;
    }
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t r = 0; r < coeff.size(); ++r)
    if (coeff[r] != 0.0) detail::axpy(coeff[r] * inv_n, tp.row(r), cut.g);
  cut.b = static_cast<double>(count) * inv_n;
  cut.violation = shortfall * inv_n;
  return cut;
}

// ---------------------------------------------------------------------------
// Restricted dual QP
// ---------------------------------------------------------------------------

class WorkingSet {
 public:
  struct Constraint {
    std::vector<double> g;
    double b = 0.0;
    std::size_t idle = 0;
  };

  std::size_t size() const { return constraints_.size(); }
  bool empty() const { return constraints_.empty(); }
  const std::vector<Constraint>& constraints() const { return constraints_; }
  std::span<const double> alphas() const { return alphas_; }
  double gram(std::size_t k, std::size_t l) const { return gram_[k * size() + l]; }

  void add(std::vector<double> g, double b) {
    const std::size_t n = size();
    std::vector<double> next((n + 1) * (n + 1));
    for (std::size_t k = 0; k < n; ++k)
      for (std::size_t l = 0; l < n; ++l) next[k * (n + 1) + l] = gram_[k * n + l];
    for (std::size_t k = 0; k < n; ++k) {
      const double v = detail::dot(constraints_[k].g, g);
      next[k * (n + 1) + n] = v;
      next[n * (n + 1) + k] = v;
    }
    next[n * (n + 1) + n] = detail::squared_norm(g);
    gram_ = std::move(next);
    constraints_.push_back({std::move(g), b, 0});
    alphas_.push_back(0.0);
  }

  /// Removes constraints whose alpha has been zero for `after` consecutive calls.
  void age_and_prune(std::size_t after) {
    std::vector<std::size_t> keep;
    for (std::size_t k = 0; k < size(); ++k) {
      auto& c = constraints_[k];
      c.idle = alphas_[k] == 0.0 ? c.idle + 1 : 0;
      if (c.idle < after) keep.push_back(k);
    }
    if (keep.size() == size()) return;
    const std::size_t n = size(), m = keep.size();
    std::vector<double> gram(m * m);
    std::vector<Constraint> cons;
    std::vector<double> alphas;
    for (std::size_t a = 0; a < m; ++a) {
      for (std::size_t b = 0; b < m; ++b) gram[a * m + b] = gram_[keep[a] * n + keep[b]];
      cons.push_back(std::move(constraints_[keep[a]]));
      alphas.push_back(alphas_[keep[a]]);
    }
    gram_ = std::move(gram);
    constraints_ = std::move(cons);
    alphas_ = std::move(alphas);
  }

  std::vector<double> weights(std::size_t dim) const {
    std::vector<double> w(dim, 0.0);
    for (std::size_t k = 0; k < size(); ++k)
      if (alphas_[k] != 0.0) detail::axpy(alphas_[k], constraints_[k].g, w);
    return w;
  }

  double dual_objective() const {
    double lin = 0.0, quad = 0.0;
    for (std::size_t k = 0; k < size(); ++k) {
      lin += constraints_[k].b * alphas_[k];
      for (std::size_t l = 0; l < size(); ++l) quad += alphas_[k] * alphas_[l] * gram(k, l);
    }
    return lin - 0.5 * quad;
  }

  /// Working-set slack max(0, max_k b_k - w^T g_k).
  double slack(std::span<const double> w) const {
    double xi = 0.0;
    for (const auto& c : constraints_) xi = std::max(xi, c.b - detail::dot(w, c.g));
    return xi;
  }

  std::vector<double>& mutable_alphas() { return alphas_; }

 private:
  std::vector<Constraint> constraints_;
  std::vector<double> gram_;
  std::vector<double> alphas_;
};

struct QpResult {
  std::size_t iterations = 0;
  bool converged = false;
  double dual_objective = 0.0;
};

/// Pairwise coordinate ascent (SMO) on the restricted dual. The budget
/// constraint becomes an equality by adding a slack coordinate with g = 0, b = 0
/// holding C - sum(alpha); each step moves mass from the lowest-gradient
/// coordinate with positive mass to the highest-gradient coordinate, which is
/// exact along that direction. Warm-starts from the current alphas.
inline QpResult solve_restricted_qp(WorkingSet& ws, double C, double tol, std::size_t max_iters = 100000) {
  if (ws.empty()) throw UsageError("restricted QP needs at least one constraint");
  const std::size_t n = ws.size();
  auto& alpha = ws.mutable_alphas();

  // rescale onto the feasible set if C changed since the last solve
  double total = 0.0;
  for (double& a : alpha) total += (a = std::max(a, 0.0));
  if (total > C) {
    for (double& a : alpha) a *= C / total;
    total = C;
  }
  double slack = C - total;

  std::vector<double> grad(n);
  for (std::size_t k = 0; k < n; ++k) {
    double ga = 0.0;
    for (std::size_t l = 0; l < n; ++l) ga += ws.gram(k, l) * alpha[l];
    grad[k] = ws.constraints()[k].b - ga;
  }

  // index n denotes the slack coordinate (gradient identically 0)
  auto grad_of = [&](std::size_t k) { return k == n ? 0.0 : grad[k]; };
  auto value_of = [&](std::size_t k) -> double& { return k == n ? slack : alpha[k]; };
  auto gram_of = [&](std::size_t k, std::size_t l) { return (k == n || l == n) ? 0.0 : ws.gram(k, l); };

  QpResult res;
  for (; res.iterations < max_iters; ++res.iterations) {
    std::size_t up = n, down = n;
    double best_up = -std::numeric_limits<double>::infinity();
    double best_down = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k <= n; ++k) {
      const double gk = grad_of(k);
      if (gk > best_up) {
        best_up = gk;
        up = k;
      }
      if (value_of(k) > 0.0 && gk < best_down) {
        best_down = gk;
        down = k;
      }
    }
    if (best_up - best_down <= tol || up == down) {
      res.converged = true;
      break;
    }
    const double curvature = gram_of(up, up) + gram_of(down, down) - 2.0 * gram_of(up, down);
    double step = value_of(down);
    if (curvature > 0.0) step = std::min(step, (best_up - best_down) / curvature);
    if (step <= 0.0) {
      res.converged = true;
      break;
    }
    value_of(up) += step;
    value_of(down) -= step;
    if (value_of(down) < 0.0) value_of(down) = 0.0;
    for (std::size_t k = 0; k < n; ++k) grad[k] -= step * (gram_of(k, up) - gram_of(k, down));
  }
  res.dual_objective = ws.dual_objective();
  return res;
}

// ---------------------------------------------------------------------------
// Objective
// ---------------------------------------------------------------------------

struct Objective {
  double objective = 0.0;
  double xi = 0.0;
  double swapped_fraction = 0.0;
};

/// 1/2 |w|^2 + C * xi with xi the normalized hinge (the oracle's violation).
inline Objective primal_objective(std::span<const double> w, const TrainingPairs& tp, double C) {
  if (w.size() != tp.dim) throw UsageError("weight dimension does not match training pairs");
  Objective o;
  const std::size_t n = tp.pair_count();
  double hinge = 0.0;
  std::size_t swapped = 0;
  if (n > 0) {
    const auto scores = tp.row_scores(w);
    for (const auto& [u, v] : tp.pairs) {
      const double m = scores[u] - scores[v];
      if (m < 1.0) hinge += 1.0 - m;
      if (m <= 0.0) ++swapped;
    }
    o.xi = hinge / static_cast<double>(n);
    o.swapped_fraction = static_cast<double>(swapped) / static_cast<double>(n);
  }
  o.objective = 0.5 * detail::squared_norm(w) + C * o.xi;
  return o;
}

inline Objective primal_objective(const LinearModel& model, const TrainingPairs& tp, double C) {
  return primal_objective(model.w, tp, C);
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

inline LinearModel train(const TrainingPairs& tp, const SolverConfig& config) {
  config.validate();
  if (tp.empty()) throw UsageError("cannot train on an empty pair set");

  LinearModel model;
  model.config = config;
  model.w.assign(tp.dim, 0.0);
  auto& meta = model.meta;

  WorkingSet ws;
  for (meta.iterations = 0; meta.iterations < config.max_outer_iters;) {
    Cut cut = most_violated_constraint(model.w, tp);
    const double xi = ws.slack(model.w);
    meta.final_violation = cut.violation;
    meta.xi = xi;
    if (cut.violation <= xi + config.epsilon) {
      meta.converged = true;
      break;
    }
    ++meta.iterations;
    ws.add(std::move(cut.g), cut.b);
    auto qp = solve_restricted_qp(ws, config.C, config.qp_tolerance, config.qp_max_iters);
    meta.qp_budget_exhausted = meta.qp_budget_exhausted || !qp.converged;
    meta.dual_history.push_back(qp.dual_objective);
    model.w = ws.weights(tp.dim);
    ws.age_and_prune(config.prune_after);
  }
  if (!meta.converged) {
    // certificate at the last iterate
    meta.final_violation = most_violated_constraint(model.w, tp).violation;
    meta.xi = ws.slack(model.w);
    meta.converged = meta.final_violation <= meta.xi + config.epsilon;
  }
  meta.working_set_size = ws.size();
  meta.objective = primal_objective(model.w, tp, config.C).objective;
  meta.dual_objective = ws.empty() ? 0.0 : ws.dual_objective();
  meta.duality_gap = meta.objective - meta.dual_objective;
  return model;
}

// ---------------------------------------------------------------------------
// Independent reference: projected subgradient descent on the pair-slack primal
// ---------------------------------------------------------------------------

/// Minimizes 1/2 |w|^2 + (C/n) sum_j max(0, 1 - w^T dx_j) with step 1/t
/// (the objective is 1-strongly convex) and projection onto |w| <= sqrt(2C),
/// which contains the optimum. `seed` draws the starting point. Returns the
/// iterate with the lowest objective seen, or the tail average if lower.
inline LinearModel reference_train(const TrainingPairs& tp, double C, std::size_t steps, std::uint64_t seed) {
  if (tp.empty()) throw UsageError("cannot train on an empty pair set");
  if (!(C > 0.0)) throw UsageError("C must be positive");
  const std::size_t d = tp.dim;
  const double n = static_cast<double>(tp.pair_count());
  const double radius = std::sqrt(2.0 * C);

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> w(d);
  for (double& x : w) x = normal(rng);
  auto project = [&](std::vector<double>& v) {
    const double norm = std::sqrt(detail::squared_norm(v));
    if (norm > radius)
      for (double& x : v) x *= radius / norm;
  };
  for (double& x : w) x *= 1e-3 * radius;

  std::vector<double> best = w, avg(d, 0.0), coeff(tp.row_count());
  double best_obj = std::numeric_limits<double>::infinity();
  const std::size_t tail_start = steps / 2;

  for (std::size_t t = 1; t <= steps; ++t) {
    const auto scores = tp.row_scores(w);
    std::fill(coeff.begin(), coeff.end(), 0.0);
    double hinge = 0.0;
    for (const auto& [u, v] : tp.pairs) {
      const double m = scores[u] - scores[v];
      if (m < 1.0) {
        hinge += 1.0 - m;
        coeff[u] += 1.0;
        coeff[v] -= 1.0;
      }
    }
    const double obj = 0.5 * detail::squared_norm(w) + C * hinge / n;
    if (obj < best_obj) {
      best_obj = obj;
      best = w;
    }
    if (t > tail_start) detail::axpy(1.0, w, avg);

    const double eta = 1.0 / static_cast<double>(t);
    std::vector<double> grad = w;
    for (std::size_t r = 0; r < coeff.size(); ++r)
      if (coeff[r] != 0.0) detail::axpy(-C / n * coeff[r], tp.row(r), grad);
    detail::axpy(-eta, grad, w);
    project(w);
  }
  const std::size_t tail = steps - tail_start;
  if (tail > 0) {
    for (double& x : avg) x /= static_cast<double>(tail);
    if (primal_objective(avg, tp, C).objective < best_obj) best = avg;
  }

  LinearModel model;
  model.w = std::move(best);
  model.config.C = C;
  model.meta.iterations = steps;
  model.meta.objective = primal_objective(model.w, tp, C).objective;
  model.meta.converged = true;
  return model;
}

// ---------------------------------------------------------------------------
// Scoring
// ---------------------------------------------------------------------------

inline double score(const LinearModel& model, std::span<const double> x) {
  if (x.size() != model.w.size())
    throw UsageError("feature dimension " + std::to_string(x.size()) + " does not match model dimension " +
                     std::to_string(model.w.size()));
  return detail::dot(model.w, x) + model.bias;
}

inline Ranking rank(const LinearModel& model, const QueryGroup& group) {
  std::vector<double> scores;
  scores.reserve(group.size());
  for (const auto& r : group.candidates) scores.push_back(score(model, r.features));
  return rank_by_scores(group, scores);
}

// ---------------------------------------------------------------------------
// Model files
// ---------------------------------------------------------------------------

inline nlohmann::json to_json(const LinearModel& m) {
  return {{"dim", m.w.size()},
          {"w", m.w},
          {"bias", m.bias},
          {"config",
           {{"C", m.config.C},
            {"epsilon", m.config.epsilon},
            {"max_outer_iters", m.config.max_outer_iters},
            {"qp_tolerance", m.config.qp_tolerance},
            {"qp_max_iters", m.config.qp_max_iters},
            {"use_bias", m.config.use_bias}}},
          {"meta",
           {{"objective", m.meta.objective}, {"iters", m.meta.iterations}, {"converged", m.meta.converged}}}};
}

inline LinearModel from_json(const nlohmann::json& j) {
  LinearModel m;
  try {
    m.w = j.at("w").get<std::vector<double>>();
    if (j.at("dim").get<std::size_t>() != m.w.size()) throw DataError("model dim does not match weight length");
    m.bias = j.value("bias", 0.0);
    if (j.contains("config")) {
      const auto& c = j.at("config");
      m.config.C = c.value("C", m.config.C);
      m.config.epsilon = c.value("epsilon", m.config.epsilon);
      m.config.max_outer_iters = c.value("max_outer_iters", m.config.max_outer_iters);
      m.config.qp_tolerance = c.value("qp_tolerance", m.config.qp_tolerance);
      m.config.qp_max_iters = c.value("qp_max_iters", m.config.qp_max_iters);
      m.config.use_bias = c.value("use_bias", m.config.use_bias);
    }
    if (j.contains("meta")) {
      const auto& meta = j.at("meta");
      m.meta.objective = meta.value("objective", 0.0);
      m.meta.iterations = meta.value("iters", std::size_t{0});
      m.meta.converged = meta.value("converged", false);
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed RankSVM model: ") + e.what());
  }
  for (double x : m.w)
    if (!std::isfinite(x)) throw DataError("model weights must be finite");
  return m;
}

inline void save_model(const LinearModel& m, const std::filesystem::path& path) {
  io::write_atomic(path, to_json(m).dump(2) + "\n");
}

inline LinearModel load_model(const std::filesystem::path& path) {
  try {
    return from_json(nlohmann::json::parse(io::read_file(path)));
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

}  // namespace pairrank::ranksvm
