#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "pairrank/types.hpp"

namespace pairrank {

// ---------------------------------------------------------------------------
// Kendall's tau
// ---------------------------------------------------------------------------

struct PairCounts {
  std::uint64_t concordant = 0;
  std::uint64_t discordant = 0;
};

namespace detail {

// Counts inversions of `v` by merge sort; `v` is left sorted.
inline std::uint64_t count_inversions(std::vector<std::size_t>& v) {
  std::vector<std::size_t> buf(v.size());
  std::uint64_t inv = 0;
  for (std::size_t width = 1; width < v.size(); width *= 2) {
    for (std::size_t lo = 0; lo < v.size(); lo += 2 * width) {
      std::size_t mid = std::min(lo + width, v.size());
      std::size_t hi = std::min(lo + 2 * width, v.size());
      std::size_t i = lo, j = mid, k = lo;
      while (i < mid && j < hi) {
        if (v[j] < v[i]) {
          inv += mid - i;
          buf[k++] = v[j++];
        } else {
          buf[k++] = v[i++];
        }
      }
      while (i < mid) buf[k++] = v[i++];
      while (j < hi) buf[k++] = v[j++];
    }
    v.swap(buf);
  }
  return inv;
}

}  // namespace detail

/// Concordant/discordant pair counts between two strict orderings of the same items.
template <class T>
PairCounts kendall_pair_counts(std::span<const T> ranking_a, std::span<const T> ranking_b) {
  const std::size_t m = ranking_a.size();
  if (m < 2) throw UsageError("kendall_tau needs at least two items");
  if (ranking_b.size() != m) throw UsageError("kendall_tau: rankings differ in length");

  std::map<T, std::size_t> pos_b;
  for (std::size_t i = 0; i < m; ++i)
    if (!pos_b.emplace(ranking_b[i], i).second) throw UsageError("kendall_tau: duplicate item");

  std::vector<std::size_t> seq;
  seq.reserve(m);
  std::map<T, bool> seen_a;
  for (const auto& item : ranking_a) {
    auto it = pos_b.find(item);
    if (it == pos_b.end()) throw UsageError("kendall_tau: item sets differ");
    if (!seen_a.emplace(item, true).second) throw UsageError("kendall_tau: duplicate item");
    seq.push_back(it->second);
  }
  const std::uint64_t total = static_cast<std::uint64_t>(m) * (m - 1) / 2;
  const std::uint64_t q = detail::count_inversions(seq);
  return {total - q, q};
}

/// tau = (P - Q) / (P + Q) over two strict orderings of the same m >= 2 items.
template <class T>
double kendall_tau(std::span<const T> ranking_a, std::span<const T> ranking_b) {
  auto [p, q] = kendall_pair_counts(ranking_a, ranking_b);
  return (static_cast<double>(p) - static_cast<double>(q)) / static_cast<double>(p + q);
}

template <class T>
double kendall_tau(const std::vector<T>& a, const std::vector<T>& b) {
  return kendall_tau(std::span<const T>(a), std::span<const T>(b));
}

/// Mean of per-query tau between system and target rankings.
template <class T>
double empirical_tau(std::span<const std::pair<std::vector<T>, std::vector<T>>> rankings) {
  if (rankings.empty()) throw UsageError("empirical_tau: empty ranking list");
  double sum = 0.0;
  for (const auto& [sys, target] : rankings) sum += kendall_tau(sys, target);
  return sum / static_cast<double>(rankings.size());
}

template <class T>
double empirical_tau(const std::vector<std::pair<std::vector<T>, std::vector<T>>>& rankings) {
  return empirical_tau(std::span<const std::pair<std::vector<T>, std::vector<T>>>(rankings));
}

// ---------------------------------------------------------------------------
// NDCG and precision
// ---------------------------------------------------------------------------

/// Gain 2^rel - 1, discount log2(i + 1) for 1-based rank i.
inline double dcg_at_k(std::span<const int> ranked_relevances, std::size_t k) {
  const std::size_t n = std::min(k, ranked_relevances.size());
  double dcg = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    dcg += (std::exp2(ranked_relevances[i]) - 1.0) / std::log2(static_cast<double>(i) + 2.0);
  return dcg;
}

inline double ideal_dcg_at_k(std::span<const int> relevances, std::size_t k) {
  std::vector<int> ideal(relevances.begin(), relevances.end());
  std::sort(ideal.begin(), ideal.end(), std::greater<>());
  return dcg_at_k(ideal, k);
}

/// NDCG@k over graded relevances listed in system-ranked order; 0 when IDCG is 0.
inline double ndcg_at_k(std::span<const int> ranked_relevances, int k) {
  if (k < 1) throw UsageError("ndcg_at_k: k must be >= 1");
  const double idcg = ideal_dcg_at_k(ranked_relevances, static_cast<std::size_t>(k));
  if (idcg <= 0.0) return 0.0;
  return dcg_at_k(ranked_relevances, static_cast<std::size_t>(k)) / idcg;
}

/// Fraction of positives in the top k; the divisor stays k when fewer than k items exist.
inline double precision_at_k(std::span<const int> ranked_labels, int k) {
  if (k < 1) throw UsageError("precision_at_k: k must be >= 1");
  const std::size_t n = std::min(static_cast<std::size_t>(k), ranked_labels.size());
  std::size_t hits = 0;
  for (std::size_t i = 0; i < n; ++i) hits += ranked_labels[i] ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(k);
}

// ---------------------------------------------------------------------------
// ROC / AUC
// ---------------------------------------------------------------------------

struct RocPoint {
  double threshold;  // +inf for the (0, 0) anchor
  double fpr;
  double tpr;
};

struct RocResult {
  std::vector<RocPoint> curve;
  double auc = 0.0;
};

/// Trapezoidal area under a curve ordered by non-decreasing fpr.
inline double trapezoid_area(std::span<const RocPoint> curve) {
  double area = 0.0;
  for (std::size_t i = 1; i < curve.size(); ++i)
    area += (curve[i].fpr - curve[i - 1].fpr) * (curve[i].tpr + curve[i - 1].tpr) * 0.5;
  return area;
}

/// Threshold sweep over distinct scores (descending) plus the rank-sum AUC:
/// the share of (positive, negative) pairs scored in the right order, ties counting half.
inline RocResult roc_auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw UsageError("roc_auc: scores and labels differ in length");
  std::uint64_t n_pos = 0, n_neg = 0;
  for (int l : labels) (l ? n_pos : n_neg) += 1;
  if (n_pos == 0 || n_neg == 0) throw UsageError("roc_auc: AUC undefined for single-class input");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  RocResult res;
  res.curve.push_back({std::numeric_limits<double>::infinity(), 0.0, 0.0});
  std::uint64_t tp = 0, fp = 0;
  // Twice the Mann-Whitney U, so that half-credit for ties stays integral.
  std::uint64_t twice_u = 0;
  std::size_t i = 0;
  while (i < order.size()) {
    const double s = scores[order[i]];
    std::uint64_t tie_pos = 0, tie_neg = 0;
    for (; i < order.size() && scores[order[i]] == s; ++i) (labels[order[i]] ? tie_pos : tie_neg) += 1;
    // positives in this block beat every negative still below it
    twice_u += tie_pos * (2 * (n_neg - fp - tie_neg) + tie_neg);
    tp += tie_pos;
    fp += tie_neg;
    res.curve.push_back({s, static_cast<double>(fp) / static_cast<double>(n_neg),
                         static_cast<double>(tp) / static_cast<double>(n_pos)});
  }
  res.auc = static_cast<double>(twice_u) / (2.0 * static_cast<double>(n_pos) * static_cast<double>(n_neg));
  return res;
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

struct MetricConfig {
  std::vector<int> ndcg_ks{10, 20, 30};
  std::vector<int> precision_ks{5};
  int threshold = 3;

  friend bool operator==(const MetricConfig&, const MetricConfig&) = default;
};

struct QueryMetrics {
  std::map<int, double> ndcg;
  std::map<int, double> precision;
  std::optional<double> tau;  // absent for single-candidate pools
  std::optional<double> auc;  // absent when the pool lacks a class
};

struct MetricReport {
  MetricConfig config;
  std::map<std::string, QueryMetrics> per_query;
  QueryMetrics aggregate;
  std::size_t evaluated = 0;
  std::size_t skipped = 0;  // queries with IDCG = 0 (NDCG pinned to 0)
};

/// Reference ordering for tau: relevance descending, ties by ascending cand_id.
inline std::vector<std::string> target_order(const QueryGroup& group) {
  std::vector<const FeatureRecord*> recs;
  for (const auto& r : group.candidates) recs.push_back(&r);
  std::sort(recs.begin(), recs.end(), [](const FeatureRecord* a, const FeatureRecord* b) {
    if (a->relevance != b->relevance) return a->relevance > b->relevance;
    return a->cand_id < b->cand_id;
  });
  std::vector<std::string> ids;
  for (const auto* r : recs) ids.push_back(r->cand_id);
  return ids;
}

inline QueryMetrics evaluate_query(const QueryGroup& group, const Ranking& ranking, const MetricConfig& cfg) {
  std::unordered_map<std::string, const FeatureRecord*> by_id;
  for (const auto& r : group.candidates) by_id[r.cand_id] = &r;
  std::vector<int> rels, labels;
  std::vector<double> scores;
  for (std::size_t i = 0; i < ranking.cand_ids.size(); ++i) {
    auto it = by_id.find(ranking.cand_ids[i]);
    if (it == by_id.end()) throw UsageError("ranking contains unknown candidate " + ranking.cand_ids[i]);
    rels.push_back(it->second->relevance);
    labels.push_back(it->second->relevance >= cfg.threshold ? 1 : 0);
    scores.push_back(ranking.scores[i]);
  }
  QueryMetrics qm;
  for (int k : cfg.ndcg_ks) qm.ndcg[k] = ndcg_at_k(rels, k);
  for (int k : cfg.precision_ks) qm.precision[k] = precision_at_k(labels, k);
  if (ranking.cand_ids.size() >= 2) {
    auto target = target_order(group);
    qm.tau = kendall_tau(ranking.cand_ids, target);
  }
  const auto pos = std::count(labels.begin(), labels.end(), 1);
  if (pos > 0 && static_cast<std::size_t>(pos) < labels.size()) qm.auc = roc_auc(scores, labels).auc;
  return qm;
}

namespace detail {

struct Mean {
  double sum = 0.0;
  double weight = 0.0;
  void add(double v, double w = 1.0) {
    sum += w * v;
    weight += w;
  }
  std::optional<double> value() const {
    if (weight <= 0.0) return std::nullopt;
    return sum / weight;
  }
};

// Per-metric means over a set of QueryMetrics; metrics absent from an item are skipped.
inline QueryMetrics mean_metrics(std::span<const QueryMetrics> items, std::span<const double> weights) {
  std::map<int, Mean> ndcg, prec;
  Mean tau, auc;
  for (std::size_t i = 0; i < items.size(); ++i) {
    const double w = weights.empty() ? 1.0 : weights[i];
    for (const auto& [k, v] : items[i].ndcg) ndcg[k].add(v, w);
    for (const auto& [k, v] : items[i].precision) prec[k].add(v, w);
    if (items[i].tau) tau.add(*items[i].tau, w);
    if (items[i].auc) auc.add(*items[i].auc, w);
  }
  QueryMetrics out;
  for (const auto& [k, m] : ndcg) out.ndcg[k] = m.value().value_or(0.0);
  for (const auto& [k, m] : prec) out.precision[k] = m.value().value_or(0.0);
  out.tau = tau.value();
  out.auc = auc.value();
  return out;
}

}  // namespace detail

/// Builds a report from (group, system ranking) pairs; aggregate is the plain per-query mean.
inline MetricReport make_report(std::span<const std::pair<const QueryGroup*, Ranking>> ranked,
                                const MetricConfig& cfg) {
  MetricReport rep;
  rep.config = cfg;
  std::vector<QueryMetrics> items;
  for (const auto& [group, ranking] : ranked) {
    auto qm = evaluate_query(*group, ranking, cfg);
    std::vector<int> rels;
    for (const auto& r : group->candidates) rels.push_back(r.relevance);
    const int kmax = cfg.ndcg_ks.empty() ? 1 : *std::max_element(cfg.ndcg_ks.begin(), cfg.ndcg_ks.end());
    if (ideal_dcg_at_k(rels, static_cast<std::size_t>(kmax)) <= 0.0) ++rep.skipped;
    ++rep.evaluated;
    items.push_back(qm);
    rep.per_query[group->query_id] = std::move(qm);
  }
  rep.aggregate = detail::mean_metrics(items, {});
  return rep;
}

/// Averages reports (folds) by their aggregates; per-query maps are concatenated.
inline MetricReport aggregate(std::span<const MetricReport> reports, std::span<const double> weights = {}) {
  if (reports.empty()) throw UsageError("aggregate: no reports");
  if (!weights.empty() && weights.size() != reports.size())
    throw UsageError("aggregate: weight count does not match report count");
  MetricReport out;
  out.config = reports.front().config;
  std::vector<QueryMetrics> aggs;
  for (const auto& r : reports) {
    if (!(r.config == out.config)) throw UsageError("aggregate: inconsistent metric configurations");
    for (const auto& [q, m] : r.per_query)
      if (!out.per_query.emplace(q, m).second) throw UsageError("aggregate: query '" + q + "' in two reports");
    out.evaluated += r.evaluated;
    out.skipped += r.skipped;
    aggs.push_back(r.aggregate);
  }
  out.aggregate = detail::mean_metrics(aggs, weights);
  return out;
}

}  // namespace pairrank
