#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "pairrank/dataset.hpp"
#include "pairrank/types.hpp"

namespace pairrank {

/// Candidate `preferred` should outrank `other`; both index into the query's group.
struct PreferencePair {
  std::string query_id;
  std::size_t preferred = 0;
  std::size_t other = 0;

  friend bool operator==(const PreferencePair&, const PreferencePair&) = default;
};

struct QueryPairInfo {
  std::string query_id;
  std::size_t group_size = 0;
  std::size_t positives = 0;
  std::size_t negatives = 0;
  std::size_t pairs = 0;

  bool degenerate() const { return pairs == 0; }
  double positive_ratio() const {
    return group_size == 0 ? 0.0 : static_cast<double>(positives) / static_cast<double>(group_size);
  }

  friend bool operator==(const QueryPairInfo&, const QueryPairInfo&) = default;
};

struct PairSet {
  std::vector<PreferencePair> pairs;
  std::vector<QueryPairInfo> queries;

  std::size_t pair_count() const { return pairs.size(); }
  bool empty() const { return pairs.empty(); }

  void append(const PairSet& other) {
    pairs.insert(pairs.end(), other.pairs.begin(), other.pairs.end());
    queries.insert(queries.end(), other.queries.begin(), other.queries.end());
  }

  friend bool operator==(const PairSet&, const PairSet&) = default;
};

enum class PairMode {
  binary,  ///< golden (>= threshold) over non-golden
  graded,  ///< any strictly higher grade over a lower one; not used by the trainers by default
};

/// One pair per (positive, negative) combination of the group. Positives are
/// visited by ascending cand_id, and for each positive the negatives likewise.
/// A group lacking either class yields no pairs and is recorded as degenerate.
inline PairSet generate_pairs(const QueryGroup& group, int threshold = 3,
                              PairMode mode = PairMode::binary) {
  const auto labels = binarize_labels(group, threshold);
  std::vector<std::size_t> order(group.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return group.candidates[a].cand_id < group.candidates[b].cand_id;
  });

  PairSet ps;
  QueryPairInfo info{group.query_id, group.size(), 0, 0, 0};
  for (int l : labels) (l ? info.positives : info.negatives) += 1;

  if (mode == PairMode::binary) {
    for (std::size_t u : order) {
      if (!labels[u]) continue;
      for (std::size_t v : order)
        if (!labels[v]) ps.pairs.push_back({group.query_id, u, v});
    }
  } else {
    for (std::size_t u : order)
      for (std::size_t v : order)
        if (group.candidates[u].relevance > group.candidates[v].relevance)
          ps.pairs.push_back({group.query_id, u, v});
  }
  info.pairs = ps.pairs.size();
  ps.queries.push_back(std::move(info));
  return ps;
}

struct PairStats {
  std::size_t total_pairs = 0;
  std::size_t query_count = 0;
  std::size_t degenerate_groups = 0;
  std::vector<QueryPairInfo> per_query;
};

inline PairStats pair_stats(std::span<const PairSet> pairsets) {
  PairStats s;
  for (const auto& ps : pairsets) {
    for (const auto& q : ps.queries) {
      s.total_pairs += q.pairs;
      s.query_count += 1;
      if (q.degenerate()) s.degenerate_groups += 1;
      s.per_query.push_back(q);
    }
  }
  return s;
}

/// Audit dump: `query_id,preferred_cand,other_cand`.
inline std::string pairs_csv(const PairSet& ps, std::span<const QueryGroup> groups) {
  std::map<std::string, const QueryGroup*> by_id;
  for (const auto& g : groups) by_id[g.query_id] = &g;
  std::string out = "query_id,preferred_cand,other_cand\n";
  for (const auto& p : ps.pairs) {
    const auto* g = by_id.at(p.query_id);
    out += io::csv_field(p.query_id) + "," + io::csv_field(g->candidates[p.preferred].cand_id) + "," +
           io::csv_field(g->candidates[p.other].cand_id) + "\n";
  }
  return out;
}

/// Dense training substrate shared by the pairwise learners: the feature rows
/// of every candidate involved, plus preference pairs as (preferred, other)
/// row indices. Scoring each row once makes a pass over all pairs O(rows * dim + pairs).
struct TrainingPairs {
  std::size_t dim = 0;
  std::vector<double> rows;  // row-major, rows.size() == row_count() * dim
  std::vector<std::pair<std::uint32_t, std::uint32_t>> pairs;

  std::size_t row_count() const { return dim == 0 ? 0 : rows.size() / dim; }
  std::size_t pair_count() const { return pairs.size(); }
  bool empty() const { return pairs.empty(); }

  std::span<const double> row(std::size_t i) const {
    return {rows.data() + i * dim, dim};
  }

  std::vector<double> difference(std::size_t pair_index) const {
    const auto [u, v] = pairs[pair_index];
    std::vector<double> d(dim);
    for (std::size_t k = 0; k < dim; ++k) d[k] = rows[u * dim + k] - rows[v * dim + k];
    return d;
  }

  /// Scores every row under a linear model.
  std::vector<double> row_scores(std::span<const double> w) const {
    std::vector<double> s(row_count());
    for (std::size_t i = 0; i < s.size(); ++i) s[i] = detail::dot(w, row(i));
    return s;
  }

  /// Builds from groups and pair sets whose queries appear in `groups`.
  static TrainingPairs from_pairs(std::span<const QueryGroup> groups, const PairSet& ps, std::size_t dim) {
    TrainingPairs tp;
    tp.dim = dim;
    std::map<std::string, std::pair<const QueryGroup*, std::uint32_t>> offset;
    std::map<std::string, bool> needed;
    for (const auto& p : ps.pairs) needed[p.query_id] = true;
    for (const auto& g : groups) {
      if (!needed.count(g.query_id)) continue;
      offset[g.query_id] = {&g, static_cast<std::uint32_t>(tp.row_count())};
      for (const auto& r : g.candidates) {
        if (r.features.size() != dim) throw DataError("dimension mismatch in query '" + g.query_id + "'");
        tp.rows.insert(tp.rows.end(), r.features.begin(), r.features.end());
      }
    }
    tp.pairs.reserve(ps.pairs.size());
    for (const auto& p : ps.pairs) {
      auto it = offset.find(p.query_id);
      if (it == offset.end()) throw DataError("pair references unknown query '" + p.query_id + "'");
      auto base = it->second.second;
      tp.pairs.emplace_back(base + static_cast<std::uint32_t>(p.preferred),
                            base + static_cast<std::uint32_t>(p.other));
    }
    return tp;
  }

  /// Generates binary preference pairs for every group and assembles them.
  static TrainingPairs from_groups(std::span<const QueryGroup> groups, std::size_t dim, int threshold = 3) {
    PairSet all;
    for (const auto& g : groups) all.append(generate_pairs(g, threshold));
    return from_pairs(groups, all, dim);
  }

  /// Builds directly from explicit (preferred, other) feature vectors.
  static TrainingPairs from_vectors(std::span<const std::pair<std::vector<double>, std::vector<double>>> pv) {
    TrainingPairs tp;
    if (pv.empty()) return tp;
    tp.dim = pv.front().first.size();
    for (const auto& [a, b] : pv) {
      if (a.size() != tp.dim || b.size() != tp.dim) throw DataError("dimension mismatch in pair vectors");
      auto base = static_cast<std::uint32_t>(tp.row_count());
      tp.rows.insert(tp.rows.end(), a.begin(), a.end());
      tp.rows.insert(tp.rows.end(), b.begin(), b.end());
      tp.pairs.emplace_back(base, base + 1);
    }
    return tp;
  }
};

}  // namespace pairrank
