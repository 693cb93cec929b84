#pragma once

#include <algorithm>
#include <cstddef>
#include <numeric>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace pairrank {

/// Malformed or inconsistent input data (bad files, invariant violations).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid arguments or configuration supplied by the caller.
class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// One query-candidate pair: the pooled feature vector plus its graded relevance.
struct FeatureRecord {
  std::string query_id;
  std::string cand_id;
  int relevance = 0;
  std::vector<double> features;

  friend bool operator==(const FeatureRecord&, const FeatureRecord&) = default;
};

/// A query and its candidate pool, in file order.
struct QueryGroup {
  std::string query_id;
  std::vector<FeatureRecord> candidates;

  std::size_t size() const { return candidates.size(); }
  bool empty() const { return candidates.empty(); }

  friend bool operator==(const QueryGroup&, const QueryGroup&) = default;
};

struct Dataset {
  std::vector<QueryGroup> groups;
  std::size_t dim = 0;
  int grade_max = 3;
  std::string provenance;

  std::size_t record_count() const {
    std::size_t n = 0;
    for (const auto& g : groups) n += g.size();
    return n;
  }

  const QueryGroup* find(const std::string& query_id) const {
    for (const auto& g : groups)
      if (g.query_id == query_id) return &g;
    return nullptr;
  }

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

struct FoldAssignment {
  std::size_t fold_count = 0;
  std::map<std::string, std::size_t> assignment;

  std::vector<std::string> queries_in(std::size_t fold) const {
    std::vector<std::string> out;
    for (const auto& [q, f] : assignment)
      if (f == fold) out.push_back(q);
    return out;
  }

  std::vector<std::size_t> fold_sizes() const {
    std::vector<std::size_t> sizes(fold_count, 0);
    for (const auto& [q, f] : assignment) ++sizes.at(f);
    return sizes;
  }

  friend bool operator==(const FoldAssignment&, const FoldAssignment&) = default;
};

/// A system ranking: candidates by non-increasing score, ties by ascending cand_id.
struct Ranking {
  std::string query_id;
  std::vector<std::string> cand_ids;
  std::vector<double> scores;
};

/// Checks every Dataset invariant; throws DataError describing the first violation.
inline void validate(const Dataset& ds) {
  if (ds.dim == 0) throw DataError("dataset dimension must be positive");
  std::map<std::string, bool> seen_queries;
  for (const auto& g : ds.groups) {
    if (g.empty()) throw DataError("query '" + g.query_id + "' has no candidates");
    if (!seen_queries.emplace(g.query_id, true).second)
      throw DataError("duplicate query_id '" + g.query_id + "'");
    std::map<std::string, bool> seen_cands;
    for (const auto& r : g.candidates) {
      if (r.query_id != g.query_id)
        throw DataError("record for query '" + r.query_id + "' filed under '" + g.query_id + "'");
      if (r.features.size() != ds.dim)
        throw DataError("dimension mismatch for (" + g.query_id + ", " + r.cand_id + ")");
      if (r.relevance < 0 || r.relevance > ds.grade_max)
        throw DataError("relevance out of range for (" + g.query_id + ", " + r.cand_id + ")");
      if (!seen_cands.emplace(r.cand_id, true).second)
        throw DataError("duplicate (query_id, cand_id) = (" + g.query_id + ", " + r.cand_id + ")");
    }
  }
}

/// Orders a group's candidates by descending score, ties by ascending cand_id.
inline Ranking rank_by_scores(const QueryGroup& group, std::span<const double> scores) {
  if (group.empty()) throw UsageError("cannot rank an empty group");
  if (scores.size() != group.size()) throw UsageError("score count does not match group size");
  std::vector<std::size_t> order(group.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return group.candidates[a].cand_id < group.candidates[b].cand_id;
  });
  Ranking r{group.query_id, {}, {}};
  for (std::size_t i : order) {
    r.cand_ids.push_back(group.candidates[i].cand_id);
    r.scores.push_back(scores[i]);
  }
  return r;
}

namespace detail {

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double squared_norm(std::span<const double> a) { return dot(a, a); }

inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

}  // namespace detail

}  // namespace pairrank
