#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pairrank/io.hpp"
#include "pairrank/types.hpp"

namespace pairrank {

// ---------------------------------------------------------------------------
// Ingestion
// ---------------------------------------------------------------------------

namespace detail {

inline std::string where(const std::filesystem::path& file, std::size_t line) {
  return file.string() + ":" + std::to_string(line) + ": ";
}

inline FeatureRecord parse_record(const std::string& text, const std::filesystem::path& file,
                                  std::size_t line) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError(where(file, line) + "invalid JSON: " + e.what());
  }
  FeatureRecord r;
  try {
    r.query_id = j.at("query_id").get<std::string>();
    r.cand_id = j.at("cand_id").get<std::string>();
    r.relevance = j.at("relevance").get<int>();
    const auto& feats = j.at("features");
    if (!feats.is_array()) throw DataError(where(file, line) + "features must be an array");
    r.features.reserve(feats.size());
    for (const auto& v : feats) {
      if (!v.is_number()) throw DataError(where(file, line) + "non-numeric feature value");
      double x = v.get<double>();
      if (!std::isfinite(x)) throw DataError(where(file, line) + "non-finite feature value");
      r.features.push_back(x);
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(where(file, line) + "malformed record: " + e.what());
  }
  return r;
}

}  // namespace detail

/// Loads a dataset from a JSON manifest referencing one or more JSONL feature
/// files. Relative paths resolve against the manifest's directory. Records are
/// grouped by query_id in order of first appearance; candidates keep file order.
inline Dataset load_dataset(const std::filesystem::path& manifest_path) {
  namespace fs = std::filesystem;
  if (!fs::exists(manifest_path)) throw DataError("manifest not found: " + manifest_path.string());

  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(io::read_file(manifest_path));
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError(manifest_path.string() + ": invalid manifest JSON: " + e.what());
  }

  Dataset ds;
  std::vector<std::string> files;
  try {
    auto dim = manifest.at("dim").get<long long>();
    if (dim <= 0) throw DataError(manifest_path.string() + ": dim must be positive");
    ds.dim = static_cast<std::size_t>(dim);
    ds.grade_max = manifest.value("grade_max", 3);
    ds.provenance = manifest.value("provenance", std::string{});
    files = manifest.at("files").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(manifest_path.string() + ": malformed manifest: " + e.what());
  }
  if (files.empty()) throw DataError("no feature files");
  if (ds.grade_max < 0) throw DataError(manifest_path.string() + ": grade_max must be non-negative");

  std::map<std::string, std::size_t> group_index;
  std::map<std::pair<std::string, std::string>, std::string> seen;
  const fs::path base = manifest_path.parent_path();

  for (const auto& f : files) {
    fs::path file = fs::path(f).is_absolute() ? fs::path(f) : base / f;
    std::ifstream in(file);
    if (!in) throw DataError("missing feature file: " + file.string());
    std::string text;
    std::size_t line = 0;
    while (std::getline(in, text)) {
      ++line;
      if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
      FeatureRecord r = detail::parse_record(text, file, line);
      if (r.features.size() != ds.dim)
        throw DataError(detail::where(file, line) + "dimension mismatch: expected " +
                        std::to_string(ds.dim) + ", got " + std::to_string(r.features.size()));
      if (r.relevance < 0 || r.relevance > ds.grade_max)
        throw DataError(detail::where(file, line) + "relevance " + std::to_string(r.relevance) +
                        " outside [0, " + std::to_string(ds.grade_max) + "]");
      auto key = std::make_pair(r.query_id, r.cand_id);
      auto loc = detail::where(file, line);
      if (auto [it, inserted] = seen.emplace(key, loc); !inserted)
        throw DataError(loc + "duplicate (query_id, cand_id) = (" + r.query_id + ", " + r.cand_id +
                        "), first seen at " + it->second);
      auto [it, inserted] = group_index.emplace(r.query_id, ds.groups.size());
      if (inserted) ds.groups.push_back(QueryGroup{r.query_id, {}});
      ds.groups[it->second].candidates.push_back(std::move(r));
    }
  }
  return ds;
}

/// Writes `features.jsonl` and `manifest.json` under `dir`; returns the manifest path.
inline std::filesystem::path save_dataset(const Dataset& ds, const std::filesystem::path& dir,
                                          const std::string& features_name = "features.jsonl") {
  std::string body;
  for (const auto& g : ds.groups) {
    for (const auto& r : g.candidates) {
      nlohmann::json j = {{"query_id", r.query_id},
                          {"cand_id", r.cand_id},
                          {"relevance", r.relevance},
                          {"features", r.features}};
      body += j.dump();
      body += '\n';
    }
  }
  io::write_atomic(dir / features_name, body);
  nlohmann::json manifest = {{"dim", ds.dim},
                             {"grade_max", ds.grade_max},
                             {"files", {features_name}},
                             {"provenance", ds.provenance}};
  auto path = dir / "manifest.json";
  io::write_atomic(path, manifest.dump(2) + "\n");
  return path;
}

// ---------------------------------------------------------------------------
// Labels
// ---------------------------------------------------------------------------

/// Golden labels: 1 iff relevance >= threshold.
inline std::vector<int> binarize_labels(const QueryGroup& group, int threshold = 3) {
  std::vector<int> labels;
  labels.reserve(group.size());
  for (const auto& r : group.candidates) labels.push_back(r.relevance >= threshold ? 1 : 0);
  return labels;
}

// ---------------------------------------------------------------------------
// Splits
// ---------------------------------------------------------------------------

/// Shuffles the queries with `seed`, then deals contiguous blocks to folds;
/// the first (n mod k) folds receive one extra query.
inline FoldAssignment kfold_split(std::vector<std::string> query_ids, std::size_t k,
                                  std::uint64_t seed) {
  if (k == 0) throw UsageError("k must be positive");
  if (k > query_ids.size())
    throw UsageError("k = " + std::to_string(k) + " exceeds number of queries (" +
                     std::to_string(query_ids.size()) + ")");
  std::mt19937_64 rng(seed);
  std::shuffle(query_ids.begin(), query_ids.end(), rng);

  FoldAssignment fa;
  fa.fold_count = k;
  const std::size_t n = query_ids.size();
  const std::size_t base = n / k;
  const std::size_t extra = n % k;
  std::size_t pos = 0;
  for (std::size_t f = 0; f < k; ++f) {
    std::size_t size = base + (f < extra ? 1 : 0);
    for (std::size_t i = 0; i < size; ++i) {
      if (!fa.assignment.emplace(query_ids[pos++], f).second)
        throw DataError("duplicate query id in split input");
    }
  }
  return fa;
}

struct HoldoutSplit {
  std::vector<std::string> train;
  std::vector<std::string> test;
};

/// Seeded shuffle, then the first round(train_fraction * n) queries train.
inline HoldoutSplit holdout_split(std::vector<std::string> query_ids, double train_fraction,
                                  std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw UsageError("train fraction must lie in (0, 1)");
  std::mt19937_64 rng(seed);
  std::shuffle(query_ids.begin(), query_ids.end(), rng);
  auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(query_ids.size())));
  HoldoutSplit s;
  s.train.assign(query_ids.begin(), query_ids.begin() + static_cast<std::ptrdiff_t>(n_train));
  s.test.assign(query_ids.begin() + static_cast<std::ptrdiff_t>(n_train), query_ids.end());
  return s;
}

inline std::vector<std::string> query_ids(const Dataset& ds) {
  std::vector<std::string> ids;
  ids.reserve(ds.groups.size());
  for (const auto& g : ds.groups) ids.push_back(g.query_id);
  return ids;
}

inline void save_folds(const FoldAssignment& fa, std::uint64_t seed, const std::filesystem::path& path) {
  nlohmann::json assignment = nlohmann::json::object();
  for (const auto& [q, f] : fa.assignment) assignment[q] = f;
  nlohmann::json j = {{"k", fa.fold_count}, {"seed", seed}, {"assignment", assignment}};
  io::write_atomic(path, j.dump(2) + "\n");
}

inline FoldAssignment load_folds(const std::filesystem::path& path) {
  FoldAssignment fa;
  try {
    auto j = nlohmann::json::parse(io::read_file(path));
    fa.fold_count = j.at("k").get<std::size_t>();
    for (const auto& [q, f] : j.at("assignment").items()) {
      auto fold = f.get<std::size_t>();
      if (fold >= fa.fold_count) throw DataError(path.string() + ": fold index out of range for " + q);
      fa.assignment.emplace(q, fold);
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path.string() + ": malformed fold file: " + e.what());
  } catch (const std::runtime_error& e) {
    throw DataError(e.what());
  }
  return fa;
}

// ---------------------------------------------------------------------------
// Candidate subpools
// ---------------------------------------------------------------------------

/// Pads a labeled pool up to `n_total` with negatives sampled uniformly without
/// replacement from the corpus (deduplicated by cand_id, first occurrence wins),
/// excluding every candidate already labeled for the query. Sampled records take
/// the query's id and relevance 0.
inline QueryGroup build_subpool(const std::string& query_id, const QueryGroup& labeled,
                                const Dataset& corpus, std::size_t n_total, std::uint64_t seed) {
  if (labeled.size() > n_total)
    throw UsageError("labeled pool (" + std::to_string(labeled.size()) + ") exceeds n_total (" +
                     std::to_string(n_total) + ")");
  QueryGroup out{query_id, labeled.candidates};
  for (auto& r : out.candidates) r.query_id = query_id;
  const std::size_t need = n_total - labeled.size();
  if (need == 0) return out;

  std::set<std::string> excluded;
  for (const auto& r : labeled.candidates) excluded.insert(r.cand_id);

  std::vector<const FeatureRecord*> pool;
  std::set<std::string> pooled;
  for (const auto& g : corpus.groups)
    for (const auto& r : g.candidates)
      if (!excluded.count(r.cand_id) && pooled.insert(r.cand_id).second) pool.push_back(&r);

  if (pool.size() < need)
    throw DataError("insufficient corpus candidates for query '" + query_id + "': need " +
                    std::to_string(need) + ", have " + std::to_string(pool.size()));

  std::mt19937_64 rng(seed);
  std::vector<const FeatureRecord*> picked;
  picked.reserve(need);
  std::sample(pool.begin(), pool.end(), std::back_inserter(picked), need, rng);
  for (const auto* r : picked) {
    FeatureRecord neg = *r;
    neg.query_id = query_id;
    neg.relevance = 0;
    out.candidates.push_back(std::move(neg));
  }
  return out;
}

}  // namespace pairrank
