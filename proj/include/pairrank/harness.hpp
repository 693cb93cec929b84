#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include <nlohmann/json.hpp>

#include "pairrank/baselines.hpp"
#include "pairrank/dataset.hpp"
#include "pairrank/io.hpp"
#include "pairrank/metrics.hpp"
#include "pairrank/pairs.hpp"
#include "pairrank/ranksvm.hpp"

namespace pairrank::harness {

/// The C grid as published, including its repeated 0.05.
inline const std::vector<double> kPublishedCGrid{0.001, 0.05, 0.01, 0.02, 0.05, 0.1, 0.5, 1, 10, 100};

/// Sorted, de-duplicated grid (9 values).
inline std::vector<double> default_c_grid() {
  std::vector<double> g = kPublishedCGrid;
  std::sort(g.begin(), g.end());
  g.erase(std::unique(g.begin(), g.end()), g.end());
  return g;
}

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

enum class ModelKind { ranksvm, ranknet, logistic };

inline std::string to_string(ModelKind k) {
  switch (k) {
    case ModelKind::ranksvm: return "ranksvm";
    case ModelKind::ranknet: return "ranknet";
    case ModelKind::logistic: return "logistic";
  }
  return "?";
}

inline ModelKind parse_model_kind(const std::string& s) {
  if (s == "ranksvm") return ModelKind::ranksvm;
  if (s == "ranknet") return ModelKind::ranknet;
  if (s == "logistic") return ModelKind::logistic;
  throw UsageError("unknown model '" + s + "' (expected ranksvm, ranknet or logistic)");
}

struct ModelSpec {
  ModelKind kind = ModelKind::ranksvm;
  std::string name;  // row label; defaults to the kind
  ranksvm::SolverConfig svm;
  baselines::RankNetParams ranknet;
  baselines::LogisticParams logistic;

  std::string label() const { return name.empty() ? to_string(kind) : name; }
};

struct Protocol {
  enum class Kind { kfold, holdout } kind = Kind::kfold;
  std::size_t k = 5;
  double train_fraction = 0.8;
  std::uint64_t seed = 0;
};

struct ExperimentConfig {
  std::filesystem::path manifest;  // informational when a Dataset is passed directly
  Protocol protocol;
  std::vector<ModelSpec> models;
  std::vector<double> c_grid;  // empty: each RankSVM spec uses its own C
  MetricConfig metrics;
  std::filesystem::path output_dir;
  std::size_t workers = 0;  // 0: PAIRRANK_WORKERS, else available parallelism

  void validate() const {
    if (models.empty()) throw UsageError("experiment needs at least one model");
    if (protocol.kind == Protocol::Kind::kfold && protocol.k < 2) throw UsageError("k-fold needs k >= 2");
    for (double c : c_grid)
      if (!(c > 0.0)) throw UsageError("C values must be positive");
  }
};

inline nlohmann::json to_json(const ExperimentConfig& c) {
  nlohmann::json models = nlohmann::json::array();
  for (const auto& m : c.models) {
    nlohmann::json j = {{"kind", to_string(m.kind)}, {"name", m.label()}};
    switch (m.kind) {
      case ModelKind::ranksvm:
        j["C"] = m.svm.C;
        j["epsilon"] = m.svm.epsilon;
        j["max_outer_iters"] = m.svm.max_outer_iters;
        break;
      case ModelKind::ranknet:
        j["lr"] = m.ranknet.lr;
        j["epochs"] = m.ranknet.epochs;
        j["seed"] = m.ranknet.seed;
        j["hidden_width"] = m.ranknet.hidden_width;
        break;
      case ModelKind::logistic:
        j["lr"] = m.logistic.lr;
        j["epochs"] = m.logistic.epochs;
        j["seed"] = m.logistic.seed;
        break;
    }
    models.push_back(j);
  }
  return {{"manifest", c.manifest.string()},
          {"protocol",
           {{"kind", c.protocol.kind == Protocol::Kind::kfold ? "kfold" : "holdout"},
            {"k", c.protocol.k},
            {"train_fraction", c.protocol.train_fraction},
            {"seed", c.protocol.seed}}},
          {"models", models},
          {"c_grid", c.c_grid},
          {"metrics",
           {{"ndcg_ks", c.metrics.ndcg_ks},
            {"precision_ks", c.metrics.precision_ks},
            {"threshold", c.metrics.threshold}}}};
}

/// FNV-1a, used to tag outputs with the configuration and training inputs they came from.
inline std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

inline std::string config_hash(const ExperimentConfig& c) { return hex64(fnv1a(to_json(c).dump())); }

// ---------------------------------------------------------------------------
// Runs
// ---------------------------------------------------------------------------

struct ScoredCandidate {
  std::string query_id;
  std::string cand_id;
  int label = 0;
  double score = 0.0;
};

struct RunRecord {
  std::string model;
  ModelKind kind = ModelKind::ranksvm;
  std::size_t fold = 0;
  std::optional<double> C;
  std::uint64_t seed = 0;
  MetricReport report;
  double wall_seconds = 0.0;

  std::vector<std::string> train_queries;
  std::vector<std::string> test_queries;
  std::string train_hash;  // digest of the training pairs, independent of test data
  std::optional<double> pooled_auc;
  std::vector<RocPoint> roc;
  std::vector<ScoredCandidate> scores;
  std::optional<std::string> error;  // failure marker; metrics are empty when set
  bool converged = true;
};

struct Split {
  std::vector<std::string> train;
  std::vector<std::string> test;
};

inline std::vector<Split> make_splits(const Dataset& ds, const Protocol& p) {
  std::vector<Split> out;
  const auto ids = query_ids(ds);
  if (p.kind == Protocol::Kind::kfold) {
    auto fa = kfold_split(ids, p.k, p.seed);
    for (std::size_t f = 0; f < p.k; ++f) {
      Split s;
      for (const auto& q : ids) (fa.assignment.at(q) == f ? s.test : s.train).push_back(q);
      out.push_back(std::move(s));
    }
  } else {
    auto h = holdout_split(ids, p.train_fraction, p.seed);
    out.push_back({std::move(h.train), std::move(h.test)});
  }
  return out;
}

inline std::string training_digest(const TrainingPairs& tp) {
  std::uint64_t h = fnv1a({reinterpret_cast<const char*>(tp.rows.data()), tp.rows.size() * sizeof(double)});
  h = fnv1a({reinterpret_cast<const char*>(tp.pairs.data()), tp.pairs.size() * sizeof(tp.pairs[0])}, h);
  return hex64(h);
}

namespace detail {

inline std::vector<QueryGroup> select(const Dataset& ds, const std::vector<std::string>& ids) {
  std::set<std::string> wanted(ids.begin(), ids.end());
  std::vector<QueryGroup> out;
  for (const auto& g : ds.groups)
    if (wanted.count(g.query_id)) out.push_back(g);
  return out;
}

inline RunRecord execute_run(const Dataset& ds, const Split& split, const ModelSpec& spec,
                             std::optional<double> C, std::size_t fold, std::uint64_t seed,
                             const MetricConfig& mc) {
  RunRecord rec;
  rec.model = spec.label();
  rec.kind = spec.kind;
  rec.fold = fold;
  rec.C = C;
  rec.seed = seed;
  rec.train_queries = split.train;
  rec.test_queries = split.test;
  const auto start = std::chrono::steady_clock::now();
  try {
    const auto train_groups = select(ds, split.train);
    const auto test_groups = select(ds, split.test);
    std::function<double(std::span<const double>)> scorer;
    ranksvm::LinearModel svm_model;
    baselines::RankNetModel net_model;
    baselines::LogisticModel log_model;

    if (spec.kind == ModelKind::logistic) {
      auto data = baselines::LabeledSet::from_groups(train_groups, ds.dim, mc.threshold);
      rec.train_hash = hex64(fnv1a({reinterpret_cast<const char*>(data.rows.data()), data.rows.size() * sizeof(double)}));
      auto hp = spec.logistic;
      hp.seed = seed;
      log_model = baselines::train_logistic(data, hp);
      scorer = [&](std::span<const double> x) { return log_model.score(x); };
    } else {
      auto tp = TrainingPairs::from_groups(train_groups, ds.dim, mc.threshold);
      rec.train_hash = training_digest(tp);
      if (spec.kind == ModelKind::ranksvm) {
        auto cfg = spec.svm;
        if (C) cfg.C = *C;
        svm_model = ranksvm::train(tp, cfg);
        rec.converged = svm_model.meta.converged;
        scorer = [&](std::span<const double> x) { return ranksvm::score(svm_model, x); };
      } else {
        auto hp = spec.ranknet;
        hp.seed = seed;
        net_model = baselines::train_ranknet(tp, hp);
        scorer = [&](std::span<const double> x) { return net_model.score(x); };
      }
    }

    std::vector<std::pair<const QueryGroup*, Ranking>> ranked;
    std::vector<double> all_scores;
    std::vector<int> all_labels;
    for (const auto& g : test_groups) {
      std::vector<double> s;
      for (const auto& r : g.candidates) {
        s.push_back(scorer(r.features));
        const int label = r.relevance >= mc.threshold ? 1 : 0;
        rec.scores.push_back({g.query_id, r.cand_id, label, s.back()});
        all_scores.push_back(s.back());
        all_labels.push_back(label);
      }
      ranked.emplace_back(&g, rank_by_scores(g, s));
    }
    rec.report = make_report(ranked, mc);
    const auto pos = std::count(all_labels.begin(), all_labels.end(), 1);
    if (pos > 0 && static_cast<std::size_t>(pos) < all_labels.size()) {
      auto roc = roc_auc(all_scores, all_labels);
      rec.pooled_auc = roc.auc;
      rec.roc = std::move(roc.curve);
    }
  } catch (const std::exception& e) {
    rec.error = e.what();
  }
  rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return rec;
}

}  // namespace detail

inline std::size_t worker_count(std::size_t requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("PAIRRANK_WORKERS")) {
    char* end = nullptr;
    auto v = std::strtoul(env, &end, 10);
    if (end != env && v > 0) return v;
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

/// Runs `jobs` on a bounded pool; results land at their job index, so order
/// never depends on completion time.
template <class Result>
std::vector<Result> run_pool(const std::vector<std::function<Result()>>& jobs, std::size_t workers) {
  std::vector<Result> results(jobs.size());
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < jobs.size();) results[i] = jobs[i]();
  };
  const std::size_t n = std::min(workers, jobs.size());
  if (n <= 1) {
    work();
    return results;
  }
  std::vector<std::jthread> pool;
  for (std::size_t t = 0; t < n; ++t) pool.emplace_back(work);
  pool.clear();
  return results;
}

/// Mean over folds for one (model, C) cell. Rows follow first appearance in
/// the record list.
struct AggregateRow {
  std::string model;
  std::optional<double> C;
  MetricReport report;
  std::size_t runs = 0;
  std::size_t failed = 0;
};

struct ExperimentResult {
  std::string config_hash;
  MetricConfig metrics;
  std::vector<RunRecord> records;   // ordered by model, fold, C
  std::vector<AggregateRow> aggregates;  // ordered by model, C
};

inline std::vector<AggregateRow> aggregate_rows(const std::vector<RunRecord>& records, const MetricConfig& mc) {
  std::vector<AggregateRow> rows;
  std::map<std::pair<std::string, double>, std::size_t> index;
  std::map<std::size_t, std::vector<MetricReport>> reports;
  for (const auto& r : records) {
    auto key = std::make_pair(r.model, r.C.value_or(-1.0));
    auto [it, inserted] = index.emplace(key, rows.size());
    if (inserted) rows.push_back({r.model, r.C, {}, 0, 0});
    auto& row = rows[it->second];
    ++row.runs;
    if (r.error) {
      ++row.failed;
      continue;
    }
    reports[it->second].push_back(r.report);
  }
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (reports[i].empty()) {
      rows[i].report.config = mc;
      continue;
    }
    rows[i].report = aggregate(reports[i]);
  }
  return rows;
}

/// Trains every model on every split's training queries and evaluates on its
/// held-out queries. RankSVM specs expand over `c_grid` when it is non-empty.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg, const Dataset& ds) {
  cfg.validate();
  const auto splits = make_splits(ds, cfg.protocol);

  std::vector<std::function<RunRecord()>> jobs;
  for (const auto& spec : cfg.models) {
    for (std::size_t f = 0; f < splits.size(); ++f) {
      std::vector<std::optional<double>> cs;
      if (spec.kind == ModelKind::ranksvm) {
        if (cfg.c_grid.empty()) {
          cs.push_back(spec.svm.C);
        } else {
          auto grid = cfg.c_grid;
          std::sort(grid.begin(), grid.end());
          grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
          cs.assign(grid.begin(), grid.end());
        }
      } else {
        cs.push_back(std::nullopt);
      }
      for (auto c : cs) {
        const Split* split = &splits[f];
        const ModelSpec* sp = &spec;
        const std::uint64_t seed = cfg.protocol.seed;
        jobs.push_back([&ds, split, sp, c, f, seed, &cfg] {
          return detail::execute_run(ds, *split, *sp, c, f, seed, cfg.metrics);
        });
      }
    }
  }
  ExperimentResult res;
  res.config_hash = config_hash(cfg);
  res.metrics = cfg.metrics;
  res.records = run_pool(jobs, worker_count(cfg.workers));
  std::stable_sort(res.records.begin(), res.records.end(), [](const RunRecord& a, const RunRecord& b) {
    return std::make_tuple(a.model, a.fold, a.C.value_or(-1.0)) < std::make_tuple(b.model, b.fold, b.C.value_or(-1.0));
  });
  res.aggregates = aggregate_rows(res.records, cfg.metrics);
  return res;
}

inline ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  return run_experiment(cfg, load_dataset(cfg.manifest));
}

// ---------------------------------------------------------------------------
// C sweep
// ---------------------------------------------------------------------------

struct SweepResult {
  ExperimentResult experiment;
  std::map<std::string, std::optional<double>> best_c;  // per model label
  std::map<std::string, double> best_ndcg10;
};

/// Primary sweep criterion: NDCG at the smallest configured cutoff (NDCG@10 by default).
inline double selection_metric(const MetricReport& r) {
  if (r.aggregate.ndcg.empty()) return 0.0;
  return r.aggregate.ndcg.begin()->second;
}

/// Runs every grid value and picks, per model, the C with the best mean NDCG@10;
/// equal scores resolve toward the smaller C.
inline SweepResult sweep_c(ExperimentConfig cfg, const Dataset& ds, std::vector<double> grid) {
  if (grid.empty()) throw UsageError("C grid must be non-empty");
  cfg.c_grid = std::move(grid);
  SweepResult out;
  out.experiment = run_experiment(cfg, ds);
  for (const auto& row : out.experiment.aggregates) {
    if (row.failed == row.runs) continue;
    const double v = selection_metric(row.report);
    auto it = out.best_ndcg10.find(row.model);
    const bool better = it == out.best_ndcg10.end() || v > it->second ||
                        (v == it->second && row.C.value_or(0.0) < out.best_c[row.model].value_or(0.0));
    if (better) {
      out.best_ndcg10[row.model] = v;
      out.best_c[row.model] = row.C;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Pointwise vs pairwise
// ---------------------------------------------------------------------------

struct SeedComparison {
  std::uint64_t seed = 0;
  double auc_pairwise = 0.0;
  double auc_pointwise = 0.0;
  double ndcg_pairwise = 0.0;
  double ndcg_pointwise = 0.0;
  double auc_delta() const { return auc_pairwise - auc_pointwise; }
  double ndcg_delta() const { return ndcg_pairwise - ndcg_pointwise; }
};

struct ComparisonSummary {
  std::vector<SeedComparison> per_seed;
  double mean_auc_pairwise = 0.0;
  double mean_auc_pointwise = 0.0;
  double mean_auc_delta = 0.0;
  double mean_ndcg_delta = 0.0;
  std::size_t auc_wins = 0, auc_ties = 0, auc_losses = 0;
  std::size_t ndcg_wins = 0, ndcg_ties = 0, ndcg_losses = 0;
};

/// For each seed: obtain the dataset, split it with that seed, train RankSVM and
/// the logistic baseline on the same training queries, compare held-out
/// per-query-mean AUC and NDCG@10.
inline ComparisonSummary compare_pointwise_pairwise(const std::function<Dataset(std::uint64_t)>& dataset_for_seed,
                                                    Protocol protocol, const std::vector<std::uint64_t>& seeds,
                                                    const ranksvm::SolverConfig& svm = {},
                                                    const baselines::LogisticParams& logistic = {},
                                                    const MetricConfig& mc = {}, std::size_t workers = 0) {
  if (seeds.size() < 2) throw UsageError("comparison needs at least two seeds");
  std::vector<std::function<SeedComparison()>> jobs;
  for (auto seed : seeds) {
    jobs.push_back([=, &dataset_for_seed] {
      const Dataset ds = dataset_for_seed(seed);
      ExperimentConfig cfg;
      cfg.protocol = protocol;
      cfg.protocol.seed = seed;
      cfg.metrics = mc;
      cfg.workers = 1;
      ModelSpec pair{ModelKind::ranksvm, "ranksvm", svm, {}, {}};
      ModelSpec point{ModelKind::logistic, "logistic", {}, {}, logistic};
      cfg.models = {pair, point};
      auto res = run_experiment(cfg, ds);
      SeedComparison sc;
      sc.seed = seed;
      for (const auto& row : res.aggregates) {
        if (row.failed > 0) throw std::runtime_error("run failed for seed " + std::to_string(seed));
        const double auc = row.report.aggregate.auc.value_or(0.0);
        const double ndcg = selection_metric(row.report);
        if (row.model == "ranksvm") {
          sc.auc_pairwise = auc;
          sc.ndcg_pairwise = ndcg;
        } else {
          sc.auc_pointwise = auc;
          sc.ndcg_pointwise = ndcg;
        }
      }
      return sc;
    });
  }
  ComparisonSummary s;
  s.per_seed = run_pool(jobs, worker_count(workers));
  const double n = static_cast<double>(s.per_seed.size());
  for (const auto& c : s.per_seed) {
    s.mean_auc_pairwise += c.auc_pairwise / n;
    s.mean_auc_pointwise += c.auc_pointwise / n;
    s.mean_auc_delta += c.auc_delta() / n;
    s.mean_ndcg_delta += c.ndcg_delta() / n;
    (c.auc_delta() > 0 ? s.auc_wins : c.auc_delta() < 0 ? s.auc_losses : s.auc_ties) += 1;
    (c.ndcg_delta() > 0 ? s.ndcg_wins : c.ndcg_delta() < 0 ? s.ndcg_losses : s.ndcg_ties) += 1;
  }
  return s;
}

inline std::string comparison_csv(const ComparisonSummary& s) {
  std::string out = "seed,auc_pairwise,auc_pointwise,auc_delta,ndcg10_pairwise,ndcg10_pointwise,ndcg10_delta\n";
  for (const auto& c : s.per_seed)
    out += std::to_string(c.seed) + "," + io::format_exact(c.auc_pairwise) + "," + io::format_exact(c.auc_pointwise) +
           "," + io::format_exact(c.auc_delta()) + "," + io::format_exact(c.ndcg_pairwise) + "," +
           io::format_exact(c.ndcg_pointwise) + "," + io::format_exact(c.ndcg_delta()) + "\n";
  return out;
}

// ---------------------------------------------------------------------------
// Outputs
// ---------------------------------------------------------------------------

inline std::string summary_header(const MetricConfig& mc) {
  std::string h = "model,C,fold";
  for (int k : mc.ndcg_ks) h += ",ndcg@" + std::to_string(k);
  for (int k : mc.precision_ks) h += ",p@" + std::to_string(k);
  h += ",auc,status,config_hash\n";
  return h;
}

namespace detail {

inline std::string c_field(const std::optional<double>& c) { return c ? io::format_exact(*c) : ""; }

inline std::string metric_fields(const MetricReport& r, const MetricConfig& mc, bool valid) {
  std::string s;
  for (int k : mc.ndcg_ks) {
    auto it = r.aggregate.ndcg.find(k);
    s += "," + (valid && it != r.aggregate.ndcg.end() ? io::format_exact(it->second) : std::string{});
  }
  for (int k : mc.precision_ks) {
    auto it = r.aggregate.precision.find(k);
    s += "," + (valid && it != r.aggregate.precision.end() ? io::format_exact(it->second) : std::string{});
  }
  s += "," + (valid && r.aggregate.auc ? io::format_exact(*r.aggregate.auc) : std::string{});
  return s;
}

inline nlohmann::json metrics_json(const QueryMetrics& m) {
  nlohmann::json j;
  for (const auto& [k, v] : m.ndcg) j["ndcg@" + std::to_string(k)] = v;
  for (const auto& [k, v] : m.precision) j["p@" + std::to_string(k)] = v;
  j["tau"] = m.tau ? nlohmann::json(*m.tau) : nlohmann::json(nullptr);
  j["auc"] = m.auc ? nlohmann::json(*m.auc) : nlohmann::json(nullptr);
  return j;
}

inline std::string run_stem(const RunRecord& r) {
  std::string s = r.model + "_fold" + std::to_string(r.fold);
  if (r.C) s += "_C" + io::format_exact(*r.C);
  return s;
}

}  // namespace detail

/// One row per run, then one aggregate row (fold = "mean") per (model, C).
inline std::string summary_csv(const ExperimentResult& res) {
  std::string out = summary_header(res.metrics);
  for (const auto& r : res.records) {
    out += io::csv_field(r.model) + "," + detail::c_field(r.C) + "," + std::to_string(r.fold) +
           detail::metric_fields(r.report, res.metrics, !r.error) + "," + (r.error ? "failed" : "ok") + "," +
           res.config_hash + "\n";
  }
  for (const auto& a : res.aggregates) {
    const bool ok = a.failed < a.runs;
    out += io::csv_field(a.model) + "," + detail::c_field(a.C) + ",mean" +
           detail::metric_fields(a.report, res.metrics, ok) + "," +
           (a.failed == 0 ? "ok" : "partial:" + std::to_string(a.failed) + "_failed") + "," + res.config_hash + "\n";
  }
  return out;
}

inline std::string roc_csv(const std::vector<RocPoint>& curve) {
  std::string out = "threshold,fpr,tpr\n";
  for (const auto& p : curve)
    out += (std::isinf(p.threshold) ? std::string("inf") : io::format_exact(p.threshold)) + "," +
           io::format_exact(p.fpr) + "," + io::format_exact(p.tpr) + "\n";
  return out;
}

inline std::vector<RocPoint> parse_roc_csv(const std::string& text) {
  std::vector<RocPoint> curve;
  std::istringstream in(text);
  std::string line;
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    RocPoint p{};
    if (std::sscanf(line.c_str(), "%lf,%lf,%lf", &p.threshold, &p.fpr, &p.tpr) != 3)
      throw DataError("malformed ROC row: " + line);
    curve.push_back(p);
  }
  return curve;
}

inline std::string scores_csv(const std::vector<ScoredCandidate>& scores) {
  std::string out = "query_id,cand_id,label,score\n";
  for (const auto& s : scores)
    out += io::csv_field(s.query_id) + "," + io::csv_field(s.cand_id) + "," + std::to_string(s.label) + "," +
           io::format_exact(s.score) + "\n";
  return out;
}

inline nlohmann::json runs_json(const ExperimentResult& res) {
  nlohmann::json runs = nlohmann::json::array();
  for (const auto& r : res.records) {
    nlohmann::json per_query = nlohmann::json::object();
    for (const auto& [q, m] : r.report.per_query) per_query[q] = detail::metrics_json(m);
    nlohmann::json j = {{"model", r.model},
                        {"kind", to_string(r.kind)},
                        {"fold", r.fold},
                        {"C", r.C ? nlohmann::json(*r.C) : nlohmann::json(nullptr)},
                        {"seed", r.seed},
                        {"wall_seconds", r.wall_seconds},
                        {"converged", r.converged},
                        {"train_queries", r.train_queries},
                        {"test_queries", r.test_queries},
                        {"train_hash", r.train_hash},
                        {"pooled_auc", r.pooled_auc ? nlohmann::json(*r.pooled_auc) : nlohmann::json(nullptr)},
                        {"aggregate", detail::metrics_json(r.report.aggregate)},
                        {"evaluated", r.report.evaluated},
                        {"skipped", r.report.skipped},
                        {"per_query", per_query}};
    if (r.error) j["error"] = *r.error;
    runs.push_back(std::move(j));
  }
  nlohmann::json aggs = nlohmann::json::array();
  for (const auto& a : res.aggregates)
    aggs.push_back({{"model", a.model},
                    {"C", a.C ? nlohmann::json(*a.C) : nlohmann::json(nullptr)},
                    {"runs", a.runs},
                    {"failed", a.failed},
                    {"aggregate", detail::metrics_json(a.report.aggregate)}});
  return {{"config_hash", res.config_hash},
          {"metrics",
           {{"ndcg_ks", res.metrics.ndcg_ks},
            {"precision_ks", res.metrics.precision_ks},
            {"threshold", res.metrics.threshold}}},
          {"runs", runs},
          {"aggregates", aggs}};
}

/// Writes summary.csv, runs.json, roc/<run>.csv and scores/<run>.csv under `dir`.
inline void emit_outputs(const ExperimentResult& res, const std::filesystem::path& dir) {
  try {
    io::write_atomic(dir / "summary.csv", summary_csv(res));
    io::write_atomic(dir / "runs.json", runs_json(res).dump(2) + "\n");
    for (const auto& r : res.records) {
      if (r.error) continue;
      const auto stem = detail::run_stem(r);
      io::write_atomic(dir / "roc" / (stem + ".csv"), roc_csv(r.roc));
      io::write_atomic(dir / "scores" / (stem + ".csv"), scores_csv(r.scores));
    }
  } catch (const std::filesystem::filesystem_error& e) {
    throw std::runtime_error("writing outputs under " + dir.string() + ": " + e.what());
  }
}

/// Table layout for a finished experiment: one line per aggregate row.
inline std::string format_table(const nlohmann::json& runs_doc) {
  const auto ndcg_ks = runs_doc.at("metrics").at("ndcg_ks").get<std::vector<int>>();
  const auto p_ks = runs_doc.at("metrics").at("precision_ks").get<std::vector<int>>();
  std::string out = "Model";
  for (int k : ndcg_ks) out += " & NDCG@" + std::to_string(k);
  for (int k : p_ks) out += " & P@" + std::to_string(k);
  out += " & AUC\n";
  for (const auto& a : runs_doc.at("aggregates")) {
    std::string label = a.at("model").get<std::string>();
    if (!a.at("C").is_null()) label += " (C=" + io::format_exact(a.at("C").get<double>()) + ")";
    out += label;
    const auto& agg = a.at("aggregate");
    auto cell = [&](const std::string& key) {
      return agg.contains(key) && agg.at(key).is_number() ? io::format_fixed(agg.at(key).get<double>(), 4)
                                                          : std::string("-");
    };
    for (int k : ndcg_ks) out += " & " + cell("ndcg@" + std::to_string(k));
    for (int k : p_ks) out += " & " + cell("p@" + std::to_string(k));
    out += " & " + cell("auc") + "\n";
  }
  return out;
}

}  // namespace pairrank::harness
