#include <gtest/gtest.h>

#include <cmath>
#include <set>
#include <sstream>

#include "pairrank/harness.hpp"
#include "pairrank/synth.hpp"
#include "test_util.hpp"

using namespace pairrank;
using namespace pairrank::harness;

namespace {

Dataset small_synth(std::uint64_t seed = 0, std::size_t queries = 20) {
  synth::SynthConfig sc;
  sc.n_queries = queries;
  sc.n_cands_per_query = 40;
  sc.dim = 6;
  sc.noise_sigma = 0.3;
  sc.seed = seed;
  return synth::generate(sc);
}

ExperimentConfig kfold_config(std::vector<ModelSpec> models) {
  ExperimentConfig cfg;
  cfg.protocol.k = 5;
  cfg.protocol.seed = 3;
  cfg.models = std::move(models);
  return cfg;
}

ModelSpec spec(ModelKind kind) {
  ModelSpec s;
  s.kind = kind;
  return s;
}

ModelSpec svm_spec(double C = 1.0) {
  ModelSpec s;
  s.kind = ModelKind::ranksvm;
  s.svm.C = C;
  return s;
}

std::vector<std::string> csv_lines(const std::string& csv) {
  std::vector<std::string> lines;
  std::istringstream in(csv);
  for (std::string l; std::getline(in, l);) lines.push_back(l);
  return lines;
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace

TEST(Grid, PublishedListDeduplicates) {
  EXPECT_EQ(kPublishedCGrid.size(), 10u);
  EXPECT_EQ(default_c_grid(), (std::vector<double>{0.001, 0.01, 0.02, 0.05, 0.1, 0.5, 1, 10, 100}));
}

TEST(Experiment, FiveFoldsGiveFiveRecordsAndOneAggregate) {
  auto ds = small_synth();
  auto res = run_experiment(kfold_config({svm_spec()}), ds);
  ASSERT_EQ(res.records.size(), 5u);
  ASSERT_EQ(res.aggregates.size(), 1u);
  auto lines = csv_lines(summary_csv(res));
  EXPECT_EQ(lines.size(), 1u + 5u + 1u);
  EXPECT_EQ(lines[0], "model,C,fold,ndcg@10,ndcg@20,ndcg@30,p@5,auc,status,config_hash");
  EXPECT_EQ(split_fields(lines.back())[2], "mean");
  for (std::size_t i = 1; i < lines.size(); ++i) EXPECT_EQ(split_fields(lines[i]).back(), res.config_hash);
}

TEST(Experiment, AggregateRowIsMeanOfFoldRows) {
  auto ds = small_synth();
  auto res = run_experiment(kfold_config({svm_spec()}), ds);
  auto lines = csv_lines(summary_csv(res));
  for (std::size_t col = 3; col <= 7; ++col) {
    double sum = 0.0;
    for (std::size_t i = 1; i <= 5; ++i) sum += std::stod(split_fields(lines[i])[col]);
    EXPECT_NEAR(std::stod(split_fields(lines[6])[col]), sum / 5.0, 1e-12) << "column " << col;
  }
}

TEST(Experiment, TrainTestDisjointAndCovering) {
  auto ds = small_synth();
  auto res = run_experiment(kfold_config({svm_spec()}), ds);
  std::set<std::string> tested;
  for (const auto& r : res.records) {
    std::set<std::string> train(r.train_queries.begin(), r.train_queries.end());
    for (const auto& q : r.test_queries) {
      EXPECT_FALSE(train.count(q));
      EXPECT_TRUE(tested.insert(q).second);
    }
    EXPECT_EQ(train.size() + r.test_queries.size(), ds.groups.size());
    for (const auto& s : r.scores) EXPECT_FALSE(train.count(s.query_id));
  }
  EXPECT_EQ(tested.size(), ds.groups.size());
}

TEST(Experiment, HoldoutEightHundredQueries) {
  Dataset ds;
  ds.dim = 1;
  for (int q = 0; q < 800; ++q) ds.groups.push_back(testutil::group_from_relevances("q" + std::to_string(q), {3, 0}));
  Protocol p;
  p.kind = Protocol::Kind::holdout;
  p.train_fraction = 0.8;
  auto splits = make_splits(ds, p);
  ASSERT_EQ(splits.size(), 1u);
  EXPECT_EQ(splits[0].train.size(), 640u);
  EXPECT_EQ(splits[0].test.size(), 160u);
}

TEST(Experiment, TrainingHashIgnoresTestFeatures) {
  auto ds = small_synth();
  auto cfg = kfold_config({svm_spec()});
  auto base = run_experiment(cfg, ds);
  // perturb only fold 0's test queries
  auto perturbed = ds;
  std::set<std::string> test0(base.records[0].test_queries.begin(), base.records[0].test_queries.end());
  for (auto& g : perturbed.groups)
    if (test0.count(g.query_id))
      for (auto& r : g.candidates)
        for (double& x : r.features) x += 5.0;
  auto other = run_experiment(cfg, perturbed);
  EXPECT_EQ(other.records[0].train_hash, base.records[0].train_hash);
  EXPECT_NE(other.records[1].train_hash, base.records[1].train_hash);
}

TEST(Experiment, RerunIsByteIdenticalAcrossWorkerCounts) {
  auto ds = small_synth();
  auto cfg = kfold_config({svm_spec(), spec(ModelKind::logistic), spec(ModelKind::ranknet)});
  cfg.c_grid = {0.1, 1.0};
  cfg.workers = 1;
  const auto a = summary_csv(run_experiment(cfg, ds));
  cfg.workers = 4;
  const auto b = summary_csv(run_experiment(cfg, ds));
  EXPECT_EQ(a, b);
  const auto c = summary_csv(run_experiment(cfg, ds));
  EXPECT_EQ(b, c);
}

TEST(Experiment, RecordsSortedByModelFoldC) {
  auto ds = small_synth();
  auto cfg = kfold_config({svm_spec(), spec(ModelKind::logistic)});
  cfg.c_grid = {10.0, 0.1, 1.0};
  cfg.workers = 3;
  auto res = run_experiment(cfg, ds);
  ASSERT_EQ(res.records.size(), 5u + 15u);
  for (std::size_t i = 1; i < res.records.size(); ++i) {
    const auto& p = res.records[i - 1];
    const auto& r = res.records[i];
    EXPECT_LE(std::make_tuple(p.model, p.fold, p.C.value_or(-1.0)), std::make_tuple(r.model, r.fold, r.C.value_or(-1.0)));
  }
  EXPECT_EQ(res.records.front().model, "logistic");
}

TEST(Experiment, FailedRunsAreMarkedNotFatal) {
  Dataset ds;
  ds.dim = 1;
  // every candidate positive: no training pairs anywhere
  for (int q = 0; q < 6; ++q) ds.groups.push_back(testutil::group_from_relevances("q" + std::to_string(q), {3, 3}));
  auto cfg = kfold_config({svm_spec()});
  cfg.protocol.k = 3;
  auto res = run_experiment(cfg, ds);
  ASSERT_EQ(res.records.size(), 3u);
  for (const auto& r : res.records) EXPECT_TRUE(r.error.has_value());
  auto lines = csv_lines(summary_csv(res));
  EXPECT_NE(lines[1].find("failed"), std::string::npos);
  EXPECT_NE(lines.back().find("partial:3_failed"), std::string::npos);
}

TEST(Sweep, NineRowsPerModelPerFold) {
  auto ds = small_synth();
  auto cfg = kfold_config({svm_spec()});
  auto res = sweep_c(cfg, ds, default_c_grid());
  EXPECT_EQ(res.experiment.records.size(), 9u * 5u);
  for (std::size_t f = 0; f < 5; ++f) {
    std::size_t n = 0;
    for (const auto& r : res.experiment.records) n += r.fold == f;
    EXPECT_EQ(n, 9u);
  }
  EXPECT_EQ(res.experiment.aggregates.size(), 9u);
  EXPECT_TRUE(res.best_c.at("ranksvm").has_value());
}

TEST(Sweep, SingleValueAndTieTowardSmallerC) {
  auto ds = small_synth();
  auto cfg = kfold_config({svm_spec()});
  EXPECT_EQ(*sweep_c(cfg, ds, {0.5}).best_c.at("ranksvm"), 0.5);
  // separable data with margin: every C here ranks perfectly, so NDCG ties at 1
  synth::SynthConfig sc;
  sc.n_queries = 10;
  sc.n_cands_per_query = 30;
  sc.dim = 4;
  sc.band_fraction = 0.0;
  auto clean = synth::generate(sc);
  auto res = sweep_c(cfg, clean, {10.0, 1.0, 100.0});
  ASSERT_EQ(res.best_ndcg10.at("ranksvm"), 1.0);
  EXPECT_EQ(*res.best_c.at("ranksvm"), 1.0);
  EXPECT_THROW(sweep_c(cfg, clean, {}), UsageError);
}

TEST(Outputs, EmptyRecordsGiveHeadersOnly) {
  ExperimentResult res;
  EXPECT_EQ(summary_csv(res), summary_header(res.metrics));
  EXPECT_EQ(roc_csv({}), "threshold,fpr,tpr\n");
  EXPECT_EQ(scores_csv({}), "query_id,cand_id,label,score\n");
  testutil::TempDir dir("empty_out");
  emit_outputs(res, dir.path());
  EXPECT_EQ(io::read_file(dir / "summary.csv"), summary_header(res.metrics));
}

TEST(Outputs, RocReloadReintegrates) {
  auto ds = small_synth();
  auto res = run_experiment(kfold_config({svm_spec(), spec(ModelKind::logistic)}), ds);
  testutil::TempDir dir("roc");
  emit_outputs(res, dir.path());
  for (const auto& r : res.records) {
    ASSERT_TRUE(r.pooled_auc.has_value());
    auto curve = parse_roc_csv(io::read_file(dir.path() / "roc" / (harness::detail::run_stem(r) + ".csv")));
    EXPECT_TRUE(std::isinf(curve.front().threshold));
    EXPECT_NEAR(trapezoid_area(curve), *r.pooled_auc, 1e-9);
    auto scores = io::read_file(dir.path() / "scores" / (harness::detail::run_stem(r) + ".csv"));
    EXPECT_EQ(csv_lines(scores).size(), 1u + r.scores.size());
  }
  auto doc = nlohmann::json::parse(io::read_file(dir / "runs.json"));
  EXPECT_EQ(doc.at("config_hash"), res.config_hash);
  EXPECT_EQ(doc.at("runs").size(), res.records.size());
  auto table = format_table(doc);
  EXPECT_NE(table.find("ranksvm (C=1)"), std::string::npos);
  EXPECT_NE(table.find("NDCG@10"), std::string::npos);
}

TEST(Compare, NoiselessDataReachesCeiling) {
  auto source = [](std::uint64_t seed) {
    synth::SynthConfig sc;
    sc.n_queries = 10;
    sc.n_cands_per_query = 30;
    sc.dim = 4;
    sc.seed = seed;
    return synth::generate(sc);
  };
  Protocol p;
  p.kind = Protocol::Kind::holdout;
  auto s = compare_pointwise_pairwise(source, p, {0, 1});
  ASSERT_EQ(s.per_seed.size(), 2u);
  for (const auto& c : s.per_seed) {
    EXPECT_EQ(c.auc_pairwise, 1.0);
    EXPECT_EQ(c.auc_pointwise, 1.0);
  }
  EXPECT_EQ(s.mean_auc_delta, 0.0);
  EXPECT_EQ(s.auc_ties, 2u);
  auto again = compare_pointwise_pairwise(source, p, {0, 1});
  EXPECT_EQ(comparison_csv(again), comparison_csv(s));
  EXPECT_THROW(compare_pointwise_pairwise(source, p, {0}), UsageError);
}

TEST(Config, HashTracksConfiguration) {
  auto a = kfold_config({svm_spec(1.0)});
  auto b = kfold_config({svm_spec(2.0)});
  EXPECT_EQ(config_hash(a), config_hash(a));
  EXPECT_NE(config_hash(a), config_hash(b));
  EXPECT_EQ(config_hash(a).size(), 16u);
  ExperimentConfig empty;
  EXPECT_THROW(empty.validate(), UsageError);
  EXPECT_THROW(parse_model_kind("svm"), UsageError);
}

TEST(Pool, ResultsKeepJobOrder) {
  std::vector<std::function<int()>> jobs;
  for (int i = 0; i < 100; ++i) jobs.push_back([i] { return i * i; });
  auto out = run_pool(jobs, 8);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(out[i], i * i);
  EXPECT_EQ(worker_count(3), 3u);
}
