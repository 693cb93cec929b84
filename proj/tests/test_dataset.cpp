#include <gtest/gtest.h>

#include <algorithm>
#include <fstream>
#include <random>
#include <set>

#include "pairrank/dataset.hpp"
#include "pairrank/synth.hpp"
#include "test_util.hpp"

using namespace pairrank;
using testutil::TempDir;

namespace {

void write_text(const std::filesystem::path& p, const std::string& s) {
  std::ofstream out(p);
  out << s;
}

std::string line(const std::string& q, const std::string& c, int rel, const std::string& feats) {
  return R"({"query_id":")" + q + R"(","cand_id":")" + c + R"(","relevance":)" + std::to_string(rel) +
         R"(,"features":)" + feats + "}\n";
}

std::filesystem::path manifest(const TempDir& dir, int dim, const std::vector<std::string>& files) {
  nlohmann::json m = {{"dim", dim}, {"grade_max", 3}, {"files", files}, {"provenance", "test"}};
  auto p = dir / "manifest.json";
  write_text(p, m.dump());
  return p;
}

std::vector<std::string> ids(std::size_t n) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back("q" + std::to_string(i));
  return out;
}

}  // namespace

TEST(LoadDataset, GroupsSixRecordsIntoTwoQueries) {
  TempDir dir("load");
  std::string body;
  body += line("a", "1", 3, "[1,0]");
  body += line("b", "1", 0, "[0,1]");
  body += line("a", "2", 0, "[0.5,1e-3]");
  body += line("a", "3", 1, "[2,2]");
  body += line("b", "2", 2, "[3,3]");
  body += line("b", "3", 3, "[-1,4]");
  write_text(dir / "f.jsonl", body);
  auto ds = load_dataset(manifest(dir, 2, {"f.jsonl"}));
  ASSERT_EQ(ds.groups.size(), 2u);
  EXPECT_EQ(ds.groups[0].query_id, "a");
  EXPECT_EQ(ds.groups[0].size(), 3u);
  EXPECT_EQ(ds.groups[1].size(), 3u);
  EXPECT_EQ(ds.groups[0].candidates[1].cand_id, "2");
  EXPECT_DOUBLE_EQ(ds.groups[0].candidates[1].features[1], 1e-3);
  EXPECT_EQ(ds.provenance, "test");
  EXPECT_EQ(ds.record_count(), 6u);
}

TEST(LoadDataset, DimensionMismatchNamesTheLine) {
  TempDir dir("dim");
  write_text(dir / "f.jsonl", line("a", "1", 0, "[1,2,3,4]") + line("a", "2", 0, "[1,2,3,4,5]"));
  try {
    load_dataset(manifest(dir, 4, {"f.jsonl"}));
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    std::string msg = e.what();
    EXPECT_NE(msg.find("f.jsonl:2"), std::string::npos) << msg;
    EXPECT_NE(msg.find("dimension mismatch"), std::string::npos) << msg;
  }
}

TEST(LoadDataset, EmptyFileListIsAnError) {
  TempDir dir("empty");
  try {
    load_dataset(manifest(dir, 4, {}));
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("no feature files"), std::string::npos);
  }
}

TEST(LoadDataset, RejectsDuplicatesOutOfRangeGradesAndMissingFiles) {
  TempDir dir("bad");
  write_text(dir / "dup.jsonl", line("a", "1", 0, "[1]") + line("a", "1", 1, "[2]"));
  EXPECT_THROW(load_dataset(manifest(dir, 1, {"dup.jsonl"})), DataError);
  write_text(dir / "grade.jsonl", line("a", "1", 4, "[1]"));
  EXPECT_THROW(load_dataset(manifest(dir, 1, {"grade.jsonl"})), DataError);
  write_text(dir / "nan.jsonl", R"({"query_id":"a","cand_id":"1","relevance":0,"features":["x"]})" "\n");
  EXPECT_THROW(load_dataset(manifest(dir, 1, {"nan.jsonl"})), DataError);
  write_text(dir / "broken.jsonl", "{not json\n");
  EXPECT_THROW(load_dataset(manifest(dir, 1, {"broken.jsonl"})), DataError);
  EXPECT_THROW(load_dataset(manifest(dir, 1, {"absent.jsonl"})), DataError);
  EXPECT_THROW(load_dataset(dir / "no_manifest.json"), DataError);
}

TEST(LoadDataset, SameCandidateIdInDifferentQueriesIsAllowed) {
  TempDir dir("shared");
  write_text(dir / "f.jsonl", line("a", "x", 0, "[1]") + line("b", "x", 3, "[2]"));
  auto ds = load_dataset(manifest(dir, 1, {"f.jsonl"}));
  EXPECT_EQ(ds.groups.size(), 2u);
}

TEST(LoadDataset, MultipleFilesConcatenate) {
  TempDir dir("multi");
  write_text(dir / "a.jsonl", line("a", "1", 0, "[1]"));
  write_text(dir / "b.jsonl", line("a", "2", 3, "[2]") + line("b", "1", 0, "[0]"));
  auto ds = load_dataset(manifest(dir, 1, {"a.jsonl", "b.jsonl"}));
  ASSERT_EQ(ds.groups.size(), 2u);
  EXPECT_EQ(ds.groups[0].size(), 2u);
}

TEST(LoadDataset, RoundTripIsIdentity) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    std::mt19937_64 rng(seed);
    auto ds = testutil::random_dataset(rng, 7, 9, 4);
    ds.provenance = "round trip " + std::to_string(seed);
    TempDir dir("rt");
    auto first = load_dataset(save_dataset(ds, dir.path()));
    EXPECT_EQ(first, ds);
    TempDir dir2("rt2");
    auto second = load_dataset(save_dataset(first, dir2.path()));
    EXPECT_EQ(second, first);
  }
}

TEST(LoadDataset, SyntheticDataPassesValidation) {
  synth::SynthConfig sc;
  sc.n_queries = 4;
  sc.n_cands_per_query = 30;
  sc.dim = 5;
  auto ds = synth::generate(sc);
  EXPECT_NO_THROW(validate(ds));
  TempDir dir("synthrt");
  EXPECT_EQ(load_dataset(save_dataset(ds, dir.path())), ds);
}

TEST(BinarizeLabels, KnownValues) {
  EXPECT_EQ(binarize_labels(testutil::group_from_relevances("q", {3, 2, 0, 3}), 3), (std::vector<int>{1, 0, 0, 1}));
  for (int t : {1, 2, 3}) EXPECT_EQ(binarize_labels(testutil::group_from_relevances("q", {0, 0}), t), (std::vector<int>{0, 0}));
  EXPECT_EQ(binarize_labels(testutil::group_from_relevances("q", {3, 3})), (std::vector<int>{1, 1}));
}

TEST(BinarizeLabels, MonotoneInThreshold) {
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<int> grade(0, 3);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<int> rels(12);
    for (int& r : rels) r = grade(rng);
    auto g = testutil::group_from_relevances("q", rels);
    for (int t = 0; t < 4; ++t) {
      auto lo = binarize_labels(g, t), hi = binarize_labels(g, t + 1);
      for (std::size_t i = 0; i < rels.size(); ++i) EXPECT_LE(hi[i], lo[i]);
    }
  }
}

TEST(KfoldSplit, HundredSevenQueriesFiveFolds) {
  auto fa = kfold_split(ids(107), 5, 42);
  auto sizes = fa.fold_sizes();
  std::sort(sizes.begin(), sizes.end(), std::greater<>());
  EXPECT_EQ(sizes, (std::vector<std::size_t>{22, 22, 21, 21, 21}));
}

TEST(KfoldSplit, LeaveOneOut) {
  auto fa = kfold_split(ids(10), 10, 3);
  for (auto s : fa.fold_sizes()) EXPECT_EQ(s, 1u);
}

TEST(KfoldSplit, DeterministicPerSeed) {
  EXPECT_EQ(kfold_split(ids(50), 5, 9).assignment, kfold_split(ids(50), 5, 9).assignment);
  EXPECT_NE(kfold_split(ids(50), 5, 9).assignment, kfold_split(ids(50), 5, 10).assignment);
}

TEST(KfoldSplit, PartitionProperties) {
  for (std::size_t n : {5u, 13u, 64u, 107u}) {
    for (std::size_t k : {2u, 3u, 5u}) {
      for (std::uint64_t seed = 0; seed < 5; ++seed) {
        auto fa = kfold_split(ids(n), k, seed);
        std::set<std::string> all;
        for (std::size_t f = 0; f < k; ++f)
          for (const auto& q : fa.queries_in(f)) EXPECT_TRUE(all.insert(q).second) << "query in two folds";
        EXPECT_EQ(all.size(), n);
        auto sizes = fa.fold_sizes();
        EXPECT_LE(*std::max_element(sizes.begin(), sizes.end()) - *std::min_element(sizes.begin(), sizes.end()), 1u);
      }
    }
  }
}

TEST(KfoldSplit, RejectsBadK) {
  EXPECT_THROW(kfold_split(ids(3), 4, 0), UsageError);
  EXPECT_THROW(kfold_split(ids(3), 0, 0), UsageError);
}

TEST(KfoldSplit, FoldFileRoundTrip) {
  TempDir dir("folds");
  auto fa = kfold_split(ids(23), 5, 11);
  save_folds(fa, 11, dir / "folds.json");
  auto back = load_folds(dir / "folds.json");
  EXPECT_EQ(back.fold_count, 5u);
  EXPECT_EQ(back.assignment, fa.assignment);
  auto j = nlohmann::json::parse(io::read_file(dir / "folds.json"));
  EXPECT_EQ(j.at("seed").get<int>(), 11);
}

TEST(HoldoutSplit, EightHundredQueries) {
  auto h = holdout_split(ids(800), 0.8, 1);
  EXPECT_EQ(h.train.size(), 640u);
  EXPECT_EQ(h.test.size(), 160u);
  std::set<std::string> train(h.train.begin(), h.train.end());
  for (const auto& q : h.test) EXPECT_FALSE(train.count(q));
}

TEST(Subpool, PadsThirtyLabeledToOneThirty) {
  synth::SynthConfig sc;
  sc.n_queries = 10;
  sc.n_cands_per_query = 100;
  sc.dim = 3;
  auto corpus = synth::generate(sc);
  QueryGroup labeled{"L", {}};
  for (std::size_t i = 0; i < 30; ++i) labeled.candidates.push_back(corpus.groups[0].candidates[i]);
  auto g = build_subpool("L", labeled, corpus, 130, 5);
  ASSERT_EQ(g.size(), 130u);
  std::set<std::string> seen;
  for (const auto& r : g.candidates) {
    EXPECT_TRUE(seen.insert(r.cand_id).second) << "duplicate " << r.cand_id;
    EXPECT_EQ(r.query_id, "L");
  }
  for (std::size_t i = 0; i < 30; ++i) {
    EXPECT_EQ(g.candidates[i].cand_id, labeled.candidates[i].cand_id);
    EXPECT_EQ(g.candidates[i].relevance, labeled.candidates[i].relevance);
  }
  for (std::size_t i = 30; i < 130; ++i) EXPECT_EQ(g.candidates[i].relevance, 0);
  EXPECT_EQ(build_subpool("L", labeled, corpus, 130, 5), g);
}

TEST(Subpool, FullPoolUnchangedAndSmallCorpusFails) {
  auto labeled = testutil::group_from_relevances("q", {3, 0, 1});
  Dataset corpus;
  corpus.dim = 1;
  corpus.groups.push_back(testutil::group_from_relevances("other", {0, 0}));
  EXPECT_EQ(build_subpool("q", labeled, corpus, 3, 1), labeled);
  EXPECT_THROW(build_subpool("q", labeled, corpus, 10, 1), DataError);
  EXPECT_THROW(build_subpool("q", labeled, corpus, 2, 1), UsageError);
}

TEST(Subpool, NeverDuplicatesWhenCorpusRepeatsIds) {
  // corpus groups reuse cand ids, and some collide with labeled ids
  Dataset corpus;
  corpus.dim = 1;
  for (int q = 0; q < 4; ++q) corpus.groups.push_back(testutil::group_from_relevances("g" + std::to_string(q), std::vector<int>(8, 0)));
  auto labeled = testutil::group_from_relevances("q", {3, 3});
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto g = build_subpool("q", labeled, corpus, 8, seed);
    std::set<std::string> seen;
    for (const auto& r : g.candidates) EXPECT_TRUE(seen.insert(r.cand_id).second);
    EXPECT_EQ(g.size(), 8u);
  }
  EXPECT_THROW(build_subpool("q", labeled, corpus, 9, 0), DataError);
}

TEST(RankByScores, OrdersAndBreaksTies) {
  auto g = testutil::group_from_relevances("q", {0, 0, 0});
  std::vector<double> s{2, 5, 3};
  auto r = rank_by_scores(g, s);
  EXPECT_EQ(r.cand_ids, (std::vector<std::string>{"c1", "c2", "c0"}));
  std::vector<double> tie{1, 1, 0};
  EXPECT_EQ(rank_by_scores(g, tie).cand_ids, (std::vector<std::string>{"c0", "c1", "c2"}));
  auto single = testutil::group_from_relevances("q", {2});
  std::vector<double> one{-4};
  EXPECT_EQ(rank_by_scores(single, one).cand_ids, (std::vector<std::string>{"c0"}));
}

TEST(Io, FormatExactRoundTrips) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> normal(0.0, 10.0);
  for (int i = 0; i < 1000; ++i) {
    double v = normal(rng);
    EXPECT_EQ(std::strtod(io::format_exact(v).c_str(), nullptr), v);
  }
  EXPECT_EQ(io::format_exact(0.1), "0.1");
  EXPECT_EQ(io::csv_field("a,b"), "\"a,b\"");
  EXPECT_EQ(io::csv_field("plain"), "plain");
}

TEST(Io, AtomicWriteLeavesNoTempFile) {
  TempDir dir("atomic");
  io::write_atomic(dir / "sub/out.txt", "hello");
  EXPECT_EQ(io::read_file(dir / "sub/out.txt"), "hello");
  EXPECT_FALSE(std::filesystem::exists(dir / "sub/out.txt.tmp"));
}
