// pairrank: command-line front end for the learning-to-rank toolkit.
//
// Exit codes: 0 success, 1 usage error, 2 data error, 3 non-convergence (--strict).

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "pairrank/pairrank.hpp"

namespace fs = std::filesystem;
using namespace pairrank;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNonConvergence = 3;

struct SplitOptions {
  std::string folds_path;
  int fold = -1;
};

// Queries used for training (everything outside the fold) or testing (the fold itself).
std::vector<QueryGroup> select_queries(const Dataset& ds, const SplitOptions& so, bool test_side) {
  if (so.folds_path.empty()) return ds.groups;
  if (so.fold < 0) throw UsageError("--fold is required with --folds");
  auto fa = load_folds(so.folds_path);
  if (static_cast<std::size_t>(so.fold) >= fa.fold_count) throw UsageError("--fold out of range");
  std::vector<QueryGroup> out;
  for (const auto& g : ds.groups) {
    auto it = fa.assignment.find(g.query_id);
    if (it == fa.assignment.end()) throw DataError("query '" + g.query_id + "' missing from fold file");
    const bool in_fold = it->second == static_cast<std::size_t>(so.fold);
    if (in_fold == test_side) out.push_back(g);
  }
  return out;
}

// A trained model of any supported kind, loaded from its JSON file.
struct AnyModel {
  harness::ModelKind kind = harness::ModelKind::ranksvm;
  ranksvm::LinearModel svm;
  baselines::RankNetModel net;
  baselines::LogisticModel logistic;

  double score(std::span<const double> x) const {
    switch (kind) {
      case harness::ModelKind::ranksvm: return ranksvm::score(svm, x);
      case harness::ModelKind::ranknet: return net.score(x);
      case harness::ModelKind::logistic: return logistic.score(x);
    }
    return 0.0;
  }
};

AnyModel load_any_model(const fs::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(io::read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError(path.string() + ": " + e.what());
  } catch (const std::runtime_error& e) {
    throw DataError(e.what());
  }
  AnyModel m;
  if (!j.contains("architecture")) {
    m.kind = harness::ModelKind::ranksvm;
    m.svm = ranksvm::from_json(j);
  } else if (j["architecture"].value("type", "") == "ranknet") {
    m.kind = harness::ModelKind::ranknet;
    m.net = baselines::ranknet_from_json(j);
  } else {
    m.kind = harness::ModelKind::logistic;
    m.logistic = baselines::logistic_from_json(j);
  }
  return m;
}

void add_synth_options(CLI::App* app, synth::SynthConfig& sc, std::string& config_path) {
  app->add_option("--config", config_path, "Synth config JSON (flags override nothing when given)");
  app->add_option("--queries", sc.n_queries, "Number of queries");
  app->add_option("--cands", sc.n_cands_per_query, "Candidates per query");
  app->add_option("--dim", sc.dim, "Feature dimension");
  app->add_option("--positive-fraction", sc.positive_fraction, "Share of grade-3 candidates per query");
  app->add_option("--band-fraction", sc.band_fraction, "Share of grade-1 candidates (default: positive fraction)");
  app->add_option("--noise", sc.noise_sigma, "Gaussian noise on the latent score");
  app->add_option("--margin", sc.margin, "Latent gap planted between grade-3 candidates and the rest");
  app->add_option("--seed", sc.seed, "Generator seed");
}

synth::SynthConfig resolve_synth(synth::SynthConfig sc, const std::string& config_path) {
  if (config_path.empty()) {
    sc.validate();
    return sc;
  }
  return synth::config_from_json(nlohmann::json::parse(io::read_file(config_path)));
}

std::vector<harness::ModelSpec> parse_models(const std::vector<std::string>& names, double C, double epsilon,
                                             double lr, std::size_t epochs, std::size_t hidden) {
  std::vector<harness::ModelSpec> out;
  for (const auto& n : names) {
    harness::ModelSpec s;
    s.kind = harness::parse_model_kind(n);
    s.svm.C = C;
    s.svm.epsilon = epsilon;
    s.ranknet.lr = lr;
    s.ranknet.epochs = epochs;
    s.ranknet.hidden_width = hidden;
    out.push_back(s);
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"pairrank: pairwise learning-to-rank toolkit"};
  app.require_subcommand(1);

  // synth
  synth::SynthConfig synth_cfg;
  std::string synth_config_path, synth_out;
  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic dataset with a planted linear model");
  add_synth_options(synth_cmd, synth_cfg, synth_config_path);
  synth_cmd->add_option("--out", synth_out, "Output directory")->required();

  // split
  std::string split_manifest, split_out;
  std::size_t split_k = 5;
  double split_holdout = 0.0;
  std::uint64_t split_seed = 0;
  auto* split_cmd = app.add_subcommand("split", "Assign queries to folds (or a train/test holdout)");
  split_cmd->add_option("--manifest", split_manifest, "Dataset manifest")->required();
  split_cmd->add_option("--k", split_k, "Number of folds");
  split_cmd->add_option("--holdout", split_holdout, "Train fraction for a single holdout split");
  split_cmd->add_option("--seed", split_seed, "Shuffle seed");
  split_cmd->add_option("--out", split_out, "Output JSON path")->required();

  // train
  std::string train_manifest, train_model = "ranksvm", train_out;
  SplitOptions train_split;
  ranksvm::SolverConfig train_svm;
  baselines::RankNetParams train_net;
  baselines::LogisticParams train_log;
  int threshold = 3;
  bool strict = false;
  auto* train_cmd = app.add_subcommand("train", "Train a model on a dataset (optionally excluding one fold)");
  train_cmd->add_option("--manifest", train_manifest, "Dataset manifest")->required();
  train_cmd->add_option("--model", train_model, "ranksvm | ranknet | logistic");
  train_cmd->add_option("--C", train_svm.C, "RankSVM trade-off C");
  train_cmd->add_option("--epsilon", train_svm.epsilon, "Cutting-plane tolerance");
  train_cmd->add_option("--max-iters", train_svm.max_outer_iters, "Outer iteration limit");
  train_cmd->add_option("--lr", train_net.lr, "Learning rate (ranknet / logistic)");
  train_cmd->add_option("--epochs", train_net.epochs, "Epochs (ranknet / logistic)");
  train_cmd->add_option("--hidden", train_net.hidden_width, "RankNet hidden width (0 = linear)");
  train_cmd->add_option("--seed", train_net.seed, "Initialization seed");
  train_cmd->add_option("--threshold", threshold, "Golden-label relevance threshold");
  train_cmd->add_option("--folds", train_split.folds_path, "Fold file");
  train_cmd->add_option("--fold", train_split.fold, "Held-out fold excluded from training");
  train_cmd->add_option("--out", train_out, "Model JSON path")->required();
  train_cmd->add_flag("--strict", strict, "Exit 3 if the solver does not converge");

  // rank
  std::string rank_manifest, rank_model, rank_out;
  SplitOptions rank_split;
  auto* rank_cmd = app.add_subcommand("rank", "Score and rank candidates with a trained model");
  rank_cmd->add_option("--manifest", rank_manifest, "Dataset manifest")->required();
  rank_cmd->add_option("--model", rank_model, "Model JSON")->required();
  rank_cmd->add_option("--folds", rank_split.folds_path, "Fold file");
  rank_cmd->add_option("--fold", rank_split.fold, "Rank only this fold's queries");
  rank_cmd->add_option("--threshold", threshold, "Golden-label relevance threshold");
  rank_cmd->add_option("--out", rank_out, "Score dump CSV (query_id,cand_id,label,score)")->required();

  // eval
  std::string eval_manifest, eval_model, eval_out;
  SplitOptions eval_split;
  MetricConfig eval_metrics;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a trained model");
  eval_cmd->add_option("--manifest", eval_manifest, "Dataset manifest")->required();
  eval_cmd->add_option("--model", eval_model, "Model JSON")->required();
  eval_cmd->add_option("--folds", eval_split.folds_path, "Fold file");
  eval_cmd->add_option("--fold", eval_split.fold, "Evaluate only this fold's queries");
  eval_cmd->add_option("--ndcg-k", eval_metrics.ndcg_ks, "NDCG cutoffs");
  eval_cmd->add_option("--p-k", eval_metrics.precision_ks, "Precision cutoffs");
  eval_cmd->add_option("--threshold", eval_metrics.threshold, "Golden-label relevance threshold");
  eval_cmd->add_option("--out-dir", eval_out, "Directory for report.json, roc.csv, scores.csv")->required();

  // sweep
  harness::ExperimentConfig sweep_cfg;
  std::string sweep_manifest, sweep_out;
  std::vector<std::string> sweep_models{"ranksvm"};
  std::vector<double> sweep_grid = harness::default_c_grid();
  double sweep_holdout = 0.0, sweep_eps = 1e-3, sweep_lr = 0.1;
  std::size_t sweep_epochs = 200, sweep_hidden = 0;
  auto* sweep_cmd = app.add_subcommand("sweep", "Run the fold protocol over a grid of C values");
  sweep_cmd->add_option("--manifest", sweep_manifest, "Dataset manifest")->required();
  sweep_cmd->add_option("--models", sweep_models, "Models to run (ranksvm ranknet logistic)");
  sweep_cmd->add_option("--c-grid", sweep_grid, "C values (default: de-duplicated published grid)");
  sweep_cmd->add_option("--k", sweep_cfg.protocol.k, "Number of folds");
  sweep_cmd->add_option("--holdout", sweep_holdout, "Use a single holdout with this train fraction");
  sweep_cmd->add_option("--seed", sweep_cfg.protocol.seed, "Split seed");
  sweep_cmd->add_option("--epsilon", sweep_eps, "Cutting-plane tolerance");
  sweep_cmd->add_option("--lr", sweep_lr, "RankNet learning rate");
  sweep_cmd->add_option("--epochs", sweep_epochs, "RankNet epochs");
  sweep_cmd->add_option("--hidden", sweep_hidden, "RankNet hidden width");
  sweep_cmd->add_option("--ndcg-k", sweep_cfg.metrics.ndcg_ks, "NDCG cutoffs");
  sweep_cmd->add_option("--p-k", sweep_cfg.metrics.precision_ks, "Precision cutoffs");
  sweep_cmd->add_option("--threshold", sweep_cfg.metrics.threshold, "Golden-label relevance threshold");
  sweep_cmd->add_option("--workers", sweep_cfg.workers, "Worker threads (default: PAIRRANK_WORKERS or all cores)");
  sweep_cmd->add_option("--out-dir", sweep_out, "Output directory")->required();
  sweep_cmd->add_flag("--strict", strict, "Exit 3 if any RankSVM run does not converge");

  // compare
  std::string cmp_manifest, cmp_out, cmp_synth_config;
  synth::SynthConfig cmp_synth;
  std::size_t cmp_seeds = 20;
  double cmp_C = 1.0, cmp_holdout = 0.8;
  std::size_t cmp_workers = 0;
  auto* cmp_cmd = app.add_subcommand("compare", "Pointwise logistic vs pairwise RankSVM over several seeds");
  cmp_cmd->add_option("--manifest", cmp_manifest, "Fixed dataset (seeds vary the split); omit to synthesize per seed");
  add_synth_options(cmp_cmd, cmp_synth, cmp_synth_config);
  cmp_cmd->add_option("--seeds", cmp_seeds, "Number of seeds (0..n-1)");
  cmp_cmd->add_option("--C", cmp_C, "RankSVM C");
  cmp_cmd->add_option("--holdout", cmp_holdout, "Train fraction");
  cmp_cmd->add_option("--workers", cmp_workers, "Worker threads");
  cmp_cmd->add_option("--out", cmp_out, "Per-seed CSV");

  // report
  std::string report_dir;
  auto* report_cmd = app.add_subcommand("report", "Print the aggregate table of a finished sweep");
  report_cmd->add_option("--run-dir", report_dir, "Directory written by sweep")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitUsage;
  }

  try {
    if (*synth_cmd) {
      auto sc = resolve_synth(synth_cfg, synth_config_path);
      auto ds = synth::generate(sc);
      auto path = save_dataset(ds, synth_out);
      io::write_atomic(fs::path(synth_out) / "synth_config.json", synth::to_json(sc).dump(2) + "\n");
      std::cout << "wrote " << ds.record_count() << " records over " << ds.groups.size() << " queries to "
                << path.string() << "\n";
    } else if (*split_cmd) {
      auto ds = load_dataset(split_manifest);
      if (split_holdout > 0.0) {
        auto h = holdout_split(query_ids(ds), split_holdout, split_seed);
        nlohmann::json j = {{"train_fraction", split_holdout}, {"seed", split_seed}, {"train", h.train}, {"test", h.test}};
        io::write_atomic(split_out, j.dump(2) + "\n");
        std::cout << "holdout: " << h.train.size() << " train / " << h.test.size() << " test\n";
      } else {
        auto fa = kfold_split(query_ids(ds), split_k, split_seed);
        save_folds(fa, split_seed, split_out);
        std::cout << "fold sizes:";
        for (auto s : fa.fold_sizes()) std::cout << " " << s;
        std::cout << "\n";
      }
    } else if (*train_cmd) {
      auto ds = load_dataset(train_manifest);
      auto groups = select_queries(ds, train_split, false);
      const auto kind = harness::parse_model_kind(train_model);
      if (kind == harness::ModelKind::logistic) {
        train_log.lr = train_net.lr;
        train_log.epochs = train_net.epochs;
        train_log.seed = train_net.seed;
        auto m = baselines::train_logistic(baselines::LabeledSet::from_groups(groups, ds.dim, threshold), train_log);
        io::write_atomic(train_out, baselines::to_json(m).dump(2) + "\n");
        std::cout << "logistic: final loss " << m.final_loss << "\n";
      } else {
        PairSet all;
        for (const auto& g : groups) all.append(generate_pairs(g, threshold));
        auto stats = pair_stats(std::span<const PairSet>(&all, 1));
        auto tp = TrainingPairs::from_pairs(groups, all, ds.dim);
        std::cout << stats.total_pairs << " pairs over " << stats.query_count << " queries ("
                  << stats.degenerate_groups << " degenerate)\n";
        if (kind == harness::ModelKind::ranknet) {
          auto m = baselines::train_ranknet(tp, train_net);
          io::write_atomic(train_out, baselines::to_json(m).dump(2) + "\n");
          std::cout << "ranknet: final loss " << m.final_loss << "\n";
        } else {
          auto m = ranksvm::train(tp, train_svm);
          ranksvm::save_model(m, train_out);
          std::cout << "ranksvm: objective " << m.meta.objective << " after " << m.meta.iterations
                    << " iterations, converged=" << (m.meta.converged ? "true" : "false") << "\n";
          if (strict && !m.meta.converged) return kExitNonConvergence;
        }
      }
    } else if (*rank_cmd) {
      auto ds = load_dataset(rank_manifest);
      auto model = load_any_model(rank_model);
      std::vector<harness::ScoredCandidate> rows;
      for (const auto& g : select_queries(ds, rank_split, true)) {
        std::vector<double> s;
        for (const auto& r : g.candidates) s.push_back(model.score(r.features));
        auto ranking = rank_by_scores(g, s);
        std::map<std::string, int> rel;
        for (const auto& r : g.candidates) rel[r.cand_id] = r.relevance;
        for (std::size_t i = 0; i < ranking.cand_ids.size(); ++i)
          rows.push_back({g.query_id, ranking.cand_ids[i], rel[ranking.cand_ids[i]] >= threshold ? 1 : 0,
                          ranking.scores[i]});
      }
      io::write_atomic(rank_out, harness::scores_csv(rows));
    } else if (*eval_cmd) {
      auto ds = load_dataset(eval_manifest);
      auto model = load_any_model(eval_model);
      auto groups = select_queries(ds, eval_split, true);
      std::vector<std::pair<const QueryGroup*, Ranking>> ranked;
      harness::RunRecord rec;
      rec.model = harness::to_string(model.kind);
      rec.fold = eval_split.fold < 0 ? 0 : static_cast<std::size_t>(eval_split.fold);
      std::vector<double> all_s;
      std::vector<int> all_l;
      for (const auto& g : groups) {
        std::vector<double> s;
        for (const auto& r : g.candidates) {
          s.push_back(model.score(r.features));
          const int l = r.relevance >= eval_metrics.threshold ? 1 : 0;
          rec.scores.push_back({g.query_id, r.cand_id, l, s.back()});
          all_s.push_back(s.back());
          all_l.push_back(l);
        }
        ranked.emplace_back(&g, rank_by_scores(g, s));
      }
      rec.report = make_report(ranked, eval_metrics);
      if (std::count(all_l.begin(), all_l.end(), 1) > 0 && std::count(all_l.begin(), all_l.end(), 0) > 0) {
        auto roc = roc_auc(all_s, all_l);
        rec.pooled_auc = roc.auc;
        rec.roc = roc.curve;
      }
      harness::ExperimentResult res;
      res.metrics = eval_metrics;
      res.config_hash = harness::hex64(harness::fnv1a(io::read_file(eval_model)));
      res.records.push_back(rec);
      res.aggregates = harness::aggregate_rows(res.records, eval_metrics);
      const fs::path dir = eval_out;
      io::write_atomic(dir / "summary.csv", harness::summary_csv(res));
      io::write_atomic(dir / "report.json", harness::runs_json(res).dump(2) + "\n");
      io::write_atomic(dir / "roc.csv", harness::roc_csv(rec.roc));
      io::write_atomic(dir / "scores.csv", harness::scores_csv(rec.scores));
      std::cout << harness::format_table(harness::runs_json(res));
    } else if (*sweep_cmd) {
      auto ds = load_dataset(sweep_manifest);
      sweep_cfg.manifest = sweep_manifest;
      if (sweep_holdout > 0.0) {
        sweep_cfg.protocol.kind = harness::Protocol::Kind::holdout;
        sweep_cfg.protocol.train_fraction = sweep_holdout;
      }
      sweep_cfg.models = parse_models(sweep_models, 1.0, sweep_eps, sweep_lr, sweep_epochs, sweep_hidden);
      auto res = harness::sweep_c(sweep_cfg, ds, sweep_grid);
      harness::emit_outputs(res.experiment, sweep_out);
      nlohmann::json best = nlohmann::json::object();
      for (const auto& [model, c] : res.best_c)
        best[model] = {{"C", c ? nlohmann::json(*c) : nlohmann::json(nullptr)}, {"ndcg", res.best_ndcg10.at(model)}};
      io::write_atomic(fs::path(sweep_out) / "best.json", best.dump(2) + "\n");
      std::cout << harness::format_table(harness::runs_json(res.experiment));
      for (const auto& [model, c] : res.best_c)
        std::cout << "best " << model << (c ? ": C=" + io::format_exact(*c) : std::string(": (no C)")) << "\n";
      if (strict)
        for (const auto& r : res.experiment.records)
          if (!r.converged) return kExitNonConvergence;
      for (const auto& r : res.experiment.records)
        if (r.error) {
          std::cerr << "run " << r.model << " fold " << r.fold << " failed: " << *r.error << "\n";
          return kExitData;
        }
    } else if (*cmp_cmd) {
      std::function<Dataset(std::uint64_t)> source;
      if (!cmp_manifest.empty()) {
        auto ds = load_dataset(cmp_manifest);
        source = [ds](std::uint64_t) { return ds; };
      } else {
        auto base = resolve_synth(cmp_synth, cmp_synth_config);
        source = [base](std::uint64_t seed) {
          auto c = base;
          c.seed = seed;
          return synth::generate(c);
        };
      }
      std::vector<std::uint64_t> seeds(cmp_seeds);
      for (std::size_t i = 0; i < cmp_seeds; ++i) seeds[i] = i;
      harness::Protocol proto;
      proto.kind = harness::Protocol::Kind::holdout;
      proto.train_fraction = cmp_holdout;
      ranksvm::SolverConfig svm;
      svm.C = cmp_C;
      auto s = harness::compare_pointwise_pairwise(source, proto, seeds, svm, {}, {}, cmp_workers);
      const auto csv = harness::comparison_csv(s);
      if (!cmp_out.empty()) io::write_atomic(cmp_out, csv);
      std::cout << csv;
      std::cout << "mean AUC pairwise " << s.mean_auc_pairwise << " pointwise " << s.mean_auc_pointwise
                << " delta " << s.mean_auc_delta << "\n"
                << "AUC wins/ties/losses " << s.auc_wins << "/" << s.auc_ties << "/" << s.auc_losses << "\n"
                << "mean NDCG@10 delta " << s.mean_ndcg_delta << ", wins/ties/losses " << s.ndcg_wins << "/"
                << s.ndcg_ties << "/" << s.ndcg_losses << "\n";
    } else if (*report_cmd) {
      auto doc = nlohmann::json::parse(io::read_file(fs::path(report_dir) / "runs.json"));
      std::cout << harness::format_table(doc);
    }
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
  return 0;
}
