#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pairrank/types.hpp"

namespace pairrank::synth {

struct SynthConfig {
  std::size_t n_queries = 20;
  std::size_t n_cands_per_query = 100;
  std::size_t dim = 16;
  double positive_fraction = 0.1;
  double band_fraction = -1.0;  // grade-1 band share; negative means "same as positive_fraction"
  double noise_sigma = 0.0;
  double margin = 1.0;  // latent-score gap planted between grade-3 candidates and the rest
  std::uint64_t seed = 0;
  std::optional<std::vector<double>> planted_w;

  std::size_t positives_per_query() const {
    auto n = static_cast<std::size_t>(std::floor(positive_fraction * static_cast<double>(n_cands_per_query)));
    return std::max<std::size_t>(n, 1);
  }
  std::size_t band_per_query() const {
    const double f = band_fraction < 0.0 ? positive_fraction : band_fraction;
    auto n = static_cast<std::size_t>(std::floor(f * static_cast<double>(n_cands_per_query)));
    return std::min(n, n_cands_per_query - positives_per_query());
  }

  void validate() const {
    if (n_queries == 0 || n_cands_per_query == 0 || dim == 0)
      throw UsageError("n_queries, n_cands_per_query and dim must be positive");
    if (!(positive_fraction > 0.0 && positive_fraction < 1.0))
      throw UsageError("positive_fraction must lie in (0, 1)");
    if (band_fraction >= 1.0) throw UsageError("band_fraction must be < 1");
    if (noise_sigma < 0.0) throw UsageError("noise_sigma must be non-negative");
    if (margin < 0.0) throw UsageError("margin must be non-negative");
    if (planted_w && planted_w->size() != dim) throw UsageError("planted_w length must equal dim");
  }
};

/// splitmix64 finalizer; per-query streams use mix(seed + (q + 1) * golden ratio constant).
inline std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

inline std::uint64_t query_seed(std::uint64_t seed, std::size_t q) {
  return mix_seed(seed + (static_cast<std::uint64_t>(q) + 1) * 0x9E3779B97F4A7C15ULL);
}

/// The planted weight vector: the configured one, or a seeded random unit vector.
inline std::vector<double> planted_weights(const SynthConfig& cfg) {
  if (cfg.planted_w) return *cfg.planted_w;
  std::mt19937_64 rng(mix_seed(cfg.seed));
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> w(cfg.dim);
  double norm = 0.0;
  do {
    for (double& x : w) x = normal(rng);
    norm = std::sqrt(detail::squared_norm(w));
  } while (norm == 0.0);
  for (double& x : w) x /= norm;
  return w;
}

inline std::string query_name(std::size_t q) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "q%05zu", q);
  return buf;
}

inline std::string cand_name(std::size_t q, std::size_t c) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "q%05zu_c%05zu", q, c);
  return buf;
}

/// Isotropic Gaussian features; latent score w^T x + N(0, sigma^2). Per query
/// the top positives_per_query() candidates by latent score get grade 3, the
/// next band_per_query() get grade 1, the rest 0. Grade-3 features are then
/// shifted by margin * w / |w|^2, raising their planted score w^T x by exactly
/// `margin`.
inline Dataset generate(const SynthConfig& cfg) {
  cfg.validate();
  const auto w = planted_weights(cfg);
  const std::size_t n = cfg.n_cands_per_query;
  const std::size_t n_pos = cfg.positives_per_query();
  const std::size_t n_band = cfg.band_per_query();

  Dataset ds;
  ds.dim = cfg.dim;
  ds.grade_max = 3;
  ds.provenance = nlohmann::json{{"generator", "pairrank synth"},
                                 {"seed", cfg.seed},
                                 {"n_queries", cfg.n_queries},
                                 {"n_cands_per_query", n},
                                 {"dim", cfg.dim},
                                 {"positive_fraction", cfg.positive_fraction},
                                 {"noise_sigma", cfg.noise_sigma},
                                 {"margin", cfg.margin}}
                      .dump();

  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t q = 0; q < cfg.n_queries; ++q) {
    std::mt19937_64 rng(query_seed(cfg.seed, q));
    QueryGroup g{query_name(q), {}};
    std::vector<double> latent(n);
    for (std::size_t c = 0; c < n; ++c) {
      FeatureRecord r{g.query_id, cand_name(q, c), 0, std::vector<double>(cfg.dim)};
      for (double& x : r.features) x = normal(rng);
      latent[c] = detail::dot(w, r.features);
      g.candidates.push_back(std::move(r));
    }
    if (cfg.noise_sigma > 0.0)
      for (double& s : latent) s += cfg.noise_sigma * normal(rng);

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return latent[a] > latent[b]; });
    for (std::size_t i = 0; i < n; ++i) {
      int grade = i < n_pos ? 3 : (i < n_pos + n_band ? 1 : 0);
      g.candidates[order[i]].relevance = grade;
    }
    if (cfg.margin > 0.0) {
      const double scale = cfg.margin / detail::squared_norm(w);
      for (std::size_t i = 0; i < n_pos; ++i) detail::axpy(scale, w, g.candidates[order[i]].features);
    }
    ds.groups.push_back(std::move(g));
  }
  return ds;
}

inline nlohmann::json to_json(const SynthConfig& c) {
  nlohmann::json j = {{"n_queries", c.n_queries},
                      {"n_cands_per_query", c.n_cands_per_query},
                      {"dim", c.dim},
                      {"positive_fraction", c.positive_fraction},
                      {"band_fraction", c.band_fraction},
                      {"noise_sigma", c.noise_sigma},
                      {"margin", c.margin},
                      {"seed", c.seed}};
  if (c.planted_w) j["planted_w"] = *c.planted_w;
  return j;
}

inline SynthConfig config_from_json(const nlohmann::json& j) {
  SynthConfig c;
  try {
    c.n_queries = j.value("n_queries", c.n_queries);
    c.n_cands_per_query = j.value("n_cands_per_query", c.n_cands_per_query);
    c.dim = j.value("dim", c.dim);
    c.positive_fraction = j.value("positive_fraction", c.positive_fraction);
    c.band_fraction = j.value("band_fraction", c.band_fraction);
    c.noise_sigma = j.value("noise_sigma", c.noise_sigma);
    c.margin = j.value("margin", c.margin);
    c.seed = j.value("seed", c.seed);
    if (j.contains("planted_w")) c.planted_w = j.at("planted_w").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw UsageError(std::string("malformed synth config: ") + e.what());
  }
  c.validate();
  return c;
}

}  // namespace pairrank::synth
