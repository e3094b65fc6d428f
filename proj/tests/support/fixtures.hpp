#pragma once

#include <random>

#include "decrl/decrl.hpp"

namespace fixtures {

inline decrl::Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng, double lo = -1.0,
                                   double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  decrl::Matrix m(rows, cols);
  for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = dist(rng);
  return m;
}

// 12 entities, 3 relations, 3 timestamps, 3 planted clusters.
inline decrl::SyntheticTkg tiny_synthetic() {
  decrl::SyntheticSpec s;
  s.num_entities = 12;
  s.num_relations = 3;
  s.num_timestamps = 3;
  s.num_clusters = 3;
  s.intra_rate = 0.8;
  s.inter_rate = 0.1;
  s.drift_probability = 0.05;
  s.seed = 7;
  return decrl::generate_synthetic_tkg(s);
}

inline decrl::RunConfig tiny_config() {
  decrl::RunConfig c;
  c.dim = 8;
  c.num_clusters = 3;
  c.num_layers = 2;
  c.window = 3;
  c.decoder_channels = 4;
  c.decoder_kernel = 3;
  c.dropout = 0.0;
  c.batch_size = 8;
  c.seed = 3;
  return c;
}

// Tiny model with a global cluster context so every pipeline stage is active.
inline decrl::DecrlModel tiny_model(const decrl::TkgDataset& data, const decrl::RunConfig& cfg = tiny_config()) {
  decrl::DecrlModel model(cfg, data.num_entities(), data.num_relations(), decrl::total_in_degrees(data));
  std::mt19937_64 rng(11);
  model.global = decrl::spectral_global_clusters(decrl::build_global_graph(data), cfg.num_clusters, 5,
                                                 random_matrix(data.num_entities(), cfg.dim, rng));
  return model;
}

// The planted-cluster corpus used by the synthetic recovery and ablation
// checks.
inline decrl::SyntheticTkg synthetic_tkg(std::uint64_t seed = 1) {
  decrl::SyntheticSpec s;
  s.seed = seed;
  return decrl::generate_synthetic_tkg(s);
}

inline decrl::RunConfig synthetic_config(std::uint64_t seed = 1) {
  decrl::RunConfig c;
  c.dim = 32;
  c.num_clusters = 3;
  c.num_layers = 2;
  c.window = 3;
  c.decoder_channels = 8;
  c.fuzzifier = 1.02;
  c.lambda = 0.0;
  c.epochs = 50;
  c.patience = 50;
  c.seed = seed;
  return c;
}

}  // namespace fixtures
