#pragma once

// Soft overlapping clusters per timestamp (cosine fuzzy c-means), one-to-one
// alignment of consecutive cluster sets, fusion and the temporal smoothness
// penalty.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <vector>

#include "decrl/autodiff.hpp"
#include "decrl/hungarian.hpp"
#include "decrl/linalg.hpp"

namespace decrl {

enum class CentroidInit { kmeans_plus_plus, warm_start };

struct ClusteringConfig {
  int num_clusters = 3;
  double fuzzifier = 2.0;  // m
  int max_iterations = 100;
  double tolerance = 1e-6;
  double fusion_weight = 0.5;  // beta
  CentroidInit init = CentroidInit::kmeans_plus_plus;
  std::uint64_t seed = 0;
};

struct ClusterState {
  Matrix centroids;        // N_c x d, unit rows
  Matrix membership;       // N_e x N_c
  Matrix representations;  // N_c x d, c_j = sum_i u_ij e_i
  int timestamp = 0;
  double objective = 0.0;
  std::vector<double> objective_history;
  int iterations = 0;
  // True when iteration stopped because the next step would have raised J.
  bool stopped_on_increase = false;
};

namespace detail {

inline void validate_clustering(const Matrix& entities, const ClusteringConfig& cfg) {
  require(cfg.num_clusters >= 1, ErrorKind::config, "fuzzy_cmeans: need at least one cluster");
  require(cfg.num_clusters <= entities.rows(), ErrorKind::config, "fuzzy_cmeans: more clusters than entities");
  require(cfg.fuzzifier > 1.0, ErrorKind::config, "fuzzy_cmeans: fuzzifier must exceed 1");
  require(cfg.tolerance > 0.0, ErrorKind::config, "fuzzy_cmeans: tolerance must be positive");
  require(cfg.max_iterations >= 0, ErrorKind::config, "fuzzy_cmeans: negative iteration budget");
}

// u_ij proportional to cos(e_i, mu_j)^(1/(m-1)). Negative cosines are clamped
// to 0; a row with no positive similarity is spread uniformly.
inline Matrix membership_from_cosines(const Matrix& cosines, double fuzzifier) {
  const double p = 1.0 / (fuzzifier - 1.0);
  Matrix u = cosines.unaryExpr([p](double c) { return c > 0 ? std::pow(c, p) : 0.0; });
  for (Eigen::Index i = 0; i < u.rows(); ++i) {
    const double s = u.row(i).sum();
    if (s > 0)
      u.row(i) /= s;
    else
      u.row(i).setConstant(1.0 / static_cast<double>(u.cols()));
  }
  return u;
}

inline double cmeans_objective(const Matrix& membership, const Matrix& cosines, double fuzzifier) {
  return (membership.array().pow(fuzzifier) * (1.0 - cosines.array())).sum();
}

// mu_j = normalize(sum_i u_ij^m e_i / |e_i|): the minimizer of J over unit
// centroids for fixed memberships.
inline Matrix update_centroids(const Matrix& unit_entities, const Matrix& membership, double fuzzifier,
                               const Matrix& previous) {
  Matrix weights = membership.array().pow(fuzzifier).matrix();
  Matrix mu = weights.transpose() * unit_entities;
  for (Eigen::Index j = 0; j < mu.rows(); ++j) {
    const double n = mu.row(j).norm();
    if (n >= kDegenerateNorm)
      mu.row(j) /= n;
    else
      mu.row(j) = previous.row(j);
  }
  return mu;
}

// k-means++ seeding with cosine distance 1 - cos on unit vectors.
inline Matrix kmeans_plus_plus_seeds(const Matrix& unit_entities, int k, Rng& rng) {
  const Eigen::Index n = unit_entities.rows();
  Matrix seeds(k, unit_entities.cols());
  std::uniform_int_distribution<Eigen::Index> first(0, n - 1);
  seeds.row(0) = unit_entities.row(first(rng));
  Vector dist = Vector::Constant(n, std::numeric_limits<double>::infinity());
  for (int c = 1; c < k; ++c) {
    for (Eigen::Index i = 0; i < n; ++i)
      dist(i) = std::min(dist(i), std::max(0.0, 1.0 - unit_entities.row(i).dot(seeds.row(c - 1))));
    std::vector<double> w(dist.data(), dist.data() + n);
    const double total = std::accumulate(w.begin(), w.end(), 0.0);
    Eigen::Index pick = 0;
    if (total > 0) {
      std::discrete_distribution<Eigen::Index> choose(w.begin(), w.end());
      pick = choose(rng);
    } else {
      pick = first(rng);
    }
    seeds.row(c) = unit_entities.row(pick);
  }
  return seeds;
}

}  // namespace detail

// Alternates centroid and membership updates until |dJ| < tolerance or the
// iteration budget runs out. A step that would increase J is rejected and
// iteration stops, so the recorded objective sequence is non-increasing.
inline ClusterState fuzzy_cmeans(const Matrix& entities, const ClusteringConfig& cfg,
                                 const std::optional<Matrix>& initial_centroids = std::nullopt) {
  detail::validate_clustering(entities, cfg);
  require(!has_degenerate_row(entities), ErrorKind::degenerate_input,
          "fuzzy_cmeans: zero-norm entity row (cosine undefined)");
  const Matrix unit = normalize_rows(entities);

  Matrix mu;
  if (cfg.init == CentroidInit::warm_start && initial_centroids) {
    require(initial_centroids->rows() == cfg.num_clusters && initial_centroids->cols() == entities.cols(),
            ErrorKind::shape, "fuzzy_cmeans: warm-start centroid shape mismatch");
    mu = normalize_rows(*initial_centroids);
  } else {
    Rng rng(cfg.seed);
    mu = detail::kmeans_plus_plus_seeds(unit, cfg.num_clusters, rng);
  }

  ClusterState s;
  Matrix cosines = unit * mu.transpose();
  Matrix u = detail::membership_from_cosines(cosines, cfg.fuzzifier);
  double j_value = detail::cmeans_objective(u, cosines, cfg.fuzzifier);
  s.objective_history.push_back(j_value);

  for (int it = 0; it < cfg.max_iterations; ++it) {
    const Matrix mu_next = detail::update_centroids(unit, u, cfg.fuzzifier, mu);
    const Matrix cos_next = unit * mu_next.transpose();
    const Matrix u_next = detail::membership_from_cosines(cos_next, cfg.fuzzifier);
    const double j_next = detail::cmeans_objective(u_next, cos_next, cfg.fuzzifier);
    if (j_next > j_value) {
      s.stopped_on_increase = true;
      break;
    }
    mu = mu_next;
    u = u_next;
    cosines = cos_next;
    const double delta = j_value - j_next;
    j_value = j_next;
    s.objective_history.push_back(j_value);
    ++s.iterations;
    if (delta < cfg.tolerance) break;
  }

  s.centroids = mu;
  // Final pass from the converged centroids; this is the same computation the
  // differentiable path performs.
  s.membership = detail::membership_from_cosines(cosine_matrix(entities, mu), cfg.fuzzifier);
  s.representations = s.membership.transpose() * entities;
  s.objective = j_value;
  return s;
}

namespace ad {

// Differentiable memberships from fixed centroids.
inline Var soft_membership(const Var& entities, const Matrix& centroids, double fuzzifier) {
  Tape& t = *entities.tape();
  Var cosines = cosine_pairwise(entities, t.constant(centroids));
  return normalize_row_sums(pow_positive(cosines, 1.0 / (fuzzifier - 1.0)));
}

// c_j = sum_i u_ij e_i, as an N_c x d matrix.
inline Var cluster_representations(const Var& membership, const Var& entities) {
  return matmul(transpose(membership), entities);
}

inline Var fuse_clusters(const Var& previous, const Var& current, const std::vector<int>& permutation,
                         double beta) {
  Var aligned = gather_rows(current, permutation);
  return add(scale(previous, beta), scale(aligned, 1.0 - beta));
}

inline Var temporal_smoothness_loss(const std::vector<Var>& clusters) {
  require(!clusters.empty(), ErrorKind::shape, "temporal_smoothness_loss: empty sequence");
  Tape& t = *clusters.front().tape();
  Var total = t.constant(Matrix::Zero(1, 1));
  for (std::size_t k = 1; k < clusters.size(); ++k) {
    Var c = cosine_rowwise(clusters[k - 1], clusters[k]);
    total = add(total, affine(sum(c), -1.0, static_cast<double>(c.rows())));
  }
  return total;
}

}  // namespace ad

// a_jk = cos(c_j^{t-1}, c_k^t)
inline Matrix affinity_matrix(const Matrix& previous, const Matrix& current) {
  require(previous.rows() == current.rows() && previous.cols() == current.cols(), ErrorKind::shape,
          "affinity_matrix: cluster matrices must have equal shape");
  require(!has_degenerate_row(previous) && !has_degenerate_row(current), ErrorKind::degenerate_input,
          "affinity_matrix: zero-norm cluster representation");
  return cosine_matrix(previous, current);
}

inline Matrix fuse_clusters(const Matrix& previous, const Matrix& current, const std::vector<int>& permutation,
                            double beta) {
  require(previous.rows() == current.rows() && previous.cols() == current.cols(), ErrorKind::shape,
          "fuse_clusters: shape mismatch");
  require(static_cast<Eigen::Index>(permutation.size()) == current.rows() && is_permutation_of_range(permutation),
          ErrorKind::shape, "fuse_clusters: invalid permutation");
  ad::Tape tape;
  return ad::fuse_clusters(tape.constant(previous), tape.constant(current), permutation, beta).value();
}

inline double temporal_smoothness_loss(const std::vector<Matrix>& clusters) {
  if (clusters.size() < 2) return 0.0;
  for (const auto& c : clusters)
    require(c.rows() == clusters.front().rows() && c.cols() == clusters.front().cols(), ErrorKind::shape,
            "temporal_smoothness_loss: cluster states differ in shape");
  ad::Tape tape;
  std::vector<ad::Var> vars;
  for (const auto& c : clusters) vars.push_back(tape.constant(c));
  return ad::temporal_smoothness_loss(vars).scalar();
}

// Reorders membership columns to follow an alignment permutation.
inline Matrix permute_columns(const Matrix& m, const std::vector<int>& permutation) {
  Matrix out(m.rows(), m.cols());
  for (std::size_t j = 0; j < permutation.size(); ++j)
    out.col(static_cast<Eigen::Index>(j)) = m.col(permutation[j]);
  return out;
}

}  // namespace decrl
