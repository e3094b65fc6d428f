#pragma once

// Message passing over the fully connected cluster graph: latent pairwise
// correlations, their intensities, enhancement by the global (spectral)
// clusters, aggregation, and transfer back to entities.

#include <algorithm>
#include <limits>
#include <numeric>
#include <vector>

#include <Eigen/Eigenvalues>

#include "decrl/autodiff.hpp"
#include "decrl/data_model.hpp"
#include "decrl/hungarian.hpp"
#include "decrl/linalg.hpp"

namespace decrl {

// Two-layer perceptron: out = W2 relu(W1 x + b1) + b2 (row-vector inputs).
struct Mlp {
  Matrix w1;  // hidden x in
  Matrix b1;  // 1 x hidden
  Matrix w2;  // out x hidden
  Matrix b2;  // 1 x out

  static Mlp zeros(int in, int hidden, int out) {
    return {Matrix::Zero(hidden, in), Matrix::Zero(1, hidden), Matrix::Zero(out, hidden), Matrix::Zero(1, out)};
  }
  static Mlp random(int in, int hidden, int out, Rng& rng) {
    return {xavier_uniform(hidden, in, rng), Matrix::Zero(1, hidden), xavier_uniform(out, hidden, rng),
            Matrix::Zero(1, out)};
  }
};

struct CorrelationEncoderParameters {
  Mlp correlation;     // [c_i; c_j] (2d) -> d
  Matrix conv_kernel;  // 1 x 3
  Matrix conv_bias;    // 1 x 1
  Mlp update;          // [v_i; c_i] (2d) -> d
};

// Pair-indexed tensors (S) store pair (i, j) in row i * N_c + j.
inline int pair_row(int i, int j, int num_clusters) { return i * num_clusters + j; }

namespace ad {

struct MlpVars {
  Var w1, b1, w2, b2;
};

inline MlpVars constant_mlp(Tape& t, const Mlp& m) {
  return {t.constant(m.w1), t.constant(m.b1), t.constant(m.w2), t.constant(m.b2)};
}

inline Var mlp(const Var& x, const MlpVars& p) {
  Var hidden = relu(add_rowvec(matmul_nt(x, p.w1), p.b1));
  return add_rowvec(matmul_nt(hidden, p.w2), p.b2);
}

// s_ij = ReLU(phi([c_i; c_j])) for all ordered pairs.
inline Var latent_correlations(const Var& clusters, const MlpVars& phi) {
  const int k = static_cast<int>(clusters.rows());
  std::vector<int> left, right;
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < k; ++j) {
      left.push_back(i);
      right.push_back(j);
    }
  Var pairs = concat_cols({gather_rows(clusters, std::move(left)), gather_rows(clusters, std::move(right))});
  return relu(mlp(pairs, phi));
}

// Width-3, stride-1, zero-padded 1-D convolution over each row of x (rows are
// independent single-channel signals), mean-reduced to one value per row,
// plus bias.
inline Var conv_mean(const Var& x, const Var& kernel, const Var& bias) {
  const Eigen::Index p = x.rows();
  const Eigen::Index d = x.cols();
  require(kernel.rows() == 1 && kernel.cols() == 3 && bias.rows() == 1 && bias.cols() == 1, ErrorKind::shape,
          "conv_mean: kernel must be 1x3 and bias 1x1");
  // im2col: row (r * d + pos) holds x(r, pos-1 .. pos+1).
  std::vector<int> idx(static_cast<std::size_t>(p * d * 3));
  for (Eigen::Index c = 0; c < 3; ++c)
    for (Eigen::Index r = 0; r < p; ++r)
      for (Eigen::Index pos = 0; pos < d; ++pos) {
        const Eigen::Index src = pos + c - 1;
        const Eigen::Index row = r * d + pos;
        idx[static_cast<std::size_t>(row + p * d * c)] = (src < 0 || src >= d) ? -1 : static_cast<int>(r + p * src);
      }
  Var cols = gather(x, p * d, 3, std::move(idx));
  Var conv = matmul_nt(cols, kernel);  // (p*d) x 1
  std::vector<int> back(static_cast<std::size_t>(p * d));
  for (Eigen::Index r = 0; r < p; ++r)
    for (Eigen::Index pos = 0; pos < d; ++pos) back[static_cast<std::size_t>(r + p * pos)] = static_cast<int>(r * d + pos);
  Var reshaped = gather(conv, p, d, std::move(back));
  return add_rowvec(scale(rowsum(reshaped), 1.0 / static_cast<double>(d)), bias);
}

// q_ij = sigmoid(Conv(s_ij)) arranged as an N_c x N_c matrix.
inline Var correlation_intensities(const Var& correlations, const Var& kernel, const Var& bias) {
  const auto pairs = correlations.rows();
  const int k = static_cast<int>(std::lround(std::sqrt(static_cast<double>(pairs))));
  require(static_cast<Eigen::Index>(k) * k == pairs, ErrorKind::shape, "correlation_intensities: not a pair tensor");
  Var q = sigmoid(conv_mean(correlations, kernel, bias));  // (k*k) x 1
  std::vector<int> idx(static_cast<std::size_t>(k * k));
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < k; ++j) idx[static_cast<std::size_t>(i + k * j)] = pair_row(i, j, k);
  return gather(q, k, k, std::move(idx));
}

// v_i = sum_{j != i} q_ij s_ij; c_hat_i = phi_update([v_i; c_i]).
inline Var cluster_message_passing(const Var& correlations, const Var& intensities, const Var& clusters,
                                   const MlpVars& update) {
  const int k = static_cast<int>(clusters.rows());
  require(correlations.rows() == static_cast<Eigen::Index>(k) * k && intensities.rows() == k &&
              intensities.cols() == k && correlations.cols() == clusters.cols(),
          ErrorKind::shape, "cluster_message_passing: shape mismatch");
  std::vector<int> weight_idx(static_cast<std::size_t>(k * k));
  std::vector<int> target(static_cast<std::size_t>(k * k));
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < k; ++j) {
      const int row = pair_row(i, j, k);
      weight_idx[static_cast<std::size_t>(row)] = i == j ? -1 : i + k * j;
      target[static_cast<std::size_t>(row)] = i;
    }
  Var weights = gather(intensities, k * k, 1, std::move(weight_idx));
  Var messages = scatter_add_rows(mul_colvec(correlations, weights), std::move(target), k);
  return mlp(concat_cols({messages, clusters}), update);
}

// Pair tensor whose (i, j) row is c_j: the aggregation input when the
// implicit correlation encoder is switched off.
inline Var neighbor_pairs(const Var& clusters) {
  const int k = static_cast<int>(clusters.rows());
  std::vector<int> right;
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < k; ++j) right.push_back(j);
  return gather_rows(clusters, std::move(right));
}

inline Var propagate_to_entities(const Var& membership, const Var& updated_clusters) {
  require(membership.cols() == updated_clusters.rows(), ErrorKind::shape,
          "propagate_to_entities: membership columns must match cluster count");
  return matmul(membership, updated_clusters);
}

}  // namespace ad

inline RowVector latent_correlation(const RowVector& ci, const RowVector& cj, const Mlp& phi) {
  require(ci.size() == cj.size(), ErrorKind::shape, "latent_correlation: dimension mismatch");
  ad::Tape t;
  Matrix x(1, ci.size() + cj.size());
  x << ci, cj;
  return ad::relu(ad::mlp(t.constant(x), ad::constant_mlp(t, phi))).value();
}

inline double correlation_intensity(const RowVector& s, const Matrix& kernel, const Matrix& bias) {
  ad::Tape t;
  Matrix x = s;
  return ad::sigmoid(ad::conv_mean(t.constant(x), t.constant(kernel), t.constant(bias))).scalar();
}

inline Matrix cluster_message_passing(const Matrix& correlations, const Matrix& intensities,
                                      const Matrix& clusters, const Mlp& update) {
  ad::Tape t;
  return ad::cluster_message_passing(t.constant(correlations), t.constant(intensities), t.constant(clusters),
                                     ad::constant_mlp(t, update))
      .value();
}

inline Matrix propagate_to_entities(const Matrix& membership, const Matrix& updated_clusters) {
  ad::Tape t;
  return ad::propagate_to_entities(t.constant(membership), t.constant(updated_clusters)).value();
}

// ---------------------------------------------------------------------------
// Global clusters

struct SpectralPartition {
  std::vector<int> assignment;  // part of each entity
  Matrix embedding;             // N_e x N_c, row-normalized eigenvector rows
};

struct GlobalClusterContext {
  SpectralPartition partition;
  Matrix centroids;  // N_c x d in the model embedding space

  bool empty() const { return centroids.size() == 0; }
};

namespace detail {

// Lloyd's k-means with k-means++ seeding; best inertia over `restarts`.
inline std::vector<int> kmeans(const Matrix& points, int k, std::uint64_t seed, int restarts = 10,
                               int max_iterations = 300) {
  const Eigen::Index n = points.rows();
  Rng rng(seed);
  std::vector<int> best;
  double best_inertia = std::numeric_limits<double>::infinity();
  for (int run = 0; run < restarts; ++run) {
    Matrix centers(k, points.cols());
    std::uniform_int_distribution<Eigen::Index> first(0, n - 1);
    centers.row(0) = points.row(first(rng));
    Vector dist = Vector::Constant(n, std::numeric_limits<double>::infinity());
    for (int c = 1; c < k; ++c) {
      for (Eigen::Index i = 0; i < n; ++i) dist(i) = std::min(dist(i), (points.row(i) - centers.row(c - 1)).squaredNorm());
      const double total = dist.sum();
      Eigen::Index pick = first(rng);
      if (total > 0) {
        std::discrete_distribution<Eigen::Index> choose(dist.data(), dist.data() + n);
        pick = choose(rng);
      }
      centers.row(c) = points.row(pick);
    }
    std::vector<int> assign(static_cast<std::size_t>(n), -1);
    double inertia = 0;
    for (int it = 0; it < max_iterations; ++it) {
      bool changed = false;
      inertia = 0;
      for (Eigen::Index i = 0; i < n; ++i) {
        int arg = 0;
        double bd = std::numeric_limits<double>::infinity();
        for (int c = 0; c < k; ++c) {
          const double dd = (points.row(i) - centers.row(c)).squaredNorm();
          if (dd < bd) {
            bd = dd;
            arg = c;
          }
        }
        inertia += bd;
        if (assign[static_cast<std::size_t>(i)] != arg) {
          assign[static_cast<std::size_t>(i)] = arg;
          changed = true;
        }
      }
      if (!changed) break;
      Matrix sums = Matrix::Zero(k, points.cols());
      std::vector<int> counts(static_cast<std::size_t>(k), 0);
      for (Eigen::Index i = 0; i < n; ++i) {
        sums.row(assign[static_cast<std::size_t>(i)]) += points.row(i);
        ++counts[static_cast<std::size_t>(assign[static_cast<std::size_t>(i)])];
      }
      for (int c = 0; c < k; ++c)
        if (counts[static_cast<std::size_t>(c)] > 0) centers.row(c) = sums.row(c) / counts[static_cast<std::size_t>(c)];
    }
    if (inertia < best_inertia - 1e-12) {
      best_inertia = inertia;
      best = assign;
    }
  }
  return best;
}

}  // namespace detail

// Normalized-Laplacian spectral embedding (bottom N_c eigenvectors, rows
// normalized) followed by seeded k-means.
inline SpectralPartition spectral_partition(const GlobalGraph& graph, int num_clusters, std::uint64_t seed) {
  const int n = graph.num_entities();
  require(num_clusters >= 1 && num_clusters <= n, ErrorKind::config,
          "spectral clustering: cluster count must lie in [1, number of entities]");
  Matrix w = graph.weights.cast<double>();
  Vector inv_sqrt_deg(n);
  for (int i = 0; i < n; ++i) {
    const double deg = w.row(i).sum();
    inv_sqrt_deg(i) = deg > 0 ? 1.0 / std::sqrt(deg) : 0.0;
  }
  Matrix laplacian = -(inv_sqrt_deg.asDiagonal() * w * inv_sqrt_deg.asDiagonal());
  laplacian.diagonal().array() += 1.0;
  Eigen::SelfAdjointEigenSolver<Matrix> eig(laplacian);
  require(eig.info() == Eigen::Success, ErrorKind::degenerate_input, "spectral clustering: eigensolver failed");
  SpectralPartition out;
  out.embedding = eig.eigenvectors().leftCols(num_clusters);
  out.embedding = normalize_rows(out.embedding);
  out.assignment = detail::kmeans(out.embedding, num_clusters, seed);
  return out;
}

// Mean embedding of each part's members; empty parts stay zero.
inline Matrix part_centroids(const std::vector<int>& assignment, int num_parts, const Matrix& entity_embeddings) {
  require(static_cast<Eigen::Index>(assignment.size()) == entity_embeddings.rows(), ErrorKind::shape,
          "part_centroids: assignment size mismatch");
  Matrix c = Matrix::Zero(num_parts, entity_embeddings.cols());
  std::vector<int> counts(static_cast<std::size_t>(num_parts), 0);
  for (std::size_t i = 0; i < assignment.size(); ++i) {
    c.row(assignment[i]) += entity_embeddings.row(static_cast<Eigen::Index>(i));
    ++counts[static_cast<std::size_t>(assignment[i])];
  }
  for (int j = 0; j < num_parts; ++j)
    if (counts[static_cast<std::size_t>(j)] > 0) c.row(j) /= counts[static_cast<std::size_t>(j)];
  return c;
}

inline GlobalClusterContext spectral_global_clusters(const GlobalGraph& graph, int num_clusters, std::uint64_t seed,
                                                     const Matrix& entity_embeddings) {
  GlobalClusterContext ctx;
  ctx.partition = spectral_partition(graph, num_clusters, seed);
  ctx.centroids = part_centroids(ctx.partition.assignment, num_clusters, entity_embeddings);
  return ctx;
}

// pi^t: model cluster i -> global cluster pi(i), maximizing total cosine.
inline std::vector<int> match_to_global(const Matrix& clusters, const Matrix& global_centroids) {
  require(clusters.rows() == global_centroids.rows() && clusters.cols() == global_centroids.cols(),
          ErrorKind::shape, "match_to_global: shape mismatch");
  return hungarian_match(cosine_matrix(clusters, global_centroids)).permutation;
}

// m_ij = cos(c^global_{pi(i)}, c^global_{pi(j)})
inline Matrix global_similarity(const std::vector<int>& matching, const Matrix& global_centroids) {
  const int k = static_cast<int>(matching.size());
  Matrix m(k, k);
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < k; ++j)
      m(i, j) = cosine(global_centroids.row(matching[static_cast<std::size_t>(i)]),
                       global_centroids.row(matching[static_cast<std::size_t>(j)]));
  return m;
}

inline Matrix enhance_intensity(const Matrix& intensities, const std::vector<int>& matching,
                                const Matrix& global_centroids) {
  require(intensities.rows() == static_cast<Eigen::Index>(matching.size()) && intensities.cols() == intensities.rows() &&
              is_permutation_of_range(matching),
          ErrorKind::shape, "enhance_intensity: invalid matching");
  return intensities.cwiseProduct(global_similarity(matching, global_centroids));
}

}  // namespace decrl
