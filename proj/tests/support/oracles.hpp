#pragma once

// Reference computations written straight from the model definitions with
// explicit loops. They share no code with the library beyond the data types,
// so agreement is evidence that the vectorized/tape implementations are right.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>
#include <vector>

#include "decrl/data_model.hpp"

namespace oracle {

using decrl::Matrix;
using decrl::Quadruple;

inline double dot(const Matrix& a, Eigen::Index ra, const Matrix& b, Eigen::Index rb) {
  double s = 0;
  for (Eigen::Index k = 0; k < a.cols(); ++k) s += a(ra, k) * b(rb, k);
  return s;
}

inline double cosine(const Matrix& a, Eigen::Index ra, const Matrix& b, Eigen::Index rb) {
  const double na = std::sqrt(dot(a, ra, a, ra));
  const double nb = std::sqrt(dot(b, rb, b, rb));
  if (na < 1e-12 || nb < 1e-12) return 0.0;
  return dot(a, ra, b, rb) / (na * nb);
}

inline Matrix matmul(const Matrix& a, const Matrix& b) {
  Matrix out = Matrix::Zero(a.rows(), b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < b.cols(); ++j)
      for (Eigen::Index k = 0; k < a.cols(); ++k) out(i, j) += a(i, k) * b(k, j);
  return out;
}

// W x for a row vector x (returns a row vector).
inline std::vector<double> matvec(const Matrix& w, const std::vector<double>& x) {
  std::vector<double> y(static_cast<std::size_t>(w.rows()), 0.0);
  for (Eigen::Index i = 0; i < w.rows(); ++i)
    for (Eigen::Index k = 0; k < w.cols(); ++k) y[static_cast<std::size_t>(i)] += w(i, k) * x[static_cast<std::size_t>(k)];
  return y;
}

inline std::vector<double> row(const Matrix& m, Eigen::Index r) {
  std::vector<double> v(static_cast<std::size_t>(m.cols()));
  for (Eigen::Index k = 0; k < m.cols(); ++k) v[static_cast<std::size_t>(k)] = m(r, k);
  return v;
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// ---------------------------------------------------------------------------
// Data model

inline std::vector<int> in_degree_tally(const std::vector<Quadruple>& events, int num_entities) {
  std::vector<int> d(static_cast<std::size_t>(num_entities), 0);
  for (const auto& q : events) d[static_cast<std::size_t>(q.object)] += 1;
  return d;
}

// Independent spectral clustering: unnormalized adjacency -> symmetric
// normalized Laplacian -> bottom-k eigenvectors -> farthest-point seeded Lloyd.
inline std::vector<int> spectral_partition(const Matrix& adjacency, int k) {
  const Eigen::Index n = adjacency.rows();
  Matrix lap = Matrix::Identity(n, n);
  std::vector<double> deg(static_cast<std::size_t>(n), 0.0);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) deg[static_cast<std::size_t>(i)] += adjacency(i, j);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) {
      const double di = deg[static_cast<std::size_t>(i)], dj = deg[static_cast<std::size_t>(j)];
      if (di > 0 && dj > 0) lap(i, j) -= adjacency(i, j) / std::sqrt(di * dj);
    }
  Eigen::SelfAdjointEigenSolver<Matrix> eig(lap);
  Matrix x = eig.eigenvectors().leftCols(k);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double nr = x.row(i).norm();
    if (nr > 0) x.row(i) /= nr;
  }
  std::vector<Eigen::Index> seeds{0};
  while (static_cast<int>(seeds.size()) < k) {
    Eigen::Index far = 0;
    double best = -1;
    for (Eigen::Index i = 0; i < n; ++i) {
      double m = std::numeric_limits<double>::infinity();
      for (auto s : seeds) m = std::min(m, (x.row(i) - x.row(s)).squaredNorm());
      if (m > best) {
        best = m;
        far = i;
      }
    }
    seeds.push_back(far);
  }
  Matrix centers(k, x.cols());
  for (int c = 0; c < k; ++c) centers.row(c) = x.row(seeds[static_cast<std::size_t>(c)]);
  std::vector<int> assign(static_cast<std::size_t>(n), 0);
  for (int it = 0; it < 100; ++it) {
    for (Eigen::Index i = 0; i < n; ++i) {
      int arg = 0;
      for (int c = 1; c < k; ++c)
        if ((x.row(i) - centers.row(c)).squaredNorm() < (x.row(i) - centers.row(arg)).squaredNorm()) arg = c;
      assign[static_cast<std::size_t>(i)] = arg;
    }
    Matrix sums = Matrix::Zero(k, x.cols());
    std::vector<int> counts(static_cast<std::size_t>(k), 0);
    for (Eigen::Index i = 0; i < n; ++i) {
      sums.row(assign[static_cast<std::size_t>(i)]) += x.row(i);
      counts[static_cast<std::size_t>(assign[static_cast<std::size_t>(i)])] += 1;
    }
    for (int c = 0; c < k; ++c)
      if (counts[static_cast<std::size_t>(c)] > 0) centers.row(c) = sums.row(c) / counts[static_cast<std::size_t>(c)];
  }
  return assign;
}

// Best agreement between two labelings over all relabelings of `b`
// (fraction of items; brute force over k! permutations).
inline double partition_agreement(const std::vector<int>& a, const std::vector<int>& b, int k) {
  std::vector<int> perm(static_cast<std::size_t>(k));
  std::iota(perm.begin(), perm.end(), 0);
  std::size_t best = 0;
  do {
    std::size_t agree = 0;
    for (std::size_t i = 0; i < a.size(); ++i) agree += a[i] == perm[static_cast<std::size_t>(b[i])];
    best = std::max(best, agree);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return static_cast<double>(best) / static_cast<double>(a.size());
}

// ---------------------------------------------------------------------------
// Relational encoder

inline double leaky(double x, double slope) { return x >= 0 ? x : slope * x; }

// Edge-by-edge evaluation of the relation-aware graph convolution.
inline Matrix rgcn_layer(const std::vector<Quadruple>& edges, const Matrix& e, const Matrix& r, const Matrix& w1,
                         const Matrix& w2, double slope) {
  const Eigen::Index n = e.rows(), d = e.cols();
  Matrix out(n, d);
  for (Eigen::Index o = 0; o < n; ++o) {
    std::vector<double> acc(static_cast<std::size_t>(d), 0.0);
    int count = 0;
    for (const auto& q : edges) {
      if (q.object != o) continue;
      ++count;
      std::vector<double> msg(static_cast<std::size_t>(d));
      for (Eigen::Index k = 0; k < d; ++k) msg[static_cast<std::size_t>(k)] = e(q.subject, k) + r(q.relation, k);
      const auto wm = matvec(w1, msg);
      for (Eigen::Index k = 0; k < d; ++k) acc[static_cast<std::size_t>(k)] += wm[static_cast<std::size_t>(k)];
    }
    const auto self = matvec(w2, row(e, o));
    for (Eigen::Index k = 0; k < d; ++k) {
      const double neighbor = count > 0 ? acc[static_cast<std::size_t>(k)] / count : 0.0;
      out(o, k) = leaky(neighbor + self[static_cast<std::size_t>(k)], slope);
    }
  }
  return out;
}

inline Matrix relation_update(const std::vector<Quadruple>& edges, const Matrix& e, const Matrix& prev) {
  Matrix out = prev;
  for (Eigen::Index r = 0; r < prev.rows(); ++r) {
    std::set<int> related;
    for (const auto& q : edges)
      if (q.relation == r) {
        related.insert(q.subject);
        related.insert(q.object);
      }
    for (Eigen::Index k = 0; k < prev.cols(); ++k) {
      double s = prev(r, k);
      for (int i : related) s += e(i, k);
      out(r, k) = s / static_cast<double>(related.size() + 1);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Evolutionary clustering

// u_ij = cos_ij^(1/(m-1)) / sum_k cos_ik^(1/(m-1)), negative cosines as 0.
inline Matrix membership(const Matrix& e, const Matrix& centroids, double m) {
  Matrix u(e.rows(), centroids.rows());
  for (Eigen::Index i = 0; i < e.rows(); ++i) {
    double s = 0;
    for (Eigen::Index j = 0; j < centroids.rows(); ++j) {
      const double c = cosine(e, i, centroids, j);
      u(i, j) = c > 0 ? std::pow(c, 1.0 / (m - 1.0)) : 0.0;
      s += u(i, j);
    }
    for (Eigen::Index j = 0; j < centroids.rows(); ++j) u(i, j) = s > 0 ? u(i, j) / s : 1.0 / centroids.rows();
  }
  return u;
}

inline Matrix cosine_matrix(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows(), b.rows());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < b.rows(); ++j) out(i, j) = cosine(a, i, b, j);
  return out;
}

struct Assignment {
  std::vector<int> permutation;
  double total = -std::numeric_limits<double>::infinity();
};

// Exhaustive maximum over all permutations; the first maximizer in
// lexicographic order wins ties.
inline Assignment best_assignment(const Matrix& a) {
  const int n = static_cast<int>(a.rows());
  std::vector<int> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);
  Assignment best;
  do {
    double total = 0;
    for (int j = 0; j < n; ++j) total += a(j, perm[static_cast<std::size_t>(j)]);
    if (total > best.total) {
      best.total = total;
      best.permutation = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

inline double smoothness_loss(const std::vector<Matrix>& seq) {
  double total = 0;
  for (std::size_t t = 1; t < seq.size(); ++t)
    for (Eigen::Index j = 0; j < seq[t].rows(); ++j) total += 1.0 - cosine(seq[t - 1], j, seq[t], j);
  return total;
}

// ---------------------------------------------------------------------------
// Cluster graph

struct Perceptron {
  Matrix w1, b1, w2, b2;
};

inline std::vector<double> perceptron(const std::vector<double>& x, const Perceptron& p) {
  auto h = matvec(p.w1, x);
  for (std::size_t k = 0; k < h.size(); ++k) h[k] = std::max(0.0, h[k] + p.b1(0, static_cast<Eigen::Index>(k)));
  auto y = matvec(p.w2, h);
  for (std::size_t k = 0; k < y.size(); ++k) y[k] += p.b2(0, static_cast<Eigen::Index>(k));
  return y;
}

inline std::vector<double> concat(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<double> out = a;
  out.insert(out.end(), b.begin(), b.end());
  return out;
}

inline std::vector<double> latent_correlation(const std::vector<double>& ci, const std::vector<double>& cj,
                                              const Perceptron& phi) {
  auto s = perceptron(concat(ci, cj), phi);
  for (double& v : s) v = std::max(0.0, v);
  return s;
}

// sigmoid(mean over positions of a width-3 zero-padded convolution + bias)
inline double correlation_intensity(const std::vector<double>& s, const Matrix& kernel, double bias) {
  const int d = static_cast<int>(s.size());
  double total = 0;
  for (int pos = 0; pos < d; ++pos)
    for (int tap = 0; tap < 3; ++tap) {
      const int src = pos + tap - 1;
      if (src >= 0 && src < d) total += kernel(0, tap) * s[static_cast<std::size_t>(src)];
    }
  return sigmoid(total / d + bias);
}

// c_hat_i = phi_update([sum_{j != i} q_ij s_ij ; c_i]); s[i][j] is a d-vector.
inline Matrix message_passing(const std::vector<std::vector<std::vector<double>>>& s, const Matrix& q,
                              const Matrix& c, const Perceptron& update) {
  const Eigen::Index k = c.rows(), d = c.cols();
  Matrix out(k, update.w2.rows());
  for (Eigen::Index i = 0; i < k; ++i) {
    std::vector<double> v(static_cast<std::size_t>(d), 0.0);
    for (Eigen::Index j = 0; j < k; ++j) {
      if (j == i) continue;
      for (Eigen::Index x = 0; x < d; ++x)
        v[static_cast<std::size_t>(x)] += q(i, j) * s[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)][static_cast<std::size_t>(x)];
    }
    const auto y = perceptron(concat(v, row(c, i)), update);
    for (std::size_t x = 0; x < y.size(); ++x) out(i, static_cast<Eigen::Index>(x)) = y[x];
  }
  return out;
}

inline Matrix enhance(const Matrix& q, const std::vector<int>& matching, const Matrix& global) {
  Matrix out(q.rows(), q.cols());
  for (Eigen::Index i = 0; i < q.rows(); ++i)
    for (Eigen::Index j = 0; j < q.cols(); ++j)
      out(i, j) = q(i, j) * cosine(global, matching[static_cast<std::size_t>(i)], global, matching[static_cast<std::size_t>(j)]);
  return out;
}

// ---------------------------------------------------------------------------
// Temporal encoding

inline Matrix gate(const Matrix& updated, const Matrix& prev, const Matrix& w, const Matrix& b) {
  Matrix out(updated.rows(), updated.cols());
  for (Eigen::Index i = 0; i < updated.rows(); ++i) {
    const auto pre = matvec(w, row(prev, i));
    for (Eigen::Index k = 0; k < updated.cols(); ++k) {
      const double x = sigmoid(pre[static_cast<std::size_t>(k)] + b(0, k));
      out(i, k) = x * updated(i, k) + (1.0 - x) * prev(i, k);
    }
  }
  return out;
}

inline std::vector<double> position_code(double tau, const Matrix& omega) {
  const auto d = omega.cols();
  std::vector<double> phi(static_cast<std::size_t>(d));
  for (Eigen::Index k = 0; k < d; ++k) phi[static_cast<std::size_t>(k)] = std::sqrt(1.0 / d) * std::cos(omega(0, k) * tau);
  return phi;
}

// Rows of z are positions; returns h_bar for each query row. `dim` is the
// pre-enhancement representation size used in the 1/sqrt(d) scale.
inline Matrix attention(const Matrix& z, const Matrix& wq, const Matrix& wk, double dim, Matrix* weights = nullptr) {
  const Eigen::Index n = z.rows();
  std::vector<std::vector<double>> q, k;
  for (Eigen::Index i = 0; i < n; ++i) {
    q.push_back(matvec(wq, row(z, i)));
    k.push_back(matvec(wk, row(z, i)));
  }
  Matrix alpha(n, n);
  for (Eigen::Index m = 0; m < n; ++m) {
    std::vector<double> logits(static_cast<std::size_t>(n));
    for (Eigen::Index j = 0; j < n; ++j) {
      double s = 0;
      for (std::size_t x = 0; x < q[0].size(); ++x) s += q[static_cast<std::size_t>(m)][x] * k[static_cast<std::size_t>(j)][x];
      logits[static_cast<std::size_t>(j)] = s / std::sqrt(dim);
    }
    double denom = 0;
    for (double l : logits) denom += std::exp(l);
    for (Eigen::Index j = 0; j < n; ++j) alpha(m, j) = std::exp(logits[static_cast<std::size_t>(j)]) / denom;
  }
  if (weights) *weights = alpha;
  Matrix out = Matrix::Zero(n, z.cols());
  for (Eigen::Index m = 0; m < n; ++m)
    for (Eigen::Index j = 0; j < n; ++j)
      for (Eigen::Index x = 0; x < z.cols(); ++x) out(m, x) += alpha(m, j) * z(j, x);
  return out;
}

// ---------------------------------------------------------------------------
// Decoder and metrics

struct ConvTransE {
  Matrix kernel;     // channels x (2 K): column = input_row * K + tap
  Matrix conv_bias;  // 1 x channels
  Matrix fc;         // d x (channels d): column = channel * d + position
  Matrix fc_bias;    // 1 x d
};

// Logits of every relation for one (s, o) pair.
inline std::vector<double> convtranse_logits(const std::vector<double>& s, const std::vector<double>& o,
                                             const Matrix& relations, const ConvTransE& p) {
  const int d = static_cast<int>(s.size());
  const int channels = static_cast<int>(p.kernel.rows());
  const int K = static_cast<int>(p.kernel.cols() / 2);
  const std::vector<double>* input[2] = {&s, &o};
  std::vector<double> features(static_cast<std::size_t>(channels * d));
  for (int ch = 0; ch < channels; ++ch)
    for (int pos = 0; pos < d; ++pos) {
      double acc = p.conv_bias(0, ch);
      for (int in = 0; in < 2; ++in)
        for (int tap = 0; tap < K; ++tap) {
          const int src = pos + tap - K / 2;
          if (src >= 0 && src < d) acc += p.kernel(ch, in * K + tap) * (*input[in])[static_cast<std::size_t>(src)];
        }
      features[static_cast<std::size_t>(ch * d + pos)] = std::max(0.0, acc);
    }
  auto hidden = matvec(p.fc, features);
  for (int k = 0; k < d; ++k) hidden[static_cast<std::size_t>(k)] = std::max(0.0, hidden[static_cast<std::size_t>(k)] + p.fc_bias(0, k));
  std::vector<double> logits(static_cast<std::size_t>(relations.rows()));
  for (Eigen::Index r = 0; r < relations.rows(); ++r) {
    double v = 0;
    for (int k = 0; k < d; ++k) v += relations(r, k) * hidden[static_cast<std::size_t>(k)];
    logits[static_cast<std::size_t>(r)] = v;
  }
  return logits;
}

inline double cross_entropy(const Matrix& p, const Matrix& y) {
  double total = 0;
  for (Eigen::Index i = 0; i < p.rows(); ++i)
    for (Eigen::Index j = 0; j < p.cols(); ++j) {
      const double q = std::min(std::max(p(i, j), 1e-7), 1.0 - 1e-7);
      total -= y(i, j) * std::log(q) + (1.0 - y(i, j)) * std::log(1.0 - q);
    }
  return total / static_cast<double>(p.rows());
}

// Rank by sorting: descending score, the truth placed after every competitor
// with an equal score; excluded relations are removed first.
inline int sorted_rank(const std::vector<double>& scores, int truth, const std::vector<int>& excluded) {
  std::vector<int> ids;
  for (int j = 0; j < static_cast<int>(scores.size()); ++j)
    if (j == truth || std::find(excluded.begin(), excluded.end(), j) == excluded.end()) ids.push_back(j);
  std::sort(ids.begin(), ids.end(), [&](int a, int b) {
    if (scores[static_cast<std::size_t>(a)] != scores[static_cast<std::size_t>(b)])
      return scores[static_cast<std::size_t>(a)] > scores[static_cast<std::size_t>(b)];
    if ((a == truth) != (b == truth)) return b == truth;
    return a < b;
  });
  return static_cast<int>(std::find(ids.begin(), ids.end(), truth) - ids.begin()) + 1;
}

struct Metrics {
  double mrr = 0, hits1 = 0, hits3 = 0, hits10 = 0;
};

inline Metrics metrics_from_ranks(const std::vector<int>& ranks) {
  Metrics m;
  for (int r : ranks) {
    m.mrr += 1.0 / r;
    m.hits1 += r <= 1;
    m.hits3 += r <= 3;
    m.hits10 += r <= 10;
  }
  const double n = static_cast<double>(ranks.size());
  m.mrr /= n;
  m.hits1 /= n;
  m.hits3 /= n;
  m.hits10 /= n;
  return m;
}

// Expected reciprocal rank of the truth among n uniformly shuffled relations.
inline double analytic_random_mrr(int n) {
  double s = 0;
  for (int k = 1; k <= n; ++k) s += 1.0 / k;
  return s / n;
}

}  // namespace oracle
