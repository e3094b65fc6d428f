#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "decrl/error.hpp"

namespace decrl {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;
using Rng = std::mt19937_64;

// Vectors shorter than this are treated as having no direction.
inline constexpr double kDegenerateNorm = 1e-12;

inline double cosine(const Eigen::Ref<const RowVector>& a, const Eigen::Ref<const RowVector>& b) {
  const double na = a.norm();
  const double nb = b.norm();
  if (na < kDegenerateNorm || nb < kDegenerateNorm) return 0.0;
  return a.dot(b) / (na * nb);
}

// Pairwise cosine similarity between the rows of a and the rows of b, with
// degenerate rows mapped to zero similarity.
inline Matrix cosine_matrix(const Matrix& a, const Matrix& b) {
  require(a.cols() == b.cols(), ErrorKind::shape, "cosine_matrix: column counts differ");
  Matrix out(a.rows(), b.rows());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < b.rows(); ++j) out(i, j) = cosine(a.row(i), b.row(j));
  return out;
}

inline bool has_degenerate_row(const Matrix& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    if (m.row(i).norm() < kDegenerateNorm) return true;
  return false;
}

inline Matrix normalize_rows(const Matrix& m) {
  Matrix out = m;
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    const double n = m.row(i).norm();
    if (n >= kDegenerateNorm) out.row(i) /= n;
  }
  return out;
}

// Parameters are stored at single precision so that checkpoints (float32
// tensors) reproduce the in-memory model exactly.
inline void round_to_float(Matrix& m) {
  for (Eigen::Index k = 0; k < m.size(); ++k)
    m.data()[k] = static_cast<double>(static_cast<float>(m.data()[k]));
}

inline Matrix uniform_matrix(Eigen::Index rows, Eigen::Index cols, double bound, Rng& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  Matrix m(rows, cols);
  for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = dist(rng);
  return m;
}

inline Matrix xavier_uniform(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
  Matrix m = uniform_matrix(rows, cols, bound, rng);
  round_to_float(m);
  return m;
}

inline bool all_finite(const Matrix& m) { return m.allFinite(); }

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  // splitmix64 finalizer
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace decrl
