#pragma once

// Matrix-level reverse-mode automatic differentiation.
//
// A Tape records every operation applied to Var handles. Calling backward()
// on a 1x1 result walks the record in reverse and accumulates gradients into
// the inputs; leaves created from a Parameter add their gradient into
// Parameter::grad. Values are double precision, row vectors are the
// convention for embeddings (an N x d matrix holds N embeddings).

#include <deque>
#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "decrl/error.hpp"
#include "decrl/linalg.hpp"

namespace decrl::ad {

struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

// Named parameters with stable addresses, iterated in insertion order.
class ParameterStore {
 public:
  Parameter& add(const std::string& name, Matrix init) {
    require(!index_.count(name), ErrorKind::config, "duplicate parameter " + name);
    index_[name] = params_.size();
    auto p = std::make_unique<Parameter>();
    p->name = name;
    p->value = std::move(init);
    p->zero_grad();
    params_.push_back(std::move(p));
    return *params_.back();
  }

  Parameter& at(const std::string& name) {
    auto it = index_.find(name);
    require(it != index_.end(), ErrorKind::config, "unknown parameter " + name);
    return *params_[it->second];
  }
  const Parameter& at(const std::string& name) const {
    auto it = index_.find(name);
    require(it != index_.end(), ErrorKind::config, "unknown parameter " + name);
    return *params_[it->second];
  }
  bool contains(const std::string& name) const { return index_.count(name) > 0; }

  void zero_grad() {
    for (auto& p : params_) p->zero_grad();
  }

  std::size_t size() const { return params_.size(); }
  Parameter& operator[](std::size_t i) { return *params_[i]; }
  const Parameter& operator[](std::size_t i) const { return *params_[i]; }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += static_cast<std::size_t>(p->value.size());
    return n;
  }

 private:
  std::vector<std::unique_ptr<Parameter>> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

class Tape;

class Var {
 public:
  Var() = default;

  const Matrix& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  double scalar() const { return value()(0, 0); }
  Tape* tape() const { return tape_; }
  int id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}
  Tape* tape_ = nullptr;
  int id_ = -1;
};

class Tape {
 public:
  using Backward = std::function<void(Tape&, const Matrix& grad)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value) { return push(std::move(value), false, nullptr); }

  // A free leaf whose gradient can be read back with grad().
  Var variable(Matrix value) { return push(std::move(value), true, nullptr); }

  Var param(Parameter& p) {
    Var v = push(p.value, true, nullptr);
    nodes_[v.id_].param = &p;
    return v;
  }

  Var push(Matrix value, bool needs_grad, Backward backward) {
    Node node;
    node.value = std::move(value);
    node.needs_grad = needs_grad;
    node.backward = std::move(backward);
    nodes_.push_back(std::move(node));
    return Var(this, static_cast<int>(nodes_.size()) - 1);
  }

  bool needs_grad(const Var& v) const { return nodes_[v.id_].needs_grad; }
  bool any_needs_grad(std::initializer_list<Var> vars) const {
    for (const auto& v : vars)
      if (nodes_[v.id_].needs_grad) return true;
    return false;
  }

  const Matrix& value(int id) const { return nodes_[id].value; }
  const Matrix& value(const Var& v) const { return nodes_[v.id_].value; }

  template <class Derived>
  void accumulate(const Var& v, const Eigen::MatrixBase<Derived>& g) {
    Node& n = nodes_[v.id_];
    if (!n.needs_grad) return;
    if (n.grad.size() == 0)
      n.grad = g;
    else
      n.grad += g;
  }

  const Matrix& grad(const Var& v) {
    Node& n = nodes_[v.id_];
    if (n.grad.size() == 0) n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
    return n.grad;
  }

  void backward(const Var& root) {
    require(root.rows() == 1 && root.cols() == 1, ErrorKind::shape, "backward: root must be 1x1");
    if (!nodes_[root.id_].needs_grad) return;
    nodes_[root.id_].grad = Matrix::Ones(1, 1);
    for (int id = root.id_; id >= 0; --id) {
      Node& n = nodes_[id];
      if (n.grad.size() == 0) continue;
      if (n.backward) {
        // Copy: the callback may accumulate into other nodes and must not see
        // a reference into storage that it could alias.
        const Matrix g = n.grad;
        n.backward(*this, g);
      }
      if (n.param) n.param->grad += n.grad;
    }
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool needs_grad = false;
    Backward backward;
    Parameter* param = nullptr;
  };
  // deque keeps element addresses stable while new nodes are pushed.
  std::deque<Node> nodes_;
};

inline const Matrix& Var::value() const { return tape_->value(*this); }

namespace detail {

inline void same_shape(const Var& a, const Var& b, const char* op) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), ErrorKind::shape,
          std::string(op) + ": shape mismatch");
}

inline Tape& tape_of(const Var& a) { return *a.tape(); }

}  // namespace detail

inline Var matmul(const Var& a, const Var& b) {
  require(a.cols() == b.rows(), ErrorKind::shape, "matmul: inner dimensions differ");
  Tape& t = detail::tape_of(a);
  const bool ng = t.any_needs_grad({a, b});
  return t.push(a.value() * b.value(), ng, [a, b](Tape& t, const Matrix& g) {
    if (t.needs_grad(a)) t.accumulate(a, g * b.value().transpose());
    if (t.needs_grad(b)) t.accumulate(b, a.value().transpose() * g);
  });
}

// a * b^T, avoiding an explicit transpose node for weight matrices.
inline Var matmul_nt(const Var& a, const Var& b) {
  require(a.cols() == b.cols(), ErrorKind::shape, "matmul_nt: inner dimensions differ");
  Tape& t = detail::tape_of(a);
  const bool ng = t.any_needs_grad({a, b});
  return t.push(a.value() * b.value().transpose(), ng, [a, b](Tape& t, const Matrix& g) {
    if (t.needs_grad(a)) t.accumulate(a, g * b.value());
    if (t.needs_grad(b)) t.accumulate(b, g.transpose() * a.value());
  });
}

inline Var transpose(const Var& a) {
  Tape& t = detail::tape_of(a);
  return t.push(a.value().transpose(), t.needs_grad(a),
                [a](Tape& t, const Matrix& g) { t.accumulate(a, g.transpose()); });
}

inline Var add(const Var& a, const Var& b) {
  detail::same_shape(a, b, "add");
  Tape& t = detail::tape_of(a);
  return t.push(a.value() + b.value(), t.any_needs_grad({a, b}), [a, b](Tape& t, const Matrix& g) {
    t.accumulate(a, g);
    t.accumulate(b, g);
  });
}

inline Var sub(const Var& a, const Var& b) {
  detail::same_shape(a, b, "sub");
  Tape& t = detail::tape_of(a);
  return t.push(a.value() - b.value(), t.any_needs_grad({a, b}), [a, b](Tape& t, const Matrix& g) {
    t.accumulate(a, g);
    t.accumulate(b, -g);
  });
}

inline Var mul(const Var& a, const Var& b) {
  detail::same_shape(a, b, "mul");
  Tape& t = detail::tape_of(a);
  return t.push(a.value().cwiseProduct(b.value()), t.any_needs_grad({a, b}),
                [a, b](Tape& t, const Matrix& g) {
                  if (t.needs_grad(a)) t.accumulate(a, g.cwiseProduct(b.value()));
                  if (t.needs_grad(b)) t.accumulate(b, g.cwiseProduct(a.value()));
                });
}

// alpha * a + beta
inline Var affine(const Var& a, double alpha, double beta = 0.0) {
  Tape& t = detail::tape_of(a);
  Matrix out = (alpha * a.value()).array() + beta;
  return t.push(std::move(out), t.needs_grad(a),
                [a, alpha](Tape& t, const Matrix& g) { t.accumulate(a, alpha * g); });
}

inline Var scale(const Var& a, double alpha) { return affine(a, alpha, 0.0); }

// a (N x C) + b (1 x C) broadcast over rows.
inline Var add_rowvec(const Var& a, const Var& b) {
  require(b.rows() == 1 && b.cols() == a.cols(), ErrorKind::shape, "add_rowvec: shape mismatch");
  Tape& t = detail::tape_of(a);
  Matrix out = a.value().rowwise() + b.value().row(0);
  return t.push(std::move(out), t.any_needs_grad({a, b}), [a, b](Tape& t, const Matrix& g) {
    t.accumulate(a, g);
    if (t.needs_grad(b)) t.accumulate(b, g.colwise().sum());
  });
}

// a (N x C) scaled row-wise by v (N x 1).
inline Var mul_colvec(const Var& a, const Var& v) {
  require(v.cols() == 1 && v.rows() == a.rows(), ErrorKind::shape, "mul_colvec: shape mismatch");
  Tape& t = detail::tape_of(a);
  Matrix out = a.value().array().colwise() * v.value().col(0).array();
  return t.push(std::move(out), t.any_needs_grad({a, v}), [a, v](Tape& t, const Matrix& g) {
    if (t.needs_grad(a)) {
      Matrix ga = g.array().colwise() * v.value().col(0).array();
      t.accumulate(a, ga);
    }
    if (t.needs_grad(v)) {
      Matrix gv = g.cwiseProduct(a.value()).rowwise().sum();
      t.accumulate(v, gv);
    }
  });
}

inline Var sigmoid(const Var& a) {
  Tape& t = detail::tape_of(a);
  Matrix y = a.value().unaryExpr([](double x) {
    return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
  });
  Matrix dy = y.array() * (1.0 - y.array());
  return t.push(std::move(y), t.needs_grad(a), [a, dy = std::move(dy)](Tape& t, const Matrix& g) {
    t.accumulate(a, g.cwiseProduct(dy));
  });
}

inline Var relu(const Var& a) {
  Tape& t = detail::tape_of(a);
  Matrix y = a.value().cwiseMax(0.0);
  return t.push(std::move(y), t.needs_grad(a), [a](Tape& t, const Matrix& g) {
    Matrix ga = (a.value().array() > 0.0).select(g, 0.0);
    t.accumulate(a, ga);
  });
}

// max(x, 0) + slope * min(x, 0) with a single fixed slope.
inline Var leaky_relu(const Var& a, double slope) {
  Tape& t = detail::tape_of(a);
  Matrix y = a.value().unaryExpr([slope](double x) { return x >= 0 ? x : slope * x; });
  return t.push(std::move(y), t.needs_grad(a), [a, slope](Tape& t, const Matrix& g) {
    Matrix ga = (a.value().array() >= 0.0).select(g, slope * g);
    t.accumulate(a, ga);
  });
}

// Leaky ReLU with one slope per element (randomized-slope training mode).
inline Var leaky_relu(const Var& a, const Matrix& slopes) {
  require(slopes.rows() == a.rows() && slopes.cols() == a.cols(), ErrorKind::shape,
          "leaky_relu: slope shape mismatch");
  Tape& t = detail::tape_of(a);
  Matrix y = (a.value().array() >= 0.0).select(a.value(), slopes.cwiseProduct(a.value()));
  return t.push(std::move(y), t.needs_grad(a), [a, slopes](Tape& t, const Matrix& g) {
    Matrix ga = (a.value().array() >= 0.0).select(g, slopes.cwiseProduct(g));
    t.accumulate(a, ga);
  });
}

inline Var cos_elem(const Var& a) {
  Tape& t = detail::tape_of(a);
  return t.push(a.value().array().cos().matrix(), t.needs_grad(a), [a](Tape& t, const Matrix& g) {
    Matrix ga = -g.cwiseProduct(a.value().array().sin().matrix());
    t.accumulate(a, ga);
  });
}

// Flat-index gather: out.data()[k] = a.data()[index[k]] (column-major), or 0
// where index[k] < 0. Covers reshapes, im2col and zero padding.
inline Var gather(const Var& a, Eigen::Index rows, Eigen::Index cols, std::vector<int> index) {
  require(static_cast<Eigen::Index>(index.size()) == rows * cols, ErrorKind::shape,
          "gather: index size mismatch");
  Tape& t = detail::tape_of(a);
  Matrix out(rows, cols);
  const double* src = a.value().data();
  const Eigen::Index n = a.value().size();
  for (std::size_t k = 0; k < index.size(); ++k) {
    require(index[k] < n, ErrorKind::range, "gather: index out of range");
    out.data()[k] = index[k] < 0 ? 0.0 : src[index[k]];
  }
  return t.push(std::move(out), t.needs_grad(a),
                [a, index = std::move(index)](Tape& t, const Matrix& g) {
                  Matrix ga = Matrix::Zero(a.rows(), a.cols());
                  for (std::size_t k = 0; k < index.size(); ++k)
                    if (index[k] >= 0) ga.data()[index[k]] += g.data()[k];
                  t.accumulate(a, ga);
                });
}

inline Var gather_rows(const Var& a, std::vector<int> rows) {
  Tape& t = detail::tape_of(a);
  Matrix out(static_cast<Eigen::Index>(rows.size()), a.cols());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    require(rows[k] >= 0 && rows[k] < a.rows(), ErrorKind::range, "gather_rows: index out of range");
    out.row(static_cast<Eigen::Index>(k)) = a.value().row(rows[k]);
  }
  return t.push(std::move(out), t.needs_grad(a), [a, rows = std::move(rows)](Tape& t, const Matrix& g) {
    Matrix ga = Matrix::Zero(a.rows(), a.cols());
    for (std::size_t k = 0; k < rows.size(); ++k) ga.row(rows[k]) += g.row(static_cast<Eigen::Index>(k));
    t.accumulate(a, ga);
  });
}

inline Var gather_cols(const Var& a, std::vector<int> cols) {
  Tape& t = detail::tape_of(a);
  Matrix out(a.rows(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t k = 0; k < cols.size(); ++k) {
    require(cols[k] >= 0 && cols[k] < a.cols(), ErrorKind::range, "gather_cols: index out of range");
    out.col(static_cast<Eigen::Index>(k)) = a.value().col(cols[k]);
  }
  return t.push(std::move(out), t.needs_grad(a), [a, cols = std::move(cols)](Tape& t, const Matrix& g) {
    Matrix ga = Matrix::Zero(a.rows(), a.cols());
    for (std::size_t k = 0; k < cols.size(); ++k) ga.col(cols[k]) += g.col(static_cast<Eigen::Index>(k));
    t.accumulate(a, ga);
  });
}

// out.row(target[k]) += a.row(k); out has `out_rows` rows.
inline Var scatter_add_rows(const Var& a, std::vector<int> target, Eigen::Index out_rows) {
  require(static_cast<Eigen::Index>(target.size()) == a.rows(), ErrorKind::shape,
          "scatter_add_rows: index size mismatch");
  Tape& t = detail::tape_of(a);
  Matrix out = Matrix::Zero(out_rows, a.cols());
  for (std::size_t k = 0; k < target.size(); ++k) {
    require(target[k] >= 0 && target[k] < out_rows, ErrorKind::range,
            "scatter_add_rows: index out of range");
    out.row(target[k]) += a.value().row(static_cast<Eigen::Index>(k));
  }
  return t.push(std::move(out), t.needs_grad(a),
                [a, target = std::move(target)](Tape& t, const Matrix& g) {
                  Matrix ga(a.rows(), a.cols());
                  for (std::size_t k = 0; k < target.size(); ++k)
                    ga.row(static_cast<Eigen::Index>(k)) = g.row(target[k]);
                  t.accumulate(a, ga);
                });
}

inline Var concat_cols(const std::vector<Var>& parts) {
  require(!parts.empty(), ErrorKind::shape, "concat_cols: no inputs");
  Tape& t = detail::tape_of(parts.front());
  Eigen::Index cols = 0;
  bool ng = false;
  for (const auto& p : parts) {
    require(p.rows() == parts.front().rows(), ErrorKind::shape, "concat_cols: row counts differ");
    cols += p.cols();
    ng = ng || t.needs_grad(p);
  }
  Matrix out(parts.front().rows(), cols);
  Eigen::Index offset = 0;
  for (const auto& p : parts) {
    out.middleCols(offset, p.cols()) = p.value();
    offset += p.cols();
  }
  return t.push(std::move(out), ng, [parts](Tape& t, const Matrix& g) {
    Eigen::Index offset = 0;
    for (const auto& p : parts) {
      if (t.needs_grad(p)) t.accumulate(p, g.middleCols(offset, p.cols()));
      offset += p.cols();
    }
  });
}

inline Var slice_cols(const Var& a, Eigen::Index start, Eigen::Index count) {
  require(start >= 0 && start + count <= a.cols(), ErrorKind::range, "slice_cols: out of range");
  Tape& t = detail::tape_of(a);
  return t.push(a.value().middleCols(start, count), t.needs_grad(a),
                [a, start, count](Tape& t, const Matrix& g) {
                  Matrix ga = Matrix::Zero(a.rows(), a.cols());
                  ga.middleCols(start, count) = g;
                  t.accumulate(a, ga);
                });
}

inline Var sum(const Var& a) {
  Tape& t = detail::tape_of(a);
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  return t.push(std::move(out), t.needs_grad(a), [a](Tape& t, const Matrix& g) {
    t.accumulate(a, Matrix::Constant(a.rows(), a.cols(), g(0, 0)));
  });
}

inline Var rowsum(const Var& a) {
  Tape& t = detail::tape_of(a);
  return t.push(a.value().rowwise().sum(), t.needs_grad(a), [a](Tape& t, const Matrix& g) {
    Matrix ga = g.col(0).replicate(1, a.cols());
    t.accumulate(a, ga);
  });
}

inline Var softmax_rows(const Var& a) {
  Tape& t = detail::tape_of(a);
  Matrix y(a.rows(), a.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    const double mx = a.value().row(i).maxCoeff();
    y.row(i) = (a.value().row(i).array() - mx).exp().matrix();
    y.row(i) /= y.row(i).sum();
  }
  return t.push(y, t.needs_grad(a), [a, y](Tape& t, const Matrix& g) {
    Matrix dot = g.cwiseProduct(y).rowwise().sum();
    Matrix ga = y.cwiseProduct((g.colwise() - dot.col(0)));
    t.accumulate(a, ga);
  });
}

// Pairwise cosine similarity (N x K) between rows of a and rows of b. Pairs
// involving a degenerate row have similarity 0 and contribute no gradient.
inline Var cosine_pairwise(const Var& a, const Var& b) {
  require(a.cols() == b.cols(), ErrorKind::shape, "cosine_pairwise: column counts differ");
  Tape& t = detail::tape_of(a);
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  Vector na = av.rowwise().norm();
  Vector nb = bv.rowwise().norm();
  Matrix out = Matrix::Zero(av.rows(), bv.rows());
  for (Eigen::Index i = 0; i < av.rows(); ++i)
    for (Eigen::Index j = 0; j < bv.rows(); ++j)
      if (na(i) >= kDegenerateNorm && nb(j) >= kDegenerateNorm)
        out(i, j) = av.row(i).dot(bv.row(j)) / (na(i) * nb(j));
  Matrix cosv = out;
  return t.push(std::move(out), t.any_needs_grad({a, b}),
                [a, b, na, nb, cosv](Tape& t, const Matrix& g) {
                  const Matrix& av = a.value();
                  const Matrix& bv = b.value();
                  Matrix ga = Matrix::Zero(av.rows(), av.cols());
                  Matrix gb = Matrix::Zero(bv.rows(), bv.cols());
                  for (Eigen::Index i = 0; i < av.rows(); ++i) {
                    if (na(i) < kDegenerateNorm) continue;
                    for (Eigen::Index j = 0; j < bv.rows(); ++j) {
                      if (nb(j) < kDegenerateNorm) continue;
                      const double w = g(i, j);
                      if (w == 0.0) continue;
                      const double inv = 1.0 / (na(i) * nb(j));
                      ga.row(i) += w * (bv.row(j) * inv - cosv(i, j) * av.row(i) / (na(i) * na(i)));
                      gb.row(j) += w * (av.row(i) * inv - cosv(i, j) * bv.row(j) / (nb(j) * nb(j)));
                    }
                  }
                  if (t.needs_grad(a)) t.accumulate(a, ga);
                  if (t.needs_grad(b)) t.accumulate(b, gb);
                });
}

// Cosine similarity of matching rows (N x 1), degenerate rows give 0.
inline Var cosine_rowwise(const Var& a, const Var& b) {
  detail::same_shape(a, b, "cosine_rowwise");
  Tape& t = detail::tape_of(a);
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  Vector na = av.rowwise().norm();
  Vector nb = bv.rowwise().norm();
  Matrix out = Matrix::Zero(av.rows(), 1);
  for (Eigen::Index i = 0; i < av.rows(); ++i)
    if (na(i) >= kDegenerateNorm && nb(i) >= kDegenerateNorm)
      out(i, 0) = av.row(i).dot(bv.row(i)) / (na(i) * nb(i));
  Matrix cosv = out;
  return t.push(std::move(out), t.any_needs_grad({a, b}),
                [a, b, na, nb, cosv](Tape& t, const Matrix& g) {
                  const Matrix& av = a.value();
                  const Matrix& bv = b.value();
                  Matrix ga = Matrix::Zero(av.rows(), av.cols());
                  Matrix gb = Matrix::Zero(bv.rows(), bv.cols());
                  for (Eigen::Index i = 0; i < av.rows(); ++i) {
                    if (na(i) < kDegenerateNorm || nb(i) < kDegenerateNorm) continue;
                    const double inv = 1.0 / (na(i) * nb(i));
                    ga.row(i) = g(i, 0) * (bv.row(i) * inv - cosv(i, 0) * av.row(i) / (na(i) * na(i)));
                    gb.row(i) = g(i, 0) * (av.row(i) * inv - cosv(i, 0) * bv.row(i) / (nb(i) * nb(i)));
                  }
                  if (t.needs_grad(a)) t.accumulate(a, ga);
                  if (t.needs_grad(b)) t.accumulate(b, gb);
                });
}

// max(a, 0)^p elementwise, p > 0.
// Each row scaled to unit L2 norm; rows below the degenerate threshold pass
// through unchanged.
inline Var l2_normalize_rows(const Var& a) {
  Tape& t = *a.tape();
  const Matrix& av = a.value();
  Matrix y = av;
  Vector norms(av.rows());
  for (Eigen::Index i = 0; i < av.rows(); ++i) {
    norms(i) = av.row(i).norm();
    if (norms(i) >= kDegenerateNorm) y.row(i) /= norms(i);
  }
  Matrix yv = y;
  return t.push(std::move(y), t.needs_grad(a), [a, yv, norms](Tape& t, const Matrix& g) {
    Matrix ga = g;
    for (Eigen::Index i = 0; i < g.rows(); ++i)
      if (norms(i) >= kDegenerateNorm)
        ga.row(i) = (g.row(i) - yv.row(i) * g.row(i).dot(yv.row(i))) / norms(i);
    t.accumulate(a, ga);
  });
}

inline Var pow_positive(const Var& a, double p) {
  Tape& t = detail::tape_of(a);
  Matrix y = a.value().unaryExpr([p](double x) { return x > 0 ? std::pow(x, p) : 0.0; });
  return t.push(std::move(y), t.needs_grad(a), [a, p](Tape& t, const Matrix& g) {
    Matrix d = a.value().unaryExpr([p](double x) { return x > 0 ? p * std::pow(x, p - 1.0) : 0.0; });
    t.accumulate(a, g.cwiseProduct(d));
  });
}

// Divide each row by its sum; rows summing to <= 0 become uniform (and carry
// no gradient).
inline Var normalize_row_sums(const Var& a) {
  Tape& t = detail::tape_of(a);
  const Matrix& av = a.value();
  Vector s = av.rowwise().sum();
  Matrix y(av.rows(), av.cols());
  for (Eigen::Index i = 0; i < av.rows(); ++i) {
    if (s(i) > 0)
      y.row(i) = av.row(i) / s(i);
    else
      y.row(i).setConstant(1.0 / static_cast<double>(av.cols()));
  }
  Matrix yv = y;
  return t.push(std::move(y), t.needs_grad(a), [a, s, yv](Tape& t, const Matrix& g) {
    Matrix ga = Matrix::Zero(yv.rows(), yv.cols());
    for (Eigen::Index i = 0; i < yv.rows(); ++i) {
      if (!(s(i) > 0)) continue;
      const double dot = g.row(i).dot(yv.row(i));
      ga.row(i) = (g.row(i).array() - dot).matrix() / s(i);
    }
    t.accumulate(a, ga);
  });
}

// Sum over all entries of binary cross-entropy between sigmoid(logits) and
// labels, evaluated in the numerically stable logit form.
inline Var bce_with_logits_sum(const Var& logits, const Matrix& labels) {
  require(labels.rows() == logits.rows() && labels.cols() == logits.cols(), ErrorKind::shape,
          "bce_with_logits_sum: shape mismatch");
  Tape& t = detail::tape_of(logits);
  const Matrix& x = logits.value();
  double total = 0.0;
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    const double z = x.data()[k];
    const double y = labels.data()[k];
    // -[y log s(z) + (1-y) log(1-s(z))] = max(z,0) - z y + log(1 + e^{-|z|})
    total += std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z)));
  }
  Matrix out(1, 1);
  out(0, 0) = total;
  return t.push(std::move(out), t.needs_grad(logits), [logits, labels](Tape& t, const Matrix& g) {
    Matrix s = logits.value().unaryExpr([](double z) {
      return z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
    });
    t.accumulate(logits, g(0, 0) * (s - labels));
  });
}

inline Var ones_like_rows(Tape& t, Eigen::Index rows) { return t.constant(Matrix::Ones(rows, 1)); }

}  // namespace decrl::ad
