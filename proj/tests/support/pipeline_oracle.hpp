#pragma once

// Straight-line forward pass assembled from the per-module oracles. The
// c-means centroids are taken from the library's trace (they are the output
// of an iterative solver, not a closed form); alignments and global matchings
// are recomputed here by exhaustive search.

#include <vector>

#include "decrl/model.hpp"
#include "oracles.hpp"

namespace oracle {

struct PipelineResult {
  Matrix probabilities;  // queries x N_r
  Matrix entities;       // integrated, N_e x d
  Matrix relations;      // integrated, N_r x d
  double temporal_loss = 0.0;
  std::vector<std::vector<int>> alignments;
  std::vector<std::vector<int>> global_matchings;
};

inline Perceptron perceptron_of(const decrl::DecrlModel& m, const std::string& prefix) {
  const auto& p = m.params;
  return {p.at(prefix + ".w1").value, p.at(prefix + ".b1").value, p.at(prefix + ".w2").value,
          p.at(prefix + ".b2").value};
}

inline Matrix l2_rows(Matrix m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    double n = 0;
    for (Eigen::Index k = 0; k < m.cols(); ++k) n += m(i, k) * m(i, k);
    n = std::sqrt(n);
    if (n >= 1e-12)
      for (Eigen::Index k = 0; k < m.cols(); ++k) m(i, k) /= n;
  }
  return m;
}

// Attention at the last position over per-step rows, then the d x 2d
// projection; `rows[t]` is the representation matrix of step t.
inline Matrix integrate(const std::vector<Matrix>& rows, const std::vector<double>& taus, const decrl::DecrlModel& m,
                        const std::string& prefix) {
  const auto& p = m.params;
  const Matrix& omega = p.at(prefix + ".omega").value;
  const Eigen::Index n = rows.front().rows(), d = rows.front().cols();
  const Eigen::Index steps = static_cast<Eigen::Index>(rows.size());
  Matrix out(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    Matrix z(steps, 2 * d);
    for (Eigen::Index t = 0; t < steps; ++t) {
      const auto phi = position_code(taus[static_cast<std::size_t>(t)], omega);
      for (Eigen::Index k = 0; k < d; ++k) {
        z(t, k) = rows[static_cast<std::size_t>(t)](i, k);
        z(t, d + k) = phi[static_cast<std::size_t>(k)];
      }
    }
    const Matrix h = attention(z, p.at(prefix + ".query").value, p.at(prefix + ".key").value, static_cast<double>(d));
    const auto y = matvec(p.at(prefix + ".proj").value, row(h, steps - 1));
    for (Eigen::Index k = 0; k < d; ++k) out(i, k) = y[static_cast<std::size_t>(k)] + p.at(prefix + ".proj_bias").value(0, k);
  }
  return out;
}

inline PipelineResult forward(const decrl::DecrlModel& model, const decrl::History& history, int first, int last,
                              const decrl::WindowTrace& trace, const std::vector<int>& subjects,
                              const std::vector<int>& objects) {
  const auto& cfg = model.config;
  const auto& p = model.params;
  const int k = cfg.num_clusters;
  const double slope = (1.0 / 8.0 + 1.0 / 3.0) / 2.0;
  const Matrix& table = p.at("entity_init").value;

  Matrix h_e(model.num_entities, cfg.dim);
  for (int i = 0; i < model.num_entities; ++i)
    h_e.row(i) = table.row(model.degree_classes.class_of_entity[static_cast<std::size_t>(i)]);
  Matrix h_r = p.at("relation_init").value;
  const Perceptron corr = perceptron_of(model, "corr"), update = perceptron_of(model, "update");

  PipelineResult res;
  std::vector<Matrix> fused_seq, ent_seq, rel_seq;
  std::vector<double> taus;
  for (int t = first; t <= last; ++t) {
    const int step = t - first;
    const auto& edges = history.timeline.at(t);
    Matrix enc = h_e;
    for (int l = 0; l < cfg.num_layers; ++l)
      enc = rgcn_layer(edges, enc, h_r, p.at("rgcn." + std::to_string(l) + ".neighbor").value,
                       p.at("rgcn." + std::to_string(l) + ".self").value, slope);
    const Matrix rel_theta = relation_update(edges, enc, h_r);

    const Matrix u = membership(enc, trace.steps[static_cast<std::size_t>(step)].centroids, cfg.fuzzifier);
    const Matrix c = matmul(u.transpose(), enc);
    std::vector<int> perm(static_cast<std::size_t>(k));
    std::iota(perm.begin(), perm.end(), 0);
    if (step > 0 && !cfg.ablation.no_alignment) perm = best_assignment(cosine_matrix(fused_seq.back(), c)).permutation;
    res.alignments.push_back(perm);

    Matrix u_al(u.rows(), k), fused(k, c.cols());
    for (int j = 0; j < k; ++j) {
      u_al.col(j) = u.col(perm[static_cast<std::size_t>(j)]);
      for (Eigen::Index x = 0; x < c.cols(); ++x) {
        const double cur = c(perm[static_cast<std::size_t>(j)], x);
        fused(j, x) = step > 0 && !cfg.ablation.no_fusion ? cfg.beta * fused_seq.back()(j, x) + (1.0 - cfg.beta) * cur : cur;
      }
    }

    std::vector<std::vector<std::vector<double>>> s(static_cast<std::size_t>(k));
    Matrix q(k, k);
    for (int i = 0; i < k; ++i)
      for (int j = 0; j < k; ++j) {
        if (cfg.ablation.no_ice) {
          s[static_cast<std::size_t>(i)].push_back(row(fused, j));
          q(i, j) = 1.0;
        } else {
          s[static_cast<std::size_t>(i)].push_back(latent_correlation(row(fused, i), row(fused, j), corr));
          q(i, j) = correlation_intensity(s[static_cast<std::size_t>(i)].back(), p.at("corr.conv_kernel").value,
                                          p.at("corr.conv_bias").value(0, 0));
        }
      }
    if (!cfg.ablation.no_global_graph && !model.global.empty()) {
      const auto matching = best_assignment(cosine_matrix(fused, model.global.centroids)).permutation;
      res.global_matchings.push_back(matching);
      q = enhance(q, matching, model.global.centroids);
    }
    const Matrix c_hat = message_passing(s, q, fused, update);
    const Matrix e_theta = matmul(u_al, c_hat);

    if (step > 0) {
      h_e = gate(e_theta, h_e, p.at("gate_e.weight").value, p.at("gate_e.bias").value);
      h_r = gate(rel_theta, h_r, p.at("gate_r.weight").value, p.at("gate_r.bias").value);
    } else {
      h_e = e_theta;
      h_r = rel_theta;
    }
    h_e = l2_rows(h_e);
    h_r = l2_rows(h_r);
    fused_seq.push_back(fused);
    ent_seq.push_back(h_e);
    rel_seq.push_back(h_r);
    taus.push_back(history.timeline.tau(t));
  }

  res.entities = integrate(ent_seq, taus, model, "time_e");
  res.relations = integrate(rel_seq, taus, model, "time_r");
  res.temporal_loss = smoothness_loss(fused_seq);

  const ConvTransE dec{p.at("dec.conv_kernel").value, p.at("dec.conv_bias").value, p.at("dec.fc_weight").value,
                       p.at("dec.fc_bias").value};
  res.probabilities = Matrix(static_cast<Eigen::Index>(subjects.size()), model.num_relations);
  for (std::size_t b = 0; b < subjects.size(); ++b) {
    const auto logits = convtranse_logits(row(res.entities, subjects[b]), row(res.entities, objects[b]), res.relations, dec);
    for (int r = 0; r < model.num_relations; ++r)
      res.probabilities(static_cast<Eigen::Index>(b), r) = sigmoid(logits[static_cast<std::size_t>(r)]);
  }
  return res;
}

}  // namespace oracle
