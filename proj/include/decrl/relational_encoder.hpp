#pragma once

// Relation-aware graph convolution over one timestamp's entity graph and the
// mean-pooling update of relation representations.

#include <algorithm>
#include <map>
#include <vector>

#include "decrl/autodiff.hpp"
#include "decrl/data_model.hpp"

namespace decrl {

// RReLU: negative slope drawn from U[lower, upper] per element while training,
// fixed at the midpoint otherwise.
struct RReLU {
  static constexpr double kLower = 1.0 / 8.0;
  static constexpr double kUpper = 1.0 / 3.0;
  static constexpr double kInferenceSlope = (kLower + kUpper) / 2.0;  // 11/48

  Rng* training_rng = nullptr;  // null: inference mode

  ad::Var operator()(const ad::Var& x) const {
    if (!training_rng) return ad::leaky_relu(x, kInferenceSlope);
    std::uniform_real_distribution<double> dist(kLower, kUpper);
    Matrix slopes(x.rows(), x.cols());
    for (Eigen::Index k = 0; k < slopes.size(); ++k) slopes.data()[k] = dist(*training_rng);
    return ad::leaky_relu(x, slopes);
  }
};

struct RgcnLayerWeights {
  Matrix neighbor;   // W_1, d x d
  Matrix self_loop;  // W_2, d x d
};

struct EncoderParameters {
  std::vector<RgcnLayerWeights> layers;
  int dim = 0;
};

struct RepresentationState {
  Matrix entities;   // N_e x d
  Matrix relations;  // N_r x d
  int timestamp = 0;
};

// Entities sharing an in-degree share an initial vector.
struct DegreeClasses {
  std::vector<int> degree_values;     // distinct degrees, ascending
  std::vector<int> class_of_entity;   // index into degree_values

  int num_classes() const { return static_cast<int>(degree_values.size()); }

  static DegreeClasses from_degrees(const std::vector<int>& in_degrees) {
    DegreeClasses c;
    c.degree_values = in_degrees;
    std::sort(c.degree_values.begin(), c.degree_values.end());
    c.degree_values.erase(std::unique(c.degree_values.begin(), c.degree_values.end()), c.degree_values.end());
    c.class_of_entity.reserve(in_degrees.size());
    for (int d : in_degrees) {
      auto it = std::lower_bound(c.degree_values.begin(), c.degree_values.end(), d);
      c.class_of_entity.push_back(static_cast<int>(it - c.degree_values.begin()));
    }
    return c;
  }
};

// One vector per distinct in-degree (drawn in ascending degree order), then
// broadcast to every entity of that degree.
inline Matrix init_degree_table(const DegreeClasses& classes, int dim, std::uint64_t seed) {
  require(dim >= 1, ErrorKind::config, "representation dimension must be >= 1");
  Rng rng(seed);
  return xavier_uniform(classes.num_classes(), dim, rng);
}

inline Matrix init_entity_representations(const std::vector<int>& in_degrees, int dim, std::uint64_t seed) {
  const auto classes = DegreeClasses::from_degrees(in_degrees);
  const Matrix table = init_degree_table(classes, dim, seed);
  Matrix out(static_cast<Eigen::Index>(in_degrees.size()), dim);
  for (std::size_t i = 0; i < in_degrees.size(); ++i)
    out.row(static_cast<Eigen::Index>(i)) = table.row(classes.class_of_entity[i]);
  return out;
}

namespace ad {

// h_o' = RReLU( (1/d_o) sum_{(s,r,o)} W_1 (h_s + h_r) + W_2 h_o ); the
// neighbor term is absent for entities without incoming edges.
inline Var rgcn_layer(const EntityGraphSnapshot& snapshot, const Var& entities, const Var& relations,
                      const Var& w_neighbor, const Var& w_self, const RReLU& act) {
  const Eigen::Index n = entities.rows();
  const Eigen::Index d = entities.cols();
  require(relations.cols() == d && w_neighbor.rows() == d && w_neighbor.cols() == d && w_self.rows() == d &&
              w_self.cols() == d,
          ErrorKind::shape, "rgcn_layer: dimension mismatch");
  require(n == snapshot.num_entities, ErrorKind::shape, "rgcn_layer: entity count mismatch");
  Var self_term = matmul_nt(entities, w_self);
  if (snapshot.edges.empty()) return act(self_term);

  std::vector<int> subj, rel, obj;
  subj.reserve(snapshot.edges.size());
  rel.reserve(snapshot.edges.size());
  obj.reserve(snapshot.edges.size());
  for (const auto& q : snapshot.edges) {
    require(q.relation < relations.rows(), ErrorKind::shape, "rgcn_layer: relation id exceeds relation matrix");
    subj.push_back(q.subject);
    rel.push_back(q.relation);
    obj.push_back(q.object);
  }
  Matrix inv_degree = Matrix::Zero(n, 1);
  for (Eigen::Index i = 0; i < n; ++i) {
    const int deg = snapshot.in_degree[static_cast<std::size_t>(i)];
    if (deg > 0) inv_degree(i, 0) = 1.0 / deg;
  }
  Tape& t = *entities.tape();
  Var messages = add(gather_rows(entities, std::move(subj)), gather_rows(relations, std::move(rel)));
  Var summed = scatter_add_rows(messages, std::move(obj), n);
  Var mean = mul_colvec(summed, t.constant(std::move(inv_degree)));
  return act(add(matmul_nt(mean, w_neighbor), self_term));
}

// h_r^t = mean of {e_i : i in V_r^t} and h_r^{t-1}; relations without events
// keep h_r^{t-1}.
inline Var update_relations(const EntityGraphSnapshot& snapshot, const Var& entities, const Var& previous) {
  require(entities.cols() == previous.cols(), ErrorKind::shape, "update_relations: dimension mismatch");
  const Eigen::Index nr = previous.rows();
  std::vector<std::vector<int>> related(static_cast<std::size_t>(nr));
  for (const auto& q : snapshot.edges) {
    require(q.relation < nr, ErrorKind::shape, "update_relations: relation id out of range");
    related[static_cast<std::size_t>(q.relation)].push_back(q.subject);
    related[static_cast<std::size_t>(q.relation)].push_back(q.object);
  }
  std::vector<int> rows, targets;
  Matrix inv_count(nr, 1);
  for (Eigen::Index r = 0; r < nr; ++r) {
    auto& ents = related[static_cast<std::size_t>(r)];
    std::sort(ents.begin(), ents.end());
    ents.erase(std::unique(ents.begin(), ents.end()), ents.end());
    for (int e : ents) {
      rows.push_back(e);
      targets.push_back(static_cast<int>(r));
    }
    inv_count(r, 0) = 1.0 / static_cast<double>(ents.size() + 1);
  }
  Tape& t = *entities.tape();
  Var total = previous;
  if (!rows.empty()) total = add(scatter_add_rows(gather_rows(entities, std::move(rows)), std::move(targets), nr), previous);
  return mul_colvec(total, t.constant(std::move(inv_count)));
}

}  // namespace ad

inline Matrix rgcn_layer(const EntityGraphSnapshot& snapshot, const RepresentationState& state,
                         const RgcnLayerWeights& layer, const RReLU& act = {}) {
  ad::Tape tape;
  return ad::rgcn_layer(snapshot, tape.constant(state.entities), tape.constant(state.relations),
                        tape.constant(layer.neighbor), tape.constant(layer.self_loop), act)
      .value();
}

inline Matrix rgcn_encode(const EntityGraphSnapshot& snapshot, const RepresentationState& state,
                          const EncoderParameters& params, const RReLU& act = {}) {
  require(!params.layers.empty(), ErrorKind::config, "encoder needs at least one layer");
  RepresentationState s = state;
  for (const auto& layer : params.layers) s.entities = rgcn_layer(snapshot, s, layer, act);
  return s.entities;
}

inline Matrix update_relation_representations(const EntityGraphSnapshot& snapshot, const Matrix& entities,
                                              const Matrix& previous_relations) {
  ad::Tape tape;
  return ad::update_relations(snapshot, tape.constant(entities), tape.constant(previous_relations)).value();
}

}  // namespace decrl
