#pragma once

// The full per-timestamp pipeline over a history window: relation-aware
// encoding, evolutionary clustering, cluster-graph message passing, the time
// residual gate and attentive temporal integration, followed by the decoder.

#include <memory>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "decrl/autodiff.hpp"
#include "decrl/cluster_graph.hpp"
#include "decrl/config.hpp"
#include "decrl/data_model.hpp"
#include "decrl/decoder_metrics.hpp"
#include "decrl/evolutionary_clustering.hpp"
#include "decrl/hungarian.hpp"
#include "decrl/relational_encoder.hpp"
#include "decrl/temporal_encoding.hpp"

namespace decrl {

inline double total_loss(double tkg_loss, double temporal_loss, double lambda) {
  require(lambda >= 0.0 && lambda <= 1.0, ErrorKind::config, "lambda must lie in [0,1]");
  return (1.0 - lambda) * tkg_loss + lambda * temporal_loss;
}

namespace ad {
inline Var total_loss(const Var& tkg_loss, const Var& temporal_loss, double lambda) {
  require(lambda >= 0.0 && lambda <= 1.0, ErrorKind::config, "lambda must lie in [0,1]");
  return add(scale(tkg_loss, 1.0 - lambda), scale(temporal_loss, lambda));
}
}  // namespace ad

// Every timestamp of the merged timeline with its entity graph prebuilt.
struct History {
  TkgDataset timeline;
  std::vector<EntityGraphSnapshot> snapshots;

  static History from(TkgDataset timeline) {
    History h;
    h.timeline = std::move(timeline);
    for (int t = 0; t < h.timeline.num_timestamps(); ++t) h.snapshots.push_back(build_snapshot(h.timeline, t));
    return h;
  }
  static History from(const TkgCorpus& corpus) { return from(corpus.timeline()); }

  int num_timestamps() const { return timeline.num_timestamps(); }
};

class DecrlModel {
 public:
  // Degree-class vectors start small so the first encoder pass is driven by
  // relation vectors and graph structure rather than by the random table.
  static constexpr double kEntityInitScale = 0.1;

  RunConfig config;
  int num_entities = 0;
  int num_relations = 0;
  DegreeClasses degree_classes;
  ad::ParameterStore params;
  GlobalClusterContext global;

  DecrlModel() = default;

  // Fresh parameters drawn from config.seed; entities are grouped into
  // initial-vector classes by their training in-degree.
  DecrlModel(const RunConfig& cfg, int n_entities, int n_relations, const std::vector<int>& train_in_degrees)
      : config(cfg), num_entities(n_entities), num_relations(n_relations) {
    cfg.validate();
    require(static_cast<int>(train_in_degrees.size()) == n_entities, ErrorKind::shape,
            "in-degree vector does not cover the entity vocabulary");
    require(cfg.num_clusters <= n_entities, ErrorKind::config, "more clusters than entities");
    degree_classes = DegreeClasses::from_degrees(train_in_degrees);
    const int d = cfg.dim;
    Rng rng(mix_seed(cfg.seed, 0x5eed));
    auto xavier = [&](Eigen::Index r, Eigen::Index c) { return xavier_uniform(r, c, rng); };
    auto zeros = [](Eigen::Index r, Eigen::Index c) { return Matrix(Matrix::Zero(r, c)); };
    auto scaled = [](Matrix m, double s) {
      m *= s;
      round_to_float(m);
      return m;
    };

    params.add("entity_init", scaled(xavier(degree_classes.num_classes(), d), kEntityInitScale));
    params.add("relation_init", xavier(n_relations, d));
    for (int l = 0; l < cfg.num_layers; ++l) {
      params.add("rgcn." + std::to_string(l) + ".neighbor", xavier(d, d));
      params.add("rgcn." + std::to_string(l) + ".self", xavier(d, d));
    }
    for (const char* m : {"corr", "update"}) {
      const std::string p(m);
      params.add(p + ".w1", xavier(d, 2 * d));
      params.add(p + ".b1", zeros(1, d));
      params.add(p + ".w2", xavier(d, d));
      params.add(p + ".b2", zeros(1, d));
    }
    params.add("corr.conv_kernel", xavier(1, 3));
    params.add("corr.conv_bias", zeros(1, 1));
    for (const char* g : {"gate_e", "gate_r"}) {
      params.add(std::string(g) + ".weight", xavier(d, d));
      params.add(std::string(g) + ".bias", zeros(1, d));
    }
    for (const char* s : {"time_e", "time_r"}) {
      const std::string p(s);
      params.add(p + ".omega", default_frequencies(d));
      params.add(p + ".query", xavier(2 * d, 2 * d));
      params.add(p + ".key", xavier(2 * d, 2 * d));
      params.add(p + ".proj", xavier(d, 2 * d));
      params.add(p + ".proj_bias", zeros(1, d));
    }
    params.add("dec.conv_kernel", xavier(cfg.decoder_channels, 2 * cfg.decoder_kernel));
    params.add("dec.conv_bias", zeros(1, cfg.decoder_channels));
    params.add("dec.fc_weight", xavier(d, cfg.decoder_channels * d));
    params.add("dec.fc_bias", zeros(1, d));
  }

  // Geometric frequency ladder 1 ... 1e-4 (as in sinusoidal position codes).
  static Matrix default_frequencies(int d) {
    Matrix f(1, d);
    for (int k = 0; k < d; ++k) f(0, k) = std::pow(10.0, -4.0 * k / std::max(1, d - 1));
    round_to_float(f);
    return f;
  }

  int dim() const { return config.dim; }

  std::vector<Matrix> parameter_values() const {
    std::vector<Matrix> out;
    for (std::size_t i = 0; i < params.size(); ++i) out.push_back(params[i].value);
    return out;
  }
  void set_parameter_values(const std::vector<Matrix>& values) {
    require(values.size() == params.size(), ErrorKind::shape, "parameter count mismatch");
    for (std::size_t i = 0; i < values.size(); ++i) params[i].value = values[i];
  }
};

// Parameters placed on a tape, either as gradient-tracked leaves or as
// constants.
struct BoundModel {
  ad::Var entity_init, relation_init;
  std::vector<std::pair<ad::Var, ad::Var>> rgcn;
  ad::MlpVars correlation, update;
  ad::Var corr_kernel, corr_bias;
  ad::Var gate_e_weight, gate_e_bias, gate_r_weight, gate_r_bias;
  struct Temporal {
    ad::Var omega, query, key, proj, proj_bias;
  } time_e, time_r;
  ad::DecoderVars decoder;
};

inline BoundModel bind(ad::Tape& tape, DecrlModel& model, bool track_gradients) {
  auto p = [&](const std::string& name) {
    ad::Parameter& param = model.params.at(name);
    return track_gradients ? tape.param(param) : tape.constant(param.value);
  };
  BoundModel b;
  b.entity_init = p("entity_init");
  b.relation_init = p("relation_init");
  for (int l = 0; l < model.config.num_layers; ++l)
    b.rgcn.emplace_back(p("rgcn." + std::to_string(l) + ".neighbor"), p("rgcn." + std::to_string(l) + ".self"));
  b.correlation = {p("corr.w1"), p("corr.b1"), p("corr.w2"), p("corr.b2")};
  b.update = {p("update.w1"), p("update.b1"), p("update.w2"), p("update.b2")};
  b.corr_kernel = p("corr.conv_kernel");
  b.corr_bias = p("corr.conv_bias");
  b.gate_e_weight = p("gate_e.weight");
  b.gate_e_bias = p("gate_e.bias");
  b.gate_r_weight = p("gate_r.weight");
  b.gate_r_bias = p("gate_r.bias");
  for (auto [prefix, target] : {std::pair{"time_e", &b.time_e}, std::pair{"time_r", &b.time_r}}) {
    const std::string s(prefix);
    *target = {p(s + ".omega"), p(s + ".query"), p(s + ".key"), p(s + ".proj"), p(s + ".proj_bias")};
  }
  b.decoder = {p("dec.conv_kernel"), p("dec.conv_bias"), p("dec.fc_weight"), p("dec.fc_bias")};
  return b;
}

inline BoundModel bind_constant(ad::Tape& tape, const DecrlModel& model) {
  return bind(tape, const_cast<DecrlModel&>(model), false);
}

// The discrete choices made during one window: centroids from c-means,
// alignment permutations and global matchings. Replaying a trace makes the
// forward pass a smooth function of the parameters.
struct TimestepTrace {
  int timestamp = 0;
  Matrix centroids;
  std::vector<int> alignment;
  std::vector<int> global_matching;
  int cmeans_iterations = 0;
};

struct WindowTrace {
  std::vector<TimestepTrace> steps;
};

struct ForwardOptions {
  Rng* training_rng = nullptr;  // RReLU slopes and dropout; null means inference
  const WindowTrace* replay = nullptr;
};

struct StepOutput {
  int timestamp = 0;
  ad::Var encoded;     // RGCN output E^t
  ad::Var membership;  // aligned U^t
  ad::Var clusters;    // fused cluster representations
  ad::Var entities;    // H_e^t after the gate
  ad::Var relations;   // H_r^t after the gate
};

struct WindowOutput {
  ad::Var entities;   // integrated e_bar, N_e x d
  ad::Var relations;  // integrated r_bar, N_r x d
  ad::Var temporal_loss;
  std::vector<StepOutput> steps;
  WindowTrace trace;
};

namespace detail {

inline ad::Var initial_entities(const BoundModel& b, const DecrlModel& model) {
  return ad::gather_rows(b.entity_init, model.degree_classes.class_of_entity);
}

// Cosine c-means on the rows with a usable direction. Isolated entities can
// keep a zero vector after the encoder; they neither attract nor move
// centroids and receive uniform membership downstream.
inline ClusterState fit_clusters(const Matrix& encoded, const RunConfig& cfg, int timestamp,
                                 const std::optional<Matrix>& warm) {
  ClusteringConfig cc;
  cc.num_clusters = cfg.num_clusters;
  cc.fuzzifier = cfg.fuzzifier;
  cc.max_iterations = cfg.cmeans_max_iterations;
  cc.tolerance = cfg.cmeans_tolerance;
  cc.fusion_weight = cfg.beta;
  cc.init = warm ? cfg.centroid_init : CentroidInit::kmeans_plus_plus;
  cc.seed = mix_seed(cfg.seed, static_cast<std::uint64_t>(timestamp) + 1000);
  std::vector<Eigen::Index> rows;
  for (Eigen::Index i = 0; i < encoded.rows(); ++i)
    if (encoded.row(i).norm() >= kDegenerateNorm) rows.push_back(i);
  require(static_cast<int>(rows.size()) >= cfg.num_clusters, ErrorKind::degenerate_input,
          "fewer non-degenerate entity representations than clusters at timestamp " + std::to_string(timestamp));
  Matrix subset(static_cast<Eigen::Index>(rows.size()), encoded.cols());
  for (std::size_t k = 0; k < rows.size(); ++k) subset.row(static_cast<Eigen::Index>(k)) = encoded.row(rows[k]);
  // Restarts keep the lowest objective; a warm start is the first candidate.
  ClusterState best = fuzzy_cmeans(subset, cc, warm);
  cc.init = CentroidInit::kmeans_plus_plus;
  for (int r = 1; r < cfg.cmeans_restarts; ++r) {
    cc.seed = mix_seed(cfg.seed, static_cast<std::uint64_t>(timestamp) * 7919 + 1000 + static_cast<std::uint64_t>(r));
    ClusterState candidate = fuzzy_cmeans(subset, cc);
    if (candidate.objective < best.objective) best = std::move(candidate);
  }
  return best;
}

inline std::vector<int> identity_permutation(int n) {
  std::vector<int> p(static_cast<std::size_t>(n));
  std::iota(p.begin(), p.end(), 0);
  return p;
}

}  // namespace detail

// Runs the pipeline over timestamps [first, last] of `history` and integrates
// the window with attention at its final position.
inline WindowOutput forward_window(ad::Tape& tape, const BoundModel& b, const DecrlModel& model,
                                   const History& history, int first, int last, const ForwardOptions& opt = {}) {
  require(first >= 0 && first <= last && last < history.num_timestamps(), ErrorKind::range,
          "window [" + std::to_string(first) + ", " + std::to_string(last) + "] exceeds the dataset range");
  const RunConfig& cfg = model.config;
  const Ablation& ab = cfg.ablation;
  const int k = cfg.num_clusters;
  if (opt.replay)
    require(static_cast<int>(opt.replay->steps.size()) == last - first + 1, ErrorKind::shape,
            "replay trace length does not match the window");

  const RReLU act{opt.training_rng};
  const bool use_global = !ab.no_global_graph && !model.global.empty();

  WindowOutput out;
  ad::Var h_e = detail::initial_entities(b, model);
  ad::Var h_r = b.relation_init;
  std::vector<ad::Var> fused_sequence, z_e, z_r;

  for (int t = first; t <= last; ++t) {
    const int step = t - first;
    const EntityGraphSnapshot& snap = history.snapshots[static_cast<std::size_t>(t)];
    const TimestepTrace* replay = opt.replay ? &opt.replay->steps[static_cast<std::size_t>(step)] : nullptr;
    TimestepTrace trace;
    trace.timestamp = t;

    ad::Var encoded = h_e;
    for (const auto& [w_neighbor, w_self] : b.rgcn) encoded = ad::rgcn_layer(snap, encoded, h_r, w_neighbor, w_self, act);
    ad::Var relations_theta = ad::update_relations(snap, encoded, h_r);

    if (replay) {
      trace.centroids = replay->centroids;
    } else {
      std::optional<Matrix> warm;
      if (step > 0 && cfg.centroid_init == CentroidInit::warm_start) {
        // Warm starts follow the previous step's aligned labels.
        const TimestepTrace& prev = out.trace.steps.back();
        warm = Matrix(prev.centroids.rows(), prev.centroids.cols());
        for (int j = 0; j < k; ++j) warm->row(j) = prev.centroids.row(prev.alignment[static_cast<std::size_t>(j)]);
      }
      ClusterState cs = detail::fit_clusters(encoded.value(), cfg, t, warm);
      trace.centroids = cs.centroids;
      trace.cmeans_iterations = cs.iterations;
    }
    ad::Var membership = ad::soft_membership(encoded, trace.centroids, cfg.fuzzifier);
    ad::Var clusters = ad::cluster_representations(membership, encoded);

    const bool has_previous = step > 0;
    if (replay) {
      trace.alignment = replay->alignment;
    } else if (has_previous && !ab.no_alignment) {
      trace.alignment = hungarian_match(cosine_matrix(fused_sequence.back().value(), clusters.value())).permutation;
    } else {
      trace.alignment = detail::identity_permutation(k);
    }
    ad::Var aligned_membership = ad::gather_cols(membership, trace.alignment);
    ad::Var aligned = ad::gather_rows(clusters, trace.alignment);
    ad::Var fused = has_previous && !ab.no_fusion
                        ? ad::add(ad::scale(fused_sequence.back(), cfg.beta), ad::scale(aligned, 1.0 - cfg.beta))
                        : aligned;
    ad::Var correlations, intensities;
    if (ab.no_ice) {
      correlations = ad::neighbor_pairs(fused);
      intensities = tape.constant(Matrix::Ones(k, k));
    } else {
      correlations = ad::latent_correlations(fused, b.correlation);
      intensities = ad::correlation_intensities(correlations, b.corr_kernel, b.corr_bias);
    }
    if (use_global) {
      trace.global_matching = replay ? replay->global_matching : match_to_global(fused.value(), model.global.centroids);
      intensities = ad::mul(intensities, tape.constant(global_similarity(trace.global_matching, model.global.centroids)));
    }
    ad::Var updated_clusters = ad::cluster_message_passing(correlations, intensities, fused, b.update);
    ad::Var entities_theta = ad::propagate_to_entities(aligned_membership, updated_clusters);

    if (has_previous) {
      h_e = ad::time_residual_gate(entities_theta, h_e, b.gate_e_weight, b.gate_e_bias);
      h_r = ad::time_residual_gate(relations_theta, h_r, b.gate_r_weight, b.gate_r_bias);
    } else {
      h_e = entities_theta;
      h_r = relations_theta;
    }
    h_e = ad::l2_normalize_rows(h_e);
    h_r = ad::l2_normalize_rows(h_r);

    const double tau = history.timeline.tau(t);
    z_e.push_back(ad::position_enhance(h_e, ad::time_position_encoding(tau, b.time_e.omega)));
    z_r.push_back(ad::position_enhance(h_r, ad::time_position_encoding(tau, b.time_r.omega)));
    fused_sequence.push_back(fused);
    out.steps.push_back({t, encoded, aligned_membership, fused, h_e, h_r});
    out.trace.steps.push_back(std::move(trace));
  }

  const int query = static_cast<int>(z_e.size()) - 1;
  const double d = static_cast<double>(cfg.dim);
  ad::Var integrated_e = ad::attend(z_e, b.time_e.query, b.time_e.key, query, d);
  ad::Var integrated_r = ad::attend(z_r, b.time_r.query, b.time_r.key, query, d);
  out.entities = ad::add_rowvec(ad::matmul_nt(integrated_e, b.time_e.proj), b.time_e.proj_bias);
  out.relations = ad::add_rowvec(ad::matmul_nt(integrated_r, b.time_r.proj), b.time_r.proj_bias);
  out.temporal_loss = ad::temporal_smoothness_loss(fused_sequence);
  return out;
}

// History window used to forecast timestamp t: up to `window` timestamps
// strictly before t.
inline std::pair<int, int> history_window(int t, int window) {
  require(t >= 1, ErrorKind::range, "no history precedes timestamp " + std::to_string(t));
  return {std::max(0, t - window), t - 1};
}

// Unique (s, o) pairs of one timestamp with multi-hot relation labels.
struct QuerySet {
  int timestamp = 0;
  std::vector<int> subjects;
  std::vector<int> objects;
  Matrix labels;  // pairs x N_r
};

inline QuerySet pair_queries(const std::vector<Quadruple>& events, int timestamp, int num_relations) {
  std::map<std::pair<int, int>, std::vector<int>> grouped;
  for (const auto& q : events) grouped[{q.subject, q.object}].push_back(q.relation);
  QuerySet qs;
  qs.timestamp = timestamp;
  qs.labels = Matrix::Zero(static_cast<Eigen::Index>(grouped.size()), num_relations);
  Eigen::Index row = 0;
  for (const auto& [pair, rels] : grouped) {
    qs.subjects.push_back(pair.first);
    qs.objects.push_back(pair.second);
    for (int r : rels) qs.labels(row, r) = 1.0;
    ++row;
  }
  return qs;
}

inline QuerySet slice_queries(const QuerySet& qs, std::size_t begin, std::size_t end) {
  QuerySet out;
  out.timestamp = qs.timestamp;
  out.subjects.assign(qs.subjects.begin() + static_cast<std::ptrdiff_t>(begin),
                      qs.subjects.begin() + static_cast<std::ptrdiff_t>(end));
  out.objects.assign(qs.objects.begin() + static_cast<std::ptrdiff_t>(begin),
                     qs.objects.begin() + static_cast<std::ptrdiff_t>(end));
  out.labels = qs.labels.middleRows(static_cast<Eigen::Index>(begin), static_cast<Eigen::Index>(end - begin));
  return out;
}

inline ad::Var relation_logits(const WindowOutput& w, const BoundModel& b, const std::vector<int>& subjects,
                               const std::vector<int>& objects, const DecrlModel& model, Rng* dropout_rng) {
  return ad::convtranse_logits(ad::gather_rows(w.entities, subjects), ad::gather_rows(w.entities, objects),
                               w.relations, b.decoder, model.config.dropout, dropout_rng);
}

struct WindowLoss {
  ad::Var total;
  ad::Var tkg;
  ad::Var temporal;
};

// Batches the queries of one timestamp; the window pipeline is shared. The
// prediction term is the mean over mini-batches of the per-batch
//   -(1/S) sum y log p + (1 - y) log(1 - p).
inline WindowLoss window_loss(ad::Tape& tape, const WindowOutput& w, const BoundModel& b, const DecrlModel& model,
                              const QuerySet& queries, Rng* training_rng) {
  const auto n = queries.subjects.size();
  require(n > 0, ErrorKind::shape, "window_loss: no queries");
  const std::size_t batch = static_cast<std::size_t>(model.config.batch_size);
  ad::Var tkg;
  std::size_t batches = 0;
  for (std::size_t begin = 0; begin < n; begin += batch) {
    const std::size_t end = std::min(n, begin + batch);
    const QuerySet part = slice_queries(queries, begin, end);
    ad::Var logits = relation_logits(w, b, part.subjects, part.objects, model, training_rng);
    ad::Var l = ad::scale(ad::bce_with_logits_sum(logits, part.labels), 1.0 / static_cast<double>(end - begin));
    tkg = tkg.valid() ? ad::add(tkg, l) : l;
    ++batches;
  }
  tkg = ad::scale(tkg, 1.0 / static_cast<double>(batches));
  ad::Var temporal = model.config.ablation.no_temporal_loss ? tape.constant(Matrix::Zero(1, 1)) : w.temporal_loss;
  return {ad::total_loss(tkg, temporal, model.config.lambda), tkg, temporal};
}

// Relation probabilities for (s, o) pairs at timestamp t from its history
// window.
inline Matrix score_pairs(const DecrlModel& model, const History& history, int t, const std::vector<int>& subjects,
                          const std::vector<int>& objects) {
  const auto [first, last] = history_window(t, model.config.window);
  ad::Tape tape;
  const BoundModel b = bind_constant(tape, model);
  WindowOutput w = forward_window(tape, b, model, history, first, last);
  Matrix logits = relation_logits(w, b, subjects, objects, model, nullptr).value();
  return logits.unaryExpr([](double x) { return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); });
}

}  // namespace decrl
