#pragma once

// Optimization of the total loss, early stopping, evaluation, prediction and
// embedding export.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>
#include <utility>
#include <vector>

#include "decrl/model.hpp"

namespace decrl {

class Adam {
 public:
  explicit Adam(double learning_rate, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(learning_rate), b1_(beta1), b2_(beta2), eps_(eps) {}

  // Updates every parameter from its accumulated gradient. Values are kept
  // representable in single precision so checkpoints round-trip exactly.
  void step(ad::ParameterStore& params) {
    if (m_.empty())
      for (std::size_t i = 0; i < params.size(); ++i) {
        m_.push_back(Matrix::Zero(params[i].value.rows(), params[i].value.cols()));
        v_.push_back(m_.back());
      }
    ++t_;
    const double c1 = 1.0 - std::pow(b1_, t_);
    const double c2 = 1.0 - std::pow(b2_, t_);
    for (std::size_t i = 0; i < params.size(); ++i) {
      ad::Parameter& p = params[i];
      m_[i] = b1_ * m_[i] + (1.0 - b1_) * p.grad;
      v_[i] = b2_ * v_[i] + (1.0 - b2_) * p.grad.cwiseAbs2();
      p.value.array() -= lr_ * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + eps_);
      round_to_float(p.value);
    }
  }

  int steps() const { return t_; }

 private:
  double lr_, b1_, b2_, eps_;
  int t_ = 0;
  std::vector<Matrix> m_, v_;
};

inline double gradient_norm(const ad::ParameterStore& params) {
  double sq = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) sq += params[i].grad.squaredNorm();
  return std::sqrt(sq);
}

inline void clip_gradients(ad::ParameterStore& params, double max_norm) {
  if (max_norm <= 0.0) return;
  const double norm = gradient_norm(params);
  if (norm <= max_norm) return;
  const double s = max_norm / norm;
  for (std::size_t i = 0; i < params.size(); ++i) params[i].grad *= s;
}

struct EpochRecord {
  int epoch = 0;
  double loss = 0.0;
  double tkg_loss = 0.0;
  double temporal_loss = 0.0;
  double valid_mrr = std::numeric_limits<double>::quiet_NaN();
};

struct ClusterSnapshot {
  int timestamp = 0;
  Matrix membership;  // aligned U, N_e x N_c
  Matrix clusters;    // fused cluster representations, N_c x d
};

struct Checkpoint {
  DecrlModel model;
  int epoch = 0;  // epoch whose parameters were kept
  std::vector<EpochRecord> history;
  Matrix final_entities;   // integrated representations after the last training timestamp
  Matrix final_relations;
  std::vector<ClusterSnapshot> cluster_states;
};

// Inference-mode pass over [first, last] with no attention cut-off: the
// cluster states of every timestamp in the range.
inline std::vector<ClusterSnapshot> trace_clusters(const DecrlModel& model, const History& history, int first,
                                                   int last) {
  ad::Tape tape;
  const BoundModel b = bind_constant(tape, model);
  const WindowOutput w = forward_window(tape, b, model, history, first, last);
  std::vector<ClusterSnapshot> out;
  for (const auto& s : w.steps) out.push_back({s.timestamp, s.membership.value(), s.clusters.value()});
  return out;
}

// Global centroids in the current embedding space: mean RGCN output over the
// window ending at `last`, averaged over each spectral part.
inline Matrix global_centroids(const DecrlModel& model, const History& history, int last) {
  const int first = std::max(0, last - model.config.window + 1);
  ad::Tape tape;
  const BoundModel b = bind_constant(tape, model);
  const WindowOutput w = forward_window(tape, b, model, history, first, last);
  Matrix mean = Matrix::Zero(model.num_entities, model.dim());
  for (const auto& s : w.steps) mean += s.encoded.value();
  mean /= static_cast<double>(w.steps.size());
  Matrix c = part_centroids(model.global.partition.assignment, model.config.num_clusters, mean);
  round_to_float(c);
  return c;
}

// Relation scores for every quadruple of `split` at timestamps with history.
inline std::vector<ScoredQuery> score_split(const DecrlModel& model, const History& history,
                                            const TkgDataset& split) {
  std::vector<ScoredQuery> scored;
  for (int t : split.active_timestamps()) {
    if (t < 1) continue;
    const auto& events = split.at(t);
    const QuerySet pairs = pair_queries(events, t, model.num_relations);
    const Matrix probs = score_pairs(model, history, t, pairs.subjects, pairs.objects);
    std::map<std::pair<int, int>, Eigen::Index> row_of;
    for (std::size_t i = 0; i < pairs.subjects.size(); ++i)
      row_of[{pairs.subjects[i], pairs.objects[i]}] = static_cast<Eigen::Index>(i);
    std::map<std::pair<int, int>, std::vector<int>> truths;
    for (const auto& q : history.timeline.at(t)) truths[{q.subject, q.object}].push_back(q.relation);
    for (const auto& q : events) {
      ScoredQuery sq;
      sq.query = q;
      const Eigen::Index row = row_of.at({q.subject, q.object});
      sq.scores.resize(static_cast<std::size_t>(model.num_relations));
      for (int r = 0; r < model.num_relations; ++r) sq.scores[static_cast<std::size_t>(r)] = probs(row, r);
      for (int r : truths[{q.subject, q.object}])
        if (r != q.relation && std::find(sq.other_true.begin(), sq.other_true.end(), r) == sq.other_true.end())
          sq.other_true.push_back(r);
      scored.push_back(std::move(sq));
    }
  }
  return scored;
}

inline EvaluationReport evaluate(const DecrlModel& model, const History& history, const TkgDataset& split,
                                 FilterMode mode) {
  return rank_metrics(score_split(model, history, split), mode);
}

struct TrainOptions {
  std::ostream* log = nullptr;
  // Parameter values after every optimizer step, for trajectory comparisons.
  std::vector<std::vector<Matrix>>* trajectory = nullptr;
};

// One optimizer step per training timestamp (in a seeded shuffled order),
// early stopping on validation MRR, and the best-validation parameters kept.
inline Checkpoint train(const RunConfig& cfg, const TkgCorpus& corpus, const TrainOptions& opt = {}) {
  cfg.validate();
  const History history = History::from(corpus);
  Checkpoint ck;
  ck.model = DecrlModel(cfg, corpus.train.num_entities(), corpus.train.num_relations(),
                        total_in_degrees(corpus.train));
  DecrlModel& model = ck.model;

  std::vector<int> train_times;
  for (int t : corpus.train.active_timestamps())
    if (t >= 1) train_times.push_back(t);
  require(!train_times.empty(), ErrorKind::data, "training split needs events after its first timestamp");
  const int last_train = corpus.train.active_timestamps().back();

  std::map<int, QuerySet> queries;
  for (int t : train_times) queries[t] = pair_queries(corpus.train.at(t), t, model.num_relations);

  if (!cfg.ablation.no_global_graph)
    model.global.partition =
        spectral_partition(build_global_graph(corpus.train), cfg.num_clusters, mix_seed(cfg.seed, 0x61));

  const bool has_valid = corpus.valid.size() > 0;
  Rng rng(mix_seed(cfg.seed, 1));
  Adam adam(cfg.learning_rate);
  double best_score = -std::numeric_limits<double>::infinity();
  std::vector<Matrix> best_values = model.parameter_values();
  Matrix best_global = model.global.centroids;
  int since_best = 0;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    if (!cfg.ablation.no_global_graph) model.global.centroids = global_centroids(model, history, last_train);
    const Matrix epoch_global = model.global.centroids;

    std::vector<int> order = train_times;
    std::shuffle(order.begin(), order.end(), rng);
    EpochRecord rec;
    rec.epoch = epoch;
    for (int t : order) {
      const auto [first, last] = history_window(t, cfg.window);
      ad::Tape tape;
      const BoundModel b = bind(tape, model, true);
      ForwardOptions fo;
      fo.training_rng = &rng;
      const WindowOutput w = forward_window(tape, b, model, history, first, last, fo);
      const WindowLoss loss = window_loss(tape, w, b, model, queries.at(t), &rng);
      const double value = loss.total.scalar();
      require(std::isfinite(value), ErrorKind::divergence,
              "non-finite loss at epoch " + std::to_string(epoch) + ", timestamp " + std::to_string(t));
      model.params.zero_grad();
      tape.backward(loss.total);
      require(std::isfinite(gradient_norm(model.params)), ErrorKind::divergence,
              "non-finite gradient at epoch " + std::to_string(epoch) + ", timestamp " + std::to_string(t));
      clip_gradients(model.params, cfg.grad_clip);
      adam.step(model.params);
      for (std::size_t i = 0; i < model.params.size(); ++i)
        require(model.params[i].value.allFinite(), ErrorKind::divergence,
                "parameter " + model.params[i].name + " became non-finite at epoch " + std::to_string(epoch) +
                    ", timestamp " + std::to_string(t));
      if (opt.trajectory) opt.trajectory->push_back(model.parameter_values());
      rec.loss += value;
      rec.tkg_loss += loss.tkg.scalar();
      rec.temporal_loss += loss.temporal.scalar();
    }
    const double n = static_cast<double>(order.size());
    rec.loss /= n;
    rec.tkg_loss /= n;
    rec.temporal_loss /= n;
    if (has_valid) rec.valid_mrr = evaluate(model, history, corpus.valid, FilterMode::raw).mrr;
    ck.history.push_back(rec);
    if (opt.log) {
      *opt.log << std::fixed << std::setprecision(6) << "epoch=" << epoch << " loss=" << rec.loss
               << " tkg_loss=" << rec.tkg_loss << " temporal_loss=" << rec.temporal_loss;
      if (has_valid) *opt.log << " valid_mrr=" << std::setprecision(4) << 100.0 * rec.valid_mrr;
      *opt.log << '\n' << std::flush;
    }
    const double score = has_valid ? rec.valid_mrr : -rec.loss;
    if (score > best_score) {
      best_score = score;
      best_values = model.parameter_values();
      best_global = epoch_global;
      ck.epoch = epoch;
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      break;
    }
  }

  model.set_parameter_values(best_values);
  model.global.centroids = best_global;

  const auto [first, last] = std::pair{std::max(0, last_train - cfg.window + 1), last_train};
  {
    ad::Tape tape;
    const BoundModel b = bind_constant(tape, model);
    const WindowOutput w = forward_window(tape, b, model, history, first, last);
    ck.final_entities = w.entities.value();
    ck.final_relations = w.relations.value();
  }
  ck.cluster_states = trace_clusters(model, history, 0, last_train);
  return ck;
}

struct RankedRelation {
  int id = 0;
  std::string name;
  double probability = 0.0;
};

// Top-k relations for (s, ?, o, t), by descending probability (ties by id).
inline std::vector<RankedRelation> predict(const DecrlModel& model, const History& history, const std::string& subject,
                                           const std::string& object, int t, int k) {
  const auto& ents = history.timeline.entities;
  const auto s = ents.find(subject);
  const auto o = ents.find(object);
  require(s.has_value(), ErrorKind::vocabulary, "unknown entity '" + subject + "'");
  require(o.has_value(), ErrorKind::vocabulary, "unknown entity '" + object + "'");
  require(t >= 1 && t <= history.num_timestamps(), ErrorKind::range,
          "time " + std::to_string(t) + " outside [1, " + std::to_string(history.num_timestamps()) + "]");
  require(k >= 1, ErrorKind::range, "topk must be positive");
  History extended;
  const History* h = &history;
  if (t == history.num_timestamps()) {
    // Forecasting one step past the timeline only needs its trailing window.
    extended = history;
    extended.timeline.groups.emplace_back();
    extended.timeline.time_values.push_back(history.timeline.time_values.back() + 1);
    extended.snapshots.push_back(build_snapshot(extended.timeline, t));
    h = &extended;
  }
  const Matrix probs = score_pairs(model, *h, t, {*s}, {*o});
  std::vector<RankedRelation> ranked;
  for (int r = 0; r < model.num_relations; ++r)
    ranked.push_back({r, history.timeline.relations.name(r), probs(0, r)});
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const RankedRelation& a, const RankedRelation& b) { return a.probability > b.probability; });
  ranked.resize(std::min<std::size_t>(ranked.size(), static_cast<std::size_t>(k)));
  return ranked;
}

// Integrated entity representations of the window ending at t (inclusive).
inline Matrix entity_embeddings(const DecrlModel& model, const History& history, int t) {
  require(t >= 0 && t < history.num_timestamps(), ErrorKind::range, "time " + std::to_string(t) + " out of range");
  ad::Tape tape;
  const BoundModel b = bind_constant(tape, model);
  const int first = std::max(0, t - model.config.window + 1);
  return forward_window(tape, b, model, history, first, t).entities.value();
}

// Rows `id<TAB>name<TAB>v_1<TAB>...<TAB>v_d`, ascending id, 6 decimals.
inline void write_embeddings(const Matrix& embeddings, const Vocabulary& entities, std::ostream& out) {
  require(embeddings.rows() == entities.size(), ErrorKind::shape, "embedding rows do not match the vocabulary");
  out << std::fixed << std::setprecision(6);
  for (Eigen::Index i = 0; i < embeddings.rows(); ++i) {
    out << i << '\t' << entities.name(static_cast<int>(i));
    for (Eigen::Index j = 0; j < embeddings.cols(); ++j) out << '\t' << embeddings(i, j);
    out << '\n';
  }
}

struct EmbeddingTable {
  std::vector<int> ids;
  std::vector<std::string> names;
  Matrix vectors;
};

inline EmbeddingTable read_embeddings(std::istream& in) {
  EmbeddingTable t;
  std::vector<std::vector<double>> rows;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto fields = detail::split_tabs(line);
    require(fields.size() >= 3, ErrorKind::parse, "embeddings line " + std::to_string(line_no) + ": too few fields");
    t.ids.push_back(static_cast<int>(detail::parse_integer(fields[0], "embeddings:" + std::to_string(line_no))));
    t.names.push_back(fields[1]);
    std::vector<double> v;
    for (std::size_t k = 2; k < fields.size(); ++k) v.push_back(std::stod(fields[k]));
    require(rows.empty() || v.size() == rows.front().size(), ErrorKind::parse,
            "embeddings line " + std::to_string(line_no) + ": dimension differs");
    rows.push_back(std::move(v));
  }
  t.vectors = Matrix(static_cast<Eigen::Index>(rows.size()), rows.empty() ? 0 : static_cast<Eigen::Index>(rows[0].size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j) t.vectors(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  return t;
}

}  // namespace decrl
