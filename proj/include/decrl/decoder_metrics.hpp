#pragma once

// ConvTransE relation scoring, the multi-label prediction loss, and ranking
// metrics (MRR, Hits@k) with report serialization.

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "decrl/autodiff.hpp"
#include "decrl/data_model.hpp"

namespace decrl {

struct DecoderParameters {
  Matrix conv_kernel;  // channels x (2 * kernel_size), column = input_channel * K + tap
  Matrix conv_bias;    // 1 x channels
  Matrix fc_weight;    // d x (channels * d)
  Matrix fc_bias;      // 1 x d
  double dropout = 0.0;

  int channels() const { return static_cast<int>(conv_kernel.rows()); }
  int kernel_size() const { return static_cast<int>(conv_kernel.cols() / 2); }

  static DecoderParameters zeros(int dim, int channels, int kernel_size) {
    return {Matrix::Zero(channels, 2 * kernel_size), Matrix::Zero(1, channels),
            Matrix::Zero(dim, channels * dim), Matrix::Zero(1, dim), 0.0};
  }
};

namespace ad {

struct DecoderVars {
  Var conv_kernel, conv_bias, fc_weight, fc_bias;
};

inline DecoderVars constant_decoder(Tape& t, const DecoderParameters& p) {
  return {t.constant(p.conv_kernel), t.constant(p.conv_bias), t.constant(p.fc_weight), t.constant(p.fc_bias)};
}

// Relation logits (B x N_r). The 2 x d input [e_s; e_o] is convolved
// (same padding), passed through ReLU, flattened, projected to d with ReLU,
// and scored against every relation row. Dropout is applied after the
// convolution when `dropout_rng` is set.
inline Var convtranse_logits(const Var& subjects, const Var& objects, const Var& relations, const DecoderVars& p,
                             double dropout = 0.0, Rng* dropout_rng = nullptr) {
  const Eigen::Index b = subjects.rows();
  const Eigen::Index d = subjects.cols();
  const Eigen::Index channels = p.conv_kernel.rows();
  const Eigen::Index k = p.conv_kernel.cols() / 2;
  require(objects.rows() == b && objects.cols() == d && relations.cols() == d, ErrorKind::shape,
          "convtranse: entity/relation dimension mismatch");
  require(k % 2 == 1 && p.conv_kernel.cols() == 2 * k, ErrorKind::shape, "convtranse: kernel size must be odd");
  require(p.fc_weight.rows() == d && p.fc_weight.cols() == channels * d && p.conv_bias.cols() == channels &&
              p.fc_bias.cols() == d,
          ErrorKind::shape, "convtranse: parameter shape mismatch");

  Var stacked = concat_cols({subjects, objects});  // b x 2d
  const Eigen::Index rows = b * d;
  std::vector<int> idx(static_cast<std::size_t>(rows * 2 * k));
  for (Eigen::Index c = 0; c < 2; ++c)
    for (Eigen::Index tap = 0; tap < k; ++tap) {
      const Eigen::Index col = c * k + tap;
      for (Eigen::Index s = 0; s < b; ++s)
        for (Eigen::Index pos = 0; pos < d; ++pos) {
          const Eigen::Index src = pos + tap - k / 2;
          idx[static_cast<std::size_t>((s * d + pos) + rows * col)] =
              (src < 0 || src >= d) ? -1 : static_cast<int>(s + b * (c * d + src));
        }
    }
  Var columns = gather(stacked, rows, 2 * k, std::move(idx));
  Var conv = relu(add_rowvec(matmul_nt(columns, p.conv_kernel), p.conv_bias));  // (b*d) x channels

  std::vector<int> flat(static_cast<std::size_t>(b * channels * d));
  for (Eigen::Index ch = 0; ch < channels; ++ch)
    for (Eigen::Index s = 0; s < b; ++s)
      for (Eigen::Index pos = 0; pos < d; ++pos)
        flat[static_cast<std::size_t>(s + b * (ch * d + pos))] = static_cast<int>((s * d + pos) + rows * ch);
  Var features = gather(conv, b, channels * d, std::move(flat));

  if (dropout_rng && dropout > 0.0) {
    std::bernoulli_distribution keep(1.0 - dropout);
    Matrix mask(features.rows(), features.cols());
    for (Eigen::Index i = 0; i < mask.size(); ++i) mask.data()[i] = keep(*dropout_rng) ? 1.0 / (1.0 - dropout) : 0.0;
    features = mul(features, features.tape()->constant(std::move(mask)));
  }
  Var hidden = relu(add_rowvec(matmul_nt(features, p.fc_weight), p.fc_bias));
  return matmul_nt(hidden, relations);
}

}  // namespace ad

// sigmoid(H_r ConvTransE(e_s, e_o)): independent per-relation probabilities.
inline RowVector convtranse_score(const RowVector& subject, const RowVector& object, const Matrix& relations,
                                  const DecoderParameters& params) {
  ad::Tape t;
  Matrix s = subject, o = object;
  ad::Var logits = ad::convtranse_logits(t.constant(s), t.constant(o), t.constant(relations),
                                     ad::constant_decoder(t, params));
  return ad::sigmoid(logits).value();
}

inline constexpr double kProbabilityEpsilon = 1e-7;

// -(1/S) sum_i sum_j [y log p + (1 - y) log(1 - p)], S = number of rows.
inline double prediction_loss(const Matrix& probabilities, const Matrix& labels) {
  require(probabilities.rows() == labels.rows() && probabilities.cols() == labels.cols(), ErrorKind::shape,
          "prediction_loss: shape mismatch");
  if (probabilities.rows() == 0) return 0.0;
  double total = 0.0;
  for (Eigen::Index k = 0; k < probabilities.size(); ++k) {
    const double p = std::clamp(probabilities.data()[k], kProbabilityEpsilon, 1.0 - kProbabilityEpsilon);
    const double y = labels.data()[k];
    total += y * std::log(p) + (1.0 - y) * std::log(1.0 - p);
  }
  return -total / static_cast<double>(probabilities.rows());
}

// ---------------------------------------------------------------------------
// Ranking

enum class FilterMode { raw, time_filtered };

inline std::string_view to_string(FilterMode m) { return m == FilterMode::raw ? "raw" : "time"; }

inline FilterMode parse_filter_mode(const std::string& s) {
  if (s == "raw") return FilterMode::raw;
  if (s == "time" || s == "time-filtered" || s == "time_filtered") return FilterMode::time_filtered;
  fail(ErrorKind::config, "unknown filter mode '" + s + "' (expected raw or time)");
}

struct ScoredQuery {
  Quadruple query;
  std::vector<double> scores;       // one per relation
  std::vector<int> other_true;      // other relations observed for (s, o, t)
};

struct RankedQuery {
  Quadruple query;
  int rank = 0;
};

struct EvaluationReport {
  FilterMode mode = FilterMode::raw;
  double mrr = 0.0;
  double hits1 = 0.0;
  double hits3 = 0.0;
  double hits10 = 0.0;
  std::vector<RankedQuery> queries;
};

// 1 + number of competing relations scoring at least as high as the truth
// (ties count against the model). Excluded relations do not compete.
inline int rank_of(const std::vector<double>& scores, int truth, const std::vector<int>& excluded = {}) {
  require(truth >= 0 && truth < static_cast<int>(scores.size()), ErrorKind::data,
          "rank: true relation id " + std::to_string(truth) + " has no score");
  const double target = scores[static_cast<std::size_t>(truth)];
  int rank = 1;
  for (int j = 0; j < static_cast<int>(scores.size()); ++j) {
    if (j == truth) continue;
    if (std::find(excluded.begin(), excluded.end(), j) != excluded.end()) continue;
    if (scores[static_cast<std::size_t>(j)] >= target) ++rank;
  }
  return rank;
}

inline void summarize(EvaluationReport& report) {
  const auto n = report.queries.size();
  double mrr = 0, h1 = 0, h3 = 0, h10 = 0;
  for (const auto& q : report.queries) {
    mrr += 1.0 / q.rank;
    h1 += q.rank <= 1;
    h3 += q.rank <= 3;
    h10 += q.rank <= 10;
  }
  if (n == 0) return;
  const double count = static_cast<double>(n);
  report.mrr = mrr / count;
  report.hits1 = h1 / count;
  report.hits3 = h3 / count;
  report.hits10 = h10 / count;
}

inline EvaluationReport rank_metrics(const std::vector<ScoredQuery>& queries, FilterMode mode) {
  EvaluationReport report;
  report.mode = mode;
  report.queries.reserve(queries.size());
  static const std::vector<int> none;
  for (const auto& q : queries) {
    const auto& excluded = mode == FilterMode::time_filtered ? q.other_true : none;
    report.queries.push_back({q.query, rank_of(q.scores, q.query.relation, excluded)});
  }
  summarize(report);
  return report;
}

// Expected MRR of uniformly random scores, estimated by Monte Carlo.
inline double random_baseline_mrr(int num_relations, int trials, std::uint64_t seed) {
  require(num_relations >= 1 && trials >= 1, ErrorKind::config, "random baseline: need relations and trials");
  Rng rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<int> pick(0, num_relations - 1);
  std::vector<ScoredQuery> qs(static_cast<std::size_t>(trials));
  for (auto& q : qs) {
    q.scores.resize(static_cast<std::size_t>(num_relations));
    for (double& s : q.scores) s = unit(rng);
    q.query.relation = pick(rng);
  }
  return rank_metrics(qs, FilterMode::raw).mrr;
}

inline double round2(double percent) { return std::round(percent * 100.0) / 100.0; }

inline void write_report(const EvaluationReport& r, std::ostream& out) {
  out << std::fixed << std::setprecision(2) << "mode=" << to_string(r.mode) << " queries=" << r.queries.size()
      << " MRR=" << 100.0 * r.mrr << " Hits@1=" << 100.0 * r.hits1 << " Hits@3=" << 100.0 * r.hits3
      << " Hits@10=" << 100.0 * r.hits10 << '\n';
  for (const auto& q : r.queries)
    out << q.query.subject << ',' << q.query.relation << ',' << q.query.object << ',' << q.query.timestamp << ','
        << q.rank << '\n';
}

struct ParsedReport {
  EvaluationReport report;  // aggregates recomputed from the ranks
  // Header aggregates, in percent as printed.
  double mrr = 0, hits1 = 0, hits3 = 0, hits10 = 0;
};

inline ParsedReport read_report(std::istream& in) {
  ParsedReport parsed;
  std::string header;
  require(static_cast<bool>(std::getline(in, header)), ErrorKind::parse, "report: missing header");
  std::istringstream hs(header);
  std::string token;
  std::size_t expected = 0;
  while (hs >> token) {
    const auto eq = token.find('=');
    require(eq != std::string::npos, ErrorKind::parse, "report: malformed header token '" + token + "'");
    const std::string key = token.substr(0, eq), value = token.substr(eq + 1);
    if (key == "mode") parsed.report.mode = parse_filter_mode(value);
    else if (key == "queries") expected = std::stoul(value);
    else if (key == "MRR") parsed.mrr = std::stod(value);
    else if (key == "Hits@1") parsed.hits1 = std::stod(value);
    else if (key == "Hits@3") parsed.hits3 = std::stod(value);
    else if (key == "Hits@10") parsed.hits10 = std::stod(value);
  }
  std::string line;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ls(line);
    RankedQuery q;
    char c1, c2, c3, c4;
    ls >> q.query.subject >> c1 >> q.query.relation >> c2 >> q.query.object >> c3 >> q.query.timestamp >> c4 >> q.rank;
    require(!ls.fail() && c1 == ',' && c2 == ',' && c3 == ',' && c4 == ',', ErrorKind::parse,
            "report line " + std::to_string(line_no) + ": expected s,r,o,t,rank");
    parsed.report.queries.push_back(q);
  }
  require(parsed.report.queries.size() == expected, ErrorKind::parse, "report: query count does not match header");
  summarize(parsed.report);
  return parsed;
}

}  // namespace decrl
