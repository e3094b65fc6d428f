// Acceptance report: one PASS/FAIL/SKIP line per criterion.
//
//   acceptance [--report PATH] [--strict]
//
// Exits 0 once every criterion has been evaluated; with --strict, exits 1
// when any criterion fails.

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "decrl/decrl.hpp"
#include "support/derived_checks.hpp"
#include "support/fixtures.hpp"
#include "support/gradient_check.hpp"
#include "support/oracles.hpp"
#include "support/recovery.hpp"

namespace {

using decrl::Matrix;

enum class Status { pass, fail, skip };

struct Line {
  Status status = Status::fail;
  std::string detail;
};

std::string fmt(double v, int precision = 4) {
  std::ostringstream s;
  s << std::setprecision(precision) << v;
  return s.str();
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// Synthetic training shared by the derived checks and the recovery criterion.
struct SyntheticRun {
  decrl::SyntheticTkg data = fixtures::synthetic_tkg();
  decrl::TkgCorpus corpus = decrl::split_by_time(data.dataset);
  decrl::Checkpoint checkpoint = decrl::train(fixtures::synthetic_config(), corpus);
};

SyntheticRun& synthetic_run() {
  static SyntheticRun run;
  return run;
}

Line criterion_cmeans() {
  const auto start = std::chrono::steady_clock::now();
  std::mt19937_64 rng(501);
  std::uniform_int_distribution<int> clusters(1, 8), dims(1, 16);
  std::uniform_real_distribution<double> fuzz(1.1, 3.0);
  double worst_row = 0.0, worst_rise = 0.0;
  for (int run = 0; run < 1000; ++run) {
    const int k = clusters(rng);
    const int n = std::uniform_int_distribution<int>(std::max(k, 2), 50)(rng);
    const Matrix e = fixtures::random_matrix(n, dims(rng), rng);
    decrl::ClusteringConfig cfg;
    cfg.num_clusters = k;
    cfg.fuzzifier = fuzz(rng);
    cfg.seed = static_cast<std::uint64_t>(run);
    const auto state = decrl::fuzzy_cmeans(e, cfg);
    worst_row = std::max(worst_row, (state.membership.rowwise().sum().array() - 1.0).abs().maxCoeff());
    for (std::size_t i = 1; i < state.objective_history.size(); ++i)
      worst_rise = std::max(worst_rise, state.objective_history[i] - state.objective_history[i - 1]);
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  const bool ok = worst_row <= 1e-6 && worst_rise <= 1e-9 && secs < 60.0;
  return {ok ? Status::pass : Status::fail, "1000 runs, max |row sum - 1| " + fmt(worst_row) +
                                                " (tol 1e-6), max J rise " + fmt(worst_rise) + " (tol 1e-9), " +
                                                fmt(secs, 3) + " s (limit 60 s)"};
}

Line criterion_hungarian() {
  std::mt19937_64 rng(502);
  std::uniform_int_distribution<int> size(1, 7);
  int exact = 0;
  for (int run = 0; run < 1000; ++run) {
    const int k = size(rng);
    const Matrix a = fixtures::random_matrix(k, k, rng);
    const auto got = decrl::hungarian_match(a);
    const auto want = oracle::best_assignment(a);
    double total = 0.0;
    for (int i = 0; i < k; ++i) total += a(i, got.permutation[static_cast<std::size_t>(i)]);
    if (total == want.total && got.total == want.total) ++exact;
  }
  return {exact == 1000 ? Status::pass : Status::fail,
          std::to_string(exact) + "/1000 totals equal to exhaustive search"};
}

Line criterion_gradients() {
  const auto r = gradcheck::run(20, 1e-4, 2024);
  const auto worst = std::max_element(r.samples.begin(), r.samples.end(),
                                      [](const auto& a, const auto& b) { return a.relative_error < b.relative_error; });
  return {r.max_relative_error <= 1e-3 ? Status::pass : Status::fail,
          "20 scalars, max relative error " + fmt(r.max_relative_error) + " at " + worst->parameter + "[" +
              std::to_string(worst->index) + "] (tol 1e-3, step 1e-4)"};
}

Line criterion_derived(derived::Context& ctx) {
  const auto checks = derived::all_checks();
  int passed = 0;
  std::string failed;
  for (const auto& c : checks) {
    const auto out = c.run(ctx);
    std::cerr << "  " << (out.pass ? "ok   " : "FAIL ") << c.name << ": " << out.detail << "\n";
    if (out.pass) {
      ++passed;
    } else {
      failed += (failed.empty() ? "" : ", ") + c.name;
    }
  }
  std::string d = std::to_string(passed) + "/" + std::to_string(checks.size()) + " derived examples reproduced";
  if (!failed.empty()) d += "; failing: " + failed;
  return {passed == static_cast<int>(checks.size()) ? Status::pass : Status::fail, d};
}

Line criterion_synthetic() {
  auto& run = synthetic_run();
  const auto& h = run.checkpoint.history;
  const double first = h.front().loss, last = h.back().loss;
  const bool a = last <= 0.5 * first;

  const auto history = decrl::History::from(run.corpus);
  const double mrr = decrl::evaluate(run.checkpoint.model, history, run.corpus.test, decrl::FilterMode::raw).mrr;
  const double baseline = decrl::random_baseline_mrr(run.corpus.train.num_relations(), 1000, 77);
  const bool b = mrr >= 3.0 * baseline;

  const auto rec = recovery::planted_correspondence(run.checkpoint.model, history, run.data.membership);
  const bool c = rec.fraction() >= 0.95;

  return {a && b && c ? Status::pass : Status::fail,
          std::string("(a) ") + (a ? "ok" : "FAIL") + " loss " + fmt(first) + " -> " + fmt(last) + "; (b) " +
              (b ? "ok" : "FAIL") + " test MRR " + fmt(mrr) + " vs 3 x " + fmt(baseline) + "; (c) " +
              (c ? "ok" : "FAIL") + " correspondence recovered at " + std::to_string(rec.recovered) + "/" +
              std::to_string(rec.total) + " timestamps (need 95%)"};
}

Line criterion_fusion_ablation() {
  std::vector<double> full, ablated;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto data = fixtures::synthetic_tkg();
    const auto corpus = decrl::split_by_time(data.dataset);
    const auto history = decrl::History::from(corpus);
    auto cfg = fixtures::synthetic_config(seed);
    cfg.lambda = 0.2;
    for (bool fusion : {true, false}) {
      cfg.ablation.no_fusion = !fusion;
      const auto ck = decrl::train(cfg, corpus);
      const double mrr = decrl::evaluate(ck.model, history, corpus.test, decrl::FilterMode::raw).mrr;
      (fusion ? full : ablated).push_back(mrr);
      std::cerr << "  seed " << seed << (fusion ? " full " : " no_fusion ") << mrr << "\n";
    }
  }
  const double mf = median(full), ma = median(ablated);
  return {mf >= ma ? Status::pass : Status::fail,
          "median test MRR over seeds 1..5: full " + fmt(mf) + ", no_fusion " + fmt(ma)};
}

Line criterion_ranking() {
  std::mt19937_64 rng(507);
  std::uniform_int_distribution<int> rels(2, 30);
  int exact = 0;
  for (int set = 0; set < 100; ++set) {
    const int n = rels(rng);
    std::uniform_int_distribution<int> level(0, n), pick(0, n - 1);
    std::vector<decrl::ScoredQuery> qs(20);
    for (auto& q : qs) {
      for (int j = 0; j < n; ++j) q.scores.push_back(level(rng) / static_cast<double>(n));
      q.query.relation = pick(rng);
    }
    const auto report = decrl::rank_metrics(qs, decrl::FilterMode::raw);
    std::vector<int> ranks;
    bool same = true;
    for (std::size_t i = 0; i < qs.size(); ++i) {
      ranks.push_back(oracle::sorted_rank(qs[i].scores, qs[i].query.relation, {}));
      same = same && report.queries[i].rank == ranks.back();
    }
    const auto m = oracle::metrics_from_ranks(ranks);
    if (same && m.mrr == report.mrr && m.hits1 == report.hits1 && m.hits3 == report.hits3 &&
        m.hits10 == report.hits10)
      ++exact;
  }
  std::vector<decrl::ScoredQuery> perfect(5);
  for (int i = 0; i < 5; ++i) {
    perfect[static_cast<std::size_t>(i)].scores.assign(5, 0.0);
    perfect[static_cast<std::size_t>(i)].scores[static_cast<std::size_t>(i)] = 1.0;
    perfect[static_cast<std::size_t>(i)].query.relation = i;
  }
  const auto p = decrl::rank_metrics(perfect, decrl::FilterMode::raw);
  const bool toy = p.mrr == 1.0 && p.hits1 == 1.0;
  return {exact == 100 && toy ? Status::pass : Status::fail,
          std::to_string(exact) + "/100 score sets equal to the sort oracle; perfect toy MRR " + fmt(p.mrr) +
              ", Hits@1 " + fmt(p.hits1)};
}

// The first `n` timestamps of the merged timeline, re-split 8:1:1.
decrl::TkgCorpus first_timestamps(const decrl::TkgCorpus& corpus, int n) {
  decrl::TkgDataset all = corpus.timeline();
  n = std::min(n, all.num_timestamps());
  all.groups.resize(static_cast<std::size_t>(n));
  all.time_values.resize(static_cast<std::size_t>(n));
  return decrl::split_by_time(all, 0.8, 0.1);
}

double frequency_baseline_mrr(const decrl::TkgCorpus& corpus) {
  std::vector<double> freq(static_cast<std::size_t>(corpus.train.num_relations()), 0.0);
  for (const auto& q : corpus.train.flatten()) freq[static_cast<std::size_t>(q.relation)] += 1.0;
  std::vector<decrl::ScoredQuery> qs;
  for (int t : corpus.test.active_timestamps())
    for (const auto& q : corpus.test.at(t)) qs.push_back({q, freq, {}});
  return decrl::rank_metrics(qs, decrl::FilterMode::raw).mrr;
}

Line criterion_icews14c() {
  const char* dir = std::getenv("DECRL_ICEWS14C_DIR");
  if (!dir || !*dir) return {Status::skip, "DECRL_ICEWS14C_DIR not set"};
  const std::filesystem::path root(dir);
  decrl::CorpusPaths paths{root / "train.txt", root / "valid.txt", root / "test.txt", std::nullopt, std::nullopt};
  if (std::filesystem::exists(root / "entity2id.txt")) paths.entity_map = root / "entity2id.txt";
  if (std::filesystem::exists(root / "relation2id.txt")) paths.relation_map = root / "relation2id.txt";
  const auto corpus = first_timestamps(decrl::load_corpus(paths), 10);

  decrl::RunConfig cfg;
  decrl::apply_preset(cfg, "icews14c");
  cfg.dim = 64;
  cfg.decoder_channels = 16;
  cfg.epochs = 10;
  cfg.patience = 10;
  const auto ck = decrl::train(cfg, corpus);
  const auto history = decrl::History::from(corpus);
  const double mrr = decrl::evaluate(ck.model, history, corpus.test, decrl::FilterMode::raw).mrr;
  const double base = frequency_baseline_mrr(corpus);
  return {mrr >= base ? Status::pass : Status::fail,
          "10-timestamp slice, test MRR " + fmt(mrr) + " vs relation-frequency baseline " + fmt(base)};
}

}  // namespace

int main(int argc, char** argv) {
  std::optional<std::string> report_path;
  bool strict = false;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--report" && i + 1 < argc) {
      report_path = argv[++i];
    } else if (a == "--strict") {
      strict = true;
    } else {
      std::cerr << "usage: acceptance [--report PATH] [--strict]\n";
      return 2;
    }
  }

  derived::Context ctx;
  std::ostringstream report;
  bool any_fail = false;
  auto emit = [&](int id, const Line& l) {
    const char* tag = l.status == Status::pass ? "PASS" : l.status == Status::fail ? "FAIL" : "SKIP";
    any_fail = any_fail || l.status == Status::fail;
    const std::string text = "criterion " + std::to_string(id) + " " + tag + ": " + l.detail;
    std::cout << text << std::endl;
    report << text << "\n";
  };
  auto guarded = [&](int id, auto&& fn) {
    try {
      emit(id, fn());
    } catch (const std::exception& e) {
      emit(id, {Status::fail, std::string("exception: ") + e.what()});
    }
  };

  guarded(1, criterion_cmeans);
  guarded(2, criterion_hungarian);
  guarded(3, criterion_gradients);
  guarded(4, [&] {
    ctx.synthetic_history = synthetic_run().checkpoint.history;
    return criterion_derived(ctx);
  });
  guarded(5, criterion_synthetic);
  guarded(6, criterion_fusion_ablation);
  guarded(7, criterion_ranking);
  guarded(8, criterion_icews14c);

  if (report_path) {
    std::ofstream out(*report_path);
    out << report.str();
  }
  return strict && any_fail ? 1 : 0;
}
