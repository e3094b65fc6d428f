// decrl: train, evaluate, predict and export with DECRL models.

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "decrl/decrl.hpp"

namespace fs = std::filesystem;

namespace {

std::string quoted(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c == '\n' ? ' ' : c;
  }
  return out;
}

void report_error(std::string_view kind, const std::string& message) {
  std::cerr << "error kind=" << kind << " message=\"" << quoted(message) << "\"\n";
}

// The corpus a checkpoint was trained on, reloaded from its config paths.
decrl::TkgCorpus corpus_of(const decrl::Checkpoint& ck) { return decrl::load_corpus(ck.model.config.corpus_paths()); }

struct TrainArgs {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> ablation;
  std::optional<int> epochs;
  std::optional<std::string> out;
  std::optional<std::string> log;
};

int run_train(const TrainArgs& a) {
  decrl::RunConfig cfg = decrl::load_run_config(a.config);
  if (a.seed) cfg.seed = *a.seed;
  if (a.ablation) cfg.ablation = decrl::Ablation::parse(*a.ablation);
  if (a.epochs) cfg.epochs = *a.epochs;
  if (a.out) cfg.checkpoint_path = *a.out;
  cfg.validate();
  for (fs::path* p : {&cfg.train_path, &cfg.valid_path, &cfg.test_path}) *p = fs::absolute(*p);
  if (cfg.entity_map) cfg.entity_map = fs::absolute(*cfg.entity_map);
  if (cfg.relation_map) cfg.relation_map = fs::absolute(*cfg.relation_map);
  const auto corpus = decrl::load_corpus(cfg.corpus_paths());

  std::ofstream log_file;
  std::ostream* log = &std::cout;
  if (a.log) {
    log_file.open(*a.log);
    decrl::require(log_file.good(), decrl::ErrorKind::io, "cannot write log " + *a.log);
    log = &log_file;
  }
  decrl::TrainOptions opt;
  opt.log = log;
  const auto ck = decrl::train(cfg, corpus, opt);
  decrl::save_checkpoint(ck, cfg.checkpoint_path);
  std::cout << "checkpoint=" << cfg.checkpoint_path.string() << " epoch=" << ck.epoch << '\n';
  return 0;
}

int run_evaluate(const std::string& checkpoint, const std::string& split, const std::string& filter,
                 const std::optional<std::string>& out) {
  const auto ck = decrl::load_checkpoint(fs::path(checkpoint));
  const auto corpus = corpus_of(ck);
  const auto history = decrl::History::from(corpus);
  const auto& target = split == "valid" ? corpus.valid : corpus.test;
  const auto report = decrl::evaluate(ck.model, history, target, decrl::parse_filter_mode(filter));
  if (out) {
    std::ofstream f(*out);
    decrl::require(f.good(), decrl::ErrorKind::io, "cannot write report " + *out);
    decrl::write_report(report, f);
  }
  std::ostringstream full;
  decrl::write_report(report, full);
  std::cout << full.str().substr(0, full.str().find('\n') + 1);
  return 0;
}

int run_predict(const std::string& checkpoint, const std::string& subject, const std::string& object, int t, int k) {
  const auto ck = decrl::load_checkpoint(fs::path(checkpoint));
  const auto history = decrl::History::from(corpus_of(ck));
  std::cout << std::fixed << std::setprecision(6);
  for (const auto& r : decrl::predict(ck.model, history, subject, object, t, k))
    std::cout << r.name << '\t' << r.probability << '\n';
  return 0;
}

int run_export(const std::string& checkpoint, int t, const std::string& out) {
  const auto ck = decrl::load_checkpoint(fs::path(checkpoint));
  const auto history = decrl::History::from(corpus_of(ck));
  const auto emb = decrl::entity_embeddings(ck.model, history, t);
  std::ofstream f(out);
  decrl::require(f.good(), decrl::ErrorKind::io, "cannot write " + out);
  decrl::write_embeddings(emb, history.timeline.entities, f);
  std::cout << "rows=" << emb.rows() << " dim=" << emb.cols() << '\n';
  return 0;
}

int run_synth(const std::string& spec_path, const std::string& out_dir) {
  const auto spec = decrl::synthetic_spec_from(decrl::read_key_values(spec_path));
  const auto syn = decrl::generate_synthetic_tkg(spec);
  const fs::path dir(out_dir);
  fs::create_directories(dir);
  const auto corpus = decrl::split_by_time(syn.dataset);
  decrl::save_quadruples(corpus.train, dir / "train.txt");
  decrl::save_quadruples(corpus.valid, dir / "valid.txt");
  decrl::save_quadruples(corpus.test, dir / "test.txt");
  decrl::save_vocabulary(syn.dataset.entities, dir / "entity2id.txt");
  decrl::save_vocabulary(syn.dataset.relations, dir / "relation2id.txt");

  std::ofstream m(dir / "membership.txt");
  decrl::require(m.good(), decrl::ErrorKind::io, "cannot write membership file");
  for (std::size_t t = 0; t < syn.membership.size(); ++t)
    for (std::size_t i = 0; i < syn.membership[t].size(); ++i)
      m << syn.dataset.time_values[t] << '\t' << i << '\t' << syn.membership[t][i] << '\n';

  decrl::RunConfig cfg;
  cfg.train_path = "train.txt";
  cfg.valid_path = "valid.txt";
  cfg.test_path = "test.txt";
  cfg.entity_map = "entity2id.txt";
  cfg.relation_map = "relation2id.txt";
  cfg.checkpoint_path = "decrl.ckpt";
  cfg.num_clusters = spec.num_clusters;
  std::ofstream c(dir / "config.txt");
  decrl::require(c.good(), decrl::ErrorKind::io, "cannot write config template");
  c << decrl::to_text(cfg);
  std::cout << "events=" << syn.dataset.size() << " timestamps=" << syn.dataset.num_timestamps()
            << " dir=" << dir.string() << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"DECRL temporal knowledge graph relation prediction"};
  app.require_subcommand(1);

  TrainArgs train_args;
  auto* train = app.add_subcommand("train", "train a model from a config file");
  train->add_option("--config", train_args.config, "run config (key = value)")->required();
  train->add_option("--seed", train_args.seed, "override the config seed");
  train->add_option("--ablation", train_args.ablation, "comma-separated ablation switches");
  train->add_option("--epochs", train_args.epochs, "override the epoch count");
  train->add_option("--out", train_args.out, "checkpoint path (overrides the config)");
  train->add_option("--log", train_args.log, "per-epoch log file (default stdout)");

  std::string checkpoint, split = "test", filter = "raw", subject, object, out_path;
  std::optional<std::string> report_out;
  int t = 0, topk = 10;

  auto* evaluate = app.add_subcommand("evaluate", "rank metrics on a split");
  evaluate->add_option("--checkpoint", checkpoint)->required();
  evaluate->add_option("--split", split)->check(CLI::IsMember({"valid", "test"}));
  evaluate->add_option("--filter", filter)->check(CLI::IsMember({"raw", "time"}));
  evaluate->add_option("--out", report_out, "write the per-query report here");

  auto* predict = app.add_subcommand("predict", "top-k relations for (s, ?, o, t)");
  predict->add_option("--checkpoint", checkpoint)->required();
  predict->add_option("--subject", subject)->required();
  predict->add_option("--object", object)->required();
  predict->add_option("--time", t, "compacted timestamp index")->required();
  predict->add_option("--topk", topk);

  auto* exporter = app.add_subcommand("export-embeddings", "integrated entity vectors at a timestamp");
  exporter->add_option("--checkpoint", checkpoint)->required();
  exporter->add_option("--time", t, "compacted timestamp index")->required();
  exporter->add_option("--out", out_path)->required();

  std::string spec_path, synth_dir;
  auto* synth = app.add_subcommand("synth", "generate a planted-cluster corpus");
  synth->add_option("--spec", spec_path)->required();
  synth->add_option("--out", synth_dir)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    report_error("usage", e.what());
    return 2;
  }

  try {
    if (*train) return run_train(train_args);
    if (*evaluate) return run_evaluate(checkpoint, split, filter, report_out);
    if (*predict) return run_predict(checkpoint, subject, object, t, topk);
    if (*exporter) return run_export(checkpoint, t, out_path);
    if (*synth) return run_synth(spec_path, synth_dir);
  } catch (const decrl::Error& e) {
    report_error(decrl::to_string(e.kind()), e.what());
    return 1;
  } catch (const std::exception& e) {
    report_error("internal", e.what());
    return 1;
  }
  return 1;
}
