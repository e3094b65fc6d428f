#pragma once

// Flat `key = value` configuration files for training runs and synthetic
// dataset specs.

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "decrl/data_model.hpp"
#include "decrl/decoder_metrics.hpp"
#include "decrl/error.hpp"
#include "decrl/evolutionary_clustering.hpp"

namespace decrl {

using KeyValues = std::map<std::string, std::string>;

inline KeyValues parse_key_values(std::istream& in, const std::string& source = "config") {
  KeyValues kv;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    require(eq != std::string::npos, ErrorKind::config,
            source + ":" + std::to_string(line_no) + ": expected 'key = value'");
    kv[detail::trim(line.substr(0, eq))] = detail::trim(line.substr(eq + 1));
  }
  return kv;
}

inline KeyValues read_key_values(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(in.good(), ErrorKind::io, "cannot open " + path.string());
  return parse_key_values(in, path.filename().string());
}

namespace detail {

class KeyReader {
 public:
  explicit KeyReader(KeyValues kv) : kv_(std::move(kv)) {}

  template <class T>
  void read(const std::string& key, T& target) {
    auto it = kv_.find(key);
    if (it == kv_.end()) return;
    const std::string value = it->second;
    kv_.erase(it);
    std::istringstream in(value);
    if constexpr (std::is_same_v<T, bool>) {
      if (value == "true" || value == "1" || value == "yes") target = true;
      else if (value == "false" || value == "0" || value == "no") target = false;
      else fail(ErrorKind::config, "key '" + key + "': expected a boolean, got '" + value + "'");
      return;
    } else if constexpr (std::is_same_v<T, std::string>) {
      target = value;
      return;
    } else {
      T parsed{};
      in >> parsed;
      require(!in.fail() && in.eof(), ErrorKind::config, "key '" + key + "': cannot parse '" + value + "'");
      target = parsed;
    }
  }

  std::optional<std::string> take(const std::string& key) {
    auto it = kv_.find(key);
    if (it == kv_.end()) return std::nullopt;
    std::string v = it->second;
    kv_.erase(it);
    return v;
  }

  void finish(const std::string& what) const {
    if (!kv_.empty()) fail(ErrorKind::config, what + ": unknown key '" + kv_.begin()->first + "'");
  }

 private:
  KeyValues kv_;
};

}  // namespace detail

struct Ablation {
  bool no_alignment = false;
  bool no_fusion = false;
  bool no_ice = false;
  bool no_global_graph = false;
  bool no_temporal_loss = false;

  friend bool operator==(const Ablation&, const Ablation&) = default;

  // Comma-separated switch names, e.g. "no_fusion,no_ICE"; "none" clears.
  static Ablation parse(const std::string& text) {
    Ablation a;
    std::istringstream in(text);
    std::string item;
    while (std::getline(in, item, ',')) {
      item = detail::trim(item);
      for (char& c : item) c = c == '-' ? '_' : static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
      if (item.empty() || item == "none") continue;
      if (item == "no_alignment") a.no_alignment = true;
      else if (item == "no_fusion") a.no_fusion = true;
      else if (item == "no_ice") a.no_ice = true;
      else if (item == "no_global_graph") a.no_global_graph = true;
      else if (item == "no_temporal_loss" || item == "no_l_temporal") a.no_temporal_loss = true;
      else fail(ErrorKind::config, "unknown ablation switch '" + item + "'");
    }
    return a;
  }

  std::string to_string() const {
    std::vector<std::string> on;
    if (no_alignment) on.push_back("no_alignment");
    if (no_fusion) on.push_back("no_fusion");
    if (no_ice) on.push_back("no_ICE");
    if (no_global_graph) on.push_back("no_global_graph");
    if (no_temporal_loss) on.push_back("no_temporal_loss");
    if (on.empty()) return "none";
    std::string s = on.front();
    for (std::size_t i = 1; i < on.size(); ++i) s += "," + on[i];
    return s;
  }
};

struct RunConfig {
  std::filesystem::path train_path;
  std::filesystem::path valid_path;
  std::filesystem::path test_path;
  std::optional<std::filesystem::path> entity_map;
  std::optional<std::filesystem::path> relation_map;
  std::filesystem::path checkpoint_path = "decrl.ckpt";

  int dim = 200;
  double learning_rate = 0.01;
  int batch_size = 16;
  int num_clusters = 6;
  int num_layers = 2;
  int window = 7;
  double lambda = 0.2;
  double beta = 0.5;
  double fuzzifier = 2.0;
  double cmeans_tolerance = 1e-6;
  int cmeans_max_iterations = 100;
  int cmeans_restarts = 1;
  CentroidInit centroid_init = CentroidInit::kmeans_plus_plus;
  int decoder_channels = 50;
  int decoder_kernel = 3;
  double dropout = 0.2;
  double grad_clip = 1.0;  // global gradient-norm clip, 0 disables
  std::uint64_t seed = 1;
  int epochs = 50;
  int patience = 10;
  FilterMode eval_filter = FilterMode::raw;
  Ablation ablation;

  void validate() const {
    require(lambda >= 0.0 && lambda <= 1.0, ErrorKind::config, "lambda must lie in [0,1]");
    require(beta >= 0.0 && beta <= 1.0, ErrorKind::config, "beta must lie in [0,1]");
    require(fuzzifier > 1.0, ErrorKind::config, "fuzzifier must exceed 1");
    require(cmeans_tolerance > 0.0, ErrorKind::config, "cmeans_tolerance must be positive");
    require(dim > 0 && batch_size > 0 && num_clusters > 0 && num_layers > 0 && window > 0 &&
                cmeans_max_iterations > 0 && cmeans_restarts > 0 && decoder_channels > 0 && epochs > 0 && patience > 0,
            ErrorKind::config, "counts must be positive");
    require(decoder_kernel > 0 && decoder_kernel % 2 == 1, ErrorKind::config, "decoder_kernel must be odd");
    require(learning_rate > 0.0, ErrorKind::config, "learning_rate must be positive");
    require(dropout >= 0.0 && dropout < 1.0, ErrorKind::config, "dropout must lie in [0,1)");
    require(grad_clip >= 0.0, ErrorKind::config, "grad_clip must be non-negative");
  }

  CorpusPaths corpus_paths() const { return {train_path, valid_path, test_path, entity_map, relation_map}; }
};

// Per-dataset defaults from the published hyper-parameter table.
inline void apply_preset(RunConfig& c, const std::string& name) {
  struct Preset {
    const char* name;
    int clusters, layers, window;
  };
  static const Preset presets[] = {{"icews14", 14, 2, 9}, {"icews14c", 6, 2, 7},  {"icews18", 18, 5, 4},
                                   {"icews18c", 8, 2, 10}, {"gdelt", 16, 5, 2},  {"wiki", 18, 2, 2},
                                   {"yago", 16, 1, 1}};
  for (const auto& p : presets)
    if (name == p.name) {
      c.num_clusters = p.clusters;
      c.num_layers = p.layers;
      c.window = p.window;
      c.lambda = 0.2;
      return;
    }
  fail(ErrorKind::config, "unknown preset '" + name + "'");
}

// Relative paths are resolved against `base_dir`.
inline RunConfig run_config_from(const KeyValues& kv, const std::filesystem::path& base_dir = {}) {
  RunConfig c;
  detail::KeyReader r(kv);
  if (auto preset = r.take("preset")) apply_preset(c, *preset);
  auto path_key = [&](const std::string& key, std::filesystem::path& target) {
    if (auto v = r.take(key)) {
      std::filesystem::path p(*v);
      target = p.is_relative() && !base_dir.empty() ? base_dir / p : p;
    }
  };
  path_key("train", c.train_path);
  path_key("valid", c.valid_path);
  path_key("test", c.test_path);
  path_key("checkpoint", c.checkpoint_path);
  std::filesystem::path tmp;
  if (kv.count("entity_map")) {
    path_key("entity_map", tmp);
    c.entity_map = tmp;
  }
  if (kv.count("relation_map")) {
    path_key("relation_map", tmp);
    c.relation_map = tmp;
  }
  r.read("dim", c.dim);
  r.read("learning_rate", c.learning_rate);
  r.read("batch_size", c.batch_size);
  r.read("num_clusters", c.num_clusters);
  r.read("num_layers", c.num_layers);
  r.read("window", c.window);
  r.read("lambda", c.lambda);
  r.read("beta", c.beta);
  r.read("fuzzifier", c.fuzzifier);
  r.read("cmeans_tolerance", c.cmeans_tolerance);
  r.read("cmeans_max_iterations", c.cmeans_max_iterations);
  r.read("cmeans_restarts", c.cmeans_restarts);
  if (auto v = r.take("centroid_init")) {
    if (*v == "kmeans++") c.centroid_init = CentroidInit::kmeans_plus_plus;
    else if (*v == "warm") c.centroid_init = CentroidInit::warm_start;
    else fail(ErrorKind::config, "centroid_init must be kmeans++ or warm");
  }
  r.read("decoder_channels", c.decoder_channels);
  r.read("decoder_kernel", c.decoder_kernel);
  r.read("dropout", c.dropout);
  r.read("grad_clip", c.grad_clip);
  r.read("seed", c.seed);
  r.read("epochs", c.epochs);
  r.read("patience", c.patience);
  if (auto v = r.take("eval_filter")) c.eval_filter = parse_filter_mode(*v);
  if (auto v = r.take("ablation")) c.ablation = Ablation::parse(*v);
  r.finish("run config");
  c.validate();
  return c;
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
  return run_config_from(read_key_values(path), path.parent_path());
}

inline std::string to_text(const RunConfig& c) {
  std::ostringstream out;
  out.precision(17);
  out << "train = " << c.train_path.string() << '\n'
      << "valid = " << c.valid_path.string() << '\n'
      << "test = " << c.test_path.string() << '\n';
  if (c.entity_map) out << "entity_map = " << c.entity_map->string() << '\n';
  if (c.relation_map) out << "relation_map = " << c.relation_map->string() << '\n';
  out << "checkpoint = " << c.checkpoint_path.string() << '\n'
      << "dim = " << c.dim << '\n'
      << "learning_rate = " << c.learning_rate << '\n'
      << "batch_size = " << c.batch_size << '\n'
      << "num_clusters = " << c.num_clusters << '\n'
      << "num_layers = " << c.num_layers << '\n'
      << "window = " << c.window << '\n'
      << "lambda = " << c.lambda << '\n'
      << "beta = " << c.beta << '\n'
      << "fuzzifier = " << c.fuzzifier << '\n'
      << "cmeans_tolerance = " << c.cmeans_tolerance << '\n'
      << "cmeans_max_iterations = " << c.cmeans_max_iterations << '\n'
      << "cmeans_restarts = " << c.cmeans_restarts << '\n'
      << "centroid_init = " << (c.centroid_init == CentroidInit::warm_start ? "warm" : "kmeans++") << '\n'
      << "decoder_channels = " << c.decoder_channels << '\n'
      << "decoder_kernel = " << c.decoder_kernel << '\n'
      << "dropout = " << c.dropout << '\n'
      << "grad_clip = " << c.grad_clip << '\n'
      << "seed = " << c.seed << '\n'
      << "epochs = " << c.epochs << '\n'
      << "patience = " << c.patience << '\n'
      << "eval_filter = " << to_string(c.eval_filter) << '\n'
      << "ablation = " << c.ablation.to_string() << '\n';
  return out.str();
}

inline SyntheticSpec synthetic_spec_from(const KeyValues& kv) {
  SyntheticSpec s;
  detail::KeyReader r(kv);
  r.read("num_entities", s.num_entities);
  r.read("num_relations", s.num_relations);
  r.read("num_timestamps", s.num_timestamps);
  r.read("num_clusters", s.num_clusters);
  r.read("drift_probability", s.drift_probability);
  r.read("intra_rate", s.intra_rate);
  r.read("inter_rate", s.inter_rate);
  r.read("seed", s.seed);
  r.finish("synthetic spec");
  return s;
}

inline std::string to_text(const SyntheticSpec& s) {
  std::ostringstream out;
  out.precision(17);
  out << "num_entities = " << s.num_entities << '\n'
      << "num_relations = " << s.num_relations << '\n'
      << "num_timestamps = " << s.num_timestamps << '\n'
      << "num_clusters = " << s.num_clusters << '\n'
      << "drift_probability = " << s.drift_probability << '\n'
      << "intra_rate = " << s.intra_rate << '\n'
      << "inter_rate = " << s.inter_rate << '\n'
      << "seed = " << s.seed << '\n';
  return out.str();
}

}  // namespace decrl
