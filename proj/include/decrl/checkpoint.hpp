#pragma once

// Single-file checkpoint archive:
//
//   DECRLCKPT 1
//   section <name> <bytes>
//   <bytes of payload>
//   ...
//
// Sections: `config` (run config text), `meta` (sizes, degree classes,
// spectral partition, epoch and metric history), `manifest` (one
// `name rows cols offset` line per tensor) and `tensors` (little-endian
// float32, column-major, at the manifest offsets).

#include <array>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "decrl/training.hpp"

namespace decrl {

inline constexpr const char* kCheckpointMagic = "DECRLCKPT";
inline constexpr int kCheckpointVersion = 1;

namespace detail {

inline void append_float_le(std::string& out, double v) {
  const float f = static_cast<float>(v);
  std::uint32_t bits;
  std::memcpy(&bits, &f, sizeof bits);
  for (int b = 0; b < 4; ++b) out.push_back(static_cast<char>((bits >> (8 * b)) & 0xffu));
}

inline float read_float_le(const char* p) {
  std::uint32_t bits = 0;
  for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(p[b])) << (8 * b);
  float f;
  std::memcpy(&f, &bits, sizeof f);
  return f;
}

template <class Seq>
void write_ints(std::ostream& out, const std::string& key, const Seq& values) {
  out << key << ' ' << values.size();
  for (const auto& v : values) out << ' ' << v;
  out << '\n';
}

inline std::vector<int> read_ints(std::istream& in, const std::string& key) {
  std::string k;
  std::size_t n = 0;
  in >> k >> n;
  require(!in.fail() && k == key, ErrorKind::parse, "checkpoint meta: expected '" + key + "'");
  std::vector<int> v(n);
  for (auto& x : v) in >> x;
  require(!in.fail(), ErrorKind::parse, "checkpoint meta: truncated '" + key + "'");
  return v;
}

template <class T>
T read_value(std::istream& in, const std::string& key) {
  std::string k;
  T v{};
  in >> k >> v;
  require(!in.fail() && k == key, ErrorKind::parse, "checkpoint meta: expected '" + key + "'");
  return v;
}

class TensorWriter {
 public:
  void add(const std::string& name, const Matrix& m) {
    require(name.find_first_of(" \t\n") == std::string::npos, ErrorKind::config, "tensor name has whitespace");
    manifest_ << name << ' ' << m.rows() << ' ' << m.cols() << ' ' << data_.size() << '\n';
    for (Eigen::Index k = 0; k < m.size(); ++k) append_float_le(data_, m.data()[k]);
  }
  std::string manifest() const { return manifest_.str(); }
  const std::string& data() const { return data_; }

 private:
  std::ostringstream manifest_;
  std::string data_;
};

inline std::vector<std::pair<std::string, Matrix>> read_tensors(const std::string& manifest, const std::string& data) {
  std::vector<std::pair<std::string, Matrix>> out;
  std::istringstream in(manifest);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string name;
    Eigen::Index rows = 0, cols = 0;
    std::size_t offset = 0;
    ls >> name >> rows >> cols >> offset;
    require(!ls.fail() && rows >= 0 && cols >= 0, ErrorKind::parse, "checkpoint manifest: malformed line '" + line + "'");
    const std::size_t bytes = static_cast<std::size_t>(rows * cols) * 4;
    require(offset + bytes <= data.size(), ErrorKind::parse, "checkpoint manifest: tensor '" + name + "' out of bounds");
    Matrix m(rows, cols);
    for (Eigen::Index k = 0; k < m.size(); ++k)
      m.data()[k] = read_float_le(data.data() + offset + static_cast<std::size_t>(k) * 4);
    out.emplace_back(name, std::move(m));
  }
  return out;
}

}  // namespace detail

inline void save_checkpoint(const Checkpoint& ck, std::ostream& out) {
  const DecrlModel& model = ck.model;
  std::ostringstream meta;
  meta.precision(17);
  meta << "num_entities " << model.num_entities << '\n'
       << "num_relations " << model.num_relations << '\n'
       << "epoch " << ck.epoch << '\n';
  detail::write_ints(meta, "degree_values", model.degree_classes.degree_values);
  detail::write_ints(meta, "class_of_entity", model.degree_classes.class_of_entity);
  detail::write_ints(meta, "partition", model.global.partition.assignment);
  meta << "history " << ck.history.size() << '\n';
  for (const auto& r : ck.history)
    meta << r.epoch << ' ' << r.loss << ' ' << r.tkg_loss << ' ' << r.temporal_loss << ' ' << r.valid_mrr << '\n';
  std::vector<int> cluster_times;
  for (const auto& c : ck.cluster_states) cluster_times.push_back(c.timestamp);
  detail::write_ints(meta, "cluster_timestamps", cluster_times);

  detail::TensorWriter tensors;
  for (std::size_t i = 0; i < model.params.size(); ++i) tensors.add("param:" + model.params[i].name, model.params[i].value);
  tensors.add("global.centroids", model.global.centroids);
  tensors.add("global.embedding", model.global.partition.embedding);
  tensors.add("final.entities", ck.final_entities);
  tensors.add("final.relations", ck.final_relations);
  for (const auto& c : ck.cluster_states) {
    tensors.add("cluster." + std::to_string(c.timestamp) + ".membership", c.membership);
    tensors.add("cluster." + std::to_string(c.timestamp) + ".clusters", c.clusters);
  }

  auto section = [&out](const std::string& name, const std::string& payload) {
    out << "section " << name << ' ' << payload.size() << '\n';
    out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  };
  out << kCheckpointMagic << ' ' << kCheckpointVersion << '\n';
  section("config", to_text(model.config));
  section("meta", meta.str());
  section("manifest", tensors.manifest());
  section("tensors", tensors.data());
}

inline void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), ErrorKind::io, "cannot write checkpoint " + path.string());
  save_checkpoint(ck, out);
  require(out.good(), ErrorKind::io, "failed writing checkpoint " + path.string());
}

inline Checkpoint load_checkpoint(std::istream& in) {
  std::string magic;
  int version = 0;
  in >> magic >> version;
  require(!in.fail() && magic == kCheckpointMagic, ErrorKind::parse, "not a checkpoint file");
  require(version == kCheckpointVersion, ErrorKind::parse, "unsupported checkpoint version " + std::to_string(version));
  in.ignore(1);
  std::map<std::string, std::string> sections;
  std::string word;
  while (in >> word) {
    require(word == "section", ErrorKind::parse, "checkpoint: expected a section header");
    std::string name;
    std::size_t bytes = 0;
    in >> name >> bytes;
    require(!in.fail(), ErrorKind::parse, "checkpoint: malformed section header");
    in.ignore(1);
    std::string payload(bytes, '\0');
    in.read(payload.data(), static_cast<std::streamsize>(bytes));
    require(static_cast<std::size_t>(in.gcount()) == bytes, ErrorKind::parse, "checkpoint: truncated section " + name);
    sections[name] = std::move(payload);
  }
  for (const char* s : {"config", "meta", "manifest", "tensors"})
    require(sections.count(s) > 0, ErrorKind::parse, std::string("checkpoint: missing section ") + s);

  Checkpoint ck;
  DecrlModel& model = ck.model;
  std::istringstream cfg_text(sections["config"]);
  model.config = run_config_from(parse_key_values(cfg_text, "checkpoint config"));

  std::istringstream meta(sections["meta"]);
  model.num_entities = detail::read_value<int>(meta, "num_entities");
  model.num_relations = detail::read_value<int>(meta, "num_relations");
  ck.epoch = detail::read_value<int>(meta, "epoch");
  model.degree_classes.degree_values = detail::read_ints(meta, "degree_values");
  model.degree_classes.class_of_entity = detail::read_ints(meta, "class_of_entity");
  model.global.partition.assignment = detail::read_ints(meta, "partition");
  const auto n_history = detail::read_value<std::size_t>(meta, "history");
  for (std::size_t i = 0; i < n_history; ++i) {
    EpochRecord r;
    std::string mrr;
    meta >> r.epoch >> r.loss >> r.tkg_loss >> r.temporal_loss >> mrr;
    require(!meta.fail(), ErrorKind::parse, "checkpoint meta: truncated history");
    r.valid_mrr = std::stod(mrr);
    ck.history.push_back(r);
  }
  const auto cluster_times = detail::read_ints(meta, "cluster_timestamps");

  std::map<std::string, Matrix> named;
  for (auto& [name, m] : detail::read_tensors(sections["manifest"], sections["tensors"])) {
    if (name.rfind("param:", 0) == 0)
      model.params.add(name.substr(6), m);
    else
      named[name] = std::move(m);
  }
  auto take = [&named](const std::string& name) {
    auto it = named.find(name);
    require(it != named.end(), ErrorKind::parse, "checkpoint: missing tensor " + name);
    return it->second;
  };
  model.global.centroids = take("global.centroids");
  model.global.partition.embedding = take("global.embedding");
  ck.final_entities = take("final.entities");
  ck.final_relations = take("final.relations");
  for (int t : cluster_times)
    ck.cluster_states.push_back({t, take("cluster." + std::to_string(t) + ".membership"),
                                 take("cluster." + std::to_string(t) + ".clusters")});
  return ck;
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorKind::io, "cannot open checkpoint " + path.string());
  return load_checkpoint(in);
}

}  // namespace decrl
