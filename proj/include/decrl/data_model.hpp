#pragma once

// Event store: quadruples grouped by timestamp, vocabularies, per-timestamp
// entity graphs, the static global graph and a synthetic generator with
// planted evolving clusters.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "decrl/error.hpp"
#include "decrl/linalg.hpp"

namespace decrl {

struct Quadruple {
  int subject = 0;
  int relation = 0;
  int object = 0;
  int timestamp = 0;

  friend auto operator<=>(const Quadruple&, const Quadruple&) = default;
};

class Vocabulary {
 public:
  Vocabulary() = default;

  // Appends a name, returning its id. Re-adding a known name is an error.
  int add(const std::string& name) {
    require(!ids_.count(name), ErrorKind::vocabulary, "duplicate vocabulary name '" + name + "'");
    ids_[name] = static_cast<int>(names_.size());
    names_.push_back(name);
    return static_cast<int>(names_.size()) - 1;
  }

  int id(const std::string& name) const {
    auto it = ids_.find(name);
    require(it != ids_.end(), ErrorKind::vocabulary, "unknown name '" + name + "'");
    return it->second;
  }
  std::optional<int> find(const std::string& name) const {
    auto it = ids_.find(name);
    if (it == ids_.end()) return std::nullopt;
    return it->second;
  }
  const std::string& name(int id) const {
    require(id >= 0 && id < size(), ErrorKind::vocabulary, "id out of range: " + std::to_string(id));
    return names_[static_cast<std::size_t>(id)];
  }
  int size() const { return static_cast<int>(names_.size()); }
  bool empty() const { return names_.empty(); }

  // Names "0".."n-1".
  static Vocabulary numbered(int n) {
    Vocabulary v;
    for (int i = 0; i < n; ++i) v.add(std::to_string(i));
    return v;
  }

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, int> ids_;
};

enum class Split { train, valid, test, all };

inline std::string_view to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::valid: return "valid";
    case Split::test: return "test";
    case Split::all: return "all";
  }
  return "all";
}

struct TkgDataset {
  Split split = Split::train;
  Vocabulary entities;
  Vocabulary relations;
  // groups[t] holds G^t; t indexes the (shared) compacted timeline.
  std::vector<std::vector<Quadruple>> groups;
  // Original interval index of each compacted timestamp (the tau fed to the
  // time position encoder).
  std::vector<long long> time_values;

  int num_entities() const { return entities.size(); }
  int num_relations() const { return relations.size(); }
  int num_timestamps() const { return static_cast<int>(groups.size()); }

  std::size_t size() const {
    std::size_t n = 0;
    for (const auto& g : groups) n += g.size();
    return n;
  }

  const std::vector<Quadruple>& at(int t) const {
    require(t >= 0 && t < num_timestamps(), ErrorKind::range, "timestamp out of range: " + std::to_string(t));
    return groups[static_cast<std::size_t>(t)];
  }

  std::vector<Quadruple> flatten() const {
    std::vector<Quadruple> out;
    out.reserve(size());
    for (const auto& g : groups) out.insert(out.end(), g.begin(), g.end());
    return out;
  }

  // Timestamps holding at least one event, ascending.
  std::vector<int> active_timestamps() const {
    std::vector<int> out;
    for (int t = 0; t < num_timestamps(); ++t)
      if (!groups[static_cast<std::size_t>(t)].empty()) out.push_back(t);
    return out;
  }

  double tau(int t) const {
    require(t >= 0 && t < static_cast<int>(time_values.size()), ErrorKind::range, "timestamp out of range");
    return static_cast<double>(time_values[static_cast<std::size_t>(t)]);
  }
};

// Train/valid/test splits over one shared vocabulary and timeline.
struct TkgCorpus {
  TkgDataset train;
  TkgDataset valid;
  TkgDataset test;

  const TkgDataset& split(Split s) const {
    switch (s) {
      case Split::train: return train;
      case Split::valid: return valid;
      case Split::test: return test;
      case Split::all: break;
    }
    fail(ErrorKind::config, "no single dataset for split 'all'");
  }

  // All events of every split on the shared timeline; this is the history
  // available when forecasting any later timestamp.
  TkgDataset timeline() const {
    TkgDataset out;
    out.split = Split::all;
    out.entities = train.entities;
    out.relations = train.relations;
    out.time_values = train.time_values;
    out.groups.assign(train.groups.size(), {});
    for (const TkgDataset* d : {&train, &valid, &test})
      for (std::size_t t = 0; t < d->groups.size(); ++t)
        out.groups[t].insert(out.groups[t].end(), d->groups[t].begin(), d->groups[t].end());
    return out;
  }
};

struct EntityGraphSnapshot {
  int timestamp = 0;
  int num_entities = 0;
  std::vector<Quadruple> edges;
  std::vector<int> in_degree;
  std::vector<int> active_entities;
};

struct GlobalGraph {
  // Symmetric event counts between entity pairs (training split only).
  Eigen::MatrixXi weights;

  int num_entities() const { return static_cast<int>(weights.rows()); }
  int weight(int i, int j) const { return weights(i, j); }
};

// ---------------------------------------------------------------------------
// Loading

namespace detail {

inline std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, '\t')) out.push_back(field);
  return out;
}

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline long long parse_integer(const std::string& field, const std::string& where) {
  const std::string f = trim(field);
  try {
    std::size_t used = 0;
    const long long v = std::stoll(f, &used);
    if (used != f.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    fail(ErrorKind::parse, where + ": expected integer, got '" + f + "'");
  }
}

struct RawQuad {
  long long s, r, o, t;
};

inline std::vector<RawQuad> read_raw_quadruples(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(in.good(), ErrorKind::io, "cannot open " + path.string());
  std::vector<RawQuad> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fields = split_tabs(trim(line));
    const std::string where = path.filename().string() + ":" + std::to_string(line_no);
    require(fields.size() >= 4, ErrorKind::parse, where + ": expected 4 tab-separated fields");
    RawQuad q{parse_integer(fields[0], where), parse_integer(fields[1], where),
              parse_integer(fields[2], where), parse_integer(fields[3], where)};
    require(q.s >= 0 && q.r >= 0 && q.o >= 0, ErrorKind::parse, where + ": negative id");
    out.push_back(q);
  }
  return out;
}

// Maps raw ids to dense ids: identity when a vocabulary is supplied
// (validated), otherwise ascending order of the raw ids seen.
class IdMap {
 public:
  static IdMap from_vocabulary(const Vocabulary& v) {
    IdMap m;
    m.fixed_ = true;
    m.size_ = v.size();
    return m;
  }
  static IdMap from_raw(const std::set<long long>& raw) {
    IdMap m;
    for (long long r : raw) {
      m.dense_[r] = static_cast<int>(m.dense_.size());
      m.vocab_.add(std::to_string(r));
    }
    m.size_ = static_cast<int>(raw.size());
    return m;
  }
  int operator()(long long raw, const char* what) const {
    if (fixed_) {
      require(raw < size_, ErrorKind::vocabulary,
              std::string(what) + " id " + std::to_string(raw) + " outside vocabulary of size " +
                  std::to_string(size_));
      return static_cast<int>(raw);
    }
    return dense_.at(raw);
  }
  const Vocabulary& vocabulary() const { return vocab_; }

 private:
  bool fixed_ = false;
  int size_ = 0;
  std::map<long long, int> dense_;
  Vocabulary vocab_;
};

inline TkgDataset assemble(const std::vector<RawQuad>& raw, Split split, const IdMap& ents,
                           const IdMap& rels, const std::map<long long, int>& time_index,
                           const Vocabulary& ent_vocab, const Vocabulary& rel_vocab) {
  TkgDataset d;
  d.split = split;
  d.entities = ent_vocab;
  d.relations = rel_vocab;
  d.groups.assign(time_index.size(), {});
  d.time_values.reserve(time_index.size());
  // Interval index = (raw - first) / gcd of gaps, so 24-hour stamps map to days.
  long long gcd = 0;
  long long first = time_index.empty() ? 0 : time_index.begin()->first;
  for (const auto& [raw_t, idx] : time_index) gcd = std::gcd(gcd, raw_t - first);
  if (gcd == 0) gcd = 1;
  for (const auto& [raw_t, idx] : time_index) d.time_values.push_back((raw_t - first) / gcd);
  for (const RawQuad& q : raw) {
    const int t = time_index.at(q.t);
    d.groups[static_cast<std::size_t>(t)].push_back(
        Quadruple{ents(q.s, "entity"), rels(q.r, "relation"), ents(q.o, "entity"), t});
  }
  return d;
}

}  // namespace detail

// Reads `name<TAB>id` lines; single-field lines (count headers) are skipped.
inline Vocabulary load_vocabulary(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(in.good(), ErrorKind::io, "cannot open " + path.string());
  std::vector<std::pair<long long, std::string>> rows;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    const auto fields = detail::split_tabs(line);
    if (fields.size() < 2) continue;
    const std::string where = path.filename().string() + ":" + std::to_string(line_no);
    rows.emplace_back(detail::parse_integer(fields[1], where), detail::trim(fields[0]));
  }
  std::sort(rows.begin(), rows.end());
  Vocabulary v;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    require(rows[i].first == static_cast<long long>(i), ErrorKind::vocabulary,
            path.filename().string() + ": ids are not dense 0..N-1");
    v.add(rows[i].second);
  }
  return v;
}

struct Vocabularies {
  Vocabulary entities;
  Vocabulary relations;
};

inline TkgDataset load_quadruples(const std::filesystem::path& path,
                                  const std::optional<Vocabularies>& vocabs = std::nullopt,
                                  Split split = Split::train) {
  const auto raw = detail::read_raw_quadruples(path);
  std::set<long long> raw_t, raw_e, raw_r;
  for (const auto& q : raw) {
    raw_t.insert(q.t);
    raw_e.insert(q.s);
    raw_e.insert(q.o);
    raw_r.insert(q.r);
  }
  std::map<long long, int> time_index;
  for (long long t : raw_t) time_index.emplace(t, static_cast<int>(time_index.size()));
  if (vocabs) {
    return detail::assemble(raw, split, detail::IdMap::from_vocabulary(vocabs->entities),
                            detail::IdMap::from_vocabulary(vocabs->relations), time_index,
                            vocabs->entities, vocabs->relations);
  }
  const auto ents = detail::IdMap::from_raw(raw_e);
  const auto rels = detail::IdMap::from_raw(raw_r);
  return detail::assemble(raw, split, ents, rels, time_index, ents.vocabulary(), rels.vocabulary());
}

struct CorpusPaths {
  std::filesystem::path train;
  std::filesystem::path valid;
  std::filesystem::path test;
  std::optional<std::filesystem::path> entity_map;
  std::optional<std::filesystem::path> relation_map;
};

// Loads the three splits onto one timeline. Without id maps, vocabularies are
// the union of raw ids over all splits.
inline TkgCorpus load_corpus(const CorpusPaths& paths) {
  const auto train = detail::read_raw_quadruples(paths.train);
  const auto valid = detail::read_raw_quadruples(paths.valid);
  const auto test = detail::read_raw_quadruples(paths.test);
  std::set<long long> raw_t, raw_e, raw_r;
  for (const auto* part : {&train, &valid, &test})
    for (const auto& q : *part) {
      raw_t.insert(q.t);
      raw_e.insert(q.s);
      raw_e.insert(q.o);
      raw_r.insert(q.r);
    }
  std::map<long long, int> time_index;
  for (long long t : raw_t) time_index.emplace(t, static_cast<int>(time_index.size()));

  detail::IdMap ents, rels;
  Vocabulary ent_vocab, rel_vocab;
  if (paths.entity_map) {
    ent_vocab = load_vocabulary(*paths.entity_map);
    ents = detail::IdMap::from_vocabulary(ent_vocab);
  } else {
    ents = detail::IdMap::from_raw(raw_e);
    ent_vocab = ents.vocabulary();
  }
  if (paths.relation_map) {
    rel_vocab = load_vocabulary(*paths.relation_map);
    rels = detail::IdMap::from_vocabulary(rel_vocab);
  } else {
    rels = detail::IdMap::from_raw(raw_r);
    rel_vocab = rels.vocabulary();
  }
  TkgCorpus c;
  c.train = detail::assemble(train, Split::train, ents, rels, time_index, ent_vocab, rel_vocab);
  c.valid = detail::assemble(valid, Split::valid, ents, rels, time_index, ent_vocab, rel_vocab);
  c.test = detail::assemble(test, Split::test, ents, rels, time_index, ent_vocab, rel_vocab);
  return c;
}

inline void save_quadruples(const TkgDataset& d, const std::filesystem::path& path) {
  std::ofstream out(path);
  require(out.good(), ErrorKind::io, "cannot write " + path.string());
  for (const auto& g : d.groups)
    for (const auto& q : g)
      out << q.subject << '\t' << q.relation << '\t' << q.object << '\t'
          << d.time_values[static_cast<std::size_t>(q.timestamp)] << '\n';
}

inline void save_vocabulary(const Vocabulary& v, const std::filesystem::path& path) {
  std::ofstream out(path);
  require(out.good(), ErrorKind::io, "cannot write " + path.string());
  for (int i = 0; i < v.size(); ++i) out << v.name(i) << '\t' << i << '\n';
}

// Contiguous split of the timeline: the first `train_fraction` of timestamps
// train, the next `valid_fraction` validate, the rest test.
inline TkgCorpus split_by_time(const TkgDataset& all, double train_fraction = 0.8,
                               double valid_fraction = 0.1) {
  const int n = all.num_timestamps();
  const int n_train = std::max(1, static_cast<int>(std::lround(train_fraction * n)));
  const int n_valid = std::max(0, static_cast<int>(std::lround(valid_fraction * n)));
  TkgCorpus c;
  for (TkgDataset* d : {&c.train, &c.valid, &c.test}) {
    d->entities = all.entities;
    d->relations = all.relations;
    d->time_values = all.time_values;
    d->groups.assign(all.groups.size(), {});
  }
  c.train.split = Split::train;
  c.valid.split = Split::valid;
  c.test.split = Split::test;
  for (int t = 0; t < n; ++t) {
    TkgDataset& target = t < n_train ? c.train : (t < n_train + n_valid ? c.valid : c.test);
    target.groups[static_cast<std::size_t>(t)] = all.groups[static_cast<std::size_t>(t)];
  }
  return c;
}

// ---------------------------------------------------------------------------
// Graphs

inline EntityGraphSnapshot build_snapshot(const TkgDataset& dataset, int t) {
  const auto& group = dataset.at(t);
  EntityGraphSnapshot s;
  s.timestamp = t;
  s.num_entities = dataset.num_entities();
  s.edges = group;
  s.in_degree.assign(static_cast<std::size_t>(s.num_entities), 0);
  std::vector<char> active(static_cast<std::size_t>(s.num_entities), 0);
  for (const auto& q : group) {
    ++s.in_degree[static_cast<std::size_t>(q.object)];
    active[static_cast<std::size_t>(q.subject)] = 1;
    active[static_cast<std::size_t>(q.object)] = 1;
  }
  for (int i = 0; i < s.num_entities; ++i)
    if (active[static_cast<std::size_t>(i)]) s.active_entities.push_back(i);
  return s;
}

inline GlobalGraph build_global_graph(const TkgDataset& train) {
  GlobalGraph g;
  g.weights = Eigen::MatrixXi::Zero(train.num_entities(), train.num_entities());
  for (const auto& group : train.groups)
    for (const auto& q : group) {
      g.weights(q.subject, q.object) += 1;
      if (q.subject != q.object) g.weights(q.object, q.subject) += 1;
    }
  return g;
}

// In-degree of every entity over a whole split.
inline std::vector<int> total_in_degrees(const TkgDataset& d) {
  std::vector<int> deg(static_cast<std::size_t>(d.num_entities()), 0);
  for (const auto& group : d.groups)
    for (const auto& q : group) ++deg[static_cast<std::size_t>(q.object)];
  return deg;
}

// ---------------------------------------------------------------------------
// Synthetic planted-cluster generator

struct SyntheticSpec {
  int num_entities = 60;
  int num_relations = 18;
  int num_timestamps = 20;
  int num_clusters = 3;
  double drift_probability = 0.02;
  double intra_rate = 0.9;
  double inter_rate = 0.01;
  std::uint64_t seed = 1;
};

struct SyntheticTkg {
  TkgDataset dataset;
  // membership[t][i] = planted cluster of entity i at timestamp t.
  std::vector<std::vector<int>> membership;
};

// Relation emitted by an event from cluster a to cluster b. Each ordered
// cluster pair owns a block of relations; inside a block, relation u is drawn
// with probability proportional to 2^-u. Fewer relations than pairs wrap.
inline int synthetic_relation(int a, int b, int num_clusters, int num_relations, Rng& rng) {
  const int pair = a * num_clusters + b;
  const int pairs = num_clusters * num_clusters;
  if (num_relations < pairs) return pair % num_relations;
  const int per_block = num_relations / pairs;
  std::vector<double> w(static_cast<std::size_t>(per_block));
  for (int u = 0; u < per_block; ++u) w[static_cast<std::size_t>(u)] = std::ldexp(1.0, -u);
  std::discrete_distribution<int> pick(w.begin(), w.end());
  return pair * per_block + pick(rng);
}

inline SyntheticTkg generate_synthetic_tkg(const SyntheticSpec& spec) {
  require(spec.num_entities > 0 && spec.num_clusters > 0 && spec.num_relations > 0 &&
              spec.num_timestamps > 0,
          ErrorKind::spec, "synthetic spec needs positive entity, relation, timestamp and cluster counts");
  require(spec.num_clusters <= spec.num_entities, ErrorKind::spec, "more clusters than entities");
  for (double p : {spec.drift_probability, spec.intra_rate, spec.inter_rate})
    require(p >= 0.0 && p <= 1.0, ErrorKind::spec, "rates and drift probability must lie in [0,1]");

  Rng rng(spec.seed);
  const int n = spec.num_entities;
  const int k = spec.num_clusters;

  // Balanced initial partition under a random relabeling of entities.
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<int> current(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) current[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])] = i % k;

  SyntheticTkg out;
  out.dataset.entities = Vocabulary::numbered(n);
  out.dataset.relations = Vocabulary::numbered(spec.num_relations);
  out.dataset.split = Split::all;
  out.dataset.groups.assign(static_cast<std::size_t>(spec.num_timestamps), {});
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<int> other(1, std::max(1, k - 1));

  for (int t = 0; t < spec.num_timestamps; ++t) {
    if (t > 0 && k > 1)
      for (int i = 0; i < n; ++i)
        if (unit(rng) < spec.drift_probability)
          current[static_cast<std::size_t>(i)] = (current[static_cast<std::size_t>(i)] + other(rng)) % k;
    out.membership.push_back(current);
    out.dataset.time_values.push_back(t);
    auto& group = out.dataset.groups[static_cast<std::size_t>(t)];
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j) {
        const int ci = current[static_cast<std::size_t>(i)];
        const int cj = current[static_cast<std::size_t>(j)];
        const double rate = ci == cj ? spec.intra_rate : spec.inter_rate;
        if (unit(rng) >= rate) continue;
        const bool forward = unit(rng) < 0.5;
        const int s = forward ? i : j;
        const int o = forward ? j : i;
        const int cs = forward ? ci : cj;
        const int co = forward ? cj : ci;
        group.push_back(Quadruple{s, synthetic_relation(cs, co, k, spec.num_relations, rng), o, t});
      }
  }
  return out;
}

}  // namespace decrl
