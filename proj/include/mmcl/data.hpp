#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "mmcl/error.hpp"
#include "mmcl/matrix.hpp"
#include "mmcl/rng.hpp"

namespace mmcl {

using ojson = nlohmann::ordered_json;

enum class Task { multiclass, multilabel };

inline std::string to_string(Task t) {
  return t == Task::multiclass ? "multiclass" : "multilabel";
}

inline Task task_from_string(const std::string& s) {
  if (s == "multiclass") return Task::multiclass;
  if (s == "multilabel") return Task::multilabel;
  throw_config("unknown task '" + s + "' (expected multiclass or multilabel)");
}

struct Modality {
  int id = 0;
  std::string name;
  int dim = 0;
};

// Either one class index (multiclass), a 0/1 presence vector (multilabel),
// or nothing at all; pretraining never reads these.
struct SampleLabels {
  std::optional<int> klass;
  std::optional<std::vector<int>> presence;

  bool has_any() const { return klass.has_value() || presence.has_value(); }
};

struct StreamRef {
  std::string path; // relative paths resolve against the manifest directory
  int frames = 0;
};

struct SampleRecord {
  std::string id;
  std::string group; // actor identity; empty when unknown
  SampleLabels labels;
  std::map<int, StreamRef> streams; // modality id -> file
};

struct Manifest {
  std::string dataset;
  Task task = Task::multiclass;
  std::vector<std::string> classes;
  std::vector<Modality> modalities; // dense ids 0..M-1, in id order
  std::vector<SampleRecord> samples;
  std::filesystem::path base_dir; // set by load_manifest, not serialized

  const Modality& modality_by_id(int id) const {
    for (const auto& m : modalities)
      if (m.id == id) return m;
    throw_data("manifest: no modality with id " + std::to_string(id));
  }

  const Modality* modality_by_name(const std::string& name) const {
    for (const auto& m : modalities)
      if (m.name == name) return &m;
    return nullptr;
  }

  std::filesystem::path resolve(const std::string& path) const {
    std::filesystem::path p(path);
    return p.is_absolute() ? p : base_dir / p;
  }
};

// ---------------------------------------------------------------------------
// feature files: magic "MPFT", u32 T, u32 D (little endian), then T*D
// 32-bit little-endian floats in row-major order.

namespace detail {

inline void put_u32_le(std::string& buf, uint32_t v) {
  buf.push_back(static_cast<char>(v & 0xff));
  buf.push_back(static_cast<char>((v >> 8) & 0xff));
  buf.push_back(static_cast<char>((v >> 16) & 0xff));
  buf.push_back(static_cast<char>((v >> 24) & 0xff));
}

inline uint32_t get_u32_le(const unsigned char* p) {
  return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
         (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
}

inline void put_f32_le(std::string& buf, float f) {
  static_assert(sizeof(float) == 4);
  uint32_t bits;
  std::memcpy(&bits, &f, 4);
  put_u32_le(buf, bits);
}

inline float get_f32_le(const unsigned char* p) {
  uint32_t bits = get_u32_le(p);
  float f;
  std::memcpy(&f, &bits, 4);
  return f;
}

inline std::string read_entire_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw_data("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return std::move(ss).str();
}

inline void write_entire_file(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw_data("cannot write '" + path.string() + "'");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw_data("short write to '" + path.string() + "'");
}

}  // namespace detail

inline void write_feature_file(const std::filesystem::path& path, const Matrix& x) {
  std::string buf = "MPFT";
  detail::put_u32_le(buf, static_cast<uint32_t>(x.rows()));
  detail::put_u32_le(buf, static_cast<uint32_t>(x.cols()));
  for (int i = 0; i < x.rows(); ++i)
    for (int j = 0; j < x.cols(); ++j)
      detail::put_f32_le(buf, static_cast<float>(x(i, j)));
  detail::write_entire_file(path, buf);
}

struct FeatureHeader {
  int frames = 0;
  int dim = 0;
};

inline FeatureHeader read_feature_header(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw_data("cannot open '" + path.string() + "'");
  unsigned char hdr[12];
  if (!in.read(reinterpret_cast<char*>(hdr), 12))
    throw_data("'" + path.string() + "': truncated header");
  if (std::memcmp(hdr, "MPFT", 4) != 0)
    throw_data("'" + path.string() + "': bad magic, not a feature file");
  FeatureHeader h;
  h.frames = static_cast<int>(detail::get_u32_le(hdr + 4));
  h.dim = static_cast<int>(detail::get_u32_le(hdr + 8));
  return h;
}

// 32-bit payload widened to 64-bit on read.
inline Matrix read_feature_file(const std::filesystem::path& path) {
  std::string bytes = detail::read_entire_file(path);
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "MPFT", 4) != 0)
    throw_data("'" + path.string() + "': bad magic, not a feature file");
  const unsigned char* p = reinterpret_cast<const unsigned char*>(bytes.data());
  const uint32_t t = detail::get_u32_le(p + 4);
  const uint32_t d = detail::get_u32_le(p + 8);
  const size_t want = 12 + static_cast<size_t>(t) * d * 4;
  if (bytes.size() < want)
    throw_data("'" + path.string() + "': truncated payload, have " +
               std::to_string(bytes.size()) + " bytes, need " + std::to_string(want));
  if (bytes.size() > want)
    throw_data("'" + path.string() + "': trailing bytes after payload");
  Matrix x(static_cast<int>(t), static_cast<int>(d));
  for (uint32_t i = 0; i < t * d; ++i)
    x.data()[i] = static_cast<double>(detail::get_f32_le(p + 12 + 4 * i));
  return x;
}

// plain-text dump for eyeballing; the binary format is the source of truth
inline void export_feature_csv(const std::filesystem::path& path, const Matrix& x) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw_data("cannot write '" + path.string() + "'");
  out.precision(17);
  for (int i = 0; i < x.rows(); ++i) {
    for (int j = 0; j < x.cols(); ++j) {
      if (j) out << ',';
      out << x(i, j);
    }
    out << '\n';
  }
}

// ---------------------------------------------------------------------------
// manifest JSON

namespace detail {

inline void expect_keys(const ojson& obj, const std::set<std::string>& allowed,
                        const std::string& where) {
  for (auto it = obj.begin(); it != obj.end(); ++it)
    if (!allowed.count(it.key()))
      throw_data("manifest: unexpected key '" + it.key() + "' in " + where);
}

inline ojson labels_to_json(const SampleLabels& l) {
  if (l.klass) return *l.klass;
  if (l.presence) return *l.presence;
  return nullptr;
}

inline SampleLabels labels_from_json(const ojson& j, const std::string& where) {
  SampleLabels l;
  if (j.is_null()) return l;
  if (j.is_number_integer()) {
    l.klass = j.get<int>();
    return l;
  }
  if (j.is_array()) {
    std::vector<int> v;
    for (const auto& e : j) {
      if (!e.is_number_integer()) throw_data("manifest: non-integer label entry in " + where);
      v.push_back(e.get<int>());
    }
    l.presence = std::move(v);
    return l;
  }
  throw_data("manifest: labels must be null, an integer, or a 0/1 array in " + where);
}

}  // namespace detail

inline ojson manifest_to_json(const Manifest& m) {
  ojson j;
  j["dataset"] = m.dataset;
  j["task"] = to_string(m.task);
  j["classes"] = m.classes;
  ojson mods = ojson::array();
  for (const auto& mod : m.modalities)
    mods.push_back(ojson{{"id", mod.id}, {"name", mod.name}, {"dim", mod.dim}});
  j["modalities"] = std::move(mods);
  ojson samples = ojson::array();
  for (const auto& s : m.samples) {
    ojson streams;
    for (const auto& [id, ref] : s.streams) {
      const std::string& name = m.modality_by_id(id).name;
      streams[name] = ojson{{"path", ref.path}, {"frames", ref.frames}};
    }
    samples.push_back(ojson{{"id", s.id},
                            {"group", s.group},
                            {"labels", detail::labels_to_json(s.labels)},
                            {"streams", std::move(streams)}});
  }
  j["samples"] = std::move(samples);
  return j;
}

// Structural validation only; file existence is load_manifest's job.
inline void validate_manifest(const Manifest& m) {
  if (m.classes.size() < 2) throw_data("manifest: need at least 2 classes");
  if (m.modalities.empty()) throw_data("manifest: no modalities");
  std::set<std::string> names;
  for (size_t i = 0; i < m.modalities.size(); ++i) {
    const Modality& mod = m.modalities[i];
    if (mod.id != static_cast<int>(i))
      throw_data("manifest: modality ids must be dense 0..M-1, got id " +
                 std::to_string(mod.id) + " at position " + std::to_string(i));
    if (mod.dim <= 0) throw_data("manifest: modality '" + mod.name + "' has dim <= 0");
    if (!names.insert(mod.name).second)
      throw_data("manifest: duplicate modality name '" + mod.name + "'");
  }
  std::set<std::string> ids;
  for (const auto& s : m.samples) {
    if (!ids.insert(s.id).second) throw_data("manifest: duplicate sample id '" + s.id + "'");
    for (const auto& mod : m.modalities)
      if (!s.streams.count(mod.id))
        throw_data("manifest: sample '" + s.id + "' is missing modality '" + mod.name + "'");
    for (const auto& [id, ref] : s.streams) {
      if (id < 0 || id >= static_cast<int>(m.modalities.size()))
        throw_data("manifest: sample '" + s.id + "' references unknown modality id " +
                   std::to_string(id));
      if (ref.frames < 1)
        throw_data("manifest: sample '" + s.id + "' has frames < 1");
    }
    const int c = static_cast<int>(m.classes.size());
    if (s.labels.klass && (*s.labels.klass < 0 || *s.labels.klass >= c))
      throw_data("manifest: sample '" + s.id + "' class index out of range");
    if (s.labels.presence) {
      if (static_cast<int>(s.labels.presence->size()) != c)
        throw_data("manifest: sample '" + s.id + "' presence vector length != class count");
      for (int v : *s.labels.presence)
        if (v != 0 && v != 1)
          throw_data("manifest: sample '" + s.id + "' presence entries must be 0 or 1");
    }
    if (m.task == Task::multiclass && s.labels.presence)
      throw_data("manifest: sample '" + s.id + "' has a presence vector on a multiclass task");
    if (m.task == Task::multilabel && s.labels.klass)
      throw_data("manifest: sample '" + s.id + "' has a class index on a multilabel task");
  }
}

inline void save_manifest(const Manifest& m, const std::filesystem::path& path) {
  validate_manifest(m);
  detail::write_entire_file(path, manifest_to_json(m).dump(2) + "\n");
}

// check_files: verify each referenced feature file exists and its header
// matches the declared frames/dim (payloads are not loaded here).
inline Manifest load_manifest(const std::filesystem::path& path, bool check_files = true) {
  std::string text = detail::read_entire_file(path);
  ojson j;
  try {
    j = ojson::parse(text);
  } catch (const std::exception& e) {
    throw_data("manifest '" + path.string() + "': " + e.what());
  }
  try {
    detail::expect_keys(j, {"dataset", "task", "classes", "modalities", "samples"}, "document");
    Manifest m;
    m.base_dir = path.has_parent_path() ? path.parent_path() : std::filesystem::path(".");
    m.dataset = j.at("dataset").get<std::string>();
    m.task = task_from_string(j.at("task").get<std::string>());
    m.classes = j.at("classes").get<std::vector<std::string>>();
    for (const auto& mj : j.at("modalities")) {
      detail::expect_keys(mj, {"id", "name", "dim"}, "modalities");
      m.modalities.push_back(
          {mj.at("id").get<int>(), mj.at("name").get<std::string>(), mj.at("dim").get<int>()});
    }
    for (const auto& sj : j.at("samples")) {
      detail::expect_keys(sj, {"id", "group", "labels", "streams"}, "samples");
      SampleRecord s;
      s.id = sj.at("id").get<std::string>();
      s.group = sj.at("group").get<std::string>();
      s.labels = detail::labels_from_json(sj.contains("labels") ? sj.at("labels") : ojson(nullptr),
                                          "sample '" + s.id + "'");
      for (auto it = sj.at("streams").begin(); it != sj.at("streams").end(); ++it) {
        const Modality* mod = m.modality_by_name(it.key());
        if (!mod)
          throw_data("manifest: sample '" + s.id + "' references unknown modality '" + it.key() +
                     "'");
        detail::expect_keys(it.value(), {"path", "frames"}, "streams of '" + s.id + "'");
        s.streams[mod->id] = {it.value().at("path").get<std::string>(),
                              it.value().at("frames").get<int>()};
      }
      m.samples.push_back(std::move(s));
    }
    validate_manifest(m);
    if (check_files) {
      for (const auto& s : m.samples)
        for (const auto& [id, ref] : s.streams) {
          const std::filesystem::path fp = m.resolve(ref.path);
          FeatureHeader h = read_feature_header(fp);
          const Modality& mod = m.modality_by_id(id);
          if (h.dim != mod.dim)
            throw_data("manifest: sample '" + s.id + "' modality '" + mod.name +
                       "': file says dim " + std::to_string(h.dim) + ", manifest says " +
                       std::to_string(mod.dim));
          if (h.frames != ref.frames)
            throw_data("manifest: sample '" + s.id + "' modality '" + mod.name +
                       "': file says " + std::to_string(h.frames) + " frames, manifest says " +
                       std::to_string(ref.frames));
        }
    }
    return m;
  } catch (const Error&) {
    throw;
  } catch (const std::exception& e) {
    throw_data("manifest '" + path.string() + "': " + e.what());
  }
}

// ---------------------------------------------------------------------------
// in-memory dataset and the label-free pretraining view

struct Dataset {
  Manifest manifest;
  // streams[i] holds sample i's per-modality sequences, parallel to manifest.samples
  std::vector<std::map<int, Matrix>> streams;
};

inline Dataset load_dataset(const Manifest& m) {
  Dataset d;
  d.manifest = m;
  d.streams.reserve(m.samples.size());
  for (const auto& s : m.samples) {
    std::map<int, Matrix> per_mod;
    for (const auto& [id, ref] : s.streams) {
      Matrix x = read_feature_file(m.resolve(ref.path));
      if (x.cols() != m.modality_by_id(id).dim)
        throw_data("sample '" + s.id + "': stream dim mismatch");
      per_mod.emplace(id, std::move(x));
    }
    d.streams.push_back(std::move(per_mod));
  }
  return d;
}

// What pretraining is allowed to see: ids and streams, no labels, no groups.
struct UnlabeledSample {
  const std::string* id = nullptr;
  const std::map<int, Matrix>* streams = nullptr;
};

inline std::vector<UnlabeledSample> unlabeled_view(const Dataset& d) {
  std::vector<UnlabeledSample> v;
  v.reserve(d.streams.size());
  for (size_t i = 0; i < d.streams.size(); ++i)
    v.push_back({&d.manifest.samples[i].id, &d.streams[i]});
  return v;
}

inline std::vector<UnlabeledSample> unlabeled_view(const Dataset& d,
                                                   const std::vector<int>& indices) {
  std::vector<UnlabeledSample> v;
  v.reserve(indices.size());
  for (int i : indices) {
    if (i < 0 || i >= static_cast<int>(d.streams.size()))
      throw_data("unlabeled_view: index out of range");
    v.push_back({&d.manifest.samples[i].id, &d.streams[i]});
  }
  return v;
}

// Break cross-modal correspondence: independently permute which sample owns
// which stream for every modality except the lowest id. Class structure per
// modality is intact, but streams of one sample no longer share a latent.
// In-memory only; used as a negative control for pretraining.
inline void shuffle_pairings(Dataset& d, Rng& rng) {
  if (d.manifest.modalities.empty()) return;
  const int n = static_cast<int>(d.streams.size());
  for (size_t k = 1; k < d.manifest.modalities.size(); ++k) {
    const int id = d.manifest.modalities[k].id;
    std::vector<int> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(perm);
    std::vector<Matrix> moved;
    moved.reserve(n);
    for (int i = 0; i < n; ++i) moved.push_back(std::move(d.streams[perm[i]].at(id)));
    for (int i = 0; i < n; ++i) d.streams[i].at(id) = std::move(moved[i]);
  }
}

// ---------------------------------------------------------------------------
// temporal windowing (the only augmentation)

// Random contiguous window of at most window_len frames; short sequences
// pass through whole without consuming randomness.
inline Matrix temporal_window(const Matrix& seq, int window_len, Rng& rng) {
  if (window_len < 1) throw_config("temporal_window: window_len must be >= 1");
  const int t = seq.rows();
  if (t <= window_len) return seq;
  const int start = static_cast<int>(rng.uniform_int(static_cast<uint64_t>(t - window_len + 1)));
  Matrix out(window_len, seq.cols());
  for (int i = 0; i < window_len; ++i)
    for (int j = 0; j < seq.cols(); ++j) out(i, j) = seq(start + i, j);
  return out;
}

// ---------------------------------------------------------------------------
// fold plans

enum class FoldMode { standard, actor_split };

inline std::string to_string(FoldMode m) {
  return m == FoldMode::standard ? "standard" : "actor_split";
}

inline FoldMode fold_mode_from_string(const std::string& s) {
  if (s == "standard") return FoldMode::standard;
  if (s == "actor_split") return FoldMode::actor_split;
  throw_config("unknown fold mode '" + s + "'");
}

struct FoldPlan {
  int k = 10;
  FoldMode mode = FoldMode::standard;
  uint64_t seed = 0;
  std::map<std::string, int> assignment; // sample id -> fold

  int fold_of(const std::string& id) const {
    auto it = assignment.find(id);
    if (it == assignment.end()) throw_data("fold plan: sample '" + id + "' not assigned");
    return it->second;
  }
};

inline FoldPlan make_folds(const Manifest& m, int k, FoldMode mode, uint64_t seed) {
  if (k < 2) throw_config("make_folds: k must be >= 2");
  FoldPlan plan;
  plan.k = k;
  plan.mode = mode;
  plan.seed = seed;
  Rng rng(derive_seed(seed, "folds"));
  if (mode == FoldMode::standard) {
    std::vector<int> order(m.samples.size());
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);
    // first (n % k) folds take one extra sample
    const int n = static_cast<int>(order.size());
    const int base = n / k, extra = n % k;
    int pos = 0;
    for (int f = 0; f < k; ++f) {
      const int take = base + (f < extra ? 1 : 0);
      for (int i = 0; i < take; ++i) plan.assignment[m.samples[order[pos++]].id] = f;
    }
  } else {
    std::set<std::string> group_set;
    for (const auto& s : m.samples) {
      if (s.group.empty())
        throw_data("make_folds: sample '" + s.id + "' has no group; actor_split needs groups");
      group_set.insert(s.group);
    }
    if (static_cast<int>(group_set.size()) < k)
      throw_data("make_folds: " + std::to_string(group_set.size()) + " groups < k=" +
                 std::to_string(k) + " for actor_split");
    std::vector<std::string> groups(group_set.begin(), group_set.end());
    rng.shuffle(groups);
    std::map<std::string, int> group_fold;
    for (size_t i = 0; i < groups.size(); ++i)
      group_fold[groups[i]] = static_cast<int>(i % k);
    for (const auto& s : m.samples) plan.assignment[s.id] = group_fold.at(s.group);
  }
  return plan;
}

inline void save_fold_plan(const FoldPlan& p, const std::filesystem::path& path) {
  ojson j;
  j["k"] = p.k;
  j["mode"] = to_string(p.mode);
  j["seed"] = p.seed;
  ojson a;
  for (const auto& [id, f] : p.assignment) a[id] = f;
  j["assignment"] = std::move(a);
  detail::write_entire_file(path, j.dump(2) + "\n");
}

inline FoldPlan load_fold_plan(const std::filesystem::path& path) {
  ojson j;
  try {
    j = ojson::parse(detail::read_entire_file(path));
  } catch (const std::exception& e) {
    throw_data("fold plan '" + path.string() + "': " + e.what());
  }
  try {
    detail::expect_keys(j, {"k", "mode", "seed", "assignment"}, "fold plan");
    FoldPlan p;
    p.k = j.at("k").get<int>();
    p.mode = fold_mode_from_string(j.at("mode").get<std::string>());
    p.seed = j.at("seed").get<uint64_t>();
    for (auto it = j.at("assignment").begin(); it != j.at("assignment").end(); ++it) {
      const int f = it.value().get<int>();
      if (f < 0 || f >= p.k) throw_data("fold plan: fold index out of range for '" + it.key() + "'");
      p.assignment[it.key()] = f;
    }
    return p;
  } catch (const Error&) {
    throw;
  } catch (const std::exception& e) {
    throw_data("fold plan '" + path.string() + "': " + e.what());
  }
}

// ---------------------------------------------------------------------------
// synthetic multimodal generator

// Every modality of one sample observes the same latent h through its own
// fixed linear map; frame counts deliberately differ across modalities.
struct SyntheticSpec {
  int classes = 4;
  int per_class = 128;
  int latent_dim = 8;
  std::vector<int> modality_dims = {12, 16, 20};
  int t_min = 12;
  int t_max = 24;
  double sigma_obs = 1.0;   // per-frame observation noise
  double sigma_class = 0.25; // within-class latent spread
  // Heavy-tailed frame noise: each frame independently becomes an outlier
  // with probability outlier_frac, scaling its noise by outlier_scale. Mean
  // pooling inherits the full inflated variance while a per-frame
  // nonlinearity can clamp spiked frames before pooling, so this knob
  // separates raw-feature baselines from learned encoders in benchmarks.
  double outlier_frac = 0.0;
  double outlier_scale = 1.0;
  int num_groups = 16;       // synthetic actor identities, 0 = no groups
  uint64_t map_seed = 0;     // nonzero pins the class means and modality maps
                             // independently of the dataset seed

  void validate() const {
    if (classes < 2) throw_config("synth: classes must be >= 2");
    if (per_class < 1) throw_config("synth: per_class must be >= 1");
    if (latent_dim < 1) throw_config("synth: latent_dim must be >= 1");
    if (modality_dims.empty()) throw_config("synth: need at least 1 modality");
    for (int d : modality_dims)
      if (d < 1) throw_config("synth: modality dims must be >= 1");
    if (t_min < 1 || t_max < t_min) throw_config("synth: need 1 <= t_min <= t_max");
    if (sigma_obs < 0) throw_config("synth: sigma_obs must be >= 0");
    if (sigma_class < 0) throw_config("synth: sigma_class must be >= 0");
    if (outlier_frac < 0 || outlier_frac > 1)
      throw_config("synth: outlier_frac must be in [0,1]");
    if (outlier_scale < 1) throw_config("synth: outlier_scale must be >= 1");
    if (num_groups < 0) throw_config("synth: num_groups must be >= 0");
  }
};

struct SyntheticDataset {
  Manifest manifest;          // paths relative to out_dir
  std::vector<Matrix> latents; // per-sample h, exposed for oracle checks
  Matrix class_means;          // C x latent_dim
};

inline SyntheticDataset synth_generate(const SyntheticSpec& spec,
                                       const std::filesystem::path& out_dir, uint64_t seed) {
  spec.validate();
  std::filesystem::create_directories(out_dir / "features");

  // class means and modality maps come from their own stream so datasets
  // with different sample noise can share the same geometry
  Rng map_rng(derive_seed(spec.map_seed ? spec.map_seed : seed, "synth.maps"));
  const int c = spec.classes;
  const int hd = spec.latent_dim;
  Matrix means = Matrix::random_normal(c, hd, map_rng);
  std::vector<Matrix> maps; // per modality, D_m x latent_dim, entries ~ N(0, 1/latent_dim)
  const double map_scale = 1.0 / std::sqrt(static_cast<double>(hd));
  for (int d : spec.modality_dims) {
    Matrix a = Matrix::random_normal(d, hd, map_rng);
    for (double& x : a.data()) x *= map_scale;
    maps.push_back(std::move(a));
  }

  SyntheticDataset out;
  out.class_means = means;
  Manifest& m = out.manifest;
  m.dataset = "synthetic";
  m.task = Task::multiclass;
  for (int y = 0; y < c; ++y) m.classes.push_back("class" + std::to_string(y));
  for (size_t k = 0; k < spec.modality_dims.size(); ++k)
    m.modalities.push_back(
        {static_cast<int>(k), "m" + std::to_string(k), spec.modality_dims[k]});
  m.base_dir = out_dir;

  Rng rng(derive_seed(seed, "synth.samples"));
  const int n = c * spec.per_class;
  for (int i = 0; i < n; ++i) {
    const int y = i % c; // classes round-robin: any prefix stays balanced
    SampleRecord s;
    {
      char buf[16];
      std::snprintf(buf, sizeof(buf), "s%05d", i);
      s.id = buf;
    }
    if (spec.num_groups > 0) s.group = "g" + std::to_string((i / c) % spec.num_groups);
    s.labels.klass = y;

    std::vector<double> h(hd);
    for (int q = 0; q < hd; ++q) h[q] = means(y, q) + spec.sigma_class * rng.normal();
    Matrix hrow(1, hd);
    for (int q = 0; q < hd; ++q) hrow(0, q) = h[q];
    out.latents.push_back(hrow);

    for (size_t k = 0; k < maps.size(); ++k) {
      const int dm = spec.modality_dims[k];
      const int t = spec.t_min +
                    static_cast<int>(rng.uniform_int(static_cast<uint64_t>(spec.t_max - spec.t_min + 1)));
      Matrix frames(t, dm);
      for (int ti = 0; ti < t; ++ti) {
        // zero outlier_frac draws nothing, keeping old streams bit-identical
        double noise = spec.sigma_obs;
        if (spec.outlier_frac > 0 && rng.uniform() < spec.outlier_frac)
          noise *= spec.outlier_scale;
        for (int d = 0; d < dm; ++d) {
          double v = 0.0;
          for (int q = 0; q < hd; ++q) v += maps[k](d, q) * h[q];
          frames(ti, d) = v + noise * rng.normal();
        }
      }
      const std::string rel = "features/" + s.id + "_m" + std::to_string(k) + ".mpft";
      write_feature_file(out_dir / rel, frames);
      s.streams[static_cast<int>(k)] = {rel, t};
    }
    m.samples.push_back(std::move(s));
  }
  save_manifest(m, out_dir / "manifest.json");
  return out;
}

}  // namespace mmcl
