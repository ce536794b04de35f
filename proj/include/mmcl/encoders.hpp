#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "mmcl/error.hpp"
#include "mmcl/matrix.hpp"
#include "mmcl/param_store.hpp"
#include "mmcl/rng.hpp"
#include "mmcl/tape.hpp"

namespace mmcl {

enum class EncoderKind { mlp, tcn, attn };

inline const char* to_string(EncoderKind k) {
  switch (k) {
    case EncoderKind::mlp: return "mlp";
    case EncoderKind::tcn: return "tcn";
    case EncoderKind::attn: return "attn";
  }
  return "?";
}

inline EncoderKind encoder_kind_from_string(const std::string& s) {
  if (s == "mlp") return EncoderKind::mlp;
  if (s == "tcn") return EncoderKind::tcn;
  if (s == "attn") return EncoderKind::attn;
  throw_config("unknown encoder kind '" + s + "'");
}

struct EncoderConfig {
  EncoderKind kind = EncoderKind::mlp;
  int input_dim = 0;   // D_m, per modality
  int embed_dim = 512; // d_e
  // mlp
  std::vector<int> hidden = {512};
  // tcn
  int tcn_kernel = 3;
  std::vector<int> tcn_dilations = {1, 2, 4};
  int tcn_channels = 64;
  // attn
  int attn_heads = 4;
  int attn_dim = 64;
  int attn_ff = 128;

  uint64_t init_seed = 0;

  void validate() const {
    if (input_dim <= 0) throw_config("encoder: input_dim must be positive");
    if (embed_dim <= 0) throw_config("encoder: embed_dim must be positive");
    if (kind == EncoderKind::mlp) {
      for (int h : hidden)
        if (h <= 0) throw_config("encoder: mlp hidden sizes must be positive");
    }
    if (kind == EncoderKind::tcn) {
      if (tcn_kernel < 1) throw_config("encoder: tcn kernel width must be >= 1");
      if (tcn_channels <= 0) throw_config("encoder: tcn channels must be positive");
      if (tcn_dilations.empty()) throw_config("encoder: tcn needs at least one dilation");
      int prev = 0;
      for (int d : tcn_dilations) {
        if (d <= prev || (d & (d - 1)) != 0)
          throw_config("encoder: tcn dilations must be strictly increasing powers of 2");
        prev = d;
      }
    }
    if (kind == EncoderKind::attn) {
      if (attn_heads <= 0 || attn_dim <= 0 || attn_ff <= 0)
        throw_config("encoder: attn dims must be positive");
      if (attn_dim % attn_heads != 0)
        throw_config("encoder: head count " + std::to_string(attn_heads) +
                     " must divide model width " + std::to_string(attn_dim));
    }
  }
};

struct ProjectionConfig {
  int in_dim = 512;
  int hidden_dim = 512;
  int out_dim = 256; // d_p

  void validate() const {
    if (in_dim <= 0 || hidden_dim <= 0 || out_dim <= 0)
      throw_config("projection: all dims must be positive");
  }
};

// One modality's per-sample frame sequences; lengths T_i may differ, the
// feature width D_m may not.
struct SequenceBatch {
  int modality = 0;
  std::vector<Matrix> items;

  void validate(int expect_dim) const {
    if (items.empty()) throw_data("SequenceBatch: empty batch");
    for (size_t i = 0; i < items.size(); ++i) {
      if (items[i].rows() < 1)
        throw_data("SequenceBatch: item " + std::to_string(i) + " has no frames");
      if (items[i].cols() != expect_dim)
        throw_shape("SequenceBatch: item " + std::to_string(i) + " has dim " +
                    std::to_string(items[i].cols()) + ", expected " +
                    std::to_string(expect_dim));
    }
  }
};

namespace detail {

struct LayerDef {
  std::string name;
  int rows;
  int cols;
  bool is_bias;
};

// Uniform fan-in scaled init: weights in +-sqrt(6/(fan_in+fan_out)),
// biases zero. Draw order is the definition order, so a seed pins every
// parameter bit.
inline void init_layers(const std::vector<LayerDef>& defs, const std::string& prefix,
                        ParamStore& store, Rng& rng) {
  for (const LayerDef& d : defs) {
    if (d.is_bias) {
      store.add(prefix + "." + d.name, Matrix::zeros(d.rows, d.cols));
    } else {
      double bound = std::sqrt(6.0 / (d.rows + d.cols));
      store.add(prefix + "." + d.name, Matrix::random_uniform(d.rows, d.cols, -bound, bound, rng));
    }
  }
}

}  // namespace detail

// Sequence -> fixed d_e embedding. Holds no state of its own; parameters
// live in the ParamStore under `prefix`.
class EncoderNet {
 public:
  EncoderNet() = default;
  EncoderNet(EncoderConfig cfg, std::string prefix)
      : cfg_(std::move(cfg)), prefix_(std::move(prefix)) {
    cfg_.validate();
  }

  const EncoderConfig& config() const { return cfg_; }
  const std::string& prefix() const { return prefix_; }

  std::vector<detail::LayerDef> layer_defs() const {
    std::vector<detail::LayerDef> defs;
    switch (cfg_.kind) {
      case EncoderKind::mlp: {
        int in = cfg_.input_dim;
        for (size_t i = 0; i < cfg_.hidden.size(); ++i) {
          defs.push_back({"fc" + std::to_string(i) + ".w", in, cfg_.hidden[i], false});
          defs.push_back({"fc" + std::to_string(i) + ".b", 1, cfg_.hidden[i], true});
          in = cfg_.hidden[i];
        }
        defs.push_back({"out.w", in, cfg_.embed_dim, false});
        defs.push_back({"out.b", 1, cfg_.embed_dim, true});
        break;
      }
      case EncoderKind::tcn: {
        int in = cfg_.input_dim;
        for (size_t l = 0; l < cfg_.tcn_dilations.size(); ++l) {
          defs.push_back({"conv" + std::to_string(l) + ".w", cfg_.tcn_kernel * in,
                          cfg_.tcn_channels, false});
          defs.push_back({"conv" + std::to_string(l) + ".b", 1, cfg_.tcn_channels, true});
          in = cfg_.tcn_channels;
        }
        defs.push_back({"out.w", in, cfg_.embed_dim, false});
        defs.push_back({"out.b", 1, cfg_.embed_dim, true});
        break;
      }
      case EncoderKind::attn: {
        int dm = cfg_.attn_dim, dh = dm / cfg_.attn_heads;
        defs.push_back({"embed.w", cfg_.input_dim, dm, false});
        defs.push_back({"embed.b", 1, dm, true});
        for (int h = 0; h < cfg_.attn_heads; ++h) {
          std::string hp = "h" + std::to_string(h);
          defs.push_back({hp + ".wq", dm, dh, false});
          defs.push_back({hp + ".wk", dm, dh, false});
          defs.push_back({hp + ".wv", dm, dh, false});
        }
        defs.push_back({"attn_out.w", dm, dm, false});
        defs.push_back({"attn_out.b", 1, dm, true});
        defs.push_back({"ff1.w", dm, cfg_.attn_ff, false});
        defs.push_back({"ff1.b", 1, cfg_.attn_ff, true});
        defs.push_back({"ff2.w", cfg_.attn_ff, dm, false});
        defs.push_back({"ff2.b", 1, dm, true});
        defs.push_back({"out.w", dm, cfg_.embed_dim, false});
        defs.push_back({"out.b", 1, cfg_.embed_dim, true});
        break;
      }
    }
    return defs;
  }

  void init_params(ParamStore& store, Rng& rng) const {
    detail::init_layers(layer_defs(), prefix_, store, rng);
  }

  // N x d_e node; per-sample subgraphs share one set of parameter leaves.
  Tape::NodeId forward(Tape& tape, const SequenceBatch& batch, const ParamStore& store) const {
    batch.validate(cfg_.input_dim);
    ParamNodes p(*this, tape, store);
    std::vector<Tape::NodeId> rows;
    rows.reserve(batch.items.size());
    for (const Matrix& item : batch.items)
      rows.push_back(forward_item(tape, tape.input(item), p));
    return tape.vstack(rows);
  }

  // Value-only path for inference; no gradients recorded outside the local tape.
  Matrix encode(const SequenceBatch& batch, const ParamStore& store) const {
    Tape tape;
    Matrix out = tape.value(forward(tape, batch, store));
    require_finite(out, "encode");
    return out;
  }

 private:
  struct ParamNodes {
    const EncoderNet& net;
    Tape& tape;
    std::vector<Tape::NodeId> ids;
    std::vector<std::string> names;

    ParamNodes(const EncoderNet& n, Tape& t, const ParamStore& store) : net(n), tape(t) {
      for (const auto& d : n.layer_defs()) {
        names.push_back(d.name);
        ids.push_back(t.param(n.prefix_ + "." + d.name, store));
      }
    }
    Tape::NodeId operator[](const std::string& name) const {
      for (size_t i = 0; i < names.size(); ++i)
        if (names[i] == name) return ids[i];
      throw_config("encoder: no layer '" + name + "'");
    }
  };

  Tape::NodeId forward_item(Tape& tape, Tape::NodeId x, const ParamNodes& p) const {
    switch (cfg_.kind) {
      case EncoderKind::mlp: return forward_mlp(tape, x, p);
      case EncoderKind::tcn: return forward_tcn(tape, x, p);
      case EncoderKind::attn: return forward_attn(tape, x, p);
    }
    throw_config("encoder: bad kind");
  }

  Tape::NodeId forward_mlp(Tape& tape, Tape::NodeId x, const ParamNodes& p) const {
    Tape::NodeId h = tape.mean_rows(x);
    for (size_t i = 0; i < cfg_.hidden.size(); ++i) {
      std::string fc = "fc" + std::to_string(i);
      h = tape.relu(tape.add_row(tape.matmul(h, p[fc + ".w"]), p[fc + ".b"]));
    }
    return tape.add_row(tape.matmul(h, p["out.w"]), p["out.b"]);
  }

  Tape::NodeId forward_tcn(Tape& tape, Tape::NodeId x, const ParamNodes& p) const {
    // First conv embeds the raw input; residuals apply from the second
    // layer on, where channel counts match.
    Tape::NodeId h = x;
    const size_t L = cfg_.tcn_dilations.size();
    for (size_t l = 0; l < L; ++l) {
      std::string cv = "conv" + std::to_string(l);
      Tape::NodeId g = tape.gather_dilated(h, cfg_.tcn_kernel, cfg_.tcn_dilations[l]);
      Tape::NodeId u = tape.add_row(tape.matmul(g, p[cv + ".w"]), p[cv + ".b"]);
      if (l > 0 && tape.value(h).cols() == tape.value(u).cols()) u = tape.add(u, h);
      h = (l + 1 < L) ? tape.relu(u) : u;
    }
    Tape::NodeId pooled = tape.mean_rows(h);
    return tape.add_row(tape.matmul(pooled, p["out.w"]), p["out.b"]);
  }

  Tape::NodeId forward_attn(Tape& tape, Tape::NodeId x, const ParamNodes& p) const {
    const int dh = cfg_.attn_dim / cfg_.attn_heads;
    Tape::NodeId xe = tape.add_row(tape.matmul(x, p["embed.w"]), p["embed.b"]);
    std::vector<Tape::NodeId> heads;
    for (int h = 0; h < cfg_.attn_heads; ++h) {
      std::string hp = "h" + std::to_string(h);
      Tape::NodeId q = tape.matmul(xe, p[hp + ".wq"]);
      Tape::NodeId k = tape.matmul(xe, p[hp + ".wk"]);
      Tape::NodeId v = tape.matmul(xe, p[hp + ".wv"]);
      Tape::NodeId scores = tape.scale(tape.matmul_nt(q, k), 1.0 / std::sqrt(double(dh)));
      heads.push_back(tape.matmul(tape.softmax_rows(scores), v));
    }
    Tape::NodeId attn =
        tape.add_row(tape.matmul(tape.hconcat(heads), p["attn_out.w"]), p["attn_out.b"]);
    Tape::NodeId x1 = tape.add(xe, attn);
    Tape::NodeId ff = tape.add_row(
        tape.matmul(tape.relu(tape.add_row(tape.matmul(x1, p["ff1.w"]), p["ff1.b"])),
                    p["ff2.w"]),
        p["ff2.b"]);
    Tape::NodeId x2 = tape.add(x1, ff);
    Tape::NodeId pooled = tape.mean_rows(x2);
    return tape.add_row(tape.matmul(pooled, p["out.w"]), p["out.b"]);
  }

  EncoderConfig cfg_;
  std::string prefix_;
};

// fc1 + ReLU + fc2 head mapping embeddings f into the contrastive space z.
// Output is intentionally not normalized; the loss normalizes.
class ProjectionNet {
 public:
  ProjectionNet() = default;
  ProjectionNet(ProjectionConfig cfg, std::string prefix)
      : cfg_(cfg), prefix_(std::move(prefix)) {
    cfg_.validate();
  }

  const ProjectionConfig& config() const { return cfg_; }

  void init_params(ParamStore& store, Rng& rng) const {
    detail::init_layers({{"fc1.w", cfg_.in_dim, cfg_.hidden_dim, false},
                         {"fc1.b", 1, cfg_.hidden_dim, true},
                         {"fc2.w", cfg_.hidden_dim, cfg_.out_dim, false},
                         {"fc2.b", 1, cfg_.out_dim, true}},
                        prefix_, store, rng);
  }

  Tape::NodeId forward(Tape& tape, Tape::NodeId f, const ParamStore& store) const {
    if (tape.value(f).cols() != cfg_.in_dim)
      throw_shape("projection: input dim " + std::to_string(tape.value(f).cols()) +
                  ", expected " + std::to_string(cfg_.in_dim));
    Tape::NodeId h = tape.relu(tape.add_row(
        tape.matmul(f, tape.param(prefix_ + ".fc1.w", store)),
        tape.param(prefix_ + ".fc1.b", store)));
    return tape.add_row(tape.matmul(h, tape.param(prefix_ + ".fc2.w", store)),
                        tape.param(prefix_ + ".fc2.b", store));
  }

  Matrix project(const Matrix& f, const ParamStore& store) const {
    Tape tape;
    return tape.value(forward(tape, tape.input(f), store));
  }

 private:
  ProjectionConfig cfg_;
  std::string prefix_;
};

}  // namespace mmcl
