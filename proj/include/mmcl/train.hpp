#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <memory>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "mmcl/data.hpp"
#include "mmcl/encoders.hpp"
#include "mmcl/error.hpp"
#include "mmcl/loss.hpp"
#include "mmcl/matrix.hpp"
#include "mmcl/param_store.hpp"
#include "mmcl/rng.hpp"
#include "mmcl/tape.hpp"

namespace mmcl {

struct TrainConfig {
  int batch_size = 32;        // probes default to 64 at their call site
  double lr0 = 0.001;
  double momentum = 0.9;
  double weight_decay = 0.001;
  double lr_decay = 0.9;
  int lr_decay_every = 100;   // epochs per decay step
  int max_epochs = 2000;
  int patience = 100;
  double tolerance = 1e-6;    // improvement smaller than this does not count
  int window_len = 16;        // temporal augmentation window (pretraining only)
  double val_fraction = 0.1;  // held-out share when no explicit split is given
  uint64_t seed = 42;

  void validate() const {
    if (batch_size < 2) throw_config("train: batch_size must be >= 2");
    if (lr0 < 0) throw_config("train: lr0 must be >= 0");
    if (momentum < 0 || momentum >= 1) throw_config("train: momentum must be in [0,1)");
    if (weight_decay < 0) throw_config("train: weight_decay must be >= 0");
    if (lr_decay <= 0 || lr_decay > 1) throw_config("train: lr_decay must be in (0,1]");
    if (lr_decay_every < 1) throw_config("train: lr_decay_every must be >= 1");
    if (max_epochs < 1) throw_config("train: max_epochs must be >= 1");
    if (patience < 1 || patience > max_epochs)
      throw_config("train: need 1 <= patience <= max_epochs");
    if (tolerance < 0) throw_config("train: tolerance must be >= 0");
    if (window_len < 1) throw_config("train: window_len must be >= 1");
    if (val_fraction <= 0 || val_fraction > 0.5)
      throw_config("train: val_fraction must be in (0, 0.5]");
  }
};

// lr0 * decay^(epoch / every), epoch counted from 0
inline double lr_at(int epoch, const TrainConfig& cfg) {
  if (epoch < 0) throw_config("lr_at: epoch must be >= 0");
  return cfg.lr0 * std::pow(cfg.lr_decay, epoch / cfg.lr_decay_every);
}

struct OptimizerState {
  std::map<std::string, Matrix> velocity;

  Matrix& velocity_for(const std::string& name, int rows, int cols) {
    auto it = velocity.find(name);
    if (it == velocity.end())
      it = velocity.emplace(name, Matrix::zeros(rows, cols)).first;
    if (it->second.rows() != rows || it->second.cols() != cols)
      throw_protocol("optimizer: velocity shape drift for '" + name + "'");
    return it->second;
  }
};

// classical momentum with weight decay folded into the gradient:
//   g' = g + wd*w;  v <- mu*v + g';  w <- w - lr*v
inline void sgd_step(ParamStore& params, OptimizerState& state, double lr, double momentum,
                     double weight_decay) {
  for (auto& e : params.entries()) {
    Matrix& v = state.velocity_for(e.name, e.value.rows(), e.value.cols());
    for (size_t i = 0; i < e.value.data().size(); ++i) {
      const double g = e.grad.data()[i] + weight_decay * e.value.data()[i];
      v.data()[i] = momentum * v.data()[i] + g;
      e.value.data()[i] -= lr * v.data()[i];
    }
  }
}

// Minimizing monitor. The first observation is the baseline; each later value
// must beat the best by more than the tolerance to reset the counter. A true
// return means "patience consecutive non-improving updates since the best".
class PatienceMonitor {
 public:
  PatienceMonitor(int patience, double tolerance = 1e-6)
      : patience_(patience), tolerance_(tolerance) {
    if (patience < 1) throw_config("patience must be >= 1");
  }

  bool observe(double value) {
    if (!has_best_ || value < best_ - tolerance_) {
      has_best_ = true;
      best_ = value;
      since_ = 0;
      improved_ = true;
      return false;
    }
    improved_ = false;
    ++since_;
    return since_ >= patience_;
  }

  bool last_improved() const { return improved_; }
  double best() const { return best_; }
  int since() const { return since_; }

 private:
  int patience_;
  double tolerance_;
  bool has_best_ = false;
  bool improved_ = false;
  double best_ = std::numeric_limits<double>::infinity();
  int since_ = 0;
};

// ---------------------------------------------------------------------------
// pretraining

struct PretrainSetup {
  std::map<int, EncoderConfig> encoders; // by modality id
  ProjectionConfig projection;
  LossConfig loss;
  TrainConfig train;
};

struct EpochRecord {
  int epoch = 0;
  double lr = 0;
  double train_loss = 0; // per-sample (batch totals / samples seen)
  double val_loss = 0;
  double seconds = 0; // wall time; the one nondeterministic log field
};

struct PretrainResult {
  ParamStore params; // best-validation snapshot
  std::vector<EpochRecord> log;
  int best_epoch = 0;
  double best_val = 0;
  int epochs_run = 0;
};

namespace detail {

struct ModalityNets {
  std::map<int, EncoderNet> encoders;
  std::map<int, ProjectionNet> projections;
};

inline ModalityNets build_nets(const std::map<int, EncoderConfig>& encoder_cfgs,
                               const ProjectionConfig& proj_cfg) {
  if (encoder_cfgs.empty()) throw_config("no encoder configs given");
  proj_cfg.validate();
  ModalityNets nets;
  for (const auto& [id, cfg] : encoder_cfgs) {
    cfg.validate();
    if (cfg.embed_dim != proj_cfg.in_dim)
      throw_config("modality " + std::to_string(id) + ": encoder embed_dim " +
                   std::to_string(cfg.embed_dim) + " != projection in_dim " +
                   std::to_string(proj_cfg.in_dim));
    const std::string tag = std::to_string(id);
    nets.encoders.emplace(id, EncoderNet(cfg, "enc" + tag));
    nets.projections.emplace(id, ProjectionNet(proj_cfg, "proj" + tag));
  }
  return nets;
}

inline void init_nets(ModalityNets& nets, ParamStore& store, Rng& rng) {
  for (auto& [id, enc] : nets.encoders) {
    enc.init_params(store, rng);
    nets.projections.at(id).init_params(store, rng);
  }
}

// projections for one mini-batch, full sequences, values only (no tape)
inline std::map<int, Matrix> project_batch_eval(const ModalityNets& nets, const ParamStore& store,
                                                const std::vector<UnlabeledSample>& batch) {
  std::map<int, Matrix> z;
  for (const auto& [id, enc] : nets.encoders) {
    SequenceBatch sb;
    sb.modality = id;
    for (const auto& s : batch) {
      auto it = s.streams->find(id);
      if (it == s.streams->end())
        throw_data("sample '" + *s.id + "' is missing modality " + std::to_string(id));
      sb.items.push_back(it->second);
    }
    Matrix f = enc.encode(sb, store);
    z.emplace(id, nets.projections.at(id).project(f, store));
  }
  return z;
}

inline void check_embeddings_alive(const std::map<int, Matrix>& z,
                                   const std::vector<UnlabeledSample>& batch) {
  for (const auto& [id, m] : z)
    for (int i = 0; i < m.rows(); ++i) {
      double norm = 0;
      for (int j = 0; j < m.cols(); ++j) norm += m(i, j) * m(i, j);
      if (std::sqrt(norm) < kDegenerateNorm)
        throw_numeric("degenerate embedding: sample '" + *batch[i].id + "', modality " +
                      std::to_string(id));
    }
}

// per-sample mean loss over fixed-order batches, full sequences; used for
// validation (no augmentation at evaluation time)
inline double eval_loss(const ModalityNets& nets, const ParamStore& store,
                        const std::vector<UnlabeledSample>& data, const LossConfig& loss_cfg,
                        int batch_size) {
  double total = 0;
  int count = 0;
  for (size_t off = 0; off < data.size(); off += batch_size) {
    const size_t end = std::min(data.size(), off + batch_size);
    if (end - off < 2) break; // loss needs at least one negative
    std::vector<UnlabeledSample> batch(data.begin() + off, data.begin() + end);
    std::map<int, Matrix> z = project_batch_eval(nets, store, batch);
    check_embeddings_alive(z, batch);
    total += final_loss(z, loss_cfg).total;
    count += static_cast<int>(batch.size());
  }
  if (count == 0) throw_data("eval_loss: no batch with >= 2 samples");
  return total / count;
}

}  // namespace detail

// One optimization epoch over pre-shuffled data. Windows are drawn from rng
// modality-major within each batch. Returns per-sample mean train loss.
inline double pretrain_epoch(detail::ModalityNets& nets, ParamStore& store, OptimizerState& opt,
                             const std::vector<UnlabeledSample>& data, const PretrainSetup& setup,
                             double lr, Rng& rng) {
  double total = 0;
  int count = 0;
  const int bs = setup.train.batch_size;
  for (size_t off = 0; off < data.size(); off += bs) {
    const size_t end = std::min(data.size(), off + static_cast<size_t>(bs));
    if (end - off < 2) break; // drop a final short batch that has no negatives
    std::vector<UnlabeledSample> batch(data.begin() + off, data.begin() + end);

    store.zero_grads();
    std::map<int, Tape> tapes;
    std::map<int, int> z_nodes;
    std::map<int, Matrix> z_values;
    for (const auto& [id, enc] : nets.encoders) {
      SequenceBatch sb;
      sb.modality = id;
      for (const auto& s : batch) {
        auto it = s.streams->find(id);
        if (it == s.streams->end())
          throw_data("sample '" + *s.id + "' is missing modality " + std::to_string(id));
        sb.items.push_back(temporal_window(it->second, setup.train.window_len, rng));
      }
      Tape& tape = tapes.emplace(id, Tape{}).first->second;
      const int f = enc.forward(tape, sb, store);
      const int z = nets.projections.at(id).forward(tape, f, store);
      z_nodes[id] = z;
      z_values.emplace(id, tape.value(z));
    }
    detail::check_embeddings_alive(z_values, batch);

    FinalLossWithGrads lg = final_loss_with_gradients(z_values, setup.loss);
    for (auto& [id, tape] : tapes) tape.backward(z_nodes[id], lg.grads.at(id), store);
    sgd_step(store, opt, lr, setup.train.momentum, setup.train.weight_decay);

    total += lg.loss.total;
    count += static_cast<int>(batch.size());
  }
  if (count == 0) throw_data("pretrain: no batch with >= 2 samples");
  return total / count;
}

// Full pretraining loop with an explicit validation set. Labels never enter:
// the view type carries streams and ids only.
inline PretrainResult pretrain(const std::vector<UnlabeledSample>& train_data,
                               const std::vector<UnlabeledSample>& val_data,
                               const PretrainSetup& setup) {
  setup.train.validate();
  setup.loss.validate();
  if (setup.encoders.size() < 2)
    throw_config("pretrain: need >= 2 modalities, have " + std::to_string(setup.encoders.size()));
  if (train_data.size() < 2) throw_data("pretrain: need >= 2 training samples");
  if (val_data.size() < 2) throw_data("pretrain: need >= 2 validation samples");

  detail::ModalityNets nets = detail::build_nets(setup.encoders, setup.projection);
  PretrainResult res;
  Rng init_rng(derive_seed(setup.train.seed, "init"));
  detail::init_nets(nets, res.params, init_rng);

  OptimizerState opt;
  PatienceMonitor monitor(setup.train.patience, setup.train.tolerance);
  ParamStore best = res.params;
  int best_epoch = 0;
  double best_val = 0;

  std::vector<int> order(train_data.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 1; epoch <= setup.train.max_epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const double lr = lr_at(epoch - 1, setup.train);
    Rng epoch_rng(derive_seed(setup.train.seed, "epoch." + std::to_string(epoch)));
    epoch_rng.shuffle(order);
    std::vector<UnlabeledSample> shuffled;
    shuffled.reserve(order.size());
    for (int i : order) shuffled.push_back(train_data[i]);

    const double train_loss =
        pretrain_epoch(nets, res.params, opt, shuffled, setup, lr, epoch_rng);
    const double val_loss =
        detail::eval_loss(nets, res.params, val_data, setup.loss, setup.train.batch_size);

    const bool stop = monitor.observe(val_loss);
    if (monitor.last_improved()) {
      best = res.params;
      best_epoch = epoch;
      best_val = val_loss;
    }
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    res.log.push_back({epoch, lr, train_loss, val_loss, seconds});
    res.epochs_run = epoch;
    if (stop) break;
  }

  res.params = std::move(best);
  res.best_epoch = best_epoch;
  res.best_val = best_val;
  return res;
}

// Convenience split: seeded shuffle, val_fraction held out (at least 2
// samples on both sides).
inline std::pair<std::vector<int>, std::vector<int>> split_train_val(int n, double val_fraction,
                                                                     uint64_t seed) {
  if (n < 4) throw_data("split_train_val: need >= 4 samples, have " + std::to_string(n));
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(derive_seed(seed, "valsplit"));
  rng.shuffle(idx);
  int n_val = std::max(2, static_cast<int>(std::lround(val_fraction * n)));
  if (n - n_val < 2) n_val = n - 2;
  std::vector<int> val(idx.begin(), idx.begin() + n_val);
  std::vector<int> train(idx.begin() + n_val, idx.end());
  return {train, val};
}

inline PretrainResult pretrain(const std::vector<UnlabeledSample>& data,
                               const PretrainSetup& setup) {
  auto [train_idx, val_idx] = split_train_val(static_cast<int>(data.size()),
                                              setup.train.val_fraction, setup.train.seed);
  std::vector<UnlabeledSample> tr, va;
  for (int i : train_idx) tr.push_back(data[i]);
  for (int i : val_idx) va.push_back(data[i]);
  return pretrain(tr, va, setup);
}

// ---------------------------------------------------------------------------
// checkpoint container: magic "MPCK", u32 version, u64 seed, length-prefixed
// config JSON, then named parameter blobs (u32 rows, u32 cols, f64 LE data)

namespace detail {

inline void put_u64_le(std::string& buf, uint64_t v) {
  for (int k = 0; k < 8; ++k) buf.push_back(static_cast<char>((v >> (8 * k)) & 0xff));
}

inline uint64_t get_u64_le(const unsigned char* p) {
  uint64_t v = 0;
  for (int k = 0; k < 8; ++k) v |= static_cast<uint64_t>(p[k]) << (8 * k);
  return v;
}

inline void put_f64_le(std::string& buf, double d) {
  static_assert(sizeof(double) == 8);
  uint64_t bits;
  std::memcpy(&bits, &d, 8);
  put_u64_le(buf, bits);
}

inline double get_f64_le(const unsigned char* p) {
  uint64_t bits = get_u64_le(p);
  double d;
  std::memcpy(&d, &bits, 8);
  return d;
}

}  // namespace detail

struct Checkpoint {
  uint64_t seed = 0;
  ojson config; // enough to rebuild the nets: modalities, encoder/projection/loss/train configs
  ParamStore params;
};

inline constexpr uint32_t kCheckpointVersion = 1;

inline void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path) {
  std::string buf = "MPCK";
  detail::put_u32_le(buf, kCheckpointVersion);
  detail::put_u64_le(buf, ck.seed);
  const std::string cfg = ck.config.dump();
  detail::put_u32_le(buf, static_cast<uint32_t>(cfg.size()));
  buf += cfg;
  detail::put_u32_le(buf, static_cast<uint32_t>(ck.params.size()));
  for (const auto& e : ck.params.entries()) {
    detail::put_u32_le(buf, static_cast<uint32_t>(e.name.size()));
    buf += e.name;
    detail::put_u32_le(buf, static_cast<uint32_t>(e.value.rows()));
    detail::put_u32_le(buf, static_cast<uint32_t>(e.value.cols()));
    for (double d : e.value.data()) detail::put_f64_le(buf, d);
  }
  detail::write_entire_file(path, buf);
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const std::string bytes = detail::read_entire_file(path);
  const unsigned char* p = reinterpret_cast<const unsigned char*>(bytes.data());
  size_t off = 0;
  auto need = [&](size_t n) {
    if (bytes.size() - off < n) throw_data("'" + path.string() + "': truncated checkpoint");
  };
  need(4);
  if (std::memcmp(p, "MPCK", 4) != 0)
    throw_data("'" + path.string() + "': bad magic, not a checkpoint");
  off = 4;
  need(4);
  const uint32_t version = detail::get_u32_le(p + off);
  off += 4;
  if (version != kCheckpointVersion)
    throw_data("'" + path.string() + "': unsupported checkpoint version " +
               std::to_string(version));
  Checkpoint ck;
  need(8);
  ck.seed = detail::get_u64_le(p + off);
  off += 8;
  need(4);
  const uint32_t cfg_len = detail::get_u32_le(p + off);
  off += 4;
  need(cfg_len);
  try {
    ck.config = ojson::parse(bytes.substr(off, cfg_len));
  } catch (const std::exception& e) {
    throw_data("'" + path.string() + "': bad config block: " + e.what());
  }
  off += cfg_len;
  need(4);
  const uint32_t count = detail::get_u32_le(p + off);
  off += 4;
  for (uint32_t i = 0; i < count; ++i) {
    need(4);
    const uint32_t name_len = detail::get_u32_le(p + off);
    off += 4;
    need(name_len);
    const std::string name = bytes.substr(off, name_len);
    off += name_len;
    need(8);
    const int rows = static_cast<int>(detail::get_u32_le(p + off));
    const int cols = static_cast<int>(detail::get_u32_le(p + off + 4));
    off += 8;
    need(static_cast<size_t>(rows) * cols * 8);
    Matrix m(rows, cols);
    for (int k = 0; k < rows * cols; ++k) m.data()[k] = detail::get_f64_le(p + off + 8 * k);
    off += static_cast<size_t>(rows) * cols * 8;
    ck.params.add(name, std::move(m));
  }
  if (off != bytes.size()) throw_data("'" + path.string() + "': trailing bytes after checkpoint");
  return ck;
}

// one JSON object per line, schema {epoch, lr, train_loss, val_loss, seconds}
inline void write_train_log(const std::vector<EpochRecord>& log,
                            const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw_data("cannot write '" + path.string() + "'");
  for (const auto& r : log) {
    ojson j;
    j["epoch"] = r.epoch;
    j["lr"] = r.lr;
    j["train_loss"] = r.train_loss;
    j["val_loss"] = r.val_loss;
    j["seconds"] = r.seconds;
    out << j.dump() << '\n';
  }
}

}  // namespace mmcl
