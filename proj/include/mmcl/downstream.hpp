#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "mmcl/config_json.hpp"
#include "mmcl/data.hpp"
#include "mmcl/encoders.hpp"
#include "mmcl/error.hpp"
#include "mmcl/matrix.hpp"
#include "mmcl/param_store.hpp"
#include "mmcl/rng.hpp"
#include "mmcl/tape.hpp"
#include "mmcl/train.hpp"

namespace mmcl {

// ---------------------------------------------------------------------------
// frozen-feature extraction

// Pre-projection embeddings for a set of samples, full sequences (no
// augmentation at inference), one N x d_e matrix per modality.
inline std::map<int, Matrix> extract_embeddings(const detail::ModalityNets& nets,
                                                const ParamStore& params,
                                                const std::vector<UnlabeledSample>& samples) {
  if (samples.empty()) throw_data("extract_embeddings: no samples");
  std::map<int, Matrix> out;
  for (const auto& [id, enc] : nets.encoders) {
    SequenceBatch sb;
    sb.modality = id;
    for (const auto& s : samples) {
      auto it = s.streams->find(id);
      if (it == s.streams->end())
        throw_data("sample '" + *s.id + "' is missing modality " + std::to_string(id));
      sb.items.push_back(it->second);
    }
    out.emplace(id, enc.encode(sb, params));
  }
  return out;
}

inline std::map<int, std::vector<double>> extract_features(const detail::ModalityNets& nets,
                                                           const ParamStore& params,
                                                           const UnlabeledSample& sample) {
  std::map<int, Matrix> em = extract_embeddings(nets, params, {sample});
  std::map<int, std::vector<double>> out;
  for (const auto& [id, m] : em) out.emplace(id, m.data());
  return out;
}

// Concatenation in ascending modality id order; the input being an ordered
// map makes the order independent of how callers assembled it.
inline Matrix fuse_concat(const std::map<int, Matrix>& by_modality) {
  if (by_modality.empty()) throw_data("fuse_concat: no modalities");
  const int n = by_modality.begin()->second.rows();
  int width = 0;
  for (const auto& [id, m] : by_modality) {
    if (m.rows() != n) throw_shape("fuse_concat: row count mismatch");
    width += m.cols();
  }
  Matrix fused(n, width);
  int off = 0;
  for (const auto& [id, m] : by_modality) {
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < m.cols(); ++j) fused(i, off + j) = m(i, j);
    off += m.cols();
  }
  return fused;
}

// ---------------------------------------------------------------------------
// prediction-head losses (value plus dLoss/dlogits, both analytic)

// mean over rows of -log softmax(logits)[label]
inline double softmax_cross_entropy(const Matrix& logits, const std::vector<int>& labels,
                                    Matrix* dlogits = nullptr) {
  const int n = logits.rows(), c = logits.cols();
  if (static_cast<int>(labels.size()) != n)
    throw_shape("cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                std::to_string(n) + " rows");
  if (dlogits) *dlogits = Matrix(n, c);
  std::vector<double> lse = log_sum_exp_row(logits);
  double total = 0;
  for (int i = 0; i < n; ++i) {
    const int y = labels[i];
    if (y < 0 || y >= c) throw_data("cross_entropy: label out of range");
    total += lse[i] - logits(i, y);
    if (dlogits)
      for (int j = 0; j < c; ++j)
        (*dlogits)(i, j) = (std::exp(logits(i, j) - lse[i]) - (j == y ? 1.0 : 0.0)) / n;
  }
  return total / n;
}

// mean over rows and classes of the per-entry binary cross-entropy against
// sigmoid(logit), in the overflow-free max(s,0) - s*y + log1p(exp(-|s|)) form
inline double sigmoid_binary_cross_entropy(const Matrix& logits, const Matrix& targets,
                                           Matrix* dlogits = nullptr) {
  detail::check_same_shape(logits, targets, "binary_cross_entropy");
  const int n = logits.rows(), c = logits.cols();
  if (dlogits) *dlogits = Matrix(n, c);
  double total = 0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < c; ++j) {
      const double s = logits(i, j), y = targets(i, j);
      if (y != 0.0 && y != 1.0) throw_data("binary_cross_entropy: targets must be 0 or 1");
      total += std::max(s, 0.0) - s * y + std::log1p(std::exp(-std::abs(s)));
      if (dlogits) {
        const double sig = 1.0 / (1.0 + std::exp(-s));
        (*dlogits)(i, j) = (sig - y) / (static_cast<double>(n) * c);
      }
    }
  return total / (static_cast<double>(n) * c);
}

inline std::vector<int> predict_multiclass(const Matrix& logits) {
  std::vector<int> out(logits.rows());
  for (int i = 0; i < logits.rows(); ++i) {
    int best = 0;
    for (int j = 1; j < logits.cols(); ++j)
      if (logits(i, j) > logits(i, best)) best = j;
    out[i] = best;
  }
  return out;
}

inline Matrix predict_multilabel(const Matrix& logits, double threshold) {
  if (threshold <= 0 || threshold >= 1) throw_config("predict: threshold must be in (0,1)");
  Matrix out(logits.rows(), logits.cols());
  for (size_t i = 0; i < logits.size(); ++i) {
    const double sig = 1.0 / (1.0 + std::exp(-logits.data()[i]));
    out.data()[i] = sig >= threshold ? 1.0 : 0.0;
  }
  return out;
}

// ---------------------------------------------------------------------------
// metrics

struct ClassReport {
  std::string name;
  long long tp = 0, fp = 0, tn = 0, fn = 0;
  double acc = 0;            // (tp+tn)/total
  bool has_wacc = false;     // needs P > 0 and Neg > 0
  double wacc = 0;
  bool has_f1 = false;       // needs 2tp+fp+fn > 0
  double f1 = 0;
};

struct MetricsReport {
  Task task = Task::multiclass;
  int total = 0;
  bool has_multiclass_acc = false;
  double multiclass_acc = 0;
  std::vector<ClassReport> per_class;
  bool has_overall_wacc = false;
  double overall_wacc = 0; // unweighted mean over classes where defined
  bool has_overall_f1 = false;
  double overall_f1 = 0;
  std::vector<std::string> warnings;

  // acc for multiclass, mean w-ACC for multilabel; the one number a method
  // gets compared by
  double primary() const {
    if (task == Task::multiclass) {
      if (!has_multiclass_acc) throw_data("metrics: no accuracy available");
      return multiclass_acc;
    }
    if (!has_overall_wacc) throw_data("metrics: no overall w-ACC available");
    return overall_wacc;
  }
};

namespace detail {

inline void finish_class_report(ClassReport& r, int total,
                                std::vector<std::string>& warnings) {
  const long long p = r.tp + r.fn, neg = r.tn + r.fp;
  r.acc = total ? static_cast<double>(r.tp + r.tn) / total : 0.0;
  if (p > 0 && neg > 0) {
    r.has_wacc = true;
    r.wacc = 0.5 * (static_cast<double>(r.tp) / p + static_cast<double>(r.tn) / neg);
  } else {
    warnings.push_back("class '" + r.name + "': w-ACC undefined (" +
                       (p == 0 ? "no positives" : "no negatives") + "), excluded from overall");
  }
  if (2 * r.tp + r.fp + r.fn > 0) {
    r.has_f1 = true;
    r.f1 = 2.0 * r.tp / static_cast<double>(2 * r.tp + r.fp + r.fn);
  } else {
    warnings.push_back("class '" + r.name + "': F1 undefined (no positives anywhere), excluded");
  }
}

inline void finish_overall(MetricsReport& m) {
  double wacc = 0, f1 = 0;
  int n_wacc = 0, n_f1 = 0;
  for (const auto& r : m.per_class) {
    if (r.has_wacc) {
      wacc += r.wacc;
      ++n_wacc;
    }
    if (r.has_f1) {
      f1 += r.f1;
      ++n_f1;
    }
  }
  if (n_wacc) {
    m.has_overall_wacc = true;
    m.overall_wacc = wacc / n_wacc;
  }
  if (n_f1) {
    m.has_overall_f1 = true;
    m.overall_f1 = f1 / n_f1;
  }
}

}  // namespace detail

inline MetricsReport compute_metrics(const std::vector<int>& pred, const std::vector<int>& label,
                                     const std::vector<std::string>& classes) {
  if (pred.size() != label.size()) throw_data("compute_metrics: length mismatch");
  if (pred.empty()) throw_data("compute_metrics: empty input");
  MetricsReport m;
  m.task = Task::multiclass;
  m.total = static_cast<int>(pred.size());
  int correct = 0;
  for (size_t i = 0; i < pred.size(); ++i) {
    if (pred[i] < 0 || pred[i] >= static_cast<int>(classes.size()) || label[i] < 0 ||
        label[i] >= static_cast<int>(classes.size()))
      throw_data("compute_metrics: class index out of range");
    if (pred[i] == label[i]) ++correct;
  }
  m.has_multiclass_acc = true;
  m.multiclass_acc = static_cast<double>(correct) / m.total;
  for (size_t c = 0; c < classes.size(); ++c) {
    ClassReport r;
    r.name = classes[c];
    for (size_t i = 0; i < pred.size(); ++i) {
      const bool pp = pred[i] == static_cast<int>(c), lp = label[i] == static_cast<int>(c);
      if (pp && lp) ++r.tp;
      else if (pp && !lp) ++r.fp;
      else if (!pp && lp) ++r.fn;
      else ++r.tn;
    }
    detail::finish_class_report(r, m.total, m.warnings);
    m.per_class.push_back(std::move(r));
  }
  detail::finish_overall(m);
  return m;
}

inline MetricsReport compute_metrics(const Matrix& pred, const Matrix& label,
                                     const std::vector<std::string>& classes) {
  detail::check_same_shape(pred, label, "compute_metrics");
  if (pred.rows() == 0) throw_data("compute_metrics: empty input");
  if (pred.cols() != static_cast<int>(classes.size()))
    throw_shape("compute_metrics: " + std::to_string(pred.cols()) + " columns for " +
                std::to_string(classes.size()) + " classes");
  MetricsReport m;
  m.task = Task::multilabel;
  m.total = pred.rows();
  for (int c = 0; c < pred.cols(); ++c) {
    ClassReport r;
    r.name = classes[c];
    for (int i = 0; i < pred.rows(); ++i) {
      const double pv = pred(i, c), lv = label(i, c);
      if ((pv != 0 && pv != 1) || (lv != 0 && lv != 1))
        throw_data("compute_metrics: multilabel entries must be 0 or 1");
      if (pv == 1 && lv == 1) ++r.tp;
      else if (pv == 1 && lv == 0) ++r.fp;
      else if (pv == 0 && lv == 1) ++r.fn;
      else ++r.tn;
    }
    detail::finish_class_report(r, m.total, m.warnings);
    m.per_class.push_back(std::move(r));
  }
  detail::finish_overall(m);
  return m;
}

inline ojson to_json(const MetricsReport& m) {
  ojson j;
  j["task"] = to_string(m.task);
  j["total"] = m.total;
  if (m.has_multiclass_acc) j["acc"] = m.multiclass_acc;
  ojson pc;
  for (const auto& r : m.per_class) {
    ojson c;
    c["tp"] = r.tp;
    c["fp"] = r.fp;
    c["tn"] = r.tn;
    c["fn"] = r.fn;
    c["acc"] = r.acc;
    c["wacc"] = r.has_wacc ? ojson(r.wacc) : ojson(nullptr);
    c["f1"] = r.has_f1 ? ojson(r.f1) : ojson(nullptr);
    pc[r.name] = std::move(c);
  }
  j["per_class"] = std::move(pc);
  ojson overall;
  overall["wacc"] = m.has_overall_wacc ? ojson(m.overall_wacc) : ojson(nullptr);
  overall["f1"] = m.has_overall_f1 ? ojson(m.overall_f1) : ojson(nullptr);
  j["overall"] = std::move(overall);
  j["warnings"] = m.warnings;
  return j;
}

// ---------------------------------------------------------------------------
// linear-evaluation probe (fc + ReLU + fc on frozen features)

enum class ProbeLoss { cross_entropy, binary_cross_entropy };

struct ProbeConfig {
  int hidden_dim = 512;
  ProbeLoss loss = ProbeLoss::cross_entropy;
  double threshold = 0.5; // multilabel decision cut
  TrainConfig train;      // probes default to larger batches than pretraining

  ProbeConfig() { train.batch_size = 64; }

  void validate() const {
    if (hidden_dim < 1) throw_config("probe: hidden_dim must be >= 1");
    if (threshold <= 0 || threshold >= 1) throw_config("probe: threshold must be in (0,1)");
    train.validate();
  }
};

struct ProbeData {
  Matrix features; // N x F, frozen
  Task task = Task::multiclass;
  std::vector<int> klass; // multiclass labels
  Matrix presence;        // multilabel targets, N x C
  std::vector<std::string> classes;

  int size() const { return features.rows(); }
  int num_classes() const { return static_cast<int>(classes.size()); }

  void validate() const {
    if (features.rows() < 1) throw_data("probe: no samples");
    if (classes.size() < 2) throw_data("probe: need >= 2 classes");
    if (task == Task::multiclass) {
      if (static_cast<int>(klass.size()) != features.rows())
        throw_data("probe: label count != feature rows");
      for (int y : klass)
        if (y < 0 || y >= num_classes()) throw_data("probe: class index out of range");
    } else {
      if (presence.rows() != features.rows() || presence.cols() != num_classes())
        throw_data("probe: presence matrix shape mismatch");
    }
  }

  ProbeData select(const std::vector<int>& idx) const {
    ProbeData out;
    out.task = task;
    out.classes = classes;
    out.features = Matrix(static_cast<int>(idx.size()), features.cols());
    if (task == Task::multilabel)
      out.presence = Matrix(static_cast<int>(idx.size()), presence.cols());
    for (size_t r = 0; r < idx.size(); ++r) {
      const int i = idx[r];
      for (int j = 0; j < features.cols(); ++j) out.features(static_cast<int>(r), j) = features(i, j);
      if (task == Task::multiclass)
        out.klass.push_back(klass[i]);
      else
        for (int j = 0; j < presence.cols(); ++j)
          out.presence(static_cast<int>(r), j) = presence(i, j);
    }
    return out;
  }
};

struct ProbeResult {
  ParamStore params; // fc1/fc2 under the "probe" prefix
  std::vector<EpochRecord> log;
  int best_epoch = 0;
  double best_metric = 0; // validation accuracy or mean w-ACC
  std::vector<std::string> warnings;
};

namespace detail {

inline ProjectionNet probe_head(const ProbeConfig& cfg, int in_dim, int num_classes) {
  ProjectionConfig pc;
  pc.in_dim = in_dim;
  pc.hidden_dim = cfg.hidden_dim;
  pc.out_dim = num_classes;
  return ProjectionNet(pc, "probe");
}

inline double probe_metric(const Matrix& logits, const ProbeData& data, double threshold) {
  if (data.task == Task::multiclass) {
    std::vector<int> pred = predict_multiclass(logits);
    int correct = 0;
    for (size_t i = 0; i < pred.size(); ++i)
      if (pred[i] == data.klass[i]) ++correct;
    return static_cast<double>(correct) / pred.size();
  }
  MetricsReport m = compute_metrics(predict_multilabel(logits, threshold), data.presence,
                                    data.classes);
  // all-undefined w-ACC (degenerate validation slice) counts as zero rather
  // than aborting a training run
  return m.has_overall_wacc ? m.overall_wacc : 0.0;
}

inline std::vector<std::string> absent_class_warnings(const ProbeData& data) {
  std::vector<std::string> w;
  for (int c = 0; c < data.num_classes(); ++c) {
    long long count = 0;
    if (data.task == Task::multiclass) {
      for (int y : data.klass) count += (y == c);
    } else {
      for (int i = 0; i < data.presence.rows(); ++i) count += (data.presence(i, c) == 1.0);
    }
    if (count == 0)
      w.push_back("class '" + data.classes[c] + "' has no training instances");
  }
  return w;
}

}  // namespace detail

// SGD on the head only; features never receive gradients (they are tape
// inputs, not parameters). Patience watches the validation metric.
//
// Features are standardized with train-split statistics so the head trains
// well regardless of feature scale; the scaler is an affine map, so it folds
// into the first layer afterwards and the returned parameters apply to raw
// features directly.
inline ProbeResult train_probe(const ProbeData& all_data, const ProbeConfig& cfg) {
  cfg.validate();
  all_data.validate();
  if (all_data.task == Task::multiclass && cfg.loss != ProbeLoss::cross_entropy)
    throw_config("probe: multiclass task needs cross_entropy loss");
  if (all_data.task == Task::multilabel && cfg.loss != ProbeLoss::binary_cross_entropy)
    throw_config("probe: multilabel task needs binary_cross_entropy loss");

  auto [train_idx, val_idx] =
      split_train_val(all_data.size(), cfg.train.val_fraction, cfg.train.seed);
  ProbeData train_data = all_data.select(train_idx);
  ProbeData val_data = all_data.select(val_idx);

  const int fdim = train_data.features.cols();
  Matrix mu(1, fdim), sd(1, fdim);
  for (int j = 0; j < fdim; ++j) {
    double m = 0;
    for (int i = 0; i < train_data.features.rows(); ++i) m += train_data.features(i, j);
    m /= train_data.features.rows();
    double v = 0;
    for (int i = 0; i < train_data.features.rows(); ++i) {
      const double d = train_data.features(i, j) - m;
      v += d * d;
    }
    mu(0, j) = m;
    sd(0, j) = std::sqrt(v / train_data.features.rows()) + 1e-9;
  }
  auto standardize = [&](Matrix& x) {
    for (int i = 0; i < x.rows(); ++i)
      for (int j = 0; j < fdim; ++j) x(i, j) = (x(i, j) - mu(0, j)) / sd(0, j);
  };
  standardize(train_data.features);
  standardize(val_data.features);

  ProbeResult res;
  res.warnings = detail::absent_class_warnings(train_data);

  ProjectionNet head = detail::probe_head(cfg, all_data.features.cols(), all_data.num_classes());
  Rng init_rng(derive_seed(cfg.train.seed, "probe.init"));
  head.init_params(res.params, init_rng);

  OptimizerState opt;
  PatienceMonitor monitor(cfg.train.patience, cfg.train.tolerance);
  ParamStore best = res.params;
  int best_epoch = 0;
  double best_metric = 0;

  std::vector<int> order(train_data.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 1; epoch <= cfg.train.max_epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const double lr = lr_at(epoch - 1, cfg.train);
    Rng epoch_rng(derive_seed(cfg.train.seed, "probe.epoch." + std::to_string(epoch)));
    epoch_rng.shuffle(order);

    double total = 0;
    int count = 0;
    for (size_t off = 0; off < order.size(); off += cfg.train.batch_size) {
      const size_t end = std::min(order.size(), off + cfg.train.batch_size);
      std::vector<int> batch(order.begin() + off, order.begin() + end);
      ProbeData b = train_data.select(batch);

      res.params.zero_grads();
      Tape tape;
      const int x = tape.input(b.features);
      const int logits = head.forward(tape, x, res.params);
      Matrix dlogits;
      double loss;
      if (cfg.loss == ProbeLoss::cross_entropy)
        loss = softmax_cross_entropy(tape.value(logits), b.klass, &dlogits);
      else
        loss = sigmoid_binary_cross_entropy(tape.value(logits), b.presence, &dlogits);
      tape.backward(logits, dlogits, res.params);
      sgd_step(res.params, opt, lr, cfg.train.momentum, cfg.train.weight_decay);

      total += loss * b.size();
      count += b.size();
    }
    const double train_loss = total / count;

    Matrix val_logits = head.project(val_data.features, res.params);
    const double metric = detail::probe_metric(val_logits, val_data, cfg.threshold);
    // logged as an error rate so lower-is-better holds for every log column
    const bool stop = monitor.observe(1.0 - metric);
    if (monitor.last_improved()) {
      best = res.params;
      best_epoch = epoch;
      best_metric = metric;
    }
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    res.log.push_back({epoch, lr, train_loss, 1.0 - metric, seconds});
    if (stop) break;
  }

  // x -> (x - mu) / sd is affine, so it folds into fc1: scale each input row
  // of w by 1/sd and shift b by -mu . w. The returned head eats raw features.
  Matrix& w1 = best.value("probe.fc1.w");
  Matrix& b1 = best.value("probe.fc1.b");
  for (int j = 0; j < fdim; ++j)
    for (int k = 0; k < w1.cols(); ++k) w1(j, k) /= sd(0, j);
  for (int k = 0; k < b1.cols(); ++k) {
    double shift = 0;
    for (int j = 0; j < fdim; ++j) shift += mu(0, j) * w1(j, k);
    b1(0, k) -= shift;
  }

  res.params = std::move(best);
  res.best_epoch = best_epoch;
  res.best_metric = best_metric;
  return res;
}

inline Matrix probe_logits(const ProbeConfig& cfg, const ParamStore& params, const Matrix& features,
                           int num_classes) {
  return detail::probe_head(cfg, features.cols(), num_classes).project(features, params);
}

inline MetricsReport evaluate_probe(const ProbeConfig& cfg, const ParamStore& params,
                                    const ProbeData& test) {
  test.validate();
  Matrix logits = probe_logits(cfg, params, test.features, test.num_classes());
  if (test.task == Task::multiclass)
    return compute_metrics(predict_multiclass(logits), test.klass, test.classes);
  return compute_metrics(predict_multilabel(logits, cfg.threshold), test.presence, test.classes);
}

// ---------------------------------------------------------------------------
// label plumbing for probes

inline ProbeData probe_data_from(const Dataset& data, const std::vector<int>& indices,
                                 const Matrix& fused_features) {
  if (fused_features.rows() != static_cast<int>(indices.size()))
    throw_shape("probe_data_from: feature rows != index count");
  ProbeData pd;
  pd.task = data.manifest.task;
  pd.classes = data.manifest.classes;
  pd.features = fused_features;
  if (pd.task == Task::multilabel)
    pd.presence = Matrix(static_cast<int>(indices.size()), pd.num_classes());
  for (size_t r = 0; r < indices.size(); ++r) {
    const SampleRecord& s = data.manifest.samples[indices[r]];
    if (pd.task == Task::multiclass) {
      if (!s.labels.klass) throw_data("sample '" + s.id + "' has no label; probe needs labels");
      pd.klass.push_back(*s.labels.klass);
    } else {
      if (!s.labels.presence)
        throw_data("sample '" + s.id + "' has no labels; probe needs labels");
      for (int c = 0; c < pd.num_classes(); ++c)
        pd.presence(static_cast<int>(r), c) = (*s.labels.presence)[c];
    }
  }
  return pd;
}

// ---------------------------------------------------------------------------
// cross-validation driver

struct PipelineConfig {
  PretrainSetup pretrain;
  ProbeConfig probe;
};

struct FoldOutcome {
  int fold = 0;
  MetricsReport metrics;
};

struct CrossvalResult {
  std::vector<FoldOutcome> folds;
  std::string primary_name; // "acc" (multiclass) or "wacc" (multilabel)
  double mean = 0;
  double stddev = 0; // sample standard deviation over folds, 0 for k=1
};

namespace detail {

// group-disjoint validation split: whole groups move to the validation side
// until it holds at least val_fraction of the samples
inline std::pair<std::vector<int>, std::vector<int>> split_by_groups(
    const Dataset& data, const std::vector<int>& indices, double val_fraction, uint64_t seed) {
  std::map<std::string, std::vector<int>> by_group;
  for (int i : indices) by_group[data.manifest.samples[i].group].push_back(i);
  if (by_group.size() < 2) throw_data("val split: need >= 2 groups to keep actors disjoint");
  std::vector<std::string> groups;
  for (const auto& [g, v] : by_group) groups.push_back(g);
  Rng rng(derive_seed(seed, "valsplit.groups"));
  rng.shuffle(groups);
  const size_t want = std::max<size_t>(2, static_cast<size_t>(std::lround(val_fraction * indices.size())));
  std::vector<int> val, train;
  size_t taken = 0;
  for (const auto& g : groups) {
    auto& members = by_group[g];
    // never let validation swallow the training side
    if (taken < want && taken + members.size() + 2 <= indices.size())
      for (int i : members) {
        val.push_back(i);
        ++taken;
      }
    else
      for (int i : members) train.push_back(i);
  }
  if (val.size() < 2 || train.size() < 2)
    throw_data("val split: could not carve a group-disjoint validation set");
  std::sort(val.begin(), val.end());
  std::sort(train.begin(), train.end());
  return {train, val};
}

}  // namespace detail

// Pretrain on the fold's training side (never reading labels), fit the probe
// on training labels over frozen features, evaluate on the held-out fold.
inline CrossvalResult crossval(const Dataset& data, const FoldPlan& plan,
                               const PipelineConfig& cfg) {
  if (plan.assignment.size() != data.manifest.samples.size())
    throw_data("crossval: fold plan covers " + std::to_string(plan.assignment.size()) +
               " samples, dataset has " + std::to_string(data.manifest.samples.size()));
  CrossvalResult out;
  out.primary_name = data.manifest.task == Task::multiclass ? "acc" : "wacc";

  for (int f = 0; f < plan.k; ++f) {
    std::vector<int> train_idx, test_idx;
    for (size_t i = 0; i < data.manifest.samples.size(); ++i)
      (plan.fold_of(data.manifest.samples[i].id) == f ? test_idx : train_idx)
          .push_back(static_cast<int>(i));
    if (test_idx.empty() || train_idx.size() < 4)
      throw_data("crossval: fold " + std::to_string(f) + " leaves too few samples");

    if (plan.mode == FoldMode::actor_split) {
      std::set<std::string> train_groups, test_groups;
      for (int i : train_idx) train_groups.insert(data.manifest.samples[i].group);
      for (int i : test_idx) test_groups.insert(data.manifest.samples[i].group);
      for (const auto& g : test_groups)
        if (train_groups.count(g))
          throw_data("crossval: fold " + std::to_string(f) + " has actor overlap on group '" +
                     g + "'");
    }

    try {
      PretrainSetup setup = cfg.pretrain;
      setup.train.seed = derive_seed(cfg.pretrain.train.seed, "fold." + std::to_string(f));

      std::vector<int> tr, va;
      if (plan.mode == FoldMode::actor_split)
        std::tie(tr, va) =
            detail::split_by_groups(data, train_idx, setup.train.val_fraction, setup.train.seed);
      else {
        auto [tr_pos, va_pos] = split_train_val(static_cast<int>(train_idx.size()),
                                                setup.train.val_fraction, setup.train.seed);
        for (int p : tr_pos) tr.push_back(train_idx[p]);
        for (int p : va_pos) va.push_back(train_idx[p]);
      }
      PretrainResult pre = pretrain(unlabeled_view(data, tr), unlabeled_view(data, va), setup);

      detail::ModalityNets nets = detail::build_nets(setup.encoders, setup.projection);
      Matrix train_fused =
          fuse_concat(extract_embeddings(nets, pre.params, unlabeled_view(data, train_idx)));
      Matrix test_fused =
          fuse_concat(extract_embeddings(nets, pre.params, unlabeled_view(data, test_idx)));

      ProbeConfig probe_cfg = cfg.probe;
      probe_cfg.train.seed = setup.train.seed;
      ProbeResult probe = train_probe(probe_data_from(data, train_idx, train_fused), probe_cfg);
      MetricsReport metrics =
          evaluate_probe(probe_cfg, probe.params, probe_data_from(data, test_idx, test_fused));
      out.folds.push_back({f, std::move(metrics)});
    } catch (const Error& e) {
      throw Error(e.kind(), "fold " + std::to_string(f) + ": " + e.what());
    }
  }

  double sum = 0;
  for (const auto& fo : out.folds) sum += fo.metrics.primary();
  out.mean = sum / out.folds.size();
  if (out.folds.size() > 1) {
    double ss = 0;
    for (const auto& fo : out.folds) {
      const double d = fo.metrics.primary() - out.mean;
      ss += d * d;
    }
    out.stddev = std::sqrt(ss / (out.folds.size() - 1));
  }
  return out;
}

inline ojson to_json(const CrossvalResult& r) {
  ojson j;
  j["primary"] = r.primary_name;
  j["mean"] = r.mean;
  j["std"] = r.stddev;
  ojson folds = ojson::array();
  for (const auto& fo : r.folds) {
    ojson fj;
    fj["fold"] = fo.fold;
    fj["metrics"] = to_json(fo.metrics);
    folds.push_back(std::move(fj));
  }
  j["folds"] = std::move(folds);
  return j;
}

// ---------------------------------------------------------------------------
// supervised late-fusion baseline: same encoders, concatenated embeddings,
// fc+ReLU+fc head, trained end to end with the label loss and no
// contrastive stage

struct BaselineConfig {
  std::map<int, EncoderConfig> encoders;
  int head_hidden = 512;
  double threshold = 0.5;
  TrainConfig train;
};

struct BaselineResult {
  ParamStore params;
  MetricsReport test_metrics;
  std::vector<EpochRecord> log;
  int best_epoch = 0;
};

namespace detail {

struct BaselineNets {
  std::map<int, EncoderNet> encoders;
  ProjectionNet head;
};

inline BaselineNets build_baseline_nets(const BaselineConfig& cfg, int num_classes) {
  if (cfg.encoders.empty()) throw_config("baseline: no encoders");
  BaselineNets nets;
  int fused = 0;
  for (const auto& [id, ec] : cfg.encoders) {
    ec.validate();
    nets.encoders.emplace(id, EncoderNet(ec, "enc" + std::to_string(id)));
    fused += ec.embed_dim;
  }
  ProjectionConfig hc;
  hc.in_dim = fused;
  hc.hidden_dim = cfg.head_hidden;
  hc.out_dim = num_classes;
  nets.head = ProjectionNet(hc, "head");
  return nets;
}

inline Matrix baseline_logits(const BaselineNets& nets, const ParamStore& params,
                              const std::vector<UnlabeledSample>& samples) {
  std::map<int, Matrix> em;
  for (const auto& [id, enc] : nets.encoders) {
    SequenceBatch sb;
    sb.modality = id;
    for (const auto& s : samples) sb.items.push_back(s.streams->at(id));
    em.emplace(id, enc.encode(sb, params));
  }
  return nets.head.project(fuse_concat(em), params);
}

}  // namespace detail

inline BaselineResult late_fusion_baseline(const Dataset& data, const std::vector<int>& train_idx,
                                           const std::vector<int>& test_idx,
                                           const BaselineConfig& cfg) {
  cfg.train.validate();
  const Task task = data.manifest.task;
  const int num_classes = static_cast<int>(data.manifest.classes.size());
  detail::BaselineNets nets = detail::build_baseline_nets(cfg, num_classes);

  BaselineResult res;
  Rng init_rng(derive_seed(cfg.train.seed, "baseline.init"));
  for (auto& [id, enc] : nets.encoders) enc.init_params(res.params, init_rng);
  nets.head.init_params(res.params, init_rng);

  auto [tr_pos, va_pos] =
      split_train_val(static_cast<int>(train_idx.size()), cfg.train.val_fraction, cfg.train.seed);
  std::vector<int> tr, va;
  for (int p : tr_pos) tr.push_back(train_idx[p]);
  for (int p : va_pos) va.push_back(train_idx[p]);

  OptimizerState opt;
  PatienceMonitor monitor(cfg.train.patience, cfg.train.tolerance);
  ParamStore best = res.params;
  int best_epoch = 0;

  std::vector<int> order = tr;
  for (int epoch = 1; epoch <= cfg.train.max_epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const double lr = lr_at(epoch - 1, cfg.train);
    Rng epoch_rng(derive_seed(cfg.train.seed, "baseline.epoch." + std::to_string(epoch)));
    epoch_rng.shuffle(order);

    double total = 0;
    int count = 0;
    for (size_t off = 0; off < order.size(); off += cfg.train.batch_size) {
      const size_t end = std::min(order.size(), off + cfg.train.batch_size);
      std::vector<int> batch(order.begin() + off, order.begin() + end);

      res.params.zero_grads();
      Tape tape;
      std::vector<Tape::NodeId> parts;
      for (const auto& [id, enc] : nets.encoders) {
        SequenceBatch sb;
        sb.modality = id;
        for (int i : batch)
          sb.items.push_back(
              temporal_window(data.streams[i].at(id), cfg.train.window_len, epoch_rng));
        parts.push_back(enc.forward(tape, sb, res.params));
      }
      const int fused = tape.hconcat(parts);
      const int logits = nets.head.forward(tape, fused, res.params);

      Matrix dlogits;
      double loss;
      if (task == Task::multiclass) {
        std::vector<int> ys;
        for (int i : batch) {
          const auto& l = data.manifest.samples[i].labels;
          if (!l.klass)
            throw_data("sample '" + data.manifest.samples[i].id + "' has no label");
          ys.push_back(*l.klass);
        }
        loss = softmax_cross_entropy(tape.value(logits), ys, &dlogits);
      } else {
        Matrix ys(static_cast<int>(batch.size()), num_classes);
        for (size_t r = 0; r < batch.size(); ++r) {
          const auto& l = data.manifest.samples[batch[r]].labels;
          if (!l.presence)
            throw_data("sample '" + data.manifest.samples[batch[r]].id + "' has no labels");
          for (int c = 0; c < num_classes; ++c) ys(static_cast<int>(r), c) = (*l.presence)[c];
        }
        loss = sigmoid_binary_cross_entropy(tape.value(logits), ys, &dlogits);
      }
      tape.backward(logits, dlogits, res.params);
      sgd_step(res.params, opt, lr, cfg.train.momentum, cfg.train.weight_decay);
      total += loss * static_cast<double>(batch.size());
      count += static_cast<int>(batch.size());
    }

    Matrix val_logits = detail::baseline_logits(nets, res.params, unlabeled_view(data, va));
    double metric;
    if (task == Task::multiclass) {
      std::vector<int> pred = predict_multiclass(val_logits);
      int correct = 0;
      for (size_t r = 0; r < va.size(); ++r)
        correct += (pred[r] == *data.manifest.samples[va[r]].labels.klass);
      metric = static_cast<double>(correct) / va.size();
    } else {
      Matrix ys(static_cast<int>(va.size()), num_classes);
      for (size_t r = 0; r < va.size(); ++r)
        for (int c = 0; c < num_classes; ++c)
          ys(static_cast<int>(r), c) = (*data.manifest.samples[va[r]].labels.presence)[c];
      MetricsReport vm = compute_metrics(predict_multilabel(val_logits, cfg.threshold), ys,
                                         data.manifest.classes);
      metric = vm.has_overall_wacc ? vm.overall_wacc : 0.0;
    }

    const bool stop = monitor.observe(1.0 - metric);
    if (monitor.last_improved()) {
      best = res.params;
      best_epoch = epoch;
    }
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    res.log.push_back({epoch, lr, total / count, 1.0 - metric, seconds});
    if (stop) break;
  }

  res.params = std::move(best);
  res.best_epoch = best_epoch;

  Matrix test_logits = detail::baseline_logits(nets, res.params, unlabeled_view(data, test_idx));
  if (task == Task::multiclass) {
    std::vector<int> ys;
    for (int i : test_idx) ys.push_back(*data.manifest.samples[i].labels.klass);
    res.test_metrics = compute_metrics(predict_multiclass(test_logits), ys, data.manifest.classes);
  } else {
    Matrix ys(static_cast<int>(test_idx.size()), num_classes);
    for (size_t r = 0; r < test_idx.size(); ++r)
      for (int c = 0; c < num_classes; ++c)
        ys(static_cast<int>(r), c) = (*data.manifest.samples[test_idx[r]].labels.presence)[c];
    res.test_metrics =
        compute_metrics(predict_multilabel(test_logits, cfg.threshold), ys, data.manifest.classes);
  }
  return res;
}

}  // namespace mmcl
