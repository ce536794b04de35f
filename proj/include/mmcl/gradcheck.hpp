#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "mmcl/data.hpp"
#include "mmcl/downstream.hpp"
#include "mmcl/encoders.hpp"
#include "mmcl/loss.hpp"
#include "mmcl/matrix.hpp"
#include "mmcl/param_store.hpp"
#include "mmcl/rng.hpp"
#include "mmcl/tape.hpp"
#include "mmcl/train.hpp"

namespace mmcl {

// Central-difference verification of every analytic gradient path: the loss
// alone, the full encoder+projection+loss pipelines, and the probe heads.

struct GradCheckCase {
  std::string name;
  double max_rel_err = 0;
  bool pass = false;
};

struct GradCheckReport {
  double epsilon = 1e-4;
  double threshold = 1e-4;
  // The relative error divides by max(floor, |a|+|fd|): near-zero gradients
  // would otherwise turn roundoff into huge ratios, so below the floor the
  // comparison is effectively absolute.
  double floor = 1e-3;
  std::vector<GradCheckCase> cases;
  double max_rel_err = 0;
  bool pass = true;
};

inline ojson to_json(const GradCheckReport& r) {
  ojson j;
  j["epsilon"] = r.epsilon;
  j["threshold"] = r.threshold;
  j["floor"] = r.floor;
  j["pass"] = r.pass;
  j["max_rel_err"] = r.max_rel_err;
  ojson cases = ojson::array();
  for (const auto& c : r.cases)
    cases.push_back(ojson{{"name", c.name}, {"max_rel_err", c.max_rel_err}, {"pass", c.pass}});
  j["cases"] = std::move(cases);
  return j;
}

namespace detail {

// Expects analytic gradients already accumulated in store; sweeps every
// parameter scalar with +-eps and compares. The objective must be a pure
// function of the store values.
//
// A ReLU kink inside the +-eps bracket makes the difference quotient measure
// a mix of two linear pieces, so a correct gradient can look wrong at one
// epsilon. Shrinking epsilon pulls the bracket off the kink and a correct
// gradient reconverges; a genuinely wrong one keeps its gap at every scale.
// Coordinates above the threshold are therefore retried at eps/16 and
// eps/256 before they count as failures.
inline double fd_max_rel_err(ParamStore& store, const std::function<double()>& objective,
                             double eps, double threshold, double floor) {
  std::vector<Matrix> analytic;
  analytic.reserve(store.size());
  for (const auto& e : store.entries()) analytic.push_back(e.grad);
  double worst = 0;
  for (size_t pi = 0; pi < store.size(); ++pi) {
    auto& e = store.entries()[pi];
    for (size_t k = 0; k < e.value.size(); ++k) {
      const double old = e.value.data()[k];
      const double a = analytic[pi].data()[k];
      auto rel_at = [&](double h) {
        e.value.data()[k] = old + h;
        const double fp = objective();
        e.value.data()[k] = old - h;
        const double fm = objective();
        e.value.data()[k] = old;
        const double fd = (fp - fm) / (2 * h);
        return std::abs(a - fd) / std::max(floor, std::abs(a) + std::abs(fd));
      };
      double rel = rel_at(eps);
      for (double shrink : {16.0, 256.0}) {
        if (rel < threshold) break;
        rel = std::min(rel, rel_at(eps / shrink));
      }
      worst = std::max(worst, rel);
    }
  }
  return worst;
}

// emulates a backward-pass scaling bug for the negative control
inline void scale_grads(ParamStore& store, double factor) {
  for (auto& e : store.entries())
    for (double& g : e.grad.data()) g *= factor;
}

inline std::map<int, Matrix> store_to_embeddings(const ParamStore& store) {
  std::map<int, Matrix> z;
  int id = 0;
  for (const auto& e : store.entries()) z.emplace(id++, e.value);
  return z;
}

inline GradCheckCase check_loss_only(const std::string& name, int num_modalities,
                                     bool include_positive, uint64_t seed, double eps,
                                     double threshold, double floor, bool inject_bug) {
  const int n = 4, dp = 8;
  LossConfig cfg;
  cfg.include_positive = include_positive;
  Rng rng(seed);
  ParamStore store;
  for (int m = 0; m < num_modalities; ++m)
    store.add("z" + std::to_string(m), Matrix::random_normal(n, dp, rng));

  std::map<int, Matrix> grads = loss_gradients(store_to_embeddings(store), cfg);
  for (int m = 0; m < num_modalities; ++m)
    store.grad("z" + std::to_string(m)) = grads.at(m);
  if (inject_bug) scale_grads(store, 1.001);

  auto objective = [&]() { return final_loss(store_to_embeddings(store), cfg).total; };
  GradCheckCase c;
  c.name = name;
  c.max_rel_err = fd_max_rel_err(store, objective, eps, threshold, floor);
  c.pass = c.max_rel_err < threshold;
  return c;
}

// Random ragged batches; dims follow the acceptance geometry (N=4, d_e=16,
// d_p=8) with small encoder internals so the full sweep stays fast.
inline std::map<int, SequenceBatch> random_batches(const std::map<int, EncoderConfig>& encoders,
                                                   Rng& rng) {
  std::map<int, SequenceBatch> batches;
  for (const auto& [id, cfg] : encoders) {
    SequenceBatch sb;
    sb.modality = id;
    for (int i = 0; i < 4; ++i) {
      const int t = 3 + static_cast<int>(rng.uniform_int(5));
      sb.items.push_back(Matrix::random_normal(t, cfg.input_dim, rng));
    }
    batches.emplace(id, std::move(sb));
  }
  return batches;
}

inline EncoderConfig small_encoder(EncoderKind kind, int input_dim) {
  EncoderConfig c;
  c.kind = kind;
  c.input_dim = input_dim;
  c.embed_dim = 16;
  c.hidden = {10};
  c.tcn_kernel = 2;
  c.tcn_dilations = {1, 2};
  c.tcn_channels = 8;
  c.attn_heads = 2;
  c.attn_dim = 8;
  c.attn_ff = 12;
  return c;
}

inline GradCheckCase check_pipeline(const std::string& name, EncoderKind kind, int num_modalities,
                                    uint64_t seed, double eps, double threshold, double floor,
                                    bool inject_bug) {
  PretrainSetup setup;
  for (int m = 0; m < num_modalities; ++m)
    setup.encoders[m] = small_encoder(kind, 5 + m); // distinct input dims per modality
  setup.projection = {16, 12, 8};
  ModalityNets nets = build_nets(setup.encoders, setup.projection);

  Rng rng(seed);
  ParamStore store;
  init_nets(nets, store, rng);
  std::map<int, SequenceBatch> batches = random_batches(setup.encoders, rng);

  auto forward_values = [&]() {
    std::map<int, Matrix> z;
    for (const auto& [id, enc] : nets.encoders) {
      Matrix f = enc.encode(batches.at(id), store);
      z.emplace(id, nets.projections.at(id).project(f, store));
    }
    return z;
  };

  // analytic: per-modality tapes seeded with the loss gradient
  store.zero_grads();
  std::map<int, Tape> tapes;
  std::map<int, int> z_nodes;
  std::map<int, Matrix> z_values;
  for (const auto& [id, enc] : nets.encoders) {
    Tape& tape = tapes.emplace(id, Tape{}).first->second;
    const int f = enc.forward(tape, batches.at(id), store);
    const int z = nets.projections.at(id).forward(tape, f, store);
    z_nodes[id] = z;
    z_values.emplace(id, tape.value(z));
  }
  LossConfig loss_cfg;
  FinalLossWithGrads lg = final_loss_with_gradients(z_values, loss_cfg);
  for (auto& [id, tape] : tapes) tape.backward(z_nodes[id], lg.grads.at(id), store);
  if (inject_bug) scale_grads(store, 1.001);

  auto objective = [&]() { return final_loss(forward_values(), loss_cfg).total; };
  GradCheckCase c;
  c.name = name;
  c.max_rel_err = fd_max_rel_err(store, objective, eps, threshold, floor);
  c.pass = c.max_rel_err < threshold;
  return c;
}

inline GradCheckCase check_probe(const std::string& name, ProbeLoss loss_kind, uint64_t seed,
                                 double eps, double threshold, double floor, bool inject_bug) {
  const int n = 6, f_dim = 10, classes = 3;
  Rng rng(seed);
  Matrix features = Matrix::random_normal(n, f_dim, rng);
  std::vector<int> klass;
  Matrix presence(n, classes);
  for (int i = 0; i < n; ++i) {
    klass.push_back(static_cast<int>(rng.uniform_int(classes)));
    for (int c = 0; c < classes; ++c) presence(i, c) = rng.uniform() < 0.5 ? 1.0 : 0.0;
  }

  ProbeConfig pc;
  pc.hidden_dim = 7;
  ProjectionNet head = probe_head(pc, f_dim, classes);
  ParamStore store;
  head.init_params(store, rng);

  auto loss_of = [&](const Matrix& logits, Matrix* d) {
    return loss_kind == ProbeLoss::cross_entropy
               ? softmax_cross_entropy(logits, klass, d)
               : sigmoid_binary_cross_entropy(logits, presence, d);
  };

  store.zero_grads();
  Tape tape;
  const int logits = head.forward(tape, tape.input(features), store);
  Matrix dlogits;
  loss_of(tape.value(logits), &dlogits);
  tape.backward(logits, dlogits, store);
  if (inject_bug) scale_grads(store, 1.001);

  auto objective = [&]() { return loss_of(head.project(features, store), nullptr); };
  GradCheckCase c;
  c.name = name;
  c.max_rel_err = fd_max_rel_err(store, objective, eps, threshold, floor);
  c.pass = c.max_rel_err < threshold;
  return c;
}

}  // namespace detail

// 25 configurations: 5 loss-only, 18 full pipelines (3 encoder kinds x 3
// modality counts x 2 seeds), 2 probe heads. inject_bug scales the analytic
// gradients by 1.001 to prove the harness catches a wrong backward pass.
inline GradCheckReport run_gradcheck(uint64_t seed, bool inject_bug = false) {
  GradCheckReport r;
  auto add = [&](GradCheckCase c) {
    r.max_rel_err = std::max(r.max_rel_err, c.max_rel_err);
    r.pass = r.pass && c.pass;
    r.cases.push_back(std::move(c));
  };

  for (int m : {2, 3, 4})
    add(detail::check_loss_only("loss_m" + std::to_string(m), m, false,
                                derive_seed(seed, "gc.loss." + std::to_string(m)), r.epsilon,
                                r.threshold, r.floor, inject_bug));
  for (int m : {2, 3})
    add(detail::check_loss_only("loss_m" + std::to_string(m) + "_incpos", m, true,
                                derive_seed(seed, "gc.lossip." + std::to_string(m)), r.epsilon,
                                r.threshold, r.floor, inject_bug));

  for (EncoderKind kind : {EncoderKind::mlp, EncoderKind::tcn, EncoderKind::attn})
    for (int m : {2, 3, 4})
      for (int variant : {0, 1}) {
        const std::string name = std::string("pipeline_") + to_string(kind) + "_m" +
                                 std::to_string(m) + "_v" + std::to_string(variant);
        add(detail::check_pipeline(name, kind, m, derive_seed(seed, "gc." + name), r.epsilon,
                                   r.threshold, r.floor, inject_bug));
      }

  add(detail::check_probe("probe_ce", ProbeLoss::cross_entropy, derive_seed(seed, "gc.probe.ce"),
                          r.epsilon, r.threshold, r.floor, inject_bug));
  add(detail::check_probe("probe_bce", ProbeLoss::binary_cross_entropy,
                          derive_seed(seed, "gc.probe.bce"), r.epsilon, r.threshold, r.floor,
                          inject_bug));
  return r;
}

}  // namespace mmcl
