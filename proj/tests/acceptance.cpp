// Acceptance gate: eight checks, one [PASS]/[FAIL] line each, exit code is
// the number of failures. argv[1] must point at the mmcl CLI binary (used by
// the determinism check). The heavy synthetic benchmark keeps every seed,
// dataset, and tolerance pinned so reruns are bit-for-bit comparable.

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <regex>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "mmcl/mmcl.hpp"

using namespace mmcl;
namespace fs = std::filesystem;

namespace {

int g_failures = 0;

void report(int idx, const std::string& what, bool pass, const std::string& detail) {
  std::printf("[%s] criterion %d %s: %s\n", pass ? "PASS" : "FAIL", idx, what.c_str(),
              detail.c_str());
  std::fflush(stdout);
  if (!pass) ++g_failures;
}

double now_seconds() {
  return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

fs::path work_dir(const std::string& tag) {
  fs::path p = fs::temp_directory_path() / "mmcl_acceptance" / tag;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

double median3(double a, double b, double c) {
  std::vector<double> v{a, b, c};
  std::sort(v.begin(), v.end());
  return v[1];
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.4g", v);
  return buf;
}

// ---------------------------------------------------------------------------
// criterion 1: analytic gradients vs central differences, plus a negative
// control proving the harness notices a corrupted backward pass

bool criterion1() {
  const double t0 = now_seconds();
  GradCheckReport rep = run_gradcheck(4242, false);
  const double secs = now_seconds() - t0;
  GradCheckReport bug = run_gradcheck(4242, true);

  const bool pass = rep.pass && rep.cases.size() >= 20 && rep.max_rel_err < 1e-4 &&
                    secs < 60.0 && !bug.pass;
  report(1, "gradient fidelity", pass,
         std::to_string(rep.cases.size()) + " configs, max rel err " + fmt(rep.max_rel_err) +
             ", " + fmt(secs) + "s" + (bug.pass ? ", injected bug NOT caught" : ", injected bug caught"));
  return pass;
}

// ---------------------------------------------------------------------------
// criterion 2: closed-form loss identities

bool criterion2() {
  double worst_default = 0, worst_incl = 0;
  for (int n : {2, 4, 8, 32}) {
    Matrix z(n, 8);
    for (int i = 0; i < n; ++i) z(i, 0) = 1.0; // every row the same unit vector
    std::map<int, Matrix> by_mod{{0, z}, {1, z}, {2, z}};

    LossConfig def;
    worst_default =
        std::max(worst_default, std::abs(final_loss(by_mod, def).per_sample - std::log(n - 1.0)));

    LossConfig incl;
    incl.include_positive = true;
    worst_incl =
        std::max(worst_incl, std::abs(final_loss(by_mod, incl).per_sample - std::log(double(n))));
  }

  // positive per-row rescaling must not move the loss
  Rng rng(11);
  std::map<int, Matrix> z;
  for (int m = 0; m < 3; ++m) z.emplace(m, Matrix::random_normal(6, 8, rng));
  LossConfig cfg;
  const double base = final_loss(z, cfg).total;
  std::map<int, Matrix> scaled = z;
  for (auto& [m, mat] : scaled)
    for (int i = 0; i < mat.rows(); ++i) {
      const double c = 0.05 + 10.0 * rng.uniform();
      for (int j = 0; j < mat.cols(); ++j) mat(i, j) *= c;
    }
  const double drift = std::abs(final_loss(scaled, cfg).total - base);

  const bool pass = worst_default < 1e-9 && worst_incl < 1e-9 && drift < 1e-9;
  report(2, "loss identities", pass,
         "log(N-1) gap " + fmt(worst_default) + ", log(N) gap " + fmt(worst_incl) +
             ", rescale drift " + fmt(drift));
  return pass;
}

// ---------------------------------------------------------------------------
// criterion 3: directional asymmetry of the pair loss, label symmetry of the
// final loss

bool criterion3() {
  Matrix zm(3, 3), zn(3, 3);
  zm(0, 0) = 1.0;
  zm(1, 1) = 1.0;
  zm(2, 2) = 1.0;
  zn(0, 0) = 1.0;
  zn(1, 0) = 0.9;
  zn(1, 1) = 0.1;
  zn(2, 0) = 0.9;
  zn(2, 2) = 0.1;
  LossConfig cfg;
  const double gap = std::abs(pair_loss(zm, zn, cfg).total - pair_loss(zn, zm, cfg).total);

  Rng rng(23);
  std::map<int, Matrix> z;
  for (int m = 0; m < 3; ++m) z.emplace(m, Matrix::random_normal(5, 6, rng));
  const double base = final_loss(z, cfg).total;
  double worst_relabel = 0;
  const int perms[6][3] = {{0, 1, 2}, {0, 2, 1}, {1, 0, 2}, {1, 2, 0}, {2, 0, 1}, {2, 1, 0}};
  for (const auto& p : perms) {
    std::map<int, Matrix> relabeled;
    for (int m = 0; m < 3; ++m) relabeled.emplace(p[m], z.at(m));
    worst_relabel = std::max(worst_relabel, std::abs(final_loss(relabeled, cfg).total - base));
  }

  const bool pass = gap > 0.1 && worst_relabel < 1e-12;
  report(3, "asymmetry and relabeling symmetry", pass,
         "pair order gap " + fmt(gap) + ", relabel drift " + fmt(worst_relabel));
  return pass;
}

// ---------------------------------------------------------------------------
// criterion 4: brute-force oracles for the final loss and the metrics

double brute_final_loss(const std::map<int, Matrix>& z, double tau) {
  std::vector<int> ids;
  for (const auto& [m, mat] : z) ids.push_back(m);
  std::map<int, Matrix> hat;
  for (const auto& [m, mat] : z) hat.emplace(m, l2_normalize_rows(mat));

  std::vector<double> pair_totals;
  for (int m : ids)
    for (int n : ids) {
      if (m == n) continue;
      const Matrix& a = hat.at(m);
      const Matrix& b = hat.at(n);
      const int rows = a.rows();
      double total = 0;
      for (int i = 0; i < rows; ++i) {
        double denom = 0;
        double pos = 0;
        for (int j = 0; j < rows; ++j) {
          double s = 0;
          for (int d = 0; d < a.cols(); ++d) s += a(i, d) * b(j, d);
          s /= tau;
          if (j == i)
            pos = s;
          else
            denom += std::exp(s);
        }
        total += std::log(denom) - pos;
      }
      pair_totals.push_back(total);
    }
  std::sort(pair_totals.begin(), pair_totals.end());
  double sum = 0;
  for (double t : pair_totals) sum += t;
  const double m = static_cast<double>(ids.size());
  return sum / (m * (m - 1));
}

bool criterion4() {
  Rng rng(91);
  LossConfig cfg;
  double worst_loss = 0;
  for (int trial = 0; trial < 12; ++trial) {
    const int m = 2 + trial % 3;
    const int n = 3 + static_cast<int>(rng.uniform_int(4));
    std::map<int, Matrix> z;
    for (int k = 0; k < m; ++k) z.emplace(k, Matrix::random_normal(n, 7, rng));
    worst_loss =
        std::max(worst_loss, std::abs(final_loss(z, cfg).total - brute_final_loss(z, 0.07)));
  }

  int metric_mismatches = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 5 + static_cast<int>(rng.uniform_int(40));
    const int c = 2 + static_cast<int>(rng.uniform_int(4));
    std::vector<std::string> classes;
    for (int k = 0; k < c; ++k) classes.push_back("k" + std::to_string(k));
    std::vector<int> label(n), pred(n);
    for (int i = 0; i < n; ++i) {
      label[i] = static_cast<int>(rng.uniform_int(c));
      pred[i] = static_cast<int>(rng.uniform_int(c));
    }
    MetricsReport m = compute_metrics(pred, label, classes);
    for (int k = 0; k < c; ++k) {
      long long tp = 0, fp = 0, tn = 0, fn = 0;
      for (int i = 0; i < n; ++i) {
        const bool pp = pred[i] == k, lp = label[i] == k;
        tp += pp && lp;
        fp += pp && !lp;
        fn += !pp && lp;
        tn += !pp && !lp;
      }
      const ClassReport& r = m.per_class[k];
      if (r.tp != tp || r.fp != fp || r.tn != tn || r.fn != fn) ++metric_mismatches;
      if (tp + fn > 0 && tn + fp > 0) {
        const double w = 0.5 * (double(tp) / (tp + fn) + double(tn) / (tn + fp));
        if (!r.has_wacc || std::abs(r.wacc - w) > 0) ++metric_mismatches;
      }
      if (2 * tp + fp + fn > 0) {
        const double f = 2.0 * tp / double(2 * tp + fp + fn);
        if (!r.has_f1 || std::abs(r.f1 - f) > 0) ++metric_mismatches;
      }
    }
  }

  const bool pass = worst_loss < 1e-12 && metric_mismatches == 0;
  report(4, "brute force oracle equivalence", pass,
         "loss gap " + fmt(worst_loss) + ", metric recount mismatches " +
             std::to_string(metric_mismatches) + "/100 cases");
  return pass;
}

// ---------------------------------------------------------------------------
// criterion 5: end-to-end synthetic benchmark. Contrastive features must beat
// both the best single modality and a correspondence-broken control.

// Noise placement: rare large-scale frame spikes inflate the variance of the
// pooled means that the raw baseline classifies (keeping it mid band), while
// the temporal encoders can clamp spiked frames before pooling and recover a
// far cleaner signal than any linear function of the pooled features.
constexpr double kSigmaObs = 3.16;
constexpr double kOutlierFrac = 0.12;
constexpr double kOutlierScale = 14.0;
constexpr int kPretrainEpochs = 100;

SyntheticSpec benchmark_spec() {
  SyntheticSpec s;
  s.classes = 4;
  s.per_class = 192; // 768 samples: 512 train, 256 test
  s.latent_dim = 8;
  s.modality_dims = {12, 16, 20};
  // sequences run well past the training window so random crops share few
  // frames; alignment then has to come from the latent, not the noise draw
  s.t_min = 24;
  s.t_max = 48;
  s.sigma_obs = kSigmaObs;
  s.sigma_class = 0.05;
  s.outlier_frac = kOutlierFrac;
  s.outlier_scale = kOutlierScale;
  s.num_groups = 16;
  s.map_seed = 777; // shared geometry across seeds
  return s;
}

PretrainSetup benchmark_setup(const Manifest& man, uint64_t seed, int max_epochs, int patience) {
  PretrainSetup su;
  for (const auto& mod : man.modalities) {
    EncoderConfig e;
    e.kind = EncoderKind::tcn; // per-frame nonlinearity before the pool
    e.input_dim = mod.dim;
    // embeddings barely wider than the latent: enough for the true signal,
    // while an untrained random projection this narrow loses class info,
    // which keeps the shuffled-pairing control honest
    e.embed_dim = 16;
    e.tcn_kernel = 3;
    e.tcn_dilations = {1, 2};
    e.tcn_channels = 48;
    su.encoders[mod.id] = e;
  }
  su.projection = {16, 64, 32};
  su.train.batch_size = 16;
  su.train.lr0 = 0.004;
  su.train.max_epochs = max_epochs;
  su.train.patience = patience;
  su.train.window_len = 16;
  su.train.val_fraction = 0.1;
  su.train.seed = seed;
  su.loss.temperature = 0.2; // softer than the default, see tuning notes
  return su;
}

std::vector<int> labels_of(const Dataset& data, const std::vector<int>& idx) {
  std::vector<int> y;
  for (int i : idx) y.push_back(*data.manifest.samples[i].labels.klass);
  return y;
}

// multinomial logistic regression, full-batch GD on standardized features
double linear_probe_acc(const Matrix& train_x, const std::vector<int>& train_y,
                        const Matrix& test_x, const std::vector<int>& test_y, int classes) {
  const int d = train_x.cols();
  std::vector<double> mu(d, 0), sd(d, 0);
  for (int i = 0; i < train_x.rows(); ++i)
    for (int j = 0; j < d; ++j) mu[j] += train_x(i, j);
  for (double& v : mu) v /= train_x.rows();
  for (int i = 0; i < train_x.rows(); ++i)
    for (int j = 0; j < d; ++j) sd[j] += (train_x(i, j) - mu[j]) * (train_x(i, j) - mu[j]);
  for (double& v : sd) v = std::sqrt(v / train_x.rows()) + 1e-9;

  auto design = [&](const Matrix& x) {
    Matrix out(x.rows(), d + 1); // trailing bias column
    for (int i = 0; i < x.rows(); ++i) {
      for (int j = 0; j < d; ++j) out(i, j) = (x(i, j) - mu[j]) / sd[j];
      out(i, d) = 1.0;
    }
    return out;
  };

  Matrix xt = design(train_x), xe = design(test_x);
  Matrix w(d + 1, classes);
  for (int it = 0; it < 1000; ++it) {
    Matrix dlogits;
    softmax_cross_entropy(matmul(xt, w), train_y, &dlogits);
    Matrix gw = matmul_tn(xt, dlogits);
    for (size_t k = 0; k < w.size(); ++k) w.data()[k] -= 0.5 * gw.data()[k];
  }
  std::vector<int> pred = predict_multiclass(matmul(xe, w));
  int correct = 0;
  for (size_t i = 0; i < pred.size(); ++i) correct += pred[i] == test_y[i];
  return static_cast<double>(correct) / pred.size();
}

Matrix pooled_frames(const Dataset& data, const std::vector<int>& idx, int modality) {
  const int d = data.manifest.modality_by_id(modality).dim;
  Matrix out(static_cast<int>(idx.size()), d);
  for (size_t r = 0; r < idx.size(); ++r) {
    Matrix mean = mean_rows(data.streams[idx[r]].at(modality));
    for (int j = 0; j < d; ++j) out(static_cast<int>(r), j) = mean(0, j);
  }
  return out;
}

struct BenchmarkOutcome {
  double contrastive = 0;
  double best_single = 0;
  double control = 0;
  std::vector<double> raw; // per modality, pooled-frame linear accuracy
};

BenchmarkOutcome run_benchmark_seed(uint64_t seed) {
  fs::path dir = work_dir("bench_seed" + std::to_string(seed));
  SyntheticSpec spec = benchmark_spec();
  SyntheticDataset ds = synth_generate(spec, dir, seed);
  Dataset data = load_dataset(ds.manifest);

  const int n = static_cast<int>(data.manifest.samples.size());
  std::vector<int> train_idx, test_idx;
  for (int i = 0; i < n; ++i) (i < 512 ? train_idx : test_idx).push_back(i);
  std::vector<int> train_y = labels_of(data, train_idx);
  std::vector<int> test_y = labels_of(data, test_idx);

  BenchmarkOutcome out;
  for (const auto& mod : data.manifest.modalities)
    out.raw.push_back(linear_probe_acc(pooled_frames(data, train_idx, mod.id), train_y,
                                       pooled_frames(data, test_idx, mod.id), test_y,
                                       spec.classes));

  PretrainSetup setup = benchmark_setup(data.manifest, seed, kPretrainEpochs, 100);
  PretrainResult pre = pretrain(unlabeled_view(data, train_idx), setup);
  detail::ModalityNets nets = detail::build_nets(setup.encoders, setup.projection);

  std::map<int, Matrix> train_em =
      extract_embeddings(nets, pre.params, unlabeled_view(data, train_idx));
  std::map<int, Matrix> test_em =
      extract_embeddings(nets, pre.params, unlabeled_view(data, test_idx));

  out.contrastive = linear_probe_acc(fuse_concat(train_em), train_y, fuse_concat(test_em),
                                     test_y, spec.classes);
  for (const auto& [id, em] : train_em)
    out.best_single =
        std::max(out.best_single,
                 linear_probe_acc(em, train_y, test_em.at(id), test_y, spec.classes));

  // correspondence-broken control: pretrain on shuffled pairings, then probe
  // the true data through those weights
  Dataset shuffled;
  shuffled.manifest = data.manifest;
  shuffled.manifest.samples.clear();
  for (int i : train_idx) {
    shuffled.manifest.samples.push_back(data.manifest.samples[i]);
    shuffled.streams.push_back(data.streams[i]);
  }
  Rng crng(derive_seed(seed, "control.shuffle"));
  shuffle_pairings(shuffled, crng);
  PretrainResult ctrl = pretrain(unlabeled_view(shuffled), setup);
  std::map<int, Matrix> ctrl_train =
      extract_embeddings(nets, ctrl.params, unlabeled_view(data, train_idx));
  std::map<int, Matrix> ctrl_test =
      extract_embeddings(nets, ctrl.params, unlabeled_view(data, test_idx));
  out.control = linear_probe_acc(fuse_concat(ctrl_train), train_y, fuse_concat(ctrl_test),
                                 test_y, spec.classes);
  return out;
}

bool criterion5() {
  const double t0 = now_seconds();
  std::vector<BenchmarkOutcome> runs;
  for (uint64_t seed : {1, 2, 3}) runs.push_back(run_benchmark_seed(seed));
  const double secs = now_seconds() - t0;

  const double contr = median3(runs[0].contrastive, runs[1].contrastive, runs[2].contrastive);
  const double single = median3(runs[0].best_single, runs[1].best_single, runs[2].best_single);
  const double ctrl = median3(runs[0].control, runs[1].control, runs[2].control);
  double raw_lo = 1.0, raw_hi = 0.0;
  std::string raw_str;
  for (size_t k = 0; k < runs[0].raw.size(); ++k) {
    const double med = median3(runs[0].raw[k], runs[1].raw[k], runs[2].raw[k]);
    raw_lo = std::min(raw_lo, med);
    raw_hi = std::max(raw_hi, med);
    raw_str += (k ? "/" : "") + fmt(med);
  }

  const bool band_ok = raw_lo >= 0.55 && raw_hi <= 0.75;
  const bool pass = contr >= 0.90 && contr - single >= 0.05 && contr - ctrl >= 0.15 && band_ok &&
                    secs < 300.0;
  report(5, "synthetic multimodal benchmark", pass,
         "fused " + fmt(contr) + ", best single " + fmt(single) + ", shuffled control " +
             fmt(ctrl) + ", raw band " + raw_str + ", " + fmt(secs) + "s");
  return pass;
}

// ---------------------------------------------------------------------------
// criterion 6: protocol guards. Actor folds never leak a group, and
// pretraining cannot see labels.

bool criterion6() {
  fs::path dir = work_dir("guards");
  SyntheticSpec spec = benchmark_spec();
  spec.per_class = 32; // 128 samples is plenty for the fold audit
  SyntheticDataset ds = synth_generate(spec, dir / "folds", 51);

  FoldPlan plan = make_folds(ds.manifest, 8, FoldMode::actor_split, 99);
  int overlaps = 0;
  std::map<std::string, int> seen; // sample id -> test appearances
  for (int f = 0; f < plan.k; ++f) {
    std::set<std::string> train_groups, test_groups;
    for (const auto& s : ds.manifest.samples) {
      if (plan.fold_of(s.id) == f) {
        test_groups.insert(s.group);
        ++seen[s.id];
      } else {
        train_groups.insert(s.group);
      }
    }
    for (const auto& g : test_groups) overlaps += train_groups.count(g);
  }
  bool coverage = seen.size() == ds.manifest.samples.size();
  for (const auto& [id, cnt] : seen) coverage = coverage && cnt == 1;

  // label isolation: strip every label and pretrain with the same seed
  SyntheticSpec small;
  small.classes = 2;
  small.per_class = 8;
  small.latent_dim = 3;
  small.modality_dims = {4, 5};
  small.t_min = 3;
  small.t_max = 6;
  small.num_groups = 4;
  SyntheticDataset sds = synth_generate(small, dir / "strip", 21);

  Manifest stripped = sds.manifest;
  for (auto& s : stripped.samples) s.labels = SampleLabels{};

  PretrainSetup su;
  for (const auto& mod : sds.manifest.modalities) {
    EncoderConfig e;
    e.kind = EncoderKind::mlp;
    e.input_dim = mod.dim;
    e.embed_dim = 8;
    e.hidden = {16};
    su.encoders[mod.id] = e;
  }
  su.projection = {8, 16, 4};
  su.train.batch_size = 8;
  su.train.lr0 = 0.05;
  su.train.max_epochs = 5;
  su.train.patience = 5;
  su.train.window_len = 4;
  su.train.val_fraction = 0.25;
  su.train.seed = 31;

  PretrainResult labeled = pretrain(unlabeled_view(load_dataset(sds.manifest)), su);
  PretrainResult blind = pretrain(unlabeled_view(load_dataset(stripped)), su);

  Checkpoint a{31, checkpoint_config(sds.manifest.modalities, su), std::move(labeled.params)};
  Checkpoint b{31, checkpoint_config(sds.manifest.modalities, su), std::move(blind.params)};
  save_checkpoint(a, dir / "labeled.mpck");
  save_checkpoint(b, dir / "blind.mpck");
  const bool label_blind = slurp(dir / "labeled.mpck") == slurp(dir / "blind.mpck");

  const bool pass = overlaps == 0 && coverage && label_blind;
  report(6, "protocol guards", pass,
         "group overlaps " + std::to_string(overlaps) + ", test coverage " +
             (coverage ? "complete" : "BROKEN") + ", label-stripped checkpoint " +
             (label_blind ? "bit-identical" : "DIFFERS"));
  return pass;
}

// ---------------------------------------------------------------------------
// criterion 7: CLI-level determinism. Checkpoints must match byte for byte;
// logs must match once the wall-clock seconds field is masked out.

int run_cli(const std::string& cli, const std::string& args) {
  const int status = std::system((cli + " " + args + " >/dev/null 2>&1").c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string mask_seconds(const std::string& jsonl) {
  static const std::regex secs("\"seconds\":[^,}]*");
  return std::regex_replace(jsonl, secs, "\"seconds\":0");
}

bool criterion7(const std::string& cli) {
  fs::path dir = work_dir("determinism");
  const std::string data_dir = (dir / "data").string();
  if (run_cli(cli, "synth --out " + data_dir +
                       " --seed 5 --classes 2 --per-class 8 --modalities 2 --dims \"[4,5]\""
                       " --groups 4 --folds 4 --set synth.t_min=3 --set synth.t_max=6") != 0) {
    report(7, "command line determinism", false, "synth run failed");
    return false;
  }

  const std::string pre_args =
      "pretrain --manifest " + data_dir + "/manifest.json --seed 11" +
      " --encoder mlp --embed-dim 8 --epochs 5 --patience 5 --batch 8 --lr 0.05 --window 4"
      " --set enc.hidden=\"[16]\" --set proj.hidden_dim=16 --set proj.out_dim=4"
      " --set train.val_fraction=0.25 --out ";
  const fs::path a = dir / "a", b = dir / "b";
  if (run_cli(cli, pre_args + a.string()) != 0 || run_cli(cli, pre_args + b.string()) != 0) {
    report(7, "command line determinism", false, "pretrain run failed");
    return false;
  }

  const bool ck_same = slurp(a / "checkpoint.mpck") == slurp(b / "checkpoint.mpck");
  const bool log_same =
      mask_seconds(slurp(a / "train_log.jsonl")) == mask_seconds(slurp(b / "train_log.jsonl"));
  const bool cfg_same = slurp(a / "config.json") == slurp(b / "config.json");

  const bool pass = ck_same && log_same && cfg_same;
  report(7, "command line determinism", pass,
         std::string("checkpoints ") + (ck_same ? "identical" : "DIFFER") + ", logs " +
             (log_same ? "identical up to wall time" : "DIFFER") + ", echo " +
             (cfg_same ? "identical" : "DIFFERS"));
  return pass;
}

// ---------------------------------------------------------------------------
// criterion 8: training dynamics on the benchmark data

bool criterion8() {
  fs::path dir = work_dir("dynamics");
  SyntheticDataset ds = synth_generate(benchmark_spec(), dir, 1);
  Dataset data = load_dataset(ds.manifest);
  std::vector<int> train_idx(512);
  std::iota(train_idx.begin(), train_idx.end(), 0);

  // Wider nets and full-sequence views descend fast; this probes optimizer
  // dynamics only, feature quality is criterion 5's job.
  PretrainSetup setup = benchmark_setup(data.manifest, 1, 30, 30);
  for (auto& [id, enc] : setup.encoders) {
    enc.embed_dim = 64;
    enc.tcn_channels = 64;
  }
  setup.projection = {64, 64, 32};
  setup.train.batch_size = 32;
  setup.train.lr0 = 0.001;
  setup.train.window_len = 48;
  setup.loss.temperature = 0.07;
  PretrainResult res = pretrain(unlabeled_view(data, train_idx), setup);
  if (res.log.size() < 30) {
    report(8, "training dynamics", false,
           "expected 30 epochs, got " + std::to_string(res.log.size()));
    return false;
  }
  const double first = res.log.front().train_loss;
  const double last = res.log[29].train_loss;
  const double reference = std::log(31.0); // chance level for batches of 32

  const bool pass = last <= 0.5 * first && last < reference;
  report(8, "training dynamics", pass,
         "epoch 1 loss " + fmt(first) + ", epoch 30 loss " + fmt(last) + ", reference " +
             fmt(reference));
  return pass;
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2) {
    std::fprintf(stderr, "usage: acceptance <path-to-mmcl-cli> [criteria, e.g. 58]\n");
    return 2;
  }
  const std::string only = argc > 2 ? argv[2] : "12345678";
  const auto want = [&](char c) { return only.find(c) != std::string::npos; };
  int ran = 0;
  if (want('1') && ++ran) criterion1();
  if (want('2') && ++ran) criterion2();
  if (want('3') && ++ran) criterion3();
  if (want('4') && ++ran) criterion4();
  if (want('5') && ++ran) criterion5();
  if (want('6') && ++ran) criterion6();
  if (want('7') && ++ran) criterion7(argv[1]);
  if (want('8') && ++ran) criterion8();
  std::printf("%d/%d criteria passed\n", ran - g_failures, ran);
  return g_failures;
}
