// Command-line driver: dataset synthesis, contrastive pretraining, feature
// extraction, probe evaluation, cross-validation, gradient self-check.
//
// Configuration is a flat map of dotted keys. Precedence: defaults, then
// --config file entries, then explicit flags. Unknown keys are rejected and
// the effective configuration is echoed to <out>/config.json, so any run is
// reproducible from its echo alone.

#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mmcl/mmcl.hpp"

namespace fs = std::filesystem;
using mmcl::ojson;

namespace {

// Flat dotted-key config with consumption tracking. Every key a command
// understands is read through a typed getter; keys that were loaded but
// never read are a config error.
class Cfg {
 public:
  void load_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) mmcl::throw_config("cannot open config file '" + path.string() + "'");
    ojson j;
    try {
      j = ojson::parse(in);
    } catch (const std::exception& e) {
      mmcl::throw_config("config '" + path.string() + "': " + e.what());
    }
    if (!j.is_object()) mmcl::throw_config("config must be a JSON object of dotted keys");
    for (auto it = j.begin(); it != j.end(); ++it) {
      if (it.value().is_object())
        mmcl::throw_config("config key '" + it.key() + "': nested objects are not allowed, "
                           "use flat dotted keys");
      values_[it.key()] = it.value();
    }
  }

  void set_override(const std::string& key, const ojson& value) { values_[key] = value; }

  bool has(const std::string& key) const { return values_.count(key) != 0; }

  int geti(const std::string& key, int def) {
    return fetch(key, def, [&](const ojson& v) { return v.get<int>(); });
  }
  double getd(const std::string& key, double def) {
    return fetch(key, def, [&](const ojson& v) { return v.get<double>(); });
  }
  uint64_t getu(const std::string& key, uint64_t def) {
    return fetch(key, def, [&](const ojson& v) { return v.get<uint64_t>(); });
  }
  bool getb(const std::string& key, bool def) {
    return fetch(key, def, [&](const ojson& v) { return v.get<bool>(); });
  }
  std::string gets(const std::string& key, const std::string& def) {
    return fetch(key, def, [&](const ojson& v) {
      return v.is_string() ? v.get<std::string>() : v.dump();
    });
  }
  std::vector<int> getvi(const std::string& key, std::vector<int> def) {
    return fetch(key, std::move(def), [&](const ojson& v) { return v.get<std::vector<int>>(); });
  }

  std::string require(const std::string& key, const std::string& what) {
    if (!has(key)) mmcl::throw_config("missing required key '" + key + "' (" + what + ")");
    return gets(key, "");
  }

  // Unread keys mean a typo or a key from the wrong command.
  void reject_unknown() const {
    for (const auto& [k, v] : values_)
      if (!consumed_.count(k)) mmcl::throw_config("unknown config key '" + k + "'");
  }

  ojson echo() const { return echo_; }
  void note(const std::string& key, const ojson& v) { echo_[key] = v; }

 private:
  template <typename T, typename Get>
  T fetch(const std::string& key, T def, Get get) {
    T out = std::move(def);
    auto it = values_.find(key);
    if (it != values_.end()) {
      consumed_.insert(key);
      try {
        out = get(it->second);
      } catch (const std::exception& e) {
        mmcl::throw_config("config key '" + key + "': " + e.what());
      }
    }
    echo_[key] = out;
    return out;
  }

  std::map<std::string, ojson> values_;
  std::set<std::string> consumed_;
  ojson echo_;
};

ojson parse_override_value(const std::string& raw) {
  try {
    return ojson::parse(raw);
  } catch (const std::exception&) {
    return raw; // unquoted strings (paths, names) arrive verbatim
  }
}

void apply_sets(Cfg& cfg, const std::vector<std::string>& sets) {
  for (const std::string& s : sets) {
    const size_t eq = s.find('=');
    if (eq == std::string::npos || eq == 0)
      mmcl::throw_config("--set expects key=value, got '" + s + "'");
    cfg.set_override(s.substr(0, eq), parse_override_value(s.substr(eq + 1)));
  }
}

struct Global {
  std::string config_path;
  std::string out;
  uint64_t seed = 42;
  bool seed_given = false;
  bool quiet = false;
  std::vector<std::string> sets;
};

Cfg make_cfg(const Global& g, const std::string& command) {
  Cfg cfg;
  if (!g.config_path.empty()) cfg.load_file(g.config_path);
  apply_sets(cfg, g.sets);
  // a config echo names its command; replaying it against another command
  // is a mistake worth rejecting early
  const std::string cmd_in_file = cfg.gets("command", command);
  if (cmd_in_file != command)
    mmcl::throw_config("config is for command '" + cmd_in_file + "', running '" + command + "'");
  cfg.note("command", command);
  return cfg;
}

uint64_t effective_seed(const Global& g, Cfg& cfg) {
  uint64_t seed = cfg.getu("seed", g.seed);
  if (g.seed_given) seed = g.seed; // explicit flag beats the config file
  cfg.note("seed", seed);
  return seed;
}

void write_echo(const Cfg& cfg, const fs::path& out) {
  std::ofstream f(out / "config.json");
  f << cfg.echo().dump(2) << "\n";
}

void say(const Global& g, const std::string& msg) {
  if (!g.quiet) std::cout << msg << "\n";
}

// ---------------------------------------------------------------------------

mmcl::SyntheticSpec synth_spec_from(Cfg& cfg) {
  mmcl::SyntheticSpec spec;
  spec.classes = cfg.geti("synth.classes", spec.classes);
  spec.per_class = cfg.geti("synth.per_class", spec.per_class);
  spec.latent_dim = cfg.geti("synth.latent_dim", spec.latent_dim);
  const int modalities = cfg.geti("synth.modalities", 3);
  std::vector<int> default_dims;
  for (int k = 0; k < modalities; ++k) default_dims.push_back(12 + 4 * k);
  spec.modality_dims = cfg.getvi("synth.dims", default_dims);
  if (static_cast<int>(spec.modality_dims.size()) != modalities)
    mmcl::throw_config("synth.dims has " + std::to_string(spec.modality_dims.size()) +
                       " entries for synth.modalities=" + std::to_string(modalities));
  spec.t_min = cfg.geti("synth.t_min", spec.t_min);
  spec.t_max = cfg.geti("synth.t_max", spec.t_max);
  spec.sigma_obs = cfg.getd("synth.sigma_obs", spec.sigma_obs);
  spec.sigma_class = cfg.getd("synth.sigma_class", spec.sigma_class);
  spec.outlier_frac = cfg.getd("synth.outlier_frac", spec.outlier_frac);
  spec.outlier_scale = cfg.getd("synth.outlier_scale", spec.outlier_scale);
  spec.num_groups = cfg.geti("synth.num_groups", spec.num_groups);
  spec.map_seed = cfg.getu("synth.map_seed", spec.map_seed);
  spec.validate();
  return spec;
}

int cmd_synth(const Global& g, Cfg cfg) {
  const uint64_t seed = effective_seed(g, cfg);
  mmcl::SyntheticSpec spec = synth_spec_from(cfg);
  const int k = cfg.geti("folds.k", 10);
  const std::string mode = cfg.gets("folds.mode", "standard");
  cfg.reject_unknown();

  const fs::path out(g.out);
  fs::create_directories(out);
  mmcl::SyntheticDataset ds = mmcl::synth_generate(spec, out, seed);
  mmcl::FoldPlan plan = mmcl::make_folds(ds.manifest, k, mmcl::fold_mode_from_string(mode), seed);
  mmcl::save_fold_plan(plan, out / "folds.json");
  write_echo(cfg, out);
  say(g, "wrote " + std::to_string(ds.manifest.samples.size()) + " samples, " +
             std::to_string(spec.modality_dims.size()) + " modalities -> " + out.string());
  return 0;
}

// ---------------------------------------------------------------------------

mmcl::TrainConfig train_config_from(Cfg& cfg, uint64_t seed, int default_batch) {
  mmcl::TrainConfig t;
  t.batch_size = cfg.geti("train.batch_size", default_batch);
  t.lr0 = cfg.getd("train.lr0", t.lr0);
  t.momentum = cfg.getd("train.momentum", t.momentum);
  t.weight_decay = cfg.getd("train.weight_decay", t.weight_decay);
  t.lr_decay = cfg.getd("train.lr_decay", t.lr_decay);
  t.lr_decay_every = cfg.geti("train.lr_decay_every", t.lr_decay_every);
  t.max_epochs = cfg.geti("train.max_epochs", t.max_epochs);
  t.patience = cfg.geti("train.patience", t.patience);
  t.tolerance = cfg.getd("train.tolerance", t.tolerance);
  t.window_len = cfg.geti("train.window_len", t.window_len);
  t.val_fraction = cfg.getd("train.val_fraction", t.val_fraction);
  t.seed = seed;
  t.validate();
  return t;
}

mmcl::PretrainSetup pretrain_setup_from(Cfg& cfg, const mmcl::Manifest& manifest, uint64_t seed) {
  mmcl::PretrainSetup setup;
  const std::string kind = cfg.gets("enc.kind", "mlp");
  const int embed = cfg.geti("enc.embed_dim", 512);
  const std::vector<int> hidden = cfg.getvi("enc.hidden", {512});
  const int tk = cfg.geti("enc.tcn_kernel", 3);
  const std::vector<int> tdil = cfg.getvi("enc.tcn_dilations", {1, 2, 4});
  const int tch = cfg.geti("enc.tcn_channels", 64);
  const int ah = cfg.geti("enc.attn_heads", 4);
  const int ad = cfg.geti("enc.attn_dim", 64);
  const int af = cfg.geti("enc.attn_ff", 128);
  for (const auto& mod : manifest.modalities) {
    mmcl::EncoderConfig e;
    e.kind = mmcl::encoder_kind_from_string(kind);
    e.input_dim = mod.dim;
    e.embed_dim = embed;
    e.hidden = hidden;
    e.tcn_kernel = tk;
    e.tcn_dilations = tdil;
    e.tcn_channels = tch;
    e.attn_heads = ah;
    e.attn_dim = ad;
    e.attn_ff = af;
    e.validate();
    setup.encoders[mod.id] = e;
  }
  setup.projection.in_dim = embed;
  setup.projection.hidden_dim = cfg.geti("proj.hidden_dim", 512);
  setup.projection.out_dim = cfg.geti("proj.out_dim", 256);
  setup.projection.validate();
  setup.loss.temperature = cfg.getd("loss.temperature", 0.07);
  setup.loss.include_positive = cfg.getb("loss.include_positive", false);
  setup.loss.validate();
  setup.train = train_config_from(cfg, seed, 32);
  return setup;
}

int cmd_pretrain(const Global& g, Cfg cfg) {
  const uint64_t seed = effective_seed(g, cfg);
  const std::string manifest_path = cfg.require("data.manifest", "path to the dataset manifest");
  mmcl::Manifest manifest = mmcl::load_manifest(manifest_path);
  mmcl::PretrainSetup setup = pretrain_setup_from(cfg, manifest, seed);
  cfg.reject_unknown();

  const fs::path out(g.out);
  fs::create_directories(out);
  mmcl::Dataset data = mmcl::load_dataset(manifest);
  mmcl::PretrainResult res = mmcl::pretrain(mmcl::unlabeled_view(data), setup);

  mmcl::Checkpoint ck;
  ck.seed = seed;
  ck.config = mmcl::checkpoint_config(manifest.modalities, setup);
  ck.params = std::move(res.params);
  mmcl::save_checkpoint(ck, out / "checkpoint.mpck");
  mmcl::write_train_log(res.log, out / "train_log.jsonl");
  write_echo(cfg, out);
  say(g, "pretrained " + std::to_string(res.epochs_run) + " epochs, best val loss " +
             std::to_string(res.best_val) + " at epoch " + std::to_string(res.best_epoch));
  return 0;
}

// ---------------------------------------------------------------------------

struct LoadedCheckpoint {
  mmcl::Checkpoint ck;
  mmcl::CheckpointSetup setup;
  mmcl::detail::ModalityNets nets;
};

LoadedCheckpoint load_nets(const std::string& checkpoint_path, const mmcl::Manifest& manifest) {
  LoadedCheckpoint lc;
  lc.ck = mmcl::load_checkpoint(checkpoint_path);
  lc.setup = mmcl::setup_from_checkpoint_config(lc.ck.config);
  if (lc.setup.modalities.size() != manifest.modalities.size())
    mmcl::throw_data("checkpoint was trained with " + std::to_string(lc.setup.modalities.size()) +
                     " modalities, manifest has " + std::to_string(manifest.modalities.size()));
  for (size_t i = 0; i < manifest.modalities.size(); ++i) {
    const auto& a = lc.setup.modalities[i];
    const auto& b = manifest.modalities[i];
    if (a.id != b.id || a.name != b.name || a.dim != b.dim)
      mmcl::throw_data("checkpoint modality '" + a.name + "' does not match manifest modality '" +
                       b.name + "'");
  }
  lc.nets = mmcl::detail::build_nets(lc.setup.setup.encoders, lc.setup.setup.projection);
  return lc;
}

int cmd_extract(const Global& g, Cfg cfg) {
  effective_seed(g, cfg); // extraction is deterministic; echoed for completeness
  const std::string manifest_path = cfg.require("data.manifest", "path to the dataset manifest");
  const std::string ck_path = cfg.require("extract.checkpoint", "path to a checkpoint");
  cfg.reject_unknown();

  mmcl::Manifest manifest = mmcl::load_manifest(manifest_path);
  LoadedCheckpoint lc = load_nets(ck_path, manifest);
  mmcl::Dataset data = mmcl::load_dataset(manifest);

  const fs::path out(g.out);
  fs::create_directories(out / "features");
  mmcl::Matrix fused = mmcl::fuse_concat(
      mmcl::extract_embeddings(lc.nets, lc.ck.params, mmcl::unlabeled_view(data)));

  ojson index;
  index["dim"] = fused.cols();
  ojson ids = ojson::array();
  for (int i = 0; i < fused.rows(); ++i) {
    const std::string& id = manifest.samples[i].id;
    mmcl::Matrix row(1, fused.cols());
    for (int j = 0; j < fused.cols(); ++j) row(0, j) = fused(i, j);
    const std::string rel = "features/" + id + "_fused.mpft";
    mmcl::write_feature_file(out / rel, row);
    ids.push_back(ojson{{"id", id}, {"path", rel}});
  }
  index["samples"] = std::move(ids);
  std::ofstream(out / "features_index.json") << index.dump(2) << "\n";
  write_echo(cfg, out);
  say(g, "extracted " + std::to_string(fused.rows()) + " fused vectors of dim " +
             std::to_string(fused.cols()));
  return 0;
}

// ---------------------------------------------------------------------------

mmcl::ProbeData maybe_as_multilabel(mmcl::ProbeData pd, const std::string& task_override) {
  if (task_override.empty()) return pd;
  const mmcl::Task want = mmcl::task_from_string(task_override);
  if (want == pd.task) return pd;
  if (want == mmcl::Task::multiclass)
    mmcl::throw_config("cannot probe a multilabel dataset as multiclass");
  // one-hot conversion: each class becomes an independent present/absent call
  pd.presence = mmcl::Matrix(pd.features.rows(), pd.num_classes());
  for (int i = 0; i < pd.features.rows(); ++i) pd.presence(i, pd.klass[i]) = 1.0;
  pd.klass.clear();
  pd.task = mmcl::Task::multilabel;
  return pd;
}

void print_metrics(const Global& g, const mmcl::MetricsReport& m) {
  if (g.quiet) return;
  if (m.has_multiclass_acc) std::printf("acc %.4f\n", m.multiclass_acc);
  for (const auto& r : m.per_class) {
    std::printf("class %-12s wacc ", r.name.c_str());
    r.has_wacc ? std::printf("%.4f", r.wacc) : std::printf("  n/a ");
    std::printf("  f1 ");
    r.has_f1 ? std::printf("%.4f", r.f1) : std::printf("  n/a ");
    std::printf("\n");
  }
  if (m.has_overall_wacc || m.has_overall_f1) {
    std::printf("overall      wacc ");
    m.has_overall_wacc ? std::printf("%.4f", m.overall_wacc) : std::printf("  n/a ");
    std::printf("  f1 ");
    m.has_overall_f1 ? std::printf("%.4f", m.overall_f1) : std::printf("  n/a ");
    std::printf("\n");
  }
  for (const auto& w : m.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
}

int cmd_probe(const Global& g, Cfg cfg) {
  const uint64_t seed = effective_seed(g, cfg);
  const std::string manifest_path = cfg.require("data.manifest", "path to the dataset manifest");
  const std::string ck_path = cfg.require("probe.checkpoint", "path to a checkpoint");
  const std::string task_override = cfg.gets("probe.task", "");
  const double test_fraction = cfg.getd("probe.test_fraction", 0.25);
  if (test_fraction <= 0 || test_fraction >= 1)
    mmcl::throw_config("probe.test_fraction must be in (0,1)");

  mmcl::ProbeConfig pc;
  pc.hidden_dim = cfg.geti("probe.hidden_dim", pc.hidden_dim);
  pc.threshold = cfg.getd("probe.threshold", pc.threshold);
  pc.train = train_config_from(cfg, seed, 64);
  cfg.reject_unknown();

  mmcl::Manifest manifest = mmcl::load_manifest(manifest_path);
  LoadedCheckpoint lc = load_nets(ck_path, manifest);
  mmcl::Dataset data = mmcl::load_dataset(manifest);

  // seeded sample-level split into probe-train and held-out test
  const int n = static_cast<int>(manifest.samples.size());
  auto [train_pos, test_pos] =
      mmcl::split_train_val(n, test_fraction, mmcl::derive_seed(seed, "probe.split"));
  mmcl::Matrix train_fused = mmcl::fuse_concat(mmcl::extract_embeddings(
      lc.nets, lc.ck.params, mmcl::unlabeled_view(data, train_pos)));
  mmcl::Matrix test_fused = mmcl::fuse_concat(mmcl::extract_embeddings(
      lc.nets, lc.ck.params, mmcl::unlabeled_view(data, test_pos)));

  mmcl::ProbeData train_pd =
      maybe_as_multilabel(mmcl::probe_data_from(data, train_pos, train_fused), task_override);
  mmcl::ProbeData test_pd =
      maybe_as_multilabel(mmcl::probe_data_from(data, test_pos, test_fused), task_override);
  pc.loss = train_pd.task == mmcl::Task::multiclass ? mmcl::ProbeLoss::cross_entropy
                                                    : mmcl::ProbeLoss::binary_cross_entropy;

  mmcl::ProbeResult pr = mmcl::train_probe(train_pd, pc);
  mmcl::MetricsReport metrics = mmcl::evaluate_probe(pc, pr.params, test_pd);

  const fs::path out(g.out);
  fs::create_directories(out);
  std::ofstream(out / "metrics.json") << mmcl::to_json(metrics).dump(2) << "\n";
  mmcl::write_train_log(pr.log, out / "probe_log.jsonl");
  write_echo(cfg, out);
  for (const auto& w : pr.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
  print_metrics(g, metrics);
  return 0;
}

// ---------------------------------------------------------------------------

int cmd_crossval(const Global& g, Cfg cfg) {
  const uint64_t seed = effective_seed(g, cfg);
  const std::string manifest_path = cfg.require("data.manifest", "path to the dataset manifest");
  const std::string folds_path = cfg.gets("data.folds", "");
  const int k = cfg.geti("folds.k", 10);
  const std::string mode = cfg.gets("folds.mode", "standard");

  mmcl::Manifest manifest = mmcl::load_manifest(manifest_path);
  mmcl::PipelineConfig pipe;
  pipe.pretrain = pretrain_setup_from(cfg, manifest, seed);
  pipe.probe.hidden_dim = cfg.geti("probe.hidden_dim", pipe.probe.hidden_dim);
  pipe.probe.threshold = cfg.getd("probe.threshold", pipe.probe.threshold);
  pipe.probe.train = pipe.pretrain.train;
  pipe.probe.train.batch_size = cfg.geti("probe.batch_size", 64);
  pipe.probe.train.max_epochs = cfg.geti("probe.max_epochs", pipe.pretrain.train.max_epochs);
  pipe.probe.train.patience = cfg.geti("probe.patience", pipe.pretrain.train.patience);
  pipe.probe.train.validate();
  pipe.probe.loss = manifest.task == mmcl::Task::multiclass
                        ? mmcl::ProbeLoss::cross_entropy
                        : mmcl::ProbeLoss::binary_cross_entropy;
  cfg.reject_unknown();

  const fs::path out(g.out);
  fs::create_directories(out);
  mmcl::FoldPlan plan;
  if (!folds_path.empty()) {
    plan = mmcl::load_fold_plan(folds_path);
  } else {
    plan = mmcl::make_folds(manifest, k, mmcl::fold_mode_from_string(mode), seed);
    mmcl::save_fold_plan(plan, out / "folds.json");
  }

  mmcl::Dataset data = mmcl::load_dataset(manifest);
  mmcl::CrossvalResult res = mmcl::crossval(data, plan, pipe);
  std::ofstream(out / "crossval.json") << mmcl::to_json(res).dump(2) << "\n";
  write_echo(cfg, out);
  say(g, res.primary_name + " mean " + std::to_string(res.mean) + " std " +
             std::to_string(res.stddev) + " over " + std::to_string(res.folds.size()) + " folds");
  return 0;
}

// ---------------------------------------------------------------------------

int cmd_gradcheck(const Global& g, Cfg cfg, bool inject_bug) {
  const uint64_t seed = effective_seed(g, cfg);
  cfg.note("inject_backward_bug", inject_bug);
  cfg.reject_unknown();

  mmcl::GradCheckReport report = mmcl::run_gradcheck(seed, inject_bug);
  const fs::path out(g.out);
  fs::create_directories(out);
  std::ofstream(out / "gradcheck.json") << mmcl::to_json(report).dump(2) << "\n";
  write_echo(cfg, out);
  for (const auto& c : report.cases)
    say(g, std::string(c.pass ? "  ok   " : "  FAIL ") + c.name + "  max_rel_err " +
               std::to_string(c.max_rel_err));
  say(g, std::string("gradcheck ") + (report.pass ? "PASS" : "FAIL") + ", max rel err " +
             std::to_string(report.max_rel_err) + " over " + std::to_string(report.cases.size()) +
             " cases");
  if (!report.pass) {
    std::fprintf(stderr, "error: analytic gradients disagree with finite differences\n");
    return 4;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"multimodal pairwise contrastive learning"};
  app.require_subcommand(1);

  Global g;
  app.add_option("--config", g.config_path, "JSON config of flat dotted keys")
      ->group("global");
  app.add_option("--out", g.out, "output directory")->group("global");
  auto* seed_opt = app.add_option("--seed", g.seed, "master seed")->group("global");
  app.add_flag("--quiet", g.quiet, "suppress progress output")->group("global");
  app.add_option("--set", g.sets, "override a config key (key=value, repeatable)")
      ->group("global");

  // convenience aliases onto dotted keys, one table per command
  struct Alias {
    std::string flag, key;
  };
  auto add_aliases = [&](CLI::App* cmd, const std::vector<Alias>& aliases,
                         std::map<std::string, std::string>* sink) {
    for (const auto& a : aliases)
      cmd->add_option_function<std::string>(
             a.flag, [sink, key = a.key](const std::string& v) { (*sink)[key] = v; })
          ->group("options");
  };

  std::map<std::string, std::string> alias_values;
  CLI::App* synth = app.add_subcommand("synth", "generate a synthetic multimodal dataset");
  add_aliases(synth,
              {{"--classes", "synth.classes"},
               {"--per-class", "synth.per_class"},
               {"--modalities", "synth.modalities"},
               {"--dims", "synth.dims"},
               {"--sigma-obs", "synth.sigma_obs"},
               {"--groups", "synth.num_groups"},
               {"--folds", "folds.k"},
               {"--fold-mode", "folds.mode"}},
              &alias_values);
  CLI::App* pretrain = app.add_subcommand("pretrain", "contrastive pretraining, no labels");
  add_aliases(pretrain,
              {{"--manifest", "data.manifest"},
               {"--encoder", "enc.kind"},
               {"--embed-dim", "enc.embed_dim"},
               {"--lr", "train.lr0"},
               {"--epochs", "train.max_epochs"},
               {"--batch", "train.batch_size"},
               {"--patience", "train.patience"},
               {"--window", "train.window_len"},
               {"--tau", "loss.temperature"}},
              &alias_values);
  CLI::App* extract = app.add_subcommand("extract", "dump frozen fused features");
  add_aliases(extract, {{"--manifest", "data.manifest"}, {"--checkpoint", "extract.checkpoint"}},
              &alias_values);
  CLI::App* probe = app.add_subcommand("probe", "linear evaluation on frozen features");
  add_aliases(probe,
              {{"--manifest", "data.manifest"},
               {"--checkpoint", "probe.checkpoint"},
               {"--task", "probe.task"},
               {"--hidden", "probe.hidden_dim"},
               {"--test-fraction", "probe.test_fraction"},
               {"--epochs", "train.max_epochs"},
               {"--patience", "train.patience"}},
              &alias_values);
  CLI::App* crossval = app.add_subcommand("crossval", "k-fold pretrain+probe pipeline");
  add_aliases(crossval,
              {{"--manifest", "data.manifest"},
               {"--folds-file", "data.folds"},
               {"--k", "folds.k"},
               {"--fold-mode", "folds.mode"},
               {"--encoder", "enc.kind"},
               {"--epochs", "train.max_epochs"}},
              &alias_values);
  CLI::App* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient audit");
  bool inject_bug = false;
  // negative control: deliberately corrupt the backward pass; must FAIL
  gradcheck->add_flag("--inject-backward-bug", inject_bug, "")->group("");

  // let global flags like --out appear after the subcommand name
  for (CLI::App* sub : {synth, pretrain, extract, probe, crossval, gradcheck})
    sub->fallthrough();

  try {
    app.parse(argc, argv);
    g.seed_given = seed_opt->count() > 0;
    if (g.out.empty()) mmcl::throw_config("--out is required");

    CLI::App* sub = app.get_subcommands().at(0);
    Cfg cfg = make_cfg(g, sub->get_name());
    for (const auto& [key, value] : alias_values)
      cfg.set_override(key, parse_override_value(value));

    if (sub == synth) return cmd_synth(g, std::move(cfg));
    if (sub == pretrain) return cmd_pretrain(g, std::move(cfg));
    if (sub == extract) return cmd_extract(g, std::move(cfg));
    if (sub == probe) return cmd_probe(g, std::move(cfg));
    if (sub == crossval) return cmd_crossval(g, std::move(cfg));
    if (sub == gradcheck) return cmd_gradcheck(g, std::move(cfg), inject_bug);
    mmcl::throw_config("unknown command");
  } catch (const CLI::ParseError& e) {
    return app.exit(e); // CLI11 prints usage; its exit codes are nonzero on error
  } catch (const mmcl::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    switch (e.kind()) {
      case mmcl::ErrorKind::config: return 2;
      case mmcl::ErrorKind::data: return 3;
      case mmcl::ErrorKind::shape: return 3;
      case mmcl::ErrorKind::numeric: return 4;
      case mmcl::ErrorKind::protocol: return 1;
    }
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "unexpected error: %s\n", e.what());
    return 1;
  }
}
