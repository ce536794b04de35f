#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>

#include "mmcl/config_json.hpp"
#include "mmcl/data.hpp"
#include "mmcl/train.hpp"

using namespace mmcl;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& tag) {
  fs::path p = fs::temp_directory_path() / ("mmcl_train_" + tag);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

// Small two-modality dataset plus a matching pretraining setup.
struct Fixture {
  Dataset data;
  PretrainSetup setup;
};

Fixture make_fixture(int samples = 16, uint64_t seed = 42) {
  fs::path dir = temp_dir("fix" + std::to_string(seed) + "_" + std::to_string(samples));
  SyntheticSpec spec;
  spec.classes = 2;
  spec.per_class = samples / 2;
  spec.latent_dim = 4;
  spec.modality_dims = {4, 5};
  spec.t_min = 3;
  spec.t_max = 6;
  spec.num_groups = 4;
  synth_generate(spec, dir, 7);

  Fixture f;
  f.data = load_dataset(load_manifest(dir / "manifest.json"));
  for (const auto& mod : f.data.manifest.modalities) {
    EncoderConfig e;
    e.kind = EncoderKind::mlp;
    e.input_dim = mod.dim;
    e.embed_dim = 8;
    // width 16 keeps the chance of a fully dead ReLU row (which the loss
    // rightly rejects as a degenerate embedding) out of the picture
    e.hidden = {16};
    f.setup.encoders[mod.id] = e;
  }
  f.setup.projection = {8, 16, 4};
  f.setup.train.batch_size = 8;
  f.setup.train.lr0 = 0.05;
  f.setup.train.max_epochs = 10;
  f.setup.train.patience = 10;
  f.setup.train.window_len = 4;
  f.setup.train.val_fraction = 0.25;
  f.setup.train.seed = seed;
  return f;
}

}  // namespace

TEST_CASE("learning rate decays stepwise and never increases") {
  TrainConfig cfg;
  cfg.lr0 = 0.001;
  cfg.lr_decay = 0.9;
  cfg.lr_decay_every = 100;
  CHECK(lr_at(0, cfg) == 0.001);
  CHECK(lr_at(99, cfg) == 0.001);
  CHECK(std::abs(lr_at(100, cfg) - 0.0009) < 1e-15);
  CHECK(std::abs(lr_at(199, cfg) - 0.0009) < 1e-15);
  CHECK(std::abs(lr_at(300, cfg) - 0.000729) < 1e-15);
  double prev = lr_at(0, cfg);
  for (int e = 1; e < 1000; ++e) {
    double cur = lr_at(e, cfg);
    REQUIRE(cur <= prev);
    prev = cur;
  }
  CHECK_THROWS_AS(lr_at(-1, cfg), Error);
}

TEST_CASE("sgd reduces to plain gradient descent without momentum or decay") {
  ParamStore p;
  p.add("w", Matrix(1, 2, 1.0));
  p.grad("w")(0, 0) = 0.5;
  p.grad("w")(0, 1) = -2.0;
  OptimizerState st;
  sgd_step(p, st, 0.1, 0.0, 0.0);
  CHECK(std::abs(p.value("w")(0, 0) - (1.0 - 0.1 * 0.5)) < 1e-15);
  CHECK(std::abs(p.value("w")(0, 1) - (1.0 + 0.1 * 2.0)) < 1e-15);
}

TEST_CASE("sgd single step matches the scalar hand computation") {
  // w=1, g=1, wd=0.001, mu=0.9, v=0, lr=0.001: g'=1.001, v=1.001, w=0.998999
  ParamStore p;
  p.add("w", Matrix(1, 1, 1.0));
  p.grad("w")(0, 0) = 1.0;
  OptimizerState st;
  sgd_step(p, st, 0.001, 0.9, 0.001);
  CHECK(std::abs(st.velocity.at("w")(0, 0) - 1.001) < 1e-15);
  CHECK(std::abs(p.value("w")(0, 0) - 0.998999) < 1e-15);
}

TEST_CASE("velocity alone drives coasting updates") {
  // g=0, wd=0: v <- mu*v each step, w follows the recurrence
  //   w1 = w - lr*mu*v,  w2 = w1 - lr*mu^2*v
  const double mu = 0.9, lr = 0.01, v0 = 2.0;
  ParamStore p;
  p.add("w", Matrix(1, 1, 1.0));
  OptimizerState st;
  st.velocity_for("w", 1, 1)(0, 0) = v0;
  sgd_step(p, st, lr, mu, 0.0);
  sgd_step(p, st, lr, mu, 0.0);
  double expect = 1.0 - lr * mu * v0 - lr * mu * mu * v0;
  CHECK(std::abs(p.value("w")(0, 0) - expect) < 1e-15);
}

TEST_CASE("zero gradients without decay leave parameters unchanged") {
  Rng rng(3);
  ParamStore p;
  p.add("w", Matrix::random_normal(3, 3, rng));
  uint64_t before = p.value_checksum();
  OptimizerState st;
  sgd_step(p, st, 0.5, 0.9, 0.0);
  CHECK(p.value_checksum() == before);
}

TEST_CASE("optimizer refuses silently reshaped parameters") {
  ParamStore p;
  p.add("w", Matrix(2, 2, 1.0));
  OptimizerState st;
  sgd_step(p, st, 0.1, 0.9, 0.0);
  st.velocity.at("w") = Matrix(3, 3, 0.0);
  CHECK_THROWS_AS(sgd_step(p, st, 0.1, 0.9, 0.0), Error);
}

TEST_CASE("patience monitor counts consecutive non-improvements") {
  SECTION("monotonic improvement never stops") {
    PatienceMonitor m(3);
    for (int i = 0; i < 50; ++i) REQUIRE_FALSE(m.observe(100.0 - i));
  }
  SECTION("constant series stops after exactly patience updates") {
    PatienceMonitor m(3);
    CHECK_FALSE(m.observe(1.0));  // baseline
    CHECK_FALSE(m.observe(1.0));
    CHECK_FALSE(m.observe(1.0));
    CHECK(m.observe(1.0));
  }
  SECTION("late improvement resets the counter") {
    PatienceMonitor m(100);
    m.observe(1.0);
    for (int i = 0; i < 99; ++i) REQUIRE_FALSE(m.observe(2.0));
    CHECK_FALSE(m.observe(0.5));  // step 99 of 100 improves
    CHECK(m.since() == 0);
    for (int i = 0; i < 99; ++i) REQUIRE_FALSE(m.observe(2.0));
    CHECK(m.observe(2.0));
  }
  SECTION("sub-tolerance improvement does not count") {
    PatienceMonitor m(2, 1e-3);
    m.observe(1.0);
    CHECK_FALSE(m.observe(1.0 - 1e-4));
    CHECK(m.observe(1.0 - 2e-4));
  }
}

TEST_CASE("train config rejects out-of-range values") {
  TrainConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  TrainConfig bad = cfg;
  bad.batch_size = 1;
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = cfg;
  bad.patience = cfg.max_epochs + 1;
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = cfg;
  bad.val_fraction = 0.7;
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = cfg;
  bad.momentum = 1.0;
  CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("pretraining runs, logs every epoch, and improves the loss") {
  Fixture f = make_fixture();
  PretrainResult res = pretrain(unlabeled_view(f.data), f.setup);
  REQUIRE(res.epochs_run >= 1);
  REQUIRE(res.log.size() == static_cast<size_t>(res.epochs_run));
  for (size_t i = 0; i < res.log.size(); ++i) {
    CHECK(res.log[i].epoch == static_cast<int>(i) + 1);  // epochs count from 1
    CHECK(res.log[i].lr > 0.0);
    CHECK(std::isfinite(res.log[i].train_loss));
    CHECK(std::isfinite(res.log[i].val_loss));
  }
  CHECK(res.log.back().train_loss < res.log.front().train_loss);
  CHECK(res.best_epoch <= res.epochs_run);
  CHECK(res.best_val <= res.log.front().val_loss + 1e-12);
  CHECK(res.params.size() > 0);
}

TEST_CASE("same seed reproduces parameters and logs bit for bit") {
  Fixture a = make_fixture(16, 11);
  Fixture b = make_fixture(16, 11);
  PretrainResult ra = pretrain(unlabeled_view(a.data), a.setup);
  PretrainResult rb = pretrain(unlabeled_view(b.data), b.setup);
  CHECK(ra.params.value_checksum() == rb.params.value_checksum());
  REQUIRE(ra.log.size() == rb.log.size());
  for (size_t i = 0; i < ra.log.size(); ++i) {
    CHECK(ra.log[i].train_loss == rb.log[i].train_loss);
    CHECK(ra.log[i].val_loss == rb.log[i].val_loss);
    CHECK(ra.log[i].lr == rb.log[i].lr);
  }

  Fixture c = make_fixture(16, 12);
  PretrainResult rc = pretrain(unlabeled_view(c.data), c.setup);
  CHECK(rc.params.value_checksum() != ra.params.value_checksum());
}

TEST_CASE("null learning rate freezes initialization") {
  Fixture f = make_fixture();
  f.setup.train.lr0 = 0.0;
  f.setup.train.max_epochs = 3;
  f.setup.train.patience = 3;

  // reproduce the initialization independently of the training loop
  detail::ModalityNets nets = detail::build_nets(f.setup.encoders, f.setup.projection);
  ParamStore init;
  Rng init_rng(derive_seed(f.setup.train.seed, "init"));
  detail::init_nets(nets, init, init_rng);

  PretrainResult res = pretrain(unlabeled_view(f.data), f.setup);
  CHECK(res.params.value_checksum() == init.value_checksum());
}

TEST_CASE("pretraining needs two modalities and enough samples") {
  Fixture f = make_fixture();
  PretrainSetup one;
  one.encoders[0] = f.setup.encoders.at(0);
  one.projection = f.setup.projection;
  one.train = f.setup.train;
  CHECK_THROWS_AS(pretrain(unlabeled_view(f.data), one), Error);

  CHECK_THROWS_AS(split_train_val(3, 0.25, 1), Error);
}

TEST_CASE("train and validation splits partition the index range") {
  auto [train, val] = split_train_val(20, 0.2, 9);
  CHECK(train.size() + val.size() == 20);
  CHECK(val.size() >= 2);
  CHECK(train.size() >= 2);
  std::set<int> seen;
  for (int i : train) seen.insert(i);
  for (int i : val) seen.insert(i);
  CHECK(seen.size() == 20);
  CHECK(*seen.begin() == 0);
  CHECK(*seen.rbegin() == 19);

  // tiny inputs still leave two samples on each side
  auto [t2, v2] = split_train_val(4, 0.5, 1);
  CHECK(t2.size() == 2);
  CHECK(v2.size() == 2);
}

TEST_CASE("checkpoints round trip with exact parameter bits") {
  fs::path dir = temp_dir("ckpt");
  Fixture f = make_fixture();
  f.setup.train.max_epochs = 2;
  f.setup.train.patience = 2;
  PretrainResult res = pretrain(unlabeled_view(f.data), f.setup);

  Checkpoint ck;
  ck.seed = 42;
  ck.config = checkpoint_config(f.data.manifest.modalities, f.setup);
  ck.params = res.params;
  save_checkpoint(ck, dir / "model.mpck");

  Checkpoint l = load_checkpoint(dir / "model.mpck");
  CHECK(l.seed == 42);
  CHECK(l.config == ck.config);
  REQUIRE(l.params.size() == ck.params.size());
  CHECK(l.params.value_checksum() == ck.params.value_checksum());
  for (const auto& e : ck.params.entries())
    CHECK(max_abs_diff(l.params.value(e.name), e.value) == 0.0);

  // the config echo is enough to rebuild the nets
  CheckpointSetup rebuilt = setup_from_checkpoint_config(l.config);
  CHECK(rebuilt.modalities.size() == 2);
  CHECK(rebuilt.setup.encoders.at(0).embed_dim == 8);
  CHECK(rebuilt.setup.projection.out_dim == 4);
  CHECK(rebuilt.setup.train.batch_size == 8);

  // saving the loaded checkpoint reproduces the file byte for byte
  save_checkpoint(l, dir / "again.mpck");
  CHECK(detail::read_entire_file(dir / "model.mpck") ==
        detail::read_entire_file(dir / "again.mpck"));
}

TEST_CASE("checkpoint loader rejects corrupted containers") {
  fs::path dir = temp_dir("ckpt_bad");
  Checkpoint ck;
  ck.seed = 1;
  ck.config = ojson::object();
  ck.params.add("w", Matrix(2, 2, 0.5));
  save_checkpoint(ck, dir / "ok.mpck");
  std::string bytes = detail::read_entire_file(dir / "ok.mpck");

  std::string bad = bytes;
  bad[0] = 'Z';
  detail::write_entire_file(dir / "magic.mpck", bad);
  CHECK_THROWS_AS(load_checkpoint(dir / "magic.mpck"), Error);

  detail::write_entire_file(dir / "short.mpck", bytes.substr(0, bytes.size() - 3));
  CHECK_THROWS_AS(load_checkpoint(dir / "short.mpck"), Error);

  detail::write_entire_file(dir / "long.mpck", bytes + "x");
  CHECK_THROWS_AS(load_checkpoint(dir / "long.mpck"), Error);
}

TEST_CASE("train logs serialize one json record per epoch") {
  fs::path dir = temp_dir("logs");
  std::vector<EpochRecord> log;
  log.push_back({0, 0.001, 3.5, 3.6, 0.01});
  log.push_back({1, 0.001, 3.0, 3.2, 0.011});
  write_train_log(log, dir / "log.jsonl");

  std::ifstream in(dir / "log.jsonl");
  std::string line;
  int rows = 0;
  while (std::getline(in, line)) {
    ojson j = ojson::parse(line);
    CHECK(j.at("epoch").get<int>() == rows);
    CHECK(j.contains("lr"));
    CHECK(j.contains("train_loss"));
    CHECK(j.contains("val_loss"));
    CHECK(j.contains("seconds"));
    ++rows;
  }
  CHECK(rows == 2);
}

TEST_CASE("config json round trips every field") {
  Fixture f = make_fixture();
  f.setup.loss.temperature = 0.2;
  f.setup.loss.include_positive = true;
  f.setup.train.weight_decay = 0.01;
  ojson j = checkpoint_config(f.data.manifest.modalities, f.setup);
  CheckpointSetup s = setup_from_checkpoint_config(j);
  CHECK(s.setup.loss.temperature == 0.2);
  CHECK(s.setup.loss.include_positive);
  CHECK(s.setup.train.weight_decay == 0.01);
  CHECK(s.setup.encoders.size() == 2);
  CHECK(s.setup.encoders.at(1).input_dim == 5);
  CHECK(s.modalities[1].name == "m1");
  CHECK(checkpoint_config(s.modalities, s.setup) == j);
}
