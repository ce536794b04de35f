#pragma once

#include <map>
#include <string>
#include <vector>

#include "mmcl/data.hpp"
#include "mmcl/encoders.hpp"
#include "mmcl/error.hpp"
#include "mmcl/loss.hpp"
#include "mmcl/train.hpp"

namespace mmcl {

// JSON round-trips for every config that lands in checkpoints or in the
// effective-config echo. Keys are written in a fixed order so dumps are
// deterministic; readers reject unknown keys.

inline ojson to_json(const EncoderConfig& c) {
  ojson j;
  j["kind"] = to_string(c.kind);
  j["input_dim"] = c.input_dim;
  j["embed_dim"] = c.embed_dim;
  j["hidden"] = c.hidden;
  j["tcn_kernel"] = c.tcn_kernel;
  j["tcn_dilations"] = c.tcn_dilations;
  j["tcn_channels"] = c.tcn_channels;
  j["attn_heads"] = c.attn_heads;
  j["attn_dim"] = c.attn_dim;
  j["attn_ff"] = c.attn_ff;
  return j;
}

inline EncoderConfig encoder_config_from_json(const ojson& j) {
  detail::expect_keys(j,
                      {"kind", "input_dim", "embed_dim", "hidden", "tcn_kernel", "tcn_dilations",
                       "tcn_channels", "attn_heads", "attn_dim", "attn_ff"},
                      "encoder config");
  EncoderConfig c;
  c.kind = encoder_kind_from_string(j.at("kind").get<std::string>());
  c.input_dim = j.at("input_dim").get<int>();
  c.embed_dim = j.at("embed_dim").get<int>();
  if (j.contains("hidden")) c.hidden = j.at("hidden").get<std::vector<int>>();
  if (j.contains("tcn_kernel")) c.tcn_kernel = j.at("tcn_kernel").get<int>();
  if (j.contains("tcn_dilations")) c.tcn_dilations = j.at("tcn_dilations").get<std::vector<int>>();
  if (j.contains("tcn_channels")) c.tcn_channels = j.at("tcn_channels").get<int>();
  if (j.contains("attn_heads")) c.attn_heads = j.at("attn_heads").get<int>();
  if (j.contains("attn_dim")) c.attn_dim = j.at("attn_dim").get<int>();
  if (j.contains("attn_ff")) c.attn_ff = j.at("attn_ff").get<int>();
  c.validate();
  return c;
}

inline ojson to_json(const ProjectionConfig& c) {
  return ojson{{"in_dim", c.in_dim}, {"hidden_dim", c.hidden_dim}, {"out_dim", c.out_dim}};
}

inline ProjectionConfig projection_config_from_json(const ojson& j) {
  detail::expect_keys(j, {"in_dim", "hidden_dim", "out_dim"}, "projection config");
  ProjectionConfig c;
  c.in_dim = j.at("in_dim").get<int>();
  c.hidden_dim = j.at("hidden_dim").get<int>();
  c.out_dim = j.at("out_dim").get<int>();
  c.validate();
  return c;
}

inline ojson to_json(const LossConfig& c) {
  return ojson{{"temperature", c.temperature}, {"include_positive", c.include_positive}};
}

inline LossConfig loss_config_from_json(const ojson& j) {
  detail::expect_keys(j, {"temperature", "include_positive"}, "loss config");
  LossConfig c;
  if (j.contains("temperature")) c.temperature = j.at("temperature").get<double>();
  if (j.contains("include_positive")) c.include_positive = j.at("include_positive").get<bool>();
  c.validate();
  return c;
}

inline ojson to_json(const TrainConfig& c) {
  ojson j;
  j["batch_size"] = c.batch_size;
  j["lr0"] = c.lr0;
  j["momentum"] = c.momentum;
  j["weight_decay"] = c.weight_decay;
  j["lr_decay"] = c.lr_decay;
  j["lr_decay_every"] = c.lr_decay_every;
  j["max_epochs"] = c.max_epochs;
  j["patience"] = c.patience;
  j["tolerance"] = c.tolerance;
  j["window_len"] = c.window_len;
  j["val_fraction"] = c.val_fraction;
  j["seed"] = c.seed;
  return j;
}

inline TrainConfig train_config_from_json(const ojson& j) {
  detail::expect_keys(j,
                      {"batch_size", "lr0", "momentum", "weight_decay", "lr_decay",
                       "lr_decay_every", "max_epochs", "patience", "tolerance", "window_len",
                       "val_fraction", "seed"},
                      "train config");
  TrainConfig c;
  if (j.contains("batch_size")) c.batch_size = j.at("batch_size").get<int>();
  if (j.contains("lr0")) c.lr0 = j.at("lr0").get<double>();
  if (j.contains("momentum")) c.momentum = j.at("momentum").get<double>();
  if (j.contains("weight_decay")) c.weight_decay = j.at("weight_decay").get<double>();
  if (j.contains("lr_decay")) c.lr_decay = j.at("lr_decay").get<double>();
  if (j.contains("lr_decay_every")) c.lr_decay_every = j.at("lr_decay_every").get<int>();
  if (j.contains("max_epochs")) c.max_epochs = j.at("max_epochs").get<int>();
  if (j.contains("patience")) c.patience = j.at("patience").get<int>();
  if (j.contains("tolerance")) c.tolerance = j.at("tolerance").get<double>();
  if (j.contains("window_len")) c.window_len = j.at("window_len").get<int>();
  if (j.contains("val_fraction")) c.val_fraction = j.at("val_fraction").get<double>();
  if (j.contains("seed")) c.seed = j.at("seed").get<uint64_t>();
  c.validate();
  return c;
}

// Full checkpoint echo: modality table plus every config needed to rebuild
// the nets and re-run the stage.
inline ojson checkpoint_config(const std::vector<Modality>& modalities,
                               const PretrainSetup& setup) {
  ojson j;
  ojson mods = ojson::array();
  for (const auto& m : modalities)
    mods.push_back(ojson{{"id", m.id}, {"name", m.name}, {"dim", m.dim}});
  j["modalities"] = std::move(mods);
  ojson encs;
  for (const auto& [id, cfg] : setup.encoders) encs[std::to_string(id)] = to_json(cfg);
  j["encoders"] = std::move(encs);
  j["projection"] = to_json(setup.projection);
  j["loss"] = to_json(setup.loss);
  j["train"] = to_json(setup.train);
  return j;
}

struct CheckpointSetup {
  std::vector<Modality> modalities;
  PretrainSetup setup;
};

inline CheckpointSetup setup_from_checkpoint_config(const ojson& j) {
  detail::expect_keys(j, {"modalities", "encoders", "projection", "loss", "train"},
                      "checkpoint config");
  CheckpointSetup out;
  for (const auto& mj : j.at("modalities"))
    out.modalities.push_back(
        {mj.at("id").get<int>(), mj.at("name").get<std::string>(), mj.at("dim").get<int>()});
  for (auto it = j.at("encoders").begin(); it != j.at("encoders").end(); ++it)
    out.setup.encoders[std::stoi(it.key())] = encoder_config_from_json(it.value());
  out.setup.projection = projection_config_from_json(j.at("projection"));
  out.setup.loss = loss_config_from_json(j.at("loss"));
  out.setup.train = train_config_from_json(j.at("train"));
  return out;
}

}  // namespace mmcl
