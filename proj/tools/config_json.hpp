#ifndef UPL_TOOLS_CONFIG_JSON_HPP
#define UPL_TOOLS_CONFIG_JSON_HPP

#include <fstream>
#include <string>

#include <json.hpp>

#include "upl/upl.hpp"

namespace upl::tools {

using nlohmann::json;

inline std::string_view optimizer_name(OptimizerKind k) {
  switch (k) {
    case OptimizerKind::PlainGD: return "plain_gd";
    case OptimizerKind::Momentum: return "momentum";
    case OptimizerKind::Adam: return "adam";
  }
  return "unknown";
}

inline OptimizerKind parse_optimizer(const std::string& name) {
  if (name == "plain_gd" || name == "plain-gd" || name == "gd") return OptimizerKind::PlainGD;
  if (name == "momentum") return OptimizerKind::Momentum;
  if (name == "adam") return OptimizerKind::Adam;
  throw Error(ErrorKind::InvalidArgument, "unknown optimizer '" + name + "'");
}

struct RunConfig {
  SynthConfig data = reference_synth_config();
  TrainConfig train = reference_train_config();
};

inline json to_json(const RunConfig& c) {
  return json{
      {"data",
       {{"n_pairs", c.data.n_pairs},
        {"dim", c.data.dim},
        {"noise_sigma", c.data.noise_sigma},
        {"seed", c.data.seed},
        {"common_offset", c.data.common_offset}}},
      {"train",
       {{"loss", std::string(to_string(c.train.loss.kind))},
        {"margin", c.train.loss.margin},
        {"gamma", c.train.loss.gamma},
        {"epochs", c.train.epochs},
        {"batch_size", c.train.batch_size},
        {"learning_rate", c.train.learning_rate},
        {"optimizer",
         {{"kind", std::string(optimizer_name(c.train.optimizer.kind))},
          {"beta", c.train.optimizer.beta},
          {"beta2", c.train.optimizer.beta2},
          {"epsilon", c.train.optimizer.epsilon}}},
        {"seed", c.train.seed},
        {"eval_every", c.train.eval_every}}}};
}

namespace detail {

template <typename T>
void read_field(const json& obj, const char* section, const char* key, T& out) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw Error(ErrorKind::InvalidArgument,
                std::string("config field ") + section + "." + key + ": " + e.what());
  }
}

}  // namespace detail

/// Fields missing from `j` keep the reference values. Accepts a run manifest as well, in which
/// case its "config" member is used.
inline RunConfig from_json(const json& j) {
  const json& root = j.contains("config") && j.contains("command") ? j.at("config") : j;
  RunConfig c;
  if (root.contains("data")) {
    const json& d = root.at("data");
    detail::read_field(d, "data", "n_pairs", c.data.n_pairs);
    detail::read_field(d, "data", "dim", c.data.dim);
    detail::read_field(d, "data", "noise_sigma", c.data.noise_sigma);
    detail::read_field(d, "data", "seed", c.data.seed);
    detail::read_field(d, "data", "common_offset", c.data.common_offset);
  }
  if (root.contains("train")) {
    const json& t = root.at("train");
    std::string loss(to_string(c.train.loss.kind));
    detail::read_field(t, "train", "loss", loss);
    c.train.loss.kind = parse_loss_kind(loss);
    detail::read_field(t, "train", "margin", c.train.loss.margin);
    detail::read_field(t, "train", "gamma", c.train.loss.gamma);
    detail::read_field(t, "train", "epochs", c.train.epochs);
    detail::read_field(t, "train", "batch_size", c.train.batch_size);
    detail::read_field(t, "train", "learning_rate", c.train.learning_rate);
    detail::read_field(t, "train", "seed", c.train.seed);
    detail::read_field(t, "train", "eval_every", c.train.eval_every);
    if (t.contains("optimizer")) {
      const json& o = t.at("optimizer");
      std::string kind(optimizer_name(c.train.optimizer.kind));
      detail::read_field(o, "train.optimizer", "kind", kind);
      c.train.optimizer.kind = parse_optimizer(kind);
      detail::read_field(o, "train.optimizer", "beta", c.train.optimizer.beta);
      detail::read_field(o, "train.optimizer", "beta2", c.train.optimizer.beta2);
      detail::read_field(o, "train.optimizer", "epsilon", c.train.optimizer.epsilon);
    }
  }
  return c;
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open config " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::FormatError, path + ": " + e.what());
  }
  return from_json(j);
}

}  // namespace upl::tools

#endif  // UPL_TOOLS_CONFIG_JSON_HPP
