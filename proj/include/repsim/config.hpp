#pragma once

// Strict JSON readers for the command-line configs. Unknown keys are errors.

#include <set>
#include <string>

#include <json.hpp>

#include "repsim/bounds.hpp"
#include "repsim/data.hpp"
#include "repsim/distill.hpp"
#include "repsim/errors.hpp"
#include "repsim/probe.hpp"

namespace repsim {

namespace detail {

inline void reject_unknown(const nlohmann::json& j, const std::set<std::string>& allowed,
                           const std::string& what) {
  if (!j.is_object()) throw ContractViolation(what + ": config must be a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!allowed.count(it.key())) {
      throw ContractViolation(what + ": unknown key '" + it.key() + "'");
    }
  }
}

template <class T>
void read_into(const nlohmann::json& j, const char* key, T& out, const std::string& what) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ContractViolation(what + ": key '" + key + "' has the wrong type");
  }
}

}  // namespace detail

inline SynthConfig synth_config_from_json(const nlohmann::json& j) {
  const std::string w = "synth config";
  detail::reject_unknown(j,
                         {"n_train", "n_val", "n_test", "k", "rays", "period", "rho_min",
                          "rho_max", "noise_fraction", "seed"},
                         w);
  SynthConfig c;
  detail::read_into(j, "n_train", c.n_train, w);
  detail::read_into(j, "n_val", c.n_val, w);
  detail::read_into(j, "n_test", c.n_test, w);
  detail::read_into(j, "k", c.k, w);
  detail::read_into(j, "rays", c.rays, w);
  detail::read_into(j, "period", c.period, w);
  detail::read_into(j, "rho_min", c.rho_min, w);
  detail::read_into(j, "rho_max", c.rho_max, w);
  detail::read_into(j, "noise_fraction", c.noise_fraction, w);
  detail::read_into(j, "seed", c.seed, w);
  return c;
}

/// Accepts the keys written by TrainConfig::to_json. A stored "engine" must
/// match the running engine version.
inline TrainConfig train_config_from_json(const nlohmann::json& j) {
  const std::string w = "train config";
  detail::reject_unknown(j,
                         {"engine", "epochs", "lr", "lr_decay_gamma", "batch_size", "seed",
                          "loss_kind", "optimizer", "adam_beta1", "adam_beta2", "adam_eps",
                          "label_ce_weight", "hidden", "rep_dim", "log_every"},
                         w);
  if (j.contains("engine") && j.at("engine") != kTrainingEngineVersion) {
    throw ContractViolation(w + ": engine version mismatch");
  }
  TrainConfig c;
  detail::read_into(j, "epochs", c.epochs, w);
  detail::read_into(j, "lr", c.lr, w);
  detail::read_into(j, "lr_decay_gamma", c.lr_decay_gamma, w);
  detail::read_into(j, "batch_size", c.batch_size, w);
  detail::read_into(j, "seed", c.seed, w);
  std::string s;
  if (j.contains("loss_kind")) {
    detail::read_into(j, "loss_kind", s, w);
    c.loss_kind = parse_loss_kind(s);
  }
  if (j.contains("optimizer")) {
    detail::read_into(j, "optimizer", s, w);
    c.optimizer = parse_optimizer(s);
  }
  detail::read_into(j, "adam_beta1", c.adam_beta1, w);
  detail::read_into(j, "adam_beta2", c.adam_beta2, w);
  detail::read_into(j, "adam_eps", c.adam_eps, w);
  detail::read_into(j, "label_ce_weight", c.label_ce_weight, w);
  detail::read_into(j, "hidden", c.hidden, w);
  detail::read_into(j, "rep_dim", c.rep_dim, w);
  detail::read_into(j, "log_every", c.log_every, w);
  c.validate();
  return c;
}

inline BoundSuiteConfig bound_suite_config_from_json(const nlohmann::json& j) {
  const std::string w = "bound suite config";
  detail::reject_unknown(j, {"trials", "k", "m", "n", "seed", "tau_floor", "include_pca"}, w);
  BoundSuiteConfig c;
  detail::read_into(j, "trials", c.trials, w);
  detail::read_into(j, "k", c.k, w);
  detail::read_into(j, "m", c.m, w);
  detail::read_into(j, "n", c.n, w);
  detail::read_into(j, "seed", c.seed, w);
  detail::read_into(j, "tau_floor", c.tau_floor, w);
  detail::read_into(j, "include_pca", c.include_pca, w);
  return c;
}

inline ProbeConfig probe_config_from_json(const nlohmann::json& j) {
  const std::string w = "probe config";
  detail::reject_unknown(j, {"epochs", "lr", "l2", "seed"}, w);
  ProbeConfig c;
  detail::read_into(j, "epochs", c.epochs, w);
  detail::read_into(j, "lr", c.lr, w);
  detail::read_into(j, "l2", c.l2, w);
  detail::read_into(j, "seed", c.seed, w);
  return c;
}

inline nlohmann::json to_json(const ProbeConfig& c) {
  return {{"epochs", c.epochs}, {"lr", c.lr}, {"l2", c.l2}, {"seed", c.seed}};
}

}  // namespace repsim
