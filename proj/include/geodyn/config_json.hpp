#pragma once

// JSON (de)serialization of the configuration structs. Reading is a merge:
// keys present in the object override the current values, others are kept.

#include <string>

#include <json.hpp>

#include "geodyn/errors.hpp"
#include "geodyn/model.hpp"
#include "geodyn/training.hpp"

namespace geodyn {

inline constexpr const char* kVersion = "0.1.0";

namespace detail {

template <class T>
void merge_key(const nlohmann::json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ParameterError(std::string("config: bad value for '") + key + "': " + e.what());
  }
}

}  // namespace detail

inline nlohmann::json to_json(const ModelConfig& c) {
  return {{"dim", c.dim},
          {"classes", c.classes},
          {"layers", c.layers},
          {"tau", c.tau},
          {"step", c.step},
          {"eps", c.eps},
          {"rho", c.rho},
          {"kernel", c.kernel},
          {"attention_pad", c.attention_pad},
          {"attention", c.attention},
          {"wfm_tol", c.wfm_tol},
          {"wfm_max_iter", c.wfm_max_iter},
          {"init_scale", c.init_scale}};
}

inline void merge_json(const nlohmann::json& j, ModelConfig& c) {
  detail::merge_key(j, "dim", c.dim);
  detail::merge_key(j, "classes", c.classes);
  detail::merge_key(j, "layers", c.layers);
  detail::merge_key(j, "tau", c.tau);
  detail::merge_key(j, "step", c.step);
  detail::merge_key(j, "eps", c.eps);
  detail::merge_key(j, "rho", c.rho);
  detail::merge_key(j, "kernel", c.kernel);
  detail::merge_key(j, "attention_pad", c.attention_pad);
  detail::merge_key(j, "attention", c.attention);
  detail::merge_key(j, "wfm_tol", c.wfm_tol);
  detail::merge_key(j, "wfm_max_iter", c.wfm_max_iter);
  detail::merge_key(j, "init_scale", c.init_scale);
}

inline nlohmann::json to_json(const TrainConfig& c) {
  return {{"lr", c.lr},
          {"weight_decay", c.weight_decay},
          {"batch_size", c.batch_size},
          {"epochs", c.epochs},
          {"optimizer", to_string(c.optimizer)},
          {"seed", c.seed},
          {"folds", c.folds},
          {"threads", c.threads}};
}

inline void merge_json(const nlohmann::json& j, TrainConfig& c) {
  detail::merge_key(j, "lr", c.lr);
  detail::merge_key(j, "weight_decay", c.weight_decay);
  detail::merge_key(j, "batch_size", c.batch_size);
  detail::merge_key(j, "epochs", c.epochs);
  if (j.contains("optimizer")) {
    std::string s;
    detail::merge_key(j, "optimizer", s);
    c.optimizer = parse_optimizer(s);
  }
  detail::merge_key(j, "seed", c.seed);
  detail::merge_key(j, "folds", c.folds);
  detail::merge_key(j, "threads", c.threads);
}

}  // namespace geodyn
