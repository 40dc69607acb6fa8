#pragma once

// Versioned JSON checkpoints. Doubles are written in shortest round-trip form,
// so save -> load reproduces every parameter bit for bit.

#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "repsim/errors.hpp"
#include "repsim/model.hpp"

namespace repsim {

inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  Model model;
  std::uint64_t rng_seed = 0;
  nlohmann::json training_meta = nlohmann::json::object();
};

namespace detail {

inline nlohmann::json matrix_to_json(const Matrix& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline Matrix matrix_from_json(const nlohmann::json& j, const char* what) {
  if (!j.is_array() || j.empty()) throw FormatError(std::string(what) + ": expected nested array");
  const std::size_t rows = j.size();
  const std::size_t cols = j.at(0).size();
  Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (std::size_t i = 0; i < rows; ++i) {
    if (!j[i].is_array() || j[i].size() != cols) {
      throw FormatError(std::string(what) + ": ragged rows");
    }
    for (std::size_t c = 0; c < cols; ++c) {
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = j[i][c].get<double>();
    }
  }
  return m;
}

inline nlohmann::json vector_to_json(const Vector& v) {
  nlohmann::json a = nlohmann::json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

inline Vector vector_from_json(const nlohmann::json& j, const char* what) {
  if (!j.is_array()) throw FormatError(std::string(what) + ": expected array");
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
  return v;
}

}  // namespace detail

inline nlohmann::json checkpoint_to_json(const Checkpoint& ck) {
  const Model& m = ck.model;
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : m.f().layers()) {
    layers.push_back({{"weight", detail::matrix_to_json(l.weight)},
                      {"bias", detail::vector_to_json(l.bias)}});
  }
  return {
      {"version", kCheckpointVersion},
      {"input_dim", m.input_dim()},
      {"rep_dim", m.rep_dim()},
      {"label_count", m.label_count()},
      {"layers", std::move(layers)},
      {"unembeddings", detail::matrix_to_json(m.g().matrix())},
      {"rng_seed", ck.rng_seed},
      {"training_meta", ck.training_meta},
  };
}

inline Checkpoint checkpoint_from_json(const nlohmann::json& j) {
  try {
    const int version = j.at("version").get<int>();
    if (version != kCheckpointVersion) {
      throw FormatError("checkpoint version " + std::to_string(version) + " not supported");
    }
    std::vector<DenseLayer> layers;
    for (const auto& l : j.at("layers")) {
      layers.push_back(DenseLayer{detail::matrix_from_json(l.at("weight"), "layer weight"),
                                  detail::vector_from_json(l.at("bias"), "layer bias")});
    }
    EmbeddingNet f(std::move(layers));
    Unembeddings g(detail::matrix_from_json(j.at("unembeddings"), "unembeddings"));
    Model model(std::move(f), std::move(g));
    if (model.input_dim() != j.at("input_dim").get<std::size_t>() ||
        model.rep_dim() != j.at("rep_dim").get<std::size_t>() ||
        model.label_count() != j.at("label_count").get<std::size_t>()) {
      throw FormatError("checkpoint dimensions disagree with stored parameters");
    }
    return Checkpoint{std::move(model), j.at("rng_seed").get<std::uint64_t>(),
                      j.value("training_meta", nlohmann::json::object())};
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed checkpoint: ") + e.what());
  } catch (const ContractViolation& e) {
    throw FormatError(std::string("invalid checkpoint parameters: ") + e.what());
  }
}

inline std::string checkpoint_to_string(const Checkpoint& ck) {
  return checkpoint_to_json(ck).dump(1) + "\n";
}

inline void save_checkpoint(const Checkpoint& ck, const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw FormatError("cannot open " + path + " for writing");
  os << checkpoint_to_string(ck);
  if (!os) throw FormatError("write failed for " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open " + path);
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("cannot parse checkpoint " + path + ": " + e.what());
  }
  return checkpoint_from_json(j);
}

}  // namespace repsim
