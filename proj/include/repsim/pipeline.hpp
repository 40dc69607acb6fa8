#pragma once

// Content-addressed cache for datasets and trained models. Each artifact is
// keyed by a SHA-256 fingerprint of everything that determines it, so
// reruns reuse identical results and config changes never pick up stale files.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <sstream>
#include <string>

#include <json.hpp>

#include "repsim/data.hpp"
#include "repsim/distill.hpp"
#include "repsim/fsutil.hpp"
#include "repsim/model_io.hpp"

namespace repsim {

inline nlohmann::json synth_config_json(const SynthConfig& c) {
  return {{"n_train", c.n_train},     {"n_val", c.n_val},       {"n_test", c.n_test},
          {"k", c.k},                 {"rays", c.rays},         {"period", c.period},
          {"rho_min", c.rho_min},     {"rho_max", c.rho_max},   {"noise_fraction", c.noise_fraction},
          {"seed", c.seed}};
}

inline std::string fingerprint(const nlohmann::json& j) { return sha256_hex(j.dump()).substr(0, 16); }

/// REPSIM_CACHE if set, otherwise `fallback`.
inline fs::path cache_dir(const fs::path& fallback) {
  if (const char* env = std::getenv("REPSIM_CACHE"); env != nullptr && *env != '\0') {
    return fs::path(env);
  }
  return fallback;
}

struct CachedModel {
  Model model;
  std::string key;
  fs::path path;
  bool reused = false;
};

inline std::pair<Dataset, std::string> ensure_synth(const fs::path& dir, const SynthConfig& cfg) {
  const std::string key = "synth-" + fingerprint(synth_config_json(cfg));
  const fs::path path = dir / (key + ".bin");
  if (fs::exists(path)) {
    return {load_dataset(path.string()), key};
  }
  Dataset ds = gen_synth(cfg);
  atomic_write(path, [&](std::ostream& os) { write_dataset(os, ds); });
  return {std::move(ds), key};
}

namespace detail {

inline std::optional<CachedModel> try_load_cached(const fs::path& path, const std::string& key) {
  if (!fs::exists(path)) return std::nullopt;
  Checkpoint ck = load_checkpoint(path.string());
  if (ck.training_meta.value("cache_key", std::string()) != key) return std::nullopt;
  return CachedModel{std::move(ck.model), key, path, true};
}

inline CachedModel store_trained(const fs::path& dir, const std::string& key, TrainResult res,
                                 std::uint64_t seed) {
  const fs::path path = dir / (key + ".json");
  res.meta["cache_key"] = key;
  atomic_write(dir / (key + ".log.csv"),
               [&](std::ostream& os) { write_training_log_csv(os, res.log); });
  Checkpoint ck{res.model, seed, res.meta};
  atomic_write_string(path, checkpoint_to_string(ck));
  return CachedModel{std::move(res.model), key, path, false};
}

}  // namespace detail

inline CachedModel ensure_teacher(const fs::path& dir, const Dataset& data,
                                  const std::string& data_key, const TrainConfig& cfg) {
  const std::string key =
      "teacher-" + fingerprint({{"data", data_key}, {"train", cfg.to_json()}});
  if (auto hit = detail::try_load_cached(dir / (key + ".json"), key)) return std::move(*hit);
  auto res = train_teacher(data, cfg);
  res.meta["data_key"] = data_key;
  return detail::store_trained(dir, key, std::move(res), cfg.seed);
}

inline CachedModel ensure_student(const fs::path& dir, const CachedModel& teacher,
                                  const Dataset& data, const std::string& data_key,
                                  const TrainConfig& cfg) {
  const std::string key = "student-" + fingerprint({{"data", data_key},
                                                    {"teacher", teacher.key},
                                                    {"train", cfg.to_json()}});
  if (auto hit = detail::try_load_cached(dir / (key + ".json"), key)) return std::move(*hit);
  auto res = distill_student(teacher.model, data, cfg);
  res.meta["data_key"] = data_key;
  res.meta["teacher_key"] = teacher.key;
  return detail::store_trained(dir, key, std::move(res), cfg.seed);
}

/// Desk-scale Synth protocol: 2x512 ReLU MLP with m = 2, teachers trained for
/// 1500 epochs, students for 250, lr 1e-3 decayed by 0.995 per epoch, batch 512.
struct SynthGrid {
  SynthConfig data;
  TrainConfig teacher;
  TrainConfig student;
  std::vector<std::uint64_t> teacher_seeds{1, 2, 3};
  std::vector<std::uint64_t> student_seeds{101, 102, 103};
};

inline SynthGrid synth_reference_grid() {
  SynthGrid g;
  g.data.seed = 7;
  g.teacher.epochs = 1500;
  g.teacher.loss_kind = LossKind::cross_entropy;
  g.teacher.log_every = 10;
  g.student = g.teacher;
  g.student.epochs = 250;
  g.student.log_every = 5;
  return g;
}

}  // namespace repsim
