#pragma once

// Noisy multi-ray spiral classification data, splits, and the on-disk format.

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numbers>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "repsim/concept.hpp"
#include "repsim/errors.hpp"
#include "repsim/numerics.hpp"

namespace repsim {

enum class Split : std::uint8_t { train = 0, val = 1, test = 2 };

inline std::string to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "?";
}

struct Batch {
  Matrix x;
  std::vector<int> y;
  std::optional<Concept> concepts;
  std::vector<std::size_t> index;  ///< rows of the parent dataset
};

struct Dataset {
  Matrix x;                      ///< n x d
  std::vector<int> y;            ///< labels in [0, k)
  std::size_t k = 0;
  std::optional<std::vector<int>> concept_ids;
  std::size_t concept_values = 0;
  std::vector<Split> split;
  std::uint64_t seed = 0;
  nlohmann::json meta = nlohmann::json::object();

  std::size_t size() const { return y.size(); }
  std::size_t dim() const { return static_cast<std::size_t>(x.cols()); }

  void validate() const {
    const auto n = static_cast<std::size_t>(x.rows());
    if (y.size() != n || split.size() != n || (concept_ids && concept_ids->size() != n)) {
      throw ContractViolation("Dataset: column lengths disagree");
    }
    for (int v : y) {
      if (v < 0 || static_cast<std::size_t>(v) >= k) {
        throw ContractViolation("Dataset: label " + std::to_string(v) + " outside [0, k)");
      }
    }
    if (concept_ids) {
      for (int v : *concept_ids) {
        if (v < 0 || static_cast<std::size_t>(v) >= concept_values) {
          throw ContractViolation("Dataset: concept value out of range");
        }
      }
    }
    require_finite(x, "Dataset x");
  }

  Batch rows(const std::vector<std::size_t>& idx) const {
    Batch b;
    b.index = idx;
    b.x.resize(static_cast<Eigen::Index>(idx.size()), x.cols());
    b.y.reserve(idx.size());
    for (std::size_t r = 0; r < idx.size(); ++r) {
      b.x.row(static_cast<Eigen::Index>(r)) = x.row(static_cast<Eigen::Index>(idx[r]));
      b.y.push_back(y[idx[r]]);
    }
    if (concept_ids) {
      std::vector<int> c;
      c.reserve(idx.size());
      for (auto i : idx) c.push_back((*concept_ids)[i]);
      b.concepts = Concept::hard(std::move(c), concept_values);
    }
    return b;
  }

  Batch part(Split s) const {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < split.size(); ++i) {
      if (split[i] == s) idx.push_back(i);
    }
    return rows(idx);
  }

  /// First n rows of a split (all of it when n is 0 or exceeds the split).
  Batch part(Split s, std::size_t n) const {
    Batch b = part(s);
    if (n == 0 || n >= b.y.size()) {
      return b;
    }
    std::vector<std::size_t> keep(b.index.begin(), b.index.begin() + static_cast<long>(n));
    return rows(keep);
  }
};

struct SynthConfig {
  std::size_t n_train = 14000;
  std::size_t n_val = 7000;
  std::size_t n_test = 7000;
  std::size_t k = 7;
  std::size_t rays = 4;
  double period = 4.0;
  double rho_min = 1.0;
  double rho_max = 10.0;
  double noise_fraction = 0.2;  ///< half-width of the angular noise band, in units of the sub-ray gap
  std::uint64_t seed = 0;
};

namespace detail {

/// Within ray r, sub-ray j carries class (j * step_r + offset_r) mod k. Steps
/// coprime to k, rotating across rays, so that no class pair is adjacent on every ray.
inline std::vector<std::vector<int>> ray_layout(std::size_t k, std::size_t rays) {
  static constexpr std::array<std::size_t, 4> kSteps{1, 2, 3, 1};
  static constexpr std::array<std::size_t, 4> kOffsets{0, 3, 5, 1};
  std::vector<std::vector<int>> layout(rays, std::vector<int>(k));
  for (std::size_t r = 0; r < rays; ++r) {
    std::size_t step = kSteps[r % kSteps.size()];
    while (std::gcd(step, k) != 1) ++step;
    const std::size_t offset = kOffsets[r % kOffsets.size()] + r / kSteps.size();
    for (std::size_t j = 0; j < k; ++j) {
      layout[r][j] = static_cast<int>((j * step + offset) % k);
    }
  }
  return layout;
}

}  // namespace detail

/// 2-D points on `rays` spiral arms, each split into k angular sub-rays (one per class).
/// The concept of a point is the index of the arm it lies on.
inline Dataset gen_synth(const SynthConfig& cfg) {
  if (cfg.k < 2 || cfg.rays < 1) {
    throw ContractViolation("gen_synth: need k >= 2 and at least one ray");
  }
  if (!(cfg.rho_max > cfg.rho_min) || !(cfg.rho_min > 0.0) || !(cfg.period > 0.0)) {
    throw ContractViolation("gen_synth: invalid radius range or period");
  }
  if (!(cfg.noise_fraction >= 0.0 && cfg.noise_fraction < 0.5)) {
    throw ContractViolation("gen_synth: noise_fraction must lie in [0, 0.5) to keep rays apart");
  }
  const auto layout = detail::ray_layout(cfg.k, cfg.rays);
  const std::size_t sub_rays = cfg.k * cfg.rays;
  const double two_pi = 2.0 * std::numbers::pi;
  const double gap = two_pi / static_cast<double>(sub_rays);
  const double sigma = cfg.noise_fraction * gap;
  const std::size_t n = cfg.n_train + cfg.n_val + cfg.n_test;

  Dataset ds;
  ds.k = cfg.k;
  ds.seed = cfg.seed;
  ds.x.resize(static_cast<Eigen::Index>(n), 2);
  ds.y.resize(n);
  ds.split.resize(n);
  ds.concept_ids = std::vector<int>(n);
  ds.concept_values = cfg.rays;

  std::mt19937_64 rng(mix_seed(cfg.seed, 0x5eed));
  std::uniform_int_distribution<std::size_t> pick_sub(0, sub_rays - 1);
  std::uniform_real_distribution<double> pick_rho(cfg.rho_min, cfg.rho_max);
  std::uniform_real_distribution<double> pick_eps(-sigma, sigma);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t s = pick_sub(rng);
    const std::size_t r = s / cfg.k;
    const std::size_t j = s % cfg.k;
    const double rho = pick_rho(rng);
    const double eps = pick_eps(rng);
    const double theta0 = gap * static_cast<double>(s);
    const double theta = theta0 + two_pi / cfg.period * rho / cfg.rho_max + eps;
    const auto row = static_cast<Eigen::Index>(i);
    ds.x(row, 0) = rho * std::cos(theta);
    ds.x(row, 1) = rho * std::sin(theta);
    ds.y[i] = layout[r][j];
    (*ds.concept_ids)[i] = static_cast<int>(r);
    ds.split[i] = i < cfg.n_train ? Split::train
                  : i < cfg.n_train + cfg.n_val ? Split::val
                                                : Split::test;
  }
  ds.meta = {
      {"generator", "synth-spiral"},
      {"n_train", cfg.n_train},
      {"n_val", cfg.n_val},
      {"n_test", cfg.n_test},
      {"rays", cfg.rays},
      {"period", cfg.period},
      {"rho_min", cfg.rho_min},
      {"rho_max", cfg.rho_max},
      {"noise_fraction", cfg.noise_fraction},
      {"noise_halfwidth_rad", sigma},
      {"layout", layout},
  };
  return ds;
}

inline constexpr std::uint32_t kDatasetFormatVersion = 1;
inline constexpr std::array<char, 8> kDatasetMagic{'R', 'S', 'I', 'M', 'D', 'A', 'T', 'A'};

namespace detail {

inline void require_little_endian() {
  if constexpr (std::endian::native != std::endian::little) {
    throw FormatError("binary formats require a little-endian host");
  }
}

template <class T>
void write_raw(std::ostream& os, const T* data, std::size_t count) {
  os.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(sizeof(T) * count));
}

template <class T>
void read_raw(std::istream& is, T* data, std::size_t count, const std::string& what) {
  is.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(sizeof(T) * count));
  if (static_cast<std::size_t>(is.gcount()) != sizeof(T) * count) {
    throw FormatError("dataset truncated while reading " + what);
  }
}

}  // namespace detail

/// Layout: 8-byte magic, uint32 header length, JSON header, then columns
/// x (row-major float64), y (int32), split (uint8), concept (int32, optional).
inline void write_dataset(std::ostream& os, const Dataset& ds) {
  detail::require_little_endian();
  ds.validate();
  const nlohmann::json header = {
      {"version", kDatasetFormatVersion},
      {"n", ds.size()},
      {"d", ds.dim()},
      {"k", ds.k},
      {"seed", ds.seed},
      {"has_concept", ds.concept_ids.has_value()},
      {"concept_values", ds.concept_values},
      {"meta", ds.meta},
  };
  const std::string h = header.dump();
  const auto hlen = static_cast<std::uint32_t>(h.size());
  os.write(kDatasetMagic.data(), kDatasetMagic.size());
  detail::write_raw(os, &hlen, 1);
  os.write(h.data(), static_cast<std::streamsize>(h.size()));
  const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> xr = ds.x;
  detail::write_raw(os, xr.data(), static_cast<std::size_t>(xr.size()));
  std::vector<std::int32_t> y(ds.y.begin(), ds.y.end());
  detail::write_raw(os, y.data(), y.size());
  std::vector<std::uint8_t> sp(ds.split.size());
  for (std::size_t i = 0; i < sp.size(); ++i) sp[i] = static_cast<std::uint8_t>(ds.split[i]);
  detail::write_raw(os, sp.data(), sp.size());
  if (ds.concept_ids) {
    std::vector<std::int32_t> c(ds.concept_ids->begin(), ds.concept_ids->end());
    detail::write_raw(os, c.data(), c.size());
  }
}

inline Dataset read_dataset(std::istream& is) {
  detail::require_little_endian();
  std::array<char, 8> magic{};
  is.read(magic.data(), magic.size());
  if (is.gcount() != static_cast<std::streamsize>(magic.size()) || magic != kDatasetMagic) {
    throw FormatError("not a dataset file (bad magic)");
  }
  std::uint32_t hlen = 0;
  detail::read_raw(is, &hlen, 1, "header length");
  if (hlen == 0 || hlen > (1u << 24)) {
    throw FormatError("implausible dataset header length " + std::to_string(hlen));
  }
  std::string h(hlen, '\0');
  detail::read_raw(is, h.data(), hlen, "header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(h);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("corrupted dataset header: ") + e.what());
  }
  Dataset ds;
  std::size_t n = 0;
  std::size_t d = 0;
  bool has_concept = false;
  try {
    const auto version = header.at("version").get<std::uint32_t>();
    if (version != kDatasetFormatVersion) {
      throw FormatError("dataset format version " + std::to_string(version) +
                        " is not supported (expected " + std::to_string(kDatasetFormatVersion) +
                        ")");
    }
    n = header.at("n").get<std::size_t>();
    d = header.at("d").get<std::size_t>();
    ds.k = header.at("k").get<std::size_t>();
    ds.seed = header.at("seed").get<std::uint64_t>();
    has_concept = header.at("has_concept").get<bool>();
    ds.concept_values = header.at("concept_values").get<std::size_t>();
    ds.meta = header.at("meta");
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("dataset header missing fields: ") + e.what());
  }
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> xr(
      static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  detail::read_raw(is, xr.data(), n * d, "x");
  ds.x = xr;
  std::vector<std::int32_t> y(n);
  detail::read_raw(is, y.data(), n, "y");
  ds.y.assign(y.begin(), y.end());
  std::vector<std::uint8_t> sp(n);
  detail::read_raw(is, sp.data(), n, "split");
  ds.split.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (sp[i] > 2) throw FormatError("invalid split tag");
    ds.split[i] = static_cast<Split>(sp[i]);
  }
  if (has_concept) {
    std::vector<std::int32_t> c(n);
    detail::read_raw(is, c.data(), n, "concept");
    ds.concept_ids = std::vector<int>(c.begin(), c.end());
  }
  if (is.peek() != std::char_traits<char>::eof()) {
    throw FormatError("trailing bytes after dataset payload (row count mismatch?)");
  }
  try {
    ds.validate();
  } catch (const ContractViolation& e) {
    throw FormatError(std::string("dataset payload inconsistent: ") + e.what());
  }
  return ds;
}

inline void save_dataset(const Dataset& ds, const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw FormatError("cannot open " + path + " for writing");
  write_dataset(os, ds);
  if (!os) throw FormatError("write failed for " + path);
}

inline Dataset load_dataset(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open " + path);
  return read_dataset(is);
}

/// One row per sample: x1..xd, y, split, concept.
inline void write_dataset_csv(std::ostream& os, const Dataset& ds) {
  for (std::size_t j = 0; j < ds.dim(); ++j) os << "x" << (j + 1) << ",";
  os << "y,split" << (ds.concept_ids ? ",concept" : "") << "\n";
  os.precision(17);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    for (std::size_t j = 0; j < ds.dim(); ++j) {
      os << ds.x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) << ",";
    }
    os << ds.y[i] << "," << to_string(ds.split[i]);
    if (ds.concept_ids) os << "," << (*ds.concept_ids)[i];
    os << "\n";
  }
}

}  // namespace repsim
