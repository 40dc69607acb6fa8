#pragma once

// Numerical inequality certificates. Every certificate is stored as lhs <= rhs.

#include <algorithm>
#include <cmath>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "repsim/errors.hpp"

namespace repsim {

enum class BoundId {
  kl_lower,
  kl_upper_both_tau,
  kl_upper_one_tau,
  mcca_lower,
  drep_upper,
  drep_lower,
  kl_drep,
  l1_logit,
  concept_robustness,
  pca_dim,
  eigen_weighted,
  approx_identity,
};

inline constexpr BoundId kAllBoundIds[] = {
    BoundId::kl_lower,       BoundId::kl_upper_both_tau, BoundId::kl_upper_one_tau,
    BoundId::mcca_lower,     BoundId::drep_upper,        BoundId::drep_lower,
    BoundId::kl_drep,        BoundId::l1_logit,          BoundId::concept_robustness,
    BoundId::pca_dim,        BoundId::eigen_weighted,    BoundId::approx_identity,
};

inline std::string to_string(BoundId id) {
  switch (id) {
    case BoundId::kl_lower: return "KL_LOWER";
    case BoundId::kl_upper_both_tau: return "KL_UPPER_BOTH_TAU";
    case BoundId::kl_upper_one_tau: return "KL_UPPER_ONE_TAU";
    case BoundId::mcca_lower: return "MCCA_LOWER";
    case BoundId::drep_upper: return "DREP_UPPER";
    case BoundId::drep_lower: return "DREP_LOWER";
    case BoundId::kl_drep: return "KL_DREP";
    case BoundId::l1_logit: return "L1_LOGIT";
    case BoundId::concept_robustness: return "CONCEPT_ROBUSTNESS";
    case BoundId::pca_dim: return "PCA_DIM";
    case BoundId::eigen_weighted: return "EIGEN_WEIGHTED";
    case BoundId::approx_identity: return "APPROX_IDENTITY";
  }
  return "UNKNOWN";
}

inline BoundId parse_bound_id(const std::string& s) {
  for (BoundId id : kAllBoundIds) {
    if (to_string(id) == s) return id;
  }
  throw ContractViolation("unknown bound id '" + s + "'");
}

/// Relative slack tolerance used by every certificate.
inline constexpr double kCertificateTolerance = 1e-9;

struct BoundCertificate {
  BoundId id = BoundId::kl_lower;
  std::string variant;  ///< distinguishes several certificates of one id, e.g. "f" and "g"
  double lhs = 0.0;
  double rhs = 0.0;
  double slack = 0.0;
  bool passed = true;
  bool skipped = false;
  bool vacuous = false;
  std::string reason;
  nlohmann::json context = nlohmann::json::object();

  double tolerance() const {
    return kCertificateTolerance * std::max({std::abs(lhs), std::abs(rhs), 1.0});
  }
};

inline BoundCertificate make_certificate(BoundId id, double lhs, double rhs,
                                         nlohmann::json context = nlohmann::json::object(),
                                         std::string variant = {}) {
  BoundCertificate c;
  c.id = id;
  c.variant = std::move(variant);
  c.lhs = lhs;
  c.rhs = rhs;
  c.slack = rhs - lhs;
  c.context = std::move(context);
  if (!std::isfinite(lhs) || !std::isfinite(rhs)) {
    c.passed = false;
    c.reason = "non-finite side";
    return c;
  }
  c.passed = c.slack >= -c.tolerance();
  return c;
}

inline BoundCertificate skipped_certificate(BoundId id, std::string reason,
                                            nlohmann::json context = nlohmann::json::object(),
                                            std::string variant = {}) {
  BoundCertificate c;
  c.id = id;
  c.variant = std::move(variant);
  c.skipped = true;
  c.reason = std::move(reason);
  c.context = std::move(context);
  c.lhs = c.rhs = c.slack = 0.0;
  return c;
}

inline nlohmann::json to_json(const BoundCertificate& c) {
  nlohmann::json j = {{"bound_id", to_string(c.id)},
                      {"variant", c.variant},
                      {"lhs", c.lhs},
                      {"rhs", c.rhs},
                      {"slack", c.slack},
                      {"passed", c.passed},
                      {"skipped", c.skipped},
                      {"vacuous", c.vacuous},
                      {"context", c.context}};
  if (!c.reason.empty()) j["reason"] = c.reason;
  return j;
}

inline BoundCertificate certificate_from_json(const nlohmann::json& j) {
  BoundCertificate c;
  c.id = parse_bound_id(j.at("bound_id").get<std::string>());
  c.variant = j.value("variant", std::string());
  c.lhs = j.at("lhs").get<double>();
  c.rhs = j.at("rhs").get<double>();
  c.slack = j.at("slack").get<double>();
  c.passed = j.at("passed").get<bool>();
  c.skipped = j.value("skipped", false);
  c.vacuous = j.value("vacuous", false);
  c.reason = j.value("reason", std::string());
  c.context = j.value("context", nlohmann::json::object());
  return c;
}

/// One JSON object per line.
inline void write_certificates_jsonl(std::ostream& os, const std::vector<BoundCertificate>& certs) {
  for (const auto& c : certs) os << to_json(c).dump() << '\n';
}

}  // namespace repsim
