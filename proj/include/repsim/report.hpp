#pragma once

// Per-pair metric reports and inverse-variance aggregation over seed grids.

#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "repsim/cca.hpp"
#include "repsim/metrics.hpp"
#include "repsim/model.hpp"
#include "repsim/probe.hpp"
#include "repsim/subsets.hpp"

namespace repsim {

struct MetricReport {
  std::uint64_t teacher_seed = 0;
  std::uint64_t student_seed = 0;
  std::string loss_kind;
  double acc_y = 0.0;
  std::optional<double> acc_c;
  double d_kl = 0.0;
  double d_logit = 0.0;
  double d_logit_sq = 0.0;
  double l1_logit = 0.0;
  std::optional<double> d_rep;
  std::optional<double> mcca_f;
  std::optional<double> mcca_g;
  std::optional<double> sigma_min;
  std::optional<double> sigma_max;
  std::string subset_mode;
  std::string mcca_basis = "covariance";
};

inline constexpr const char* kMetricCsvHeader =
    "teacher_seed,student_seed,loss_kind,acc_y,acc_c,d_kl,d_logit,l1_logit,d_rep,mcca_f,mcca_g,"
    "sigma_min,sigma_max,subset_mode";

namespace detail {

inline nlohmann::json opt_json(const std::optional<double>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

inline std::optional<double> opt_from(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<double>();
}

inline std::string csv_number(double v) {
  nlohmann::json j = v;
  return j.dump();
}

inline std::string csv_opt(const std::optional<double>& v) { return v ? csv_number(*v) : ""; }

}  // namespace detail

inline nlohmann::json to_json(const MetricReport& r) {
  return {{"teacher_seed", r.teacher_seed},
          {"student_seed", r.student_seed},
          {"loss_kind", r.loss_kind},
          {"acc_y", r.acc_y},
          {"acc_c", detail::opt_json(r.acc_c)},
          {"d_kl", r.d_kl},
          {"d_logit", r.d_logit},
          {"d_logit_sq", r.d_logit_sq},
          {"l1_logit", r.l1_logit},
          {"d_rep", detail::opt_json(r.d_rep)},
          {"mcca_f", detail::opt_json(r.mcca_f)},
          {"mcca_g", detail::opt_json(r.mcca_g)},
          {"sigma_min", detail::opt_json(r.sigma_min)},
          {"sigma_max", detail::opt_json(r.sigma_max)},
          {"subset_mode", r.subset_mode},
          {"mcca_basis", r.mcca_basis}};
}

inline MetricReport metric_report_from_json(const nlohmann::json& j) {
  MetricReport r;
  r.teacher_seed = j.at("teacher_seed").get<std::uint64_t>();
  r.student_seed = j.at("student_seed").get<std::uint64_t>();
  r.loss_kind = j.at("loss_kind").get<std::string>();
  r.acc_y = j.at("acc_y").get<double>();
  r.acc_c = detail::opt_from(j, "acc_c");
  r.d_kl = j.at("d_kl").get<double>();
  r.d_logit = j.at("d_logit").get<double>();
  r.d_logit_sq = j.value("d_logit_sq", r.d_logit * r.d_logit);
  r.l1_logit = j.at("l1_logit").get<double>();
  r.d_rep = detail::opt_from(j, "d_rep");
  r.mcca_f = detail::opt_from(j, "mcca_f");
  r.mcca_g = detail::opt_from(j, "mcca_g");
  r.sigma_min = detail::opt_from(j, "sigma_min");
  r.sigma_max = detail::opt_from(j, "sigma_max");
  r.subset_mode = j.value("subset_mode", std::string());
  r.mcca_basis = j.value("mcca_basis", std::string("covariance"));
  return r;
}

inline std::string to_csv_row(const MetricReport& r) {
  std::string s = std::to_string(r.teacher_seed) + "," + std::to_string(r.student_seed) + "," +
                  r.loss_kind + "," + detail::csv_number(r.acc_y) + "," + detail::csv_opt(r.acc_c) +
                  "," + detail::csv_number(r.d_kl) + "," + detail::csv_number(r.d_logit) + "," +
                  detail::csv_number(r.l1_logit) + "," + detail::csv_opt(r.d_rep) + "," +
                  detail::csv_opt(r.mcca_f) + "," + detail::csv_opt(r.mcca_g) + "," +
                  detail::csv_opt(r.sigma_min) + "," + detail::csv_opt(r.sigma_max) + "," +
                  r.subset_mode;
  return s;
}

inline void write_metric_csv(std::ostream& os, const std::vector<MetricReport>& rows) {
  os << kMetricCsvHeader << '\n';
  for (const auto& r : rows) os << to_csv_row(r) << '\n';
}

/// Fraction of rows where the model's argmax matches `labels`.
inline double label_accuracy(const Model& model, const Matrix& x, const std::vector<int>& labels) {
  if (static_cast<std::size_t>(x.rows()) != labels.size() || labels.empty()) {
    throw ContractViolation("label_accuracy: rows and labels differ");
  }
  const Matrix u = logits(model, x);
  std::size_t hit = 0;
  for (Eigen::Index i = 0; i < u.rows(); ++i) {
    if (argmax_row(u, i) == labels[static_cast<std::size_t>(i)]) ++hit;
  }
  return static_cast<double>(hit) / static_cast<double>(labels.size());
}

struct EvaluationOptions {
  SubsetPlan plan;
  CcaBasis basis = CcaBasis::covariance;
  const LinearProbe* teacher_probe = nullptr;  ///< with concept weights; enables acc_c
  const Concept* concept_labels = nullptr;
};

/// Every metric between teacher (a) and student (b) on one batch. Metrics
/// needing equal representation dims are left empty otherwise.
inline MetricReport evaluate_pair(const Model& teacher, const Model& student, const Matrix& x,
                                  const std::vector<int>& labels, const EvaluationOptions& opt = {}) {
  MetricReport r;
  r.acc_y = label_accuracy(student, x, labels);
  r.d_kl = d_kl(teacher, student, x);
  r.d_logit_sq = d_logit_sq(teacher, student, x);
  r.d_logit = std::sqrt(r.d_logit_sq);
  r.l1_logit = l1_logit_loss(teacher, student, x);
  r.mcca_basis = to_string(opt.basis);
  if (teacher.rep_dim() == student.rep_dim()) {
    const DRepResult dr = d_rep(teacher, student, x, opt.plan);
    r.d_rep = dr.value;
    r.sigma_min = dr.sigma_min;
    r.sigma_max = dr.sigma_max;
    r.subset_mode = dr.subset_mode;
    r.mcca_g = mcca_unembeddings(teacher.g(), student.g()).mean;
  }
  r.mcca_f = mcca_embeddings(teacher.embed(x), student.embed(x), opt.basis).mean;
  if (opt.teacher_probe != nullptr && opt.concept_labels != nullptr &&
      teacher.rep_dim() == student.rep_dim()) {
    const LinearProbe moved = transfer_probe(*opt.teacher_probe, student.g());
    r.acc_c = concept_accuracy(moved, student.embed(x), *opt.concept_labels);
  }
  return r;
}

/// Zero-variance runs get this weight.
inline constexpr double kMaxInverseVariance = 1e12;

struct Aggregate {
  double mean = 0.0;
  double std = 0.0;
  std::size_t runs = 0;
  bool capped = false;  ///< some run had zero variance
};

/// mean = sum w_i mu_i / sum w_i, w_i = 1 / sigma_i^2, std = 1 / sqrt(sum w_i).
inline Aggregate inverse_variance(const std::vector<std::pair<double, double>>& runs) {
  if (runs.empty()) throw ContractViolation("inverse_variance: no runs");
  if (runs.size() == 1) return {runs[0].first, runs[0].second, 1, false};
  Aggregate a;
  a.runs = runs.size();
  double sw = 0.0, swm = 0.0;
  for (const auto& [mu, sigma] : runs) {
    if (!std::isfinite(mu) || !(sigma >= 0.0)) {
      throw ContractViolation("inverse_variance: invalid run (mean or std)");
    }
    double w = kMaxInverseVariance;
    if (sigma * sigma > 1.0 / kMaxInverseVariance) {
      w = 1.0 / (sigma * sigma);
    } else {
      a.capped = true;
    }
    sw += w;
    swm += w * mu;
  }
  a.mean = swm / sw;
  a.std = 1.0 / std::sqrt(sw);
  return a;
}

/// Sample mean and (population) standard deviation.
inline std::pair<double, double> mean_std(const std::vector<double>& v) {
  if (v.empty()) throw ContractViolation("mean_std: empty input");
  double m = 0.0;
  for (double x : v) m += x;
  m /= static_cast<double>(v.size());
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return {m, std::sqrt(s / static_cast<double>(v.size()))};
}

inline const std::vector<std::string>& aggregated_metrics() {
  static const std::vector<std::string> names = {"acc_y",  "acc_c",  "d_kl",  "d_logit",
                                                 "l1_logit", "d_rep", "mcca_f", "mcca_g"};
  return names;
}

/// Groups reports by loss kind; for each metric, takes mean/std over student
/// seeds per teacher, then combines teachers by inverse-variance weighting.
inline nlohmann::json aggregate_reports(const std::vector<MetricReport>& reports) {
  std::map<std::string, std::map<std::uint64_t, std::vector<nlohmann::json>>> grouped;
  for (const auto& r : reports) grouped[r.loss_kind][r.teacher_seed].push_back(to_json(r));
  nlohmann::json out = nlohmann::json::object();
  for (const auto& [kind, by_teacher] : grouped) {
    nlohmann::json metrics = nlohmann::json::object();
    for (const auto& name : aggregated_metrics()) {
      std::vector<std::pair<double, double>> runs;
      for (const auto& [seed, rows] : by_teacher) {
        std::vector<double> vals;
        for (const auto& j : rows) {
          if (j.contains(name) && !j.at(name).is_null()) vals.push_back(j.at(name).get<double>());
        }
        if (!vals.empty()) runs.push_back(mean_std(vals));
      }
      if (runs.empty()) continue;
      const Aggregate a = inverse_variance(runs);
      metrics[name] = {{"mean", a.mean}, {"std", a.std}, {"teachers", a.runs},
                       {"zero_variance_capped", a.capped}};
    }
    std::size_t count = 0;
    for (const auto& [seed, rows] : by_teacher) count += rows.size();
    out[kind] = {{"runs", count}, {"metrics", std::move(metrics)}};
  }
  return out;
}

}  // namespace repsim
