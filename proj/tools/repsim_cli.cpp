// repsim: data generation, training, distillation, metrics, bound
// certification, probing, aggregation and plot-data export.

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include <CLI11.hpp>
#include <json.hpp>

#include "repsim/bounds.hpp"
#include "repsim/config.hpp"
#include "repsim/data.hpp"
#include "repsim/distill.hpp"
#include "repsim/fsutil.hpp"
#include "repsim/model_io.hpp"
#include "repsim/pipeline.hpp"
#include "repsim/probe.hpp"
#include "repsim/report.hpp"

using nlohmann::json;
using namespace repsim;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitContract = 2;
constexpr int kExitBoundFailure = 3;

class Manifest {
 public:
  explicit Manifest(std::string command)
      : command_(std::move(command)), start_(std::chrono::steady_clock::now()) {}

  void config(json c) { config_ = std::move(c); }
  void seeds(json s) { seeds_ = std::move(s); }
  void input(const fs::path& p) {
    inputs_.push_back({{"path", p.string()}, {"sha256", sha256_file(p)}});
  }
  void output(const fs::path& p) {
    std::lock_guard<std::mutex> lock(mu_);
    outputs_.push_back({{"path", p.string()}, {"sha256", sha256_file(p)}});
  }

  void write(const fs::path& path) const {
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    json j = {{"command", command_}, {"config", config_},   {"seeds", seeds_},
              {"inputs", inputs_},   {"outputs", outputs_}, {"wall_clock_seconds", secs}};
    atomic_write_string(path, j.dump(2) + "\n");
  }

 private:
  std::string command_;
  json config_ = json::object();
  json seeds_ = json::array();
  json inputs_ = json::array();
  json outputs_ = json::array();
  std::chrono::steady_clock::time_point start_;
  std::mutex mu_;
};

json read_json_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ContractViolation("cannot open config " + path);
  try {
    return json::parse(is);
  } catch (const json::exception& e) {
    throw ContractViolation("config " + path + " is not valid JSON: " + e.what());
  }
}

json base_config(const std::string& path) {
  return path.empty() ? json::object() : read_json_file(path);
}

/// Copies `value` into `cfg[key]` when the flag was given on the command line.
template <class T>
void flag_override(json& cfg, const CLI::Option* opt, const char* key, const T& value) {
  if (opt->count() > 0) cfg[key] = value;
}

fs::path manifest_path(const std::string& explicit_path, const fs::path& primary_output) {
  if (!explicit_path.empty()) return explicit_path;
  return fs::path(primary_output.string() + ".manifest.json");
}

/// Substitutes `{seed}` in a path template; required when several seeds are given.
std::string expand_seed(const std::string& tmpl, std::uint64_t seed, bool many) {
  const auto pos = tmpl.find("{seed}");
  if (pos == std::string::npos) {
    if (many) throw ContractViolation("output path needs a {seed} placeholder for several seeds");
    return tmpl;
  }
  std::string out = tmpl;
  out.replace(pos, 6, std::to_string(seed));
  return out;
}

template <class F>
void parallel_for(std::size_t count, unsigned jobs, F&& body) {
  jobs = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(std::max<std::size_t>(count, 1))));
  if (jobs == 1) {
    for (std::size_t i = 0; i < count; ++i) body(i);
    return;
  }
  std::vector<std::thread> workers;
  std::vector<std::exception_ptr> errors(jobs);
  for (unsigned w = 0; w < jobs; ++w) {
    workers.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < count; i += jobs) body(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : workers) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

void write_model(const fs::path& path, const TrainResult& res, std::uint64_t seed,
                 const fs::path& log_path, Manifest& man) {
  atomic_write_string(path, checkpoint_to_string(Checkpoint{res.model, seed, res.meta}));
  man.output(path);
  if (!log_path.empty()) {
    atomic_write(log_path, [&](std::ostream& os) { write_training_log_csv(os, res.log); });
    man.output(log_path);
  }
}

Split parse_split(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "val") return Split::val;
  if (s == "test") return Split::test;
  throw ContractViolation("unknown split '" + s + "'");
}

SubsetPlan parse_plan(const std::string& s, std::size_t k, std::size_t m, std::uint64_t seed) {
  if (s == "auto") return SubsetPlan::automatic(k, m, seed);
  if (s == "exact") return SubsetPlan::exact();
  try {
    return SubsetPlan::sampled(std::stoul(s), seed);
  } catch (const std::logic_error&) {
    throw ContractViolation("subsets must be auto, exact or a count per pivot");
  }
}

std::string loss_kind_of(const Checkpoint& ck) {
  const json& m = ck.training_meta;
  if (m.contains("config") && m["config"].contains("loss_kind")) {
    return m["config"]["loss_kind"].get<std::string>();
  }
  return "unknown";
}

Concept require_concept(const Batch& b) {
  if (!b.concepts) throw ContractViolation("dataset carries no concept assignment");
  return *b.concepts;
}

}  // namespace

int main(int argc, char** argv) {
#if defined(__GLIBC__)
  // Large per-batch temporaries otherwise go through mmap/munmap on every step.
  mallopt(M_MMAP_THRESHOLD, 256 * 1024 * 1024);
#endif
  CLI::App app{"repsim: representation similarity under distillation"};
  app.require_subcommand(1);

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "generate the Synth dataset");
  std::string gen_config, gen_out, gen_csv, gen_manifest;
  std::uint64_t gen_seed = 0;
  gen->add_option("--config", gen_config, "JSON synth config")->check(CLI::ExistingFile);
  auto* gen_seed_opt = gen->add_option("--seed", gen_seed, "data seed");
  gen->add_option("--out", gen_out, "binary dataset path")->required();
  gen->add_option("--csv", gen_csv, "optional CSV copy");
  gen->add_option("--manifest", gen_manifest);

  // train-teacher
  auto* tt = app.add_subcommand("train-teacher", "train teachers with cross-entropy");
  std::string tt_data, tt_config, tt_out, tt_log, tt_manifest;
  std::vector<std::uint64_t> tt_seeds;
  std::size_t tt_epochs = 0;
  unsigned tt_jobs = 1;
  tt->add_option("--data", tt_data)->required()->check(CLI::ExistingFile);
  tt->add_option("--config", tt_config, "JSON train config")->check(CLI::ExistingFile);
  auto* tt_seed_opt = tt->add_option("--seed", tt_seeds, "one or more seeds");
  auto* tt_epochs_opt = tt->add_option("--epochs", tt_epochs);
  tt->add_option("--out", tt_out, "checkpoint path; use {seed} for several seeds")->required();
  tt->add_option("--log", tt_log, "training curve CSV; {seed} allowed");
  tt->add_option("--jobs", tt_jobs);
  tt->add_option("--manifest", tt_manifest);

  // distill
  auto* ds = app.add_subcommand("distill", "distill students from a teacher");
  std::string ds_data, ds_teacher, ds_config, ds_out, ds_log, ds_manifest, ds_loss;
  std::vector<std::uint64_t> ds_seeds;
  std::size_t ds_epochs = 0, ds_rep_dim = 0;
  unsigned ds_jobs = 1;
  ds->add_option("--data", ds_data)->required()->check(CLI::ExistingFile);
  ds->add_option("--teacher", ds_teacher)->required()->check(CLI::ExistingFile);
  ds->add_option("--config", ds_config)->check(CLI::ExistingFile);
  auto* ds_loss_opt = ds->add_option("--loss", ds_loss, "kl | l1 | l2");
  auto* ds_seed_opt = ds->add_option("--seed", ds_seeds);
  auto* ds_epochs_opt = ds->add_option("--epochs", ds_epochs);
  auto* ds_rep_opt = ds->add_option("--rep-dim", ds_rep_dim);
  ds->add_option("--out", ds_out)->required();
  ds->add_option("--log", ds_log);
  ds->add_option("--jobs", ds_jobs);
  ds->add_option("--manifest", ds_manifest);

  // metrics
  auto* mt = app.add_subcommand("metrics", "compare a teacher with students");
  std::string mt_data, mt_teacher, mt_out, mt_csv, mt_manifest, mt_split = "test",
                                                               mt_basis = "covariance",
                                                               mt_subsets = "auto";
  std::vector<std::string> mt_students;
  std::uint64_t mt_seed = 0;
  mt->add_option("--data", mt_data)->required()->check(CLI::ExistingFile);
  mt->add_option("--teacher", mt_teacher)->required()->check(CLI::ExistingFile);
  mt->add_option("--student", mt_students)->required()->check(CLI::ExistingFile);
  mt->add_option("--split", mt_split);
  mt->add_option("--basis", mt_basis, "covariance | moment");
  mt->add_option("--subsets", mt_subsets, "auto | exact | <per-pivot sample count>");
  mt->add_option("--subset-seed", mt_seed);
  mt->add_option("--out", mt_out, "JSON report")->required();
  mt->add_option("--csv", mt_csv);
  mt->add_option("--manifest", mt_manifest);

  // verify-bounds
  auto* vb = app.add_subcommand("verify-bounds", "certify the inequalities on random pairs");
  std::string vb_config, vb_out, vb_summary, vb_manifest;
  BoundSuiteConfig vb_cfg;
  long long vb_trial = -1;
  vb->add_option("--config", vb_config)->check(CLI::ExistingFile);
  auto* vb_trials = vb->add_option("--trials", vb_cfg.trials);
  auto* vb_k = vb->add_option("--k", vb_cfg.k);
  auto* vb_m = vb->add_option("--m", vb_cfg.m);
  auto* vb_n = vb->add_option("--n", vb_cfg.n);
  auto* vb_seed = vb->add_option("--seed", vb_cfg.seed);
  auto* vb_tau = vb->add_option("--tau-floor", vb_cfg.tau_floor);
  vb->add_option("--jobs", vb_cfg.jobs);
  vb->add_option("--trial", vb_trial, "replay a single trial index");
  vb->add_option("--out", vb_out, "certificates (JSON lines)");
  vb->add_option("--summary", vb_summary, "summary JSON");
  vb->add_option("--manifest", vb_manifest);

  // probe
  auto* pr = app.add_subcommand("probe", "fit a concept probe and transfer it to students");
  std::string pr_data, pr_teacher, pr_config, pr_out, pr_manifest, pr_split = "test";
  std::vector<std::string> pr_students;
  ProbeConfig pr_cfg;
  pr->add_option("--data", pr_data)->required()->check(CLI::ExistingFile);
  pr->add_option("--teacher", pr_teacher)->required()->check(CLI::ExistingFile);
  pr->add_option("--student", pr_students)->check(CLI::ExistingFile);
  pr->add_option("--config", pr_config)->check(CLI::ExistingFile);
  auto* pr_epochs = pr->add_option("--epochs", pr_cfg.epochs);
  auto* pr_lr = pr->add_option("--lr", pr_cfg.lr);
  auto* pr_l2 = pr->add_option("--l2", pr_cfg.l2);
  auto* pr_seed = pr->add_option("--seed", pr_cfg.seed);
  pr->add_option("--split", pr_split, "evaluation split");
  pr->add_option("--out", pr_out)->required();
  pr->add_option("--manifest", pr_manifest);

  // aggregate
  auto* ag = app.add_subcommand("aggregate", "inverse-variance aggregation of metric reports");
  std::vector<std::string> ag_reports;
  std::string ag_out, ag_manifest;
  ag->add_option("--reports", ag_reports)->required()->check(CLI::ExistingFile);
  ag->add_option("--out", ag_out)->required();
  ag->add_option("--manifest", ag_manifest);

  // export-plots
  auto* ex = app.add_subcommand("export-plots", "CSV plot data: embeddings, LDA, curves");
  std::string ex_data, ex_model, ex_dir, ex_manifest, ex_split = "test";
  std::vector<std::string> ex_logs;
  ex->add_option("--data", ex_data)->check(CLI::ExistingFile);
  ex->add_option("--model", ex_model)->check(CLI::ExistingFile);
  ex->add_option("--training-log", ex_logs)->check(CLI::ExistingFile);
  ex->add_option("--split", ex_split);
  ex->add_option("--out-dir", ex_dir)->required();
  ex->add_option("--manifest", ex_manifest);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitContract;
  }

  try {
    if (gen->parsed()) {
      Manifest man("gen-data");
      json cfg = base_config(gen_config);
      flag_override(cfg, gen_seed_opt, "seed", gen_seed);
      const SynthConfig sc = synth_config_from_json(cfg);
      man.config(synth_config_json(sc));
      man.seeds(json::array({sc.seed}));
      if (!gen_config.empty()) man.input(gen_config);
      const Dataset d = gen_synth(sc);
      atomic_write(gen_out, [&](std::ostream& os) { write_dataset(os, d); });
      man.output(gen_out);
      if (!gen_csv.empty()) {
        atomic_write(gen_csv, [&](std::ostream& os) { write_dataset_csv(os, d); });
        man.output(gen_csv);
      }
      man.write(manifest_path(gen_manifest, gen_out));
      return kExitOk;
    }

    if (tt->parsed()) {
      Manifest man("train-teacher");
      json cfg = base_config(tt_config);
      flag_override(cfg, tt_epochs_opt, "epochs", tt_epochs);
      cfg["loss_kind"] = "cross_entropy";
      std::vector<std::uint64_t> seeds = tt_seeds;
      if (tt_seed_opt->count() == 0) seeds = {cfg.value("seed", std::uint64_t{0})};
      const TrainConfig base = train_config_from_json(cfg);
      man.config(base.to_json());
      man.seeds(seeds);
      man.input(tt_data);
      if (!tt_config.empty()) man.input(tt_config);
      const Dataset data = load_dataset(tt_data);
      const bool many = seeds.size() > 1;
      parallel_for(seeds.size(), tt_jobs, [&](std::size_t i) {
        TrainConfig c = base;
        c.seed = seeds[i];
        const TrainResult res = train_teacher(data, c);
        write_model(expand_seed(tt_out, c.seed, many), res, c.seed,
                    tt_log.empty() ? fs::path() : fs::path(expand_seed(tt_log, c.seed, many)), man);
        std::cerr << "teacher seed " << c.seed << " done\n";
      });
      man.write(manifest_path(tt_manifest, expand_seed(tt_out, seeds.front(), false)));
      return kExitOk;
    }

    if (ds->parsed()) {
      Manifest man("distill");
      json cfg = base_config(ds_config);
      flag_override(cfg, ds_epochs_opt, "epochs", ds_epochs);
      flag_override(cfg, ds_rep_opt, "rep_dim", ds_rep_dim);
      flag_override(cfg, ds_loss_opt, "loss_kind", ds_loss);
      std::vector<std::uint64_t> seeds = ds_seeds;
      if (ds_seed_opt->count() == 0) seeds = {cfg.value("seed", std::uint64_t{0})};
      const TrainConfig base = train_config_from_json(cfg);
      man.config(base.to_json());
      man.seeds(seeds);
      man.input(ds_data);
      man.input(ds_teacher);
      if (!ds_config.empty()) man.input(ds_config);
      const Dataset data = load_dataset(ds_data);
      const Checkpoint teacher = load_checkpoint(ds_teacher);
      const bool many = seeds.size() > 1;
      parallel_for(seeds.size(), ds_jobs, [&](std::size_t i) {
        TrainConfig c = base;
        c.seed = seeds[i];
        TrainResult res = distill_student(teacher.model, data, c);
        res.meta["teacher_seed"] = teacher.rng_seed;
        write_model(expand_seed(ds_out, c.seed, many), res, c.seed,
                    ds_log.empty() ? fs::path() : fs::path(expand_seed(ds_log, c.seed, many)), man);
        std::cerr << "student seed " << c.seed << " done\n";
      });
      man.write(manifest_path(ds_manifest, expand_seed(ds_out, seeds.front(), false)));
      return kExitOk;
    }

    if (mt->parsed()) {
      Manifest man("metrics");
      man.config({{"split", mt_split}, {"basis", mt_basis}, {"subsets", mt_subsets},
                  {"subset_seed", mt_seed}});
      man.input(mt_data);
      man.input(mt_teacher);
      const Dataset data = load_dataset(mt_data);
      const Batch batch = data.part(parse_split(mt_split));
      const Checkpoint teacher = load_checkpoint(mt_teacher);
      EvaluationOptions opt;
      opt.basis = parse_cca_basis(mt_basis);
      opt.plan = parse_plan(mt_subsets, teacher.model.label_count(), teacher.model.rep_dim(), mt_seed);
      std::vector<MetricReport> rows;
      json seeds = json::array({teacher.rng_seed});
      for (const auto& path : mt_students) {
        man.input(path);
        const Checkpoint st = load_checkpoint(path);
        MetricReport r = evaluate_pair(teacher.model, st.model, batch.x, batch.y, opt);
        r.teacher_seed = teacher.rng_seed;
        r.student_seed = st.rng_seed;
        r.loss_kind = loss_kind_of(st);
        rows.push_back(r);
        seeds.push_back(st.rng_seed);
      }
      man.seeds(seeds);
      json arr = json::array();
      for (const auto& r : rows) arr.push_back(to_json(r));
      atomic_write_string(mt_out, arr.dump(2) + "\n");
      man.output(mt_out);
      if (!mt_csv.empty()) {
        atomic_write(mt_csv, [&](std::ostream& os) { write_metric_csv(os, rows); });
        man.output(mt_csv);
      }
      man.write(manifest_path(mt_manifest, mt_out));
      return kExitOk;
    }

    if (vb->parsed()) {
      Manifest man("verify-bounds");
      json cfg = base_config(vb_config);
      flag_override(cfg, vb_trials, "trials", vb_cfg.trials);
      flag_override(cfg, vb_k, "k", vb_cfg.k);
      flag_override(cfg, vb_m, "m", vb_cfg.m);
      flag_override(cfg, vb_n, "n", vb_cfg.n);
      flag_override(cfg, vb_seed, "seed", vb_cfg.seed);
      flag_override(cfg, vb_tau, "tau_floor", vb_cfg.tau_floor);
      BoundSuiteConfig sc = bound_suite_config_from_json(cfg);
      sc.jobs = vb_cfg.jobs;
      man.config(sc.to_json());
      man.seeds(json::array({sc.seed}));
      if (!vb_config.empty()) man.input(vb_config);

      BoundSuiteResult res;
      if (vb_trial >= 0) {
        res.certificates = run_bound_trial(sc, static_cast<std::size_t>(vb_trial));
        for (const auto& c : res.certificates) res.passed = res.passed && (c.skipped || c.passed);
        res.summary = {{"replayed_trial", vb_trial}, {"suite_passed", res.passed}};
      } else {
        res = run_bound_suite(sc);
      }
      if (!vb_out.empty()) {
        atomic_write(vb_out, [&](std::ostream& os) { write_certificates_jsonl(os, res.certificates); });
        man.output(vb_out);
      }
      if (!vb_summary.empty()) {
        atomic_write_string(vb_summary, res.summary.dump(2) + "\n");
        man.output(vb_summary);
      }
      std::cout << res.summary.dump(2) << "\n";
      if (!vb_out.empty() || !vb_summary.empty() || !vb_manifest.empty()) {
        man.write(manifest_path(vb_manifest, vb_summary.empty() ? fs::path(vb_out)
                                                                : fs::path(vb_summary)));
      }
      return res.passed ? kExitOk : kExitBoundFailure;
    }

    if (pr->parsed()) {
      Manifest man("probe");
      json cfg = base_config(pr_config);
      flag_override(cfg, pr_epochs, "epochs", pr_cfg.epochs);
      flag_override(cfg, pr_lr, "lr", pr_cfg.lr);
      flag_override(cfg, pr_l2, "l2", pr_cfg.l2);
      flag_override(cfg, pr_seed, "seed", pr_cfg.seed);
      const ProbeConfig pc = probe_config_from_json(cfg);
      man.config(to_json(pc));
      man.seeds(json::array({pc.seed}));
      man.input(pr_data);
      man.input(pr_teacher);
      const Dataset data = load_dataset(pr_data);
      const Checkpoint teacher = load_checkpoint(pr_teacher);
      const Batch train = data.part(Split::train);
      const Batch eval = data.part(parse_split(pr_split));
      const Concept train_c = require_concept(train);
      const Concept eval_c = require_concept(eval);
      LinearProbe probe = fit_probe(teacher.model.embed(train.x), train_c, pc);
      probe = attach_concept_weights(std::move(probe), teacher.model.g());
      json out = {{"teacher_concept_accuracy",
                   concept_accuracy(probe, teacher.model.embed(eval.x), eval_c)},
                  {"alpha_residual", probe.alpha_residual},
                  {"probe", {{"w", detail::matrix_to_json(probe.w)},
                             {"b", detail::vector_to_json(probe.b)},
                             {"alpha", detail::matrix_to_json(*probe.alpha)}}},
                  {"students", json::array()}};
      bool all_passed = true;
      for (const auto& path : pr_students) {
        man.input(path);
        const Checkpoint st = load_checkpoint(path);
        const BoundCertificate cert =
            check_concept_bound(teacher.model, st.model, probe, eval_c, eval.x,
                                {{"student", path}, {"student_seed", st.rng_seed}});
        all_passed = all_passed && cert.passed;
        out["students"].push_back({{"path", path},
                                   {"loss_kind", loss_kind_of(st)},
                                   {"transferred_accuracy", cert.context["transferred_accuracy"]},
                                   {"certificate", to_json(cert)}});
      }
      atomic_write_string(pr_out, out.dump(2) + "\n");
      man.output(pr_out);
      man.write(manifest_path(pr_manifest, pr_out));
      return all_passed ? kExitOk : kExitBoundFailure;
    }

    if (ag->parsed()) {
      Manifest man("aggregate");
      std::vector<MetricReport> reports;
      for (const auto& path : ag_reports) {
        man.input(path);
        const json j = read_json_file(path);
        if (j.is_array()) {
          for (const auto& r : j) reports.push_back(metric_report_from_json(r));
        } else {
          reports.push_back(metric_report_from_json(j));
        }
      }
      const json agg = aggregate_reports(reports);
      atomic_write_string(ag_out, agg.dump(2) + "\n");
      man.output(ag_out);
      man.write(manifest_path(ag_manifest, ag_out));
      return kExitOk;
    }

    if (ex->parsed()) {
      Manifest man("export-plots");
      const fs::path dir(ex_dir);
      fs::create_directories(dir);
      if (!ex_model.empty() && ex_data.empty()) {
        throw ContractViolation("--model requires --data");
      }
      if (!ex_data.empty()) {
        man.input(ex_data);
        const Dataset data = load_dataset(ex_data);
        const Batch b = data.part(parse_split(ex_split));
        if (!ex_model.empty()) {
          man.input(ex_model);
          const Checkpoint ck = load_checkpoint(ex_model);
          const Matrix f = ck.model.embed(b.x);
          const fs::path emb = dir / "embeddings.csv";
          atomic_write(emb, [&](std::ostream& os) {
            os.precision(17);
            for (Eigen::Index j = 0; j < f.cols(); ++j) os << "f" << (j + 1) << ",";
            os << "label" << (b.concepts ? ",concept" : "") << "\n";
            const auto hard = b.concepts ? b.concepts->hard_labels() : std::vector<int>();
            for (Eigen::Index i = 0; i < f.rows(); ++i) {
              for (Eigen::Index j = 0; j < f.cols(); ++j) os << f(i, j) << ",";
              os << b.y[static_cast<std::size_t>(i)];
              if (b.concepts) os << "," << hard[static_cast<std::size_t>(i)];
              os << "\n";
            }
          });
          man.output(emb);
          const fs::path unemb = dir / "unembeddings.csv";
          atomic_write(unemb, [&](std::ostream& os) {
            os.precision(17);
            const Matrix& l = ck.model.g().matrix();
            for (Eigen::Index j = 0; j < l.rows(); ++j) os << (j ? "," : "") << "g" << (j + 1);
            os << ",label\n";
            for (Eigen::Index c = 0; c < l.cols(); ++c) {
              for (Eigen::Index j = 0; j < l.rows(); ++j) os << (j ? "," : "") << l(j, c);
              os << "," << c << "\n";
            }
          });
          man.output(unemb);
          if (b.concepts && b.concepts->values() >= 3) {
            const LdaResult lda = lda_project(f, *b.concepts);
            const fs::path p = dir / "lda.csv";
            const auto hard = b.concepts->hard_labels();
            atomic_write(p, [&](std::ostream& os) {
              os.precision(17);
              os << "x1,x2,concept_value\n";
              for (Eigen::Index i = 0; i < lda.projection.rows(); ++i) {
                os << lda.projection(i, 0) << "," << lda.projection(i, 1) << ","
                   << hard[static_cast<std::size_t>(i)] << "\n";
              }
            });
            man.output(p);
          }
        }
      }
      if (!ex_logs.empty()) {
        const fs::path p = dir / "training_curves.csv";
        atomic_write(p, [&](std::ostream& os) {
          os << "run,epoch,lr,loss,train_acc,bound_slack\n";
          for (const auto& log : ex_logs) {
            man.input(log);
            std::ifstream is(log);
            std::string line;
            std::getline(is, line);
            while (std::getline(is, line)) {
              if (!line.empty()) os << fs::path(log).stem().string() << "," << line << "\n";
            }
          }
        });
        man.output(p);
      }
      man.write(manifest_path(ex_manifest, dir / "export"));
      return kExitOk;
    }
  } catch (const ContractViolation& e) {
    std::cerr << "contract violation: " << e.what() << "\n";
    return kExitContract;
  } catch (const FormatError& e) {
    std::cerr << "format error: " << e.what() << "\n";
    return kExitContract;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitError;
  }
  return kExitOk;
}
