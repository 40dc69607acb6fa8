#include <gtest/gtest.h>

#include <sstream>

#include "repsim/config.hpp"
#include "repsim/data.hpp"
#include "repsim/distill.hpp"
#include "repsim/metrics.hpp"
#include "repsim/model_io.hpp"
#include "testkit/fixtures.hpp"

using namespace repsim;
using repsim::testkit::gaussian;

namespace {

Dataset tiny_synth(std::uint64_t seed = 3) {
  SynthConfig c;
  c.n_train = 240;
  c.n_val = 60;
  c.n_test = 60;
  c.seed = seed;
  return gen_synth(c);
}

TrainConfig tiny_config(LossKind kind, std::uint64_t seed) {
  TrainConfig c;
  c.hidden = {12, 12};
  c.rep_dim = 2;
  c.epochs = 6;
  c.batch_size = 64;
  c.lr = 5e-3;
  c.seed = seed;
  c.loss_kind = kind;
  return c;
}

std::vector<int> labels_for(const Matrix& x, std::size_t k, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<int> y(static_cast<std::size_t>(x.rows()));
  for (auto& v : y) v = static_cast<int>(rng() % k);
  return y;
}

}  // namespace

TEST(Distill, GradientsMatchFiniteDifferencesForEveryLoss) {
  const Model student = init_model(3, {10, 8}, 2, 6, 11);
  const Model teacher = init_model(3, {9}, 2, 6, 12);
  ASSERT_LE(student.f().parameter_count() + 12, kGradCheckMaxParams);
  const Matrix x = gaussian(5, 24, 3, 1.5);
  const auto y = labels_for(x, 6, 2);
  for (LossKind kind : {LossKind::cross_entropy, LossKind::kl_to_teacher, LossKind::l1_logit,
                        LossKind::l2_logit}) {
    const Model* t = kind == LossKind::cross_entropy ? nullptr : &teacher;
    const GradReport r = grad_check(student, t, x, &y, kind);
    EXPECT_LT(r.max_rel_err, 1e-5) << to_string(kind) << " worst " << r.worst;
    EXPECT_GT(r.checked, r.excluded);
  }
  const GradReport mixed = grad_check(student, &teacher, x, &y, LossKind::l2_logit, 0.3);
  EXPECT_LT(mixed.max_rel_err, 1e-5);
}

TEST(Distill, GradCheckRefusesLargeModels) {
  const Model big = init_model(3, {64, 64}, 2, 7, 1);
  const Matrix x = gaussian(1, 4, 3);
  const auto y = labels_for(x, 7, 1);
  EXPECT_THROW(grad_check(big, nullptr, x, &y, LossKind::cross_entropy), ContractViolation);
}

TEST(Distill, LossRequiresMatchingTeacher) {
  const Model s = init_model(3, {4}, 2, 6, 1);
  const Matrix x = gaussian(1, 4, 3);
  const auto y = labels_for(x, 6, 1);
  EXPECT_THROW(loss_and_grad(s, nullptr, x, &y, LossKind::l2_logit), ContractViolation);
  EXPECT_THROW(loss_and_grad(s, &s, x, &y, LossKind::cross_entropy), ContractViolation);
  const Model other = init_model(3, {4}, 2, 5, 1);
  EXPECT_THROW(loss_and_grad(s, &other, x, &y, LossKind::kl_to_teacher), ContractViolation);
}

TEST(Distill, InitIsCenteredAndDeterministic) {
  const Model a = init_model(3, {16, 16}, 2, 7, 4);
  const Model b = init_model(3, {16, 16}, 2, 7, 4);
  EXPECT_EQ(checkpoint_to_string({a, 4, {}}), checkpoint_to_string({b, 4, {}}));
  EXPECT_LT(a.g().matrix().rowwise().sum().cwiseAbs().maxCoeff(), 1e-12);
  for (const auto& l : a.f().layers()) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(l.in_dim()));
    EXPECT_LE(l.weight.cwiseAbs().maxCoeff(), bound);
    EXPECT_LE(l.bias.cwiseAbs().maxCoeff(), bound);
    EXPECT_GT(l.bias.cwiseAbs().maxCoeff(), 0.0);
  }
  const Model c = init_model(3, {16, 16}, 2, 7, 5);
  EXPECT_NE(checkpoint_to_string({a, 4, {}}), checkpoint_to_string({c, 4, {}}));
}

TEST(Distill, LearningRateSchedule) {
  TrainConfig c;
  c.lr = 0.01;
  c.lr_decay_gamma = 0.9;
  EXPECT_DOUBLE_EQ(c.lr_at(0), 0.01);
  EXPECT_NEAR(c.lr_at(3), 0.01 * 0.729, 1e-15);
}

TEST(Distill, ConfigValidation) {
  TrainConfig c;
  c.lr = 0.0;
  EXPECT_THROW(c.validate(), ContractViolation);
  c = {};
  c.lr_decay_gamma = 1.5;
  EXPECT_THROW(c.validate(), ContractViolation);
  c = {};
  c.batch_size = 0;
  EXPECT_THROW(c.validate(), ContractViolation);
  c = {};
  c.hidden = {8, 0};
  EXPECT_THROW(c.validate(), ContractViolation);
  EXPECT_THROW(parse_loss_kind("mse"), ContractViolation);
}

TEST(Distill, TeacherTrainingIsDeterministicAndLearns) {
  const Dataset data = tiny_synth();
  const auto cfg = tiny_config(LossKind::cross_entropy, 9);
  const auto r1 = train_teacher(data, cfg);
  const auto r2 = train_teacher(data, cfg);
  EXPECT_EQ(checkpoint_to_string({r1.model, 9, {}}), checkpoint_to_string({r2.model, 9, {}}));
  ASSERT_EQ(r1.log.size(), cfg.epochs);
  EXPECT_LT(r1.log.back().loss, r1.log.front().loss);
  EXPECT_DOUBLE_EQ(r1.log[2].lr, cfg.lr_at(2));
  EXPECT_THROW(train_teacher(data, tiny_config(LossKind::l2_logit, 1)), ContractViolation);
}

TEST(Distill, StudentsApproachTheTeacher) {
  const Dataset data = tiny_synth();
  const auto teacher = train_teacher(data, tiny_config(LossKind::cross_entropy, 1)).model;
  const Batch val = data.part(Split::val);
  for (LossKind kind : {LossKind::kl_to_teacher, LossKind::l1_logit, LossKind::l2_logit}) {
    auto cfg = tiny_config(kind, 2);
    cfg.epochs = 1;
    const auto short_run = distill_student(teacher, data, cfg);
    cfg.epochs = 30;
    const auto long_run = distill_student(teacher, data, cfg);
    EXPECT_LT(d_logit(teacher, long_run.model, val.x), d_logit(teacher, short_run.model, val.x))
        << to_string(kind);
    if (kind == LossKind::l1_logit) {
      for (const auto& e : long_run.log) {
        ASSERT_TRUE(e.bound_slack.has_value());
        EXPECT_GE(*e.bound_slack, 0.0);
      }
    }
  }
  EXPECT_THROW(distill_student(teacher, data, tiny_config(LossKind::cross_entropy, 1)),
               ContractViolation);
}

TEST(Distill, StudentCanStartFromTheTeacher) {
  const Dataset data = tiny_synth();
  const auto teacher = train_teacher(data, tiny_config(LossKind::cross_entropy, 1)).model;
  auto cfg = tiny_config(LossKind::l2_logit, 4);
  cfg.lr = 1e-9;
  cfg.epochs = 1;
  const auto r = distill_student(teacher, data, cfg, &teacher);
  EXPECT_LT(d_logit(teacher, r.model, data.part(Split::test).x), 1e-5);
}

TEST(Distill, CheckpointRoundTripIsBitExact) {
  const Model m = init_model(3, {7, 5}, 2, 6, 21);
  Checkpoint ck{m, 21, {{"note", "x"}}};
  const std::string s = checkpoint_to_string(ck);
  const Checkpoint back = checkpoint_from_json(nlohmann::json::parse(s));
  EXPECT_EQ(checkpoint_to_string(back), s);
  const Matrix x = gaussian(2, 10, 3);
  EXPECT_EQ((logits(m, x) - logits(back.model, x)).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Distill, TrainConfigJsonRoundTrip) {
  auto c = tiny_config(LossKind::l1_logit, 17);
  c.optimizer = OptimizerKind::sgd;
  const auto back = train_config_from_json(c.to_json());
  EXPECT_EQ(back.to_json(), c.to_json());
  auto j = c.to_json();
  j["engine"] = kTrainingEngineVersion + 1;
  EXPECT_THROW(train_config_from_json(j), ContractViolation);
  EXPECT_THROW(train_config_from_json({{"epochz", 3}}), ContractViolation);
  EXPECT_THROW(train_config_from_json({{"epochs", "three"}}), ContractViolation);
}

TEST(Distill, TrainingLogCsvHasOneRowPerEpoch) {
  std::vector<EpochLog> log(3);
  log[1].bound_slack = 0.5;
  std::ostringstream os;
  write_training_log_csv(os, log);
  const std::string s = os.str();
  EXPECT_EQ(std::count(s.begin(), s.end(), '\n'), 4);
  EXPECT_EQ(s.rfind("epoch,lr,loss,train_acc,bound_slack", 0), 0u);
}
