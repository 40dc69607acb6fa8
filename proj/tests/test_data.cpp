#include <gtest/gtest.h>

#include <set>
#include <sstream>

#include "repsim/data.hpp"
#include "repsim/probe.hpp"

using namespace repsim;

namespace {

SynthConfig small() {
  SynthConfig c;
  c.n_train = 280;
  c.n_val = 70;
  c.n_test = 35;
  c.seed = 11;
  return c;
}

std::string serialized(const Dataset& ds) {
  std::ostringstream os;
  write_dataset(os, ds);
  return os.str();
}

Dataset parse(const std::string& bytes) {
  std::istringstream is(bytes);
  return read_dataset(is);
}

}  // namespace

TEST(Data, SplitSizesAndLabelRange) {
  const Dataset ds = gen_synth(small());
  EXPECT_EQ(ds.size(), 385u);
  EXPECT_EQ(ds.dim(), 2u);
  EXPECT_EQ(ds.part(Split::train).y.size(), 280u);
  EXPECT_EQ(ds.part(Split::val).y.size(), 70u);
  EXPECT_EQ(ds.part(Split::test).y.size(), 35u);
  EXPECT_EQ(ds.part(Split::test, 10).y.size(), 10u);
  std::set<int> labels(ds.y.begin(), ds.y.end());
  EXPECT_EQ(labels.size(), 7u);
  ASSERT_TRUE(ds.concept_ids.has_value());
  EXPECT_EQ(ds.concept_values, 4u);
  EXPECT_NO_THROW(ds.validate());
}

TEST(Data, RadiiStayInRange) {
  const auto cfg = small();
  const Dataset ds = gen_synth(cfg);
  for (Eigen::Index i = 0; i < ds.x.rows(); ++i) {
    const double r = ds.x.row(i).norm();
    EXPECT_GE(r, cfg.rho_min - 1e-12);
    EXPECT_LE(r, cfg.rho_max + 1e-12);
  }
}

TEST(Data, RayLayoutCoversEveryClassOnEveryRay) {
  const auto layout = detail::ray_layout(7, 4);
  ASSERT_EQ(layout.size(), 4u);
  for (const auto& ray : layout) {
    std::set<int> s(ray.begin(), ray.end());
    EXPECT_EQ(s.size(), 7u);
  }
}

TEST(Data, GenerationIsDeterministic) {
  EXPECT_EQ(serialized(gen_synth(small())), serialized(gen_synth(small())));
  auto other = small();
  other.seed = 12;
  EXPECT_NE(serialized(gen_synth(small())), serialized(gen_synth(other)));
}

TEST(Data, BinaryRoundTrip) {
  const Dataset ds = gen_synth(small());
  const std::string bytes = serialized(ds);
  const Dataset back = parse(bytes);
  EXPECT_EQ(serialized(back), bytes);
  EXPECT_EQ((back.x - ds.x).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(back.y, ds.y);
  EXPECT_EQ(back.split, ds.split);
  EXPECT_EQ(*back.concept_ids, *ds.concept_ids);
}

TEST(Data, FormatErrors) {
  const std::string bytes = serialized(gen_synth(small()));
  std::string bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_THROW(parse(bad_magic), FormatError);
  EXPECT_THROW(parse(bytes.substr(0, bytes.size() - 3)), FormatError);
  EXPECT_THROW(parse(bytes.substr(0, 10)), FormatError);
  EXPECT_THROW(parse(bytes + "junk"), FormatError);
  EXPECT_THROW(parse(""), FormatError);

  const auto pos = bytes.find("\"version\":1");
  ASSERT_NE(pos, std::string::npos);
  std::string bumped = bytes;
  bumped[pos + 10] = '9';
  EXPECT_THROW(parse(bumped), FormatError);
}

TEST(Data, InvalidConfigsAreRejected) {
  auto c = small();
  c.k = 1;
  EXPECT_THROW(gen_synth(c), ContractViolation);
  c = small();
  c.rho_min = 5.0;
  c.rho_max = 2.0;
  EXPECT_THROW(gen_synth(c), ContractViolation);
  c = small();
  c.noise_fraction = 0.5;
  EXPECT_THROW(gen_synth(c), ContractViolation);
}

TEST(Data, ValidateCatchesBadLabels) {
  Dataset ds = gen_synth(small());
  ds.y[0] = 7;
  EXPECT_THROW(ds.validate(), ContractViolation);
  std::ostringstream os;
  EXPECT_THROW(write_dataset(os, ds), ContractViolation);
}

TEST(Data, CsvExportHasHeaderAndRows) {
  const Dataset ds = gen_synth(small());
  std::ostringstream os;
  write_dataset_csv(os, ds);
  const std::string s = os.str();
  EXPECT_EQ(static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')), ds.size() + 1);
}

TEST(Data, LabelsAreNotLinearlySeparable) {
  SynthConfig c;
  c.n_train = 3000;
  c.n_val = 0;
  c.n_test = 0;
  const Dataset ds = gen_synth(c);
  const Concept labels = Concept::hard(ds.y, ds.k);
  ProbeConfig pc;
  pc.epochs = 1500;
  EXPECT_LE(concept_accuracy(fit_probe(ds.x, labels, pc), ds.x, labels), 0.6);
}
