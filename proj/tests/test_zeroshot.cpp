#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "voltron/zeroshot.hpp"

using namespace voltron;
using namespace voltron::zeroshot;

namespace {

// Every weight zero, so the similarity of any pair is sigmoid(final bias).
snn::SnnModel<double> constant_model(double score) {
  auto m = snn::SnnModel<double>::init(snn::SnnDims{}, 1);
  for (auto& p : m.params()) p.value.fill(0.0);
  m.params().value(m.bias_slot(m.layer_count() - 1))[0] = std::log(score / (1 - score));
  return m;
}

std::vector<Embedding> pool(std::size_t n, Label role, const std::string& prefix = "b") {
  std::vector<Embedding> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back({prefix + std::to_string(i), role, std::nullopt, std::vector<double>(16, 0.1 * i)});
  return out;
}

}  // namespace

TEST(ZeroShotDecision, ArithmeticMeanExamples) {
  const double m = mean_of({0.2, 0.4, 0.9});
  EXPECT_EQ(m, 0.5);
  EXPECT_EQ(zero_shot_decision(m, 0.5), Label::malware);
  EXPECT_EQ(zero_shot_decision(0.5, 0.5), Label::malware);
  EXPECT_EQ(zero_shot_decision(std::nextafter(0.5, 1.0), 0.5), Label::benign);
  EXPECT_EQ(zero_shot_decision(0.9, 0.5), Label::benign);
  EXPECT_THROW(mean_of({}), ValidationError);
}

TEST(ZeroShotDecision, FewShotArgmaxAndTie) {
  EXPECT_EQ(few_shot_decision(0.8, 0.3), Label::benign);
  EXPECT_EQ(few_shot_decision(0.3, 0.8), Label::malware);
  EXPECT_EQ(few_shot_decision(0.6, 0.6), Label::malware);
  // supports of two: benign {0.7, 0.5} → 0.6, malware {0.9, 0.2} → 0.55
  EXPECT_EQ(few_shot_decision(mean_of({0.7, 0.5}), mean_of({0.9, 0.2})), Label::benign);
  EXPECT_EQ(few_shot_decision(mean_of({0.7, 0.3}), mean_of({0.9, 0.2})), Label::malware);
}

TEST(ZeroShotDecision, MeanIsOrderInvariantBitwise) {
  Rng rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> s(1 + rng.index(40));
    for (auto& v : s) v = rng.uniform();
    const double base = mean_of(s);
    for (int k = 0; k < 5; ++k) {
      rng.shuffle(s);
      EXPECT_EQ(mean_of(s), base);
    }
  }
}

TEST(ZeroShotDecision, BenignSetShrinksAsThresholdRises) {
  Rng rng(2);
  std::vector<double> means(500);
  for (auto& v : means) v = rng.uniform();
  std::set<std::size_t> prev;
  for (std::size_t i = 0; i < means.size(); ++i) prev.insert(i);
  for (double t = 0.01; t < 1.0; t += 0.01) {
    std::set<std::size_t> cur;
    for (std::size_t i = 0; i < means.size(); ++i)
      if (zero_shot_decision(means[i], t) == Label::benign) cur.insert(i);
    EXPECT_TRUE(std::includes(prev.begin(), prev.end(), cur.begin(), cur.end()));
    prev = std::move(cur);
  }
}

TEST(ZeroShotClassify, ConstantScoreModel) {
  Rng rng(3);
  const auto p = pool(10, Label::benign);
  const auto support = build_support_set(p, Label::benign, 5, rng);
  const Embedding e{"x", Label::unknown, std::nullopt, std::vector<double>(16, 1.0)};

  const auto high = classify_zero_shot(constant_model(0.9), e, support, 0.5);
  EXPECT_EQ(high.predicted, Label::benign);
  EXPECT_NEAR(high.mean_benign, 0.9, 1e-12);
  EXPECT_FALSE(high.mean_malware.has_value());
  EXPECT_EQ(high.mode, Mode::zero_shot);

  const auto half = classify_zero_shot(constant_model(0.5), e, support, 0.5);
  EXPECT_EQ(half.mean_benign, 0.5);
  EXPECT_EQ(half.predicted, Label::malware);

  EXPECT_THROW(classify_zero_shot(constant_model(0.9), e, support, 1.0), ValidationError);
  EXPECT_THROW(classify_zero_shot(constant_model(0.9), e, support, 0.0), ValidationError);
  EXPECT_THROW(classify_zero_shot(constant_model(0.9), e, SupportSet{}, 0.5), ValidationError);
}

TEST(ZeroShotClassify, FewShotUsesBothSupports) {
  Rng rng(4);
  const auto b = build_support_set(pool(4, Label::benign), Label::benign, 3, rng);
  const auto m = build_support_set(pool(4, Label::malware, "m"), Label::malware, 3, rng);
  const Embedding e{"x", Label::unknown, std::nullopt, std::vector<double>(16, 1.0)};
  const auto v = classify_few_shot(constant_model(0.7), e, b, m);
  ASSERT_TRUE(v.mean_malware.has_value());
  EXPECT_EQ(v.mean_benign, *v.mean_malware);
  EXPECT_EQ(v.predicted, Label::malware);
  EXPECT_EQ(v.mode, Mode::few_shot);
  EXPECT_THROW(classify_few_shot(constant_model(0.7), e, b, b), ValidationError);
}

TEST(ZeroShotClassify, VerdictDependsOnSupportOrderOnlyThroughScores) {
  const auto model = snn::SnnModel<double>::init(snn::SnnDims{}, 9);
  Rng rng(5);
  std::vector<Embedding> p;
  for (int i = 0; i < 30; ++i) {
    Embedding e{"b" + std::to_string(i), Label::benign, std::nullopt, std::vector<double>(16)};
    for (auto& v : e.values) v = rng.normal();
    p.push_back(e);
  }
  SupportSet s{Label::benign, p};
  Embedding x{"x", Label::unknown, std::nullopt, std::vector<double>(16)};
  for (auto& v : x.values) v = rng.normal();
  const auto base = classify_zero_shot(model, x, s, 0.5);
  for (int k = 0; k < 10; ++k) {
    rng.shuffle(s.embeddings);
    EXPECT_EQ(classify_zero_shot(model, x, s, 0.5), base);
  }
}

TEST(SupportSetTest, DrawsDistinctMembers) {
  const auto p = pool(100, Label::benign);
  Rng rng(6);
  const auto s = build_support_set(p, Label::benign, 30, rng);
  const auto ids = s.app_ids();
  EXPECT_EQ(ids.size(), 30u);
  EXPECT_EQ(std::set<std::string>(ids.begin(), ids.end()).size(), 30u);

  Rng whole(7);
  auto all = build_support_set(p, Label::benign, 100, whole).app_ids();
  std::sort(all.begin(), all.end());
  std::vector<std::string> expect;
  for (const auto& e : p) expect.push_back(e.app_id);
  std::sort(expect.begin(), expect.end());
  EXPECT_EQ(all, expect);
}

TEST(SupportSetTest, SeedDeterminesTheDraw) {
  const auto p = pool(100, Label::benign);
  Rng a(8), b(8), c(9);
  const auto sa = build_support_set(p, Label::benign, 30, a).app_ids();
  EXPECT_EQ(sa, build_support_set(p, Label::benign, 30, b).app_ids());
  EXPECT_NE(sa, build_support_set(p, Label::benign, 30, c).app_ids());
}

TEST(SupportSetTest, Errors) {
  Rng rng(1);
  EXPECT_THROW(build_support_set(pool(5, Label::benign), Label::benign, 6, rng), SamplingError);
  EXPECT_THROW(build_support_set(pool(5, Label::benign), Label::benign, 0, rng), ValidationError);
  auto mixed = pool(5, Label::benign);
  mixed[2].label = Label::malware;
  EXPECT_THROW(build_support_set(mixed, Label::benign, 2, rng), ValidationError);
}

TEST(VerdictIo, RoundTrip) {
  std::vector<Verdict> vs;
  vs.push_back({"a", Label::benign, 0.73, std::nullopt, 0.5, Mode::zero_shot});
  vs.push_back({"b", Label::malware, 0.1 + 0.2, 0.65, 0.5, Mode::few_shot});
  std::stringstream ss;
  write_verdicts(ss, vs);
  EXPECT_EQ(read_verdicts(ss), vs);

  std::stringstream bad(R"({"app_id":"a","mode":"zero-shot","mean_benign":0.5,"threshold":0.5,"label":"unknown"})");
  EXPECT_THROW(read_verdicts(bad), ParseError);
  std::stringstream broken("{not json");
  EXPECT_THROW(read_verdicts(broken), ParseError);
  EXPECT_THROW(parse_mode("one-shot"), ValidationError);
}
