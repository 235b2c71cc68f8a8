#include <gtest/gtest.h>

#include <cmath>
#include <cstring>

#include "support/grad_cases.hpp"
#include "voltron/vgae/io.hpp"
#include "voltron/vgae/train.hpp"

using namespace voltron;
using vgae::VgaeDims;
using vgae::VgaeModel;
using Model = VgaeModel<double>;

namespace {

cg::ApiCallGraph path_graph(const std::string& id, Label label, std::vector<cg::ApiIndex> nodes) {
  cg::ApiCallGraph g;
  g.app_id = id;
  g.label = label;
  g.nodes = nodes;
  std::sort(g.nodes.begin(), g.nodes.end());
  for (std::size_t i = 0; i + 1 < nodes.size(); ++i) g.edges.push_back({nodes[i], nodes[i + 1]});
  std::sort(g.edges.begin(), g.edges.end());
  return g;
}

VgaeDims small_dims(std::size_t vocab) {
  VgaeDims d;
  d.vocab = vocab;
  d.hidden1 = 8;
  d.hidden2 = 6;
  d.latent = 4;
  return d;
}

bool bitwise_equal(const num::Matrix<double>& a, const num::Matrix<double>& b) {
  return a.same_shape(b) && std::memcmp(a.values().data(), b.values().data(), a.size() * sizeof(double)) == 0;
}

// Dense reference encoder: explicit one-hot features and triple loops.
num::Matrix<double> naive_mm(const num::Matrix<double>& a, const num::Matrix<double>& b) {
  num::Matrix<double> c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      long double acc = 0;
      for (std::size_t k = 0; k < a.cols(); ++k) acc += static_cast<long double>(a(i, k)) * b(k, j);
      c(i, j) = static_cast<double>(acc);
    }
  return c;
}

num::Matrix<double> relu(num::Matrix<double> m) {
  for (auto& v : m.values()) v = std::max(v, 0.0);
  return m;
}

}  // namespace

TEST(VgaeIdentities, KlOfStandardNormalIsZero) {
  num::Matrix<double> mu(5, 4), logvar(5, 4);
  EXPECT_EQ(vgae::kl_loss(mu, logvar), 0.0);
  mu.fill(1.0);
  EXPECT_DOUBLE_EQ(vgae::kl_loss(mu, logvar), 0.5 * 20);
  mu.fill(0.0);
  logvar.fill(std::log(2.0));
  EXPECT_NEAR(vgae::kl_loss(mu, logvar), -0.5 * 20 * (1 + std::log(2.0) - 2.0), 1e-12);
}

TEST(VgaeIdentities, DecodeIsSymmetricAndOpen) {
  Rng rng(3);
  auto z = vgae::standard_normal<double>(9, 4, rng);
  for (auto& v : z.values()) v *= 20;
  const auto p = vgae::decode(z);
  for (std::size_t i = 0; i < 9; ++i)
    for (std::size_t j = 0; j < 9; ++j) {
      EXPECT_EQ(std::memcmp(&p(i, j), &p(j, i), sizeof(double)), 0);
      EXPECT_GT(p(i, j), 0.0);
      EXPECT_LT(p(i, j), 1.0);
    }
}

TEST(VgaeIdentities, SoftmaxSumsToOne) {
  Rng rng(4);
  for (int k = 0; k < 1000; ++k) {
    const std::array<double, 2> l{50 * rng.normal(), 50 * rng.normal()};
    const auto p = vgae::softmax(l);
    EXPECT_NEAR(p[0] + p[1], 1.0, 1e-12);
    EXPECT_NEAR(vgae::cross_entropy(l, 1), -std::log(std::max(p[1], 1e-300)), 1e-9 * (1 + std::abs(l[0] - l[1])));
  }
}

TEST(VgaeIdentities, ClassifyTieGoesToMalware) {
  EXPECT_EQ(vgae::classify_logits<double>({0.3, 0.3}).label, Label::malware);
  EXPECT_EQ(vgae::classify_logits<double>({0.31, 0.3}).label, Label::benign);
  EXPECT_EQ(vgae::classify_logits<double>({0.3, 0.31}).label, Label::malware);
  const auto c = vgae::classify_logits<double>({0.0, 0.0});
  EXPECT_EQ(c.probabilities[0], 0.5);
  EXPECT_EQ(c.probabilities[1], 0.5);
}

TEST(VgaeGraph, PrepareGraphTarget) {
  const auto g = path_graph("p", Label::benign, {4, 1, 7});
  const auto in = vgae::prepare_graph<double>(g, 8);
  // nodes sorted: 1, 4, 7; edges 4→1 and 1→7
  EXPECT_EQ(in.positives, 4u);
  const double expect[3][3] = {{0, 1, 1}, {1, 0, 0}, {1, 0, 0}};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) EXPECT_EQ(in.target(i, j), expect[i][j]);
  EXPECT_THROW(vgae::prepare_graph<double>(g, 7), ShapeError);
  cg::ApiCallGraph empty;
  EXPECT_THROW(vgae::prepare_graph<double>(empty, 8), EmptyGraphError);
}

TEST(VgaeLoss, ReconMatchesDirectFormula) {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 2 + rng.index(10);
    const auto g = oracle::random_graph(rng, n, 20);
    const auto in = vgae::prepare_graph<double>(g, 20);
    const auto z = vgae::standard_normal<double>(n, 3, rng);
    const auto prob = vgae::decode(z);

    std::size_t pos = 0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        if (in.target(i, j) != 0) ++pos;
    const double pw = static_cast<double>(n * n - pos) / std::max<std::size_t>(pos, 1);
    long double acc = 0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        double s = 0;
        for (std::size_t k = 0; k < 3; ++k) s += z(i, k) * z(j, k);
        const long double p = 1.0L / (1.0L + std::exp(-static_cast<long double>(s)));
        acc += in.target(i, j) != 0 ? -pw * std::log(p) : -std::log(1 - p);
      }
    const double expect = static_cast<double>(acc / (n * n));
    EXPECT_NEAR(vgae::recon_loss(in, prob), expect, 1e-10 * (1 + expect));
    EXPECT_NEAR(vgae::recon_loss_from_logits(in, vgae::latent_logits(z)), expect, 1e-10 * (1 + expect));
  }
}

TEST(VgaeModelTest, EncoderMatchesDenseReference) {
  Rng rng(6);
  const auto dims = small_dims(15);
  const auto model = Model::init(dims, 11);
  for (int trial = 0; trial < 10; ++trial) {
    const auto g = oracle::random_graph(rng, 2 + rng.index(9), dims.vocab);
    const auto in = vgae::prepare_graph<double>(g, dims.vocab);
    const auto x = vgae::node_features<double>(g, dims.vocab);
    const auto& a = in.norm_adj;
    using S = Model::Slot;
    const auto h1 = relu(naive_mm(a, naive_mm(x, model[S::w0])));
    const auto h2 = relu(naive_mm(a, naive_mm(h1, model[S::w1])));
    const auto mu = naive_mm(a, naive_mm(h2, model[S::w_mu]));
    const auto lv = naive_mm(a, naive_mm(h2, model[S::w_logvar]));
    num::Matrix<double> got_mu, got_lv;
    vgae::encode_moments(in, model, got_mu, got_lv);
    for (std::size_t k = 0; k < mu.size(); ++k) {
      EXPECT_NEAR(got_mu[k], mu[k], 1e-12);
      EXPECT_NEAR(got_lv[k], lv[k], 1e-12);
    }
    const auto emb = vgae::embed(in, model);
    ASSERT_EQ(emb.size(), dims.latent);
    for (std::size_t d = 0; d < dims.latent; ++d) {
      double s = 0;
      for (std::size_t i = 0; i < mu.rows(); ++i) s += mu(i, d);
      EXPECT_NEAR(emb[d], s / mu.rows(), 1e-12);
    }
  }
}

TEST(VgaeModelTest, ZeroNoiseGivesMean) {
  Rng rng(7);
  const auto dims = small_dims(10);
  const auto model = Model::init(dims, 1);
  const auto g = oracle::random_graph(rng, 5, 10);
  const auto in = vgae::prepare_graph<double>(g, 10);
  const auto out = vgae::encode_with_noise(in, model, num::Matrix<double>(5, dims.latent));
  EXPECT_TRUE(bitwise_equal(out.z, out.mu));
  EXPECT_THROW(vgae::encode_with_noise(in, model, num::Matrix<double>(5, dims.latent + 1)), ShapeError);
}

TEST(VgaeGradient, MatchesFiniteDifferences) {
  for (std::uint64_t seed = 1; seed <= 22; ++seed) {
    const std::size_t n = 2 + seed % 11;
    EXPECT_LT(oracle::vgae_grad_error(seed, n, 0.0, 150), 1e-4) << "seed " << seed << " n " << n;
  }
}

TEST(VgaeGradient, EveryCoordinateOnOneGraph) { EXPECT_LT(oracle::vgae_grad_error(77, 4), 1e-4); }

TEST(VgaeGradient, CorpusSizeNormaliser) {
  for (std::uint64_t seed = 30; seed < 35; ++seed) EXPECT_LT(oracle::vgae_grad_error(seed, 6, 250.0, 150), 1e-4);
}

TEST(VgaeGradient, BackwardBeforeForwardThrows) {
  auto model = Model::init(small_dims(4), 1);
  vgae::VgaeForward<double> f;
  EXPECT_THROW(vgae::backward(f, model), StateError);
}

TEST(VgaePersist, RoundTripIsBitwise) {
  const auto model = Model::init(small_dims(12), 99);
  for (auto enc : {num::ParamEncoding::decimal, num::ParamEncoding::base64}) {
    const auto doc = nlohmann::json::parse(vgae::save_vgae(model, "abc", enc).dump());
    const auto back = vgae::load_vgae<double>(doc, "abc");
    EXPECT_EQ(back.dims(), model.dims());
    for (std::size_t i = 0; i < model.params().size(); ++i)
      EXPECT_TRUE(bitwise_equal(back.params().value(i), model.params().value(i))) << i;
  }
}

TEST(VgaePersist, RefusesForeignDocuments) {
  const auto model = Model::init(small_dims(12), 99);
  auto doc = vgae::save_vgae(model, "abc");
  EXPECT_THROW(vgae::load_vgae<double>(doc, "xyz"), ValidationError);
  auto wrong_kind = doc;
  wrong_kind["kind"] = "snn";
  EXPECT_THROW(vgae::load_vgae<double>(wrong_kind, "abc"), ParseError);
  auto wrong_shape = doc;
  wrong_shape["shapes"]["latent"] = 5;
  EXPECT_THROW(vgae::load_vgae<double>(wrong_shape, "abc"), ShapeError);
}

namespace {

std::vector<cg::ApiCallGraph> toy_corpus() {
  // benign graphs live on APIs 0-5, malware on 6-11
  std::vector<cg::ApiCallGraph> gs;
  Rng rng(21);
  for (int i = 0; i < 24; ++i) {
    const bool mal = i % 2 == 1;
    std::vector<cg::ApiIndex> nodes;
    auto pick = rng.sample_without_replacement(6, 3 + rng.index(3));
    for (auto p : pick) nodes.push_back(p + (mal ? 6 : 0));
    gs.push_back(path_graph("a" + std::to_string(i), mal ? Label::malware : Label::benign, nodes));
  }
  return gs;
}

}  // namespace

TEST(VgaeTrain, LossDecreasesAndSeparatesToyClasses) {
  const auto corpus = toy_corpus();
  vgae::TrainConfig cfg;
  cfg.epochs = 150;
  cfg.learning_rate = 0.01;
  cfg.batch_size = 8;
  cfg.seed = 5;
  cfg.dims = small_dims(0);
  const auto r = vgae::train_vgae<double>(corpus, 12, cfg);
  ASSERT_EQ(r.history.size(), 150u);
  double tail = 0, tail_cls = 0;
  for (std::size_t e = 140; e < 150; ++e) {
    tail += r.history[e].total / 10;
    tail_cls += r.history[e].cls / 10;
  }
  EXPECT_LT(tail, 0.8 * r.history.front().total);
  EXPECT_LT(tail_cls, 0.2 * r.history.front().cls);
  for (const auto& g : corpus) {
    const auto in = vgae::prepare_graph<double>(g, 12);
    EXPECT_EQ(vgae::vgae_classify(in, r.model).label, g.label) << g.app_id;
  }
}

TEST(VgaeTrain, DeterministicForSeed) {
  const auto corpus = toy_corpus();
  vgae::TrainConfig cfg;
  cfg.epochs = 5;
  cfg.dims = small_dims(0);
  cfg.seed = 8;
  const auto a = vgae::train_vgae<double>(corpus, 12, cfg);
  const auto b = vgae::train_vgae<double>(corpus, 12, cfg);
  EXPECT_EQ(a.model, b.model);
  cfg.seed = 9;
  const auto c = vgae::train_vgae<double>(corpus, 12, cfg);
  EXPECT_FALSE(a.model == c.model);
}

TEST(VgaeTrain, RejectsBadInput) {
  vgae::TrainConfig cfg;
  cfg.dims = small_dims(0);
  EXPECT_THROW(vgae::train_vgae<double>({}, 12, cfg), ValidationError);
  auto corpus = toy_corpus();
  corpus[0].label = Label::unknown;
  EXPECT_THROW(vgae::train_vgae<double>(corpus, 12, cfg), ValidationError);
  cfg.learning_rate = 0;
  EXPECT_THROW(vgae::train_vgae<double>(toy_corpus(), 12, cfg), ValidationError);
  EXPECT_THROW(vgae::parse_kl_normalization("nodes"), ValidationError);
}

TEST(VgaeTrain, FloatPrecisionRuns) {
  vgae::TrainConfig cfg;
  cfg.epochs = 3;
  cfg.dims = small_dims(0);
  const auto r = vgae::train_vgae<float>(toy_corpus(), 12, cfg);
  EXPECT_TRUE(r.model.params().all_finite());
}
