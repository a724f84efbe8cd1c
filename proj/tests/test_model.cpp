#include <gtest/gtest.h>

#include <random>

#include "glutag/model.hpp"
#include "test_support.hpp"

namespace glutag {
namespace {

using testing::max_relative_error;
using testing::numeric_gradient;
using Mat = Matrix<double>;

ModelConfig micro(HeadKind head, Gating gating) {
  ModelConfig cfg;
  cfg.num_classes = 2;
  cfg.head = head;
  cfg.gating = gating;
  cfg.input_bins = 8;
  cfg.blocks = {{3, {3, 3}, 2}, {2, {3, 3}, 2}};
  cfg.hidden = 3;
  cfg.dropout = 0.0;
  return cfg;
}

Mat random_features(int frames, int bins, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  Mat x(frames, bins);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = g(rng);
  return x;
}

HeadLoss<double> head_loss(const ModelConfig& cfg, const Mat& logits) {
  if (cfg.head == HeadKind::kCtc) return ctc_head_loss(logits, TokenSeq{0, 2, 1, 3}, cfg.blank());
  return tag_head_loss(logits, TagSet{1}, cfg.head);
}

struct Case {
  HeadKind head;
  Gating gating;
};

class EndToEnd : public ::testing::TestWithParam<Case> {};

TEST_P(EndToEnd, GradientsMatchFiniteDifferences) {
  const auto cfg = micro(GetParam().head, GetParam().gating);
  auto params = init_params<double>(cfg, 42);
  // Non-zero biases so every path is exercised.
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g(0.0, 0.1);
  for (auto& [name, m] : params.arrays())
    if (name.find(".b") != std::string::npos || name.find(".c") != std::string::npos ||
        name.find("bias") != std::string::npos)
      for (Eigen::Index i = 0; i < m->size(); ++i) m->data()[i] = g(rng);
  Mat x = random_features(8, 8, 7);

  auto loss = [&] {
    const auto fp = model_forward(x, params, cfg, false);
    return static_cast<double>(head_loss(cfg, fp.logits).loss);
  };
  const auto fp = model_forward(x, params, cfg, false);
  const auto hl = head_loss(cfg, fp.logits);
  ASSERT_TRUE(hl.feasible);
  Mat dx;
  auto grads = model_backward(fp, params, cfg, hl.d_logits, &dx);

  auto mine = params.arrays();
  auto theirs = grads.arrays();
  ASSERT_EQ(mine.size(), theirs.size());
  for (std::size_t i = 0; i < mine.size(); ++i) {
    const Mat fd = numeric_gradient(*mine[i].second, loss, 1e-5);
    EXPECT_LT(max_relative_error(*theirs[i].second, fd), 1e-5) << mine[i].first;
  }
  EXPECT_LT(max_relative_error(dx, numeric_gradient(x, loss, 1e-5)), 1e-5) << "input";
}

INSTANTIATE_TEST_SUITE_P(Heads, EndToEnd,
                         ::testing::Values(Case{HeadKind::kCtc, Gating::kGlu},
                                           Case{HeadKind::kCtc, Gating::kRelu},
                                           Case{HeadKind::kGmp, Gating::kGlu},
                                           Case{HeadKind::kGap, Gating::kGlu}));

TEST(Model, DropoutGradientMatchesFixedMask) {
  auto cfg = micro(HeadKind::kCtc, Gating::kGlu);
  cfg.dropout = 0.3;
  auto params = init_params<double>(cfg, 5);
  const Mat x = random_features(8, 8, 9);
  std::mt19937_64 rng(1);
  const auto fp = model_forward(x, params, cfg, true, &rng);
  const auto hl = head_loss(cfg, fp.logits);
  const auto grads = model_backward(fp, params, cfg, hl.d_logits);
  auto loss = [&] {
    std::mt19937_64 same(1);
    return head_loss(cfg, model_forward(x, params, cfg, true, &same).logits).loss;
  };
  const Mat fd = numeric_gradient(params.dense_w, loss, 1e-5);
  EXPECT_LT(max_relative_error(grads.dense_w, fd), 1e-5);
  const Mat fd0 = numeric_gradient(params.blocks[0].w, loss, 1e-5);
  EXPECT_LT(max_relative_error(grads.blocks[0].w, fd0), 1e-5);
}

TEST(Model, FullSizeShapesPreserveTime) {
  ModelConfig cfg;
  cfg.num_classes = 10;
  for (HeadKind head : {HeadKind::kCtc, HeadKind::kGmp}) {
    cfg.head = head;
    const auto params = init_params<float>(cfg, 1);
    const Matrix<float> x = random_features(240, 64, 2).cast<float>();
    const auto fp = model_forward(x, params, cfg, false);
    EXPECT_EQ(fp.rnn_in.rows(), 240);
    EXPECT_EQ(fp.rnn_in.cols(), 256);
    EXPECT_EQ(fp.rnn_out.cols(), 64);
    EXPECT_EQ(fp.logits.rows(), 240);
    EXPECT_EQ(fp.logits.cols(), head == HeadKind::kCtc ? 21 : 10);
  }
}

TEST(Model, ConfigChecks) {
  ModelConfig cfg;
  cfg.input_bins = 60;  // 60 / 8 is not whole
  EXPECT_THROW(cfg.check(), Error);
  EXPECT_EQ(parse_head("gmp"), HeadKind::kGmp);
  EXPECT_EQ(parse_gating("relu"), Gating::kRelu);
  EXPECT_THROW(parse_head("lstm"), Error);
  const ModelConfig ok;
  EXPECT_EQ(ok.pooled_bins(), 8);
  EXPECT_EQ(ok.rnn_input(), 256);
}

TEST(Model, InferenceIsDeterministic) {
  const auto cfg = micro(HeadKind::kCtc, Gating::kGlu);
  const auto a = init_params<float>(cfg, 8);
  const auto b = init_params<float>(cfg, 8);
  const Matrix<float> x = random_features(8, 8, 1).cast<float>();
  EXPECT_EQ(model_forward(x, a, cfg, false).probs, model_forward(x, b, cfg, false).probs);
  const auto c = init_params<float>(cfg, 9);
  EXPECT_NE(a.dense_w, c.dense_w);
}

TEST(Model, ReluHasNoGateParameters) {
  const auto p = init_params<float>(micro(HeadKind::kCtc, Gating::kRelu), 1);
  const auto q = init_params<float>(micro(HeadKind::kCtc, Gating::kGlu), 1);
  EXPECT_LT(p.parameter_count(), q.parameter_count());
  for (const auto& [name, m] : p.arrays()) EXPECT_EQ(name.find(".v"), std::string::npos);
}

}  // namespace
}  // namespace glutag
