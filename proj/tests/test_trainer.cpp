#include <gtest/gtest.h>

#include "cnnf/checkpoint.hpp"
#include "cnnf/trainer.hpp"
#include "support/gradcheck.hpp"

using namespace cnnf;
using testkit::bitwise_equal;

namespace {

// Class-dependent mean shift so the tiny network has something to learn.
LabeledSet<float> toy_set(std::size_t per_class, std::uint64_t seed) {
  LabeledSet<float> s;
  s.images = fill_gaussian<float>({7 * per_class, 16, 16, 3}, 0, 1, seed);
  for (std::size_t i = 0; i < 7 * per_class; ++i) {
    const int c = int(i % 7);
    s.labels.push_back(c);
    for (auto& v : s.images.item(i).subspan(std::size_t(c) * 3, 3)) v += 3.0f;
  }
  return s;
}

Network<float> toy_net(std::uint64_t seed = 1) {
  return insert_batchnorm(build_mini_cnnf<float>(7, seed, 16, 32, 0.05));
}

SGDConfig toy_cfg(std::size_t epochs) { return SGDConfig{0.01, 0.5, 5e-4, 5, epochs}; }

}  // namespace

TEST(Trainer, FrozenLayersStayBitwiseIdentical) {
  auto net = set_trainable(toy_net(), conv_layer_names());
  const auto before = net;
  TrainState<float> st;
  st.schedule.lr = 0.01;
  train(net, toy_set(3, 1), toy_set(1, 2), toy_cfg(2), st);
  for (const auto& name : conv_layer_names()) {
    const auto& a = std::get<ConvParams<float>>(before.layer(name).params);
    const auto& b = std::get<ConvParams<float>>(net.layer(name).params);
    EXPECT_TRUE(bitwise_equal(a.weights, b.weights)) << name;
    EXPECT_TRUE(bitwise_equal(a.bias, b.bias)) << name;
  }
  EXPECT_FALSE(bitwise_equal(std::get<FcParams<float>>(before.layer("fc8").params).weights,
                             std::get<FcParams<float>>(net.layer("fc8").params).weights));
  // BN running statistics still move: they are buffers, not trained weights
  EXPECT_GT(std::get<BnParams<float>>(net.layer("bn1").params).stat_updates, 0u);
  for (const auto& [name, v] : st.velocity) EXPECT_NE(name.rfind("conv", 0), 0u) << name;
}

TEST(Trainer, HistoryAndCallback) {
  auto net = toy_net();
  TrainState<float> st;
  st.schedule.lr = 0.01;
  std::vector<std::size_t> seen;
  const auto h = train(net, toy_set(3, 1), toy_set(1, 2), toy_cfg(3), st,
                       EpochCallback<float>([&](const EpochRecord& r, Network<float>&, const TrainState<float>& s) {
                         seen.push_back(r.epoch);
                         EXPECT_EQ(s.epoch, r.epoch);
                       }));
  ASSERT_EQ(h.size(), 3u);
  EXPECT_EQ(seen, (std::vector<std::size_t>{1, 2, 3}));
  EXPECT_EQ(st.step, 3u * 5u);  // 21 items, batch 5
  for (const auto& r : h) {
    EXPECT_GE(r.train_top1_error, 0.0);
    EXPECT_LE(r.val_top1_error, 1.0);
    EXPECT_EQ(r.lr, 0.01);
  }
}

TEST(Trainer, DivergenceIsReported) {
  auto net = toy_net();
  TrainState<float> st;
  st.schedule.lr = 1e30;
  auto cfg = toy_cfg(3);
  cfg.lr = 1e30;
  try {
    train(net, toy_set(3, 1), toy_set(1, 2), cfg, st);
    FAIL() << "expected divergence";
  } catch (const DivergenceError& e) {
    EXPECT_GE(e.epoch(), 1u);
    EXPECT_GE(e.batch(), 1u);
    EXPECT_NE(std::string(e.what()).find("epoch"), std::string::npos);
  }
}

TEST(Trainer, NonFiniteInputDiverges) {
  auto net = toy_net();
  auto x = fill_gaussian<float>({2, 16, 16, 3}, 0, 1, 3);
  x[5] = std::numeric_limits<float>::quiet_NaN();
  VelocityState<float> vel;
  const std::vector<int> y{0, 1};
  EXPECT_THROW(train_step(net, x, std::span<const int>(y), vel, toy_cfg(1), 0.01, 0), DivergenceError);
}

TEST(Trainer, EmptySets) {
  auto net = toy_net();
  TrainState<float> st;
  EXPECT_THROW(train(net, LabeledSet<float>{}, toy_set(1, 2), toy_cfg(1), st), DataError);
  EXPECT_THROW(train(net, toy_set(1, 2), LabeledSet<float>{}, toy_cfg(1), st), DataError);
  EXPECT_THROW(evaluate_top1(net, LabeledSet<float>{}), DataError);
}

TEST(Trainer, ResumeMatchesUninterruptedRun) {
  const auto tr = toy_set(3, 1), va = toy_set(1, 2);
  auto cfg = toy_cfg(4);
  TrainState<float> s0;
  s0.seed = 99;
  s0.schedule = LRSchedule{0.01, 10.0, 1, 1e-4};  // patience 1 so the lr changes mid-run

  auto full = toy_net();
  auto sf = s0;
  const auto hf = train(full, tr, va, cfg, sf);

  auto part = toy_net();
  auto sp = s0;
  cfg.epochs = 2;
  train(part, tr, va, cfg, sp);
  const auto bytes = save(make_checkpoint(part, &sp));
  const auto ck = load(bytes);
  auto resumed = network_from_checkpoint<float>(ck);
  auto sr = *train_state_from_checkpoint<float>(ck);
  cfg.epochs = 4;
  const auto hr = train(resumed, tr, va, cfg, sr);

  ASSERT_EQ(hr.size(), 2u);
  EXPECT_EQ(hr[1].val_top1_error, hf[3].val_top1_error);
  EXPECT_EQ(hr[1].lr, hf[3].lr);
  EXPECT_EQ(sr.step, sf.step);
  EXPECT_EQ(sr.schedule.lr, sf.schedule.lr);
  auto pa = full.parameters(), pb = resumed.parameters();
  ASSERT_EQ(pa.size(), pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) EXPECT_TRUE(bitwise_equal(*pa[i].tensor, *pb[i].tensor)) << pa[i].name;
}

TEST(Trainer, PredictLogitsChunkingDoesNotMatter) {
  const auto net = toy_net();
  const auto x = fill_gaussian<float>({10, 16, 16, 3}, 0, 1, 5);
  EXPECT_TRUE(bitwise_equal(predict_logits(net, x, 3), predict_logits(net, x, 64)));
}
