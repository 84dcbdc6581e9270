#include <gtest/gtest.h>

#include "cnnf/optimizer.hpp"
#include "support/gradcheck.hpp"

using namespace cnnf;

TEST(Sgd, SingleStepArithmetic) {
  Tensor4<double> p({1, 1, 1, 2}, std::vector<double>{1.0, -2.0});
  Tensor4<double> g({1, 1, 1, 2}, std::vector<double>{0.5, 0.25});
  Tensor4<double> v({1, 1, 1, 2}, std::vector<double>{0.1, 0.0});
  SGDConfig cfg{0.1, 0.5, 0.01, 50, 1};
  sgd_step(p, g, v, cfg);
  // v = 0.5*0.1 - 0.1*(0.5 + 0.01*1) = -0.001 ; v = -0.1*(0.25 - 0.02) = -0.023
  EXPECT_NEAR(v[0], -0.001, 1e-15);
  EXPECT_NEAR(p[0], 0.999, 1e-15);
  EXPECT_NEAR(v[1], -0.023, 1e-15);
  EXPECT_NEAR(p[1], -2.023, 1e-15);
}

TEST(Sgd, MomentumAccumulatesOnConstantGradient) {
  Tensor4<double> p({1, 1, 1, 1}, 0.0), g({1, 1, 1, 1}, 1.0), v({1, 1, 1, 1}, 0.0);
  SGDConfig cfg{0.1, 0.5, 0.0, 1, 1};
  double expect_v = 0, expect_p = 0;
  for (int i = 0; i < 20; ++i) {
    sgd_step(p, g, v, cfg);
    expect_v = 0.5 * expect_v - 0.1;
    expect_p += expect_v;
  }
  EXPECT_NEAR(v[0], expect_v, 1e-14);
  EXPECT_NEAR(p[0], expect_p, 1e-13);
  EXPECT_NEAR(v[0], -0.2, 1e-6);  // geometric limit -lr / (1 - momentum)
}

TEST(Sgd, ShapeMismatch) {
  Tensor4<double> p({1, 1, 1, 2}), g({1, 1, 1, 3}), v({1, 1, 1, 2});
  EXPECT_THROW(sgd_step(p, g, v, SGDConfig{}), ShapeError);
}

TEST(Sgd, ConfigValidation) {
  EXPECT_NO_THROW(SGDConfig{}.validate());
  EXPECT_THROW((SGDConfig{0.0}).validate(), InvalidArgument);
  EXPECT_THROW((SGDConfig{0.1, 1.0}).validate(), InvalidArgument);
  EXPECT_THROW((SGDConfig{0.1, 0.5, -1.0}).validate(), InvalidArgument);
  EXPECT_THROW((SGDConfig{0.1, 0.5, 0.0, 0}).validate(), InvalidArgument);
}

TEST(Sgd, FineTuningDefaults) {
  SGDConfig c;
  EXPECT_EQ(c.batch_size, 50u);
  EXPECT_EQ(c.momentum, 0.5);
  EXPECT_EQ(c.epochs, 400u);
  EXPECT_EQ(c.weight_decay, 5e-4);
}

TEST(Schedule, DecaysAfterPatienceWithoutImprovement) {
  LRSchedule s{1e-3, 10.0, 3, 1e-6};
  EXPECT_EQ(schedule_update(s, 0.5), 1e-3);
  EXPECT_EQ(schedule_update(s, 0.5), 1e-3);
  EXPECT_EQ(schedule_update(s, 0.6), 1e-3);
  EXPECT_DOUBLE_EQ(schedule_update(s, 0.5), 1e-4);
  // counter resets after a decay
  EXPECT_DOUBLE_EQ(schedule_update(s, 0.7), 1e-4);
  EXPECT_DOUBLE_EQ(schedule_update(s, 0.4), 1e-4);
  EXPECT_EQ(s.best_val_error, 0.4);
}

TEST(Schedule, NeverBelowMinNorAboveCurrent) {
  LRSchedule s{1e-3, 10.0, 1, 5e-5};
  schedule_update(s, 0.5);
  double prev = s.lr;
  for (int i = 0; i < 10; ++i) {
    const double lr = schedule_update(s, 0.9);
    EXPECT_LE(lr, prev);
    EXPECT_GE(lr, 5e-5);
    prev = lr;
  }
  EXPECT_EQ(prev, 5e-5);
}

TEST(Schedule, MinAboveCurrentDoesNotRaise) {
  LRSchedule s{1e-6, 10.0, 1, 1e-3};
  schedule_update(s, 0.5);
  EXPECT_EQ(schedule_update(s, 0.5), 1e-6);
}

TEST(ApplyGradients, SkipsFrozenAndBuffers) {
  auto net = set_trainable(insert_batchnorm(build_mini_cnnf<double>(7, 1, 16, 32)), {"conv1", "fc6"});
  auto before = net;
  Gradients<double> g;
  for (auto& p : net.parameters()) g.emplace(p.name, Tensor4<double>(p.tensor->shape(), 1.0));
  VelocityState<double> vel;
  apply_gradients(net, g, vel, SGDConfig{0.1, 0.0, 0.0}, 0.1);
  auto pa = before.parameters(), pb = net.parameters();
  for (std::size_t i = 0; i < pa.size(); ++i) {
    const bool frozen = pa[i].name.rfind("conv1.", 0) == 0 || pa[i].name.rfind("fc6.", 0) == 0;
    if (frozen || pa[i].buffer) {
      EXPECT_TRUE(testkit::bitwise_equal(*pa[i].tensor, *pb[i].tensor)) << pa[i].name;
      EXPECT_FALSE(vel.count(pa[i].name)) << pa[i].name;
    } else {
      for (std::size_t j = 0; j < pa[i].tensor->size(); ++j)
        EXPECT_NEAR((*pb[i].tensor)[j], (*pa[i].tensor)[j] - 0.1, 1e-12) << pa[i].name;
      EXPECT_TRUE(vel.count(pa[i].name)) << pa[i].name;
    }
  }
}
