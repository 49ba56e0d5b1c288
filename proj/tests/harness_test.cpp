#include "tlb/harness.hpp"

#include <cmath>
#include <numeric>

#include <gtest/gtest.h>

namespace tlb {
namespace {

Instance separated_instance(double noise) {
  Matrix arms(4, 2);
  arms << 1, 0, 0, 1, -1, 0, 0, -1;
  Vector theta(2);
  theta << 0.8, -0.6;
  return make_instance(arms, theta, 0.0, 0.05, noise);
}

Classification classification_with(const Vector& means, double threshold) {
  Classification c;
  c.estimated_means = means;
  for (Index i = 0; i < means.size(); ++i) {
    if (means[i] >= threshold) c.above.push_back(i);
  }
  return c;
}

TEST(ComputeLoss, Definition) {
  Matrix arms(3, 1);
  arms << 1.0, -1.0, 0.0;
  // means (0.5, -0.5, 0), tau = 0, eps = 0.1: arm 2 is inside the band.
  const Instance inst = make_instance(arms, Vector::Constant(1, 0.5), 0.0, 0.1);
  const GroundTruth truth = ground_truth(inst);

  EXPECT_EQ(compute_loss(truth, classification_with(truth.means, 0.0)), 0);

  Vector wrong = truth.means;
  wrong[0] = -0.2;  // mu = tau + 5 eps placed below
  EXPECT_EQ(compute_loss(truth, classification_with(wrong, 0.0)), 1);

  Vector band_low = truth.means;
  band_low[2] = -0.01;
  EXPECT_EQ(compute_loss(truth, classification_with(band_low, 0.0)), 0);
  Vector band_high = truth.means;
  band_high[2] = 0.01;
  EXPECT_EQ(compute_loss(truth, classification_with(band_high, 0.0)), 0);

  Vector below_wrong = truth.means;
  below_wrong[1] = 0.3;
  EXPECT_EQ(compute_loss(truth, classification_with(below_wrong, 0.0)), 1);

  EXPECT_THROW(compute_loss(truth, classification_with(Vector::Zero(2), 0.0)),
               std::invalid_argument);
}

TEST(RunEpisode, BoundaryBudgetPullsEachArmOnce) {
  const Instance inst = separated_instance(1.0);
  Rng rng(1);
  for (const char* name : {"linear_apt", "apt", "random", "ucbe(0)"}) {
    // UCBE needs T > K for its parameter; use K + 1 there.
    const long budget = std::string(name) == "ucbe(0)" ? 5 : 4;
    const EpisodeResult r = run_episode(inst, PolicySpec::parse(name), budget, rng);
    EXPECT_EQ(std::accumulate(r.pull_counts.begin(), r.pull_counts.end(), 0L), budget);
    for (long c : r.pull_counts) EXPECT_GE(c, 1);
  }
}

TEST(RunEpisode, RejectsBudgetBelowArmCount) {
  const Instance inst = separated_instance(1.0);
  Rng rng(1);
  try {
    run_episode(inst, PolicySpec::parse("linear_apt"), 3, rng);
    FAIL();
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("budget 3 < arm count 4"), std::string::npos);
  }
}

TEST(RunEpisode, SeedDeterminism) {
  Rng instance_rng(3);
  const Instance inst = make_synthetic_instance(5, 20, 0.0, 0.01, instance_rng);
  for (const char* name : {"linear_apt", "apt", "random", "ucbe(-1)"}) {
    Rng a(77), b(77);
    const EpisodeResult x = run_episode(inst, PolicySpec::parse(name), 120, a);
    const EpisodeResult y = run_episode(inst, PolicySpec::parse(name), 120, b);
    EXPECT_EQ(x.pull_counts, y.pull_counts);
    EXPECT_EQ(x.classification.estimated_means, y.classification.estimated_means);
    EXPECT_EQ(x.loss, y.loss);
  }
}

TEST(RunEpisode, ZeroNoiseSeparatedInstanceHasNoLoss) {
  const Instance inst = separated_instance(1e-12);
  Rng rng(4);
  for (const char* name : {"linear_apt", "apt", "random", "ucbe(0)"}) {
    EXPECT_EQ(run_episode(inst, PolicySpec::parse(name), 20, rng).loss, 0) << name;
  }
}

TEST(RunEpisode, LossIsRecomputable) {
  Rng rng(6);
  for (int trial = 0; trial < 50; ++trial) {
    const Instance inst = make_synthetic_instance(3, 10, 0.0, 0.05, rng);
    const GroundTruth truth = ground_truth(inst);
    const EpisodeResult r = run_episode(inst, truth, PolicySpec::parse("linear_apt"), 40, rng);
    ASSERT_EQ(compute_loss(truth, r.classification), r.loss);
    ASSERT_EQ(std::accumulate(r.pull_counts.begin(), r.pull_counts.end(), 0L), 40);
  }
}

TEST(RunEpisode, UcbeRefusesInfiniteComplexity) {
  Matrix arms(2, 1);
  arms << 0.0, 1.0;
  const Instance inst = make_instance(arms, Vector::Ones(1), 0.0, 0.0);
  Rng rng(0);
  EXPECT_THROW(run_episode(inst, PolicySpec::parse("ucbe(0)"), 10, rng), std::invalid_argument);
  EXPECT_NO_THROW(run_episode(inst, PolicySpec::parse("linear_apt"), 10, rng));
}

TEST(ZeroNoise, LinearAptClassifiesPerfectlyWithEnoughBudget) {
  Rng rng(2024);
  int checked = 0;
  while (checked < 100) {
    const Index d = std::uniform_int_distribution<Index>(1, 5)(rng);
    Instance inst = make_synthetic_instance(d, 10, 0.0, 0.05, rng);
    inst.noise_scale = 1e-12;
    const GroundTruth truth = ground_truth(inst);
    if (((truth.means.array() - inst.threshold).abs() < inst.precision).any()) continue;
    const long budget = 10 + 10 * static_cast<long>(d) + 200;
    ASSERT_EQ(run_episode(inst, truth, PolicySpec::parse("linear_apt"), budget, rng).loss, 0)
        << "instance " << checked;
    ++checked;
  }
}

TEST(LossBound, ClosedFormValues) {
  const BoundValue deep = linear_apt_loss_bound(1.0, 1600, 1, 1.0, 0.0);
  EXPECT_TRUE(deep.valid);
  EXPECT_NEAR(deep.value / 5.9558416376093583767e-41, 1.0, 1e-12);
  EXPECT_NEAR(deep.log_value, std::log(1601.0) - 100.0, 1e-12);

  const BoundValue mid = linear_apt_loss_bound(2.0, 1000, 2, std::sqrt(2.0), 0.5);
  EXPECT_TRUE(mid.valid);
  EXPECT_NEAR(mid.value, 0.0047315014595471196, 1e-15);

  const double radius = std::sqrt(1000.0 / (16.0 * 2.0));
  const BoundValue edge = linear_apt_loss_bound(2.0, 1000, 3, 1.5, radius);
  EXPECT_FALSE(edge.valid);
  EXPECT_NEAR(edge.value, 1.0 + 1000.0 * 2.25, 1e-9);

  EXPECT_THROW(linear_apt_loss_bound(0.0, 10, 1, 1.0, 0.0), std::invalid_argument);
  EXPECT_THROW(linear_apt_loss_bound(1.0, 0, 1, 1.0, 0.0), std::invalid_argument);
  EXPECT_THROW(linear_apt_loss_bound(1.0, 10, 0, 1.0, 0.0), std::invalid_argument);
  EXPECT_THROW(linear_apt_loss_bound(1.0, 10, 1, 0.0, 0.0), std::invalid_argument);
}

TEST(LossBound, ValidImpliesPositiveFinite) {
  Rng rng(10);
  std::uniform_real_distribution<double> u(0.01, 50.0);
  for (int i = 0; i < 1000; ++i) {
    const BoundValue b = linear_apt_loss_bound(u(rng), 1 + static_cast<long>(u(rng) * 100), 1 + i % 20,
                                               u(rng), u(rng) / 10.0);
    if (b.valid) {
      ASSERT_GT(b.value, 0.0);
      ASSERT_TRUE(std::isfinite(b.value));
    }
  }
}

TEST(MonteCarlo, SingleReplication) {
  MonteCarloConfig cfg;
  cfg.instance = SyntheticSpec{5, 20, 0.0, 0.01};
  cfg.budget = 20;
  cfg.replications = 1;
  cfg.master_seed = 5;
  const ExpectedLossEstimate est = monte_carlo(cfg);
  EXPECT_TRUE(est.mean_loss == 0.0 || est.mean_loss == 1.0);
  EXPECT_EQ(est.stderr_loss, 0.0);
  EXPECT_FALSE(est.bound.has_value());
}

TEST(MonteCarlo, ThreadCountDoesNotChangeResults) {
  MonteCarloConfig cfg;
  cfg.instance = SyntheticSpec{5, 20, 0.0, 0.01};
  cfg.policy = PolicySpec::parse("random");
  cfg.budget = 60;
  cfg.replications = 300;
  cfg.master_seed = 99;
  cfg.keep_episodes = true;
  cfg.threads = 1;
  const ExpectedLossEstimate one = monte_carlo(cfg);
  cfg.threads = 8;
  const ExpectedLossEstimate eight = monte_carlo(cfg);
  EXPECT_EQ(one.failures, eight.failures);
  EXPECT_EQ(one.mean_loss, eight.mean_loss);
  ASSERT_EQ(one.episodes.size(), eight.episodes.size());
  for (std::size_t r = 0; r < one.episodes.size(); ++r) {
    ASSERT_EQ(one.episodes[r].pull_counts, eight.episodes[r].pull_counts);
    ASSERT_EQ(one.episodes[r].seed, eight.episodes[r].seed);
  }
  EXPECT_DOUBLE_EQ(one.mean_loss * one.replications, static_cast<double>(one.failures));
  EXPECT_DOUBLE_EQ(one.stderr_loss,
                   std::sqrt(one.mean_loss * (1.0 - one.mean_loss) / one.replications));
}

TEST(MonteCarlo, FixedModeReportsBoundAndComplexity) {
  MonteCarloConfig cfg;
  cfg.instance = SyntheticSpec{2, 5, 0.0, 0.1};
  cfg.mode = ResampleMode::FixedInstance;
  cfg.budget = 50;
  cfg.replications = 20;
  cfg.master_seed = 8;
  cfg.keep_episodes = true;
  const ExpectedLossEstimate est = monte_carlo(cfg);
  ASSERT_TRUE(est.complexity.has_value());
  ASSERT_TRUE(est.bound.has_value());
  const Instance inst = fixed_instance(cfg.instance, cfg.master_seed);
  const GroundTruth truth = ground_truth(inst);
  EXPECT_EQ(*est.complexity, truth.complexity);
  // every replication used the same instance
  for (const auto& ep : est.episodes) {
    ASSERT_EQ(compute_loss(truth, ep.classification), ep.loss);
  }
}

TEST(MonteCarlo, PropagatesFirstFailingReplication) {
  Matrix arms(2, 1);
  arms << 0.0, 1.0;
  MonteCarloConfig cfg;
  cfg.instance = FixedSpec{make_instance(arms, Vector::Ones(1), 0.0, 0.0)};
  cfg.policy = PolicySpec::parse("ucbe(0)");
  cfg.budget = 10;
  cfg.replications = 50;
  cfg.threads = 4;
  try {
    monte_carlo(cfg);
    FAIL();
  } catch (const ReplicationError& e) {
    EXPECT_EQ(e.replication(), 0);
  }
  cfg.replications = 0;
  EXPECT_THROW(monte_carlo(cfg), std::invalid_argument);
}

}  // namespace
}  // namespace tlb
