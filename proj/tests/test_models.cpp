#include <gtest/gtest.h>

#include <cmath>

#include "subcond/models.hpp"
#include "subcond/parallel.hpp"
#include "subcond/verify.hpp"

using namespace subcond;

TEST(LaplaceExponent, ClosedForms) {
  EXPECT_NEAR(laplace_exponent(SubordinatorSpec::stable(0.5), 4.0), 2.0, 1e-14);
  EXPECT_EQ(laplace_exponent(SubordinatorSpec::drift(1.0), 0.0), 0.0);
  EXPECT_NEAR(laplace_exponent(SubordinatorSpec::poisson(1.0), std::log(2.0)), 0.5, 1e-15);
  const auto g = SubordinatorSpec::gamma(2.0, 3.0);
  EXPECT_NEAR(laplace_exponent(g, 1.5), 2.0 * std::log(1.5), 1e-14);
  const auto c = SubordinatorSpec::compound_poisson_drift(0.5, 2.0, JumpLaw::exponential(4.0));
  EXPECT_NEAR(laplace_exponent(c, 2.0), 1.0 + 2.0 * (1.0 - 4.0 / 6.0), 1e-14);
}

TEST(LaplaceExponent, RejectsNegativeArgument) {
  EXPECT_THROW(laplace_exponent(SubordinatorSpec::drift(1.0), -1.0), DomainError);
}

TEST(LaplaceExponent, ConcaveNondecreasingOnGrid) {
  const std::vector<SubordinatorSpec> specs = {
      SubordinatorSpec::drift(2.0), SubordinatorSpec::poisson(1.5), SubordinatorSpec::stable(0.3),
      SubordinatorSpec::gamma(1.0, 2.0),
      SubordinatorSpec::compound_poisson_drift(1.0, 1.0, JumpLaw::gamma(2.0, 1.0))};
  for (const auto& s : specs) {
    double prev = 0.0, prev_slope = kInf;
    for (int i = 1; i <= 200; ++i) {
      const double l = 0.05 * i;
      const double v = laplace_exponent(s, l);
      EXPECT_GE(v, prev);
      const double slope = (v - prev) / 0.05;
      EXPECT_LE(slope, prev_slope + 1e-9);
      prev = v;
      prev_slope = slope;
    }
  }
}

TEST(Spec, Validation) {
  EXPECT_THROW(SubordinatorSpec::stable(1.0), DomainError);
  EXPECT_THROW(SubordinatorSpec::stable(0.0), DomainError);
  EXPECT_THROW(SubordinatorSpec::poisson(0.0), DomainError);
  EXPECT_THROW(SubordinatorSpec::drift(-1.0), DomainError);
  EXPECT_TRUE(SubordinatorSpec::poisson(2.0).lattice_span().has_value());
  EXPECT_FALSE(SubordinatorSpec::poisson(2.0).has_potential_density());
}

TEST(SamplePath, DriftGrid) {
  RngStream rng(1);
  const auto p = sample_path(SubordinatorSpec::drift(1.0), 2.0, SampleMode::grid(0.5), rng);
  ASSERT_EQ(p.values.size(), 5u);
  for (int k = 0; k < 5; ++k) EXPECT_NEAR(p.values[k], 0.5 * k, 1e-15);
}

TEST(SamplePath, JumpExactRejectedForInfiniteActivity) {
  RngStream rng(1);
  EXPECT_THROW(sample_path(SubordinatorSpec::stable(0.5), 1.0, SampleMode::jump_exact(), rng),
               UnsupportedError);
  EXPECT_THROW(sample_path(SubordinatorSpec::gamma(1, 1), 1.0, SampleMode::jump_exact(), rng),
               UnsupportedError);
}

TEST(SamplePath, PoissonJumpCount) {
  const auto spec = SubordinatorSpec::poisson(1.0);
  const auto acc = batched_reduce(
      10000, RngStream(2), RunningStats{},
      [&](RunningStats& s, RngStream& r, std::size_t) {
        const auto p = sample_path(spec, 10.0, SampleMode::jump_exact(), r);
        s.add(static_cast<double>(p.times.size() - 2));
      },
      [](RunningStats& o, RunningStats&& p) { o.merge(p); });
  EXPECT_LT(std::abs(acc.mean - 10.0), 3 * acc.std_error());
}

TEST(SamplePath, MonotoneOnRandomSpecs) {
  RngStream rng(3);
  for (int i = 0; i < 10000; ++i) {
    SubordinatorSpec s;
    switch (i % 5) {
      case 0: s = SubordinatorSpec::drift(0.1 + rng.uniform()); break;
      case 1: s = SubordinatorSpec::poisson(0.1 + 3 * rng.uniform()); break;
      case 2: s = SubordinatorSpec::compound_poisson_drift(rng.uniform(), 0.5 + rng.uniform(), JumpLaw::exponential(1.0)); break;
      case 3: s = SubordinatorSpec::stable(0.05 + 0.9 * rng.uniform()); break;
      default: s = SubordinatorSpec::gamma(0.2 + rng.uniform(), 1.0); break;
    }
    const SampleMode m = s.finite_activity() && (i % 2) ? SampleMode::jump_exact() : SampleMode::grid(0.1);
    const auto p = sample_path(s, 2.0, m, rng);
    for (std::size_t k = 1; k < p.values.size(); ++k) {
      ASSERT_GE(p.values[k], p.values[k - 1]);
      ASSERT_GT(p.times[k], p.times[k - 1]);
    }
  }
}

// -(1/t) log E exp(-lam X_t) against the exponent, N = 1e5
TEST(SamplePath, ExactMarginals) {
  const std::vector<SubordinatorSpec> specs = {
      SubordinatorSpec::drift(1.5), SubordinatorSpec::poisson(2.0),
      SubordinatorSpec::compound_poisson_drift(0.5, 1.0, JumpLaw::gamma(2.0, 3.0)),
      SubordinatorSpec::stable(0.6), SubordinatorSpec::gamma(1.5, 2.0)};
  const std::vector<double> lams = {0.5, 1.0, 2.0};
  int id = 0;
  for (const auto& s : specs) {
    for (double t : {0.5, 1.0}) {
      using Acc = std::vector<RunningStats>;
      const auto acc = batched_reduce(
          100000, RngStream(40, id++), Acc(lams.size()),
          [&](Acc& a, RngStream& r, std::size_t) {
            const SampleMode m = s.finite_activity() ? SampleMode::jump_exact() : SampleMode::grid(t);
            const double x = sample_path(s, t, m, r).values.back();
            for (std::size_t i = 0; i < lams.size(); ++i) a[i].add(std::exp(-lams[i] * x));
          },
          [](Acc& o, Acc&& p) {
            for (std::size_t i = 0; i < o.size(); ++i) o[i].merge(p[i]);
          });
      for (std::size_t i = 0; i < lams.size(); ++i) {
        const double target = std::exp(-t * laplace_exponent(s, lams[i]));
        EXPECT_LE(std::abs(acc[i].mean - target), 3 * acc[i].std_error() + 1e-15)
            << to_string(s.family) << " t=" << t << " lam=" << lams[i];
      }
    }
  }
}

TEST(StableIncrement, LaplaceTransformAndHalfCase) {
  for (double alpha : {0.2, 0.5, 0.8}) {
    RunningStats s;
    RngStream rng(5, static_cast<std::uint64_t>(alpha * 10));
    for (int i = 0; i < 100000; ++i) s.add(std::exp(-sample_stable_increment(alpha, 1.0, rng)));
    EXPECT_LT(std::abs(s.mean - std::exp(-1.0)), 3 * s.std_error()) << alpha;
  }
  // alpha = 1/2: the law of 1/(2 Z^2), i.e. P(S <= x) = 2(1 - Phi(1/sqrt(2x)))
  RngStream rng(6);
  std::vector<double> xs;
  for (int i = 0; i < 100000; ++i) xs.push_back(sample_stable_increment(0.5, 1.0, rng));
  const auto k = ks_test(xs, [](double x) { return std::erfc(1.0 / (2.0 * std::sqrt(x))); });
  EXPECT_GT(k.p_value, 0.01);
}

TEST(StableIncrement, Scaling) {
  const double alpha = 0.5, c = 2.0;
  RngStream r1(7, 1), r2(7, 2);
  std::vector<double> a, b;
  for (int i = 0; i < 20000; ++i) {
    a.push_back(c * sample_stable_increment(alpha, std::pow(c, -alpha), r1));
    b.push_back(sample_stable_increment(alpha, 1.0, r2));
  }
  EXPECT_GT(ks_two_sample(a, b).p_value, 0.01);
}

TEST(StableIncrement, DomainChecks) {
  RngStream rng(1);
  EXPECT_THROW(sample_stable_increment(1.0, 1.0, rng), DomainError);
  EXPECT_THROW(sample_stable_increment(0.5, 0.0, rng), DomainError);
  EXPECT_NO_THROW(sample_stable_increment(0.999, 1.0, rng));
}

TEST(Rng, StreamsReproduceAcrossThreadCounts) {
  RngStream a(11, 4), b(11, 4);
  for (int i = 0; i < 100; ++i) ASSERT_EQ(a(), b());
  auto run = [](unsigned threads) {
    set_thread_count(threads);
    return parallel_collect<double>(3000, RngStream(9), [](RngStream& r, std::size_t) {
      return sample_path(SubordinatorSpec::stable(0.4), 1.0, SampleMode::grid(0.1), r).values.back();
    });
  };
  const auto one = run(1), many = run(8);
  set_thread_count(1);
  ASSERT_EQ(one.size(), many.size());
  for (std::size_t i = 0; i < one.size(); ++i) ASSERT_EQ(one[i], many[i]);
}

TEST(FirstPassage, DriftAndJumps) {
  PathSample p;
  p.drift = 1.0;
  p.push(0.0, 0.0);
  p.push(0.5, 2.0);  // jump at 0.5 from 0.5 to 2.0
  p.push(1.0, 2.5);
  EXPECT_NEAR(first_passage_time(p, 0.25), 0.25, 1e-15);
  EXPECT_NEAR(first_passage_time(p, 1.0), 0.5, 1e-15);
  EXPECT_TRUE(std::isinf(first_passage_time(p, 3.0)));
}
