#include <gtest/gtest.h>

#include <cmath>

#include <boost/math/quadrature/tanh_sinh.hpp>

#include "subcond/ladderbox.hpp"

using namespace subcond;

namespace {

// E[min(S_a, b)] for standard BM, from P(S_a > x) = erfc(x / sqrt(2a))
double expected_capped_max(double a, double b) {
  return b * std::erfc(b / std::sqrt(2 * a)) + std::sqrt(2 * a / kPi) * -std::expm1(-b * b / (2 * a));
}

// joint density of (S_T, X_T) for standard BM
double max_endpoint_density(double T, double m, double y) {
  const double z = 2 * m - y;
  return 2 * z / std::sqrt(2 * kPi * T * T * T) * std::exp(-z * z / (2 * T));
}

}  // namespace

TEST(Entrance, ScalingAndFirstPassage) {
  for (double s : {0.3, 1.0})
    for (double y : {0.2, 1.5}) EXPECT_NEAR(entrance_density_bm(4 * s, 2 * y), entrance_density_bm(s, y) / 4, 1e-15);
  boost::math::quadrature::tanh_sinh<double> ts;
  // tau_y is finite almost surely
  const double total = ts.integrate([](double s) { return s <= 0 ? 0.0 : entrance_density_bm(s, 0.7); }, 0.0, kInf);
  EXPECT_NEAR(total, 1.0, 1e-9);
  const double mass = ts.integrate([](double y) { return entrance_density_bm(0.4, y); }, 0.1, 0.9);
  EXPECT_NEAR(entrance_mass_bm(0.4, 0.1, 0.9), mass, 1e-12);
}

TEST(Potential, UnboundedHeightLimit) {
  for (double a : {0.5, 1.0, 3.0}) {
    LadderBoxLaw law{a, kInf};
    EXPECT_NEAR(V_box(law), std::sqrt(2 * a / kPi), 1e-8);
  }
}

TEST(Potential, AgainstCappedMaximum) {
  for (double b : {0.3, 1.0, 2.0}) EXPECT_NEAR(V_box({1.0, b}), expected_capped_max(1.0, b), 1e-9);
  // with killing, against a direct double integral
  boost::math::quadrature::tanh_sinh<double> ts;
  const double q = 0.7;
  const double direct = ts.integrate(
      [&](double s) { return s <= 0 ? 0.0 : std::exp(-q * s) * entrance_mass_bm(s, 0.0, 1.2); }, 0.0, 2.0);
  EXPECT_NEAR(V_box({2.0, 1.2}, q), direct, 1e-9);
}

TEST(Potential, CappedMaximumBySkeleton) {
  const LadderBoxLaw law{1.0, 0.8, 1e-3};
  const auto acc = batched_reduce(
      20000, RngStream(11), RunningStats{},
      [&](RunningStats& s, RngStream& r, std::size_t) {
        Skeleton sk;
        while (sk.t < law.a - 1e-12) sk.step(law.skeleton_dt, r);
        s.add(std::min(sk.s, law.b));
      },
      [](RunningStats& o, RunningStats&& p) { o.merge(p); });
  EXPECT_LT(std::abs(acc.mean - V_box(law)), 3 * acc.std_error());
}

TEST(JointLaw, Normalized) {
  const LadderBoxLaw law{1.0, 1.5};
  boost::math::quadrature::tanh_sinh<double> ts;
  // the s-marginal at fixed y integrates to P(tau_y <= a) = erfc(y / sqrt(2a))
  const double y = 0.6;
  const double inner = ts.integrate([&](double s) { return s <= 0 ? 0.0 : g_S_joint_density(law, s, y); }, 0.0, law.a);
  EXPECT_NEAR(inner * V_box(law), std::erfc(y / std::sqrt(2 * law.a)), 1e-10);
  const double total = ts.integrate([&](double u) { return std::erfc(u / std::sqrt(2 * law.a)); }, 0.0, law.b) / V_box(law);
  EXPECT_NEAR(total, 1.0, 1e-10);
  EXPECT_EQ(g_S_joint_density(law, 1.2, 0.5), 0.0);
}

TEST(JointLaw, BoxPairHistogram) {
  const LadderBoxLaw law{1.0, 1.0, 1e-3};
  const auto draws = parallel_collect<std::optional<std::pair<double, double>>>(
      20000, RngStream(12), [&](RngStream& r, std::size_t) { return sample_box_pair(law, r); });
  std::vector<std::pair<double, double>> pairs;
  for (const auto& d : draws)
    if (d) pairs.push_back(*d);
  // acceptance rate is V / b
  EXPECT_NEAR(static_cast<double>(pairs.size()) / draws.size(), V_box(law) / law.b, 0.015);
  std::vector<double> e;
  for (int i = 0; i <= 6; ++i) e.push_back(i / 6.0);
  const double V = V_box(law);
  const auto c = chi_square_grid(pairs, [&](double s0, double s1, double y0, double y1) { return box_measure(s0, s1, y0, y1) / V; },
                                 e, e);
  EXPECT_GT(c.p_value, 0.001) << c.statistic;
}

TEST(PreSupremum, HarmonicIdentityAndStepHalving) {
  const LadderBoxLaw law{1.0, 1.0};
  const double s = 0.8;
  const std::vector<double> ts = {s / 4, s / 2, 3 * s / 4};
  const double h0 = h_s_box(law, s, 0.0, 0.0, 0.0);
  auto run = [&](double dt, std::uint64_t seed) {
    using Acc = std::vector<RunningStats>;
    return batched_reduce(
        40000, RngStream(seed), Acc(ts.size()),
        [&](Acc& a, RngStream& r, std::size_t) {
          Skeleton sk;
          for (std::size_t i = 0; i < ts.size(); ++i) {
            while (sk.t < ts[i] - 1e-12) sk.step(dt, r);
            a[i].add(sk.s < law.b ? h_s_box(law, s, ts[i], sk.s - sk.x, sk.x) : 0.0);
          }
        },
        [](Acc& o, Acc&& p) {
          for (std::size_t i = 0; i < o.size(); ++i) o[i].merge(p[i]);
        });
  };
  const auto coarse = run(2e-3, 13), fine = run(1e-3, 14);
  for (std::size_t i = 0; i < ts.size(); ++i) {
    EXPECT_LT(std::abs(fine[i].mean - h0), 3 * fine[i].std_error()) << ts[i];
    const double se = std::hypot(coarse[i].std_error(), fine[i].std_error());
    EXPECT_LT(std::abs(coarse[i].mean - fine[i].mean), 3 * se) << ts[i];
  }
}

TEST(PreSupremum, WeightedEndpointLaw) {
  const LadderBoxLaw law{1.0, 1.0, 2e-3};
  const double s = 0.6, T = 0.3;
  const double h0 = h_s_box(law, s, 0.0, 0.0, 0.0);
  auto exact_cdf = [&](double c) {
    auto inner = [&](double y) {
      return adaptive_simpson(
          [&](double m) { return max_endpoint_density(T, m, y) * h_s_box(law, s, T, m - y, y) / h0; },
          std::max(0.0, y), law.b, 1e-11);
    };
    return adaptive_simpson(inner, -8 * std::sqrt(T), c, 1e-10);
  };
  const std::vector<double> cs = {-0.5, 0.0, 0.4};
  using Acc = std::vector<RunningStats>;
  const auto acc = batched_reduce(
      20000, RngStream(15), Acc(cs.size() + 1),
      [&](Acc& a, RngStream& r, std::size_t) {
        const auto p = sample_pre_supremum(law, s, T, r);
        for (std::size_t i = 0; i < cs.size(); ++i) a[i].add(p.values.back() <= cs[i] ? p.weight : 0.0);
        a.back().add(p.weight);
      },
      [](Acc& o, Acc&& p) {
        for (std::size_t i = 0; i < o.size(); ++i) o[i].merge(p[i]);
      });
  EXPECT_LT(std::abs(acc.back().mean - 1.0), 3 * acc.back().std_error());
  for (std::size_t i = 0; i < cs.size(); ++i)
    EXPECT_LT(std::abs(acc[i].mean - exact_cdf(cs[i])), 3 * acc[i].std_error()) << cs[i];
}

TEST(PostSupremum, BesselMarginal) {
  boost::math::quadrature::tanh_sinh<double> ts;
  EXPECT_NEAR(ts.integrate([](double x) { return bes3_density(0.7, x); }, 0.0, 1.1), bes3_cdf(0.7, 1.1), 1e-12);
  std::vector<double> xs;
  RngStream rng(16);
  for (int i = 0; i < 20000; ++i) xs.push_back(sample_post_supremum(1.0, 0.25, rng).values.back());
  EXPECT_GT(ks_test(xs, [](double x) { return bes3_cdf(1.0, x); }).p_value, 0.01);
  EXPECT_NEAR(post_supremum_cdf(1e-10, 0.5, 0.8), bes3_cdf(0.5, 0.8), 1e-4);
  EXPECT_NEAR(post_supremum_cdf(0.0, 0.5, 0.8), bes3_cdf(0.5, 0.8), 1e-15);
}

// E_x[f(R_t)] for Bessel(3) equals E_x[f(B_t) B_t / x; t < T_0]
TEST(PostSupremum, HTransformOfKilledBrownianMotion) {
  const double x0 = 1.0, t = 0.5, c = 1.2, dt = 1e-3;
  const auto killed = batched_reduce(
      20000, RngStream(17), RunningStats{},
      [&](RunningStats& s, RngStream& r, std::size_t) {
        double x = x0;
        for (double u = 0; u < t - 1e-12; u += dt) {
          const double x1 = x + std::sqrt(dt) * r.normal();
          // bridge crossing of 0
          if (x1 <= 0 || r.exponential() > 2 * x * x1 / dt) {
            s.add(0.0);
            return;
          }
          x = x1;
        }
        s.add(x <= c ? x / x0 : 0.0);
      },
      [](RunningStats& o, RunningStats&& p) { o.merge(p); });
  const auto bes = batched_reduce(
      20000, RngStream(18), RunningStats{},
      [&](RunningStats& s, RngStream& r, std::size_t) {
        s.add(sample_post_supremum(t, t, r, x0).values.back() <= c ? 1.0 : 0.0);
      },
      [](RunningStats& o, RunningStats&& p) { o.merge(p); });
  EXPECT_LT(std::abs(killed.mean - bes.mean), 3 * std::hypot(killed.std_error(), bes.std_error()));
}

TEST(BoxLimit, ExponentialKilling) {
  const LadderBoxLaw law{1.0, 1.0};
  BoxLimitConfig cfg;
  cfg.dt = 2e-3;
  const auto rows = verify_box_limit(law, {1.0, 0.3}, 20000, RngStream(19), cfg);
  ASSERT_EQ(rows.size(), 2u);
  for (const auto& r : rows) {
    EXPECT_FALSE(r.low_acceptance);
    EXPECT_LT(std::abs(r.ratio - 1.0), 3 * r.ratio_std_error + 0.01) << r.q;
    EXPECT_GT(r.chi2_p_finite_q, 0.001) << r.q;
    EXPECT_LT(std::abs(r.independence_z), 3.5) << r.q;
    EXPECT_GT(r.post_ks_p_finite_q, 0.001) << r.q;
  }
  EXPECT_THROW(verify_box_limit(law, {0.1, 1.0}, 10, RngStream(1)), DomainError);
}

TEST(BoxLimit, Domain) {
  EXPECT_THROW(V_box({-1.0, 1.0}), DomainError);
  EXPECT_THROW(h_s_box({1.0, 1.0}, 0.5, 0.5, 0.0, 0.0), DomainError);
  EXPECT_EQ(h_s_box({1.0, 1.0}, 0.5, 0.1, 0.6, 0.5), 0.0);
  RngStream rng(1);
  EXPECT_THROW(sample_pre_supremum({1.0, 1.0}, 1.5, 0.5, rng), DomainError);
}
