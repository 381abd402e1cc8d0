#include <gtest/gtest.h>

#include <cmath>

#include "subcond/conditioning.hpp"

using namespace subcond;

namespace {

double poisson_pmf(int n, double m) {
  if (m == 0) return n == 0 ? 1.0 : 0.0;
  return std::exp(-m + n * std::log(m) - std::lgamma(n + 1.0));
}

}  // namespace

TEST(Weights, InclusiveBarrierAndDensityRatio) {
  const StripLaw p{SubordinatorSpec::poisson(1.0), 2.0, 0.0};
  EXPECT_NEAR(weight_strip(p, 2.0), 1.0 / 3.0, 1e-12);
  EXPECT_EQ(weight_strip(p, 2.5), 0.0);
  EXPECT_NEAR(weight_strip(p, 0.0), 1.0, 1e-12);
  const HitLaw h{SubordinatorSpec::stable(0.5), 1.0, 0.0};
  // u(z) proportional to z^{alpha-1}
  EXPECT_NEAR(hit_weight(h, 0.75), std::pow(0.25, -0.5), 1e-12);
  EXPECT_EQ(hit_weight(h, 1.0), 0.0);
}

TEST(Weights, PathOverloadRespectsLifetime) {
  const StripLaw d{SubordinatorSpec::drift(1.0), 1.0, 0.0};
  PathSample p;
  p.drift = 1.0;
  p.push(0.0, 0.0);
  p.push(1.0, 1.0);
  EXPECT_NEAR(weight_strip(d, p, 0.25), 0.75, 1e-12);
  p.killed = true;
  p.lifetime = 0.5;
  EXPECT_EQ(weight_strip(d, p, 0.75), 0.0);
}

TEST(Terminal, ClosedFormCdfs) {
  EXPECT_NEAR(terminal_cdf({SubordinatorSpec::stable(0.3), 1.0, 0.0}, 0.4), std::pow(0.4, 0.3), 1e-12);
  EXPECT_NEAR(terminal_cdf({SubordinatorSpec::drift(2.0), 4.0, 1.0}, 2.5), 0.5, 1e-12);
  EXPECT_NEAR(terminal_cdf({SubordinatorSpec::poisson(1.0), 3.0, 0.0}, 1.0), 0.5, 1e-12);
}

TEST(Terminal, UniformKillingLevelOfTheDoobChain) {
  for (int a : {2, 3}) {
    const StripLaw law{SubordinatorSpec::poisson(1.0), static_cast<double>(a), 0.0};
    const auto levels = parallel_collect<double>(100000, RngStream(1, a), [&](RngStream& r, std::size_t) {
      return sample_strip(law, StripMethod::DoobChain, r).values.back();
    });
    std::vector<double> counts(a + 1, 0.0), probs(a + 1, 1.0 / (a + 1));
    for (double v : levels) counts.at(static_cast<std::size_t>(v)) += 1;
    EXPECT_GT(chi_square(counts, probs).p_value, 0.01) << a;
  }
}

TEST(Terminal, StableDoobChainMatchesPowerLaw) {
  for (double alpha : {0.3, 0.5, 0.7}) {
    const StripLaw law{SubordinatorSpec::stable(alpha), 1.0, 0.0};
    const auto ys = parallel_collect<double>(20000, RngStream(2, static_cast<std::uint64_t>(alpha * 10)),
                                             [&](RngStream& r, std::size_t) {
                                               return *sample_strip(law, StripMethod::DoobChain, r).terminal;
                                             });
    const auto k = ks_test(ys, [&](double y) { return y <= 0 ? 0.0 : std::pow(std::min(y, 1.0), alpha); });
    EXPECT_LT(k.statistic, 3 * 1.36 / std::sqrt(20000.0)) << alpha;
  }
}

TEST(Terminal, NumericInverseForCompoundPoisson) {
  const StripLaw law{SubordinatorSpec::compound_poisson_drift(1.0, 1.0, JumpLaw::exponential(1.0)), 2.0, 0.0};
  RngStream rng(3);
  std::vector<double> ys;
  for (int i = 0; i < 5000; ++i) ys.push_back(sample_terminal(law, rng));
  const auto spec = law.spec;
  const auto k = ks_test(ys, [&](double y) {
    return potential_closed_form(spec, 0.0, std::clamp(y, 0.0, 2.0)) / potential_closed_form(spec, 0.0, 2.0);
  });
  EXPECT_GT(k.p_value, 0.01);
}

// P-down(X_1 = k, 1 < zeta) = P(N_1 = k) U(a - k)/U(a) from three constructions
TEST(Strip, ThreeMethodsAgreeOnPoisson) {
  const StripLaw law{SubordinatorSpec::poisson(1.0), 2.0, 0.0};
  const int n = 60000;
  using Acc = std::vector<RunningStats>;
  auto run = [&](StripMethod m, std::uint64_t id) {
    return batched_reduce(
        n, RngStream(4, id), Acc(3),
        [&](Acc& a, RngStream& r, std::size_t) {
          const auto p = sample_strip(law, m, r);
          const bool alive = p.alive_at(1.0) && p.horizon() >= 1.0 - 1e-12;
          for (int k = 0; k < 3; ++k) a[k].add(alive && p.value_at(1.0) == k ? p.weight : 0.0);
        },
        [](Acc& o, Acc&& p) {
          for (std::size_t i = 0; i < o.size(); ++i) o[i].merge(p[i]);
        });
  };
  const auto iw = run(StripMethod::ImportanceWeight, 1);
  const auto dc = run(StripMethod::DoobChain, 2);
  const auto pd = run(StripMethod::PathDecomposition, 3);
  for (int k = 0; k < 3; ++k) {
    const double exact = poisson_pmf(k, 1.0) * (3.0 - k) / 3.0;
    EXPECT_LT(std::abs(iw[k].mean - exact), 3 * iw[k].std_error()) << k;
    EXPECT_LT(std::abs(pd[k].mean - exact), 3 * pd[k].std_error()) << k;
    EXPECT_LT(std::abs(dc[k].mean - exact), 3 * dc[k].std_error()) << k;
  }
}

TEST(Strip, PathDecompositionEndsAtTerminal) {
  RngStream rng(5);
  for (const auto& s : {SubordinatorSpec::poisson(2.0), SubordinatorSpec::drift(1.0), SubordinatorSpec::stable(0.5),
                        SubordinatorSpec::compound_poisson_drift(1.0, 1.0, JumpLaw::exponential(1.0))}) {
    const StripLaw law{s, 2.0, 0.0};
    for (int i = 0; i < 200; ++i) {
      const auto p = sample_strip(law, StripMethod::PathDecomposition, rng);
      ASSERT_TRUE(p.killed);
      ASSERT_TRUE(p.terminal.has_value());
      EXPECT_NEAR(p.values.back(), *p.terminal, 1e-12);
      for (std::size_t k = 1; k < p.values.size(); ++k) ASSERT_GE(p.values[k], p.values[k - 1]);
      EXPECT_LE(p.values.back(), law.a);
    }
  }
}

TEST(Strip, UnsupportedCombinations) {
  RngStream rng(1);
  EXPECT_THROW(sample_strip({SubordinatorSpec::gamma(1, 1), 1.0, 0.0}, StripMethod::DoobChain, rng), UnsupportedError);
  EXPECT_THROW(sample_strip({SubordinatorSpec::poisson(1), 1.0, 1.5}, StripMethod::DoobChain, rng), DomainError);
  EXPECT_THROW(sample_hit({SubordinatorSpec::compound_poisson_drift(0.0, 1.0, JumpLaw::exponential(1)), 1.0, 0.0}, rng),
               DomainError);
}

TEST(Hit, DriftAndLatticeEndAtTarget) {
  RngStream rng(6);
  const auto d = sample_hit({SubordinatorSpec::drift(2.0), 3.0, 1.0}, rng);
  EXPECT_NEAR(d.lifetime, 1.0, 1e-15);
  for (int i = 0; i < 100; ++i) {
    const auto p = sample_hit({SubordinatorSpec::poisson(1.0), 4.0, 0.0}, rng);
    EXPECT_EQ(p.values.back(), 4.0);
    EXPECT_TRUE(p.killed);
  }
}

// P-circ(X_t <= c, t < zeta) against unconditioned paths weighted by u(y - X_t)/u(y),
// which is bounded on {X_t <= c}
TEST(Hit, MarginalsAgainstWeightedPaths) {
  struct Case {
    SubordinatorSpec spec;
    double t, c;
  };
  const std::vector<Case> cases = {
      {SubordinatorSpec::stable(0.6), 0.3, 0.5},
      {SubordinatorSpec::compound_poisson_drift(1.0, 1.0, JumpLaw::exponential(1.0)), 0.5, 0.8}};
  int id = 0;
  for (const auto& cs : cases) {
    const HitLaw law{cs.spec, 1.0, 0.0};
    ConditioningConfig cfg;
    cfg.absorb_tol = 1e-4;  // only the law at time t matters here
    const auto hit = batched_reduce(
        20000, RngStream(7, id), RunningStats{},
        [&](RunningStats& s, RngStream& r, std::size_t) {
          const auto p = sample_hit(law, r, cfg);
          s.add(p.alive_at(cs.t) && p.value_at(cs.t) <= cs.c ? 1.0 : 0.0);
        },
        [](RunningStats& o, RunningStats&& p) { o.merge(p); });
    const SampleMode mode = cs.spec.finite_activity() ? SampleMode::jump_exact() : SampleMode::grid(cs.t);
    const auto iw = batched_reduce(
        100000, RngStream(8, id), RunningStats{},
        [&](RunningStats& s, RngStream& r, std::size_t) {
          const double x = sample_path(cs.spec, cs.t, mode, r).value_at(cs.t);
          s.add(x <= cs.c ? hit_weight(law, x) : 0.0);
        },
        [](RunningStats& o, RunningStats&& p) { o.merge(p); });
    ++id;
    EXPECT_LT(std::abs(hit.mean - iw.mean), 3 * std::hypot(hit.std_error(), iw.std_error()))
        << to_string(cs.spec.family) << " " << hit.mean << " " << iw.mean;
  }
}

TEST(Supermartingale, PoissonExpectation) {
  const auto rep = check_supermartingale(SubordinatorSpec::poisson(1.0), 3.0, {0.0, 0.5, 1.0, 2.0}, 50000, RngStream(9));
  EXPECT_TRUE(rep.bounded);
  EXPECT_TRUE(rep.nonincreasing);
  EXPECT_EQ(rep.bound, 4.0);
  for (std::size_t i = 0; i < rep.ts.size(); ++i) {
    double exact = 0.0;
    for (int n = 0; n <= 3; ++n) exact += poisson_pmf(n, rep.ts[i]) * (4 - n);
    EXPECT_LT(std::abs(rep.means[i] - exact), 3 * rep.std_errors[i] + 1e-12) << rep.ts[i];
  }
  const auto st = check_supermartingale(SubordinatorSpec::stable(0.5), 1.0, {0.1, 0.5}, 20000, RngStream(10), true, 0.1);
  EXPECT_TRUE(st.bounded);
}

TEST(KillingLimit, PoissonAndDriftEvents) {
  const std::vector<double> qs = {1.0, 0.3, 0.1, 0.03};
  const StripLaw pois{SubordinatorSpec::poisson(1.0), 3.0, 0.0};
  double e3 = 0.0;
  for (int n = 1; n <= 3; ++n) e3 += poisson_pmf(n, 2.0) * (4.0 - n) / 4.0;
  const std::vector<StoppedEvent> pev = {
      {"empty_at_1", [](const PathSample&) { return 1.0; }, [](const PathSample& p, double T) { return p.value_at(T) == 0; },
       std::exp(-1.0)},
      {"first_jump_before_1", [](const PathSample& p) { return p.times.size() > 1 ? p.times[1] : kInf; },
       [](const PathSample&, double T) { return T <= 1.0; }, (1 - std::exp(-1.0)) * 0.75},
      {"moved_by_2", [](const PathSample&) { return 2.0; }, [](const PathSample& p, double T) { return p.value_at(T) >= 1; },
       e3}};
  for (const auto& ev : pev) {
    const auto r = verify_killing_limit(pois, ev, qs, 100000, RngStream(11));
    EXPECT_LT(std::abs(r.extrapolated.limit - *ev.exact), 0.01) << ev.name;
    EXPECT_LT(std::abs(r.direct_limit - *ev.exact), 3 * r.direct_std_error) << ev.name;
    EXPECT_LT(std::abs(r.weighted - *ev.exact), 3 * r.weighted_std_error + 1e-12) << ev.name;
  }
  const StripLaw drift{SubordinatorSpec::drift(1.0), 1.0, 0.0};
  for (double T : {0.3, 0.5, 0.8}) {
    const StoppedEvent ev{"fixed", [T](const PathSample&) { return T; }, [](const PathSample&, double) { return true; },
                          1.0 - T};
    const auto r = verify_killing_limit(drift, ev, qs, 1000, RngStream(12));
    EXPECT_LT(std::abs(r.extrapolated.limit - (1.0 - T)), 0.01);
    EXPECT_NEAR(r.direct_limit, 1.0 - T, 1e-12);
  }
}
