#include <gtest/gtest.h>

#include <cmath>

#include <boost/math/quadrature/tanh_sinh.hpp>

#include "subcond/lamperti.hpp"
#include "subcond/parallel.hpp"
#include "subcond/verify.hpp"

using namespace subcond;

namespace {

// 1/Gamma(1-alpha) + int_0^1 (1 - (1-w)^lam) alpha w^{-1-alpha} dw / Gamma(1-alpha)
double phi_by_levy_measure(double lam, double alpha) {
  boost::math::quadrature::tanh_sinh<double> ts;
  const double c = alpha / std::tgamma(1.0 - alpha);
  const double jumps = ts.integrate(
      [&](double w) { return w <= 0 ? 0.0 : -std::expm1(lam * std::log1p(-w)) / w * c * std::pow(w, -alpha); },
      0.0, 1.0);
  return 1.0 / std::tgamma(1.0 - alpha) + jumps;
}

// Unnormalized Circ jump density; with the 1/Gamma(1-alpha) factor of the
// Levy measure its mass equals the killing rate it replaces.
double circ_density(double w, double alpha) {
  if (w <= 0) return 0.0;
  return alpha * std::pow(w, -alpha) * std::expm1((alpha - 1.0) * std::log1p(-w)) / w;
}

// the piece above 1/2 is integrated in v = 1 - w
double circ_integral(double alpha, double upper) {
  boost::math::quadrature::tanh_sinh<double> ts;
  auto near_one = [&](double v) {
    return v <= 0 ? 0.0 : alpha * std::pow(1.0 - v, -alpha - 1.0) * (std::pow(v, alpha - 1.0) - 1.0);
  };
  const double lo = ts.integrate([&](double w) { return circ_density(w, alpha); }, 0.0, std::min(upper, 0.5));
  if (upper <= 0.5) return lo;
  return lo + ts.integrate(near_one, 1.0 - upper, 0.5);
}

}  // namespace

TEST(Exponents, GammaIdentities) {
  for (int i = 1; i <= 9; ++i) {
    const double a = 0.1 * i;
    EXPECT_NEAR(phi_xi(a - 1.0, a), 0.0, 1e-12);
    EXPECT_NEAR(phi_circ(0.0, a), 0.0, 1e-12);
    EXPECT_NEAR(phi_xi(0.0, a), 1.0 / std::tgamma(1.0 - a), 1e-12);
    EXPECT_NEAR(phi_down(0.0, a), std::tgamma(1.0 + a), 1e-12);
    EXPECT_NEAR(killing_rate(a), phi_xi(0.0, a), 1e-15);
  }
}

TEST(Exponents, LevyMeasureRepresentation) {
  for (double a : {0.2, 0.5, 0.8})
    for (double lam : {0.3, 1.0, 2.5}) EXPECT_NEAR(phi_xi(lam, a), phi_by_levy_measure(lam, a), 1e-9);
}

TEST(Exponents, EsscherShifts) {
  for (double a : {0.3, 0.7})
    for (double lam : {0.5, 2.0}) {
      EXPECT_NEAR(phi_down(lam, a), phi_xi(lam + a, a), 1e-12);
      EXPECT_NEAR(phi_circ(lam, a), phi_xi(lam + a - 1.0, a), 1e-12);
    }
}

TEST(CircJump, MassAndSampler) {
  for (double a : {0.3, 0.5, 0.8}) {
    const double mass = circ_integral(a, 1.0);
    // B(-alpha, alpha) = 0 leaves alpha * (1/alpha)
    EXPECT_NEAR(mass, 1.0, 1e-9);
    RngStream rng(1, static_cast<std::uint64_t>(10 * a));
    std::vector<double> ws;
    for (int i = 0; i < 20000; ++i) ws.push_back(sample_circ_jump(a, rng));
    const auto k = ks_test(ws, [&](double x) {
      if (x <= 0) return 0.0;
      if (x >= 1) return 1.0;
      return circ_integral(a, x) / mass;
    });
    EXPECT_GT(k.p_value, 0.01) << a;
  }
}

TEST(Undershoot, DensityAndCdf) {
  boost::math::quadrature::tanh_sinh<double> ts;
  const double a = 0.4;
  EXPECT_NEAR(ts.integrate([&](double y) { return undershoot_density(y, a); }, 0.0, 0.3), undershoot_cdf(0.3, a), 1e-9);
  EXPECT_EQ(undershoot_cdf(1.2, a), 1.0);
}

TEST(Undershoot, FirstPassageOfStable) {
  const double alpha = 0.5;
  const auto ys = parallel_collect<double>(20000, RngStream(2), [&](RngStream& r, std::size_t) {
    const auto p = sample_stable_adaptive(alpha, 1.0, 0.0, Tilt::None, kInf, r, 0.01);
    return 1.0 - p.values.back();
  });
  EXPECT_GT(ks_test(ys, [&](double y) { return undershoot_cdf(y, alpha); }).p_value, 0.01);
}

// E[e^{lam xi_1}; 1 < zeta] = e^{-Phi(lam)} for xi extracted from X paths
TEST(Transform, ExtractedXiExponent) {
  const double alpha = 0.6;
  const std::vector<double> lams = {0.5, 1.0, 2.0};
  using Acc = std::vector<RunningStats>;
  const auto acc = batched_reduce(
      10000, RngStream(3), Acc(lams.size()),
      [&](Acc& a, RngStream& r, std::size_t) {
        const auto x = sample_stable_adaptive(alpha, 2.0, 0.0, Tilt::None, 1.0, r, 0.01);
        const auto v = lamperti_transform(x, 2.0, alpha);
        const bool alive = v.xi_path.alive_at(1.0 - 1e-9);
        const double xi = alive ? v.xi_at(1.0 - 1e-9) : 0.0;
        for (std::size_t i = 0; i < lams.size(); ++i) a[i].add(alive ? std::exp(lams[i] * xi) : 0.0);
      },
      [](Acc& o, Acc&& p) {
        for (std::size_t i = 0; i < o.size(); ++i) o[i].merge(p[i]);
      });
  for (std::size_t i = 0; i < lams.size(); ++i)
    EXPECT_LT(std::abs(acc[i].mean - std::exp(-phi_xi(lams[i], alpha))), 3 * acc[i].std_error()) << lams[i];
}

TEST(Transform, TiltedExponents) {
  const double alpha = 0.5, lam = 1.0;
  for (Tilt tilt : {Tilt::None, Tilt::Down, Tilt::Circ}) {
    const double h = tilt == Tilt::Circ ? 1e-3 : 0.01;
    const auto acc = batched_reduce(
        10000, RngStream(4, static_cast<std::uint64_t>(tilt)), RunningStats{},
        [&](RunningStats& s, RngStream& r, std::size_t) {
          const auto p = esscher_sample_xi(alpha, tilt, 1.0, r, h);
          s.add(p.killed ? 0.0 : std::exp(lam * p.values.back()));
        },
        [](RunningStats& o, RunningStats&& p) { o.merge(p); });
    double phi = phi_xi(lam, alpha);
    if (tilt == Tilt::Down) phi = phi_down(lam, alpha);
    if (tilt == Tilt::Circ) phi = phi_circ(lam, alpha);
    EXPECT_LT(std::abs(acc.mean - std::exp(-phi)), 3 * acc.std_error() + 2e-3) << to_string(tilt);
  }
}

TEST(Transform, RoundTripWithDrift) {
  RngStream rng(5);
  const auto spec = SubordinatorSpec::compound_poisson_drift(0.5, 2.0, JumpLaw::exponential(3.0));
  for (int i = 0; i < 200; ++i) {
    const auto x = sample_path(spec, 1.0, SampleMode::jump_exact(), rng);
    const double a = x.values.back() + 1.0;
    const auto v = lamperti_transform(x, a, 0.4);
    const auto back = v.reconstruct();
    ASSERT_EQ(back.times.size(), x.times.size());
    for (std::size_t k = 0; k < x.times.size(); ++k) {
      ASSERT_NEAR(back.times[k], x.times[k], 1e-10);
      ASSERT_NEAR(back.values[k], x.values[k], 1e-12);
    }
    // drift segments: xi_at agrees with log(Y/a) mid-segment
    if (x.times.size() > 2) {
      const double tm = 0.5 * (x.times[0] + x.times[1]);
      const double y = a - x.value_at(tm);
      const double sigma = (std::pow(a - x.values[0], 0.6) - std::pow(y, 0.6)) / (0.5 * 0.6);
      ASSERT_NEAR(v.xi_at(sigma), std::log(y / a), 1e-10);
    }
  }
}

TEST(Transform, AdaptivePathsSitOnLampertiGrid) {
  RngStream rng(6);
  const auto x = sample_stable_adaptive(0.7, 1.0, 0.2, Tilt::Down, 0.5, rng, 0.05);
  const auto v = lamperti_transform(x, 1.0, 0.7);
  const auto& ts = v.xi_path.times;
  // a killed path ends at the kill time, inside the last step
  const std::size_t grid = x.killed ? ts.size() - 1 : ts.size();
  for (std::size_t k = 0; k < grid; ++k) EXPECT_NEAR(ts[k], 0.05 * k, 1e-12);
  if (x.killed) {
    EXPECT_GT(ts.back(), ts[grid - 1]);
    EXPECT_LE(ts.back(), 0.05 * grid + 1e-12);
  }
  EXPECT_NEAR(v.xi_path.values[0], std::log(0.8), 1e-15);
}

TEST(Transform, Domain) {
  RngStream rng(1);
  EXPECT_THROW(phi_xi(1.0, 1.0), DomainError);
  EXPECT_THROW(sample_stable_adaptive(0.5, 1.0, 1.0, Tilt::None, 1.0, rng), DomainError);
  PathSample p;
  p.push(0.0, 0.0);
  p.push(1.0, 2.0);
  const auto v = lamperti_transform(p, 1.0, 0.5);
  EXPECT_TRUE(v.xi_path.killed);
}
