#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <utility>
#include <vector>

#include "common.hpp"
#include "models.hpp"
#include "numerics.hpp"
#include "parallel.hpp"
#include "verify.hpp"

// Standard Brownian motion with the local time at the supremum normalized so
// that the ascending ladder height is a unit drift: V(x) = x, L = S and the
// inverse local time is the first-passage process, kappa(q, 0) = sqrt(2q).
namespace subcond {

struct LadderBoxLaw {
  double a = 1.0;
  double b = 1.0;
  double skeleton_dt = 1e-4;

  void validate() const {
    require(a > 0 && b > 0, "ladderbox: a and b must be positive");
    require(skeleton_dt > 0 && skeleton_dt < a, "ladderbox: skeleton_dt must lie in (0, a)");
  }
};

// q*_s(y): density of n(eps_s in dy, s < zeta), equal to the first-passage density of y at s.
inline double entrance_density_bm(double s, double y) {
  require(s > 0 && y > 0, "entrance_density_bm: need s, y > 0");
  return std::exp(std::log(y) - y * y / (2 * s) - 1.5 * std::log(s)) / std::sqrt(2 * kPi);
}

// int_{y0}^{y1} q*_s(y) dy
inline double entrance_mass_bm(double s, double y0, double y1) {
  require(s > 0 && 0 <= y0 && y0 <= y1, "entrance_mass_bm: need s > 0, 0 <= y0 <= y1");
  const double ls = 0.5 * std::log(s);
  const double e1 = std::isinf(y1) ? 0.0 : std::exp(-y1 * y1 / (2 * s) - ls);
  return (std::exp(-y0 * y0 / (2 * s) - ls) - e1) / std::sqrt(2 * kPi);
}

inline double kappa_bm(double q) {
  require(q >= 0, "kappa_bm: q must be >= 0");
  return std::sqrt(2 * q);
}

// int_{[s0,s1] x [y0,y1]} e^{-qs} q*_s(y) ds dy, in s = u^2 to remove the
// s^{-1/2} singularity at 0.
inline double box_measure(double s0, double s1, double y0, double y1, double q = 0.0, double tol = 1e-12) {
  require(0 <= s0 && s0 <= s1, "box_measure: need 0 <= s0 <= s1");
  if (s1 == s0 || y1 <= y0) return 0.0;
  auto f = [&](double u) {
    if (u <= 0) return y0 == 0 ? std::sqrt(2.0 / kPi) : 0.0;
    const double s = u * u;
    return 2 * u * std::exp(-q * s) * entrance_mass_bm(s, y0, y1);
  };
  return adaptive_simpson(f, std::sqrt(s0), std::sqrt(s1), tol);
}

inline double V_box(const LadderBoxLaw& law, double q = 0.0) {
  law.validate();
  return box_measure(0.0, law.a, 0.0, law.b, q);
}

// Joint density of (g_inf, S_{g_inf}) under the box law.
inline double g_S_joint_density(const LadderBoxLaw& law, double s, double y) {
  if (s <= 0 || s > law.a || y < 0 || y > law.b) return 0.0;
  if (y == 0) return 0.0;
  return entrance_density_bm(s, y) / V_box(law);
}

// n(x < eps_{s-t} < b - y, s - t < zeta)
inline double h_s_box(const LadderBoxLaw& law, double s, double t, double x, double y) {
  require(t < s, "h_s_box: need t < s");
  require(x >= 0, "h_s_box: x must be nonnegative");
  if (x >= law.b - y) return 0.0;
  return entrance_mass_bm(s - t, x, law.b - y);
}

// ---- skeleton with the exact bridge maximum ----

struct Skeleton {
  double t = 0.0;
  double x = 0.0;
  double s = 0.0;  // running supremum
  double g = 0.0;  // time of the supremum, to within one step

  // One step of length dt. The maximum of the Brownian bridge between the
  // endpoints is (x0 + x1 + sqrt((x1 - x0)^2 + 2 dt E)) / 2 with E ~ Exp(1);
  // it is drawn only when it can beat the current supremum.
  void step(double dt, RngStream& rng) {
    const double x0 = x;
    x += std::sqrt(dt) * rng.normal();
    const double hi = std::max(x0, x);
    if (hi >= s) {
      s = 0.5 * (x0 + x + std::sqrt((x - x0) * (x - x0) + 2 * dt * rng.exponential()));
      g = t + 0.5 * dt;
    } else {
      const double c = 2 * (s - x0) * (s - x) / dt;
      if (c < 40 && rng.exponential() > c) {
        // the bridge max exceeds s; draw it conditioned on that
        const double e = c + rng.exponential();
        s = 0.5 * (x0 + x + std::sqrt((x - x0) * (x - x0) + 2 * dt * e));
        g = t + 0.5 * dt;
      }
    }
    t += dt;
  }
};

// (tau_y, y) with y uniform on (0, b), kept when tau_y <= a: a draw from
// q*_s(y) ds dy restricted to the box. Crossings inside a step are detected
// through the bridge; the crossing time is the step end.
inline std::optional<std::pair<double, double>> sample_box_pair(const LadderBoxLaw& law, RngStream& rng) {
  const double y = law.b * rng.uniform();
  const double dt = law.skeleton_dt, sdt = std::sqrt(dt);
  const auto steps = static_cast<std::size_t>(std::ceil(law.a / dt - 1e-9));
  double x = 0.0;
  for (std::size_t k = 1; k <= steps; ++k) {
    const double x0 = x;
    x += sdt * rng.normal();
    const double t = std::min(law.a, static_cast<double>(k) * dt);
    if (x >= y) return std::make_pair(t, y);
    const double c = 2 * (y - x0) * (y - x) / dt;
    if (c < 40 && rng.exponential() > c) return std::make_pair(t, y);
  }
  return std::nullopt;
}

// Skeleton to T < s weighted by h_s(T, S_T - X_T, X_T) 1{S_T < b} / h_s(0,0,0).
inline PathSample sample_pre_supremum(const LadderBoxLaw& law, double s, double T, RngStream& rng) {
  law.validate();
  require(0 < s && s < law.a, "sample_pre_supremum: need 0 < s < a");
  require(0 < T && T < s, "sample_pre_supremum: need 0 < T < s");
  const auto steps = static_cast<std::size_t>(std::ceil(T / law.skeleton_dt - 1e-9));
  const double dt = T / static_cast<double>(steps);
  Skeleton sk;
  PathSample p;
  p.push(0.0, 0.0);
  for (std::size_t k = 0; k < steps; ++k) {
    sk.step(dt, rng);
    p.push(sk.t, sk.x);
  }
  p.weight = sk.s < law.b ? h_s_box(law, s, T, sk.s - sk.x, sk.x) / h_s_box(law, s, 0.0, 0.0, 0.0) : 0.0;
  return p;
}

// Bessel(3) from x0 on a grid, as the norm of a three-dimensional BM.
inline PathSample sample_post_supremum(double horizon, double dt, RngStream& rng, double x0 = 0.0) {
  require(horizon > 0 && dt > 0, "sample_post_supremum: need horizon, dt > 0");
  const auto steps = static_cast<std::size_t>(std::ceil(horizon / dt - 1e-9));
  const double h = horizon / static_cast<double>(steps), sh = std::sqrt(h);
  double c[3] = {x0, 0.0, 0.0};
  PathSample p;
  p.push(0.0, x0);
  for (std::size_t k = 1; k <= steps; ++k) {
    for (double& v : c) v += sh * rng.normal();
    p.push(static_cast<double>(k) * h, std::sqrt(c[0] * c[0] + c[1] * c[1] + c[2] * c[2]));
  }
  return p;
}

inline double bes3_density(double t, double x) {
  if (x <= 0) return 0.0;
  return 2.0 / std::sqrt(2 * kPi * t * t * t) * x * x * std::exp(-x * x / (2 * t));
}

inline double bes3_cdf(double t, double x) {
  if (x <= 0) return 0.0;
  const double z = x / std::sqrt(t);
  return std::erf(z / std::sqrt(2.0)) - std::sqrt(2.0 / kPi) * z * std::exp(-z * z / 2);
}

// Law at lag u of S - X after the supremum of BM run to an independent e_q,
// given the lag is reached: density proportional to z e^{-z^2/2u} (1 - e^{-z sqrt(2q)}).
// It tends to the Bessel(3) marginal as q -> 0.
inline double post_supremum_cdf(double q, double u, double z) {
  if (z <= 0) return 0.0;
  if (q == 0) return bes3_cdf(u, z);
  const double r = std::sqrt(2 * q);
  auto f = [&](double w) { return w * std::exp(-w * w / (2 * u)) * -std::expm1(-w * r); };
  const double upper = 12 * std::sqrt(u);
  const double total = adaptive_simpson(f, 0.0, upper, 1e-13);
  return std::min(1.0, adaptive_simpson(f, 0.0, std::min(z, upper), 1e-13) / total);
}

struct BoxLimitRow {
  double q = 0.0;
  std::size_t attempts = 0;
  std::size_t accepted = 0;
  double ratio = 0.0;  // P(g_{e_q} <= a, S_{e_q} <= b) / (kappa(q,0) V_q)
  double ratio_std_error = 0.0;
  double chi2_p_finite_q = 1.0;  // (g, S) against e^{-qs} q*_s(y) / V_q
  double chi2_p_limit = 1.0;     // (g, S) against q*_s(y) / V
  double independence_z = 0.0;   // correlation of S with S - X_{e_q}, in standard errors
  double post_ks_p_finite_q = 1.0;
  double post_ks_p_bes3 = 1.0;
  bool low_acceptance = false;
};

struct BoxLimitConfig {
  double dt = 1e-3;
  double lag = 0.25;
  std::size_t grid_cells = 5;
  std::size_t min_accepted = 200;
};

// BM to an independent e_q, rejected as soon as S > b or a new supremum
// appears after a.
inline std::vector<BoxLimitRow> verify_box_limit(const LadderBoxLaw& law, const std::vector<double>& q_seq,
                                                 std::size_t n_paths, const RngStream& rng,
                                                 const BoxLimitConfig& cfg = {}) {
  law.validate();
  require(std::is_sorted(q_seq.rbegin(), q_seq.rend()), "verify_box_limit: q sequence must decrease");
  struct Draw {
    bool ok = false;
    double g = 0.0, S = 0.0, D = 0.0, lag_value = -1.0;
  };
  std::vector<BoxLimitRow> rows;
  for (std::size_t qi = 0; qi < q_seq.size(); ++qi) {
    const double q = q_seq[qi];
    require(q > 0, "verify_box_limit: q must be positive");
    const auto draws = parallel_collect<Draw>(n_paths, rng.substream(qi), [&](RngStream& r, std::size_t) {
      const double e = r.exponential() / q;
      Skeleton sk;
      double lag_value = -1.0, target = cfg.lag;
      while (sk.t < e) {
        const double prev_g = sk.g;
        sk.step(std::min(cfg.dt, e - sk.t), r);
        if (sk.s > law.b || (sk.g != prev_g && sk.g > law.a)) return Draw{};
        if (sk.g != prev_g) {
          target = sk.g + cfg.lag;
          lag_value = -1.0;
        }
        if (lag_value < 0 && sk.t >= target) lag_value = sk.s - sk.x;
      }
      return Draw{true, sk.g, sk.s, sk.s - sk.x, lag_value};
    });
    BoxLimitRow row;
    row.q = q;
    row.attempts = draws.size();
    std::vector<std::pair<double, double>> pairs;
    std::vector<double> lags;
    RunningStats acc, sx, dx, sd;
    for (const auto& d : draws) {
      acc.add(d.ok ? 1.0 : 0.0);
      if (!d.ok) continue;
      pairs.emplace_back(d.g, d.S);
      sx.add(d.S);
      dx.add(d.D);
      if (d.lag_value >= 0) lags.push_back(d.lag_value);
    }
    row.accepted = pairs.size();
    const double norm = kappa_bm(q) * V_box(law, q);
    row.ratio = acc.mean / norm;
    row.ratio_std_error = acc.std_error() / norm;
    row.low_acceptance = row.accepted < cfg.min_accepted;
    if (row.accepted >= 2) {
      for (const auto& d : draws)
        if (d.ok) sd.add((d.S - sx.mean) * (d.D - dx.mean));
      const double sdS = std::sqrt(sx.variance()), sdD = std::sqrt(dx.variance());
      row.independence_z = sdS > 0 && sdD > 0 ? sd.mean / (sdS * sdD) * std::sqrt(static_cast<double>(row.accepted)) : 0.0;
      std::vector<double> se, ye;
      for (std::size_t i = 0; i <= cfg.grid_cells; ++i) {
        se.push_back(law.a * i / cfg.grid_cells);
        ye.push_back(law.b * i / cfg.grid_cells);
      }
      const double Vq = V_box(law, q), V0 = V_box(law, 0.0);
      row.chi2_p_finite_q =
          chi_square_grid(pairs, [&](double s0, double s1, double y0, double y1) { return box_measure(s0, s1, y0, y1, q) / Vq; },
                          se, ye)
              .p_value;
      row.chi2_p_limit =
          chi_square_grid(pairs, [&](double s0, double s1, double y0, double y1) { return box_measure(s0, s1, y0, y1) / V0; },
                          se, ye)
              .p_value;
    }
    if (lags.size() >= 2) {
      row.post_ks_p_finite_q = ks_test(lags, [&](double z) { return post_supremum_cdf(q, cfg.lag, z); }).p_value;
      row.post_ks_p_bes3 = ks_test(lags, [&](double z) { return bes3_cdf(cfg.lag, z); }).p_value;
    }
    rows.push_back(row);
  }
  return rows;
}

}  // namespace subcond
