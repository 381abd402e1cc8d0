#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include <boost/math/special_functions/beta.hpp>

#include "common.hpp"
#include "models.hpp"

namespace subcond {

// Laplace exponent of the killed Levy process xi behind Y = a - X, stable X.
inline double phi_xi(double lambda, double alpha) {
  require(alpha > 0 && alpha < 1, "phi_xi: alpha must lie in (0,1)");
  // written with 1/Gamma so that the pole at lambda = alpha - 1 gives exactly 0
  return std::tgamma(1.0 + lambda) * reciprocal_gamma(1.0 + lambda - alpha);
}

inline double phi_down(double lambda, double alpha) {
  require(alpha > 0 && alpha < 1, "phi_down: alpha must lie in (0,1)");
  return std::tgamma(1.0 + lambda + alpha) * reciprocal_gamma(1.0 + lambda);
}

inline double phi_circ(double lambda, double alpha) {
  require(alpha > 0 && alpha < 1, "phi_circ: alpha must lie in (0,1)");
  return std::tgamma(alpha + lambda) * reciprocal_gamma(lambda);
}

inline double killing_rate(double alpha) { return reciprocal_gamma(1.0 - alpha); }

// Law of (a - X_{tau_a -}) / a: Beta(1 - alpha, alpha).
inline double undershoot_density(double y, double alpha) {
  require(y > 0 && y < 1, "undershoot_density: y must lie in (0,1)");
  return std::pow(y, -alpha) * std::pow(1.0 - y, alpha - 1.0) /
         (std::tgamma(1.0 - alpha) * std::tgamma(alpha));
}

inline double undershoot_cdf(double y, double alpha) {
  if (y <= 0) return 0.0;
  if (y >= 1) return 1.0;
  return boost::math::ibeta(1.0 - alpha, alpha, y);
}

// Relative jump w in (0,1) that replaces an overshoot under the Circ tilt:
// density alpha w^{-alpha-1} ((1-w)^{alpha-1} - 1). Rejection from the
// envelope 4 alpha (1-alpha) 2^{-alpha} w^{-alpha} on (0,1/2] and
// alpha 2^{alpha+1} (1-w)^{alpha-1} on (1/2,1).
inline double sample_circ_jump(double alpha, RngStream& rng) {
  const double m1 = 2.0 * alpha, m2 = 2.0;
  for (;;) {
    double w, env;
    if (rng.uniform() * (m1 + m2) < m1) {
      w = 0.5 * std::pow(rng.uniform(), 1.0 / (1.0 - alpha));
      env = alpha * (1.0 - alpha) * std::pow(2.0, 2.0 - alpha) * std::pow(w, -alpha);
    } else {
      w = 1.0 - 0.5 * std::pow(rng.uniform(), 1.0 / alpha);
      env = alpha * std::pow(2.0, alpha + 1.0) * std::pow(1.0 - w, alpha - 1.0);
    }
    const double g = alpha * std::pow(w, -alpha - 1.0) * std::expm1((alpha - 1.0) * std::log1p(-w));
    if (rng.uniform() * env <= g) return w;
  }
}

enum class Tilt { None, Down, Circ };

inline std::string to_string(Tilt t) {
  switch (t) {
    case Tilt::None: return "none";
    case Tilt::Down: return "down";
    case Tilt::Circ: return "circ";
  }
  return "?";
}

// xi killed at rate kill_rate() is an unkilled Levy process stopped at an
// independent exponential Lamperti time, so the samplers draw the kill time
// first and the terminal value is exact. Unkilled increments come from the
// stable increment u by rejection: u < 1, and under Down an extra accept with
// probability (1-u)^alpha (the Esscher weight).
struct XiStepper {
  double alpha;
  Tilt tilt;
  double h;  // Lamperti-time step

  double kill_rate() const {
    switch (tilt) {
      case Tilt::None: return killing_rate(alpha);
      case Tilt::Down: return phi_down(0.0, alpha);
      case Tilt::Circ: return 0.0;
    }
    return 0.0;
  }

  double kill_time(RngStream& rng) const {
    const double r = kill_rate();
    return r > 0 ? rng.exponential() / r : kInf;
  }

  double increment(double len, RngStream& rng) const {
    for (;;) {
      const double u = sample_stable_increment(alpha, len, rng);
      if (u >= 1.0) {
        if (tilt == Tilt::Circ) return std::log1p(-sample_circ_jump(alpha, rng));
        continue;
      }
      if (tilt == Tilt::Down && rng.uniform() > std::pow(1.0 - u, alpha)) continue;
      return std::log1p(-u);
    }
  }
};

// xi on its own clock, step h, up to Lamperti time `horizon` or until xi
// drops below `xi_floor`. A killed path ends with a point at the kill time
// carrying the value just before it.
inline PathSample esscher_sample_xi(double alpha, Tilt tilt, double horizon, RngStream& rng,
                                    double h = 1e-3, double xi_floor = -kInf) {
  require(alpha > 0 && alpha < 1, "esscher_sample_xi: alpha must lie in (0,1)");
  require(h > 0, "esscher_sample_xi: step must be positive");
  const XiStepper stepper{alpha, tilt, h};
  const double zeta = stepper.kill_time(rng);
  PathSample p;
  p.push(0.0, 0.0);
  double xi = 0.0, s = 0.0;
  for (std::size_t k = 1; s < horizon && xi >= xi_floor; ++k) {
    const double next = k * h;
    if (zeta < next) {
      xi += stepper.increment(zeta - s, rng);
      p.push(zeta, xi);
      p.killed = true;
      p.lifetime = zeta;
      return p;
    }
    xi += stepper.increment(next - s, rng);
    s = next;
    p.push(s, xi);
  }
  return p;
}

// X = a - Y with the real-time step h * Y^alpha, i.e. a Lamperti step of h.
// Tilt None is the unconditioned stable subordinator killed on passing a,
// Down is the strip-conditioned law, Circ is conditioned to hit a.
inline PathSample sample_stable_adaptive(double alpha, double a, double x0, Tilt tilt,
                                         double lamperti_horizon, RngStream& rng, double h = 1e-3,
                                         double rel_floor = 0.0) {
  require(x0 < a, "sample_stable_adaptive: start must lie below the barrier");
  const XiStepper stepper{alpha, tilt, h};
  const double y0 = a - x0;
  const double zeta = stepper.kill_time(rng);
  PathSample p;
  p.push(0.0, x0);
  double xi = 0.0, t = 0.0, s = 0.0;
  const double floor = rel_floor > 0 ? std::log(rel_floor) : -kInf;
  while (s < lamperti_horizon - 1e-12 && xi >= floor) {
    const double y = y0 * std::exp(xi);
    const double len = std::min(h, zeta - s);
    t += len * std::pow(y, alpha);
    s += len;
    xi += stepper.increment(len, rng);
    if (s >= zeta) {
      p.push(t, a - y0 * std::exp(xi));
      p.killed = true;
      p.lifetime = t;
      return p;
    }
    p.push(t, a - y0 * std::exp(xi));
  }
  return p;
}

struct LampertiView {
  double alpha = 0.5;
  double a = 1.0;
  double kappa = 0.0;          // drift of the source X path between points
  PathSample xi_path;          // times are Lamperti times, values are xi
  std::vector<double> clock;   // int_0^{sigma_k} e^{alpha xi_u} du

  // xi between recorded points: constant without drift, else the exact
  // solution of dxi/dsigma = -kappa e^{(alpha-1) xi} / a^{1-alpha}
  double xi_at(double sigma) const {
    const auto& ts = xi_path.times;
    auto it = std::upper_bound(ts.begin(), ts.end(), sigma);
    const std::size_t k = it == ts.begin() ? 0 : static_cast<std::size_t>(it - ts.begin()) - 1;
    const double xi_k = xi_path.values[k];
    if (kappa == 0) return xi_k;
    const double yk = a * std::exp(xi_k);
    const double base = std::pow(yk, 1.0 - alpha) - kappa * (1.0 - alpha) * (sigma - ts[k]);
    if (base <= 0) return -kInf;
    return std::log(std::pow(base, 1.0 / (1.0 - alpha)) / a);
  }

  // Real-time X path rebuilt from xi and the clock alone.
  PathSample reconstruct() const {
    PathSample out;
    out.drift = kappa;
    const double scale = std::pow(a, alpha);
    for (std::size_t k = 0; k < xi_path.times.size(); ++k)
      out.push(scale * clock[k], a - a * std::exp(xi_path.values[k]));
    out.killed = xi_path.killed;
    if (xi_path.killed) out.lifetime = out.times.back();
    return out;
  }
};

// Y = a - X on the Lamperti clock. For drift-free paths the clock integrand is
// piecewise constant; drift segments are integrated in closed form.
inline LampertiView lamperti_transform(const PathSample& path, double a, double alpha) {
  require(alpha > 0 && alpha < 1, "lamperti_transform: alpha must lie in (0,1)");
  require(!path.times.empty(), "lamperti_transform: empty path");
  LampertiView v;
  v.alpha = alpha;
  v.a = a;
  v.kappa = path.drift;
  const double k = path.drift;
  double sigma = 0.0;
  double clock = 0.0;
  const std::size_t n = path.times.size();
  for (std::size_t i = 0; i < n; ++i) {
    const double y = a - path.values[i];
    if (y <= 0) {
      v.xi_path.killed = true;
      v.xi_path.lifetime = sigma;
      break;
    }
    if (i > 0) {
      const double dt = path.times[i] - path.times[i - 1];
      const double yprev = a - path.values[i - 1];
      if (k == 0) {
        sigma += dt * std::pow(yprev, -alpha);
        clock += (dt * std::pow(yprev, -alpha)) * std::pow(yprev / a, alpha);
      } else {
        const double yend = yprev - k * dt;
        if (yend <= 0) {
          v.xi_path.killed = true;
          v.xi_path.lifetime = kInf;
          break;
        }
        const double ds = (std::pow(yprev, 1.0 - alpha) - std::pow(yend, 1.0 - alpha)) / (k * (1.0 - alpha));
        sigma += ds;
        clock += std::pow(a, -alpha) * (yprev - yend) / k;
      }
    }
    v.xi_path.push(sigma, std::log(y / a));
    v.clock.push_back(clock);
  }
  if (path.killed && !v.xi_path.killed) {
    v.xi_path.killed = true;
    v.xi_path.lifetime = v.xi_path.times.back();
  }
  return v;
}

}  // namespace subcond
