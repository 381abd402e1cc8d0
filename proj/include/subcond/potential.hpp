#pragma once

#include <cmath>
#include <complex>
#include <optional>
#include <string>
#include <vector>

#include "common.hpp"
#include "models.hpp"
#include "numerics.hpp"
#include "parallel.hpp"
#include "verify.hpp"

namespace subcond {

enum class Provenance { ClosedForm, Inversion, MonteCarlo };

inline std::string to_string(Provenance p) {
  switch (p) {
    case Provenance::ClosedForm: return "closed_form";
    case Provenance::Inversion: return "inversion";
    case Provenance::MonteCarlo: return "monte_carlo";
  }
  return "?";
}

struct PotentialTable {
  double q = 0.0;
  std::vector<double> xs;
  std::vector<double> values;
  std::optional<std::vector<double>> density;
  Provenance provenance = Provenance::ClosedForm;
};

// U^(q)(0) = int e^{-qt} P(X_t = 0) dt: the holding time at the start for
// driftless finite-activity processes, zero otherwise.
inline double potential_atom_at_zero(const SubordinatorSpec& spec, double q) {
  if (spec.finite_activity() && spec.drift_coefficient() == 0) return 1.0 / (q + spec.total_jump_rate());
  return 0.0;
}

namespace detail {

inline std::optional<double> closed_form(const SubordinatorSpec& spec, double q, double x) {
  if (x < 0) return 0.0;
  if (auto span = spec.lattice_span()) {
    const double r = spec.jump_rate;
    const double n = std::floor(x / *span) + 1.0;
    if (q == 0) return n / r;
    return -std::expm1(n * std::log(r / (r + q))) / q;
  }
  switch (spec.family) {
    case Family::Drift:
      if (q == 0) return x / spec.kappa;
      return -std::expm1(-q * x / spec.kappa) / q;
    case Family::Stable:
      if (q == 0) return std::pow(x, spec.alpha) / std::tgamma(1.0 + spec.alpha);
      return std::nullopt;
    case Family::CompoundPoissonDrift: {
      if (spec.kappa <= 0 || spec.jump_law.kind != JumpLaw::Kind::Exponential) return std::nullopt;
      const double k = spec.kappa, r = spec.jump_rate, mu = spec.jump_law.rate;
      if (q == 0) {
        const double c = mu + r / k;
        return (mu / c * x - (1.0 - mu / c) * std::expm1(-c * x) / c) / k;
      }
      // k l^2 + (q + k mu + r) l + q mu = k (l + p1)(l + p2)
      const double bq = q + k * mu + r;
      const double disc = std::sqrt(bq * bq - 4.0 * k * q * mu);
      const double p2 = (bq + disc) / (2.0 * k);
      const double p1 = q * mu / (k * p2);
      const double A = (mu - p1) / (p2 - p1), B = (p2 - mu) / (p2 - p1);
      return (-A * std::expm1(-p1 * x) / p1 - B * std::expm1(-p2 * x) / p2) / k;
    }
    default: return std::nullopt;
  }
}

}  // namespace detail

inline bool has_closed_form(const SubordinatorSpec& spec, double q) {
  return detail::closed_form(spec, q, 1.0).has_value();
}

inline double potential_closed_form(const SubordinatorSpec& spec, double q, double x) {
  require(q >= 0, "potential: q must be >= 0");
  if (auto v = detail::closed_form(spec, q, x)) return *v;
  throw UnsupportedError("potential_closed_form: no closed form for " + to_string(spec.family));
}

// Numerical inversion. Lattice processes go through their generating
// function, everything else through the Laplace transform of x -> U^(q)(x).
inline double potential_numeric(const SubordinatorSpec& spec, double q, double x,
                                const InversionConfig& cfg = {}) {
  require(q >= 0, "potential_numeric: q must be >= 0");
  if (x < 0) return 0.0;
  if (auto span = spec.lattice_span()) {
    const long n = static_cast<long>(std::floor(x / *span));
    if (n == 0) return potential_atom_at_zero(spec, q);
    const double c = *span;
    LaplaceFn G = [&](std::complex<double> z) {
      const std::complex<double> s = -std::log(z) / c;
      return 1.0 / ((q + laplace_exponent(spec, s)) * (1.0 - z));
    };
    return invert_generating_function(G, n);
  }
  if (x == 0) return potential_atom_at_zero(spec, q);
  LaplaceFn F = [&](std::complex<double> s) { return 1.0 / (s * (q + laplace_exponent(spec, s))); };
  return invert_laplace(F, x, cfg);
}

inline double potential(const SubordinatorSpec& spec, double q, double x,
                        const InversionConfig& cfg = {}) {
  if (auto v = detail::closed_form(spec, q, x)) return *v;
  return potential_numeric(spec, q, x, cfg);
}

// Renewal density u on (0, inf) under the continuity assumption.
inline double potential_density(const SubordinatorSpec& spec, double x, const InversionConfig& cfg = {}) {
  if (!spec.has_potential_density())
    throw DensityUnavailable("potential_density: renewal measure of " + to_string(spec.family) +
                             " has no continuous density");
  require(x > 0, "potential_density: x must be positive");
  switch (spec.family) {
    case Family::Drift: return 1.0 / spec.kappa;
    case Family::Stable:
      return spec.alpha * std::pow(x, spec.alpha - 1.0) / std::tgamma(1.0 + spec.alpha);
    case Family::CompoundPoissonDrift:
      if (spec.jump_law.kind == JumpLaw::Kind::Exponential) {
        const double k = spec.kappa, mu = spec.jump_law.rate;
        const double c = mu + spec.jump_rate / k;
        return (mu / c + (1.0 - mu / c) * std::exp(-c * x)) / k;
      }
      break;
    default: break;
  }
  LaplaceFn F = [&](std::complex<double> s) { return 1.0 / laplace_exponent(spec, s); };
  return invert_laplace(F, x, cfg);
}

// U = U^(0) and, when available, u, bundled for repeated evaluation.
class RenewalFunction {
 public:
  explicit RenewalFunction(SubordinatorSpec spec, double q = 0.0, InversionConfig cfg = {})
      : spec_(spec), q_(q), cfg_(cfg), closed_(has_closed_form(spec, q)) {}

  double operator()(double x) const {
    if (closed_) return *detail::closed_form(spec_, q_, x);
    return potential_numeric(spec_, q_, x, cfg_);
  }
  double density(double x) const { return potential_density(spec_, x, cfg_); }
  const SubordinatorSpec& spec() const { return spec_; }

 private:
  SubordinatorSpec spec_;
  double q_;
  InversionConfig cfg_;
  bool closed_;
};

struct PotentialMcConfig {
  double grid_step = 0.01;    // quadrature step for infinite-activity families
  double max_time = 1e5;      // per-path horizon cap
  std::size_t max_steps = 50'000'000;
};

// Per path: int_0^{tau_x} e^{-qt} dt, tau_x the first passage strictly above x.
// Jump-exact paths give it exactly; otherwise a randomly shifted grid gives an
// unbiased Riemann sum.
inline McEstimate potential_mc(const SubordinatorSpec& spec, double q, double x, std::size_t n_paths,
                               const RngStream& rng, const PotentialMcConfig& cfg = {}) {
  require(q >= 0, "potential_mc: q must be >= 0");
  require(q > 0 || std::isfinite(x), "potential_mc: q = 0 needs a finite level");
  struct Acc {
    RunningStats stats;
    bool truncated = false;
  };
  auto body = [&](Acc& acc, RngStream& s, std::size_t) {
    double v = 0.0;
    if (spec.finite_activity()) {
      double tau;
      if (!std::isfinite(x)) {
        tau = kInf;
      } else {
        const PathSample p = sample_until_above(spec, x, s, 0.0, cfg.max_time);
        tau = first_passage_time(p, x);
        if (!std::isfinite(tau)) {
          acc.truncated = true;
          tau = cfg.max_time;
        }
      }
      v = q > 0 ? -std::expm1(-q * tau) / q : tau;
    } else {
      const double h = cfg.grid_step;
      double t = s.uniform() * h;
      double X = sample_increment(spec, t, s);
      std::size_t k = 0;
      while (X <= x) {
        const double disc = std::exp(-q * t);
        v += h * disc;
        if (disc < 1e-17) break;
        if (++k > cfg.max_steps || t > cfg.max_time) {
          acc.truncated = true;
          break;
        }
        X += sample_increment(spec, h, s);
        t += h;
      }
    }
    acc.stats.add(v);
  };
  const Acc acc = batched_reduce(n_paths, rng, Acc{}, body, [](Acc& out, Acc&& p) {
    out.stats.merge(p.stats);
    out.truncated = out.truncated || p.truncated;
  });
  McEstimate e = to_estimate(acc.stats);
  e.truncated = acc.truncated;
  return e;
}

inline PotentialTable tabulate_potential(const SubordinatorSpec& spec, double q, const std::vector<double>& xs,
                                         const InversionConfig& cfg = {}) {
  PotentialTable t;
  t.q = q;
  t.xs = xs;
  t.provenance = has_closed_form(spec, q) ? Provenance::ClosedForm : Provenance::Inversion;
  for (double x : xs) t.values.push_back(potential(spec, q, x, cfg));
  if (spec.has_potential_density() && q == 0) {
    std::vector<double> d;
    for (double x : xs) d.push_back(x > 0 ? potential_density(spec, x, cfg) : kInf);
    t.density = std::move(d);
  }
  return t;
}

inline PotentialTable tabulate_potential_mc(const SubordinatorSpec& spec, double q, const std::vector<double>& xs,
                                            std::size_t n_paths, const RngStream& rng,
                                            std::vector<double>* std_errors = nullptr) {
  PotentialTable t;
  t.q = q;
  t.xs = xs;
  t.provenance = Provenance::MonteCarlo;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const McEstimate e = potential_mc(spec, q, xs[i], n_paths, rng.substream(1000 + i));
    t.values.push_back(e.estimate);
    if (std_errors) std_errors->push_back(e.std_error);
  }
  return t;
}

}  // namespace subcond
