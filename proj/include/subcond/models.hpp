#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <optional>
#include <string>
#include <vector>

#include "common.hpp"
#include "rng.hpp"

namespace subcond {

enum class Family { Drift, Poisson, CompoundPoissonDrift, Stable, Gamma };

inline std::string to_string(Family f) {
  switch (f) {
    case Family::Drift: return "drift";
    case Family::Poisson: return "poisson";
    case Family::CompoundPoissonDrift: return "compound_poisson_drift";
    case Family::Stable: return "stable";
    case Family::Gamma: return "gamma";
  }
  return "?";
}

struct JumpLaw {
  enum class Kind { Degenerate, Exponential, Gamma };
  Kind kind = Kind::Degenerate;
  double size = 1.0;   // Degenerate
  double shape = 1.0;  // Gamma
  double rate = 1.0;   // Exponential, Gamma

  static JumpLaw degenerate(double s) { return {Kind::Degenerate, s, 1.0, 1.0}; }
  static JumpLaw exponential(double r) { return {Kind::Exponential, 1.0, 1.0, r}; }
  static JumpLaw gamma(double k, double r) { return {Kind::Gamma, 1.0, k, r}; }

  bool absolutely_continuous() const { return kind != Kind::Degenerate; }

  void validate() const {
    switch (kind) {
      case Kind::Degenerate: require(size > 0, "jump size must be positive"); break;
      case Kind::Exponential: require(rate > 0, "jump rate parameter must be positive"); break;
      case Kind::Gamma: require(shape > 0 && rate > 0, "gamma jump parameters must be positive"); break;
    }
  }

  // E exp(-s J), also for complex s with Re s >= 0
  std::complex<double> laplace(std::complex<double> s) const {
    switch (kind) {
      case Kind::Degenerate: return std::exp(-s * size);
      case Kind::Exponential: return rate / (rate + s);
      case Kind::Gamma: return std::pow(rate / (rate + s), shape);
    }
    return 0.0;
  }

  double sample(RngStream& rng) const {
    switch (kind) {
      case Kind::Degenerate: return size;
      case Kind::Exponential: return rng.exponential() / rate;
      case Kind::Gamma: return rng.gamma(shape, rate);
    }
    return 0.0;
  }
};

struct SubordinatorSpec {
  Family family = Family::Drift;
  double kappa = 0.0;
  double jump_rate = 0.0;
  JumpLaw jump_law{};
  double alpha = 0.5;
  double gamma_shape = 1.0;
  double gamma_rate = 1.0;

  static SubordinatorSpec drift(double kappa) {
    SubordinatorSpec s;
    s.family = Family::Drift;
    s.kappa = kappa;
    s.validate();
    return s;
  }
  static SubordinatorSpec poisson(double rate) {
    SubordinatorSpec s;
    s.family = Family::Poisson;
    s.jump_rate = rate;
    s.jump_law = JumpLaw::degenerate(1.0);
    s.validate();
    return s;
  }
  static SubordinatorSpec compound_poisson_drift(double kappa, double rate, JumpLaw law) {
    SubordinatorSpec s;
    s.family = Family::CompoundPoissonDrift;
    s.kappa = kappa;
    s.jump_rate = rate;
    s.jump_law = law;
    s.validate();
    return s;
  }
  static SubordinatorSpec stable(double alpha) {
    SubordinatorSpec s;
    s.family = Family::Stable;
    s.alpha = alpha;
    s.validate();
    return s;
  }
  static SubordinatorSpec gamma(double shape, double rate) {
    SubordinatorSpec s;
    s.family = Family::Gamma;
    s.gamma_shape = shape;
    s.gamma_rate = rate;
    s.validate();
    return s;
  }

  void validate() const {
    require(kappa >= 0 && std::isfinite(kappa), "kappa must be finite and >= 0");
    switch (family) {
      case Family::Drift: require(kappa > 0, "drift family needs kappa > 0"); break;
      case Family::Poisson:
        require(jump_rate > 0, "jump_rate must be positive");
        require(kappa == 0, "poisson family has no drift");
        break;
      case Family::CompoundPoissonDrift:
        require(jump_rate > 0, "jump_rate must be positive");
        jump_law.validate();
        break;
      case Family::Stable: require(alpha > 0 && alpha < 1, "alpha must lie in (0,1)"); break;
      case Family::Gamma: require(gamma_shape > 0 && gamma_rate > 0, "gamma parameters must be positive"); break;
    }
  }

  bool finite_activity() const { return family != Family::Stable && family != Family::Gamma; }

  double total_jump_rate() const {
    return (family == Family::Poisson || family == Family::CompoundPoissonDrift) ? jump_rate : 0.0;
  }

  double drift_coefficient() const {
    return (family == Family::Drift || family == Family::CompoundPoissonDrift) ? kappa : 0.0;
  }

  // span of the lattice carrying X when there is no drift and jumps are fixed
  std::optional<double> lattice_span() const {
    if (family == Family::Poisson) return 1.0;
    if (family == Family::CompoundPoissonDrift && kappa == 0 &&
        jump_law.kind == JumpLaw::Kind::Degenerate)
      return jump_law.size;
    return std::nullopt;
  }

  // the renewal measure has a continuous density on (0, inf)
  bool has_potential_density() const {
    switch (family) {
      case Family::Drift:
      case Family::Stable:
      case Family::Gamma: return true;
      case Family::Poisson: return false;
      case Family::CompoundPoissonDrift: return kappa > 0 && jump_law.absolutely_continuous();
    }
    return false;
  }
};

inline std::complex<double> laplace_exponent(const SubordinatorSpec& spec, std::complex<double> s) {
  switch (spec.family) {
    case Family::Drift: return spec.kappa * s;
    case Family::Poisson: return spec.jump_rate * (1.0 - std::exp(-s));
    case Family::CompoundPoissonDrift:
      return spec.kappa * s + spec.jump_rate * (1.0 - spec.jump_law.laplace(s));
    case Family::Stable: return std::pow(s, spec.alpha);
    case Family::Gamma: return spec.gamma_shape * std::log(1.0 + s / spec.gamma_rate);
  }
  return 0.0;
}

inline double laplace_exponent(const SubordinatorSpec& spec, double lambda) {
  require(lambda >= 0, "laplace_exponent: lambda must be >= 0");
  if (lambda == 0) return 0.0;
  if (spec.family == Family::Poisson) return spec.jump_rate * -std::expm1(-lambda);
  if (spec.family == Family::Gamma) return spec.gamma_shape * std::log1p(lambda / spec.gamma_rate);
  return laplace_exponent(spec, std::complex<double>(lambda, 0.0)).real();
}

// Kanter's representation of a one-sided stable law with E exp(-lam S) = exp(-t lam^alpha).
inline double sample_stable_increment(double alpha, double t, RngStream& rng) {
  require(alpha > 0 && alpha < 1, "sample_stable_increment: alpha must lie in (0,1)");
  require(t > 0, "sample_stable_increment: t must be positive");
  const double u = kPi * rng.uniform();
  const double e = rng.exponential();
  const double log_s = std::log(std::sin(alpha * u)) - std::log(std::sin(u)) / alpha +
                       (1.0 - alpha) / alpha * (std::log(std::sin((1.0 - alpha) * u)) - std::log(e));
  return std::exp(log_s + std::log(t) / alpha);
}

// Exact law of X_{t+h} - X_t.
inline double sample_increment(const SubordinatorSpec& spec, double h, RngStream& rng) {
  switch (spec.family) {
    case Family::Drift: return spec.kappa * h;
    case Family::Poisson: return static_cast<double>(rng.poisson(spec.jump_rate * h));
    case Family::CompoundPoissonDrift: {
      double x = spec.kappa * h;
      const auto n = rng.poisson(spec.jump_rate * h);
      for (std::int64_t i = 0; i < n; ++i) x += spec.jump_law.sample(rng);
      return x;
    }
    case Family::Stable: return sample_stable_increment(spec.alpha, h, rng);
    case Family::Gamma: return rng.gamma(spec.gamma_shape * h, spec.gamma_rate);
  }
  return 0.0;
}

// A trajectory. Between consecutive recorded points the value moves linearly
// with slope `drift` (zero for grid and chain paths). For a killed path the
// last recorded point sits at `lifetime` and carries X_{zeta-}.
struct PathSample {
  std::vector<double> times;
  std::vector<double> values;
  double lifetime = kInf;
  double weight = 1.0;
  bool killed = false;
  double drift = 0.0;
  std::optional<double> terminal;

  double horizon() const { return times.empty() ? 0.0 : times.back(); }
  bool alive_at(double t) const { return t < lifetime; }

  double value_at(double t) const {
    if (times.empty()) throw DomainError("value_at: empty path");
    auto it = std::upper_bound(times.begin(), times.end(), t);
    if (it == times.begin()) return values.front();
    const std::size_t i = static_cast<std::size_t>(it - times.begin()) - 1;
    return values[i] + drift * (std::min(t, horizon()) - times[i]);
  }

  void push(double t, double x) {
    times.push_back(t);
    values.push_back(x);
  }
};

struct SampleMode {
  enum class Kind { JumpExact, Grid };
  Kind kind = Kind::JumpExact;
  double dt = 0.0;
  static SampleMode jump_exact() { return {Kind::JumpExact, 0.0}; }
  static SampleMode grid(double dt) { return {Kind::Grid, dt}; }
};

inline PathSample sample_path(const SubordinatorSpec& spec, double horizon, SampleMode mode,
                              RngStream& rng, double x0 = 0.0) {
  require(horizon > 0, "sample_path: horizon must be positive");
  PathSample p;
  if (mode.kind == SampleMode::Kind::JumpExact) {
    if (!spec.finite_activity())
      throw UnsupportedError("sample_path: JumpExact needs a finite-activity family");
    const double kappa = spec.drift_coefficient();
    const double rate = spec.total_jump_rate();
    p.drift = kappa;
    p.push(0.0, x0);
    double t = 0.0, x = x0;
    if (rate > 0) {
      for (;;) {
        const double w = rng.exponential() / rate;
        if (t + w >= horizon) break;
        t += w;
        x += kappa * w + spec.jump_law.sample(rng);
        p.push(t, x);
      }
    }
    p.push(horizon, x + kappa * (horizon - t));
    return p;
  }
  require(mode.dt > 0, "sample_path: grid step must be positive");
  const auto n = static_cast<std::size_t>(std::ceil(horizon / mode.dt - 1e-9));
  p.times.reserve(n + 1);
  p.values.reserve(n + 1);
  p.push(0.0, x0);
  double x = x0;
  for (std::size_t k = 1; k <= n; ++k) {
    const double t = std::min(horizon, k * mode.dt);
    x += sample_increment(spec, t - p.times.back(), rng);
    p.push(t, x);
  }
  return p;
}

// Jump-exact path run until the first time it exceeds `level` (strictly).
// The crossing point is the last recorded point. `max_time` caps the run.
inline PathSample sample_until_above(const SubordinatorSpec& spec, double level, RngStream& rng,
                                     double x0 = 0.0, double max_time = kInf) {
  if (!spec.finite_activity())
    throw UnsupportedError("sample_until_above: needs a finite-activity family");
  const double kappa = spec.drift_coefficient();
  const double rate = spec.total_jump_rate();
  PathSample p;
  p.drift = kappa;
  p.push(0.0, x0);
  double t = 0.0, x = x0;
  if (x0 > level) return p;
  for (;;) {
    const double w = rate > 0 ? rng.exponential() / rate : kInf;
    // creeping across the level through the drift
    if (kappa > 0) {
      const double creep = (level - x) / kappa;
      if (creep <= 0) return p;
      if (creep < w) {
        t += creep;
        if (t > max_time) break;
        p.push(t, level);
        return p;
      }
    }
    if (!std::isfinite(w)) break;
    t += w;
    if (t > max_time) break;
    x += kappa * w + spec.jump_law.sample(rng);
    p.push(t, x);
    if (x > level) return p;
  }
  p.push(max_time, x + kappa * (max_time - p.times.back()));
  return p;
}

// First time t with X_t > level for a jump-exact path (or >= level when it creeps).
inline double first_passage_time(const PathSample& p, double level) {
  for (std::size_t i = 0; i < p.times.size(); ++i) {
    if (p.values[i] > level) return p.times[i];
    if (i + 1 < p.times.size() && p.drift > 0) {
      const double reach = p.values[i] + p.drift * (p.times[i + 1] - p.times[i]);
      if (reach >= level) return p.times[i] + (level - p.values[i]) / p.drift;
    }
  }
  return kInf;
}

}  // namespace subcond
