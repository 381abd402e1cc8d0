#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "common.hpp"
#include "lamperti.hpp"
#include "models.hpp"
#include "parallel.hpp"
#include "potential.hpp"
#include "verify.hpp"

namespace subcond {

struct StripLaw {
  SubordinatorSpec spec;
  double a = 1.0;
  double x0 = 0.0;

  void validate() const {
    spec.validate();
    require(a > 0, "strip: barrier must be positive");
    require(x0 >= 0 && x0 < a, "strip: start must lie in [0, a)");
  }
};

struct HitLaw {
  SubordinatorSpec spec;
  double y = 1.0;
  double x0 = 0.0;

  void validate() const {
    spec.validate();
    require(y > 0, "hit: target must be positive");
    require(x0 >= 0 && x0 < y, "hit: start must lie in [0, y)");
    require(spec.has_potential_density() || spec.lattice_span().has_value(),
            "hit: the renewal measure needs a continuous density or a lattice");
  }
};

struct ConditioningConfig {
  double horizon = 1.0;         // evaluation time of importance-weighted paths
  double grid_dt = 0.01;        // grid for infinite-activity weighted paths
  double lamperti_step = 0.01;  // Lamperti-time step of the exact stable sampler
  double absorb_tol = 1e-10;    // stop once y - X < absorb_tol * (y - x0)
  InversionConfig inversion{};
};

// The barrier is inclusive: a lattice process sitting exactly at a keeps
// positive weight, which is what the uniform {0,...,a} killing level needs.
inline double weight_strip(const StripLaw& law, double x_t, const InversionConfig& cfg = {}) {
  if (x_t > law.a) return 0.0;
  return potential(law.spec, 0.0, law.a - x_t, cfg) / potential(law.spec, 0.0, law.a - law.x0, cfg);
}

inline double weight_strip(const StripLaw& law, const PathSample& path, double t,
                           const InversionConfig& cfg = {}) {
  require(t <= path.horizon() + 1e-12, "weight_strip: t beyond path horizon");
  if (!path.alive_at(t)) return 0.0;
  return weight_strip(law, path.value_at(t), cfg);
}

inline double hit_weight(const HitLaw& law, double x_t, const InversionConfig& cfg = {}) {
  if (x_t >= law.y) return 0.0;
  return potential_density(law.spec, law.y - x_t, cfg) / potential_density(law.spec, law.y - law.x0, cfg);
}

inline double terminal_cdf(const StripLaw& law, double y, const InversionConfig& cfg = {}) {
  require(y >= law.x0 && y <= law.a, "terminal_cdf: y must lie in [x0, a]");
  if (y == law.a) return 1.0;
  return potential(law.spec, 0.0, y - law.x0, cfg) / potential(law.spec, 0.0, law.a - law.x0, cfg);
}

// Draw X_{zeta-} under the strip law.
inline double sample_terminal(const StripLaw& law, RngStream& rng, const InversionConfig& cfg = {}) {
  const double width = law.a - law.x0;
  if (auto span = law.spec.lattice_span()) {
    const auto top = static_cast<long>(std::floor(width / *span + 1e-12));
    const long n = static_cast<long>(rng.uniform() * static_cast<double>(top + 1));
    return law.x0 + static_cast<double>(std::min(n, top)) * *span;
  }
  if (!law.spec.has_potential_density())
    throw UnsupportedError("sample_terminal: needs a continuous renewal density or a lattice");
  const double v = rng.uniform();
  switch (law.spec.family) {
    case Family::Drift: return law.x0 + v * width;
    case Family::Stable: return law.x0 + width * std::pow(v, 1.0 / law.spec.alpha);
    default: break;
  }
  const RenewalFunction U(law.spec, 0.0, cfg);
  const double target = v * U(width);
  return law.x0 + bisect([&](double w) { return U(w) - target; }, 0.0, width, 1e-12);
}

namespace detail {

inline PathSample hit_drift(const HitLaw& law) {
  PathSample p;
  p.drift = law.spec.kappa;
  const double t = (law.y - law.x0) / law.spec.kappa;
  p.push(0.0, law.x0);
  p.push(t, law.y);
  p.killed = true;
  p.lifetime = t;
  p.terminal = law.y;
  return p;
}

// Lattice analogue: run until the jump that would leave y, kill there.
inline PathSample hit_lattice(const HitLaw& law, double span, RngStream& rng) {
  const double steps = (law.y - law.x0) / span;
  require(std::abs(steps - std::round(steps)) < 1e-9, "hit: lattice target must be a lattice point");
  PathSample p;
  p.push(0.0, law.x0);
  double t = 0.0, x = law.x0;
  const double top = law.y + 0.5 * span;
  for (;;) {
    t += rng.exponential() / law.spec.jump_rate;
    if (x + span > top) break;
    x += span;
    p.push(t, x);
  }
  p.push(t, law.y);
  p.killed = true;
  p.lifetime = p.times.back();
  p.terminal = law.y;
  return p;
}

// Stable: xi under the Circ tilt mapped back to real time.
inline PathSample hit_stable(const HitLaw& law, RngStream& rng, const ConditioningConfig& cfg) {
  PathSample p = sample_stable_adaptive(law.spec.alpha, law.y, law.x0, Tilt::Circ, kInf, rng,
                                        cfg.lamperti_step, cfg.absorb_tol);
  const double t = p.times.back();
  p.values.back() = law.y;
  p.killed = true;
  p.lifetime = t;
  p.terminal = law.y;
  return p;
}

// Compound Poisson with drift: h(x) = u(y - x) is harmonic below y, so the
// transformed process keeps the drift and thins jumps by u(y-x-z)/u(y-x).
// It is absorbed when it creeps onto y.
inline PathSample hit_cpd(const HitLaw& law, RngStream& rng, const ConditioningConfig& cfg) {
  const SubordinatorSpec& s = law.spec;
  const double width = law.y - law.x0;
  auto u = [&](double w) { return potential_density(s, w, cfg.inversion); };
  double umax = 0.0, umin = kInf;
  for (int i = 1; i <= 256; ++i) {
    const double v = u(width * i / 256.0);
    umax = std::max(umax, v);
    umin = std::min(umin, v);
  }
  umax = std::max(umax, 1.0 / s.kappa);  // u(0+) = 1/kappa
  const double bound = 1.25 * umax / umin;
  PathSample p;
  p.drift = s.kappa;
  p.push(0.0, law.x0);
  double t = 0.0, x = law.x0;
  for (;;) {
    const double w = rng.exponential() / (s.jump_rate * bound);
    const double creep = (law.y - x) / s.kappa;
    if (creep <= w) {
      t += creep;
      p.push(t, law.y);
      break;
    }
    t += w;
    x += s.kappa * w;
    const double z = s.jump_law.sample(rng);
    if (x + z >= law.y) continue;
    const double ratio = u(law.y - x - z) / u(law.y - x);
    if (ratio > bound) throw NumericError("hit_cpd: thinning bound violated");
    if (rng.uniform() * bound < ratio) {
      x += z;
      p.push(t, x);
    }
  }
  p.killed = true;
  p.lifetime = t;
  p.terminal = law.y;
  return p;
}

}  // namespace detail

// Path conditioned to be absorbed continuously at y. Exact for drift,
// lattice, stable and drifting compound Poisson; importance weighted
// (unkilled, weight u(y-X_T)/u(y-x0) at the horizon) otherwise.
inline PathSample sample_hit(const HitLaw& law, RngStream& rng, const ConditioningConfig& cfg = {}) {
  law.validate();
  if (auto span = law.spec.lattice_span()) return detail::hit_lattice(law, *span, rng);
  switch (law.spec.family) {
    case Family::Drift: return detail::hit_drift(law);
    case Family::Stable: return detail::hit_stable(law, rng, cfg);
    case Family::CompoundPoissonDrift: return detail::hit_cpd(law, rng, cfg);
    default: break;
  }
  PathSample p = sample_path(law.spec, cfg.horizon, SampleMode::grid(cfg.grid_dt), rng, law.x0);
  p.weight = hit_weight(law, p.values.back(), cfg.inversion);
  return p;
}

// ImportanceWeight: unconditioned path with weight U(a - X_T)/U(a - x0).
// PathDecomposition: terminal value first, then the hit-conditioned path.
// DoobChain: the h-transformed dynamics themselves (lattice and stable only).
enum class StripMethod { ImportanceWeight, PathDecomposition, DoobChain };

namespace detail {

// From x the chain jumps by c at rate r U(a-x-c)/U(a-x) and dies at rate
// 1/U(a-x) = r/(k+1), k the number of lattice steps left.
inline PathSample strip_lattice_chain(const StripLaw& law, double span, RngStream& rng) {
  PathSample p;
  p.push(0.0, law.x0);
  double t = 0.0, x = law.x0;
  auto k = static_cast<long>(std::floor((law.a - law.x0) / span + 1e-12));
  for (;;) {
    t += rng.exponential() / law.spec.jump_rate;
    if (rng.uniform() * static_cast<double>(k + 1) < 1.0) break;
    x += span;
    --k;
    p.push(t, x);
  }
  p.push(t, x);
  p.killed = true;
  p.lifetime = t;
  p.terminal = x;
  return p;
}

}  // namespace detail

inline PathSample sample_strip(const StripLaw& law, StripMethod method, RngStream& rng,
                               const ConditioningConfig& cfg = {}) {
  law.validate();
  if (method == StripMethod::DoobChain) {
    if (auto span = law.spec.lattice_span()) return detail::strip_lattice_chain(law, *span, rng);
    if (law.spec.family != Family::Stable) throw UnsupportedError("sample_strip: DoobChain needs a lattice or stable law");
    PathSample p = sample_stable_adaptive(law.spec.alpha, law.a, law.x0, Tilt::Down, kInf, rng, cfg.lamperti_step);
    // the last point sits at the kill time and carries X_{zeta-}
    p.terminal = p.values.back();
    return p;
  }
  if (method == StripMethod::ImportanceWeight) {
    const SampleMode mode =
        law.spec.finite_activity() ? SampleMode::jump_exact() : SampleMode::grid(cfg.grid_dt);
    PathSample p = sample_path(law.spec, cfg.horizon, mode, rng, law.x0);
    p.weight = weight_strip(law, p.values.back(), cfg.inversion);
    return p;
  }
  const double y = sample_terminal(law, rng, cfg.inversion);
  if (y <= law.x0) {
    // terminal at the start: only lattice laws put mass here
    PathSample p;
    const double t = law.spec.lattice_span() ? rng.exponential() / law.spec.jump_rate : 0.0;
    p.push(0.0, law.x0);
    if (t > 0) p.push(t, law.x0);
    p.killed = true;
    p.lifetime = p.times.back();
    p.terminal = law.x0;
    return p;
  }
  PathSample p = sample_hit(HitLaw{law.spec, y, law.x0}, rng, cfg);
  p.terminal = y;
  return p;
}

struct SupermartingaleReport {
  std::vector<double> ts;
  std::vector<double> means;
  std::vector<double> std_errors;
  double bound = 0.0;
  bool bounded = true;
  bool nonincreasing = true;
};

// Mean of U(a - X_t) 1{X_t <= a} (or u(a - X_t) 1{X_t < a} with use_density)
// along t_grid from one set of paths.
inline SupermartingaleReport check_supermartingale(const SubordinatorSpec& spec, double a,
                                                   const std::vector<double>& t_grid, std::size_t n_paths,
                                                   const RngStream& rng, bool use_density = false,
                                                   double grid_dt = 0.01) {
  require(!t_grid.empty() && std::is_sorted(t_grid.begin(), t_grid.end()), "t_grid must be sorted");
  const double horizon = t_grid.back();
  const RenewalFunction U(spec);
  auto h = [&](double x) -> double {
    if (use_density) return x < a ? U.density(a - x) : 0.0;
    return x <= a ? U(a - x) : 0.0;
  };
  const SampleMode mode = spec.finite_activity() ? SampleMode::jump_exact() : SampleMode::grid(grid_dt);
  using Acc = std::vector<RunningStats>;
  const Acc acc = batched_reduce(
      n_paths, rng, Acc(t_grid.size()),
      [&](Acc& s, RngStream& r, std::size_t) {
        const PathSample p = sample_path(spec, horizon, mode, r);
        for (std::size_t i = 0; i < t_grid.size(); ++i) s[i].add(h(p.value_at(t_grid[i])));
      },
      [](Acc& out, Acc&& part) {
        for (std::size_t i = 0; i < out.size(); ++i) out[i].merge(part[i]);
      });
  SupermartingaleReport rep;
  rep.ts = t_grid;
  rep.bound = use_density ? U.density(a) : U(a);
  const double k = thresholds().sigma;
  for (std::size_t i = 0; i < t_grid.size(); ++i) {
    rep.means.push_back(acc[i].mean);
    rep.std_errors.push_back(acc[i].std_error());
    if (acc[i].mean > rep.bound + k * rep.std_errors.back()) rep.bounded = false;
    if (i > 0) {
      const double slack = k * std::hypot(rep.std_errors[i], rep.std_errors[i - 1]);
      if (rep.means[i] > rep.means[i - 1] + slack) rep.nonincreasing = false;
    }
  }
  return rep;
}

// An event observed at a stopping time T. stopping_time returns +inf when T
// does not occur before the path ends; event is evaluated only when T is finite.
struct StoppedEvent {
  std::string name;
  std::function<double(const PathSample&)> stopping_time;
  std::function<bool(const PathSample&, double)> event;
  std::optional<double> exact;  // P-down(A, T < zeta), when known
};

struct KillingLimitRow {
  double q = 0.0;
  double estimate = 0.0;
  double std_error = 0.0;
};

struct KillingLimitReport {
  std::string event;
  std::vector<KillingLimitRow> rows;
  Extrapolation extrapolated;
  double direct_limit = 0.0;   // E[1_A (tau - T)^+] / E[tau]
  double direct_std_error = 0.0;
  double weighted = 0.0;       // E[1_A 1{T<inf} U(a - X_T)/U(a - x0)] with T frozen at the path end
  double weighted_std_error = 0.0;
  bool inconclusive = false;
};

// P(A, T < e_q | e_q < tau_a) from jump-exact paths run to tau_a, with the
// exponential time integrated out:
//   numerator   E[1_A (e^{-qT} - e^{-q tau})^+]
//   denominator E[1 - e^{-q tau}]
// All q share the same paths; the extrapolation error bar uses the per-path
// influence function of the combined ratio.
inline KillingLimitReport verify_killing_limit(const StripLaw& law, const StoppedEvent& ev,
                                               const std::vector<double>& q_seq, std::size_t n_paths,
                                               const RngStream& rng, double ci_limit = 0.05) {
  law.validate();
  require(law.spec.finite_activity(), "verify_killing_limit: needs a jump-exact family");
  require(!q_seq.empty(), "verify_killing_limit: empty q sequence");
  struct Sample {
    double tau;
    double T;
    bool in_A;
    double weight;
  };
  const RenewalFunction U(law.spec);
  const double Ua = U(law.a - law.x0);
  auto samples = parallel_collect<Sample>(n_paths, rng, [&](RngStream& s, std::size_t) {
    const PathSample p = sample_until_above(law.spec, law.a, s, law.x0);
    const double tau = first_passage_time(p, law.a);
    const double T = ev.stopping_time(p);
    const bool A = std::isfinite(T) && ev.event(p, T);
    double w = 0.0;
    if (A && T < tau) w = U(law.a - p.value_at(T)) / Ua;
    return Sample{tau, T, A, w};
  });

  KillingLimitReport rep;
  rep.event = ev.name;
  const std::size_t nq = q_seq.size();
  std::vector<double> num(nq, 0.0), den(nq, 0.0);
  for (const auto& s : samples)
    for (std::size_t i = 0; i < nq; ++i) {
      const double q = q_seq[i];
      den[i] += -std::expm1(-q * s.tau);
      if (s.in_A && s.T < s.tau) num[i] += std::exp(-q * s.T) - std::exp(-q * s.tau);
    }
  const double n = static_cast<double>(samples.size());
  std::vector<double> ratio(nq), values(nq);
  for (std::size_t i = 0; i < nq; ++i) ratio[i] = num[i] / den[i];
  // per-path influence of each ratio and of the extrapolated combination
  const auto L = lagrange_weights_at_zero(q_seq);
  std::vector<RunningStats> infl(nq);
  RunningStats combined, wstat, dnum, dden;
  for (const auto& s : samples) {
    double c = 0.0;
    for (std::size_t i = 0; i < nq; ++i) {
      const double q = q_seq[i];
      const double ni = (s.in_A && s.T < s.tau) ? std::exp(-q * s.T) - std::exp(-q * s.tau) : 0.0;
      const double di = -std::expm1(-q * s.tau);
      const double psi = (ni - ratio[i] * di) / (den[i] / n);
      infl[i].add(psi);
      c += L[i] * psi;
    }
    combined.add(c);
    wstat.add(s.weight);
    dnum.add((s.in_A && s.T < s.tau) ? s.tau - s.T : 0.0);
    dden.add(s.tau);
  }
  for (std::size_t i = 0; i < nq; ++i) {
    rep.rows.push_back({q_seq[i], ratio[i], infl[i].std_error()});
    values[i] = ratio[i];
  }
  rep.extrapolated = extrapolate_q(q_seq, values);
  rep.extrapolated.stat_error = combined.std_error();
  rep.direct_limit = dnum.mean / dden.mean;
  {
    // delta method for the ratio of means
    RunningStats d;
    for (const auto& s : samples) {
      const double a = (s.in_A && s.T < s.tau) ? s.tau - s.T : 0.0;
      d.add((a - rep.direct_limit * s.tau) / dden.mean);
    }
    rep.direct_std_error = d.std_error();
  }
  rep.weighted = wstat.mean;
  rep.weighted_std_error = wstat.std_error();
  rep.inconclusive = rep.extrapolated.error() > ci_limit;
  return rep;
}

}  // namespace subcond
