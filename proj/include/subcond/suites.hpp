#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "conditioning.hpp"
#include "ladderbox.hpp"
#include "lamperti.hpp"
#include "lastpassage.hpp"
#include "models.hpp"
#include "parallel.hpp"
#include "potential.hpp"
#include "verify.hpp"

// One suite per acceptance criterion. Every threshold below is pinned here;
// `scale` only shrinks sample sizes (the CLI uses it for quick runs).
namespace subcond {

struct SuiteOptions {
  std::uint64_t seed = 7;
  double scale = 1.0;

  std::size_t n(std::size_t full, std::size_t floor = 200) const {
    return std::max(floor, static_cast<std::size_t>(std::llround(static_cast<double>(full) * scale)));
  }
};

struct SuiteResult {
  int criterion = 0;
  std::string id;
  std::string title;
  std::vector<TestReport> reports;

  bool pass() const {
    return !reports.empty() && std::all_of(reports.begin(), reports.end(), [](const TestReport& r) { return r.pass(); });
  }
};

inline void to_json(nlohmann::json& j, const SuiteResult& s) {
  j = nlohmann::json{{"criterion", s.criterion}, {"id", s.id}, {"title", s.title},
                     {"status", s.pass() ? "pass" : "fail"}, {"reports", s.reports}};
}

namespace detail {

inline TestReport max_residual_report(std::string name, double residual, double tol, std::size_t n) {
  TestReport r = abs_report(std::move(name), residual, 0.0, tol);
  r.n = n;
  return r;
}

inline TestReport below_report(std::string name, double statistic, double threshold, std::size_t n) {
  TestReport r;
  r.name = std::move(name);
  r.statistic = statistic;
  r.threshold = threshold;
  r.n = n;
  r.status = status_of(statistic < threshold);
  return r;
}

inline std::string fmt(double v) {
  std::string s = std::to_string(v);
  s.erase(s.find_last_not_of('0') + 1);
  if (!s.empty() && s.back() == '.') s.pop_back();
  return s;
}

}  // namespace detail

// 1. Killing level of the Poisson Doob chain is uniform on {0, ..., a}.
inline SuiteResult suite_strip_poisson(const SuiteOptions& o) {
  SuiteResult s{1, "strip", "Poisson strip conditioning: uniform killing level", {}};
  const std::size_t n = o.n(100000);
  for (int a : {2, 3}) {
    const StripLaw law{SubordinatorSpec::poisson(1.0), static_cast<double>(a), 0.0};
    const auto levels = parallel_collect<double>(n, RngStream(o.seed, 100 + a), [&](RngStream& r, std::size_t) {
      return sample_strip(law, StripMethod::DoobChain, r).values.back();
    });
    std::vector<double> counts(a + 1, 0.0), probs(a + 1, 1.0 / (a + 1));
    for (double v : levels) counts[static_cast<std::size_t>(std::lround(v))] += 1;
    auto rep = chi_square_report("killing_level_a" + std::to_string(a), chi_square(counts, probs));
    rep.criterion = "1";
    s.reports.push_back(rep);
  }
  return s;
}

// 2. Terminal value of the stable strip law has CDF y^alpha.
inline SuiteResult suite_stable_terminal(const SuiteOptions& o) {
  SuiteResult s{2, "terminal", "Stable strip terminal law against y^alpha", {}};
  const std::size_t n = o.n(100000);
  for (double alpha : {0.3, 0.5, 0.7}) {
    const StripLaw law{SubordinatorSpec::stable(alpha), 1.0, 0.0};
    const auto ys = parallel_collect<double>(n, RngStream(o.seed, 200 + std::lround(10 * alpha)),
                                             [&](RngStream& r, std::size_t) {
                                               return *sample_strip(law, StripMethod::DoobChain, r).terminal;
                                             });
    const auto k = ks_test(ys, [&](double y) { return y <= 0 ? 0.0 : y >= 1 ? 1.0 : std::pow(y, alpha); });
    auto rep = detail::below_report("ks_alpha" + detail::fmt(alpha), k.statistic, 3 * 1.36 / std::sqrt(static_cast<double>(n)), n);
    rep.p_value = k.p_value;
    rep.criterion = "2";
    s.reports.push_back(rep);
  }
  return s;
}

// 3. q-sequence conditional probabilities extrapolate to the strip-law value.
inline SuiteResult suite_killing_limit(const SuiteOptions& o) {
  SuiteResult s{3, "killing", "Killing limit for Poisson and Drift events", {}};
  const std::vector<double> qs = {1.0, 0.3, 0.1, 0.03};
  const double tol = 0.01;
  const StripLaw pois{SubordinatorSpec::poisson(1.0), 3.0, 0.0};
  double moved = 0.0;
  for (int k = 1; k <= 3; ++k) moved += std::exp(-2.0) * std::pow(2.0, k) / std::tgamma(k + 1.0) * (4.0 - k) / 4.0;
  std::vector<std::pair<StripLaw, StoppedEvent>> cases = {
      {pois,
       {"poisson_empty_at_1", [](const PathSample&) { return 1.0; },
        [](const PathSample& p, double T) { return p.value_at(T) == 0; }, std::exp(-1.0)}},
      {pois,
       {"poisson_first_jump_before_1", [](const PathSample& p) { return p.times.size() > 1 ? p.times[1] : kInf; },
        [](const PathSample&, double T) { return T <= 1.0; }, (1 - std::exp(-1.0)) * 0.75}},
      {pois,
       {"poisson_moved_by_2", [](const PathSample&) { return 2.0; },
        [](const PathSample& p, double T) { return p.value_at(T) >= 1; }, moved}}};
  const StripLaw drift{SubordinatorSpec::drift(1.0), 1.0, 0.0};
  for (double T : {0.3, 0.5, 0.8})
    cases.push_back({drift,
                     {"drift_alive_at_" + detail::fmt(T), [T](const PathSample&) { return T; },
                      [](const PathSample&, double) { return true; }, 1.0 - T}});
  for (std::size_t i = 0; i < cases.size(); ++i) {
    const auto& [law, ev] = cases[i];
    const std::size_t n = law.spec.family == Family::Drift ? o.n(1000) : o.n(100000);
    const auto r = verify_killing_limit(law, ev, qs, n, RngStream(o.seed, 300 + i));
    auto rep = abs_report(ev.name, r.extrapolated.limit, *ev.exact, tol);
    rep.n = n;
    rep.std_error = r.extrapolated.stat_error;
    for (const auto& row : r.rows) rep.metadata["q=" + detail::fmt(row.q)] = row.estimate;
    rep.criterion = "3";
    s.reports.push_back(rep);
  }
  return s;
}

// 4. Exact Lamperti exponents and the Laplace exponent of extracted xi.
inline SuiteResult suite_lamperti(const SuiteOptions& o) {
  SuiteResult s{4, "lamperti", "Stable/Lamperti exact identities and extracted xi", {}};
  const double tol = thresholds().special;
  double worst = 0.0;
  for (int i = 1; i <= 9; ++i) {
    const double a = 0.1 * i;
    worst = std::max({worst, std::abs(phi_xi(a - 1.0, a)), std::abs(phi_circ(0.0, a)),
                      std::abs(phi_xi(0.0, a) - 1.0 / std::tgamma(1.0 - a)),
                      std::abs(phi_down(0.0, a) - std::tgamma(1.0 + a))});
  }
  auto id = detail::max_residual_report("gamma_identities", worst, tol, 9);
  id.criterion = "4";
  s.reports.push_back(id);

  const double alpha = 0.6;
  const std::vector<double> lams = {0.5, 1.0, 2.0};
  const std::size_t n = o.n(10000);
  using Acc = std::vector<RunningStats>;
  const auto acc = batched_reduce(
      n, RngStream(o.seed, 400), Acc(lams.size()),
      [&](Acc& a, RngStream& r, std::size_t) {
        const auto x = sample_stable_adaptive(alpha, 2.0, 0.0, Tilt::None, 1.0, r, 0.01);
        const auto v = lamperti_transform(x, 2.0, alpha);
        const bool alive = v.xi_path.alive_at(1.0 - 1e-9);
        const double xi = alive ? v.xi_at(1.0 - 1e-9) : 0.0;
        for (std::size_t i = 0; i < lams.size(); ++i) a[i].add(alive ? std::exp(lams[i] * xi) : 0.0);
      },
      [](Acc& out, Acc&& p) {
        for (std::size_t i = 0; i < out.size(); ++i) out[i].merge(p[i]);
      });
  for (std::size_t i = 0; i < lams.size(); ++i) {
    // E[e^{lam xi_1}; 1 < zeta] = exp(-Gamma(1+lam)/Gamma(1+lam-alpha))
    const double exact = std::exp(-std::tgamma(1 + lams[i]) / std::tgamma(1 + lams[i] - alpha));
    auto rep = sigma_report("xi_exponent_lambda" + detail::fmt(lams[i]), acc[i].mean, acc[i].std_error(), exact, n);
    rep.criterion = "4";
    s.reports.push_back(rep);
  }
  return s;
}

// 5. Undershoot at first passage of the alpha = 1/2 stable subordinator.
inline SuiteResult suite_undershoot(const SuiteOptions& o) {
  SuiteResult s{5, "undershoot", "Stable undershoot law", {}};
  const double alpha = 0.5;
  const std::size_t n = o.n(100000);
  const auto ys = parallel_collect<double>(n, RngStream(o.seed, 500), [&](RngStream& r, std::size_t) {
    const auto p = sample_stable_adaptive(alpha, 1.0, 0.0, Tilt::None, kInf, r, 0.01);
    return 1.0 - p.values.back();
  });
  auto rep = ks_report("undershoot_alpha0.5", ks_test(ys, [&](double y) { return undershoot_cdf(y, alpha); }),
                       thresholds().p_value);
  rep.criterion = "5";
  s.reports.push_back(rep);
  return s;
}

// 6. Closed form, numerical inversion and Monte Carlo of the renewal function.
inline SuiteResult suite_potential(const SuiteOptions& o) {
  SuiteResult s{6, "potential", "Potential triangle: closed form, inversion, Monte Carlo", {}};
  std::vector<double> xs;
  for (int i = 0; i < 10; ++i) xs.push_back(0.3 + 0.5 * i);
  const std::vector<SubordinatorSpec> specs = {SubordinatorSpec::drift(2.0), SubordinatorSpec::poisson(1.0),
                                               SubordinatorSpec::stable(0.5)};
  for (std::size_t f = 0; f < specs.size(); ++f) {
    const auto& spec = specs[f];
    const std::size_t n = spec.family == Family::Drift ? o.n(100) : o.n(20000);
    double worst_rel = 0.0, worst_z_closed = 0.0, worst_z_inv = 0.0;
    nlohmann::json rows = nlohmann::json::array();
    for (std::size_t i = 0; i < xs.size(); ++i) {
      const double c = potential_closed_form(spec, 0.0, xs[i]);
      const double v = potential_numeric(spec, 0.0, xs[i]);
      const auto mc = potential_mc(spec, 0.0, xs[i], n, RngStream(o.seed, 600 + 16 * f + i));
      // drift paths are deterministic; there the comparison is at the inversion tolerance
      const double se = std::max(mc.std_error, 1e-5 * std::abs(c) / thresholds().sigma);
      worst_rel = std::max(worst_rel, std::abs(v - c) / std::abs(c));
      worst_z_closed = std::max(worst_z_closed, std::abs(mc.estimate - c) / se);
      worst_z_inv = std::max(worst_z_inv, std::abs(mc.estimate - v) / se);
      rows.push_back({{"x", xs[i]}, {"closed", c}, {"inversion", v}, {"mc", mc.estimate}, {"mc_se", mc.std_error}});
    }
    const std::string fam = to_string(spec.family);
    auto r1 = detail::below_report(fam + "_closed_vs_inversion_rel", worst_rel, 1e-5, xs.size());
    r1.metadata["grid"] = rows;
    auto r2 = detail::below_report(fam + "_closed_vs_mc_max_sigma", worst_z_closed, thresholds().sigma + 1e-12, n);
    auto r3 = detail::below_report(fam + "_inversion_vs_mc_max_sigma", worst_z_inv, thresholds().sigma + 1e-12, n);
    for (auto* r : {&r1, &r2, &r3}) {
      r->criterion = "6";
      s.reports.push_back(*r);
    }
  }
  return s;
}

// 7. Exact CTMC identities and the conditioned avoid-zero sampler.
inline SuiteResult suite_ctmc(const SuiteOptions& o) {
  SuiteResult s{7, "ctmc", "Last-passage identities and sampler on bundled chains", {}};
  const std::vector<std::pair<std::string, CtmcSpec>> chains = {
      {"two_state", CtmcSpec::two_state()}, {"birth_death", CtmcSpec::birth_death()}, {"five_state", CtmcSpec::five_state()}};
  const double tol = thresholds().linalg;
  for (const auto& [name, c] : chains) {
    const CtmcAnalysis A(c);
    double exc = 0.0, lz = 0.0;
    std::size_t k = 0;
    for (double q : {0.1, 1.0, 10.0})
      for (int x = 0; x < A.size(); ++x) {
        for (double t : {0.1, 1.0}) exc = std::max(exc, check_excessive_identity(A, x, q, t).residual());
        lz = std::max(lz, check_last_zero_identity(A, x, q, 1.5).residual());
        ++k;
      }
    auto r1 = detail::max_residual_report(name + "_excessive_identity", exc, tol, 2 * k);
    auto r2 = detail::max_residual_report(name + "_last_zero_identity", lz, tol, k);
    r1.criterion = r2.criterion = "7";
    s.reports.push_back(r1);
    s.reports.push_back(r2);
  }

  const std::size_t n = o.n(100000);
  {
    const LastPassageLaw law{CtmcSpec::birth_death(), 2.0};
    const ConditionedAvoidSampler S(law);
    const double Va = S.V0a();
    const auto gs = parallel_collect<double>(n, RngStream(o.seed, 700), [&](RngStream& r, std::size_t) { return S.sample(r).g; });
    const auto k = ks_test(gs, [&](double t) { return t <= 0 ? 0.0 : S.analysis().V0(std::min(t, law.a), 0.0)(0) / Va; });
    auto rep = detail::below_report("last_zero_law_ks", k.statistic, 0.02, n);
    rep.p_value = k.p_value;
    rep.criterion = "7";
    s.reports.push_back(rep);
  }
  for (int x0 : {0, 3}) {
    CtmcSpec c = x0 == 0 ? CtmcSpec::birth_death() : CtmcSpec::five_state();
    c.start = x0;
    const LastPassageLaw law{c, 2.0};
    const double t = law.a / 2;
    const Eigen::VectorXd exact = conditioned_marginal(law, t);
    const ConditionedAvoidSampler S(law);
    const int m = c.size();
    const auto states = parallel_collect<int>(n, RngStream(o.seed, 710 + x0), [&](RngStream& r, std::size_t) {
      const auto smp = S.sample(r);
      return smp.path.alive_at(t) ? static_cast<int>(smp.path.value_at(t)) : m;
    });
    Eigen::VectorXd emp = Eigen::VectorXd::Zero(m + 1);
    for (int st : states) emp(st) += 1.0 / static_cast<double>(states.size());
    auto rep = detail::below_report((x0 == 0 ? "birth_death" : "five_state") + std::string("_marginal_tv"),
                                    0.5 * (emp - exact).cwiseAbs().sum(), 0.02, n);
    rep.criterion = "7";
    s.reports.push_back(rep);
  }
  return s;
}

// 8. Strip terminal law against the last-zero law of D.
inline SuiteResult suite_overshoot(const SuiteOptions& o) {
  SuiteResult s{8, "overshoot", "Overshoot cross-check for compound Poisson with drift", {}};
  const auto spec = SubordinatorSpec::compound_poisson_drift(1.0, 1.0, JumpLaw::exponential(1.0));
  const auto r = overshoot_consistency(spec, 2.0, o.n(20000), RngStream(o.seed, 800));
  auto rep = ks_report("strip_terminal_vs_last_zero", r.ks, thresholds().p_value);
  rep.criterion = "8";
  s.reports.push_back(rep);
  return s;
}

// 9. Brownian ladder box.
inline SuiteResult suite_brownian(const SuiteOptions& o) {
  SuiteResult s{9, "brownian", "Brownian ladder box", {}};
  double worst = 0.0;
  for (double a : {0.5, 1.0, 2.0, 4.0})
    worst = std::max(worst, std::abs(V_box({a, kInf}) - std::sqrt(2 * a / kPi)));
  auto r0 = detail::max_residual_report("V_box_unbounded_height", worst, thresholds().linalg, 4);
  r0.criterion = "9";
  s.reports.push_back(r0);

  {
    const LadderBoxLaw law{1.0, 1.0, 1e-4};
    const std::size_t n = o.n(100000);
    const auto draws = parallel_collect<std::optional<std::pair<double, double>>>(
        n, RngStream(o.seed, 900), [&](RngStream& r, std::size_t) { return sample_box_pair(law, r); });
    std::vector<std::pair<double, double>> pairs;
    for (const auto& d : draws)
      if (d) pairs.push_back(*d);
    std::vector<double> se, ye;
    for (int i = 0; i <= 8; ++i) {
      se.push_back(law.a * i / 8);
      ye.push_back(law.b * i / 8);
    }
    const double V = V_box(law);
    auto rep = chi_square_report(
        "joint_g_S_histogram",
        chi_square_grid(pairs, [&](double s0, double s1, double y0, double y1) { return box_measure(s0, s1, y0, y1) / V; }, se, ye));
    rep.metadata["skeleton_paths"] = n;
    rep.metadata["dt"] = law.skeleton_dt;
    rep.criterion = "9";
    s.reports.push_back(rep);
  }
  {
    const LadderBoxLaw law{1.0, 1.0, 1e-3};
    const double sh = 0.8;
    const std::vector<double> ts = {sh / 4, sh / 2, 3 * sh / 4};
    const double h0 = h_s_box(law, sh, 0.0, 0.0, 0.0);
    const std::size_t n = o.n(100000);
    using Acc = std::vector<RunningStats>;
    const auto acc = batched_reduce(
        n, RngStream(o.seed, 910), Acc(ts.size()),
        [&](Acc& a, RngStream& r, std::size_t) {
          Skeleton sk;
          for (std::size_t i = 0; i < ts.size(); ++i) {
            while (sk.t < ts[i] - 1e-12) sk.step(law.skeleton_dt, r);
            a[i].add(sk.s < law.b ? h_s_box(law, sh, ts[i], sk.s - sk.x, sk.x) : 0.0);
          }
        },
        [](Acc& out, Acc&& p) {
          for (std::size_t i = 0; i < out.size(); ++i) out[i].merge(p[i]);
        });
    for (std::size_t i = 0; i < ts.size(); ++i) {
      auto rep = sigma_report("h_s_identity_t" + detail::fmt(ts[i]), acc[i].mean, acc[i].std_error(), h0, n);
      rep.criterion = "9";
      s.reports.push_back(rep);
    }
  }
  {
    const std::size_t n = o.n(100000);
    const auto xs = parallel_collect<double>(n, RngStream(o.seed, 920), [&](RngStream& r, std::size_t) {
      return sample_post_supremum(1.0, 1.0, r).values.back();
    });
    auto rep = ks_report("post_supremum_bessel3", ks_test(xs, [](double x) { return bes3_cdf(1.0, x); }), thresholds().p_value);
    rep.criterion = "9";
    s.reports.push_back(rep);
  }
  return s;
}

struct SuiteDef {
  int criterion;
  std::string id;
  std::function<SuiteResult(const SuiteOptions&)> run;
};

inline const std::vector<SuiteDef>& statistical_suites() {
  static const std::vector<SuiteDef> defs = {
      {1, "strip", suite_strip_poisson},   {2, "terminal", suite_stable_terminal}, {3, "killing", suite_killing_limit},
      {4, "lamperti", suite_lamperti},     {5, "undershoot", suite_undershoot},    {6, "potential", suite_potential},
      {7, "ctmc", suite_ctmc},             {8, "overshoot", suite_overshoot},      {9, "brownian", suite_brownian}};
  return defs;
}

inline nlohmann::json suites_json(const std::vector<SuiteResult>& results, const SuiteOptions& o) {
  bool ok = true;
  for (const auto& r : results) ok = ok && r.pass();
  return nlohmann::json{{"seed", o.seed}, {"scale", o.scale}, {"status", ok ? "pass" : "fail"}, {"suites", results}};
}

inline std::vector<SuiteResult> run_statistical_suites(const SuiteOptions& o) {
  std::vector<SuiteResult> out;
  for (const auto& d : statistical_suites()) out.push_back(d.run(o));
  return out;
}

// 10. The serialized report of suites 1-9 does not depend on the thread count.
// `reference` is an existing run at the current thread setting, if any.
inline SuiteResult suite_determinism(const SuiteOptions& o, const std::vector<SuiteResult>* reference = nullptr,
                                     std::vector<unsigned> thread_counts = {1, 8}) {
  SuiteResult s{10, "determinism", "Byte-identical reports across thread counts", {}};
  const unsigned saved = thread_count();
  std::vector<std::string> dumps;
  for (unsigned t : thread_counts) {
    if (reference && t == saved) {
      dumps.push_back(suites_json(*reference, o).dump());
      continue;
    }
    set_thread_count(t);
    dumps.push_back(suites_json(run_statistical_suites(o), o).dump());
  }
  set_thread_count(saved);
  std::size_t mismatches = 0;
  for (const auto& d : dumps) mismatches += d != dumps.front();
  TestReport r;
  r.name = "threads";
  for (unsigned t : thread_counts) r.name += "_" + std::to_string(t);
  r.statistic = static_cast<double>(mismatches);
  r.threshold = 0.0;
  r.n = dumps.size();
  r.metadata["bytes"] = dumps.front().size();
  r.status = status_of(mismatches == 0);
  r.criterion = "10";
  s.reports.push_back(r);
  return s;
}

}  // namespace subcond
