#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <boost/math/special_functions/gamma.hpp>
#include <json.hpp>

#include "common.hpp"
#include "numerics.hpp"

namespace subcond {

// Shared pass/fail thresholds for every suite.
struct Thresholds {
  double special = 1e-12;  // special-function identities
  double linalg = 1e-8;    // linear-algebra identities
  double sigma = 3.0;      // Monte Carlo comparisons in standard errors
  double p_value = 0.01;   // goodness-of-fit tests
  double min_ess = 100.0;  // below this a weighted test is underpowered
};

inline Thresholds& thresholds() {
  static Thresholds t;
  return t;
}

// Welford accumulator; merging is done in a fixed order by the caller.
struct RunningStats {
  std::size_t n = 0;
  double mean = 0.0;
  double m2 = 0.0;

  void add(double x) {
    ++n;
    const double d = x - mean;
    mean += d / static_cast<double>(n);
    m2 += d * (x - mean);
  }
  void merge(const RunningStats& o) {
    if (o.n == 0) return;
    if (n == 0) {
      *this = o;
      return;
    }
    const double nn = static_cast<double>(n + o.n);
    const double d = o.mean - mean;
    mean += d * static_cast<double>(o.n) / nn;
    m2 += o.m2 + d * d * static_cast<double>(n) * static_cast<double>(o.n) / nn;
    n += o.n;
  }
  double variance() const { return n > 1 ? m2 / static_cast<double>(n - 1) : 0.0; }
  double std_error() const { return n > 1 ? std::sqrt(variance() / static_cast<double>(n)) : kInf; }
};

struct WeightedStats {
  double sw = 0.0, sw2 = 0.0, swx = 0.0, swx2 = 0.0;
  std::size_t n = 0;
  void add(double x, double w) {
    ++n;
    sw += w;
    sw2 += w * w;
    swx += w * x;
    swx2 += w * x * x;
  }
  void merge(const WeightedStats& o) {
    n += o.n;
    sw += o.sw;
    sw2 += o.sw2;
    swx += o.swx;
    swx2 += o.swx2;
  }
  double mean() const { return sw > 0 ? swx / sw : 0.0; }
  double ess() const { return sw2 > 0 ? sw * sw / sw2 : 0.0; }
};

struct McEstimate {
  double estimate = 0.0;
  double std_error = 0.0;
  std::size_t n = 0;
  bool truncated = false;
};

inline McEstimate to_estimate(const RunningStats& s) { return {s.mean, s.std_error(), s.n, false}; }

// Survival function of the Kolmogorov distribution.
inline double kolmogorov_sf(double lambda) {
  if (lambda <= 0) return 1.0;
  if (lambda < 1.18) {
    const double c = kPi * kPi / (8.0 * lambda * lambda);
    double s = 0.0;
    for (int k = 1; k < 40; k += 2) s += std::exp(-c * k * k);
    return std::clamp(1.0 - std::sqrt(2.0 * kPi) / lambda * s, 0.0, 1.0);
  }
  double s = 0.0;
  for (int k = 1; k < 100; ++k) {
    const double term = std::exp(-2.0 * k * k * lambda * lambda);
    s += (k & 1) ? term : -term;
    if (term < 1e-300) break;
  }
  return std::clamp(2.0 * s, 0.0, 1.0);
}

inline double ks_p_value(double d, double n_eff) {
  const double rn = std::sqrt(n_eff);
  return kolmogorov_sf((rn + 0.12 + 0.11 / rn) * d);
}

struct KsResult {
  double statistic = 0.0;
  double p_value = 1.0;
  double n_eff = 0.0;
};

inline KsResult ks_test(std::vector<double> xs, const std::function<double(double)>& cdf) {
  require(!xs.empty(), "ks_test: no samples");
  std::sort(xs.begin(), xs.end());
  const double n = static_cast<double>(xs.size());
  double d = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double f = cdf(xs[i]);
    d = std::max({d, (i + 1) / n - f, f - i / n});
  }
  return {d, ks_p_value(d, n), n};
}

// Weighted empirical CDF against a model CDF; the effective size is Kish's ESS.
inline KsResult ks_test_weighted(const std::vector<double>& xs, const std::vector<double>& ws,
                                 const std::function<double(double)>& cdf) {
  require(xs.size() == ws.size() && !xs.empty(), "ks_test_weighted: size mismatch");
  std::vector<std::size_t> idx(xs.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return xs[a] < xs[b]; });
  double sw = 0.0, sw2 = 0.0;
  for (double w : ws) {
    sw += w;
    sw2 += w * w;
  }
  require(sw > 0, "ks_test_weighted: zero total weight");
  double cum = 0.0, d = 0.0;
  for (std::size_t k = 0; k < idx.size(); ++k) {
    const double f = cdf(xs[idx[k]]);
    d = std::max(d, f - cum / sw);
    cum += ws[idx[k]];
    if (k + 1 == idx.size() || xs[idx[k + 1]] != xs[idx[k]]) d = std::max(d, cum / sw - f);
  }
  const double ess = sw * sw / sw2;
  return {d, ks_p_value(d, ess), ess};
}

inline KsResult ks_two_sample(std::vector<double> a, std::vector<double> b,
                              std::vector<double> wa = {}, std::vector<double> wb = {}) {
  require(!a.empty() && !b.empty(), "ks_two_sample: empty sample");
  auto prepare = [](std::vector<double>& x, std::vector<double>& w) {
    if (w.empty()) w.assign(x.size(), 1.0);
    std::vector<std::size_t> idx(x.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](auto i, auto j) { return x[i] < x[j]; });
    std::vector<double> xs(x.size()), ws(x.size());
    double sw = 0.0, sw2 = 0.0;
    for (std::size_t k = 0; k < idx.size(); ++k) {
      xs[k] = x[idx[k]];
      ws[k] = w[idx[k]];
      sw += ws[k];
      sw2 += ws[k] * ws[k];
    }
    x = std::move(xs);
    w = std::move(ws);
    for (double& v : w) v /= sw;
    return sw * sw / sw2;
  };
  const double na = prepare(a, wa), nb = prepare(b, wb);
  std::size_t i = 0, j = 0;
  double fa = 0.0, fb = 0.0, d = 0.0;
  while (i < a.size() || j < b.size()) {
    const double v = (j >= b.size() || (i < a.size() && a[i] <= b[j])) ? a[i] : b[j];
    while (i < a.size() && a[i] == v) fa += wa[i++];
    while (j < b.size() && b[j] == v) fb += wb[j++];
    d = std::max(d, std::abs(fa - fb));
  }
  const double n_eff = na * nb / (na + nb);
  return {d, ks_p_value(d, n_eff), n_eff};
}

struct ChiSquareResult {
  double statistic = 0.0;
  double p_value = 1.0;
  int dof = 0;
  std::size_t n = 0;
};

// Pearson test of counts against cell probabilities. Adjacent cells are pooled
// until each pooled expected count reaches `min_expected`.
inline ChiSquareResult chi_square(const std::vector<double>& counts, const std::vector<double>& probs,
                                  double min_expected = 5.0, int fitted_params = 0) {
  require(counts.size() == probs.size() && !counts.empty(), "chi_square: size mismatch");
  const double n = std::accumulate(counts.begin(), counts.end(), 0.0);
  std::vector<double> obs, expct;
  double o = 0.0, e = 0.0;
  for (std::size_t k = 0; k < counts.size(); ++k) {
    o += counts[k];
    e += probs[k] * n;
    if (e >= min_expected) {
      obs.push_back(o);
      expct.push_back(e);
      o = e = 0.0;
    }
  }
  if (e > 0 || o > 0) {
    if (expct.empty()) {
      obs.push_back(o);
      expct.push_back(e);
    } else {
      obs.back() += o;
      expct.back() += e;
    }
  }
  double stat = 0.0;
  for (std::size_t k = 0; k < obs.size(); ++k) {
    if (expct[k] > 0) stat += (obs[k] - expct[k]) * (obs[k] - expct[k]) / expct[k];
    else if (obs[k] > 0) stat = kInf;
  }
  const int dof = static_cast<int>(obs.size()) - 1 - fitted_params;
  ChiSquareResult r{stat, 1.0, dof, static_cast<std::size_t>(n)};
  if (dof > 0) r.p_value = std::isfinite(stat) ? boost::math::gamma_q(0.5 * dof, 0.5 * stat) : 0.0;
  return r;
}

// Two-dimensional goodness of fit. cell_mass(x0,x1,y0,y1) returns the model
// probability of the cell; mass outside the grid forms one extra cell.
inline ChiSquareResult chi_square_grid(
    const std::vector<std::pair<double, double>>& samples,
    const std::function<double(double, double, double, double)>& cell_mass,
    const std::vector<double>& xedges, const std::vector<double>& yedges) {
  require(xedges.size() >= 2 && yedges.size() >= 2, "chi_square_grid: need at least one cell");
  const std::size_t nx = xedges.size() - 1, ny = yedges.size() - 1;
  std::vector<double> counts(nx * ny + 1, 0.0), probs(nx * ny + 1, 0.0);
  for (const auto& [x, y] : samples) {
    const auto ix = std::upper_bound(xedges.begin(), xedges.end(), x) - xedges.begin() - 1;
    const auto iy = std::upper_bound(yedges.begin(), yedges.end(), y) - yedges.begin() - 1;
    if (ix < 0 || iy < 0 || ix >= static_cast<long>(nx) || iy >= static_cast<long>(ny))
      counts.back() += 1;
    else
      counts[static_cast<std::size_t>(ix) * ny + static_cast<std::size_t>(iy)] += 1;
  }
  double inside = 0.0;
  for (std::size_t i = 0; i < nx; ++i)
    for (std::size_t j = 0; j < ny; ++j) {
      probs[i * ny + j] = cell_mass(xedges[i], xedges[i + 1], yedges[j], yedges[j + 1]);
      inside += probs[i * ny + j];
    }
  probs.back() = std::max(0.0, 1.0 - inside);
  return chi_square(counts, probs);
}

struct Extrapolation {
  double limit = 0.0;
  double stat_error = 0.0;
  double model_error = 0.0;
  double error() const { return stat_error + model_error; }
};

// Lagrange weights of the interpolating polynomial evaluated at 0.
inline std::vector<double> lagrange_weights_at_zero(const std::vector<double>& qs) {
  std::vector<double> w(qs.size(), 1.0);
  for (std::size_t i = 0; i < qs.size(); ++i)
    for (std::size_t j = 0; j < qs.size(); ++j)
      if (j != i) w[i] *= qs[j] / (qs[j] - qs[i]);
  return w;
}

// Polynomial extrapolation to q=0 through all points. The model error is the
// change when the largest q is dropped; the statistical error assumes
// independent inputs with the given standard errors.
inline Extrapolation extrapolate_q(const std::vector<double>& qs, const std::vector<double>& values,
                                   const std::vector<double>& std_errors = {}) {
  require(!qs.empty() && qs.size() == values.size(), "extrapolate_q: size mismatch");
  Extrapolation e;
  e.limit = neville(qs, values, 0.0);
  if (qs.size() > 1) {
    std::vector<std::size_t> order(qs.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return qs[a] < qs[b]; });
    std::vector<double> q2, v2;
    for (std::size_t k = 0; k + 1 < order.size(); ++k) {
      q2.push_back(qs[order[k]]);
      v2.push_back(values[order[k]]);
    }
    e.model_error = std::abs(e.limit - neville(q2, v2, 0.0));
  }
  if (!std_errors.empty()) {
    const auto w = lagrange_weights_at_zero(qs);
    double v = 0.0;
    for (std::size_t i = 0; i < qs.size(); ++i) v += w[i] * w[i] * std_errors[i] * std_errors[i];
    e.stat_error = std::sqrt(v);
  }
  return e;
}

struct TestReport {
  std::string name;
  std::string criterion;  // acceptance item this report belongs to, if any
  double statistic = 0.0;
  double threshold = 0.0;
  std::optional<double> p_value;
  std::optional<double> expected;
  std::optional<double> std_error;
  std::size_t n = 0;
  std::optional<double> ess;
  std::string status = "fail";  // pass | fail | underpowered | inconclusive
  nlohmann::json metadata = nlohmann::json::object();

  bool pass() const { return status == "pass"; }
};

inline void to_json(nlohmann::json& j, const TestReport& r) {
  j = nlohmann::json{{"name", r.name}, {"statistic", r.statistic}, {"threshold", r.threshold},
                     {"n", r.n}, {"status", r.status}};
  if (!r.criterion.empty()) j["criterion"] = r.criterion;
  if (r.p_value) j["p_value"] = *r.p_value;
  if (r.expected) j["expected"] = *r.expected;
  if (r.std_error) j["std_error"] = *r.std_error;
  if (r.ess) j["ess"] = *r.ess;
  if (!r.metadata.empty()) j["metadata"] = r.metadata;
}

inline std::string status_of(bool ok) { return ok ? "pass" : "fail"; }

// |observed - expected| <= k * se
inline TestReport sigma_report(std::string name, double observed, double se, double expected,
                               std::size_t n) {
  TestReport r;
  r.name = std::move(name);
  r.expected = expected;
  r.std_error = se;
  r.n = n;
  r.threshold = thresholds().sigma;
  r.statistic = se > 0 ? std::abs(observed - expected) / se : (observed == expected ? 0.0 : kInf);
  r.metadata["observed"] = observed;
  r.status = status_of(r.statistic <= r.threshold);
  return r;
}

inline TestReport abs_report(std::string name, double observed, double expected, double tol) {
  TestReport r;
  r.name = std::move(name);
  r.expected = expected;
  r.threshold = tol;
  r.statistic = std::abs(observed - expected);
  r.metadata["observed"] = observed;
  r.status = status_of(r.statistic <= tol);
  return r;
}

inline TestReport ks_report(std::string name, const KsResult& k, double p_threshold) {
  TestReport r;
  r.name = std::move(name);
  r.statistic = k.statistic;
  r.p_value = k.p_value;
  r.n = static_cast<std::size_t>(k.n_eff);
  r.ess = k.n_eff;
  r.threshold = p_threshold;
  if (k.n_eff < thresholds().min_ess) r.status = "underpowered";
  else r.status = status_of(k.p_value > p_threshold);
  return r;
}

inline TestReport chi_square_report(std::string name, const ChiSquareResult& c) {
  TestReport r;
  r.name = std::move(name);
  r.statistic = c.statistic;
  r.p_value = c.p_value;
  r.n = c.n;
  r.threshold = thresholds().p_value;
  r.metadata["dof"] = c.dof;
  r.status = status_of(c.p_value > r.threshold);
  return r;
}

}  // namespace subcond
