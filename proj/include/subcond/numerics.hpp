#pragma once

#include <cmath>
#include <complex>
#include <functional>
#include <sstream>
#include <vector>

#include <Eigen/Dense>

#include "common.hpp"

namespace subcond {

inline double magnitude(double v) { return std::abs(v); }
inline double magnitude(const Eigen::VectorXd& v) { return v.size() ? v.lpNorm<Eigen::Infinity>() : 0.0; }

namespace detail {

template <class F, class R>
R simpson_step(F& f, double a, double b, const R& fa, const R& fm, const R& fb, const R& whole,
               double tol, int depth, bool& ok) {
  const double m = 0.5 * (a + b);
  const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  const R flm = f(lm), frm = f(rm);
  const R left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
  const R right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
  const R delta = left + right - whole;
  if (depth <= 0) {
    ok = false;
    return left + right + delta / 15.0;
  }
  if (magnitude(delta) <= 15.0 * tol) return left + right + delta / 15.0;
  return simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1, ok) +
         simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1, ok);
}

}  // namespace detail

// Adaptive Simpson for scalar or Eigen-vector valued integrands.
// The interval is split into `pieces` panels first so that narrow features
// are not missed by the initial five-point probe.
template <class F>
auto adaptive_simpson(F f, double a, double b, double tol = 1e-10, int max_depth = 48,
                      int pieces = 8) {
  using R = std::decay_t<decltype(f(a))>;
  if (!(b > a)) return R(0.0 * f(a));
  bool ok = true;
  const double h = (b - a) / pieces;
  R total = 0.0 * f(a);
  for (int i = 0; i < pieces; ++i) {
    const double lo = a + i * h, hi = (i + 1 == pieces) ? b : a + (i + 1) * h;
    const R fa = f(lo), fb = f(hi), fm = f(0.5 * (lo + hi));
    const R whole = (hi - lo) / 6.0 * (fa + 4.0 * fm + fb);
    total = total + detail::simpson_step(f, lo, hi, fa, fm, fb, whole, tol / pieces, max_depth, ok);
  }
  if (!ok) throw NumericError("adaptive_simpson: recursion depth exhausted");
  return total;
}

// Root of a monotone function on [lo, hi] by bisection.
template <class F>
double bisect(F f, double lo, double hi, double xtol = 1e-13, int max_iter = 200) {
  double flo = f(lo);
  for (int it = 0; it < max_iter && hi - lo > xtol * std::max(1.0, std::abs(lo)); ++it) {
    const double mid = 0.5 * (lo + hi);
    const double fm = f(mid);
    if ((fm > 0) == (flo > 0)) {
      lo = mid;
      flo = fm;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

struct InversionConfig {
  double damping = 18.4;  // A: discretization error is about e^{-A}
  int terms = 38;         // n: partial-sum length before Euler averaging
  int euler_terms = 11;   // m: binomial averaging depth
  double check_tol = 1e-6;
};

using LaplaceFn = std::function<std::complex<double>(std::complex<double>)>;

namespace detail {

inline double euler_sum(const LaplaceFn& F, double t, double A, int n, int m) {
  const double scale = std::exp(0.5 * A) / t;
  std::vector<double> partial(n + m + 1);
  double s = 0.5 * F(std::complex<double>(A / (2 * t), 0.0)).real();
  partial[0] = s;
  for (int k = 1; k <= n + m; ++k) {
    const std::complex<double> z(A / (2 * t), k * kPi / t);
    s += ((k & 1) ? -1.0 : 1.0) * F(z).real();
    partial[k] = s;
  }
  double acc = 0.0, binom = 1.0;
  for (int k = 0; k <= m; ++k) {
    acc += binom * partial[n + k];
    binom = binom * (m - k) / (k + 1);
  }
  return scale * acc / std::pow(2.0, m);
}

}  // namespace detail

// Euler-accelerated damped Fourier series inversion of a Laplace transform.
inline double invert_laplace(const LaplaceFn& F, double t, const InversionConfig& cfg = {}) {
  require(t > 0, "invert_laplace: t must be positive");
  const double f1 = detail::euler_sum(F, t, cfg.damping, cfg.terms, cfg.euler_terms);
  const double f2 = detail::euler_sum(F, t, cfg.damping, cfg.terms + 8, cfg.euler_terms);
  if (!std::isfinite(f1) || std::abs(f1 - f2) > cfg.check_tol * std::max(std::abs(f1), 1e-12)) {
    std::ostringstream os;
    os << "invert_laplace: series did not settle at t=" << t << " (" << f1 << " vs " << f2 << ")";
    throw NumericError(os.str());
  }
  return f2;
}

// n-th coefficient of a generating function analytic in the unit disc,
// by the trapezoid rule on a circle of radius 10^{-gamma/(2n)}.
inline double invert_generating_function(const LaplaceFn& G, long n, double gamma = 11.0) {
  require(n >= 0, "invert_generating_function: negative index");
  if (n == 0) return G(0.0).real();
  const double r = std::pow(10.0, -gamma / (2.0 * n));
  double sum = 0.0;
  for (long k = 1; k <= 2 * n; ++k) {
    const std::complex<double> z = std::polar(r, kPi * k / n);
    sum += ((k & 1) ? -1.0 : 1.0) * G(z).real();
  }
  return sum / (2.0 * n * std::pow(r, static_cast<double>(n)));
}

// Polynomial through (x_i, y_i) evaluated at x0.
inline double neville(const std::vector<double>& x, std::vector<double> y, double x0) {
  const std::size_t n = x.size();
  for (std::size_t level = 1; level < n; ++level)
    for (std::size_t i = 0; i + level < n; ++i)
      y[i] = ((x0 - x[i + level]) * y[i] + (x[i] - x0) * y[i + 1]) / (x[i] - x[i + level]);
  return y[0];
}

}  // namespace subcond
