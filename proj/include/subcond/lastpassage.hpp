#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include "common.hpp"
#include "conditioning.hpp"
#include "models.hpp"
#include "numerics.hpp"
#include "parallel.hpp"
#include "verify.hpp"

namespace subcond {

struct CtmcSpec {
  Eigen::MatrixXd generator;
  int start = 0;

  int size() const { return static_cast<int>(generator.rows()); }

  void validate() const {
    const int n = size();
    require(n >= 2 && generator.cols() == n, "ctmc: generator must be square with at least 2 states");
    require(start >= 0 && start < n, "ctmc: start out of range");
    for (int i = 0; i < n; ++i) {
      double row = 0.0, scale = 0.0;
      for (int j = 0; j < n; ++j) {
        if (i != j) require(generator(i, j) >= 0, "ctmc: negative off-diagonal rate");
        row += generator(i, j);
        scale = std::max(scale, std::abs(generator(i, j)));
      }
      require(std::abs(row) <= 1e-12 * std::max(1.0, scale), "ctmc: rows must sum to zero");
    }
    require(generator(0, 0) < 0, "ctmc: state 0 must not be absorbing");
    // every state must reach 0
    std::vector<char> reach(n, 0);
    reach[0] = 1;
    for (bool grew = true; grew;) {
      grew = false;
      for (int i = 0; i < n; ++i)
        if (!reach[i])
          for (int j = 0; j < n; ++j)
            if (reach[j] && generator(i, j) > 0) {
              reach[i] = 1;
              grew = true;
              break;
            }
    }
    for (int i = 0; i < n; ++i) require(reach[i], "ctmc: state 0 unreachable from some state");
  }

  static CtmcSpec two_state(double up = 1.0, double down = 2.0) {
    CtmcSpec c;
    c.generator.resize(2, 2);
    c.generator << -up, up, down, -down;
    return c;
  }

  static CtmcSpec birth_death(double lambda = 1.0, double mu = 2.0, int top = 10) {
    CtmcSpec c;
    c.generator = Eigen::MatrixXd::Zero(top + 1, top + 1);
    for (int i = 0; i <= top; ++i) {
      if (i < top) c.generator(i, i + 1) = lambda;
      if (i > 0) c.generator(i, i - 1) = mu;
      c.generator(i, i) = -c.generator.row(i).sum();
    }
    return c;
  }

  // a chain with cycles and no detailed balance
  static CtmcSpec five_state() {
    CtmcSpec c;
    c.generator = Eigen::MatrixXd::Zero(5, 5);
    auto& Q = c.generator;
    Q(0, 1) = 1.0; Q(0, 2) = 0.5;
    Q(1, 2) = 2.0; Q(1, 0) = 0.3;
    Q(2, 3) = 1.5; Q(2, 0) = 0.5;
    Q(3, 4) = 1.0; Q(3, 1) = 0.4;
    Q(4, 0) = 2.0; Q(4, 2) = 0.2;
    for (int i = 0; i < 5; ++i) Q(i, i) = -Q.row(i).sum();
    return c;
  }
};

struct LocalTimeNormalization {
  double beta = 1.0;
  double holding_rate = 0.0;            // c = -Q[0][0]
  Eigen::VectorXd start_distribution;   // Q[0][j] / c
};

inline LocalTimeNormalization local_time_normalization(const CtmcSpec& chain, double beta = 1.0) {
  chain.validate();
  LocalTimeNormalization n;
  n.beta = beta;
  n.holding_rate = -chain.generator(0, 0);
  n.start_distribution = chain.generator.row(0).transpose() / n.holding_rate;
  n.start_distribution(0) = 0.0;
  return n;
}

// Linear algebra on the chain killed at T_0. Index i of the full chain maps
// to i-1 in the killed block.
class CtmcAnalysis {
 public:
  explicit CtmcAnalysis(CtmcSpec chain, double beta = 1.0) : chain_(std::move(chain)), beta_(beta) {
    chain_.validate();
    require(beta > 0, "ctmc: beta must be positive");
    const int n = chain_.size();
    K_ = chain_.generator.bottomRightCorner(n - 1, n - 1);
    exit_ = chain_.generator.bottomLeftCorner(n - 1, 1);
    lu_ = K_.partialPivLu();
    Eigen::VectorXd m = lu_.solve(-Eigen::VectorXd::Ones(n - 1));
    mean_hit_ = Eigen::VectorXd::Zero(n);
    mean_hit_.tail(n - 1) = m;
    if (!mean_hit_.allFinite()) throw NumericError("ctmc: singular killed generator");
    eta_zeta_ = chain_.generator.row(0).tail(n - 1).dot(m);
  }

  const CtmcSpec& chain() const { return chain_; }
  int size() const { return chain_.size(); }
  double beta() const { return beta_; }
  const Eigen::MatrixXd& killed_generator() const { return K_; }

  // E_x T_0, zero at 0
  const Eigen::VectorXd& mean_hitting_times() const { return mean_hit_; }

  // eta(zeta) = c sum_j p_j E_j T_0, scaled with the local time
  double eta_zeta() const { return beta_ * eta_zeta_; }

  // E_x exp(-q T_0), one at 0
  Eigen::VectorXd hitting_laplace(double q) const {
    require(q >= 0, "hitting_laplace: q must be >= 0");
    const int n = size();
    Eigen::MatrixXd A = q * Eigen::MatrixXd::Identity(n - 1, n - 1) - K_;
    Eigen::VectorXd v(n);
    v(0) = 1.0;
    v.tail(n - 1) = A.partialPivLu().solve(exit_);
    return v;
  }

  // q beta + eta(1 - e^{-q zeta})
  double excursion_mass(double q) const {
    const Eigen::VectorXd L = hitting_laplace(q);
    const int n = size();
    double s = 0.0;
    for (int j = 1; j < n; ++j) s += chain_.generator(0, j) * (1.0 - L(j));
    return beta_ * (q + s);
  }

  double h_q(int x, double q) const {
    require(q > 0, "h_q: q must be positive");
    if (x == 0) return 0.0;
    return (1.0 - hitting_laplace(q)(x)) / excursion_mass(q);
  }

  Eigen::VectorXd h_q_vector(double q) const {
    const Eigen::VectorXd L = hitting_laplace(q);
    return (Eigen::VectorXd::Ones(size()) - L) / excursion_mass(q);
  }

  // h(x) = E_x T_0 / (beta + eta(zeta))
  double h(int x) const { return mean_hit_(x) / (beta_ + eta_zeta()); }
  Eigen::VectorXd h_vector() const { return mean_hit_ / (beta_ + eta_zeta()); }

  Eigen::MatrixXd transition(double t) const { return (chain_.generator * t).exp(); }
  Eigen::MatrixXd killed_transition(double t) const { return (K_ * t).exp(); }

  // V^(q)_{0,t}(x) for every x via one block exponential:
  // exp([[Q - qI, e_0], [0, 0]] t) has int_0^t e^{(Q-qI)u} e_0 du in its last column.
  Eigen::VectorXd V0(double t, double q) const {
    const int n = size();
    if (t <= 0) return Eigen::VectorXd::Zero(n);
    Eigen::MatrixXd M = Eigen::MatrixXd::Zero(n + 1, n + 1);
    M.topLeftCorner(n, n) = chain_.generator - q * Eigen::MatrixXd::Identity(n, n);
    M(0, n) = 1.0;
    const Eigen::MatrixXd E = (M * t).exp();
    return E.col(n).head(n) / beta_;
  }

  double V(int x, double s, double t, double q) const {
    require(0 <= s && s <= t, "V: need 0 <= s <= t");
    if (s == t) return 0.0;
    return V0(t, q)(x) - V0(s, q)(x);
  }

  // Independent route: adaptive quadrature of e^{-qu} P_x(X_u = 0).
  double V_quadrature(int x, double s, double t, double q, double tol = 1e-12) const {
    return adaptive_simpson([&](double u) { return std::exp(-q * u) * transition(u)(x, 0); }, s, t, tol) / beta_;
  }

 private:
  CtmcSpec chain_;
  double beta_;
  Eigen::MatrixXd K_;
  Eigen::VectorXd exit_;
  Eigen::PartialPivLU<Eigen::MatrixXd> lu_;
  Eigen::VectorXd mean_hit_;
  double eta_zeta_ = 0.0;
};

inline double h_q_exact(const CtmcSpec& chain, int x, double q, double beta = 1.0) {
  return CtmcAnalysis(chain, beta).h_q(x, q);
}

inline double h_limit(const CtmcSpec& chain, int x, double beta = 1.0) {
  return CtmcAnalysis(chain, beta).h(x);
}

inline double V_q_exact(const CtmcSpec& chain, int x, double s, double t, double q, double beta = 1.0) {
  return CtmcAnalysis(chain, beta).V(x, s, t, q);
}

struct IdentityCheck {
  double lhs = 0.0;
  double rhs = 0.0;
  double residual() const { return std::abs(lhs - rhs); }
};

// E_x[h_q(X_t); t < T_0] = e^{qt} h_q(x) - e^{qt} (q beta / D_q) int_0^t P_x(T_0 > u) e^{-qu} du
inline IdentityCheck check_excessive_identity(const CtmcAnalysis& A, int x, double q, double t) {
  require(q > 0 && t > 0, "check_excessive_identity: need q, t > 0");
  IdentityCheck c;
  if (x == 0) return c;
  const int n = A.size();
  const Eigen::VectorXd hq = A.h_q_vector(q);
  const Eigen::MatrixXd P = A.killed_transition(t);
  c.lhs = P.row(x - 1).dot(hq.tail(n - 1));
  const double integral = adaptive_simpson(
      [&](double u) { return A.killed_transition(u).row(x - 1).sum() * std::exp(-q * u); }, 0.0, t, 1e-13);
  const double D = A.excursion_mass(q);
  c.rhs = std::exp(q * t) * (hq(x) - q * A.beta() / D * integral);
  return c;
}

// P_x(g_{e_q} < a) two ways. The V route adds P_x(T_0 > e_q) for x != 0,
// where the chain may never reach 0 before the clock rings.
inline IdentityCheck check_last_zero_identity(const CtmcAnalysis& A, int x, double q, double a) {
  IdentityCheck c;
  const Eigen::VectorXd L = A.hitting_laplace(q);
  c.lhs = A.V(x, 0.0, a, q) * A.excursion_mass(q) + (x == 0 ? 0.0 : 1.0 - L(x));
  const Eigen::MatrixXd P = A.transition(a);
  double tail = 0.0;
  for (int y = 1; y < A.size(); ++y) tail += P(x, y) * (1.0 - L(y));
  c.rhs = -std::expm1(-q * a) + std::exp(-q * a) * tail;
  return c;
}

struct LastPassageLaw {
  CtmcSpec chain;
  double a = 1.0;
  double beta = 1.0;
};

// A chain path. values hold state indices; the path is killed at its lifetime.
struct AvoidSample {
  PathSample path;
  double g = 0.0;            // last visit to 0
  bool never_visits = false; // the no-visit component (start away from 0)
  bool killed_at_zero = false;
};

namespace detail {

// Cubic Hermite inverse of a tabulated CDF with known density.
class HermiteCdf {
 public:
  HermiteCdf() = default;
  HermiteCdf(std::vector<double> t, std::vector<double> F, std::vector<double> f)
      : t_(std::move(t)), F_(std::move(F)), f_(std::move(f)) {}

  double cdf(double x) const {
    if (x <= t_.front()) return 0.0;
    if (x >= t_.back()) return 1.0;
    const std::size_t k = static_cast<std::size_t>(std::upper_bound(t_.begin(), t_.end(), x) - t_.begin()) - 1;
    return eval(k, x);
  }

  double inverse(double u) const {
    const std::size_t k = static_cast<std::size_t>(std::upper_bound(F_.begin(), F_.end(), u) - F_.begin());
    const std::size_t i = std::clamp<std::size_t>(k, 1, t_.size() - 1) - 1;
    return bisect([&](double x) { return eval(i, x) - u; }, t_[i], t_[i + 1], 1e-14);
  }

 private:
  double eval(std::size_t k, double x) const {
    const double h = t_[k + 1] - t_[k];
    const double s = (x - t_[k]) / h;
    const double h00 = (1 + 2 * s) * (1 - s) * (1 - s), h10 = s * (1 - s) * (1 - s);
    const double h01 = s * s * (3 - 2 * s), h11 = s * s * (s - 1);
    return h00 * F_[k] + h10 * h * f_[k] + h01 * F_[k + 1] + h11 * h * f_[k + 1];
  }
  std::vector<double> t_, F_, f_;
};

}  // namespace detail

inline void ctmc_step(const Eigen::MatrixXd& Q, int& state, double& t, RngStream& rng) {
  const double rate = -Q(state, state);
  t += rng.exponential() / rate;
  double u = rng.uniform() * rate;
  const int n = static_cast<int>(Q.rows());
  int next = state;
  for (int j = 0; j < n; ++j) {
    if (j == state || Q(state, j) <= 0) continue;
    next = j;
    u -= Q(state, j);
    if (u <= 0) break;
  }
  state = next;
}

// Unconditioned chain until `horizon`, then on until `stop(state)` holds if
// extend is set. The final point carries the state at the end time.
inline PathSample sample_ctmc(const CtmcSpec& chain, int x, double horizon, RngStream& rng) {
  PathSample p;
  p.push(0.0, x);
  int s = x;
  double t = 0.0;
  for (;;) {
    int s2 = s;
    double t2 = t;
    ctmc_step(chain.generator, s2, t2, rng);
    if (t2 >= horizon) break;
    s = s2;
    t = t2;
    p.push(t, s);
  }
  p.push(horizon, s);
  return p;
}

class ConditionedAvoidSampler {
 public:
  explicit ConditionedAvoidSampler(const LastPassageLaw& law, int table_size = 2048)
      : law_(law), A_(law.chain, law.beta) {
    require(law.a > 0, "last passage: a must be positive");
    const int n = A_.size();
    x_ = law.chain.start;
    h_ = A_.h_vector();
    if (h_.tail(n - 1).maxCoeff() <= 0) throw DomainError("last passage: h vanishes off 0");
    Va_ = A_.V0(law.a, 0.0)(x_);
    require(Va_ > 0, "last passage: V_{0,a}(x) must be positive");
    p_never_ = x_ == 0 ? 0.0 : h_(x_) / (h_(x_) + Va_);
    p_kill_at_zero_ = law.beta / (law.beta + A_.eta_zeta());
    // g density P_x(X_t = 0) / V_{0,a}(x) tabulated with exact increments
    const double dt = law.a / table_size;
    const Eigen::MatrixXd step = A_.transition(dt);
    Eigen::MatrixXd M = Eigen::MatrixXd::Zero(n + 1, n + 1);
    M.topLeftCorner(n, n) = law.chain.generator;
    M(0, n) = 1.0;
    const Eigen::VectorXd J = (M * dt).exp().col(n).head(n);  // int_0^dt e^{Qu} e_0 du
    Eigen::RowVectorXd row = Eigen::RowVectorXd::Unit(n, x_);
    std::vector<double> ts, F, f;
    double acc = 0.0;
    for (int k = 0; k <= table_size; ++k) {
      ts.push_back(k * dt);
      F.push_back(acc);
      f.push_back(row(0));
      acc += row.dot(J);
      row = row * step;
    }
    const double total = F.back();
    for (auto& v : F) v /= total;
    for (auto& v : f) v /= total;
    g_table_ = detail::HermiteCdf(ts, F, f);
    // h-transformed chain off 0: rates Q_ik h_k / h_i, killing 1 / E_i T_0
    entry_.assign(n, 0.0);
    double tot = 0.0;
    for (int j = 1; j < n; ++j) tot += law.chain.generator(0, j) * h_(j);
    for (int j = 1; j < n; ++j) entry_[j] = law.chain.generator(0, j) * h_(j) / tot;
    // uniformization for the bridge to 0
    unif_rate_ = (-law.chain.generator.diagonal()).maxCoeff();
    unif_P_ = Eigen::MatrixXd::Identity(n, n) + law.chain.generator / unif_rate_;
  }

  const CtmcAnalysis& analysis() const { return A_; }
  double p_never() const { return p_never_; }
  double V0a() const { return Va_; }
  double g_cdf(double t) const { return g_table_.cdf(t); }

  AvoidSample sample(RngStream& rng) const {
    AvoidSample out;
    PathSample& p = out.path;
    if (x_ != 0 && rng.uniform() < p_never_) {
      out.never_visits = true;
      out.g = 0.0;
      p.push(0.0, x_);
      run_h_chain(x_, 0.0, p, rng);
      return out;
    }
    const double g = g_table_.inverse(rng.uniform());
    out.g = g;
    bridge_to_zero(x_, g, p, rng);
    if (rng.uniform() < p_kill_at_zero_) {
      out.killed_at_zero = true;
      p.push(std::max(g, std::nextafter(p.times.back(), kInf)), 0);
      p.killed = true;
      p.lifetime = p.times.back();
      return out;
    }
    double u = rng.uniform();
    int j = 1;
    for (; j < A_.size() - 1; ++j) {
      u -= entry_[j];
      if (u <= 0) break;
    }
    p.push(std::max(g, std::nextafter(p.times.back(), kInf)), j);
    run_h_chain(j, p.times.back(), p, rng);
    return out;
  }

 private:
  void run_h_chain(int state, double t, PathSample& p, RngStream& rng) const {
    const auto& Q = law_.chain.generator;
    const Eigen::VectorXd& m = A_.mean_hitting_times();
    const int n = A_.size();
    for (;;) {
      const double rate = -Q(state, state);
      t += rng.exponential() / rate;
      double u = rng.uniform() * rate;
      u -= 1.0 / m(state);
      if (u <= 0) break;
      int next = -1;
      for (int k = 1; k < n; ++k) {
        if (k == state || Q(state, k) <= 0) continue;
        u -= Q(state, k) * h_(k) / h_(state);
        next = k;
        if (u <= 0) break;
      }
      if (next < 0) break;
      state = next;
      p.push(t, state);
    }
    p.push(t, state);
    p.killed = true;
    p.lifetime = t;
  }

  // chain from x conditioned on X_g = 0, by uniformization
  void bridge_to_zero(int x, double g, PathSample& p, RngStream& rng) const {
    p.push(0.0, x);
    if (g <= 0) return;
    const int n = A_.size();
    const double lam = unif_rate_ * g;
    std::vector<Eigen::VectorXd> col;  // P^k e_0
    col.push_back(Eigen::VectorXd::Unit(n, 0));
    double total = 0.0, pk = std::exp(-lam);
    std::vector<double> w;
    for (int k = 0; k < 10000; ++k) {
      if (k > 0) col.push_back(unif_P_ * col.back());
      w.push_back(pk * col[k](x));
      total += w.back();
      if (k > lam && pk < 1e-17) break;
      pk *= lam / (k + 1);
    }
    double u = rng.uniform() * total;
    int K = 0;
    for (; K + 1 < static_cast<int>(w.size()); ++K) {
      u -= w[K];
      if (u <= 0) break;
    }
    std::vector<double> times(K);
    for (auto& t : times) t = rng.uniform() * g;
    std::sort(times.begin(), times.end());
    int s = x;
    for (int m = 1; m <= K; ++m) {
      const Eigen::VectorXd& c = col[K - m];
      double v = rng.uniform() * col[K - m + 1](s);
      int next = s;
      for (int l = 0; l < n; ++l) {
        const double pr = unif_P_(s, l) * c(l);
        if (pr <= 0) continue;
        next = l;
        v -= pr;
        if (v <= 0) break;
      }
      if (next != s && times[m - 1] > p.times.back()) p.push(times[m - 1], next);
      s = next;
    }
    if (s != 0) throw NumericError("bridge_to_zero: bridge did not end at 0");
  }

  LastPassageLaw law_;
  CtmcAnalysis A_;
  int x_ = 0;
  Eigen::VectorXd h_;
  double Va_ = 0.0;
  double p_never_ = 0.0;
  double p_kill_at_zero_ = 0.0;
  detail::HermiteCdf g_table_;
  std::vector<double> entry_;
  double unif_rate_ = 1.0;
  Eigen::MatrixXd unif_P_;
};

inline AvoidSample sample_conditioned_avoid(const LastPassageLaw& law, RngStream& rng) {
  return ConditionedAvoidSampler(law).sample(rng);
}

// Law of X_t under the conditioned measure on states plus a final "dead"
// entry, from matrix exponentials: pre-g part E_x[1{X_t=y} V_{0,a-t}(y)] and
// post-g part int_0^t f_g(r) sum_j Q_0j [e^{K(t-r)}]_{jy} h(y) dr.
inline Eigen::VectorXd conditioned_marginal(const LastPassageLaw& law, double t) {
  const CtmcAnalysis A(law.chain, law.beta);
  const int n = A.size();
  const int x = law.chain.start;
  require(t > 0 && t < law.a, "conditioned_marginal: need 0 < t < a");
  const Eigen::VectorXd h = A.h_vector();
  const double Va = A.V0(law.a, 0.0)(x);
  const double p_never = x == 0 ? 0.0 : h(x) / (h(x) + Va);
  Eigen::VectorXd out = Eigen::VectorXd::Zero(n + 1);
  const Eigen::VectorXd Vrest = A.V0(law.a - t, 0.0);
  const Eigen::MatrixXd P = A.transition(t);
  for (int y = 0; y < n; ++y) out(y) += (1 - p_never) * P(x, y) * Vrest(y) / Va;
  const Eigen::RowVectorXd q0 = law.chain.generator.row(0).tail(n - 1);
  auto post = [&](double r) -> Eigen::VectorXd {
    const double fg = A.transition(r)(x, 0) / (law.beta * Va);
    const Eigen::RowVectorXd w = q0 * A.killed_transition(t - r);
    Eigen::VectorXd v = Eigen::VectorXd::Zero(n);
    for (int y = 1; y < n; ++y) v(y) = fg * w(y - 1) * h(y) * law.beta;
    return v;
  };
  const Eigen::VectorXd postmass = adaptive_simpson(post, 0.0, t, 1e-11);
  out.head(n) += (1 - p_never) * postmass;
  if (x != 0) {
    const Eigen::MatrixXd Pk = A.killed_transition(t);
    for (int y = 1; y < n; ++y) out(y) += p_never * Pk(x - 1, y - 1) * h(y) / h(x);
  }
  out(n) = std::max(0.0, 1.0 - out.head(n).sum());
  return out;
}

// P_x(T < g_inf, X_T = 0) for a fixed time T under the conditioned law.
inline double conditioned_zero_at(const LastPassageLaw& law, double T) {
  const CtmcAnalysis A(law.chain, law.beta);
  const int x = law.chain.start;
  const Eigen::VectorXd h = A.h_vector();
  const double Va = A.V0(law.a, 0.0)(x);
  const double p_never = x == 0 ? 0.0 : h(x) / (h(x) + Va);
  return (1 - p_never) * A.transition(T)(x, 0) * A.V0(law.a - T, 0.0)(0) / Va;
}

struct MarkovEvent {
  std::string name;
  double T = 0.0;
  std::function<bool(const PathSample&)> event;
  std::optional<double> exact;
};

struct MarkovLimitReport {
  std::string event;
  std::vector<KillingLimitRow> rows;
  Extrapolation extrapolated;
  double direct_limit = 0.0;  // E[1_A (R - T)^+] / E[R]
  double direct_std_error = 0.0;
  std::optional<double> exact;
  bool inconclusive = false;
};

// R = first zero at or after a; {g_{e_q} < a} = {e_q < R}.
inline std::vector<MarkovLimitReport> verify_markov_killing_limit(const LastPassageLaw& law,
                                                                  const std::vector<MarkovEvent>& events,
                                                                  const std::vector<double>& q_seq,
                                                                  std::size_t n_paths, const RngStream& rng,
                                                                  double ci_limit = 0.05) {
  law.chain.validate();
  struct Sample {
    double R;
    std::vector<char> in_A;
  };
  for (const auto& e : events) require(e.T >= 0 && e.T <= law.a, "markov killing limit: need 0 <= T <= a");
  auto samples = parallel_collect<Sample>(n_paths, rng, [&](RngStream& s, std::size_t) {
    const PathSample p = sample_ctmc(law.chain, law.chain.start, law.a, s);
    // the path is recorded on [0, a]; run on to the next visit of 0
    int st = static_cast<int>(p.values.back());
    double t = law.a;
    while (st != 0) ctmc_step(law.chain.generator, st, t, s);
    Sample out{t, {}};
    for (const auto& e : events) out.in_A.push_back(e.event(p) ? 1 : 0);
    return out;
  });
  const auto L = lagrange_weights_at_zero(q_seq);
  const double n = static_cast<double>(samples.size());
  std::vector<MarkovLimitReport> reps;
  for (std::size_t k = 0; k < events.size(); ++k) {
    const double T = events[k].T;
    MarkovLimitReport rep;
    rep.event = events[k].name;
    rep.exact = events[k].exact;
    std::vector<double> num(q_seq.size(), 0.0), den(q_seq.size(), 0.0), ratio(q_seq.size());
    for (const auto& s : samples)
      for (std::size_t i = 0; i < q_seq.size(); ++i) {
        den[i] += -std::expm1(-q_seq[i] * s.R);
        if (s.in_A[k] && T < s.R) num[i] += std::exp(-q_seq[i] * T) - std::exp(-q_seq[i] * s.R);
      }
    for (std::size_t i = 0; i < q_seq.size(); ++i) ratio[i] = num[i] / den[i];
    std::vector<RunningStats> infl(q_seq.size());
    RunningStats comb, dn, dd;
    for (const auto& s : samples) {
      double c = 0.0;
      for (std::size_t i = 0; i < q_seq.size(); ++i) {
        const double q = q_seq[i];
        const double ni = (s.in_A[k] && T < s.R) ? std::exp(-q * T) - std::exp(-q * s.R) : 0.0;
        const double psi = (ni - ratio[i] * -std::expm1(-q * s.R)) / (den[i] / n);
        infl[i].add(psi);
        c += L[i] * psi;
      }
      comb.add(c);
      dn.add((s.in_A[k] && T < s.R) ? s.R - T : 0.0);
      dd.add(s.R);
    }
    for (std::size_t i = 0; i < q_seq.size(); ++i) rep.rows.push_back({q_seq[i], ratio[i], infl[i].std_error()});
    rep.extrapolated = extrapolate_q(q_seq, ratio);
    rep.extrapolated.stat_error = comb.std_error();
    rep.direct_limit = dn.mean / dd.mean;
    RunningStats d;
    for (const auto& s : samples) {
      const double a = (s.in_A[k] && T < s.R) ? s.R - T : 0.0;
      d.add((a - rep.direct_limit * s.R) / dd.mean);
    }
    rep.direct_std_error = d.std_error();
    rep.inconclusive = rep.extrapolated.error() > ci_limit;
    reps.push_back(std::move(rep));
  }
  return reps;
}

// E_x R for R the first zero at or after a: a + E_x m(X_a).
inline double expected_first_zero_after(const CtmcAnalysis& A, int x, double a) {
  return a + A.transition(a).row(x).dot(A.mean_hitting_times());
}

struct ExcursionRecord {
  double local_time_at_start = 0.0;
  PathSample path;
  double length = 0.0;
};

// Excursions from 0 started before local time `local_time_cap`, chain started at 0.
inline std::vector<ExcursionRecord> sample_excursions(const CtmcSpec& chain, double local_time_cap, RngStream& rng,
                                                      double beta = 1.0) {
  std::vector<ExcursionRecord> out;
  const auto& Q = chain.generator;
  double L = 0.0, t = 0.0;
  for (;;) {
    const double hold = rng.exponential() / -Q(0, 0);
    if (L + hold / beta >= local_time_cap) break;
    L += hold / beta;
    t += hold;
    int s = 0;
    double tt = t;
    // leave 0
    double u = rng.uniform() * -Q(0, 0);
    for (int j = 1; j < chain.size(); ++j) {
      s = j;
      u -= Q(0, j);
      if (u <= 0) break;
    }
    ExcursionRecord rec;
    rec.local_time_at_start = L;
    rec.path.push(0.0, s);
    while (s != 0) {
      ctmc_step(Q, s, tt, rng);
      rec.path.push(tt - t, s);
    }
    rec.length = tt - t;
    t = tt;
    out.push_back(std::move(rec));
  }
  return out;
}

enum class ExcursionFunctional { Zero, LongerThan, Count };

struct CompensationCheck {
  double lhs = 0.0, lhs_std_error = 0.0;      // MC of the sum over excursions
  double rhs_mc = 0.0, rhs_std_error = 0.0;   // MC of int eta(F) dL with sampled excursions
  double rhs_exact = 0.0;                     // int eta(F) dL from matrix exponentials
  double z() const {
    const double se = std::hypot(lhs_std_error, rhs_std_error);
    return se > 0 ? std::abs(lhs - rhs_mc) / se : (lhs == rhs_mc ? 0.0 : kInf);
  }
};

// F(l, eps) = 1{l < cap} G(eps) with G = 0, 1{zeta > threshold} or 1.
inline CompensationCheck compensation_formula_check(const CtmcSpec& chain, ExcursionFunctional F, double cap,
                                                    double threshold, std::size_t n_paths, const RngStream& rng) {
  const CtmcAnalysis A(chain);
  auto G = [&](double length) -> double {
    switch (F) {
      case ExcursionFunctional::Zero: return 0.0;
      case ExcursionFunctional::LongerThan: return length > threshold ? 1.0 : 0.0;
      case ExcursionFunctional::Count: return 1.0;
    }
    return 0.0;
  };
  struct Acc {
    RunningStats lhs, rhs;
  };
  const double c = -chain.generator(0, 0);
  const auto acc = batched_reduce(
      n_paths, rng, Acc{},
      [&](Acc& a, RngStream& s, std::size_t) {
        double sum = 0.0;
        for (const auto& e : sample_excursions(chain, cap, s)) sum += G(e.length);
        a.lhs.add(sum);
        // one excursion from the normalized intensity; mass c per unit local time
        int st = 0;
        double t = 0.0;
        ctmc_step(chain.generator, st, t, s);
        const double t0 = t;
        while (st != 0) ctmc_step(chain.generator, st, t, s);
        a.rhs.add(cap * c * G(t - t0));
      },
      [](Acc& o, Acc&& p) {
        o.lhs.merge(p.lhs);
        o.rhs.merge(p.rhs);
      });
  CompensationCheck r;
  r.lhs = acc.lhs.mean;
  r.lhs_std_error = acc.lhs.std_error();
  r.rhs_mc = acc.rhs.mean;
  r.rhs_std_error = acc.rhs.std_error();
  double eta_G = 0.0;
  const int n = chain.size();
  switch (F) {
    case ExcursionFunctional::Zero: break;
    case ExcursionFunctional::Count: eta_G = c; break;
    case ExcursionFunctional::LongerThan: {
      const Eigen::MatrixXd P = A.killed_transition(threshold);
      for (int j = 1; j < n; ++j) eta_G += chain.generator(0, j) * P.row(j - 1).sum();
    }
  }
  r.rhs_exact = cap * eta_G;
  return r;
}

// eta((e^{-qt} - e^{-q zeta}); t < zeta) / D_q and its q -> 0 limit eta(h(eps_t); t < zeta).
inline std::pair<double, double> excursion_factor(const CtmcAnalysis& A, double t, double q) {
  const int n = A.size();
  const Eigen::MatrixXd P = A.killed_transition(t);
  const Eigen::VectorXd L = A.hitting_laplace(q);
  const Eigen::VectorXd h = A.h_vector();
  double num = 0.0, lim = 0.0;
  for (int j = 1; j < n; ++j)
    for (int y = 1; y < n; ++y) {
      const double w = A.chain().generator(0, j) * P(j - 1, y - 1) * A.beta();
      num += w * std::exp(-q * t) * (1.0 - L(y));
      lim += w * h(y);
    }
  return {num / A.excursion_mass(q), lim};
}

struct AssumptionAudit {
  bool monotone = true;   // q -> h_q(x) monotone on the grid for every x
  bool dominated = true;  // h_q <= H = E_x T_0 / beta on the grid
  double eta_H_bound = 0.0;  // sup_t eta(H(eps_t), t < zeta) <= c max H
  bool holds() const { return (monotone || dominated) && std::isfinite(eta_H_bound); }
};

// Either branch of the assumption on h_q, checked on a q grid.
inline AssumptionAudit audit_assumptions(const CtmcAnalysis& A,
                                         const std::vector<double>& q_grid = {10, 1, 0.1, 0.01, 0.001}) {
  AssumptionAudit r;
  const Eigen::VectorXd H = A.mean_hitting_times() / A.beta();
  r.eta_H_bound = -A.chain().generator(0, 0) * A.beta() * H.maxCoeff();
  for (int x = 1; x < A.size(); ++x) {
    int dir = 0;
    double prev = A.h_q(x, q_grid.front());
    for (std::size_t i = 0; i < q_grid.size(); ++i) {
      const double v = A.h_q(x, q_grid[i]);
      if (v > H(x) * (1 + 1e-12)) r.dominated = false;
      const int d = v > prev ? 1 : (v < prev ? -1 : 0);
      if (d != 0 && dir != 0 && d != dir) r.monotone = false;
      if (d != 0) dir = d;
      prev = v;
    }
  }
  return r;
}

// ---- overshoot process of a subordinator ----

// The closed range of a jump-exact path is a union of drift segments
// [values[i], values[i] + kappa (times[i+1] - times[i])].
inline double segment_end(const PathSample& y_path, std::size_t i) {
  const auto& t = y_path.times;
  return i + 1 < t.size() ? y_path.values[i] + y_path.drift * (t[i + 1] - t[i]) : y_path.values[i];
}

// D_x = Y_{tau_x} - x: zero on the range of Y, else the distance to the next jump value.
inline double overshoot_process(const PathSample& y_path, double x) {
  for (std::size_t i = 0; i < y_path.values.size(); ++i) {
    if (y_path.values[i] > x) return y_path.values[i] - x;
    if (segment_end(y_path, i) >= x) return 0.0;
  }
  throw DomainError("overshoot_process: path does not reach x");
}

// First range point at or above a.
inline double first_range_point_above(const PathSample& y_path, double a) {
  for (std::size_t i = 0; i < y_path.values.size(); ++i)
    if (segment_end(y_path, i) >= a) return std::max(a, y_path.values[i]);
  return kInf;
}

// Last range point at or below e.
inline double last_range_point(const PathSample& y_path, double e) {
  double best = -kInf;
  for (std::size_t i = 0; i < y_path.values.size() && y_path.values[i] <= e; ++i)
    best = std::min(e, segment_end(y_path, i));
  return best;
}

struct OvershootReport {
  std::vector<double> strip_terminals;
  std::vector<double> last_zeros;
  std::vector<double> last_zero_weights;
  KsResult ks;
  bool degenerate_drift = false;
};

// Compares X_{zeta-} under the strip law with the last zero of D before a
// under the avoid-zero-after-a conditioning. In the q -> 0 limit the latter is
// the last range point of Y below e, with e uniform on (0, R) and weight R,
// where R is the first range point at or above a.
inline OvershootReport overshoot_consistency(const SubordinatorSpec& spec, double a, std::size_t n_paths,
                                             const RngStream& rng) {
  spec.validate();
  require(spec.finite_activity(), "overshoot_consistency: needs a finite-activity family");
  require(a > 0, "overshoot_consistency: a must be positive");
  OvershootReport r;
  r.degenerate_drift = spec.drift_coefficient() <= 0;
  const StripLaw law{spec, a, 0.0};
  r.strip_terminals = parallel_collect<double>(n_paths, rng.substream(1), [&](RngStream& s, std::size_t) {
    const PathSample p = sample_strip(law, StripMethod::PathDecomposition, s);
    return p.values.back();
  });
  struct Zero {
    double g, w;
  };
  const auto zs = parallel_collect<Zero>(n_paths, rng.substream(2), [&](RngStream& s, std::size_t) {
    const PathSample y = sample_until_above(spec, a, s);
    const double R = first_range_point_above(y, a);
    const double e = s.uniform() * R;
    return Zero{last_range_point(y, e), R};
  });
  for (const auto& z : zs) {
    r.last_zeros.push_back(z.g);
    r.last_zero_weights.push_back(z.w);
  }
  r.ks = ks_two_sample(r.strip_terminals, r.last_zeros, {}, r.last_zero_weights);
  return r;
}

}  // namespace subcond
