#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "cli_io.hpp"
#include "subcond/conditioning.hpp"
#include "subcond/ladderbox.hpp"
#include "subcond/lamperti.hpp"
#include "subcond/lastpassage.hpp"
#include "subcond/models.hpp"
#include "subcond/parallel.hpp"
#include "subcond/potential.hpp"
#include "subcond/suites.hpp"

using namespace subcond;
using cli::num;

namespace {

struct Globals {
  std::uint64_t seed = 7;
  unsigned threads = 0;
  std::string config;
  std::string out;
  std::string format = "csv";
  double scale = 1.0;
};

struct ModelOpts {
  std::string family = "poisson";
  double kappa = 1.0;
  double rate = 1.0;
  double alpha = 0.5;
  double shape = 1.0;
  std::string jump = "exp";
  double jump_rate = 1.0;
  double jump_size = 1.0;

  void add(CLI::App* app) {
    app->add_option("--family", family, "drift | poisson | cpd | stable | gamma")
        ->check(CLI::IsMember({"drift", "poisson", "cpd", "stable", "gamma"}));
    app->add_option("--kappa", kappa, "drift coefficient");
    app->add_option("--rate", rate, "jump rate (gamma: rate parameter)");
    app->add_option("--alpha", alpha, "stable index");
    app->add_option("--shape", shape, "gamma shape");
    app->add_option("--jump", jump, "cpd jump law: exp | deg")->check(CLI::IsMember({"exp", "deg"}));
    app->add_option("--jump-rate", jump_rate, "rate of exponential jumps");
    app->add_option("--jump-size", jump_size, "size of degenerate jumps");
  }

  SubordinatorSpec spec() const {
    SubordinatorSpec s;
    if (family == "drift") s = SubordinatorSpec::drift(kappa);
    else if (family == "poisson") s = SubordinatorSpec::poisson(rate);
    else if (family == "cpd")
      s = SubordinatorSpec::compound_poisson_drift(
          kappa, rate, jump == "exp" ? JumpLaw::exponential(jump_rate) : JumpLaw::degenerate(jump_size));
    else if (family == "stable") s = SubordinatorSpec::stable(alpha);
    else s = SubordinatorSpec::gamma(shape, rate);
    s.validate();
    return s;
  }
};

std::vector<double> parse_list(const std::string& s) {
  std::vector<double> v;
  std::stringstream in(s);
  std::string tok;
  while (std::getline(in, tok, ',')) {
    try {
      v.push_back(std::stod(tok));
    } catch (const std::exception&) {
      throw ConfigError("bad number '" + tok + "' in list '" + s + "'");
    }
  }
  return v;
}

// Effective option values of the active scopes; threads and output location
// are left out so the hash does not depend on them.
std::string canonical_config(const std::vector<CLI::App*>& scopes) {
  nlohmann::json j = nlohmann::json::object();
  for (auto* app : scopes)
    for (const CLI::Option* o : app->get_options()) {
      const std::string name = o->get_name(false, true);
      if (name.empty() || name == "--help" || name == "--config" || name == "--threads" || name == "--out" ||
          name == "--format")
        continue;
      std::string v = o->count() ? CLI::detail::join(o->results()) : o->get_default_str();
      j[app->get_name() + name] = v;
    }
  return j.dump();
}

class Emitter {
 public:
  Emitter(const Globals& g, std::string command, std::vector<CLI::App*> scopes)
      : g_(g), command_(std::move(command)), hash_(cli::hex(cli::fnv1a(canonical_config(scopes)))) {}

  void table(const cli::Table& t, const std::string& stem) const {
    if (g_.format == "json") {
      nlohmann::json j{{"command", command_}, {"seed", g_.seed}, {"config_hash", hash_}, {"rows", t.json()}};
      write(stem + ".json", j.dump(2) + "\n");
    } else {
      write(stem + ".csv", t.csv({"subcond " + command_, "seed=" + std::to_string(g_.seed) + " config_hash=" + hash_}));
    }
  }

  void json(const nlohmann::json& j, const std::string& stem) const { write(stem + ".json", j.dump(2) + "\n"); }

 private:
  void write(const std::string& file, const std::string& body) const {
    if (g_.out.empty()) {
      std::cout << body;
      return;
    }
    std::filesystem::create_directories(g_.out);
    std::ofstream(std::filesystem::path(g_.out) / file, std::ios::binary) << body;
  }

  const Globals& g_;
  std::string command_;
  std::string hash_;
};

cli::Table suites_table(const std::vector<SuiteResult>& rs) {
  cli::Table t{{"criterion", "suite", "name", "status", "statistic", "threshold", "p_value", "n"}, {}};
  for (const auto& s : rs)
    for (const auto& r : s.reports)
      t.add({std::to_string(s.criterion), s.id, r.name, r.status, num(r.statistic), num(r.threshold),
             r.p_value ? num(*r.p_value) : "", std::to_string(r.n)});
  return t;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Conditioned subordinators: simulation, potentials, conditioning and verification"};
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--seed", g.seed, "master seed");
  app.add_option("--threads", g.threads, "worker threads (results do not depend on it)");
  app.add_option("--config", g.config, "JSON file of option values");
  app.add_option("--out", g.out, "output directory (default: stdout)");
  app.add_option("--format", g.format, "csv | json")->check(CLI::IsMember({"csv", "json"}));

  // simulate
  auto* sim = app.add_subcommand("simulate", "sample unconditioned paths");
  ModelOpts sim_m;
  sim_m.add(sim);
  double sim_horizon = 1.0, sim_dt = 0.01;
  std::size_t sim_paths = 5;
  sim->add_option("--horizon", sim_horizon);
  sim->add_option("--paths", sim_paths);
  sim->add_option("--dt", sim_dt, "grid step for infinite-activity families");

  // potential
  auto* pot = app.add_subcommand("potential", "renewal function U^(q) on a grid");
  ModelOpts pot_m;
  pot_m.family = "stable";
  pot_m.add(pot);
  double pot_q = 0.0, pot_xmax = 5.0;
  int pot_points = 10;
  std::string pot_method = "auto", pot_xs;
  std::size_t pot_paths = 10000;
  pot->add_option("--q", pot_q);
  pot->add_option("--x-max", pot_xmax);
  pot->add_option("--points", pot_points, "grid x_max/points, 2 x_max/points, ...");
  pot->add_option("--xs", pot_xs, "explicit comma-separated grid");
  pot->add_option("--method", pot_method, "auto | closed | inversion | mc")
      ->check(CLI::IsMember({"auto", "closed", "inversion", "mc"}));
  pot->add_option("--paths", pot_paths, "Monte Carlo paths per point");

  // condition strip | hit
  auto* cond = app.add_subcommand("condition", "conditioned samplers");
  cond->require_subcommand(1);
  auto* strip = cond->add_subcommand("strip", "stay in [0, a]");
  auto* hit = cond->add_subcommand("hit", "continuously absorbed at y");
  ModelOpts strip_m, hit_m;
  strip_m.add(strip);
  hit_m.add(hit);
  double strip_a = 3.0, strip_x0 = 0.0, hit_y = 1.0, hit_x0 = 0.0;
  std::string strip_method = "auto";
  std::size_t strip_paths = 1000, hit_paths = 1000;
  ConditioningConfig strip_cfg, hit_cfg;
  strip->add_option("--a", strip_a);
  strip->add_option("--x0", strip_x0);
  strip->add_option("--method", strip_method, "auto | weight | decomposition | chain")
      ->check(CLI::IsMember({"auto", "weight", "decomposition", "chain"}));
  strip->add_option("--paths", strip_paths);
  strip->add_option("--horizon", strip_cfg.horizon, "evaluation time of weighted paths");
  strip->add_option("--step", strip_cfg.lamperti_step, "Lamperti step of the stable sampler");
  hit->add_option("--y", hit_y);
  hit->add_option("--x0", hit_x0);
  hit->add_option("--paths", hit_paths);
  hit->add_option("--step", hit_cfg.lamperti_step, "Lamperti step of the stable sampler");

  // lamperti
  auto* lam = app.add_subcommand("lamperti", "Laplace exponents of xi under each tilt");
  double lam_alpha = 0.5, lam_step = 0.01, lam_horizon = 1.0;
  std::string lam_tilt = "none", lam_list = "0.5,1,2";
  std::size_t lam_paths = 10000;
  lam->add_option("--alpha", lam_alpha);
  lam->add_option("--tilt", lam_tilt, "none | down | circ")->check(CLI::IsMember({"none", "down", "circ"}));
  lam->add_option("--lambdas", lam_list);
  lam->add_option("--paths", lam_paths);
  lam->add_option("--step", lam_step);
  lam->add_option("--horizon", lam_horizon, "Lamperti time");

  // lastpassage
  auto* lp = app.add_subcommand("lastpassage", "CTMC conditioned to avoid 0 after a");
  std::string lp_chain = "birth_death", lp_table = "marginal";
  int lp_start = 0;
  double lp_a = 2.0, lp_beta = 1.0, lp_t = -1.0;
  std::size_t lp_paths = 20000;
  lp->add_option("--chain", lp_chain)->check(CLI::IsMember({"two_state", "birth_death", "five_state"}));
  lp->add_option("--start", lp_start);
  lp->add_option("--a", lp_a);
  lp->add_option("--beta", lp_beta);
  lp->add_option("--table", lp_table, "marginal | g | h")->check(CLI::IsMember({"marginal", "g", "h"}));
  lp->add_option("--t", lp_t, "marginal time (default a/2)");
  lp->add_option("--paths", lp_paths);

  // ladderbox
  auto* lb = app.add_subcommand("ladderbox", "joint law of (g, S) for Brownian motion in a box");
  LadderBoxLaw lb_law;
  int lb_grid = 10;
  std::size_t lb_paths = 0;
  lb->add_option("--a", lb_law.a);
  lb->add_option("--b", lb_law.b);
  lb->add_option("--dt", lb_law.skeleton_dt);
  lb->add_option("--grid", lb_grid);
  lb->add_option("--paths", lb_paths, "skeleton paths for the empirical column (0: exact only)");

  // verify
  auto* ver = app.add_subcommand("verify", "acceptance suites");
  std::string ver_which = "all";
  ver->add_option("suite", ver_which, "all | determinism | strip | terminal | killing | lamperti | undershoot | "
                                      "potential | ctmc | overshoot | brownian");
  ver->add_option("--scale", g.scale, "sample-size multiplier");

  // report
  auto* rep = app.add_subcommand("report", "summarize a verify JSON report");
  std::string rep_in;
  rep->add_option("--in", rep_in, "report file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    std::vector<CLI::App*> scopes{&app};
    std::string command;
    for (CLI::App* a = &app; !a->get_subcommands().empty();) {
      a = a->get_subcommands().front();
      scopes.push_back(a);
      command += (command.empty() ? "" : " ") + a->get_name();
    }
    if (!g.config.empty()) cli::apply_config(g.config, scopes);
    if (g.threads > 0) set_thread_count(g.threads);
    const Emitter emit(g, command, scopes);
    const RngStream rng(g.seed);

    if (sim->parsed()) {
      const auto spec = sim_m.spec();
      const SampleMode mode = spec.finite_activity() ? SampleMode::jump_exact() : SampleMode::grid(sim_dt);
      const auto paths = parallel_collect<PathSample>(
          sim_paths, rng, [&](RngStream& r, std::size_t) { return sample_path(spec, sim_horizon, mode, r); });
      cli::Table t{{"path", "t", "x"}, {}};
      for (std::size_t i = 0; i < paths.size(); ++i)
        for (std::size_t k = 0; k < paths[i].times.size(); ++k)
          t.add({std::to_string(i), num(paths[i].times[k]), num(paths[i].values[k])});
      emit.table(t, "simulate");
      return 0;
    }

    if (pot->parsed()) {
      const auto spec = pot_m.spec();
      std::vector<double> xs;
      if (!pot_xs.empty()) xs = parse_list(pot_xs);
      else
        for (int i = 1; i <= pot_points; ++i) xs.push_back(pot_xmax * i / pot_points);
      cli::Table t{{"x", "U", "method", "std_error"}, {}};
      for (std::size_t i = 0; i < xs.size(); ++i) {
        const double x = xs[i];
        if (pot_method == "mc") {
          const auto e = potential_mc(spec, pot_q, x, pot_paths, rng.substream(i));
          t.add({num(x), num(e.estimate), "mc", num(e.std_error)});
        } else if (pot_method == "closed" || (pot_method == "auto" && has_closed_form(spec, pot_q))) {
          t.add({num(x), num(potential_closed_form(spec, pot_q, x)), "closed", ""});
        } else {
          t.add({num(x), num(potential_numeric(spec, pot_q, x)), "inversion", ""});
        }
      }
      emit.table(t, "potential");
      return 0;
    }

    if (strip->parsed()) {
      const StripLaw law{strip_m.spec(), strip_a, strip_x0};
      StripMethod m = StripMethod::PathDecomposition;
      if (strip_method == "weight") m = StripMethod::ImportanceWeight;
      else if (strip_method == "chain") m = StripMethod::DoobChain;
      else if (strip_method == "auto" && (law.spec.lattice_span() || law.spec.family == Family::Stable))
        m = StripMethod::DoobChain;
      const auto paths = parallel_collect<PathSample>(
          strip_paths, rng, [&](RngStream& r, std::size_t) { return sample_strip(law, m, r, strip_cfg); });
      cli::Table t{{"path", "terminal", "lifetime", "weight", "points"}, {}};
      for (std::size_t i = 0; i < paths.size(); ++i) {
        const auto& p = paths[i];
        t.add({std::to_string(i), p.terminal ? num(*p.terminal) : "", p.killed ? num(p.lifetime) : "",
               num(p.weight), std::to_string(p.times.size())});
      }
      emit.table(t, "condition_strip");
      return 0;
    }

    if (hit->parsed()) {
      const HitLaw law{hit_m.spec(), hit_y, hit_x0};
      const auto paths = parallel_collect<PathSample>(
          hit_paths, rng, [&](RngStream& r, std::size_t) { return sample_hit(law, r, hit_cfg); });
      cli::Table t{{"path", "hit_time", "final_value", "weight"}, {}};
      for (std::size_t i = 0; i < paths.size(); ++i)
        t.add({std::to_string(i), num(paths[i].horizon()), num(paths[i].values.back()), num(paths[i].weight)});
      emit.table(t, "condition_hit");
      return 0;
    }

    if (lam->parsed()) {
      const Tilt tilt = lam_tilt == "down" ? Tilt::Down : lam_tilt == "circ" ? Tilt::Circ : Tilt::None;
      const auto lams = parse_list(lam_list);
      using Acc = std::vector<RunningStats>;
      const auto acc = batched_reduce(
          lam_paths, rng, Acc(lams.size()),
          [&](Acc& a, RngStream& r, std::size_t) {
            const auto p = esscher_sample_xi(lam_alpha, tilt, lam_horizon, r, lam_step);
            const bool alive = !p.killed || p.lifetime > lam_horizon;
            const double xi = alive ? p.value_at(lam_horizon) : 0.0;
            for (std::size_t i = 0; i < lams.size(); ++i) a[i].add(alive ? std::exp(lams[i] * xi) : 0.0);
          },
          [](Acc& o, Acc&& p) {
            for (std::size_t i = 0; i < o.size(); ++i) o[i].merge(p[i]);
          });
      cli::Table t{{"lambda", "phi", "exact", "mc", "mc_se"}, {}};
      for (std::size_t i = 0; i < lams.size(); ++i) {
        const double l = lams[i];
        const double phi = tilt == Tilt::Down ? phi_down(l, lam_alpha) : tilt == Tilt::Circ ? phi_circ(l, lam_alpha)
                                                                                          : phi_xi(l, lam_alpha);
        t.add({num(l), num(phi), num(std::exp(-lam_horizon * phi)), num(acc[i].mean), num(acc[i].std_error())});
      }
      emit.table(t, "lamperti");
      return 0;
    }

    if (lp->parsed()) {
      CtmcSpec c = lp_chain == "two_state" ? CtmcSpec::two_state()
                   : lp_chain == "five_state" ? CtmcSpec::five_state()
                                              : CtmcSpec::birth_death();
      c.start = lp_start;
      c.validate();
      const LastPassageLaw law{c, lp_a, lp_beta};
      const CtmcAnalysis A(c, lp_beta);
      const int n = A.size();
      if (lp_table == "h") {
        cli::Table t{{"state", "h", "mean_hitting_time"}, {}};
        for (int x = 0; x < n; ++x) t.add({std::to_string(x), num(A.h(x)), num(A.mean_hitting_times()(x))});
        emit.table(t, "lastpassage_h");
        return 0;
      }
      const ConditionedAvoidSampler S(law);
      if (lp_table == "g") {
        const auto gs = parallel_collect<double>(lp_paths, rng, [&](RngStream& r, std::size_t) { return S.sample(r).g; });
        cli::Table t{{"t", "exact_cdf", "empirical_cdf"}, {}};
        for (int k = 1; k <= 20; ++k) {
          const double tt = lp_a * k / 20;
          double emp = 0.0;
          for (double v : gs) emp += v <= tt;
          t.add({num(tt), num(A.V0(tt, 0.0)(c.start) / A.V0(lp_a, 0.0)(c.start)), num(emp / gs.size())});
        }
        emit.table(t, "lastpassage_g");
        return 0;
      }
      const double tt = lp_t >= 0 ? lp_t : lp_a / 2;
      const Eigen::VectorXd exact = conditioned_marginal(law, tt);
      const auto states = parallel_collect<int>(lp_paths, rng, [&](RngStream& r, std::size_t) {
        const auto s = S.sample(r);
        return s.path.alive_at(tt) ? static_cast<int>(s.path.value_at(tt)) : n;
      });
      std::vector<double> emp(n + 1, 0.0);
      for (int s : states) emp[s] += 1.0 / static_cast<double>(states.size());
      cli::Table t{{"state", "exact", "empirical"}, {}};
      for (int x = 0; x <= n; ++x) t.add({x == n ? "dead" : std::to_string(x), num(exact(x)), num(emp[x])});
      emit.table(t, "lastpassage_marginal");
      return 0;
    }

    if (lb->parsed()) {
      lb_law.validate();
      std::vector<std::pair<double, double>> pairs;
      if (lb_paths > 0) {
        const auto draws = parallel_collect<std::optional<std::pair<double, double>>>(
            lb_paths, rng, [&](RngStream& r, std::size_t) { return sample_box_pair(lb_law, r); });
        for (const auto& d : draws)
          if (d) pairs.push_back(*d);
      }
      const double V = V_box(lb_law);
      cli::Table t{{"s_lo", "s_hi", "y_lo", "y_hi", "exact_mass", "empirical_mass"}, {}};
      for (int i = 0; i < lb_grid; ++i)
        for (int k = 0; k < lb_grid; ++k) {
          const double s0 = lb_law.a * i / lb_grid, s1 = lb_law.a * (i + 1) / lb_grid;
          const double y0 = lb_law.b * k / lb_grid, y1 = lb_law.b * (k + 1) / lb_grid;
          std::string emp;
          if (!pairs.empty()) {
            double c = 0.0;
            for (const auto& [s, y] : pairs) c += s > s0 && s <= s1 && y > y0 && y <= y1;
            emp = num(c / pairs.size());
          }
          t.add({num(s0), num(s1), num(y0), num(y1), num(box_measure(s0, s1, y0, y1) / V), emp});
        }
      emit.table(t, "ladderbox");
      return 0;
    }

    if (ver->parsed()) {
      require(g.scale > 0, "verify: --scale must be positive");
      SuiteOptions o{g.seed, g.scale};
      std::vector<SuiteResult> results;
      if (ver_which == "all") {
        results = run_statistical_suites(o);
        results.push_back(suite_determinism(o, &results));
      } else if (ver_which == "determinism") {
        results.push_back(suite_determinism(o));
      } else {
        bool found = false;
        for (const auto& d : statistical_suites())
          if (d.id == ver_which) {
            results.push_back(d.run(o));
            found = true;
          }
        if (!found) throw ConfigError("verify: unknown suite '" + ver_which + "'");
      }
      bool ok = true;
      for (const auto& r : results) ok = ok && r.pass();
      if (g.format == "csv") emit.table(suites_table(results), "verify_report");
      else emit.json(suites_json(results, o), "verify_report");
      for (const auto& r : results)
        std::cerr << (r.pass() ? "PASS " : "FAIL ") << r.criterion << " " << r.title << "\n";
      return ok ? 0 : 1;
    }

    if (rep->parsed()) {
      std::ifstream in(rep_in);
      if (!in) throw ConfigError("report: cannot open " + rep_in);
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(in);
      } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(std::string("report: malformed JSON: ") + e.what());
      }
      if (!j.contains("suites")) throw ConfigError("report: not a verify report");
      cli::Table t{{"criterion", "suite", "status", "reports", "failing"}, {}};
      for (const auto& s : j["suites"]) {
        std::string failing;
        for (const auto& r : s["reports"])
          if (r["status"] != "pass") failing += (failing.empty() ? "" : ";") + r["name"].get<std::string>();
        t.add({std::to_string(s["criterion"].get<int>()), s["id"], s["status"], std::to_string(s["reports"].size()),
               failing});
      }
      emit.table(t, "report");
      return j["status"] == "pass" ? 0 : 1;
    }
  } catch (const std::exception& e) {
    // config, domain and unsupported-combination errors are all usage errors
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}
