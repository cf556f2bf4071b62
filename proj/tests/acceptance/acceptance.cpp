// Acceptance gate: one PASS/FAIL line per criterion, sub-checks indented above it.
#include "dsopt/experiment.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <vector>

using namespace dsopt;

namespace {

const std::filesystem::path kPresets = DSOPT_PRESET_DIR;
const std::filesystem::path kOut = DSOPT_ACCEPTANCE_OUT;

struct Criterion {
  std::string name;
  bool pass = true;

  void check(bool ok, const std::string& what) {
    std::cout << "  [" << (ok ? "ok" : "miss") << "] " << what << std::endl;
    pass = pass && ok;
  }
  bool report() const {
    std::cout << (pass ? "PASS " : "FAIL ") << name << std::endl;
    return pass;
  }
};

std::string g(double x) { return format_g17(x); }

// Every simulation in this binary runs with invariant checks on; a throw lands here.
std::vector<std::string> g_invariant_failures;
int g_runs = 0;

std::optional<ExperimentResult> run(ExperimentConfig c, const std::string& tag) {
  finalize(c);
  c.check_invariants = true;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    ++g_runs;
    ExperimentResult r = run_experiment(c);
    write_outputs(r, kOut / tag);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::cout << "  run " << tag << ": K=" << c.steps << " R=" << c.reps << " trailing=" << g(r.summary.trailing_error)
              << " pdf_ratio=" << g(r.summary.pdf_msg_ratio) << " (" << secs << " s)" << std::endl;
    return r;
  } catch (const InvariantError& e) {
    g_invariant_failures.push_back(tag + ": " + e.what());
    std::cout << "  run " << tag << " raised an invariant violation: " << e.what() << std::endl;
    return std::nullopt;
  }
}

ExperimentConfig ls_preset() { return load_config(kPresets / "ls_paper.json"); }
ExperimentConfig wp_preset() { return load_config(kPresets / "waypoint_paper.json"); }

ExperimentConfig with_policy(ExperimentConfig c, PolicyMode mode, double epsilon, bool gaps) {
  c.policy.mode = mode;
  c.policy.epsilon = epsilon;
  c.log_gaps = gaps;
  return c;
}

void bound_check(Criterion& cr, const std::optional<ExperimentResult>& r, const std::string& label) {
  if (!r) {
    cr.check(false, label + ": run did not complete");
    return;
  }
  const Summary& s = r->summary;
  const double amax = s.m_f / (s.L * s.L);
  const std::string consts = "m_f=" + g(s.m_f) + " L=" + g(s.L) + " G=" + g(s.G) + " delta_x=" + g(s.delta_x) +
                             " gamma=" + g(s.gamma) + " rho=" + g(s.rho) + " alpha=" + g(r->steps.alpha) +
                             " m_f/L^2=" + g(amax);
  if (!s.bound) {
    cr.check(false, label + ": bound not applicable (" + consts + "), trailing=" + g(s.trailing_error));
    return;
  }
  cr.check(s.trailing_error <= *s.bound,
           label + ": trailing=" + g(s.trailing_error) + " <= bound=" + g(*s.bound) + " (" + consts + ")");
}

void epsilon_check(Criterion& cr, const std::optional<ExperimentResult>& r, const std::string& label) {
  if (!r) {
    cr.check(false, label + ": run did not complete");
    return;
  }
  const EpsilonReport& e = r->epsilon;
  cr.check(e.checked > 0 && e.ok() && e.max_ratio <= 1.0,
           label + ": max ratio " + g(e.max_ratio) + ", " + std::to_string(e.violations) + " violations in " +
               std::to_string(e.checked) + " records");
}

// Graph enumeration for the eigenvalue oracle.

int pair_index(int i, int j) {
  if (i > j) std::swap(i, j);
  return j * (j - 1) / 2 + i;
}

std::uint32_t canonical(std::uint32_t mask, int n, const std::vector<std::vector<int>>& perm_pairs) {
  const int pairs = n * (n - 1) / 2;
  std::uint32_t best = mask;
  for (const auto& pp : perm_pairs) {
    std::uint32_t m = 0;
    for (int p = 0; p < pairs; ++p)
      if (mask >> p & 1u) m |= 1u << pp[static_cast<std::size_t>(p)];
    best = std::min(best, m);
  }
  return best;
}

std::vector<std::vector<int>> permutation_pairs(int n) {
  std::vector<int> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);
  std::vector<std::vector<int>> out;
  do {
    std::vector<int> pp(static_cast<std::size_t>(n * (n - 1) / 2));
    for (int j = 1; j < n; ++j)
      for (int i = 0; i < j; ++i)
        pp[static_cast<std::size_t>(pair_index(i, j))] = pair_index(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(j)]);
    out.push_back(std::move(pp));
  } while (std::next_permutation(perm.begin(), perm.end()));
  return out;
}

std::vector<Edge> edges_of(std::uint32_t mask, int n) {
  std::vector<Edge> e;
  for (int j = 1; j < n; ++j)
    for (int i = 0; i < j; ++i)
      if (mask >> pair_index(i, j) & 1u) e.push_back({i, j});
  return e;
}

struct EigenTally {
  long graphs = 0;
  double worst = 0.0;
};

void compare_eigen(std::uint32_t mask, int n, EigenTally& t) {
  const auto edges = edges_of(mask, n);
  Mat adj = Mat::Zero(n, n);
  for (const Edge& e : edges) adj(e.a, e.b) = adj(e.b, e.a) = 1.0;
  const LaplacianMatrix lap = laplacian_of(adj);
  Eigen::SelfAdjointEigenSolver<Mat> es(lap.matrix, Eigen::EigenvaluesOnly);
  const Vec ev = es.eigenvalues();
  t.worst = std::max({t.worst, std::abs(lambda2(lap) - ev(1)), std::abs(lambda_max(lap) - ev(n - 1))});
  ++t.graphs;
}

}  // namespace

int main() {
  std::cout.precision(10);
  std::filesystem::create_directories(kOut);
  int failed = 0;

  // Shared scenario runs.
  std::cout << "running least-squares preset sweeps" << std::endl;
  auto ls = ls_preset();
  const auto ls_e001 = run(with_policy(ls, PolicyMode::Full, 0.001, true), "ls_eps0.001");
  const auto ls_e01 = run(with_policy(ls, PolicyMode::Full, 0.1, true), "ls_eps0.1");
  const auto ls_e5 = run(with_policy(ls, PolicyMode::Full, 5.0, true), "ls_eps5");
  const auto ls_every = run(with_policy(ls, PolicyMode::EveryTime, 0.001, false), "ls_everytime");
  std::cout << "running waypoint preset sweeps" << std::endl;
  auto wp = wp_preset();
  const auto wp_e002 = run(with_policy(wp, PolicyMode::LinearSimplified, 0.02, true), "wp_eps0.02");
  const auto wp_e02 = run(with_policy(wp, PolicyMode::LinearSimplified, 0.2, true), "wp_eps0.2");

  {
    Criterion cr{"1 error floor: trailing mean squared error at or below theorem1_bound"};
    bound_check(cr, ls_e001, "least squares eps=0.001");
    bound_check(cr, wp_e002, "waypoint eps=0.02");
    bound_check(cr, wp_e02, "waypoint eps=0.2");
    failed += !cr.report();
  }

  {
    Criterion cr{"2 epsilon-gradient guarantee: max gap ratio <= 1, negative control violates"};
    epsilon_check(cr, ls_e001, "least squares eps=0.001");
    epsilon_check(cr, ls_e01, "least squares eps=0.1");
    epsilon_check(cr, ls_e5, "least squares eps=5");
    epsilon_check(cr, wp_e002, "waypoint eps=0.02");
    epsilon_check(cr, wp_e02, "waypoint eps=0.2");
    auto neg = with_policy(ls, PolicyMode::Never, 0.001, true);
    neg.steps = 300;
    neg.reps = 2;
    const auto never = run(neg, "ls_never_control");
    cr.check(never && never->epsilon.violations > 0,
             "never-send control: " +
                 (never ? std::to_string(never->epsilon.violations) + " violations, max ratio " + g(never->epsilon.max_ratio)
                        : std::string("run did not complete")));
    failed += !cr.report();
  }

  {
    Criterion cr{"3 linear contraction: noiseless static waypoint run"};
    auto c = with_policy(wp, PolicyMode::LinearSimplified, 0.02, false);
    c.wp.noise = false;
    c.wp_rate_per_alpha = 0.0;
    c.steps = 40000;
    c.reps = 5;
    const auto r = run(c, "wp_noiseless_static");
    if (r) {
      const auto& e = r->mean_error;
      const std::size_t first = e.size() / 20;
      std::size_t last = first;
      while (last < e.size() && e[last] > 1e-20) ++last;
      BoundInputs in = bound_inputs(*r);
      in.epsilon = 0.0;
      in.delta_x = 0.0;
      const double limit = contraction_rate(in, r->lambda2) + 0.01;
      if (last >= first + 2) {
        const double rate = fitted_rate(e, first, last);
        cr.check(rate <= limit, "fitted rate " + g(rate) + " over ticks [" + std::to_string(first) + ", " +
                                    std::to_string(last) + ") <= " + g(limit));
      } else {
        cr.check(false, "error fell below 1e-20 before the fit window");
      }
      cr.check(r->summary.trailing_error <= 1e-8, "trailing error " + g(r->summary.trailing_error) + " <= 1e-8");
      if (bound_applicable(in))
        std::cout << "  bound with delta_x = eps = 0: " << g(theorem1_bound(in)) << " (G=" << g(in.G) << ")" << std::endl;
    } else {
      cr.check(false, "run did not complete");
    }
    failed += !cr.report();
  }

  {
    Criterion cr{"4 communication savings: pdf ratio decreasing in eps, eps=5 accuracy within 10x of every-time"};
    if (ls_e001 && ls_e01 && ls_e5 && ls_every) {
      const double a = ls_e001->summary.pdf_msg_ratio, b = ls_e01->summary.pdf_msg_ratio, c = ls_e5->summary.pdf_msg_ratio;
      cr.check(a > b && b > c, "least squares ratios " + g(a) + " > " + g(b) + " > " + g(c));
      const double t5 = ls_e5->summary.trailing_error, te = ls_every->summary.trailing_error;
      cr.check(t5 <= 10.0 * te, "eps=5 trailing " + g(t5) + " <= 10 x every-time trailing " + g(te));
    } else {
      cr.check(false, "least-squares sweep incomplete");
    }
    if (wp_e002 && wp_e02) {
      const double a = wp_e002->summary.pdf_msg_ratio, b = wp_e02->summary.pdf_msg_ratio;
      cr.check(a > b, "waypoint ratios " + g(a) + " > " + g(b));
    } else {
      cr.check(false, "waypoint sweep incomplete");
    }
    failed += !cr.report();
  }

  {
    Criterion cr{"5 oracle equivalence: Monte Carlo, finite differences, eigenvalues, pinned bound"};
    for (const auto& base : {ls_preset(), wp_preset()}) {
      const NetworkModel net = build_network(base);
      const StepSizes steps = resolve_steps(base, net);
      Rng rng = make_stream(base.seed, 0);
      const auto sc = make_scenario(base, net, steps, rng);
      Rng probe = make_stream(base.seed, kTopologyStream - 3);
      // (a) one node, one probe point, every gradient coordinate.
      const int node = 0;
      Vec x(sc->dimension());
      for (Eigen::Index k = 0; k < x.size(); ++k)
        x(k) = sc->box().lower(k) + uniform01(probe) * (sc->box().upper(k) - sc->box().lower(k));
      const Vec exact = sc->expected_gradient(node, x);
      for (std::size_t N : {std::size_t{1000}, std::size_t{10000}, std::size_t{1000000}}) {
        std::vector<std::vector<double>> storage;
        std::vector<const std::vector<double>*> banks;
        for (int s : sc->sources(node)) {
          storage.emplace_back();
          sample_into(sc->pdf(s)->pdf, probe, storage.back(), N);
        }
        for (const auto& b : storage) banks.push_back(&b);
        const Vec mc = sc->mc_gradient(node, x, banks);
        Vec sq = Vec::Zero(x.size());
        std::vector<double> w(storage.size());
        for (std::size_t s = 0; s < N; ++s) {
          for (std::size_t a = 0; a < w.size(); ++a) w[a] = storage[a][s];
          sq += (sc->gradient(node, x, w) - mc).cwiseAbs2();
        }
        double worst = 0.0;
        bool ok = true;
        for (Eigen::Index k = 0; k < x.size(); ++k) {
          const double se = std::sqrt(sq(k) / static_cast<double>(N - 1) / static_cast<double>(N));
          const double dev = std::abs(mc(k) - exact(k));
          if (se > 0.0) worst = std::max(worst, dev / se);
          ok = ok && dev <= 3.0 * se + 1e-12 * std::max(1.0, std::abs(exact(k)));
        }
        cr.check(ok, sc->name() + " Monte Carlo N=" + std::to_string(N) + ": worst deviation " + g(worst) +
                         " standard errors");
      }
      // (b) 50 probes over random nodes, points and noise draws.
      double worst_fd = 0.0;
      for (int p = 0; p < 50; ++p) {
        const int i = static_cast<int>(probe() % static_cast<std::uint64_t>(sc->nodes()));
        Vec y(x.size());
        for (Eigen::Index k = 0; k < y.size(); ++k)
          y(k) = sc->box().lower(k) + uniform01(probe) * (sc->box().upper(k) - sc->box().lower(k));
        std::vector<double> w;
        for (int s : sc->sources(i)) w.push_back(sample_one(sc->pdf(s)->pdf, probe));
        worst_fd = std::max(worst_fd, gradient_fd_error(*sc, i, y, w));
      }
      cr.check(worst_fd < 1e-5, sc->name() + " finite differences: worst relative error " + g(worst_fd) + " over 50 probes");
    }
    // (c) every connected graph on up to 8 vertices, up to isomorphism for n <= 7.
    {
      const std::vector<long> connected_counts{1, 1, 2, 6, 21, 112, 853};
      std::vector<std::uint32_t> classes{0};
      EigenTally tally;
      bool counts_ok = true;
      for (int n = 2; n <= 8; ++n) {
        const auto perms = n <= 7 ? permutation_pairs(n) : std::vector<std::vector<int>>{};
        std::set<std::uint32_t> next;
        std::vector<std::uint32_t> raw;
        for (std::uint32_t base : classes)
          for (std::uint32_t sub = 0; sub < (1u << (n - 1)); ++sub) {
            std::uint32_t m = base;
            for (int i = 0; i < n - 1; ++i)
              if (sub >> i & 1u) m |= 1u << pair_index(i, n - 1);
            if (n <= 7)
              next.insert(canonical(m, n, perms));
            else
              raw.push_back(m);
          }
        if (n <= 7) raw.assign(next.begin(), next.end());
        long connected = 0;
        for (std::uint32_t m : raw)
          if (is_connected(n, edges_of(m, n))) {
            ++connected;
            compare_eigen(m, n, tally);
          }
        if (n <= 7) counts_ok = counts_ok && connected == connected_counts[static_cast<std::size_t>(n - 1)];
        std::cout << "  n=" << n << ": " << raw.size() << " graphs, " << connected << " connected" << std::endl;
        classes = raw;
      }
      cr.check(counts_ok, "connected isomorphism-class counts for n <= 7 match 1,2,6,21,112,853");
      cr.check(tally.worst <= 1e-8, "lambda_2 and lambda_max vs dense eigensolver on " + std::to_string(tally.graphs) +
                                        " connected graphs: worst deviation " + g(tally.worst));
    }
    // (d) pinned value: m_f = L = 2, alpha = 0.25, n = 2, gamma = 0.25, eps = 0.1, radius 1, G = 1, delta_x = 0.01.
    {
      BoundInputs in;
      in.m_f = 2.0;
      in.L = 2.0;
      in.alpha = 0.25;
      in.beta = 0.25;
      in.n = 2;
      in.gamma = 0.25;
      in.epsilon = 0.1;
      in.radius_x = 1.0;
      in.G = 1.0;
      in.delta_x = 0.01;
      const double v = theorem1_bound(in);
      cr.check(std::abs(v - 4.4066) <= 1e-12, "theorem1_bound " + g(v) + " vs pinned 4.4066");
    }
    failed += !cr.report();
  }

  {
    Criterion cr{"6 structural invariants: convex mixing, feasibility, determinism, validate rejections"};
    for (auto c : {ls_preset(), wp_preset()}) {
      c.steps = 200;
      c.reps = 3;
      c.raw_traces = true;
      c.message_log = true;
      c.threads = 1;
      const auto a = run(c, c.scenario + "_determinism_a");
      c.threads = 3;
      const auto b = run(c, c.scenario + "_determinism_b");
      bool same = a && b && a->reps.size() == b->reps.size();
      if (same) {
        same = trace_csv(a->mean_error, a->mean_pdf, a->mean_snapshot, a->mean_everytime, a->summary.bound) ==
               trace_csv(b->mean_error, b->mean_pdf, b->mean_snapshot, b->mean_everytime, b->summary.bound);
        for (std::size_t i = 0; i < a->reps.size() && same; ++i)
          same = a->reps[i].error == b->reps[i].error &&
                 encode_messages(a->reps[i].messages) == encode_messages(b->reps[i].messages);
      }
      cr.check(same, c.scenario + ": identical seeds give byte-identical traces and message logs (1 vs 3 threads)");
    }
    for (auto c : {ls_preset(), wp_preset()}) {
      const ValidationReport base = validate_experiment(c);
      const int n = c.scenario == "waypoint" ? c.wp.rows * c.wp.cols : c.ls.n;
      auto at_beta = c;
      at_beta.beta = 1.0 / n;
      const ValidationReport rb = validate_experiment(at_beta);
      const bool beta_rejected = std::any_of(rb.checks.begin(), rb.checks.end(),
                                             [](const ValidationCheck& v) { return v.name == "beta < 1/n" && !v.pass; });
      cr.check(beta_rejected && !rb.ok(), c.scenario + ": validate rejects beta = 1/n");
      auto at_alpha = c;
      at_alpha.alpha = base.constants.m_f / (base.constants.L * base.constants.L);
      const ValidationReport ra = validate_experiment(at_alpha);
      const bool alpha_rejected = std::any_of(ra.checks.begin(), ra.checks.end(), [](const ValidationCheck& v) {
        return v.name == "alpha < m_f/L^2" && !v.pass;
      });
      cr.check(alpha_rejected && !ra.ok(), c.scenario + ": validate rejects alpha = m_f/L^2 = " + g(*at_alpha.alpha));
    }
    for (const auto& f : g_invariant_failures) std::cout << "  invariant failure: " << f << std::endl;
    cr.check(g_invariant_failures.empty(), "mixing and feasibility assertions held every tick in all " +
                                                std::to_string(g_runs) + " runs");
    failed += !cr.report();
  }

  std::cout << (failed == 0 ? "all criteria passed" : std::to_string(failed) + " criteria failed") << std::endl;
  return failed == 0 ? 0 : 1;
}
