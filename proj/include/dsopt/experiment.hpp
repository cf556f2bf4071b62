#pragma once

#include "dsopt/analysis.hpp"
#include "dsopt/core.hpp"
#include "dsopt/least_squares.hpp"
#include "dsopt/netgraph.hpp"
#include "dsopt/solver.hpp"
#include "dsopt/trigger.hpp"
#include "dsopt/waypoint.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <limits>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

namespace dsopt {

using Json = nlohmann::json;

inline constexpr std::uint64_t kTopologyStream = 0xffffffffull;

struct ExperimentConfig {
  std::string scenario = "least_squares";
  long steps = 3000;
  int reps = 25;
  std::uint64_t seed = 1;
  int threads = 0;
  PolicyParams policy;
  std::optional<double> nu_over_epsilon = 0.25;
  std::optional<double> alpha;
  std::optional<double> beta;
  std::size_t mc_samples = 5000;
  LeastSquaresParams ls;
  double ls_radius = 0.5;
  double ls_edge_prob = 0.3;
  WaypointParams wp;
  std::optional<double> wp_rate_per_alpha;
  bool check_invariants = true;
  bool log_gaps = false;
  int union_window = 50;
  int validate_probes = 16;
  int run_probes = 1;
  double trailing_fraction = 0.1;
  std::string out_dir = "out";
  bool raw_traces = false;
  bool message_log = false;
};

namespace detail {

inline void check_keys(const Json& obj, const std::string& where, std::initializer_list<const char*> allowed) {
  require(obj.is_object(), where + " must be an object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, _] : obj.items()) require(ok.count(key) > 0, "unknown key '" + key + "' in " + where);
}

template <class T>
void read(const Json& obj, const char* key, T& out, const std::string& where) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(where + "." + key + " has the wrong type");
  }
}

inline Mat read_matrix(const Json& j, const std::string& where) {
  require(j.is_array() && !j.empty(), where + " must be a nonempty array of rows");
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = static_cast<Eigen::Index>(j.at(0).size());
  Mat m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const Json& row = j.at(static_cast<std::size_t>(r));
    require(row.is_array() && static_cast<Eigen::Index>(row.size()) == cols, where + " rows must have equal length");
    for (Eigen::Index c = 0; c < cols; ++c) {
      require(row.at(static_cast<std::size_t>(c)).is_number(), where + " entries must be numbers");
      m(r, c) = row.at(static_cast<std::size_t>(c)).get<double>();
    }
  }
  return m;
}

inline std::optional<double> read_auto(const Json& obj, const char* key, const std::string& where) {
  if (!obj.contains(key)) return std::nullopt;
  const Json& v = obj.at(key);
  if (v.is_string()) {
    require(v.get<std::string>() == "auto", where + "." + key + " must be a number or \"auto\"");
    return std::nullopt;
  }
  require(v.is_number(), where + "." + key + " must be a number or \"auto\"");
  return v.get<double>();
}

}  // namespace detail

inline PolicyMode parse_policy_mode(const std::string& s) {
  if (s == "full") return PolicyMode::Full;
  if (s == "linear") return PolicyMode::LinearSimplified;
  if (s == "everytime") return PolicyMode::EveryTime;
  if (s == "never") return PolicyMode::Never;
  throw ConfigError("unknown policy mode '" + s + "'");
}

inline const char* to_string(PolicyMode m) {
  switch (m) {
    case PolicyMode::Full:
      return "full";
    case PolicyMode::LinearSimplified:
      return "linear";
    case PolicyMode::EveryTime:
      return "everytime";
    case PolicyMode::Never:
      return "never";
  }
  return "?";
}

// Resolves nu from nu_over_epsilon when set and checks every field.
inline void finalize(ExperimentConfig& c) {
  require(c.scenario == "least_squares" || c.scenario == "waypoint", "scenario must be least_squares or waypoint");
  require(c.steps >= 1, "steps must be at least 1");
  require(c.reps >= 1, "replications must be at least 1");
  require(c.threads >= 0, "threads must be nonnegative");
  require(c.mc_samples >= 1, "monte_carlo_samples must be at least 1");
  if (c.nu_over_epsilon) {
    require(*c.nu_over_epsilon > 0.0, "policy.nu_over_epsilon must be positive");
    c.policy.nu = *c.nu_over_epsilon * c.policy.epsilon;
  }
  validate(c.policy);
  if (c.alpha) require(*c.alpha > 0.0, "step_sizes.alpha must be positive");
  if (c.beta) require(*c.beta > 0.0, "step_sizes.beta must be positive");
  require(c.union_window >= 0, "diagnostics.union_window must be nonnegative");
  require(c.validate_probes >= 1 && c.run_probes >= 1, "curvature probes must be at least 1");
  require(c.trailing_fraction > 0.0 && c.trailing_fraction <= 1.0, "diagnostics.trailing_fraction must lie in (0,1]");
  if (c.scenario == "least_squares") {
    validate(c.ls);
    require(c.ls_radius > 0.0, "network.radius must be positive");
    require(c.ls_edge_prob > 0.0 && c.ls_edge_prob <= 1.0, "network.edge_prob must lie in (0,1]");
    require(c.alpha.has_value(), "step_sizes.alpha is required for least_squares");
  } else {
    validate(c.wp);
    if (c.wp_rate_per_alpha) require(*c.wp_rate_per_alpha >= 0.0, "waypoint.angular_rate_per_alpha must be nonnegative");
  }
}

inline ExperimentConfig parse_config(const Json& j) {
  using detail::check_keys;
  using detail::read;
  ExperimentConfig c;
  check_keys(j, "config",
             {"scenario", "steps", "replications", "seed", "threads", "monte_carlo_samples", "policy", "step_sizes",
              "network", "least_squares", "waypoint", "diagnostics", "output"});
  read(j, "scenario", c.scenario, "config");
  read(j, "steps", c.steps, "config");
  read(j, "replications", c.reps, "config");
  read(j, "seed", c.seed, "config");
  read(j, "threads", c.threads, "config");
  read(j, "monte_carlo_samples", c.mc_samples, "config");
  if (j.contains("policy")) {
    const Json& p = j.at("policy");
    check_keys(p, "policy", {"mode", "epsilon", "eta", "nu", "nu_over_epsilon", "exchange", "degree"});
    std::string mode = to_string(c.policy.mode);
    read(p, "mode", mode, "policy");
    c.policy.mode = parse_policy_mode(mode);
    read(p, "epsilon", c.policy.epsilon, "policy");
    read(p, "eta", c.policy.eta, "policy");
    require(!(p.contains("nu") && p.contains("nu_over_epsilon")), "policy: give nu or nu_over_epsilon, not both");
    if (p.contains("nu")) {
      read(p, "nu", c.policy.nu, "policy");
      c.nu_over_epsilon.reset();
    }
    if (p.contains("nu_over_epsilon")) {
      double r = 0.0;
      read(p, "nu_over_epsilon", r, "policy");
      c.nu_over_epsilon = r;
    }
    std::string ex = "instant", deg = "static";
    read(p, "exchange", ex, "policy");
    read(p, "degree", deg, "policy");
    require(ex == "instant" || ex == "deferred", "policy.exchange must be instant or deferred");
    require(deg == "static" || deg == "node_count", "policy.degree must be static or node_count");
    c.policy.exchange = ex == "instant" ? ExchangeMode::Instant : ExchangeMode::Deferred;
    c.policy.degree = deg == "static" ? DegreeMode::Static : DegreeMode::NodeCount;
  }
  if (j.contains("step_sizes")) {
    const Json& s = j.at("step_sizes");
    check_keys(s, "step_sizes", {"alpha", "beta"});
    c.alpha = detail::read_auto(s, "alpha", "step_sizes");
    c.beta = detail::read_auto(s, "beta", "step_sizes");
  }
  if (j.contains("network")) {
    const Json& n = j.at("network");
    check_keys(n, "network", {"radius", "edge_prob"});
    read(n, "radius", c.ls_radius, "network");
    read(n, "edge_prob", c.ls_edge_prob, "network");
  }
  if (j.contains("least_squares")) {
    const Json& l = j.at("least_squares");
    check_keys(l, "least_squares",
               {"n", "d", "transition", "process_var", "measurement_var", "h_bar", "coupling", "innovation_var",
                "support_hi", "scale_floor", "box", "drifting_pdfs"});
    read(l, "n", c.ls.n, "least_squares");
    read(l, "d", c.ls.d, "least_squares");
    if (l.contains("transition")) c.ls.transition = detail::read_matrix(l.at("transition"), "least_squares.transition");
    if (l.contains("h_bar")) c.ls.h_bar = detail::read_matrix(l.at("h_bar"), "least_squares.h_bar");
    read(l, "process_var", c.ls.process_var, "least_squares");
    read(l, "measurement_var", c.ls.measurement_var, "least_squares");
    read(l, "coupling", c.ls.coupling, "least_squares");
    read(l, "innovation_var", c.ls.innovation_var, "least_squares");
    read(l, "support_hi", c.ls.support_hi, "least_squares");
    read(l, "scale_floor", c.ls.scale_floor, "least_squares");
    read(l, "drifting_pdfs", c.ls.drifting_pdfs, "least_squares");
    if (l.contains("box")) {
      std::vector<double> b;
      read(l, "box", b, "least_squares");
      require(b.size() == 2, "least_squares.box must be [lo, hi]");
      c.ls.box_lo = b[0];
      c.ls.box_hi = b[1];
    }
  }
  if (j.contains("waypoint")) {
    const Json& w = j.at("waypoint");
    check_keys(w, "waypoint",
               {"rows", "cols", "theta", "edge_prob", "box_half", "spacing", "angular_rate", "angular_rate_per_alpha",
                "noise", "gust", "gust_factor"});
    read(w, "rows", c.wp.rows, "waypoint");
    read(w, "cols", c.wp.cols, "waypoint");
    read(w, "theta", c.wp.theta, "waypoint");
    read(w, "edge_prob", c.wp.edge_prob, "waypoint");
    read(w, "box_half", c.wp.box_half, "waypoint");
    read(w, "spacing", c.wp.spacing, "waypoint");
    read(w, "noise", c.wp.noise, "waypoint");
    read(w, "gust_factor", c.wp.gust_factor, "waypoint");
    require(!(w.contains("angular_rate") && w.contains("angular_rate_per_alpha")),
            "waypoint: give angular_rate or angular_rate_per_alpha, not both");
    read(w, "angular_rate", c.wp.angular_rate, "waypoint");
    if (w.contains("angular_rate_per_alpha")) {
      double r = 0.0;
      read(w, "angular_rate_per_alpha", r, "waypoint");
      c.wp_rate_per_alpha = r;
    }
    if (w.contains("gust")) {
      std::vector<long> g;
      read(w, "gust", g, "waypoint");
      require(g.size() == 2, "waypoint.gust must be [begin, end]");
      c.wp.gust_begin = g[0];
      c.wp.gust_end = g[1];
    }
  }
  if (j.contains("diagnostics")) {
    const Json& d = j.at("diagnostics");
    check_keys(d, "diagnostics",
               {"check_invariants", "log_gaps", "union_window", "validate_probes", "run_probes", "trailing_fraction"});
    read(d, "check_invariants", c.check_invariants, "diagnostics");
    read(d, "log_gaps", c.log_gaps, "diagnostics");
    read(d, "union_window", c.union_window, "diagnostics");
    read(d, "validate_probes", c.validate_probes, "diagnostics");
    read(d, "run_probes", c.run_probes, "diagnostics");
    read(d, "trailing_fraction", c.trailing_fraction, "diagnostics");
  }
  if (j.contains("output")) {
    const Json& o = j.at("output");
    check_keys(o, "output", {"dir", "raw_traces", "message_log"});
    read(o, "dir", c.out_dir, "output");
    read(o, "raw_traces", c.raw_traces, "output");
    read(o, "message_log", c.message_log, "output");
  }
  finalize(c);
  return c;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(in.good(), "cannot open config " + path.string());
  Json j;
  try {
    j = Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return parse_config(j);
}

// The fixed communication graph: a lattice for waypoints, a connected random geometric graph
// drawn from the master seed otherwise.
inline NetworkModel build_network(const ExperimentConfig& c) {
  if (c.scenario == "waypoint") return grid_lattice(c.wp.rows, c.wp.cols, c.wp.edge_prob);
  Rng rng = make_stream(c.seed, kTopologyStream);
  return random_geometric_network(c.ls.n, c.ls_radius, c.ls_edge_prob, rng);
}

inline StepSizes resolve_steps(const ExperimentConfig& c, const NetworkModel& net) {
  StepSizes s{c.alpha.value_or(0.0), c.beta.value_or(0.0)};
  if (c.scenario == "waypoint" && (!c.alpha || !c.beta)) {
    const StepSizes a = wp_stepsizes(expected_laplacian(net), c.wp.theta, c.wp.edge_prob);
    if (!c.alpha) s.alpha = a.alpha;
    if (!c.beta) s.beta = a.beta;
  }
  if (c.scenario == "least_squares" && !c.beta) s.beta = 1.0 / net.n - 1e-4;
  return s;
}

inline std::unique_ptr<Scenario> make_scenario(const ExperimentConfig& c, const NetworkModel& net, const StepSizes& steps,
                                               Rng& rng) {
  if (c.scenario == "waypoint") {
    WaypointParams p = c.wp;
    if (c.wp_rate_per_alpha) p.angular_rate = *c.wp_rate_per_alpha * steps.alpha;
    return std::make_unique<WaypointScenario>(p, rng);
  }
  return std::make_unique<LeastSquaresScenario>(c.ls, net, rng);
}

struct ReplicationResult {
  std::vector<double> error;
  std::vector<long> pdf_msgs;
  std::vector<long> snapshot_msgs;
  std::vector<long> everytime_msgs;
  Constants constants{std::numeric_limits<double>::infinity(), 0.0};
  double G = 0.0;
  double delta_x = 0.0;
  double radius_x = 0.0;
  EpsilonReport epsilon;
  std::vector<Message> messages;
};

inline ReplicationResult run_replication(const ExperimentConfig& c, const NetworkModel& net, const StepSizes& steps,
                                         int rep) {
  Rng rng = make_stream(c.seed, static_cast<std::uint64_t>(rep));
  auto scenario = make_scenario(c, net, steps, rng);
  SolverOptions opt;
  opt.mc_samples = c.mc_samples;
  opt.check_invariants = c.check_invariants;
  opt.log_gaps = c.log_gaps;
  opt.log_messages = c.message_log;
  opt.track_constants = true;
  opt.constant_probes = c.run_probes;
  World world(std::move(scenario), steps, c.policy, opt, std::move(rng));
  ReplicationResult r;
  r.radius_x = world.radius_x();
  Vec prev_star;
  for (long k = 0; k < c.steps; ++k) {
    TickReport t = world.tick();
    r.error.push_back(t.sq_error);
    r.pdf_msgs.push_back(t.pdf_msgs);
    r.snapshot_msgs.push_back(t.snapshot_msgs);
    r.everytime_msgs.push_back(t.everytime_msgs);
    r.constants.m_f = std::min(r.constants.m_f, t.constants.m_f);
    r.constants.L = std::max(r.constants.L, t.constants.L);
    r.G = std::max(r.G, t.G);
    if (k > 0) r.delta_x = std::max(r.delta_x, (t.x_star - prev_star).norm());
    prev_star = std::move(t.x_star);
  }
  if (c.log_gaps) r.epsilon = verify_epsilon_guarantee(world.gap_log(), c.policy.epsilon, r.radius_x);
  if (c.message_log) r.messages = world.messages();
  return r;
}

struct Summary {
  double m_f = 0.0;
  double L = 0.0;
  double G = 0.0;
  double delta_x = 0.0;
  double gamma = 0.0;
  double rho = 0.0;
  std::optional<double> bound;
  double trailing_error = 0.0;
  double pdf_msg_ratio = 0.0;
  double snapshot_msg_ratio = 0.0;
};

struct ExperimentResult {
  ExperimentConfig config;
  StepSizes steps;
  double lambda2 = 0.0;
  double radius_x = 0.0;
  std::vector<double> mean_error;
  std::vector<double> mean_pdf;
  std::vector<double> mean_snapshot;
  std::vector<double> mean_everytime;
  Summary summary;
  EpsilonReport epsilon;
  std::vector<ReplicationResult> reps;
};

inline BoundInputs bound_inputs(const ExperimentResult& r) {
  BoundInputs in;
  in.alpha = r.steps.alpha;
  in.beta = r.steps.beta;
  in.epsilon = r.config.policy.epsilon;
  in.n = r.config.scenario == "waypoint" ? r.config.wp.rows * r.config.wp.cols : r.config.ls.n;
  in.m_f = r.summary.m_f;
  in.L = r.summary.L;
  in.G = r.summary.G;
  in.delta_x = r.summary.delta_x;
  in.gamma = r.summary.gamma;
  in.radius_x = r.radius_x;
  return in;
}

// Runs every replication (in parallel when threads allow) and aggregates in index order.
inline ExperimentResult run_experiment(const ExperimentConfig& c) {
  ExperimentResult out;
  out.config = c;
  const NetworkModel net = build_network(c);
  validate(net);
  out.steps = resolve_steps(c, net);
  require(out.steps.beta < 1.0 / net.n, "step_sizes.beta must be below 1/n");
  out.lambda2 = lambda2(expected_laplacian(net));

  std::vector<ReplicationResult> reps(static_cast<std::size_t>(c.reps));
  std::vector<std::exception_ptr> errors(reps.size());
  std::atomic<int> next{0};
  auto worker = [&] {
    for (int r = next++; r < c.reps; r = next++) {
      try {
        reps[static_cast<std::size_t>(r)] = run_replication(c, net, out.steps, r);
      } catch (...) {
        errors[static_cast<std::size_t>(r)] = std::current_exception();
      }
    }
  };
  const int hw = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  const int threads = std::min(c.reps, c.threads > 0 ? c.threads : hw);
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  const auto K = static_cast<std::size_t>(c.steps);
  out.mean_error.assign(K, 0.0);
  out.mean_pdf.assign(K, 0.0);
  out.mean_snapshot.assign(K, 0.0);
  out.mean_everytime.assign(K, 0.0);
  Summary& s = out.summary;
  s.m_f = std::numeric_limits<double>::infinity();
  double pdf_total = 0.0, snap_total = 0.0, every_total = 0.0;
  for (const ReplicationResult& r : reps) {
    for (std::size_t k = 0; k < K; ++k) {
      out.mean_error[k] += r.error[k] / c.reps;
      out.mean_pdf[k] += static_cast<double>(r.pdf_msgs[k]) / c.reps;
      out.mean_snapshot[k] += static_cast<double>(r.snapshot_msgs[k]) / c.reps;
      out.mean_everytime[k] += static_cast<double>(r.everytime_msgs[k]) / c.reps;
      pdf_total += static_cast<double>(r.pdf_msgs[k]);
      snap_total += static_cast<double>(r.snapshot_msgs[k]);
      every_total += static_cast<double>(r.everytime_msgs[k]);
    }
    s.m_f = std::min(s.m_f, r.constants.m_f);
    s.L = std::max(s.L, r.constants.L);
    s.G = std::max(s.G, r.G);
    s.delta_x = std::max(s.delta_x, r.delta_x);
    out.radius_x = std::max(out.radius_x, r.radius_x);
    merge(out.epsilon, r.epsilon);
  }
  s.gamma = 1.0 - out.steps.beta * out.lambda2;
  s.rho = rho_value(out.steps.alpha, s.m_f, s.L);
  s.trailing_error = trailing_error(out.mean_error, c.trailing_fraction);
  s.pdf_msg_ratio = every_total > 0.0 ? pdf_total / every_total : 0.0;
  s.snapshot_msg_ratio = every_total > 0.0 ? snap_total / every_total : 0.0;
  const BoundInputs in = bound_inputs(out);
  if (bound_applicable(in)) s.bound = theorem1_bound(in);
  if (c.raw_traces || c.message_log) out.reps = std::move(reps);
  return out;
}

inline std::string format_g17(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline constexpr const char* kTraceHeader = "k,mean_sq_error,bound,pdf_msgs,snapshot_msgs,everytime_msgs";

inline std::string trace_csv(const std::vector<double>& err, const std::vector<double>& pdf,
                             const std::vector<double>& snap, const std::vector<double>& every,
                             std::optional<double> bound) {
  std::ostringstream os;
  os << kTraceHeader << '\n';
  const std::string b = bound ? format_g17(*bound) : "nan";
  for (std::size_t k = 0; k < err.size(); ++k)
    os << k << ',' << format_g17(err[k]) << ',' << b << ',' << format_g17(pdf[k]) << ',' << format_g17(snap[k]) << ','
       << format_g17(every[k]) << '\n';
  return os.str();
}

inline Json summary_json(const Summary& s) {
  Json j;
  j["m_f"] = s.m_f;
  j["L"] = s.L;
  j["G"] = s.G;
  j["delta_x"] = s.delta_x;
  j["gamma"] = s.gamma;
  j["rho"] = s.rho;
  j["bound"] = s.bound ? Json(*s.bound) : Json(nullptr);
  j["trailing_error"] = s.trailing_error;
  j["pdf_msg_ratio"] = s.pdf_msg_ratio;
  j["snapshot_msg_ratio"] = s.snapshot_msg_ratio;
  return j;
}

inline Json epsilon_json(const EpsilonReport& e, double epsilon) {
  Json j;
  j["epsilon"] = epsilon;
  j["checked"] = e.checked;
  j["violations"] = e.violations;
  j["max_ratio"] = e.max_ratio;
  j["worst_tick"] = e.worst_tick;
  j["worst_node"] = e.worst_node;
  return j;
}

// Binary message log, little-endian 64-bit fields: count, then per message
// tick, from, to, kind, len, payload[len] as IEEE doubles.
inline std::vector<std::uint8_t> encode_messages(const std::vector<Message>& msgs) {
  std::vector<std::uint8_t> out;
  detail::put_u64(out, msgs.size());
  for (const Message& m : msgs) {
    detail::put_u64(out, static_cast<std::uint64_t>(static_cast<std::int64_t>(m.tick)));
    detail::put_u64(out, static_cast<std::uint64_t>(m.from));
    detail::put_u64(out, static_cast<std::uint64_t>(m.to));
    detail::put_u64(out, static_cast<std::uint64_t>(m.kind));
    detail::put_u64(out, m.payload.size());
    for (double x : m.payload) detail::put_f64(out, x);
  }
  return out;
}

inline std::vector<Message> decode_messages(std::span<const std::uint8_t> in) {
  std::size_t pos = 0;
  const std::uint64_t count = detail::get_u64(in, pos);
  std::vector<Message> msgs;
  for (std::uint64_t i = 0; i < count; ++i) {
    Message m;
    m.tick = static_cast<long>(static_cast<std::int64_t>(detail::get_u64(in, pos)));
    m.from = static_cast<int>(detail::get_u64(in, pos));
    m.to = static_cast<int>(detail::get_u64(in, pos));
    const std::uint64_t kind = detail::get_u64(in, pos);
    require(kind <= static_cast<std::uint64_t>(MessageKind::Both), "message decode: unknown kind");
    m.kind = static_cast<MessageKind>(kind);
    const std::uint64_t len = detail::get_u64(in, pos);
    require(len <= (in.size() - pos) / 8, "message decode: truncated payload");
    for (std::uint64_t p = 0; p < len; ++p) m.payload.push_back(detail::get_f64(in, pos));
    msgs.push_back(std::move(m));
  }
  require(pos == in.size(), "message decode: trailing bytes");
  return msgs;
}

inline void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  require(os.good(), "cannot write " + path.string());
  os << text;
}

inline void write_outputs(const ExperimentResult& r, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const Summary& s = r.summary;
  write_file(dir / "trace.csv", trace_csv(r.mean_error, r.mean_pdf, r.mean_snapshot, r.mean_everytime, s.bound));
  write_file(dir / "summary.json", summary_json(s).dump(2) + "\n");
  if (r.config.log_gaps) write_file(dir / "epsilon_check.json", epsilon_json(r.epsilon, r.config.policy.epsilon).dump(2) + "\n");
  for (std::size_t i = 0; i < r.reps.size(); ++i) {
    const ReplicationResult& rep = r.reps[i];
    if (r.config.raw_traces) {
      auto to_d = [](const std::vector<long>& v) { return std::vector<double>(v.begin(), v.end()); };
      write_file(dir / ("trace_rep" + std::to_string(i) + ".csv"),
                 trace_csv(rep.error, to_d(rep.pdf_msgs), to_d(rep.snapshot_msgs), to_d(rep.everytime_msgs), s.bound));
    }
    if (r.config.message_log) {
      const auto bytes = encode_messages(rep.messages);
      write_file(dir / ("messages_rep" + std::to_string(i) + ".bin"), std::string(bytes.begin(), bytes.end()));
    }
  }
}

struct ValidationCheck {
  std::string name;
  bool pass = false;
  std::string detail;
};

struct ValidationReport {
  StepSizes steps;
  Constants constants;
  double lambda2 = 0.0;
  double gamma = 0.0;
  double rho = 0.0;
  std::vector<ValidationCheck> checks;
  bool ok() const {
    return std::all_of(checks.begin(), checks.end(), [](const ValidationCheck& c) { return c.pass; });
  }
};

// Checks the step-size and network conditions of the error-floor inequality against the
// constants measured on the first replication's initial state; never simulates.
inline ValidationReport validate_experiment(const ExperimentConfig& c) {
  ValidationReport rep;
  const NetworkModel net = build_network(c);
  const bool connected = is_connected(net.n, net.edges);
  rep.checks.push_back({"expected graph connected", connected, std::to_string(net.edges.size()) + " edges"});
  if (!connected) return rep;
  rep.steps = resolve_steps(c, net);
  const int n = net.n;
  rep.lambda2 = lambda2(expected_laplacian(net));
  rep.gamma = 1.0 - rep.steps.beta * rep.lambda2;
  Rng rng = make_stream(c.seed, 0);
  const auto sc = make_scenario(c, net, rep.steps, rng);
  Rng probe = make_stream(c.seed, kTopologyStream - 1);
  rep.constants = measure_constants(*sc, c.validate_probes, probe);
  rep.rho = rho_value(rep.steps.alpha, rep.constants.m_f, rep.constants.L);
  const double alpha_max = rep.constants.m_f / (rep.constants.L * rep.constants.L);

  rep.checks.push_back({"beta < 1/n", rep.steps.beta > 0.0 && rep.steps.beta < 1.0 / n,
                        "beta=" + format_g17(rep.steps.beta) + " 1/n=" + format_g17(1.0 / n)});
  rep.checks.push_back({"alpha < m_f/L^2", rep.steps.alpha > 0.0 && rep.steps.alpha < alpha_max,
                        "alpha=" + format_g17(rep.steps.alpha) + " m_f/L^2=" + format_g17(alpha_max)});
  rep.checks.push_back({"0 < gamma < 1", rep.gamma > 0.0 && rep.gamma < 1.0, "gamma=" + format_g17(rep.gamma)});
  rep.checks.push_back({"rho < 1", rep.rho < 1.0, "rho=" + format_g17(rep.rho)});

  const int T = c.union_window;
  std::vector<AdjacencySample> history;
  Rng arng = make_stream(c.seed, kTopologyStream - 2);
  const int draws = 10 * (T + 1);
  for (int k = 0; k < draws; ++k) history.push_back(sample_adjacency(net, arng));
  const bool union_ok = check_union_connectivity(net, history, T);
  rep.checks.push_back({"union of active edges connected over window", union_ok,
                        "T=" + std::to_string(T) + " over " + std::to_string(draws) + " sampled ticks"});
  return rep;
}

inline std::string format_report(const ValidationReport& r) {
  std::ostringstream os;
  os << "alpha=" << format_g17(r.steps.alpha) << " beta=" << format_g17(r.steps.beta)
     << " m_f=" << format_g17(r.constants.m_f) << " L=" << format_g17(r.constants.L)
     << " lambda2=" << format_g17(r.lambda2) << " gamma=" << format_g17(r.gamma) << " rho=" << format_g17(r.rho)
     << '\n';
  for (const auto& c : r.checks) os << (c.pass ? "PASS " : "FAIL ") << c.name << " (" << c.detail << ")\n";
  return os.str();
}

}  // namespace dsopt
