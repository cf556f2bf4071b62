#pragma once

#include "dsopt/analysis.hpp"
#include "dsopt/core.hpp"
#include "dsopt/distributions.hpp"
#include "dsopt/netgraph.hpp"
#include "dsopt/objective.hpp"
#include "dsopt/scenario.hpp"
#include "dsopt/trigger.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <unordered_map>
#include <utility>
#include <variant>
#include <vector>

namespace dsopt {

struct KnownPdf {
  PdfHandle pdf;
  long tick = 0;
};

struct NodeState {
  Vec y;
  Vec v;
  PdfHandle own_pdf;
  std::map<int, KnownPdf> known_pdfs;                // every source in N_i and i
  std::map<int, GradientSnapshot> known_snapshots;   // neighbor j -> j's gradient as a function of this node's noise
  std::map<int, GradientSnapshot> sent_snapshots;    // neighbor j -> snapshot this node last sent to j
  std::map<int, PdfHandle> last_sent_pdf;            // neighbor j -> pdf this node last sent to j
};

enum class MessageKind { Pdf, Snapshot, Both };

inline const char* to_string(MessageKind k) {
  switch (k) {
    case MessageKind::Pdf:
      return "PDF";
    case MessageKind::Snapshot:
      return "SNAPSHOT";
    case MessageKind::Both:
      return "BOTH";
  }
  return "?";
}

struct Message {
  long tick = 0;
  int from = 0;
  int to = 0;
  MessageKind kind = MessageKind::Pdf;
  std::vector<double> payload;
};

inline std::vector<double> pdf_payload(const Pdf& pdf) {
  return std::visit(
      [](const auto& p) -> std::vector<double> {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, TruncatedRayleigh>) {
          return {p.scale, p.lo, p.hi};
        } else if constexpr (std::is_same_v<T, Weibull>) {
          return {p.scale, p.shape};
        } else {
          return p.samples;
        }
      },
      pdf);
}

inline std::vector<double> snapshot_payload(const GradientSnapshot& s) {
  std::vector<double> out(s.point.data(), s.point.data() + s.point.size());
  out.insert(out.end(), s.c1.data(), s.c1.data() + s.c1.size());
  out.insert(out.end(), s.c2.data(), s.c2.data() + s.c2.size());
  return out;
}

struct SolverOptions {
  std::size_t mc_samples = 5000;
  bool check_invariants = true;
  bool log_gaps = false;
  bool log_messages = false;
  bool track_constants = false;
  int constant_probes = 1;
};

struct TickReport {
  long k = 0;
  double sq_error = 0.0;
  std::vector<double> node_errors;
  Vec x_star;
  long pdf_msgs = 0;
  long snapshot_msgs = 0;
  long everytime_msgs = 0;
  double G = 0.0;
  Constants constants{0.0, 0.0};
};

// v_i = y_i - beta sum_j [W]_ij y_j, applied per block among the nodes holding that block.
// With check set, every v_i block is verified to be a convex combination lying in the
// bounding box of the blocks it mixes.
inline void consensus_mix(std::vector<NodeState>& nodes, const LaplacianMatrix& w, double beta, const Scenario& sc,
                          bool check = true) {
  const int n = static_cast<int>(nodes.size());
  const int bd = sc.block_dim();
  std::vector<std::vector<char>> holds(static_cast<std::size_t>(n), std::vector<char>(sc.blocks(), 0));
  for (int i = 0; i < n; ++i)
    for (int b : sc.held_blocks(i)) holds[static_cast<std::size_t>(i)][static_cast<std::size_t>(b)] = 1;
  for (int i = 0; i < n; ++i) {
    NodeState& ni = nodes[static_cast<std::size_t>(i)];
    ni.v = ni.y;
    for (int b : sc.held_blocks(i)) {
      double self_weight = 1.0, weight_sum = 0.0;
      Vec lo = ni.y.segment(b * bd, bd), hi = lo;
      Vec acc = Vec::Zero(bd);
      for (int j = 0; j < n; ++j) {
        if (j == i || w.matrix(i, j) == 0.0 || !holds[static_cast<std::size_t>(j)][static_cast<std::size_t>(b)]) continue;
        const double wij = -beta * w.matrix(i, j);
        const auto yj = nodes[static_cast<std::size_t>(j)].y.segment(b * bd, bd);
        acc += wij * (yj - ni.y.segment(b * bd, bd));
        self_weight -= wij;
        weight_sum += wij;
        if (check) {
          ensure(wij >= 0.0, "consensus mix: negative neighbor weight at node " + std::to_string(i));
          lo = lo.cwiseMin(yj);
          hi = hi.cwiseMax(yj);
        }
      }
      ni.v.segment(b * bd, bd) += acc;
      if (check) {
        ensure(self_weight >= 0.0, "consensus mix: negative self weight at node " + std::to_string(i));
        ensure(std::abs(self_weight + weight_sum - 1.0) <= 1e-12, "consensus mix: weights do not sum to one");
        const auto vb = ni.v.segment(b * bd, bd);
        const double tol = 1e-12 * std::max(1.0, std::max(lo.cwiseAbs().maxCoeff(), hi.cwiseAbs().maxCoeff()));
        ensure((vb.array() >= lo.array() - tol).all() && (vb.array() <= hi.array() + tol).all(),
               "consensus mix: v outside the hull of mixed iterates at node " + std::to_string(i));
      }
    }
  }
}

// Monte-Carlo sample banks keyed by pdf version, drawn once per tick and shared by every
// node that holds that version.
class SampleBanks {
 public:
  explicit SampleBanks(std::size_t n) : n_(n) {}

  const std::vector<double>& get(const PdfRecord& rec, Rng& rng) {
    auto it = banks_.find(rec.version);
    if (it != banks_.end()) return it->second;
    auto& bank = banks_[rec.version];
    sample_into(rec.pdf, rng, bank, n_);
    return bank;
  }

  void clear() { banks_.clear(); }

 private:
  std::size_t n_;
  std::unordered_map<std::uint64_t, std::vector<double>> banks_;
};

inline const PdfRecord& knowledge_of(const NodeState& s, int source) {
  const auto it = s.known_pdfs.find(source);
  require(it != s.known_pdfs.end() && it->second.pdf, "missing pdf for source " + std::to_string(source));
  return *it->second.pdf;
}

inline std::vector<SourceMoments> known_moments(const NodeState& s, const std::vector<int>& sources) {
  std::vector<SourceMoments> m;
  for (int src : sources) {
    const PdfRecord& r = knowledge_of(s, src);
    m.push_back({r.mean, r.second_moment});
  }
  return m;
}

// Monte-Carlo expected gradient at v under the node's possibly stale pdf knowledge.
inline Vec epsilon_gradient(const NodeState& s, int node, const Scenario& sc, SampleBanks& banks, Rng& rng) {
  std::vector<const std::vector<double>*> refs;
  for (int src : sc.sources(node)) refs.push_back(&banks.get(knowledge_of(s, src), rng));
  return sc.mc_gradient(node, s.v, refs);
}

inline Vec epsilon_gradient(const NodeState& s, int node, const Scenario& sc, std::size_t n_samples, Rng& rng) {
  SampleBanks banks(n_samples);
  return epsilon_gradient(s, node, sc, banks, rng);
}

// y <- P_X[v - alpha g] on the node's held blocks.
inline Vec node_update(const NodeState& s, const Vec& g, double alpha, const BoxSet& box,
                       const std::vector<int>& blocks, int block_dim) {
  require(g.allFinite(), "node update: gradient is not finite");
  Vec y = s.y;
  const Vec step = project(s.v - alpha * g, box);
  for (int b : blocks) y.segment(b * block_dim, block_dim) = step.segment(b * block_dim, block_dim);
  return y;
}

// One replication of the algorithm: owns the scenario, node states and RNG stream.
class World {
 public:
  World(std::unique_ptr<Scenario> scenario, StepSizes steps, PolicyParams policy, SolverOptions options, Rng rng)
      : sc_(std::move(scenario)), steps_(steps), policy_(policy), opt_(options), rng_(std::move(rng)),
        banks_(options.mc_samples) {
    validate(policy_);
    require(steps_.alpha > 0.0, "step sizes: alpha must be positive");
    require(steps_.beta > 0.0 && steps_.beta < 1.0 / sc_->nodes(), "step sizes: beta must lie in (0, 1/n)");
    require(opt_.mc_samples >= 1, "solver: need at least one Monte-Carlo sample");
    require(opt_.constant_probes >= 1, "solver: need at least one curvature probe");
    probe_rng_.seed(rng_());
    if (opt_.check_invariants) verify_gradients(*sc_, 2, probe_rng_);
    const int n = sc_->nodes();
    const NetworkModel& net = sc_->network();
    for (int i = 0; i < n; ++i) neighbors_.push_back(net.neighbors(i));
    for (const auto& nb : neighbors_)
      degree_.push_back(policy_.degree == DegreeMode::NodeCount ? n : static_cast<int>(nb.size()));
    nodes_.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      NodeState& s = nodes_[static_cast<std::size_t>(i)];
      s.y = sc_->initial_point(i, rng_);
      s.v = s.y;
      s.own_pdf = sc_->pdf(i);
    }
    initial_broadcast();
  }

  const Scenario& scenario() const { return *sc_; }
  const std::vector<NodeState>& nodes() const { return nodes_; }
  const std::vector<GapRecord>& gap_log() const { return gaps_; }
  const std::vector<Message>& messages() const { return messages_; }
  const StepSizes& steps() const { return steps_; }
  const PolicyParams& policy() const { return policy_; }
  double radius_x() const { return radius(sc_->box(), sc_->previous_box()); }

  std::vector<Vec> iterates() const {
    std::vector<Vec> ys;
    for (const auto& s : nodes_) ys.push_back(s.y);
    return ys;
  }

  TickReport tick() {
    const Scenario& sc = *sc_;
    const int n = sc.nodes();
    TickReport rep;
    rep.k = sc.tick();
    rep.x_star = sc.true_optimizer();
    rep.sq_error = tracking_error(iterates(), rep.x_star, sc, &rep.node_errors);
    if (opt_.track_constants) {
      rep.G = estimate_G(sc, rep.x_star);
      if (!constants_ready_ || sc.hessian_depends_on_pdfs()) {
        constants_ = measure_constants(sc, opt_.constant_probes, probe_rng_);
        constants_ready_ = true;
      }
      rep.constants = constants_;
    }

    const AdjacencySample adj = sample_adjacency(sc.network(), rng_);
    consensus_mix(nodes_, laplacian(adj), steps_.beta, sc, opt_.check_invariants);

    for (int i = 0; i < n; ++i) {
      NodeState& s = nodes_[static_cast<std::size_t>(i)];
      s.own_pdf = sc.pdf(i);
      s.known_pdfs[i] = {s.own_pdf, rep.k};
    }

    polys_.clear();
    for (int i = 0; i < n; ++i) polys_.push_back(sc.gradient_polynomial(i, nodes_[static_cast<std::size_t>(i)].v));

    exchange(adj, rep);
    if (opt_.log_gaps) log_gaps(rep.k);

    banks_.clear();
    std::vector<Vec> grads;
    for (int i = 0; i < n; ++i) grads.push_back(epsilon_gradient(nodes_[static_cast<std::size_t>(i)], i, sc, banks_, rng_));
    for (int i = 0; i < n; ++i) {
      NodeState& s = nodes_[static_cast<std::size_t>(i)];
      s.y = node_update(s, grads[static_cast<std::size_t>(i)], steps_.alpha, sc.box(), sc.held_blocks(i), sc.block_dim());
      if (opt_.check_invariants) {
        ensure(s.y.allFinite(), "node update: non-finite iterate at node " + std::to_string(i));
        for (int b : sc.held_blocks(i)) {
          const auto seg = s.y.segment(b * sc.block_dim(), sc.block_dim());
          const auto lo = sc.box().lower.segment(b * sc.block_dim(), sc.block_dim());
          const auto hi = sc.box().upper.segment(b * sc.block_dim(), sc.block_dim());
          ensure((seg.array() >= lo.array()).all() && (seg.array() <= hi.array()).all(),
                 "node update: iterate left the feasible set at node " + std::to_string(i));
        }
      }
    }
    sc_->advance(rng_);
    return rep;
  }

 private:
  void initial_broadcast() {
    const Scenario& sc = *sc_;
    const int n = sc.nodes();
    for (int i = 0; i < n; ++i) {
      NodeState& s = nodes_[static_cast<std::size_t>(i)];
      for (int src : sc.sources(i)) s.known_pdfs[src] = {sc.pdf(src), 0};
      for (int j : neighbors_[static_cast<std::size_t>(i)]) s.last_sent_pdf[j] = sc.pdf(i);
    }
    for (int i = 0; i < n; ++i) {
      NodeState& s = nodes_[static_cast<std::size_t>(i)];
      const GradientPolynomial poly = sc.gradient_polynomial(i, s.y);
      const auto moments = known_moments(s, poly.sources);
      for (int j : neighbors_[static_cast<std::size_t>(i)]) {
        GradientSnapshot snap = make_snapshot(poly, j, moments, i, 0, s.y);
        nodes_[static_cast<std::size_t>(j)].known_snapshots[i] = snap;
        s.sent_snapshots[j] = std::move(snap);
      }
    }
  }

  // Directed (sender, receiver) pairs that may exchange this tick.
  std::vector<std::pair<int, int>> eligible_pairs(const AdjacencySample& adj) const {
    std::vector<std::pair<int, int>> pairs;
    const NetworkModel& net = sc_->network();
    if (policy_.exchange == ExchangeMode::Instant) {
      for (const Edge& e : net.edges) {
        pairs.emplace_back(e.a, e.b);
        pairs.emplace_back(e.b, e.a);
      }
    } else {
      for (std::size_t idx : adj.active) {
        pairs.emplace_back(net.edges[idx].a, net.edges[idx].b);
        pairs.emplace_back(net.edges[idx].b, net.edges[idx].a);
      }
    }
    std::sort(pairs.begin(), pairs.end());
    return pairs;
  }

  void record(long k, int from, int to, MessageKind kind, std::vector<double> payload) {
    if (!opt_.log_messages) return;
    for (auto it = messages_.rbegin(); it != messages_.rend() && it->tick == k; ++it) {
      if (it->from == from && it->to == to && it->kind != kind) {
        it->kind = MessageKind::Both;
        it->payload.insert(it->payload.end(), payload.begin(), payload.end());
        return;
      }
    }
    messages_.push_back({k, from, to, kind, std::move(payload)});
  }

  void exchange(const AdjacencySample& adj, TickReport& rep) {
    const Scenario& sc = *sc_;
    const auto pairs = eligible_pairs(adj);
    rep.everytime_msgs = static_cast<long>(pairs.size());
    if (policy_.mode == PolicyMode::Never) return;
    const double rx = radius_x();

    if (policy_.mode == PolicyMode::Full) {
      std::vector<std::vector<SourceMoments>> moments;
      for (int i = 0; i < sc.nodes(); ++i)
        moments.push_back(known_moments(nodes_[static_cast<std::size_t>(i)], sc.sources(i)));
      for (const auto& [i, j] : pairs) {
        NodeState& si = nodes_[static_cast<std::size_t>(i)];
        GradientSnapshot fresh =
            make_snapshot(polys_[static_cast<std::size_t>(i)], j, moments[static_cast<std::size_t>(i)], i, rep.k, si.v);
        const double u_r = utility_receiver(fresh, si.sent_snapshots.at(j), knowledge_of(si, j).pdf);
        const PolicyDecision d = decide(policy_, u_r, 0.0, 0.0, rx, degree_[static_cast<std::size_t>(i)],
                                        degree_[static_cast<std::size_t>(j)]);
        if (d.send_snapshot) {
          ++rep.snapshot_msgs;
          record(rep.k, i, j, MessageKind::Snapshot, snapshot_payload(fresh));
          nodes_[static_cast<std::size_t>(j)].known_snapshots[i] = fresh;
          si.sent_snapshots[j] = std::move(fresh);
        }
      }
    }

    for (const auto& [j, i] : pairs) {
      NodeState& sender = nodes_[static_cast<std::size_t>(j)];
      const PdfRecord& current = *sender.own_pdf;
      const PdfRecord& sent = *sender.last_sent_pdf.at(i);
      const int deg_j = degree_[static_cast<std::size_t>(j)], deg_i = degree_[static_cast<std::size_t>(i)];
      bool send = false;
      switch (policy_.mode) {
        case PolicyMode::EveryTime:
          send = decide(policy_, 0.0, 0.0, 0.0, rx, deg_j, deg_i).send_pdf;
          break;
        case PolicyMode::LinearSimplified:
          send = decide_linear(policy_, sent.mean, current.mean, sc.noise_coefficient_norm(), rx, deg_i,
                               sc.affine_in_noise())
                     .send_pdf;
          break;
        case PolicyMode::Full: {
          if (current.version == sent.version) break;
          const double u_s1 = utility_sender_grad(sender.known_snapshots.at(i), current, sent);
          double u_s2 = 0.0;
          if (!(u_s1 > pdf_threshold(policy_, rx, deg_i))) u_s2 = utility_sender_pdf(current, sent);
          send = decide(policy_, 0.0, u_s1, u_s2, rx, deg_j, deg_i).send_pdf;
          break;
        }
        case PolicyMode::Never:
          break;
      }
      if (send) {
        ++rep.pdf_msgs;
        record(rep.k, j, i, MessageKind::Pdf, pdf_payload(current.pdf));
        nodes_[static_cast<std::size_t>(i)].known_pdfs[j] = {sender.own_pdf, rep.k};
        sender.last_sent_pdf[i] = sender.own_pdf;
      }
    }
  }

  void log_gaps(long k) {
    const Scenario& sc = *sc_;
    const int bd = sc.block_dim();
    for (int i = 0; i < sc.nodes(); ++i) {
      const GradientPolynomial& poly = polys_[static_cast<std::size_t>(i)];
      const Vec exact = moment_expected_gradient(poly, sc.current_moments(i));
      const Vec stale = moment_expected_gradient(poly, known_moments(nodes_[static_cast<std::size_t>(i)], poly.sources));
      GapRecord g{k, i, Vec(), Vec()};
      const auto blocks = sc.gradient_blocks(i);
      g.exact.resize(static_cast<Eigen::Index>(blocks.size()) * bd);
      g.stale.resize(g.exact.size());
      for (std::size_t b = 0; b < blocks.size(); ++b) {
        g.exact.segment(static_cast<Eigen::Index>(b) * bd, bd) = exact.segment(blocks[b] * bd, bd);
        g.stale.segment(static_cast<Eigen::Index>(b) * bd, bd) = stale.segment(blocks[b] * bd, bd);
      }
      gaps_.push_back(std::move(g));
    }
  }

  std::unique_ptr<Scenario> sc_;
  StepSizes steps_;
  PolicyParams policy_;
  SolverOptions opt_;
  Rng rng_;
  Rng probe_rng_;
  SampleBanks banks_;
  Constants constants_{0.0, 0.0};
  bool constants_ready_ = false;
  std::vector<NodeState> nodes_;
  std::vector<std::vector<int>> neighbors_;
  std::vector<int> degree_;
  std::vector<GradientPolynomial> polys_;
  std::vector<GapRecord> gaps_;
  std::vector<Message> messages_;
};

}  // namespace dsopt
