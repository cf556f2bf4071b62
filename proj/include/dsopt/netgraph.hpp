#pragma once

#include "dsopt/core.hpp"
#include "dsopt/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

namespace dsopt {

struct Edge {
  int a = 0;
  int b = 0;
};

// Fixed edge set E with per-edge Bernoulli activation probabilities.
struct NetworkModel {
  int n = 0;
  std::vector<Edge> edges;
  std::vector<double> probs;

  int degree(int i) const {
    int d = 0;
    for (const Edge& e : edges) d += (e.a == i || e.b == i);
    return d;
  }

  std::vector<int> neighbors(int i) const {
    std::vector<int> out;
    for (const Edge& e : edges) {
      if (e.a == i) out.push_back(e.b);
      if (e.b == i) out.push_back(e.a);
    }
    std::sort(out.begin(), out.end());
    return out;
  }
};

struct AdjacencySample {
  Mat matrix;
  std::vector<std::size_t> active;  // indices into NetworkModel::edges
};

struct LaplacianMatrix {
  Mat matrix;
};

inline bool is_connected(int n, const std::vector<Edge>& edges) {
  if (n <= 1) return true;
  std::vector<int> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](int x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  int components = n;
  for (const Edge& e : edges) {
    const int ra = find(e.a), rb = find(e.b);
    if (ra != rb) {
      parent[ra] = rb;
      --components;
    }
  }
  return components == 1;
}

inline void validate(const NetworkModel& model) {
  require(model.n >= 1, "network: node count must be positive");
  require(model.probs.size() == model.edges.size(), "network: one probability per edge");
  for (std::size_t e = 0; e < model.edges.size(); ++e) {
    const Edge& ed = model.edges[e];
    require(ed.a != ed.b, "network: self-loop on node " + std::to_string(ed.a));
    require(ed.a >= 0 && ed.b >= 0 && ed.a < model.n && ed.b < model.n, "network: edge endpoint out of range");
    require(model.probs[e] > 0.0 && model.probs[e] <= 1.0, "network: edge probability outside (0,1]");
    for (std::size_t f = 0; f < e; ++f) {
      const Edge& o = model.edges[f];
      require(!((o.a == ed.a && o.b == ed.b) || (o.a == ed.b && o.b == ed.a)), "network: duplicate edge");
    }
  }
  require(is_connected(model.n, model.edges), "network: edge set is not connected");
}

inline AdjacencySample sample_adjacency(const NetworkModel& model, Rng& rng) {
  AdjacencySample out;
  out.matrix = Mat::Zero(model.n, model.n);
  for (std::size_t e = 0; e < model.edges.size(); ++e) {
    if (uniform01(rng) < model.probs[e]) {
      const Edge& ed = model.edges[e];
      out.matrix(ed.a, ed.b) = 1.0;
      out.matrix(ed.b, ed.a) = 1.0;
      out.active.push_back(e);
    }
  }
  return out;
}

inline LaplacianMatrix laplacian_of(const Mat& weights) {
  const Eigen::Index n = weights.rows();
  Mat w = -weights;
  for (Eigen::Index i = 0; i < n; ++i) {
    w(i, i) = 0.0;
    double row = 0.0;
    for (Eigen::Index j = 0; j < n; ++j)
      if (j != i) row += weights(i, j);
    w(i, i) = row;
  }
  return {w};
}

inline LaplacianMatrix laplacian(const AdjacencySample& adj) { return laplacian_of(adj.matrix); }

inline LaplacianMatrix expected_laplacian(const NetworkModel& model) {
  validate(model);
  Mat weights = Mat::Zero(model.n, model.n);
  for (std::size_t e = 0; e < model.edges.size(); ++e) {
    const Edge& ed = model.edges[e];
    weights(ed.a, ed.b) = model.probs[e];
    weights(ed.b, ed.a) = model.probs[e];
  }
  return laplacian_of(weights);
}

inline double lambda2(const LaplacianMatrix& w) {
  require(w.matrix.rows() >= 2, "lambda2: need at least two nodes");
  return symmetric_eigenvalues(w.matrix)(1);
}

inline double lambda_max(const LaplacianMatrix& w) {
  const Vec ev = symmetric_eigenvalues(w.matrix);
  return ev(ev.size() - 1);
}

// True iff every window of T+1 consecutive samples activates all of E and E is connected.
inline bool check_union_connectivity(const NetworkModel& model, const std::vector<AdjacencySample>& history, int T) {
  require(T >= 0, "union connectivity: window must be nonnegative");
  require(history.size() >= static_cast<std::size_t>(T) + 1, "union connectivity: history shorter than window");
  if (!is_connected(model.n, model.edges)) return false;
  const std::size_t m = model.edges.size();
  std::vector<int> count(m, 0);
  auto add = [&](const AdjacencySample& s, int delta) {
    for (std::size_t e : s.active) count[e] += delta;
  };
  const std::size_t w = static_cast<std::size_t>(T) + 1;
  for (std::size_t k = 0; k < history.size(); ++k) {
    add(history[k], +1);
    if (k >= w) add(history[k - w], -1);
    if (k + 1 >= w && std::any_of(count.begin(), count.end(), [](int c) { return c == 0; })) return false;
  }
  return true;
}

inline NetworkModel grid_lattice(int rows, int cols, double prob) {
  NetworkModel m;
  m.n = rows * cols;
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      const int i = r * cols + c;
      if (c + 1 < cols) m.edges.push_back({i, i + 1});
      if (r + 1 < rows) m.edges.push_back({i, i + cols});
    }
  }
  m.probs.assign(m.edges.size(), prob);
  return m;
}

// Random geometric graph in the unit square, redrawn until connected.
inline NetworkModel random_geometric_network(int n, double radius, double prob, Rng& rng, int max_attempts = 10000) {
  require(n >= 1 && radius > 0.0, "random geometric network: invalid size or radius");
  for (int attempt = 0; attempt < max_attempts; ++attempt) {
    std::vector<std::pair<double, double>> pts(n);
    for (auto& p : pts) p = {uniform01(rng), uniform01(rng)};
    NetworkModel m;
    m.n = n;
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j)
        if (std::hypot(pts[i].first - pts[j].first, pts[i].second - pts[j].second) <= radius) m.edges.push_back({i, j});
    if (is_connected(n, m.edges)) {
      m.probs.assign(m.edges.size(), prob);
      return m;
    }
  }
  throw ConfigError("random geometric network: no connected draw; increase the radius");
}

}  // namespace dsopt
