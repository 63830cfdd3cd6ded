#pragma once

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "dhpr/eigensolve.hpp"
#include "dhpr/rng.hpp"

namespace dhpr {

using Edge = std::pair<int, int>;  // (i, j) with i < j, 0-based

enum class TopologyKind { kLine, kRandom, kComplete };

inline std::string to_string(TopologyKind k) {
  switch (k) {
    case TopologyKind::kLine: return "line";
    case TopologyKind::kRandom: return "random";
    case TopologyKind::kComplete: return "complete";
  }
  return "?";
}

inline TopologyKind topology_kind_from_string(const std::string& s) {
  if (s == "line") return TopologyKind::kLine;
  if (s == "random") return TopologyKind::kRandom;
  if (s == "complete") return TopologyKind::kComplete;
  throw std::invalid_argument("unknown topology kind: " + s);
}

/// Undirected communication topology with its Metropolis mixing matrix.
/// The weight matrix is symmetric and doubly stochastic; entry (i,j) is
/// positive exactly when i==j or {i,j} is an edge.
struct WeightedGraph {
  int n_agents = 0;
  std::vector<Edge> edges;
  Eigen::MatrixXd weights;
  std::vector<int> degree;

  TopologyKind kind = TopologyKind::kLine;  // provenance, kept for files
  std::uint64_t seed = 0;

  bool is_edge(int i, int j) const { return weights(i, j) > 0.0 && i != j; }

  const std::vector<int>& neighbors(int i) const { return adjacency_[static_cast<std::size_t>(i)]; }

  void rebuild_adjacency() {
    adjacency_.assign(static_cast<std::size_t>(n_agents), {});
    for (const Edge& e : edges) {
      adjacency_[static_cast<std::size_t>(e.first)].push_back(e.second);
      adjacency_[static_cast<std::size_t>(e.second)].push_back(e.first);
    }
    for (auto& nb : adjacency_) std::sort(nb.begin(), nb.end());
  }

 private:
  std::vector<std::vector<int>> adjacency_;
};

inline bool edges_connected(int n, const std::vector<Edge>& edges) {
  if (n <= 0) return false;
  std::vector<std::vector<int>> adj(static_cast<std::size_t>(n));
  for (const Edge& e : edges) {
    adj[static_cast<std::size_t>(e.first)].push_back(e.second);
    adj[static_cast<std::size_t>(e.second)].push_back(e.first);
  }
  std::vector<char> seen(static_cast<std::size_t>(n), 0);
  std::vector<int> stack = {0};
  seen[0] = 1;
  int count = 1;
  while (!stack.empty()) {
    const int i = stack.back();
    stack.pop_back();
    for (int j : adj[static_cast<std::size_t>(i)]) {
      if (!seen[static_cast<std::size_t>(j)]) {
        seen[static_cast<std::size_t>(j)] = 1;
        ++count;
        stack.push_back(j);
      }
    }
  }
  return count == n;
}

/// Builds a connected edge set of the requested kind.
///
/// Random topologies hit exactly round(connectivity * n(n-1)/2) edges:
/// a uniform spanning tree (Pruefer decode) guarantees connectivity,
/// then uniformly chosen non-tree pairs fill up the edge budget.
inline std::vector<Edge> build_topology(TopologyKind kind, int n,
                                        double connectivity = 1.0,
                                        std::uint64_t seed = 0) {
  if (n < 2) throw std::invalid_argument("build_topology: need at least 2 agents");
  std::vector<Edge> edges;
  switch (kind) {
    case TopologyKind::kLine:
      for (int i = 0; i + 1 < n; ++i) edges.emplace_back(i, i + 1);
      return edges;
    case TopologyKind::kComplete:
      for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) edges.emplace_back(i, j);
      return edges;
    case TopologyKind::kRandom:
      break;
  }

  if (!(connectivity > 0.0 && connectivity <= 1.0))
    throw std::invalid_argument("build_topology: connectivity must be in (0,1]");
  const long long max_edges = static_cast<long long>(n) * (n - 1) / 2;
  const long long target =
      std::llround(connectivity * static_cast<double>(max_edges));
  if (target < n - 1)
    throw std::invalid_argument(
        "build_topology: edge budget " + std::to_string(target) +
        " cannot connect " + std::to_string(n) + " agents");

  CounterRng rng(seed);

  // Uniform labeled spanning tree from a random Pruefer sequence.
  std::vector<int> pruefer(static_cast<std::size_t>(n - 2));
  for (auto& s : pruefer) s = static_cast<int>(rng.below(static_cast<std::uint64_t>(n)));
  std::vector<int> deg(static_cast<std::size_t>(n), 1);
  for (int s : pruefer) ++deg[static_cast<std::size_t>(s)];
  std::vector<char> used(static_cast<std::size_t>(n), 0);
  auto add_edge = [&edges](int a, int b) {
    edges.emplace_back(std::min(a, b), std::max(a, b));
  };
  for (int s : pruefer) {
    for (int leaf = 0; leaf < n; ++leaf) {
      if (deg[static_cast<std::size_t>(leaf)] == 1 && !used[static_cast<std::size_t>(leaf)]) {
        add_edge(leaf, s);
        used[static_cast<std::size_t>(leaf)] = 1;
        --deg[static_cast<std::size_t>(s)];
        break;
      }
    }
  }
  {
    int a = -1, b = -1;
    for (int i = 0; i < n; ++i) {
      if (deg[static_cast<std::size_t>(i)] == 1 && !used[static_cast<std::size_t>(i)]) {
        if (a < 0) a = i; else b = i;
      }
    }
    add_edge(a, b);
  }

  // Extra edges: uniform sample (without replacement) of the non-tree pairs.
  std::vector<char> present(static_cast<std::size_t>(n) * static_cast<std::size_t>(n), 0);
  for (const Edge& e : edges)
    present[static_cast<std::size_t>(e.first) * static_cast<std::size_t>(n) +
            static_cast<std::size_t>(e.second)] = 1;
  std::vector<Edge> pool;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      if (!present[static_cast<std::size_t>(i) * static_cast<std::size_t>(n) +
                   static_cast<std::size_t>(j)])
        pool.emplace_back(i, j);
  const std::size_t extra = static_cast<std::size_t>(target) - edges.size();
  const auto pick = rng.partial_shuffle(pool.size(), extra);
  for (std::size_t idx : pick) edges.push_back(pool[idx]);

  std::sort(edges.begin(), edges.end());
  return edges;
}

/// Metropolis weights: off-diagonal 1/(max_i d_i + 1) on edges, diagonal
/// fills each row to sum one.
inline WeightedGraph metropolis_weights(const std::vector<Edge>& edges, int n) {
  if (!edges_connected(n, edges))
    throw std::invalid_argument("metropolis_weights: edge set is not connected");
  WeightedGraph g;
  g.n_agents = n;
  g.edges = edges;
  std::sort(g.edges.begin(), g.edges.end());
  g.degree.assign(static_cast<std::size_t>(n), 0);
  for (const Edge& e : g.edges) {
    ++g.degree[static_cast<std::size_t>(e.first)];
    ++g.degree[static_cast<std::size_t>(e.second)];
  }
  const int max_deg = *std::max_element(g.degree.begin(), g.degree.end());
  const double a = 1.0 / (static_cast<double>(max_deg) + 1.0);
  g.weights = Eigen::MatrixXd::Zero(n, n);
  for (const Edge& e : g.edges) {
    g.weights(e.first, e.second) = a;
    g.weights(e.second, e.first) = a;
  }
  for (int i = 0; i < n; ++i)
    g.weights(i, i) = 1.0 - static_cast<double>(g.degree[static_cast<std::size_t>(i)]) * a;
  g.rebuild_adjacency();
  return g;
}

inline WeightedGraph make_graph(TopologyKind kind, int n, double connectivity,
                                std::uint64_t seed) {
  WeightedGraph g = metropolis_weights(build_topology(kind, n, connectivity, seed), n);
  g.kind = kind;
  g.seed = seed;
  return g;
}

/// Smallest eigenvalue of a symmetric matrix (cyclic Jacobi).
inline double min_eigenvalue(const Eigen::MatrixXd& w) {
  return jacobi_eigensystem(w).values[0];
}

// --- file format ------------------------------------------------------
// {n, kind, seed, edges: [[i,j],...], weights: row-major array};
// agent indices are 1-based on disk.

inline nlohmann::json graph_to_json(const WeightedGraph& g) {
  nlohmann::json j;
  j["n"] = g.n_agents;
  j["kind"] = to_string(g.kind);
  j["seed"] = g.seed;
  nlohmann::json edges = nlohmann::json::array();
  for (const Edge& e : g.edges) edges.push_back({e.first + 1, e.second + 1});
  j["edges"] = std::move(edges);
  std::vector<double> flat(static_cast<std::size_t>(g.n_agents) * static_cast<std::size_t>(g.n_agents));
  for (int i = 0; i < g.n_agents; ++i)
    for (int k = 0; k < g.n_agents; ++k)
      flat[static_cast<std::size_t>(i) * static_cast<std::size_t>(g.n_agents) +
           static_cast<std::size_t>(k)] = g.weights(i, k);
  j["weights"] = std::move(flat);
  return j;
}

inline WeightedGraph graph_from_json(const nlohmann::json& j) {
  WeightedGraph g;
  g.n_agents = j.at("n").get<int>();
  g.kind = topology_kind_from_string(j.at("kind").get<std::string>());
  g.seed = j.at("seed").get<std::uint64_t>();
  for (const auto& e : j.at("edges"))
    g.edges.emplace_back(e.at(0).get<int>() - 1, e.at(1).get<int>() - 1);
  const auto flat = j.at("weights").get<std::vector<double>>();
  if (flat.size() != static_cast<std::size_t>(g.n_agents) * static_cast<std::size_t>(g.n_agents))
    throw std::invalid_argument("graph_from_json: weight array size mismatch");
  g.weights.resize(g.n_agents, g.n_agents);
  for (int i = 0; i < g.n_agents; ++i)
    for (int k = 0; k < g.n_agents; ++k)
      g.weights(i, k) = flat[static_cast<std::size_t>(i) * static_cast<std::size_t>(g.n_agents) +
                             static_cast<std::size_t>(k)];
  g.degree.assign(static_cast<std::size_t>(g.n_agents), 0);
  for (const Edge& e : g.edges) {
    ++g.degree[static_cast<std::size_t>(e.first)];
    ++g.degree[static_cast<std::size_t>(e.second)];
  }
  g.rebuild_adjacency();
  return g;
}

}  // namespace dhpr
