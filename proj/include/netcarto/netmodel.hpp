#pragma once

// Synthetic network substrate: topology, single-path routing, link-graph
// structure matrices, traffic/anomaly generation and measurement sampling.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <queue>
#include <set>
#include <utility>
#include <vector>

#include "netcarto/common.hpp"

namespace netcarto {

struct Topology {
  int node_count = 0;
  std::vector<std::pair<int, int>> links;  // directed, 0-indexed
  std::uint64_t seed = 0;
};

struct RoutingMatrix {
  Matrix entries;                            // L x F, 0/1
  std::vector<std::pair<int, int>> flows;    // (source, destination)
};

struct LinkGraphStructure {
  Matrix gram;       // G = R R'
  Matrix laplacian;  // diag(G 1) - G
};

struct SamplingMask {
  MaskArray keep;

  Matrix apply(const Matrix& m) const {
    require(m.rows() == keep.rows() && m.cols() == keep.cols(),
            "mask shape mismatch");
    return keep.select(m, Matrix::Zero(m.rows(), m.cols()));
  }

  std::vector<int> observed_rows(int col) const {
    std::vector<int> out;
    for (Eigen::Index l = 0; l < keep.rows(); ++l)
      if (keep(l, col)) out.push_back(static_cast<int>(l));
    return out;
  }

  std::vector<std::pair<int, int>> pairs() const {
    std::vector<std::pair<int, int>> out;
    for (Eigen::Index t = 0; t < keep.cols(); ++t)
      for (Eigen::Index l = 0; l < keep.rows(); ++l)
        if (keep(l, t)) out.emplace_back(static_cast<int>(l), static_cast<int>(t));
    return out;
  }
};

enum class NoiseKind { Gaussian, Uniform };

// --- topology -------------------------------------------------------------

// Random connected topology: forced spanning tree first, extra edges after.
// Each undirected edge is stored as a pair of directed links, so the link
// count is L = 2 * (#undirected edges) ~ n_nodes * target_degree / 2.
inline Topology build_topology(int n_nodes, double target_degree,
                               std::uint64_t seed) {
  require(n_nodes >= 2, "build_topology: need at least 2 nodes");
  require(target_degree >= 2.0, "build_topology: target_degree must be >= 2");

  Rng rng(seed);
  std::vector<int> order(n_nodes);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);

  std::set<std::pair<int, int>> edges;  // undirected, a < b
  auto add_edge = [&edges](int a, int b) {
    if (a > b) std::swap(a, b);
    return edges.insert({a, b}).second;
  };

  // spanning tree over the shuffled order
  for (int i = 1; i < n_nodes; ++i) {
    std::uniform_int_distribution<int> pick(0, i - 1);
    add_edge(order[i], order[pick(rng)]);
  }

  const auto max_edges =
      static_cast<std::size_t>(n_nodes) * (n_nodes - 1) / 2;
  const auto target_und = std::min<std::size_t>(
      max_edges, std::max<std::size_t>(
                     n_nodes - 1,
                     static_cast<std::size_t>(
                         std::llround(n_nodes * target_degree / 4.0))));

  std::uniform_int_distribution<int> node(0, n_nodes - 1);
  while (edges.size() < target_und) {
    int a = node(rng), b = node(rng);
    if (a != b) add_edge(a, b);
  }

  Topology topo;
  topo.node_count = n_nodes;
  topo.seed = seed;
  for (const auto& [a, b] : edges) {
    topo.links.emplace_back(a, b);
    topo.links.emplace_back(b, a);
  }
  return topo;
}

namespace detail {

inline std::vector<std::vector<int>> neighbor_lists(const Topology& topo) {
  std::vector<std::vector<int>> adj(topo.node_count);
  for (const auto& [u, v] : topo.links) adj[u].push_back(v);
  for (auto& nb : adj) {
    std::sort(nb.begin(), nb.end());
    nb.erase(std::unique(nb.begin(), nb.end()), nb.end());
  }
  return adj;
}

inline std::vector<int> bfs_distances(const std::vector<std::vector<int>>& adj,
                                      int source) {
  std::vector<int> dist(adj.size(), -1);
  std::queue<int> q;
  dist[source] = 0;
  q.push(source);
  while (!q.empty()) {
    int u = q.front();
    q.pop();
    for (int v : adj[u])
      if (dist[v] < 0) {
        dist[v] = dist[u] + 1;
        q.push(v);
      }
  }
  return dist;
}

}  // namespace detail

// Shortest-path (hop metric) routing, ties broken by the lexicographically
// smallest node sequence.
inline RoutingMatrix shortest_path_routing(
    const Topology& topo, const std::vector<std::pair<int, int>>& flows) {
  const auto adj = detail::neighbor_lists(topo);
  std::map<std::pair<int, int>, int> link_index;
  for (std::size_t i = 0; i < topo.links.size(); ++i)
    link_index[topo.links[i]] = static_cast<int>(i);

  const auto L = static_cast<Eigen::Index>(topo.links.size());
  const auto F = static_cast<Eigen::Index>(flows.size());
  RoutingMatrix routing;
  routing.entries = Matrix::Zero(L, F);
  routing.flows = flows;

  for (Eigen::Index f = 0; f < F; ++f) {
    const auto [src, dst] = flows[f];
    require(src >= 0 && src < topo.node_count && dst >= 0 &&
                dst < topo.node_count,
            "shortest_path_routing: endpoint out of range");
    require(src != dst, "shortest_path_routing: source equals destination");
    const auto dist = detail::bfs_distances(adj, dst);
    if (dist[src] < 0)
      throw std::runtime_error("shortest_path_routing: unreachable pair");
    // walk from source, always taking the smallest admissible neighbor
    int cur = src;
    while (cur != dst) {
      int next = -1;
      for (int v : adj[cur])
        if (dist[v] == dist[cur] - 1) {
          next = v;
          break;  // adjacency is sorted
        }
      routing.entries(link_index.at({cur, next}), f) = 1.0;
      cur = next;
    }
  }
  return routing;
}

// --- structure matrices ---------------------------------------------------

inline Matrix gram(const RoutingMatrix& routing) {
  return routing.entries * routing.entries.transpose();
}

inline Matrix laplacian(const Matrix& g) {
  require(g.rows() == g.cols(), "laplacian: input must be square");
  if ((g - g.transpose()).cwiseAbs().maxCoeff() > 1e-12 * (1.0 + g.cwiseAbs().maxCoeff()))
    throw std::invalid_argument("laplacian: input not symmetric");
  return Matrix(g.rowwise().sum().asDiagonal()) - g;
}

inline LinkGraphStructure link_graph_structure(const RoutingMatrix& routing) {
  LinkGraphStructure s;
  s.gram = gram(routing);
  s.laplacian = laplacian(s.gram);
  return s;
}

// --- traffic + anomalies --------------------------------------------------

// Z = max(0, U V') with nonnegative mixing weights U and temporal factors
// built from sinusoids of the given period plus smooth low-frequency trends.
// The positive offset in the factors keeps clipping rare, so the top-r
// singular values retain essentially all the energy.
inline Matrix generate_od_traffic(int n_flows, int horizon, int rank,
                                  int period, std::uint64_t seed) {
  require(rank >= 1 && rank <= std::min(n_flows, horizon),
          "generate_od_traffic: rank out of range");
  require(period >= 2, "generate_od_traffic: period must be >= 2");
  Rng rng(seed);
  Matrix u = uniform_matrix(n_flows, rank, rng, 0.2, 1.0);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * M_PI);
  std::uniform_real_distribution<double> amp(0.2, 0.5);
  Matrix v(horizon, rank);
  for (int k = 0; k < rank; ++k) {
    const double phi = phase(rng);
    const double a1 = amp(rng);
    const double phi2 = phase(rng);
    const double a2 = 0.5 * amp(rng);
    for (int t = 0; t < horizon; ++t) {
      const double w = 2.0 * M_PI * t / period;
      // baseline + daily sinusoid + slow trend
      v(t, k) = 1.0 + a1 * std::sin(w + phi) +
                a2 * std::sin(w / 7.0 + phi2);
    }
  }
  return (u * v.transpose()).cwiseMax(0.0);
}

// Burst anomalies: `duration`-long runs in random (flow, start) slots.
inline Matrix inject_anomalies(int n_flows, int horizon, double density,
                               double magnitude, int duration,
                               std::uint64_t seed, bool signed_anomalies = false) {
  require(density > 0.0 && density < 1.0,
          "inject_anomalies: density outside (0,1)");
  require(duration >= 1 && duration <= horizon,
          "inject_anomalies: bad duration");
  const double target = density * n_flows * horizon;
  require(target >= 1.0, "inject_anomalies: density * F * T below 1");

  Rng rng(seed);
  std::uniform_int_distribution<int> flow(0, n_flows - 1);
  std::uniform_int_distribution<int> start(0, horizon - duration);
  std::uniform_real_distribution<double> scale(0.0, 0.5);
  std::uniform_int_distribution<int> coin(0, 1);

  const auto bursts = std::max<long>(
      1, static_cast<long>(std::ceil(target / duration)));
  Matrix a = Matrix::Zero(n_flows, horizon);
  long placed = 0, attempts = 0;
  const long max_attempts = 1000 * bursts + 1000;
  while (placed < bursts && attempts < max_attempts) {
    ++attempts;
    const int f = flow(rng), s = start(rng);
    bool clash = false;
    for (int k = 0; k < duration; ++k)
      if (a(f, s + k) != 0.0) { clash = true; break; }
    if (clash) continue;
    const double sgn = (signed_anomalies && coin(rng)) ? -1.0 : 1.0;
    for (int k = 0; k < duration; ++k)
      a(f, s + k) = sgn * magnitude * (1.0 + scale(rng));
    ++placed;
  }
  if (placed < bursts)
    throw std::runtime_error("inject_anomalies: could not place bursts");
  return a;
}

struct Observation {
  Matrix y;
  SamplingMask mask;
};

// Y = X + R A + E on the sampled entries, zero elsewhere. Per column,
// round(keep_fraction * L) links are observed.
inline Observation observe(const Matrix& link_traffic, const Matrix& routing,
                           const Matrix& anomalies, double noise_std,
                           double keep_fraction, std::uint64_t seed,
                           NoiseKind noise = NoiseKind::Gaussian) {
  require(keep_fraction > 0.0 && keep_fraction <= 1.0,
          "observe: keep_fraction outside (0,1]");
  require(noise_std >= 0.0, "observe: negative noise_std");
  const auto L = link_traffic.rows();
  const auto T = link_traffic.cols();
  const int per_col =
      std::max<int>(1, static_cast<int>(std::llround(keep_fraction * L)));

  Rng rng(seed);
  Matrix clean = link_traffic + routing * anomalies;
  Observation obs;
  obs.mask.keep = MaskArray::Constant(L, T, false);
  obs.y = Matrix::Zero(L, T);

  std::vector<int> idx(L);
  std::iota(idx.begin(), idx.end(), 0);
  std::normal_distribution<double> gauss(0.0, noise_std);
  const double half_width = noise_std * std::sqrt(3.0);
  std::uniform_real_distribution<double> unif(-half_width, half_width);

  for (Eigen::Index t = 0; t < T; ++t) {
    std::shuffle(idx.begin(), idx.end(), rng);
    for (int k = 0; k < per_col; ++k) {
      const int l = idx[k];
      double eps = 0.0;
      if (noise_std > 0.0)
        eps = (noise == NoiseKind::Gaussian) ? gauss(rng) : unif(rng);
      obs.mask.keep(l, t) = true;
      obs.y(l, t) = clean(l, t) + eps;
    }
  }
  return obs;
}

inline Matrix selection_matrix(const std::vector<int>& observed, int size) {
  std::set<int> seen;
  for (int i : observed) {
    require(i >= 0 && i < size, "selection_matrix: index out of range");
    require(seen.insert(i).second, "selection_matrix: duplicate index");
  }
  Matrix s = Matrix::Zero(static_cast<Eigen::Index>(observed.size()), size);
  for (std::size_t r = 0; r < observed.size(); ++r) s(r, observed[r]) = 1.0;
  return s;
}

// --- end-to-end scenario --------------------------------------------------

struct ScenarioParams {
  int n_nodes = 20;
  double target_degree = 5.0;
  int horizon = 500;
  int rank = 5;
  int period = 144;
  double anomaly_density = 0.005;
  double anomaly_magnitude = 1.0;
  int anomaly_duration = 3;
  double noise_std = 0.05;
  double keep_fraction = 1.0;
  std::uint64_t seed = 1;
  bool signed_anomalies = false;
};

struct TrafficScenario {
  Topology topology;
  RoutingMatrix routing;
  Matrix od_traffic;    // Z, F x T
  Matrix anomalies;     // A, F x T
  Matrix link_traffic;  // X = R Z
  Matrix observations;  // Y on mask
  SamplingMask mask;
  double noise_std = 0.0;
  std::uint64_t seed = 0;
};

// All-pairs flows over a generated topology, low-rank traffic, burst
// anomalies and masked noisy link observations, all from one seed.
inline TrafficScenario make_scenario(const ScenarioParams& p) {
  TrafficScenario sc;
  sc.seed = p.seed;
  sc.noise_std = p.noise_std;
  sc.topology = build_topology(p.n_nodes, p.target_degree, p.seed);
  std::vector<std::pair<int, int>> flows;
  for (int s = 0; s < p.n_nodes; ++s)
    for (int d = 0; d < p.n_nodes; ++d)
      if (s != d) flows.emplace_back(s, d);
  sc.routing = shortest_path_routing(sc.topology, flows);
  const int F = static_cast<int>(flows.size());
  sc.od_traffic =
      generate_od_traffic(F, p.horizon, p.rank, p.period, p.seed + 1);
  if (p.anomaly_density > 0.0)
    sc.anomalies =
        inject_anomalies(F, p.horizon, p.anomaly_density, p.anomaly_magnitude,
                         p.anomaly_duration, p.seed + 2, p.signed_anomalies);
  else
    sc.anomalies = Matrix::Zero(F, p.horizon);
  sc.link_traffic = sc.routing.entries * sc.od_traffic;
  auto obs = observe(sc.link_traffic, sc.routing.entries, sc.anomalies,
                     p.noise_std, p.keep_fraction, p.seed + 3);
  sc.observations = std::move(obs.y);
  sc.mask = std::move(obs.mask);
  return sc;
}

}  // namespace netcarto
