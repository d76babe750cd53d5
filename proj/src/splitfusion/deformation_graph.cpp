#include "splitfusion/deformation_graph.hpp"

#include <algorithm>
#include <cmath>

#include "splitfusion/kdtree.hpp"

namespace splitfusion {

std::vector<Eigen::Vector3d> sample_nodes(const std::vector<Eigen::Vector3d>& points,
                                          double r_node) {
  std::vector<Eigen::Vector3d> nodes;
  const double r2 = r_node * r_node;
  for (const Eigen::Vector3d& p : points) {
    bool covered = false;
    for (const Eigen::Vector3d& n : nodes) {
      if ((p - n).squaredNorm() < r2) {
        covered = true;
        break;
      }
    }
    if (!covered) nodes.push_back(p);
  }
  return nodes;
}

std::vector<std::vector<int>> connect_nodes(const std::vector<Eigen::Vector3d>& positions,
                                            int n_edges) {
  const int n = static_cast<int>(positions.size());
  std::vector<std::vector<int>> adj(n);
  if (n <= 1) return adj;
  KdTree3 tree(positions);
  for (int i = 0; i < n; ++i) {
    const auto nn = tree.knn(positions[i], std::min(n_edges + 1, n));
    for (int j : nn) {
      if (j == i) continue;
      adj[i].push_back(j);
      adj[j].push_back(i);
    }
  }
  for (auto& a : adj) {
    std::sort(a.begin(), a.end());
    a.erase(std::unique(a.begin(), a.end()), a.end());
  }
  return adj;
}

DeformationGraph build_graph(const std::vector<Eigen::Vector3d>& points, double r_node,
                             int n_edges, int K) {
  DeformationGraph g;
  g.r_node = r_node;
  g.K = K;
  for (const Eigen::Vector3d& p : sample_nodes(points, r_node)) {
    GraphNode n;
    n.g = p;
    g.nodes.push_back(n);
  }
  std::vector<Eigen::Vector3d> positions;
  positions.reserve(g.nodes.size());
  for (const GraphNode& n : g.nodes) positions.push_back(n.g);
  g.edges = connect_nodes(positions, n_edges);
  return g;
}

namespace {

NodeWeights weights_from_candidates(const Eigen::Vector3d& p,
                                    const std::vector<GraphNode>& nodes,
                                    const std::vector<int>& cand, double d_max) {
  NodeWeights w;
  w.reserve(cand.size());
  double sum = 0.0;
  for (int i : cand) {
    const double d = (p - nodes[i].g).norm();
    if (d >= d_max) continue;
    const double raw = (1.0 - d / d_max) * (1.0 - d / d_max);
    w.emplace_back(i, raw);
    sum += raw;
  }
  if (w.empty() || sum <= 0.0) {
    // every candidate sits at d_max (coincident nodes): uniform weights
    w.clear();
    for (int i : cand) w.emplace_back(i, 1.0 / cand.size());
    return w;
  }
  for (auto& [i, wi] : w) wi /= sum;
  return w;
}

}  // namespace

NodeWeights bind_point(const Eigen::Vector3d& p, const DeformationGraph& graph,
                       double* d_max_out) {
  const int n = static_cast<int>(graph.nodes.size());
  if (n == 0) {
    if (d_max_out) *d_max_out = 0.0;
    return {};
  }
  if (n == 1) {
    if (d_max_out) *d_max_out = std::numeric_limits<double>::infinity();
    return {{0, 1.0}};
  }
  if (n <= graph.K) {
    std::vector<int> all(n);
    double far = 0.0;
    for (int i = 0; i < n; ++i) {
      all[i] = i;
      far = std::max(far, (p - graph.nodes[i].g).norm());
    }
    double d_max = 2.0 * far;
    if (d_max <= 0.0) d_max = 1.0;  // point coincident with every node
    if (d_max_out) *d_max_out = d_max;
    return weights_from_candidates(p, graph.nodes, all, d_max);
  }

  // brute force over nodes; callers binding many points use bind_points
  std::vector<std::pair<double, int>> dist(n);
  for (int i = 0; i < n; ++i) dist[i] = {(p - graph.nodes[i].g).norm(), i};
  std::partial_sort(dist.begin(), dist.begin() + graph.K + 1, dist.end());
  const double d_max = dist[graph.K].first;
  if (d_max_out) *d_max_out = d_max;
  std::vector<int> cand(graph.K);
  for (int i = 0; i < graph.K; ++i) cand[i] = dist[i].second;
  if (d_max <= 0.0) {
    NodeWeights w;
    for (int i : cand) w.emplace_back(i, 1.0 / cand.size());
    return w;
  }
  return weights_from_candidates(p, graph.nodes, cand, d_max);
}

BlendBinding bind_points(const std::vector<Eigen::Vector3d>& points,
                         const DeformationGraph& graph) {
  BlendBinding b;
  b.weights.resize(points.size());
  b.d_max.resize(points.size(), 0.0);
  const int n = static_cast<int>(graph.nodes.size());
  if (n == 0) return b;
  if (n <= graph.K) {
    for (size_t j = 0; j < points.size(); ++j)
      b.weights[j] = bind_point(points[j], graph, &b.d_max[j]);
    return b;
  }
  std::vector<Eigen::Vector3d> positions;
  positions.reserve(n);
  for (const GraphNode& node : graph.nodes) positions.push_back(node.g);
  KdTree3 tree(positions);
  for (size_t j = 0; j < points.size(); ++j) {
    const auto nn = tree.knn(points[j], graph.K + 1);
    const double d_max = (points[j] - positions[nn.back()]).norm();
    b.d_max[j] = d_max;
    std::vector<int> cand(nn.begin(), nn.end() - 1);
    if (d_max <= 0.0) {
      NodeWeights w;
      for (int i : cand) w.emplace_back(i, 1.0 / cand.size());
      b.weights[j] = std::move(w);
    } else {
      b.weights[j] = weights_from_candidates(points[j], graph.nodes, cand, d_max);
    }
  }
  return b;
}

Eigen::Vector3d warp_point(const Eigen::Vector3d& p, const NodeWeights& w,
                           const DeformationGraph& graph) {
  Eigen::Vector3d out = Eigen::Vector3d::Zero();
  for (const auto& [i, wi] : w) {
    const GraphNode& n = graph.nodes[i];
    out += wi * (n.R * (p - n.g) + n.t + n.g);
  }
  return out;
}

Eigen::Vector3d warp_normal(const Eigen::Vector3d& n, const NodeWeights& w,
                            const DeformationGraph& graph) {
  Eigen::Vector3d out = Eigen::Vector3d::Zero();
  for (const auto& [i, wi] : w) out += wi * (graph.nodes[i].R * n);
  const double len = out.norm();
  if (len < 1e-9) return Eigen::Vector3d::Zero();
  return out / len;
}

DeformationGraph rigid_graph(const RigidTransform& initial) {
  DeformationGraph g;
  GraphNode n;
  n.g = Eigen::Vector3d::Zero();
  n.R = initial.rotation;
  n.t = initial.translation;
  g.nodes.push_back(n);
  g.edges.resize(1);
  g.K = 1;
  g.r_node = std::numeric_limits<double>::infinity();
  return g;
}

int grow_graph(DeformationGraph& graph, const std::vector<Eigen::Vector3d>& new_points,
               int n_edges) {
  const double r2 = graph.r_node * graph.r_node;
  int added = 0;
  for (const Eigen::Vector3d& p : new_points) {
    bool covered = false;
    for (const GraphNode& n : graph.nodes) {
      if ((p - n.g).squaredNorm() < r2) {
        covered = true;
        break;
      }
    }
    if (covered) continue;
    // seed the new node from the current warp at its position
    GraphNode node;
    node.g = p;
    const NodeWeights w = bind_point(p, graph);
    int nearest = 0;
    double best = std::numeric_limits<double>::max();
    for (size_t i = 0; i < graph.nodes.size(); ++i) {
      const double d = (graph.nodes[i].g - p).squaredNorm();
      if (d < best) {
        best = d;
        nearest = static_cast<int>(i);
      }
    }
    node.R = graph.nodes[nearest].R;
    node.t = warp_point(p, w, graph) - p;
    graph.nodes.push_back(node);
    ++added;
  }
  if (added > 0) {
    std::vector<Eigen::Vector3d> positions;
    positions.reserve(graph.nodes.size());
    for (const GraphNode& n : graph.nodes) positions.push_back(n.g);
    graph.edges = connect_nodes(positions, n_edges);
  }
  return added;
}

}  // namespace splitfusion
