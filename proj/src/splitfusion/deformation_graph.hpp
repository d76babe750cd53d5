#pragma once

#include <limits>
#include <utility>
#include <vector>

#include "splitfusion/core_geometry.hpp"

namespace splitfusion {

struct GraphNode {
  Eigen::Vector3d g = Eigen::Vector3d::Zero();   // canonical position, fixed
  Eigen::Matrix3d R = Eigen::Matrix3d::Identity();
  Eigen::Vector3d t = Eigen::Vector3d::Zero();
};

struct DeformationGraph {
  std::vector<GraphNode> nodes;
  std::vector<std::vector<int>> edges;  // symmetric adjacency
  double edge_weight = 1.0;             // uniform per-edge weight
  int K = 6;                            // blended nodes per point
  double r_node = 0.05;                 // node sampling radius, meters

  size_t size() const { return nodes.size(); }
  size_t directed_edge_count() const {
    size_t n = 0;
    for (const auto& adj : edges) n += adj.size();
    return n;
  }
};

// (node index, normalized weight) pairs for one point.
using NodeWeights = std::vector<std::pair<int, double>>;

struct BlendBinding {
  std::vector<NodeWeights> weights;  // one entry per point, empty = unbound
  std::vector<double> d_max;         // per point

  size_t size() const { return weights.size(); }
  bool bound(size_t i) const { return !weights[i].empty(); }
};

// Greedy cover: walk the points in order, accept a point as a node iff no
// accepted node lies within r_node. Every input point ends up within r_node
// of some node.
std::vector<Eigen::Vector3d> sample_nodes(const std::vector<Eigen::Vector3d>& points,
                                          double r_node);

// Each node linked to its n_edges nearest nodes, then symmetrized.
std::vector<std::vector<int>> connect_nodes(const std::vector<Eigen::Vector3d>& positions,
                                            int n_edges = 4);

DeformationGraph build_graph(const std::vector<Eigen::Vector3d>& points, double r_node,
                             int n_edges = 4, int K = 6);

// Blend weights per point: K nearest nodes, d_max = distance to the (K+1)-th,
// raw w = (1 - d/d_max)^2, zero beyond d_max, normalized to sum 1.
// Graphs with <= K nodes bind to all nodes with d_max = 2x the farthest node.
BlendBinding bind_points(const std::vector<Eigen::Vector3d>& points,
                         const DeformationGraph& graph);
NodeWeights bind_point(const Eigen::Vector3d& p, const DeformationGraph& graph,
                       double* d_max_out = nullptr);

Eigen::Vector3d warp_point(const Eigen::Vector3d& p, const NodeWeights& w,
                           const DeformationGraph& graph);
// Returns the zero vector when the blended normal collapses below 1e-9.
Eigen::Vector3d warp_normal(const Eigen::Vector3d& n, const NodeWeights& w,
                            const DeformationGraph& graph);

// Single node at the origin carrying the given transform; all bindings weight 1.
DeformationGraph rigid_graph(const RigidTransform& initial);

// Add nodes covering points farther than r_node from every existing node; new
// node parameters are seeded from the current warp at the node position.
// Rebuilds the adjacency. Returns the number of nodes added.
int grow_graph(DeformationGraph& graph, const std::vector<Eigen::Vector3d>& new_points,
               int n_edges = 4);

}  // namespace splitfusion
