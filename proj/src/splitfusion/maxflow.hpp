#pragma once

#include <vector>

namespace splitfusion {

// Dinic max-flow / min-cut on a sparse graph with double capacities.
class MaxFlow {
 public:
  explicit MaxFlow(int num_nodes);

  void add_edge(int u, int v, double cap_uv, double cap_vu = 0.0);
  double solve(int source, int sink);

  // After solve: true if u is reachable from the source in the residual graph.
  bool source_side(int u) const { return reachable_[u]; }

 private:
  struct Edge {
    int to;
    double cap;
    int rev;  // index of the reverse edge in graph_[to]
  };

  bool bfs(int s, int t);
  double dfs(int u, int t, double pushed);
  void mark_reachable(int s);

  std::vector<std::vector<Edge>> graph_;
  std::vector<int> level_;
  std::vector<size_t> iter_;
  std::vector<char> reachable_;
  static constexpr double kEps = 1e-12;
};

}  // namespace splitfusion
