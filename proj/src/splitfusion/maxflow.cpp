#include "splitfusion/maxflow.hpp"

#include <algorithm>
#include <limits>
#include <queue>

namespace splitfusion {

MaxFlow::MaxFlow(int num_nodes)
    : graph_(num_nodes), level_(num_nodes), iter_(num_nodes), reachable_(num_nodes, 0) {}

void MaxFlow::add_edge(int u, int v, double cap_uv, double cap_vu) {
  graph_[u].push_back({v, cap_uv, static_cast<int>(graph_[v].size())});
  graph_[v].push_back({u, cap_vu, static_cast<int>(graph_[u].size()) - 1});
}

bool MaxFlow::bfs(int s, int t) {
  std::fill(level_.begin(), level_.end(), -1);
  std::queue<int> q;
  level_[s] = 0;
  q.push(s);
  while (!q.empty()) {
    const int u = q.front();
    q.pop();
    for (const Edge& e : graph_[u]) {
      if (e.cap > kEps && level_[e.to] < 0) {
        level_[e.to] = level_[u] + 1;
        q.push(e.to);
      }
    }
  }
  return level_[t] >= 0;
}

double MaxFlow::dfs(int u, int t, double pushed) {
  if (u == t) return pushed;
  for (size_t& i = iter_[u]; i < graph_[u].size(); ++i) {
    Edge& e = graph_[u][i];
    if (e.cap > kEps && level_[e.to] == level_[u] + 1) {
      const double got = dfs(e.to, t, std::min(pushed, e.cap));
      if (got > kEps) {
        e.cap -= got;
        graph_[e.to][e.rev].cap += got;
        return got;
      }
    }
  }
  return 0.0;
}

double MaxFlow::solve(int source, int sink) {
  double flow = 0.0;
  while (bfs(source, sink)) {
    std::fill(iter_.begin(), iter_.end(), 0);
    while (true) {
      const double got = dfs(source, sink, std::numeric_limits<double>::max());
      if (got <= kEps) break;
      flow += got;
    }
  }
  mark_reachable(source);
  return flow;
}

void MaxFlow::mark_reachable(int s) {
  std::fill(reachable_.begin(), reachable_.end(), 0);
  std::queue<int> q;
  reachable_[s] = 1;
  q.push(s);
  while (!q.empty()) {
    const int u = q.front();
    q.pop();
    for (const Edge& e : graph_[u]) {
      if (e.cap > kEps && !reachable_[e.to]) {
        reachable_[e.to] = 1;
        q.push(e.to);
      }
    }
  }
}

}  // namespace splitfusion
