#include "splitfusion/kdtree.hpp"

#include <algorithm>
#include <limits>
#include <numeric>

namespace splitfusion {

void KdTree3::build(std::vector<Eigen::Vector3d> points) {
  points_ = std::move(points);
  order_.resize(points_.size());
  std::iota(order_.begin(), order_.end(), 0);
  nodes_.clear();
  nodes_.reserve(points_.empty() ? 1 : 2 * points_.size() / kLeafSize + 2);
  root_ = points_.empty() ? -1 : build_recursive(0, static_cast<int>(points_.size()));
}

int KdTree3::build_recursive(int begin, int end) {
  const int id = static_cast<int>(nodes_.size());
  nodes_.push_back({});
  if (end - begin <= kLeafSize) {
    nodes_[id].begin = begin;
    nodes_[id].end = end;
    return id;
  }
  Eigen::Vector3d lo = points_[order_[begin]], hi = lo;
  for (int i = begin + 1; i < end; ++i) {
    lo = lo.cwiseMin(points_[order_[i]]);
    hi = hi.cwiseMax(points_[order_[i]]);
  }
  int axis;
  (hi - lo).maxCoeff(&axis);
  const int mid = (begin + end) / 2;
  std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                   [&](int a, int b) {
                     if (points_[a][axis] != points_[b][axis])
                       return points_[a][axis] < points_[b][axis];
                     return a < b;
                   });
  Node n;
  n.axis = axis;
  n.split = points_[order_[mid]][axis];
  nodes_[id] = n;
  const int left = build_recursive(begin, mid);
  const int right = build_recursive(mid, end);
  nodes_[id].left = left;
  nodes_[id].right = right;
  nodes_[id].axis = axis;
  nodes_[id].split = n.split;
  return id;
}

void KdTree3::knn_search(int node, const Eigen::Vector3d& q, int k,
                         std::vector<std::pair<double, int>>& heap) const {
  const Node& n = nodes_[node];
  if (n.axis < 0) {
    for (int i = n.begin; i < n.end; ++i) {
      const int idx = order_[i];
      const double d2 = (points_[idx] - q).squaredNorm();
      const std::pair<double, int> cand{d2, idx};
      if (static_cast<int>(heap.size()) < k) {
        heap.push_back(cand);
        std::push_heap(heap.begin(), heap.end());
      } else if (cand < heap.front()) {
        std::pop_heap(heap.begin(), heap.end());
        heap.back() = cand;
        std::push_heap(heap.begin(), heap.end());
      }
    }
    return;
  }
  const double delta = q[n.axis] - n.split;
  const int near = delta < 0 ? n.left : n.right;
  const int far = delta < 0 ? n.right : n.left;
  knn_search(near, q, k, heap);
  if (static_cast<int>(heap.size()) < k || delta * delta <= heap.front().first)
    knn_search(far, q, k, heap);
}

std::vector<int> KdTree3::knn(const Eigen::Vector3d& q, int k) const {
  std::vector<std::pair<double, int>> heap;
  if (root_ >= 0 && k > 0) {
    heap.reserve(k + 1);
    knn_search(root_, q, k, heap);
  }
  std::sort(heap.begin(), heap.end());
  std::vector<int> out;
  out.reserve(heap.size());
  for (const auto& [d2, i] : heap) out.push_back(i);
  return out;
}

void KdTree3::radius_search(int node, const Eigen::Vector3d& q, double r2,
                            std::vector<int>& out) const {
  const Node& n = nodes_[node];
  if (n.axis < 0) {
    for (int i = n.begin; i < n.end; ++i) {
      const int idx = order_[i];
      if ((points_[idx] - q).squaredNorm() <= r2) out.push_back(idx);
    }
    return;
  }
  const double delta = q[n.axis] - n.split;
  const int near = delta < 0 ? n.left : n.right;
  const int far = delta < 0 ? n.right : n.left;
  radius_search(near, q, r2, out);
  if (delta * delta <= r2) radius_search(far, q, r2, out);
}

std::vector<int> KdTree3::radius(const Eigen::Vector3d& q, double r) const {
  std::vector<int> out;
  if (root_ >= 0) radius_search(root_, q, r * r, out);
  std::sort(out.begin(), out.end());
  return out;
}

int KdTree3::nearest(const Eigen::Vector3d& q) const {
  const auto v = knn(q, 1);
  return v.empty() ? -1 : v[0];
}

double KdTree3::nearest_distance(const Eigen::Vector3d& q) const {
  const int i = nearest(q);
  return i < 0 ? std::numeric_limits<double>::infinity() : (points_[i] - q).norm();
}

}  // namespace splitfusion
