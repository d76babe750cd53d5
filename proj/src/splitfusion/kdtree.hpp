#pragma once

#include <Eigen/Core>
#include <vector>

namespace splitfusion {

// Small 3D kd-tree for k-NN and radius queries. Ties broken by point index so
// queries are deterministic.
class KdTree3 {
 public:
  KdTree3() = default;
  explicit KdTree3(std::vector<Eigen::Vector3d> points) { build(std::move(points)); }

  void build(std::vector<Eigen::Vector3d> points);

  size_t size() const { return points_.size(); }
  const Eigen::Vector3d& point(int i) const { return points_[i]; }

  // Indices of the k nearest points, sorted by (distance, index).
  std::vector<int> knn(const Eigen::Vector3d& q, int k) const;
  // All indices within radius r, sorted by index.
  std::vector<int> radius(const Eigen::Vector3d& q, double r) const;
  int nearest(const Eigen::Vector3d& q) const;
  double nearest_distance(const Eigen::Vector3d& q) const;

 private:
  struct Node {
    int left = -1, right = -1;
    int begin = 0, end = 0;  // leaf range into order_
    int axis = -1;
    double split = 0.0;
  };

  int build_recursive(int begin, int end);
  void knn_search(int node, const Eigen::Vector3d& q, int k,
                  std::vector<std::pair<double, int>>& heap) const;
  void radius_search(int node, const Eigen::Vector3d& q, double r2, std::vector<int>& out) const;

  std::vector<Eigen::Vector3d> points_;
  std::vector<int> order_;
  std::vector<Node> nodes_;
  int root_ = -1;
  static constexpr int kLeafSize = 16;
};

}  // namespace splitfusion
