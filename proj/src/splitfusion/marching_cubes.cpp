#include "splitfusion/marching_cubes.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

namespace splitfusion {

namespace {

Eigen::Vector3d corner_pos(int c) {
  return {static_cast<double>(c & 1), static_cast<double>((c >> 1) & 1),
          static_cast<double>((c >> 2) & 1)};
}

McTables build_tables() {
  McTables t{};

  // edges grouped by axis, lower corner in increasing order
  int e = 0;
  for (int axis = 0; axis < 3; ++axis) {
    for (int c = 0; c < 8; ++c) {
      if (c & (1 << axis)) continue;
      t.edge_corners[e++] = {c, c | (1 << axis)};
    }
  }

  // faces: axis a, side s; basis (u,v) chosen so u x v is the outward normal
  struct Face {
    int axis, side;
    std::array<int, 4> corners;
    std::vector<int> edges;
    Eigen::Vector3d u, v;
  };
  std::vector<Face> faces;
  for (int axis = 0; axis < 3; ++axis) {
    for (int side = 0; side < 2; ++side) {
      Face f{axis, side, {}, {}, Eigen::Vector3d::Zero(), Eigen::Vector3d::Zero()};
      const int ua = (axis + 1) % 3, va = (axis + 2) % 3;
      const int base = side << axis;
      f.corners = {base, base | (1 << ua), base | (1 << ua) | (1 << va), base | (1 << va)};
      for (int ei = 0; ei < 12; ++ei) {
        const auto [a, b] = t.edge_corners[ei];
        if (((a >> axis) & 1) == side && ((b >> axis) & 1) == side) f.edges.push_back(ei);
      }
      f.u = Eigen::Vector3d::Unit(ua);
      f.v = Eigen::Vector3d::Unit(va);
      if (side == 0) std::swap(f.u, f.v);  // outward normal flips on the low side
      faces.push_back(f);
    }
  }

  for (int config = 0; config < 256; ++config) {
    auto inside = [&](int c) { return (config >> c) & 1; };

    std::vector<int> crossing;
    for (int ei = 0; ei < 12; ++ei) {
      const auto [a, b] = t.edge_corners[ei];
      if (inside(a) != inside(b)) crossing.push_back(ei);
    }
    if (crossing.empty()) continue;

    auto edge_mid = [&](int ei) -> Eigen::Vector3d {
      const auto [a, b] = t.edge_corners[ei];
      return 0.5 * (corner_pos(a) + corner_pos(b));
    };
    auto inside_corner = [&](int ei) {
      const auto [a, b] = t.edge_corners[ei];
      return inside(a) ? a : b;
    };

    // direct each contour segment so the inside region sits to the right when
    // the face is viewed from outside; each crossing edge then has exactly one
    // outgoing and one incoming segment, giving consistently oriented loops
    // whose triangles face the positive side
    std::array<int, 12> next;
    next.fill(-1);
    auto add_segment = [&](const Face& f, int ea, int eb) {
      const Eigen::Vector3d d3 = edge_mid(eb) - edge_mid(ea);
      const Eigen::Vector3d w3 = corner_pos(inside_corner(ea)) - edge_mid(ea);
      const double cross2 =
          d3.dot(f.u) * w3.dot(f.v) - d3.dot(f.v) * w3.dot(f.u);
      if (cross2 < 0) {
        next[ea] = eb;
      } else {
        next[eb] = ea;
      }
    };

    for (const Face& f : faces) {
      std::vector<int> fc;
      for (int ei : f.edges) {
        const auto [a, b] = t.edge_corners[ei];
        if (inside(a) != inside(b)) fc.push_back(ei);
      }
      if (fc.empty()) continue;
      if (fc.size() == 2) {
        add_segment(f, fc[0], fc[1]);
      } else {
        // 4 crossings: corners alternate; separate the inside corners by
        // pairing the two edges adjacent to each inside corner
        for (int corner : f.corners) {
          if (!inside(corner)) continue;
          std::vector<int> adj;
          for (int ei : fc) {
            const auto [a, b] = t.edge_corners[ei];
            if (a == corner || b == corner) adj.push_back(ei);
          }
          add_segment(f, adj[0], adj[1]);
        }
      }
    }

    std::array<bool, 12> used{};
    for (int start : crossing) {
      if (used[start]) continue;
      std::vector<int> loop;
      int cur = start;
      do {
        loop.push_back(cur);
        used[cur] = true;
        cur = next[cur];
      } while (cur != start && cur >= 0 && loop.size() <= 12);
      if (loop.size() < 3 || cur != start) continue;

      for (size_t i = 1; i + 1 < loop.size(); ++i)
        t.cases[config].push_back({loop[0], loop[i], loop[i + 1]});
    }
  }
  return t;
}

}  // namespace

const McTables& mc_tables() {
  static const McTables tables = build_tables();
  return tables;
}

}  // namespace splitfusion
