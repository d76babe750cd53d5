#pragma once

#include <string>

#include "splitfusion/nonrigid_icp.hpp"
#include "splitfusion/scene_split.hpp"

namespace splitfusion {

struct RunConfig {
  double voxel_size = 0.01;             // object volumes
  double voxel_size_background = 0.02;  // background volume
  double truncation_factor = 4.0;       // tau = factor * voxel_size
  float max_weight = 100.0f;
  double lambda = 5.0;
  double r_node = 0.05;
  int K = 6;
  int node_edges = 4;
  int min_segment_points = 100;
  int lost_frames_to_retire = 3;
  bool grow_graphs = true;   // add nodes for newly observed non-rigid geometry
  int mask_erosion = 2;      // pixels shaved off segment masks before fusion
  double depth_scale = 0.0;  // 0 = use the dataset's value

  EnergyParams gates;      // delta_d / delta_n and lambda are mirrored here
  SolverConfig icp;
  SplitParams split;
  std::string class_table_path;

  static RunConfig from_json_file(const std::string& path);
  static RunConfig from_json_text(const std::string& text);
  std::string to_json_text() const;
};

}  // namespace splitfusion
