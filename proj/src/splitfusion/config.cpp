#include "splitfusion/config.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <stdexcept>

#include <nlohmann/json.hpp>

using json = nlohmann::json;

namespace splitfusion {

RunConfig RunConfig::from_json_text(const std::string& text) {
  const json j = json::parse(text);
  RunConfig c;
  c.voxel_size = j.value("voxel_size", c.voxel_size);
  c.voxel_size_background = j.value("voxel_size_background", 2.0 * c.voxel_size);
  c.truncation_factor = j.value("truncation_factor", c.truncation_factor);
  c.max_weight = j.value("max_weight", c.max_weight);
  c.lambda = j.value("lambda", c.lambda);
  c.r_node = j.value("r_node", c.r_node);
  c.K = j.value("K", c.K);
  c.node_edges = j.value("node_edges", c.node_edges);
  c.min_segment_points = j.value("min_segment_points", c.min_segment_points);
  c.grow_graphs = j.value("grow_graphs", c.grow_graphs);
  c.mask_erosion = j.value("mask_erosion", c.mask_erosion);
  c.depth_scale = j.value("depth_scale", c.depth_scale);
  c.class_table_path = j.value("class_table_path", std::string{});

  if (j.contains("icp")) {
    const json& ji = j["icp"];
    c.icp.outer_iterations = ji.value("outer", c.icp.outer_iterations);
    c.icp.inner_iterations = ji.value("inner", c.icp.inner_iterations);
    c.icp.pcg_tolerance = ji.value("pcg_tol", c.icp.pcg_tolerance);
    c.icp.pcg_max_iterations = ji.value("pcg_max", c.icp.pcg_max_iterations);
    c.icp.mu0 = ji.value("mu0", c.icp.mu0);
    c.gates.distance_gate = ji.value("delta_d", c.gates.distance_gate);
    const double deg = ji.value("delta_n_deg", 60.0);
    c.gates.normal_gate = std::cos(deg * std::numbers::pi / 180.0);
  }
  c.gates.lambda = c.lambda;

  if (j.contains("split")) {
    const json& js = j["split"];
    c.split.knn = js.value("knn", c.split.knn);
    c.split.r_bg = js.value("r_bg", c.split.r_bg);
    c.split.subsample = js.value("subsample", c.split.subsample);
    c.split.min_iou = js.value("min_iou", c.split.min_iou);
  }

  if (c.voxel_size <= 0 || c.truncation_factor < 2.0)
    throw std::runtime_error("config: voxel_size must be > 0 and truncation_factor >= 2");
  if (c.K < 1 || c.r_node <= 0) throw std::runtime_error("config: K >= 1 and r_node > 0 required");
  return c;
}

RunConfig RunConfig::from_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config: " + path);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return from_json_text(text);
}

std::string RunConfig::to_json_text() const {
  json j;
  j["voxel_size"] = voxel_size;
  j["voxel_size_background"] = voxel_size_background;
  j["truncation_factor"] = truncation_factor;
  j["max_weight"] = max_weight;
  j["lambda"] = lambda;
  j["r_node"] = r_node;
  j["K"] = K;
  j["node_edges"] = node_edges;
  j["min_segment_points"] = min_segment_points;
  j["grow_graphs"] = grow_graphs;
  j["mask_erosion"] = mask_erosion;
  j["depth_scale"] = depth_scale;
  j["class_table_path"] = class_table_path;
  j["icp"] = {{"outer", icp.outer_iterations},
              {"inner", icp.inner_iterations},
              {"pcg_tol", icp.pcg_tolerance},
              {"pcg_max", icp.pcg_max_iterations},
              {"mu0", icp.mu0},
              {"delta_d", gates.distance_gate},
              {"delta_n_deg", std::acos(gates.normal_gate) * 180.0 / std::numbers::pi}};
  j["split"] = {{"knn", split.knn},
                {"r_bg", split.r_bg},
                {"subsample", split.subsample},
                {"min_iou", split.min_iou}};
  return j.dump(2);
}

}  // namespace splitfusion
