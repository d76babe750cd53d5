#pragma once

#include <map>
#include <string>
#include <vector>

#include "splitfusion/core_geometry.hpp"
#include "splitfusion/dataset_io.hpp"

namespace splitfusion {

enum class Rigidity { Rigid, NonRigid };

// Semantic class -> rigidity. Total over the classes seen in a sequence;
// classify throws on unknown classes so the table must be extended explicitly.
class ClassTable {
 public:
  static ClassTable coco_default();

  void set(const std::string& name, Rigidity r) { table_[name] = r; }
  bool contains(const std::string& name) const { return table_.count(name) != 0; }
  Rigidity classify(const std::string& name) const;

  // JSON {"<class>": "rigid"|"nonrigid"} merged over the current entries.
  void merge_json_file(const std::string& path);

 private:
  std::map<std::string, Rigidity> table_;
};

struct SurfaceSegment {
  int instance_id = 0;  // 0 = background
  std::string class_name;
  Rigidity rigidity = Rigidity::Rigid;
  PixelMask pixels;
  PointCloud cloud;
  bool refine_fallback = false;  // graph-cut sanity gate returned the prior
};

struct SplitParams {
  int knn = 8;                      // neighbor graph degree
  double r_bg = 0.5;                // background seed distance, meters
  int subsample = 2;                // pixel stride before graph construction
  double min_iou = 0.3;             // refined-vs-prior sanity gate
  double min_valid_fraction = 0.3;  // valid depth required under the prior
};

struct RefineResult {
  PixelMask mask;
  bool fallback = false;
};

// 3D graph-cut refinement: k-NN neighbor graph over the subsampled frame cloud
// with w(p,q) = exp(-|p-q|^2 / sigma^2), sigma = 2x median k-NN distance;
// prior points tie to the source, points farther than r_bg from every seed tie
// to the sink. Returns the source side, or the prior (fallback set) when the
// cut degenerates or overlaps the prior with IoU < min_iou.
RefineResult refine_segment_graphcut(const DepthFrame& frame, const PixelMask& prior,
                                     const SplitParams& params);

// One refined segment per nonzero instance id plus one rigid background
// segment; pixel sets partition the valid-depth pixels.
std::vector<SurfaceSegment> split_frame(const DepthFrame& frame, const InstanceMaskFrame& masks,
                                        const ClassTable& table, const SplitParams& params);

}  // namespace splitfusion
