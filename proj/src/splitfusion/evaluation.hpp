#pragma once

#include "splitfusion/dataset_io.hpp"

namespace splitfusion {

struct AteReport {
  double rmse = 0.0;
  double mean = 0.0;
  double median = 0.0;
  double max = 0.0;
  std::vector<double> errors;  // per matched frame
  RigidTransform alignment;    // maps estimated positions onto the reference
  size_t matched_pairs = 0;
};

// Closed-form least-squares rigid alignment (no scale) of estimated positions
// onto reference positions; poses matched by nearest timestamp within
// `tolerance`. Throws when fewer than 3 pairs match.
RigidTransform align_trajectories(const Trajectory& estimated, const Trajectory& reference,
                                  double tolerance = 0.02);

AteReport ate_rmse(const Trajectory& estimated, const Trajectory& reference,
                   double tolerance = 0.02);

}  // namespace splitfusion
