#pragma once

#include <map>
#include <string>
#include <vector>

#include "splitfusion/core_geometry.hpp"
#include "splitfusion/deformation_graph.hpp"

namespace splitfusion {

using Matrix6d = Eigen::Matrix<double, 6, 6>;
using Vector6d = Eigen::Matrix<double, 6, 1>;
using RowBlock6 = Eigen::Matrix<double, 1, 6>;

struct Correspondence {
  Eigen::Vector3d model_vertex;   // canonical v_m
  Eigen::Vector3d model_normal;   // canonical n_m, unit
  Eigen::Vector3d target_vertex;  // live camera frame v_t
  int model_index = -1;           // into the model cloud / binding
};

struct EnergyParams {
  double lambda = 5.0;                   // ARAP weight
  double distance_gate = 0.10;           // meters
  double normal_gate = 0.5;              // cosine threshold, cos(60 deg)
};

struct SolverConfig {
  int outer_iterations = 4;
  int inner_iterations = 3;
  int pcg_max_iterations = 200;
  double pcg_tolerance = 1e-6;
  double mu0 = 1e-4;  // initial Levenberg damping
  int max_step_retries = 5;
  int min_correspondences = 10;
};

// Symmetric 6x6-block sparse matrix; per-row ordered column maps keep the
// assembly and matvec deterministic.
struct BlockSparseMatrix {
  int num_blocks = 0;
  std::vector<std::map<int, Matrix6d>> rows;

  explicit BlockSparseMatrix(int n = 0) : num_blocks(n), rows(n) {}
  void add(int r, int c, const Matrix6d& m);
  Eigen::VectorXd multiply(const Eigen::VectorXd& x) const;
  Eigen::MatrixXd dense() const;
};

struct NormalEquations {
  BlockSparseMatrix A;  // J^T J + mu * diag(J^T J)
  Eigen::VectorXd b;    // J^T r with r = -(error vector)
};

// Live-frame lookup maps for projective association.
struct LiveFrame {
  CameraIntrinsics intrinsics;
  Image<Eigen::Vector3d> vertices;
  Image<Eigen::Vector3d> normals;

  static LiveFrame from(const DepthFrame& frame);
};

// Projective association of the warped canonical model against the live maps;
// pairs store canonical quantities. live_mask (optional) restricts target
// pixels to the surface's segment.
std::vector<Correspondence> find_correspondences(const PointCloud& model,
                                                 const BlendBinding& binding,
                                                 const DeformationGraph& graph,
                                                 const LiveFrame& live,
                                                 const EnergyParams& params,
                                                 const PixelMask* live_mask = nullptr);

// Point-to-plane cost on warped model quantities: sum of (n~^T (v~ - v_t))^2.
double energy_data(const std::vector<Correspondence>& corrs, const BlendBinding& binding,
                   const DeformationGraph& graph);

// Embedded-deformation regularizer:
// sum_i sum_{j in N_i} eps * || (g_j + t_j) - (g_i + t_i) - R_i (g_j - g_i) ||^2
double energy_arap(const DeformationGraph& graph);

// One scalar Jacobian row: error value e and per-node 1x6 gradient blocks
// with respect to (omega_i, dt_i). ARAP edges contribute 3 rows scaled by
// sqrt(lambda * eps).
struct JacobianRow {
  double error = 0.0;
  std::vector<std::pair<int, RowBlock6>> blocks;
};

std::vector<JacobianRow> assemble_rows(const std::vector<Correspondence>& corrs,
                                       const BlendBinding& binding,
                                       const DeformationGraph& graph,
                                       const EnergyParams& params);

NormalEquations build_normal_equations(const std::vector<Correspondence>& corrs,
                                       const BlendBinding& binding,
                                       const DeformationGraph& graph,
                                       const EnergyParams& params, double mu);
NormalEquations build_normal_equations(const std::vector<JacobianRow>& rows, int num_nodes,
                                       double mu);

struct PcgResult {
  Eigen::VectorXd x;
  int iterations = 0;
  bool converged = false;
  double relative_residual = 0.0;
};

// Preconditioned conjugate gradient with a 6x6 block-Jacobi preconditioner.
PcgResult pcg_solve(const NormalEquations& eqns, const SolverConfig& config);

enum class TrackStatus { Ok, TrackingLost, NonFiniteEnergy };

struct IterationDiag {
  int outer = 0;
  int inner = 0;
  double e_data = 0.0;
  double e_prior = 0.0;
  int n_corr = 0;
  double step_norm = 0.0;
  bool accepted = false;
};

struct SolveResult {
  TrackStatus status = TrackStatus::Ok;
  std::vector<IterationDiag> iterations;
  double final_e_data = 0.0;
  double final_e_prior = 0.0;
  int final_corr_count = 0;
};

// Outer loop re-associates, inner loop applies damped Gauss-Newton steps with
// the decrease-only acceptance rule. Updates graph node parameters in place.
SolveResult solve_warp(const PointCloud& model, DeformationGraph& graph, const LiveFrame& live,
                       const EnergyParams& params, const SolverConfig& config,
                       const PixelMask* live_mask = nullptr);

struct RigidIcpResult {
  RigidTransform transform;
  SolveResult solve;
};

// Single-node specialization; the ARAP term vanishes with no edges.
RigidIcpResult rigid_icp(const PointCloud& model, const LiveFrame& live,
                         const RigidTransform& initial, const EnergyParams& params,
                         const SolverConfig& config, const PixelMask* live_mask = nullptr);

}  // namespace splitfusion
