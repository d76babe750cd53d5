#include "splitfusion/nonrigid_icp.hpp"

#include <algorithm>
#include <cmath>

namespace splitfusion {

namespace {

Eigen::Matrix3d skew(const Eigen::Vector3d& a) {
  Eigen::Matrix3d m;
  m << 0, -a.z(), a.y(), a.z(), 0, -a.x(), -a.y(), a.x(), 0;
  return m;
}

}  // namespace

void BlockSparseMatrix::add(int r, int c, const Matrix6d& m) {
  auto [it, inserted] = rows[r].try_emplace(c, m);
  if (!inserted) it->second += m;
}

Eigen::VectorXd BlockSparseMatrix::multiply(const Eigen::VectorXd& x) const {
  Eigen::VectorXd y = Eigen::VectorXd::Zero(6 * num_blocks);
  for (int r = 0; r < num_blocks; ++r) {
    Vector6d acc = Vector6d::Zero();
    for (const auto& [c, m] : rows[r]) acc += m * x.segment<6>(6 * c);
    y.segment<6>(6 * r) = acc;
  }
  return y;
}

Eigen::MatrixXd BlockSparseMatrix::dense() const {
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(6 * num_blocks, 6 * num_blocks);
  for (int r = 0; r < num_blocks; ++r)
    for (const auto& [c, blk] : rows[r]) m.block<6, 6>(6 * r, 6 * c) = blk;
  return m;
}

LiveFrame LiveFrame::from(const DepthFrame& frame) {
  LiveFrame lf;
  lf.intrinsics = frame.intrinsics;
  lf.vertices = compute_vertex_map(frame);
  lf.normals = compute_normal_map(lf.vertices);
  return lf;
}

std::vector<Correspondence> find_correspondences(const PointCloud& model,
                                                 const BlendBinding& binding,
                                                 const DeformationGraph& graph,
                                                 const LiveFrame& live,
                                                 const EnergyParams& params,
                                                 const PixelMask* live_mask) {
  std::vector<Correspondence> corrs;
  corrs.reserve(model.size());
  const double gate2 = params.distance_gate * params.distance_gate;
  for (size_t i = 0; i < model.size(); ++i) {
    if (!model.normal_valid(i) || !binding.bound(i)) continue;
    const NodeWeights& w = binding.weights[i];
    const Eigen::Vector3d v_warp = warp_point(model.vertices[i], w, graph);
    const Eigen::Vector3d n_warp = warp_normal(model.normals[i], w, graph);
    if (n_warp.squaredNorm() < 0.25) continue;
    double u, v;
    if (!project_point(live.intrinsics, v_warp, u, v)) continue;
    const int c = static_cast<int>(std::lround(u));
    const int r = static_cast<int>(std::lround(v));
    if (r < 0 || r >= live.vertices.height || c < 0 || c >= live.vertices.width) continue;
    if (live_mask && !live_mask->test(r, c)) continue;
    const Eigen::Vector3d& v_t = live.vertices.at(r, c);
    if (v_t.z() <= 0.0) continue;
    const Eigen::Vector3d& n_t = live.normals.at(r, c);
    if (n_t.squaredNorm() < 0.25) continue;
    if ((v_warp - v_t).squaredNorm() >= gate2) continue;
    if (n_warp.dot(n_t) <= params.normal_gate) continue;
    corrs.push_back({model.vertices[i], model.normals[i], v_t, static_cast<int>(i)});
  }
  return corrs;
}

double energy_data(const std::vector<Correspondence>& corrs, const BlendBinding& binding,
                   const DeformationGraph& graph) {
  double e = 0.0;
  for (const Correspondence& c : corrs) {
    const NodeWeights& w = binding.weights[c.model_index];
    const Eigen::Vector3d v_warp = warp_point(c.model_vertex, w, graph);
    const Eigen::Vector3d n_warp = warp_normal(c.model_normal, w, graph);
    const double r = n_warp.dot(v_warp - c.target_vertex);
    e += r * r;
  }
  return e;
}

double energy_arap(const DeformationGraph& graph) {
  double e = 0.0;
  for (size_t i = 0; i < graph.nodes.size(); ++i) {
    const GraphNode& ni = graph.nodes[i];
    for (int j : graph.edges[i]) {
      const GraphNode& nj = graph.nodes[j];
      const Eigen::Vector3d r =
          (nj.g + nj.t) - (ni.g + ni.t) - ni.R * (nj.g - ni.g);
      e += graph.edge_weight * r.squaredNorm();
    }
  }
  return e;
}

std::vector<JacobianRow> assemble_rows(const std::vector<Correspondence>& corrs,
                                       const BlendBinding& binding,
                                       const DeformationGraph& graph,
                                       const EnergyParams& params) {
  std::vector<JacobianRow> rows;
  rows.reserve(corrs.size() + 3 * graph.directed_edge_count());

  // data rows: e = n~^T (v~ - v_t); the normalized blended normal is
  // differentiated through as well so the analytic rows match finite
  // differences of the full residual
  for (const Correspondence& c : corrs) {
    const NodeWeights& w = binding.weights[c.model_index];
    Eigen::Vector3d v_warp = Eigen::Vector3d::Zero();
    Eigen::Vector3d s = Eigen::Vector3d::Zero();  // unnormalized blended normal
    for (const auto& [i, wi] : w) {
      const GraphNode& n = graph.nodes[i];
      v_warp += wi * (n.R * (c.model_vertex - n.g) + n.t + n.g);
      s += wi * (n.R * c.model_normal);
    }
    const double slen = s.norm();
    if (slen < 1e-9) continue;
    const Eigen::Vector3d n_hat = s / slen;
    const Eigen::Vector3d d = v_warp - c.target_vertex;

    JacobianRow row;
    row.error = n_hat.dot(d);
    row.blocks.reserve(w.size());
    const Eigen::Vector3d proj = (d - n_hat * n_hat.dot(d)) / slen;  // (I - nn^T) d / |s|
    for (const auto& [i, wi] : w) {
      const GraphNode& n = graph.nodes[i];
      const Eigen::Vector3d a = n.R * (c.model_vertex - n.g);
      const Eigen::Vector3d bvec = n.R * c.model_normal;
      RowBlock6 blk;
      blk.leftCols<3>() = (-wi * (n_hat.cross(a) + proj.cross(bvec))).transpose();
      blk.rightCols<3>() = wi * n_hat.transpose();
      row.blocks.emplace_back(i, blk);
    }
    rows.push_back(std::move(row));
  }

  // ARAP rows: 3 per directed edge, scaled by sqrt(lambda * eps)
  const double scale = std::sqrt(std::max(params.lambda, 0.0) * graph.edge_weight);
  if (scale > 0.0) {
    for (size_t i = 0; i < graph.nodes.size(); ++i) {
      const GraphNode& ni = graph.nodes[i];
      for (int j : graph.edges[i]) {
        const GraphNode& nj = graph.nodes[j];
        const Eigen::Vector3d rel = nj.g - ni.g;
        const Eigen::Vector3d e = (nj.g + nj.t) - (ni.g + ni.t) - ni.R * rel;
        const Eigen::Matrix3d dwi = skew(ni.R * rel);  // d e / d omega_i
        for (int axis = 0; axis < 3; ++axis) {
          JacobianRow row;
          row.error = scale * e[axis];
          RowBlock6 bi = RowBlock6::Zero();
          bi.leftCols<3>() = scale * dwi.row(axis);
          bi.rightCols<3>() = -scale * Eigen::RowVector3d::Unit(axis);
          RowBlock6 bj = RowBlock6::Zero();
          bj.rightCols<3>() = scale * Eigen::RowVector3d::Unit(axis);
          row.blocks.emplace_back(static_cast<int>(i), bi);
          row.blocks.emplace_back(j, bj);
          rows.push_back(std::move(row));
        }
      }
    }
  }
  return rows;
}

NormalEquations build_normal_equations(const std::vector<JacobianRow>& rows, int num_nodes,
                                       double mu) {
  NormalEquations eq{BlockSparseMatrix(num_nodes), Eigen::VectorXd::Zero(6 * num_nodes)};
  for (const JacobianRow& row : rows) {
    for (const auto& [i, bi] : row.blocks) {
      for (const auto& [j, bj] : row.blocks) eq.A.add(i, j, bi.transpose() * bj);
      eq.b.segment<6>(6 * i) += bi.transpose() * (-row.error);
    }
  }
  if (mu > 0.0) {
    for (int i = 0; i < num_nodes; ++i) {
      auto it = eq.A.rows[i].find(i);
      if (it != eq.A.rows[i].end())
        it->second += mu * it->second.diagonal().asDiagonal().toDenseMatrix();
    }
  }
  return eq;
}

NormalEquations build_normal_equations(const std::vector<Correspondence>& corrs,
                                       const BlendBinding& binding,
                                       const DeformationGraph& graph,
                                       const EnergyParams& params, double mu) {
  return build_normal_equations(assemble_rows(corrs, binding, graph, params),
                                static_cast<int>(graph.nodes.size()), mu);
}

PcgResult pcg_solve(const NormalEquations& eqns, const SolverConfig& config) {
  PcgResult res;
  const int n = 6 * eqns.A.num_blocks;
  res.x = Eigen::VectorXd::Zero(n);
  const double bnorm = eqns.b.norm();
  if (bnorm == 0.0) {
    res.converged = true;
    return res;
  }

  // block-Jacobi preconditioner; a tiny ridge keeps unconstrained blocks finite
  std::vector<Matrix6d> pre(eqns.A.num_blocks, Matrix6d::Identity());
  for (int i = 0; i < eqns.A.num_blocks; ++i) {
    const auto it = eqns.A.rows[i].find(i);
    if (it == eqns.A.rows[i].end()) continue;
    Matrix6d blk = it->second;
    const double ridge = std::max(blk.trace(), 1.0) * 1e-12;
    blk += ridge * Matrix6d::Identity();
    pre[i] = blk.ldlt().solve(Matrix6d::Identity());
  }
  auto precondition = [&](const Eigen::VectorXd& v) {
    Eigen::VectorXd out(n);
    for (int i = 0; i < eqns.A.num_blocks; ++i)
      out.segment<6>(6 * i) = pre[i] * v.segment<6>(6 * i);
    return out;
  };

  Eigen::VectorXd r = eqns.b;
  Eigen::VectorXd z = precondition(r);
  Eigen::VectorXd p = z;
  double rz = r.dot(z);
  for (int it = 0; it < config.pcg_max_iterations; ++it) {
    const Eigen::VectorXd Ap = eqns.A.multiply(p);
    const double pAp = p.dot(Ap);
    if (pAp <= 0.0 || !std::isfinite(pAp)) break;
    const double alpha = rz / pAp;
    res.x += alpha * p;
    r -= alpha * Ap;
    res.iterations = it + 1;
    if (r.norm() / bnorm <= config.pcg_tolerance) {
      res.converged = true;
      break;
    }
    z = precondition(r);
    const double rz_new = r.dot(z);
    p = z + (rz_new / rz) * p;
    rz = rz_new;
  }
  res.relative_residual = (eqns.A.multiply(res.x) - eqns.b).norm() / bnorm;
  if (res.relative_residual <= config.pcg_tolerance) res.converged = true;
  return res;
}

namespace {

DeformationGraph apply_step(const DeformationGraph& graph, const Eigen::VectorXd& delta) {
  DeformationGraph out = graph;
  for (size_t i = 0; i < out.nodes.size(); ++i) {
    const Eigen::Vector3d omega = delta.segment<3>(6 * i);
    const Eigen::Vector3d dt = delta.segment<3>(6 * i + 3);
    out.nodes[i].R = orthonormalize_rotation(axis_angle_to_rotation(omega) * out.nodes[i].R);
    out.nodes[i].t += dt;
  }
  return out;
}

}  // namespace

SolveResult solve_warp(const PointCloud& model, DeformationGraph& graph, const LiveFrame& live,
                       const EnergyParams& params, const SolverConfig& config,
                       const PixelMask* live_mask) {
  SolveResult result;
  if (model.size() == 0) {
    result.status = TrackStatus::TrackingLost;
    return result;
  }
  const BlendBinding binding = bind_points(model.vertices, graph);
  const bool use_arap = graph.size() > 1;
  EnergyParams row_params = params;
  if (!use_arap) row_params.lambda = 0.0;

  double mu = config.mu0;
  for (int outer = 0; outer < config.outer_iterations; ++outer) {
    const auto corrs = find_correspondences(model, binding, graph, live, params, live_mask);
    if (static_cast<int>(corrs.size()) < config.min_correspondences) {
      result.status = TrackStatus::TrackingLost;
      return result;
    }
    result.final_corr_count = static_cast<int>(corrs.size());

    for (int inner = 0; inner < config.inner_iterations; ++inner) {
      const auto rows = assemble_rows(corrs, binding, graph, row_params);
      const double e_data = energy_data(corrs, binding, graph);
      const double e_prior = use_arap ? energy_arap(graph) : 0.0;
      const double e_before = e_data + row_params.lambda * e_prior;
      if (!std::isfinite(e_before)) {
        result.status = TrackStatus::NonFiniteEnergy;
        return result;
      }

      IterationDiag diag;
      diag.outer = outer;
      diag.inner = inner;
      diag.e_data = e_data;
      diag.e_prior = e_prior;
      diag.n_corr = static_cast<int>(corrs.size());

      const int num_nodes = static_cast<int>(graph.size());
      bool accepted = false;
      double step_norm = 0.0;
      double mu_try = mu;
      for (int retry = 0; retry <= config.max_step_retries; ++retry) {
        const NormalEquations eqns = build_normal_equations(rows, num_nodes, mu_try);
        if (eqns.b.norm() == 0.0) break;  // stationary point
        const PcgResult sol = pcg_solve(eqns, config);
        if (!sol.x.allFinite()) break;
        const DeformationGraph candidate = apply_step(graph, sol.x);
        const double e_after = energy_data(corrs, binding, candidate) +
                               (use_arap ? row_params.lambda * energy_arap(candidate) : 0.0);
        if (std::isfinite(e_after) && e_after < e_before) {
          graph = candidate;
          step_norm = sol.x.norm();
          accepted = true;
          mu = std::max(config.mu0, mu_try / 10.0);
          break;
        }
        mu_try *= 10.0;
      }
      if (!accepted) mu = mu_try;

      diag.step_norm = step_norm;
      diag.accepted = accepted;
      result.iterations.push_back(diag);
      if (!accepted || step_norm < 1e-10) break;
    }
  }

  {
    const auto corrs = find_correspondences(model, binding, graph, live, params, live_mask);
    result.final_corr_count = static_cast<int>(corrs.size());
    result.final_e_data = energy_data(corrs, binding, graph);
    result.final_e_prior = use_arap ? energy_arap(graph) : 0.0;
  }
  return result;
}

RigidIcpResult rigid_icp(const PointCloud& model, const LiveFrame& live,
                         const RigidTransform& initial, const EnergyParams& params,
                         const SolverConfig& config, const PixelMask* live_mask) {
  RigidIcpResult out;
  DeformationGraph graph = rigid_graph(initial);
  out.solve = solve_warp(model, graph, live, params, config, live_mask);
  out.transform.rotation = graph.nodes[0].R;
  out.transform.translation = graph.nodes[0].t;
  return out;
}

}  // namespace splitfusion
