#pragma once

#include <string>
#include <vector>

#include <Eigen/SparseCore>

#include "rigcal/dataset.hpp"
#include "rigcal/residuals.hpp"

namespace rigcal {

struct OptimizerConfig {
  int max_outer_iters = 10;
  int max_inner_iters = 20;
  double lm_lambda0 = 1e-4;
  double lm_up = 10.0;
  double lm_down = 0.1;
  double rel_tol = 1e-8;
  double abs_tol = 1e-12;
  int gauge_camera = 0;

  void validate(int n_cameras) const;
};

/// kDegenerate: a resample left no valid block; the last good pose is kept.
enum class Termination { kConverged, kMaxIterations, kDegenerate };
const char* to_string(Termination t);

struct LossTraceEntry {
  int outer = 0;
  int inner = 0;
  double loss = 0.0;
};

struct OptResult {
  std::vector<RigidTransform> extrinsics;
  /// Accepted losses; entries with inner == 0 are the values at the start of
  /// each outer iteration (fresh samples).
  std::vector<LossTraceEntry> trace;
  double initial_l_geo = 0.0;
  double initial_l_cycle = 0.0;
  double initial_loss = 0.0;
  double final_l_geo = 0.0;
  double final_l_cycle = 0.0;
  double final_loss = 0.0;
  Termination termination = Termination::kMaxIterations;
  /// Outer iterations that ran at least one linear solve.
  int outer_iterations = 0;
  int inner_iterations = 0;
  int valid_geo = 0;
  int valid_cycle = 0;
};

/// Solves (J^T J + mu diag(J^T J)) step = -J^T r by Cholesky. Throws
/// kNotPositiveDefinite when the damped matrix is not numerically SPD.
Eigen::VectorXd solve_normal_equations(const Eigen::SparseMatrix<double>& jacobian, const Eigen::VectorXd& residual,
                                       double mu);

/// Levenberg-Marquardt over SE(3)^(N-1) with the gauge camera held fixed.
///
/// Each outer iteration draws samples at the current extrinsics (same pixels,
/// fresh world points) and runs up to max_inner_iters damped steps on them. A
/// step is kept only if it lowers the loss on the current samples. When the
/// fresh samples of the next outer iteration score above the previous start
/// loss, the run stops at the pose already reached, so the reported final
/// loss never exceeds the initial loss.
///
/// Throws kDegenerateProblem when nothing is observable and
/// kSingularNormalEquations when some camera has no valid residual.
OptResult refine(const CameraRig& rig, const std::vector<RigidTransform>& initial, const ObjectiveConfig& obj_cfg,
                 const OptimizerConfig& opt_cfg);

inline OptResult refine(const CameraRig& rig, const ObjectiveConfig& obj_cfg, const OptimizerConfig& opt_cfg) {
  return refine(rig, rig.init_extrinsics(), obj_cfg, opt_cfg);
}

/// T_c <- exp(step_c) * T_c for every non-gauge camera, then re-orthonormalized.
std::vector<RigidTransform> apply_step(const std::vector<RigidTransform>& extrinsics, const Eigen::VectorXd& step,
                                       int gauge_camera);

}  // namespace rigcal
