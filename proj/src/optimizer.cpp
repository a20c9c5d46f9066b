#include "rigcal/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include <Eigen/Dense>

namespace rigcal {

namespace {

constexpr double kMaxDamping = 1e12;

}  // namespace

const char* to_string(Termination t) {
  switch (t) {
    case Termination::kConverged: return "converged";
    case Termination::kMaxIterations: return "max-iters";
    case Termination::kDegenerate: return "degenerate";
  }
  return "unknown";
}

void OptimizerConfig::validate(int n_cameras) const {
  if (max_outer_iters < 1 || max_inner_iters < 1) {
    throw Error(ErrorCode::kInvalidArgument, "iteration limits must be >= 1");
  }
  if (!(lm_lambda0 > 0.0) || !(lm_up > 1.0) || !(lm_down > 0.0 && lm_down < 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "damping must be positive with lm_up > 1 and 0 < lm_down < 1");
  }
  if (!(rel_tol > 0.0) || !(abs_tol > 0.0)) throw Error(ErrorCode::kInvalidArgument, "tolerances must be positive");
  if (gauge_camera < 0 || gauge_camera >= n_cameras) {
    throw Error(ErrorCode::kInvalidArgument, "gauge_camera must be a camera id");
  }
}

Eigen::VectorXd solve_normal_equations(const Eigen::SparseMatrix<double>& jacobian, const Eigen::VectorXd& residual,
                                       double mu) {
  if (jacobian.rows() != residual.size()) {
    throw Error(ErrorCode::kInvalidArgument, "jacobian rows do not match residual length");
  }
  const Eigen::SparseMatrix<double> jt = jacobian.transpose();
  Eigen::MatrixXd a = Eigen::MatrixXd(jt * jacobian);
  const Eigen::VectorXd g = jt * residual;
  a.diagonal() += mu * a.diagonal();

  const double max_diag = a.diagonal().cwiseAbs().maxCoeff();
  Eigen::LLT<Eigen::MatrixXd> llt(a);
  if (llt.info() != Eigen::Success || !(max_diag > 0.0)) {
    throw Error(ErrorCode::kNotPositiveDefinite, "damped normal matrix is not positive definite");
  }
  const Eigen::VectorXd pivots = llt.matrixL().toDenseMatrix().diagonal();
  const double min_pivot2 = pivots.cwiseAbs2().minCoeff();
  if (!(min_pivot2 > 1e-13 * max_diag)) {
    throw Error(ErrorCode::kNotPositiveDefinite, "damped normal matrix is numerically singular");
  }
  return llt.solve(-g);
}

std::vector<RigidTransform> apply_step(const std::vector<RigidTransform>& extrinsics, const Eigen::VectorXd& step,
                                       int gauge_camera) {
  std::vector<RigidTransform> out = extrinsics;
  for (int c = 0; c < static_cast<int>(extrinsics.size()); ++c) {
    const int off = parameter_offset(c, gauge_camera);
    if (off < 0) continue;
    const TangentVector xi = TangentVector::from_vector(step.segment<6>(off));
    RigidTransform t = compose(exp_se3(xi), extrinsics[c]);
    t.rotation = Rotation::nearest(t.rotation.matrix());
    out[c] = t;
  }
  return out;
}

OptResult refine(const CameraRig& rig, const std::vector<RigidTransform>& initial, const ObjectiveConfig& obj_cfg,
                 const OptimizerConfig& opt_cfg) {
  const int n = rig.size();
  obj_cfg.validate(n);
  opt_cfg.validate(n);
  if (static_cast<int>(initial.size()) != n) {
    throw Error(ErrorCode::kCountMismatch, "initial extrinsic count does not match camera count");
  }
  const int gauge = opt_cfg.gauge_camera;

  OptResult res;
  std::vector<RigidTransform> x = initial;
  SampleSet samples = draw_samples(rig, x, obj_cfg);
  ObjectiveValue val = evaluate_objective(rig, x, samples, obj_cfg, true);
  res.initial_l_geo = val.l_geo;
  res.initial_l_cycle = val.l_cycle;
  res.initial_loss = val.total;
  res.trace.push_back({0, 0, val.total});

  double mu = opt_cfg.lm_lambda0;
  bool converged = val.total < opt_cfg.abs_tol;
  bool degenerate = false;

  for (int outer = 1; outer <= opt_cfg.max_outer_iters && !converged; ++outer) {
    const ObjectiveValue val_start = val;
    int accepted = 0;
    ++res.outer_iterations;

    for (int inner = 1; inner <= opt_cfg.max_inner_iters; ++inner) {
      ++res.inner_iterations;
      const StackedSystem sys = stack_jacobian(val.blocks, obj_cfg, n, gauge);
      if (sys.jacobian.rows() == 0) throw Error(ErrorCode::kDegenerateProblem, "no weighted residual rows");
      {
        const Eigen::VectorXd col_norm = Eigen::MatrixXd(sys.jacobian.transpose() * sys.jacobian).diagonal();
        for (int c = 0; c < n; ++c) {
          const int off = parameter_offset(c, gauge);
          if (off >= 0 && col_norm.segment<6>(off).minCoeff() <= 0.0) {
            throw Error(ErrorCode::kSingularNormalEquations,
                        "camera " + std::to_string(c) + " is not constrained by any valid residual");
          }
        }
      }

      bool step_taken = false;
      double rel_decrease = 0.0;
      while (mu <= kMaxDamping) {
        Eigen::VectorXd step;
        try {
          step = solve_normal_equations(sys.jacobian, sys.residual, mu);
        } catch (const Error& e) {
          if (e.code() != ErrorCode::kNotPositiveDefinite) throw;
          mu *= opt_cfg.lm_up;
          continue;
        }
        std::vector<RigidTransform> candidate = apply_step(x, step, gauge);
        ObjectiveValue cand_val;
        bool ok = true;
        try {
          cand_val = evaluate_objective(rig, candidate, samples, obj_cfg, true);
        } catch (const Error& e) {
          if (e.code() != ErrorCode::kDegenerateProblem) throw;
          ok = false;
        }
        if (ok && cand_val.total < val.total) {
          rel_decrease = (val.total - cand_val.total) / val.total;
          x = std::move(candidate);
          val = std::move(cand_val);
          mu = std::max(mu * opt_cfg.lm_down, 1e-15);
          step_taken = true;
          ++accepted;
          res.trace.push_back({outer, inner, val.total});
          break;
        }
        mu *= opt_cfg.lm_up;
      }
      if (!step_taken || rel_decrease < opt_cfg.rel_tol || val.total < opt_cfg.abs_tol) break;
    }

    if (accepted == 0) {
      // Nothing improves on these samples; resampling at the same pose would
      // reproduce them exactly.
      converged = true;
      break;
    }

    // Re-linearize: fresh world points at the new extrinsics.
    SampleSet next_samples = draw_samples(rig, x, obj_cfg);
    ObjectiveValue next_val;
    try {
      next_val = evaluate_objective(rig, x, next_samples, obj_cfg, true);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kDegenerateProblem) throw;
      degenerate = true;
      break;
    }
    const double prev = val_start.total;
    if (next_val.total > prev) {
      // Fresh points no longer confirm progress; keep the pose reached on the
      // previous samples together with its (lower) loss.
      converged = true;
      break;
    }
    samples = std::move(next_samples);
    val = std::move(next_val);
    res.trace.push_back({outer + 1, 0, val.total});
    if (val.total < opt_cfg.abs_tol || (prev - val.total) <= opt_cfg.rel_tol * prev) converged = true;
  }

  res.extrinsics = x;
  res.final_l_geo = val.l_geo;
  res.final_l_cycle = val.l_cycle;
  res.final_loss = val.total;
  res.valid_geo = val.valid_geo;
  res.valid_cycle = val.valid_cycle;
  res.termination = degenerate  ? Termination::kDegenerate
                    : converged ? Termination::kConverged
                                : Termination::kMaxIterations;
  return res;
}

}  // namespace rigcal
