#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include <Eigen/SparseCore>

#include "rigcal/dataset.hpp"
#include "rigcal/geometry.hpp"

namespace rigcal {

/// Camera triple (i, j, k) traversed as i -> j -> k -> i.
struct Triplet {
  int i = 0;
  int j = 0;
  int k = 0;
  bool operator==(const Triplet&) const = default;
};

struct ObjectiveConfig {
  /// Weight of the cycle term in L = L_geo + lambda * L_cycle.
  double lambda = 1.0;
  bool enable_rc = true;
  bool enable_mc = true;
  int m_points_per_pair = 256;
  int s_points = 128;
  /// Ordered (i, j) pairs for the depth term; all ordered pairs when unset.
  std::optional<std::vector<std::pair<int, int>>> pairs;
  /// Cycle triplets; every {i < j < k} when unset.
  std::optional<std::vector<Triplet>> triplets;
  /// Divide cycle residuals by fx of the anchor camera.
  bool pixel_residual_scale = true;
  /// Huber threshold in residual units; <= 0 disables the robust loss.
  double huber_threshold = 0.0;
  std::uint64_t seed = 0;

  /// Throws kInvalidArgument on a broken invariant, including a cycle-only
  /// objective on fewer than three cameras.
  void validate(int n_cameras) const;
};

std::vector<std::pair<int, int>> make_pair_graph(const ObjectiveConfig& cfg, int n_cameras);

/// Validated triplet set; empty for N < 3.
std::vector<Triplet> make_triplets(const ObjectiveConfig& cfg, int n_cameras);

struct GeoCorrespondence {
  int i = 0;
  int j = 0;
  Pixel pixel;
};

struct SampledPoint {
  Vec3 world_point = Vec3::Zero();
  int anchor_camera = 0;
  Pixel anchor_pixel;
};

/// d(residual)/d(xi_c) under the left perturbation T_c <- exp(xi) * T_c.
/// Only the first `dim` rows are meaningful.
struct CameraJacobian {
  int camera = 0;
  Eigen::Matrix<double, 2, 6> d = Eigen::Matrix<double, 2, 6>::Zero();
};

struct ResidualBlock {
  enum class Kind { kGeo, kCycle };
  Kind kind = Kind::kGeo;
  std::array<int, 3> cameras{0, 0, 0};
  int n_cameras = 0;
  /// 1 for geo (meters), 2 for cycle (pixels, or pixels / fx).
  int dim = 1;
  Vec2 residual = Vec2::Zero();
  bool valid = false;
  /// Empty unless requested and the block is valid.
  std::vector<CameraJacobian> jacobian;

  double squared_norm() const { return valid ? residual.head(dim).squaredNorm() : 0.0; }
};

/// Pixels drawn on a seeded jittered grid over each anchor camera, snapped to
/// pixel centers and filtered to valid depth. Throws kNoValidPixels when a
/// camera's depth map has no valid pixel at all.
std::vector<GeoCorrespondence> sample_geo_correspondences(const CameraRig& rig, const ObjectiveConfig& cfg);

/// World points back-projected from camera i's depth with the given extrinsics.
std::vector<SampledPoint> sample_cycle_points(const CameraRig& rig, const std::vector<RigidTransform>& extrinsics,
                                              const Triplet& t, const ObjectiveConfig& cfg);

/// Depth consistency of one pixel of camera i transferred into camera j.
ResidualBlock geo_residual(const CameraRig& rig, const std::vector<RigidTransform>& extrinsics,
                           const GeoCorrespondence& c, bool with_jacobian = false);

/// Closed-loop reprojection error of one world point along i -> j -> k -> i.
ResidualBlock cycle_residual(const CameraRig& rig, const std::vector<RigidTransform>& extrinsics,
                             const Triplet& t, const SampledPoint& p, bool pixel_residual_scale = true,
                             bool with_jacobian = false);

/// Everything the objective needs besides the extrinsics.
struct SampleSet {
  std::vector<GeoCorrespondence> geo;
  std::vector<Triplet> triplets;
  /// cycle_points[t] belongs to triplets[t].
  std::vector<std::vector<SampledPoint>> cycle_points;
};

SampleSet draw_samples(const CameraRig& rig, const std::vector<RigidTransform>& extrinsics,
                       const ObjectiveConfig& cfg);

struct ObjectiveValue {
  double l_geo = 0.0;
  double l_cycle = 0.0;
  double total = 0.0;
  int valid_geo = 0;
  int valid_cycle = 0;
  /// Geo blocks first, then cycle blocks, in sample order.
  std::vector<ResidualBlock> blocks;
};

/// Evaluates every block in order and sums them sequentially. Throws
/// kDegenerateProblem when no block is valid.
ObjectiveValue evaluate_objective(const CameraRig& rig, const std::vector<RigidTransform>& extrinsics,
                                  const SampleSet& samples, const ObjectiveConfig& cfg, bool with_jacobian = false);

/// draw_samples followed by evaluate_objective.
ObjectiveValue total_objective(const CameraRig& rig, const std::vector<RigidTransform>& extrinsics,
                               const ObjectiveConfig& cfg);

/// Robust weight applied to a block's residual (1 without Huber).
double block_weight(const ResidualBlock& b, const ObjectiveConfig& cfg);

/// Weighted stacked system. Columns are 6 per non-gauge camera, ordered by
/// camera id; cycle rows carry sqrt(lambda).
struct StackedSystem {
  Eigen::SparseMatrix<double> jacobian;
  Eigen::VectorXd residual;
};

/// Maps camera id to its first column, or -1 for the gauge camera.
int parameter_offset(int camera, int gauge_camera);

StackedSystem stack_jacobian(const std::vector<ResidualBlock>& blocks, const ObjectiveConfig& cfg, int n_cameras,
                             int gauge_camera);

}  // namespace rigcal
