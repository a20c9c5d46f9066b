#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rigcal/geometry.hpp"

namespace rigcal {

/// Re-expresses `est` in the frame of `ref` through poses relative to the
/// gauge camera: est'_i = (est_i * est_g^-1) * ref_g. Throws kCountMismatch.
std::vector<RigidTransform> gauge_align(const std::vector<RigidTransform>& est,
                                        const std::vector<RigidTransform>& ref, int gauge_camera = 0);

/// Geodesic angle between two rotations, degrees.
double rotation_error_deg(const Rotation& est, const Rotation& ref);

/// Euclidean distance between translations given in meters, millimeters.
double translation_error_mm(const Vec3& est, const Vec3& ref);

struct CameraError {
  int camera_id = 0;
  double rot_error_deg = 0.0;
  double trans_error_mm = 0.0;
};

struct CalibrationReport {
  /// One of full, no_rc, no_mc, original.
  std::string variant;
  std::uint64_t seed = 0;
  /// Every camera except the gauge camera.
  std::vector<CameraError> cameras;
  double l_geo = 0.0;
  double l_cycle = 0.0;

  double mean_rot_deg() const;
  double max_rot_deg() const;
  double mean_trans_mm() const;
  double max_trans_mm() const;
};

CalibrationReport make_report(const std::vector<RigidTransform>& est, const std::vector<RigidTransform>& ref,
                              const std::string& variant, std::uint64_t seed, int gauge_camera = 0);

struct AblationRow {
  std::string variant;
  int n_reports = 0;
  double mean_rot_deg = 0.0;
  double mean_trans_mm = 0.0;
};

/// Per-variant means over reports, in the order of `variants`. Throws
/// kEmptyVariant if a listed variant has no report.
std::vector<AblationRow> ablation_summary(const std::vector<CalibrationReport>& reports,
                                          const std::vector<std::string>& variants);

/// Same, over the variants present, in first-seen order.
std::vector<AblationRow> ablation_summary(const std::vector<CalibrationReport>& reports);

inline constexpr const char* kReportCsvHeader = "variant,seed,camera_id,rot_error_deg,trans_error_mm";

/// Header, then per report: one row per camera and "mean"/"max" rows.
std::string report_csv(const std::vector<CalibrationReport>& reports);

/// report_csv followed by one summary row per variant with seed "all" and
/// camera_id "mean".
std::string ablation_csv(const std::vector<CalibrationReport>& reports, const std::vector<AblationRow>& summary);

}  // namespace rigcal
