#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "rigcal/geometry.hpp"

namespace rigcal {

struct CameraRecord {
  int id = 0;
  CameraIntrinsics intrinsics;
  RigidTransform init_extrinsic;
  std::optional<RigidTransform> gt_extrinsic;
  std::string depth_file;
};

/// A full problem instance: cameras ordered by id, one depth map per camera.
/// Depth is always in meters.
struct CameraRig {
  std::vector<CameraRecord> cameras;
  std::vector<DepthMap> depth_maps;

  int size() const { return static_cast<int>(cameras.size()); }
  bool has_ground_truth() const;
  std::vector<RigidTransform> init_extrinsics() const;
  /// Throws kInvalidArgument naming the first camera without ground truth.
  std::vector<RigidTransform> gt_extrinsics() const;

  /// Checks contiguous ids, valid intrinsics and depth dimensions.
  void validate() const;
};

/// Refined extrinsics plus the losses and settings that produced them.
struct EstimateFile {
  std::vector<RigidTransform> extrinsics;
  double l_geo = 0.0;
  double l_cycle = 0.0;
  double loss = 0.0;
  int iterations = 0;
  std::string termination;
  nlohmann::json config = nlohmann::json::object();
};

inline constexpr double kRotationLoadTolerance = 1e-6;

CameraRig load_rig(const std::filesystem::path& dir);
void save_rig(const CameraRig& rig, const std::filesystem::path& dir);

/// Depth binary: "GMACD1 <w> <h>\n" then w*h little-endian float32, row-major.
DepthMap read_depth_file(const std::filesystem::path& file);
void write_depth_file(const DepthMap& depth, const std::filesystem::path& file);

void save_estimate(const EstimateFile& est, const std::filesystem::path& file);
EstimateFile load_estimate(const std::filesystem::path& file);

/// Deterministic JSON text: sorted keys, two-space indent, doubles printed
/// with 17 significant digits.
std::string to_json_text(const nlohmann::json& j);

nlohmann::json transform_to_json(const RigidTransform& t);
/// Throws kMalformedJson on shape errors and kNotARotation when the rotation
/// is farther than 1e-6 from SO(3).
RigidTransform transform_from_json(const nlohmann::json& j, const std::string& context);

}  // namespace rigcal
