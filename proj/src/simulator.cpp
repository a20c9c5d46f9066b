#include "rigcal/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <set>
#include <string>

#include "rigcal/rng.hpp"

namespace rigcal::sim {

using nlohmann::json;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::optional<double> hit_room(const AlignedBox& room, const Vec3& o, const Vec3& d) {
  double best = kInf;
  for (int a = 0; a < 3; ++a) {
    if (d(a) > 0.0) best = std::min(best, (room.max(a) - o(a)) / d(a));
    if (d(a) < 0.0) best = std::min(best, (room.min(a) - o(a)) / d(a));
  }
  if (!(best > 0.0) || best == kInf) return std::nullopt;
  return best;
}

std::optional<double> hit_box(const AlignedBox& box, const Vec3& o, const Vec3& d) {
  double t_near = -kInf;
  double t_far = kInf;
  for (int a = 0; a < 3; ++a) {
    if (d(a) == 0.0) {
      if (o(a) < box.min(a) || o(a) > box.max(a)) return std::nullopt;
      continue;
    }
    double t0 = (box.min(a) - o(a)) / d(a);
    double t1 = (box.max(a) - o(a)) / d(a);
    if (t0 > t1) std::swap(t0, t1);
    t_near = std::max(t_near, t0);
    t_far = std::min(t_far, t1);
  }
  if (t_near > t_far || !(t_near > 0.0)) return std::nullopt;
  return t_near;
}

std::optional<double> hit_sphere(const Sphere& s, const Vec3& o, const Vec3& d) {
  const Vec3 oc = o - s.center;
  const double b = d.dot(oc);
  const double c = oc.squaredNorm() - s.radius * s.radius;
  const double disc = b * b - c;
  if (disc < 0.0) return std::nullopt;
  const double t = -b - std::sqrt(disc);
  if (!(t > 0.0)) return std::nullopt;
  return t;
}

// ---- JSON helpers -------------------------------------------------------

[[noreturn]] void field_error(const std::string& field, const std::string& what) {
  throw Error(ErrorCode::kMalformedJson, "sim config field '" + field + "' " + what);
}

void check_keys(const json& obj, const std::string& prefix, std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) field_error(prefix, "must be an object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (!ok.count(it.key())) field_error(prefix.empty() ? it.key() : prefix + "." + it.key(), "is not recognised");
  }
}

void read_number(const json& obj, const char* key, const std::string& prefix, double& out) {
  if (!obj.contains(key)) return;
  if (!obj.at(key).is_number()) field_error(prefix + "." + key, "must be a number");
  out = obj.at(key).get<double>();
}

void read_int(const json& obj, const char* key, const std::string& prefix, int& out) {
  if (!obj.contains(key)) return;
  if (!obj.at(key).is_number_integer()) field_error(prefix + "." + key, "must be an integer");
  out = obj.at(key).get<int>();
}

Vec3 read_vec3(const json& v, const std::string& field) {
  if (!v.is_array() || v.size() != 3 || !std::all_of(v.begin(), v.end(), [](const json& e) { return e.is_number(); })) {
    field_error(field, "must be an array of 3 numbers");
  }
  return {v[0].get<double>(), v[1].get<double>(), v[2].get<double>()};
}

json vec3_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

AlignedBox read_box(const json& j, const std::string& field) {
  check_keys(j, field, {"min", "max"});
  if (!j.contains("min") || !j.contains("max")) field_error(field, "needs 'min' and 'max'");
  return {read_vec3(j.at("min"), field + ".min"), read_vec3(j.at("max"), field + ".max")};
}

}  // namespace

void Scene::validate() const {
  if (!((room.max - room.min).array() > 0.0).all()) {
    throw Error(ErrorCode::kInvalidArgument, "room extents must be positive");
  }
  for (std::size_t i = 0; i < spheres.size(); ++i) {
    const auto& s = spheres[i];
    const bool inside = s.radius > 0.0 && ((s.center.array() - s.radius) >= room.min.array()).all() &&
                        ((s.center.array() + s.radius) <= room.max.array()).all();
    if (!inside) throw Error(ErrorCode::kInvalidArgument, "sphere " + std::to_string(i) + " is not inside the room");
  }
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    const auto& b = boxes[i];
    const bool inside = ((b.max - b.min).array() > 0.0).all() && (b.min.array() >= room.min.array()).all() &&
                        (b.max.array() <= room.max.array()).all();
    if (!inside) throw Error(ErrorCode::kInvalidArgument, "box " + std::to_string(i) + " is not inside the room");
  }
}

bool Scene::is_free(const Vec3& p) const {
  if (!((p.array() > room.min.array()).all() && (p.array() < room.max.array()).all())) return false;
  for (const auto& s : spheres)
    if ((p - s.center).norm() <= s.radius) return false;
  for (const auto& b : boxes)
    if (b.contains(p)) return false;
  return true;
}

void NoiseModel::validate() const {
  if (!(depth_sigma_rel >= 0.0) || !(rot_perturb_deg >= 0.0) || !(trans_perturb_m >= 0.0) || !(dropout_rate >= 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "noise parameters must be non-negative");
  }
  if (!(dropout_rate < 1.0)) throw Error(ErrorCode::kInvalidArgument, "dropout_rate must be < 1");
}

void RigLayout::validate() const {
  if (n_cameras < 2) throw Error(ErrorCode::kInvalidArgument, "n_cameras must be >= 2");
  if (!(radius > 0.0)) throw Error(ErrorCode::kInvalidArgument, "layout radius must be positive");
  intrinsics.validate();
}

std::optional<double> cast_ray(const Scene& scene, const Vec3& origin, const Vec3& dir) {
  if (std::abs(dir.norm() - 1.0) > 1e-9) {
    throw Error(ErrorCode::kInvalidArgument, "ray direction must be unit length");
  }
  std::optional<double> best = hit_room(scene.room, origin, dir);
  const auto consider = [&best](std::optional<double> t) {
    if (t && (!best || *t < *best)) best = t;
  };
  for (const auto& s : scene.spheres) consider(hit_sphere(s, origin, dir));
  for (const auto& b : scene.boxes) consider(hit_box(b, origin, dir));
  return best;
}

DepthMap render_depth(const Scene& scene, const CameraIntrinsics& k, const RigidTransform& t) {
  k.validate();
  const Vec3 center = t.center();
  if (!scene.is_free(center)) {
    throw Error(ErrorCode::kCameraOutsideScene, "camera center is not inside free room space");
  }
  const Mat3 rt = t.rotation.matrix().transpose();
  DepthMap depth(k.width, k.height);
  for (int y = 0; y < k.height; ++y) {
    for (int x = 0; x < k.width; ++x) {
      const Vec3 ray_cam((x - k.cx) / k.fx, (y - k.cy) / k.fy, 1.0);
      const Vec3 dir = (rt * ray_cam).normalized();
      const auto hit = cast_ray(scene, center, dir);
      if (!hit) {
        depth.at(x, y) = std::numeric_limits<float>::quiet_NaN();
        continue;
      }
      const Vec3 p_cam = t.apply(center + *hit * dir);
      depth.at(x, y) = static_cast<float>(p_cam.z());
    }
  }
  return depth;
}

RigidTransform look_at(const Vec3& center, const Vec3& target) {
  const Vec3 forward = (target - center).normalized();
  Vec3 up(0.0, 0.0, 1.0);
  if (forward.cross(up).norm() < 1e-9) up = Vec3(1.0, 0.0, 0.0);
  const Vec3 right = forward.cross(up).normalized();
  const Vec3 down = forward.cross(right);
  Mat3 r;
  r.row(0) = right.transpose();
  r.row(1) = down.transpose();
  r.row(2) = forward.transpose();
  RigidTransform t;
  t.rotation = Rotation::nearest(r);
  t.translation = -(t.rotation * center);
  return t;
}

std::vector<RigidTransform> layout_extrinsics(const RigLayout& layout, const Scene& scene) {
  layout.validate();
  const Vec3 target = layout.look_at.value_or(0.5 * (scene.room.min + scene.room.max));
  std::vector<RigidTransform> out;
  for (int c = 0; c < layout.n_cameras; ++c) {
    const double az = (layout.start_angle_deg + 360.0 * c / layout.n_cameras) * std::numbers::pi / 180.0;
    const Vec3 center(target.x() + layout.radius * std::cos(az), target.y() + layout.radius * std::sin(az),
                      layout.height);
    out.push_back(look_at(center, target));
  }
  return out;
}

std::vector<RigidTransform> perturb_extrinsics(const std::vector<RigidTransform>& gt, const NoiseModel& noise,
                                               int gauge_camera) {
  noise.validate();
  const double rot_sigma = noise.rot_perturb_deg * std::numbers::pi / 180.0;
  std::vector<RigidTransform> out = gt;
  if (noise.rot_perturb_deg == 0.0 && noise.trans_perturb_m == 0.0) return out;
  for (std::size_t c = 0; c < gt.size(); ++c) {
    if (static_cast<int>(c) == gauge_camera) continue;
    Rng rng = Rng::stream(noise.seed, "extrinsic_perturbation", c);
    TangentVector delta;
    for (int a = 0; a < 3; ++a) delta.omega(a) = rot_sigma * rng.normal();
    for (int a = 0; a < 3; ++a) delta.v(a) = noise.trans_perturb_m * rng.normal();
    out[c] = compose(exp_se3(delta), gt[c]);
    out[c].rotation = Rotation::nearest(out[c].rotation.matrix());
  }
  return out;
}

DepthMap apply_depth_noise(const DepthMap& clean, const NoiseModel& noise, int camera_id) {
  noise.validate();
  DepthMap out = clean;
  if (noise.depth_sigma_rel > 0.0) {
    Rng rng = Rng::stream(noise.seed, "depth_noise", static_cast<std::uint64_t>(camera_id));
    for (float& d : out.values) {
      const double n = rng.normal();
      if (DepthMap::is_valid(d)) d = static_cast<float>(d * (1.0 + noise.depth_sigma_rel * n));
    }
  }
  if (noise.dropout_rate > 0.0) {
    Rng rng = Rng::stream(noise.seed, "dropout", static_cast<std::uint64_t>(camera_id));
    for (float& d : out.values) {
      if (rng.uniform() < noise.dropout_rate) d = std::numeric_limits<float>::quiet_NaN();
    }
  }
  return out;
}

std::vector<DepthMap> render_clean_depths(const RigLayout& layout, const Scene& scene) {
  scene.validate();
  const auto gt = layout_extrinsics(layout, scene);
  std::vector<DepthMap> out;
  for (const auto& t : gt) out.push_back(render_depth(scene, layout.intrinsics, t));
  return out;
}

CameraRig generate_dataset(const RigLayout& layout, const Scene& scene, const NoiseModel& noise) {
  scene.validate();
  noise.validate();
  const auto gt = layout_extrinsics(layout, scene);
  const auto init = perturb_extrinsics(gt, noise);
  CameraRig rig;
  for (int c = 0; c < layout.n_cameras; ++c) {
    CameraRecord rec;
    rec.id = c;
    rec.intrinsics = layout.intrinsics;
    rec.gt_extrinsic = gt[c];
    rec.init_extrinsic = init[c];
    rec.depth_file = "depth_" + std::to_string(c) + ".bin";
    rig.cameras.push_back(rec);
    rig.depth_maps.push_back(apply_depth_noise(render_depth(scene, layout.intrinsics, gt[c]), noise, c));
  }
  return rig;
}

double covisible_fraction(const CameraRig& rig, const std::vector<RigidTransform>& extrinsics, int i, int j,
                          double rel_tol) {
  const auto& ki = rig.cameras[i].intrinsics;
  const auto& kj = rig.cameras[j].intrinsics;
  const auto& di = rig.depth_maps[i];
  const auto& dj = rig.depth_maps[j];
  const RigidTransform t_ji = relative_transform(extrinsics[i], extrinsics[j]);
  std::size_t seen = 0;
  for (int y = 0; y < di.height; ++y) {
    for (int x = 0; x < di.width; ++x) {
      if (!di.valid_at(x, y)) continue;
      const Vec3 p = t_ji.apply(backproject(ki, {double(x), double(y)}, di.at(x, y)));
      if (p.z() <= kMinProjectDepth) continue;
      const auto d = sample_depth(dj, project(kj, p));
      if (d && std::abs(*d - p.z()) <= rel_tol * p.z()) ++seen;
    }
  }
  return static_cast<double>(seen) / (static_cast<double>(di.width) * di.height);
}

SimConfig sim_config_from_json(const json& j) {
  SimConfig cfg;
  check_keys(j, "", {"scene", "layout", "noise"});
  if (j.contains("scene")) {
    const json& s = j.at("scene");
    check_keys(s, "scene", {"room", "spheres", "boxes"});
    if (s.contains("room")) cfg.scene.room = read_box(s.at("room"), "scene.room");
    if (s.contains("spheres")) {
      if (!s.at("spheres").is_array()) field_error("scene.spheres", "must be an array");
      for (std::size_t i = 0; i < s.at("spheres").size(); ++i) {
        const std::string f = "scene.spheres[" + std::to_string(i) + "]";
        const json& e = s.at("spheres")[i];
        check_keys(e, f, {"center", "radius"});
        if (!e.contains("center") || !e.contains("radius")) field_error(f, "needs 'center' and 'radius'");
        Sphere sp;
        sp.center = read_vec3(e.at("center"), f + ".center");
        read_number(e, "radius", f, sp.radius);
        cfg.scene.spheres.push_back(sp);
      }
    }
    if (s.contains("boxes")) {
      if (!s.at("boxes").is_array()) field_error("scene.boxes", "must be an array");
      for (std::size_t i = 0; i < s.at("boxes").size(); ++i) {
        cfg.scene.boxes.push_back(read_box(s.at("boxes")[i], "scene.boxes[" + std::to_string(i) + "]"));
      }
    }
  }
  if (j.contains("layout")) {
    const json& l = j.at("layout");
    check_keys(l, "layout", {"n_cameras", "radius", "height", "start_angle_deg", "look_at", "intrinsics"});
    read_int(l, "n_cameras", "layout", cfg.layout.n_cameras);
    read_number(l, "radius", "layout", cfg.layout.radius);
    read_number(l, "height", "layout", cfg.layout.height);
    read_number(l, "start_angle_deg", "layout", cfg.layout.start_angle_deg);
    if (l.contains("look_at")) cfg.layout.look_at = read_vec3(l.at("look_at"), "layout.look_at");
    if (l.contains("intrinsics")) {
      const json& k = l.at("intrinsics");
      check_keys(k, "layout.intrinsics", {"fx", "fy", "cx", "cy", "width", "height"});
      auto& in = cfg.layout.intrinsics;
      read_number(k, "fx", "layout.intrinsics", in.fx);
      read_number(k, "fy", "layout.intrinsics", in.fy);
      read_number(k, "cx", "layout.intrinsics", in.cx);
      read_number(k, "cy", "layout.intrinsics", in.cy);
      read_int(k, "width", "layout.intrinsics", in.width);
      read_int(k, "height", "layout.intrinsics", in.height);
    }
  }
  if (j.contains("noise")) {
    const json& n = j.at("noise");
    check_keys(n, "noise", {"depth_sigma_rel", "rot_perturb_deg", "trans_perturb_m", "dropout_rate", "seed"});
    read_number(n, "depth_sigma_rel", "noise", cfg.noise.depth_sigma_rel);
    read_number(n, "rot_perturb_deg", "noise", cfg.noise.rot_perturb_deg);
    read_number(n, "trans_perturb_m", "noise", cfg.noise.trans_perturb_m);
    read_number(n, "dropout_rate", "noise", cfg.noise.dropout_rate);
    if (n.contains("seed")) {
      if (!n.at("seed").is_number_unsigned()) field_error("noise.seed", "must be a non-negative integer");
      cfg.noise.seed = n.at("seed").get<std::uint64_t>();
    }
  }
  return cfg;
}

json sim_config_to_json(const SimConfig& cfg) {
  json spheres = json::array();
  for (const auto& s : cfg.scene.spheres) spheres.push_back({{"center", vec3_json(s.center)}, {"radius", s.radius}});
  json boxes = json::array();
  for (const auto& b : cfg.scene.boxes) boxes.push_back({{"min", vec3_json(b.min)}, {"max", vec3_json(b.max)}});
  const auto& k = cfg.layout.intrinsics;
  json layout = {
      {"n_cameras", cfg.layout.n_cameras},
      {"radius", cfg.layout.radius},
      {"height", cfg.layout.height},
      {"start_angle_deg", cfg.layout.start_angle_deg},
      {"intrinsics", {{"fx", k.fx}, {"fy", k.fy}, {"cx", k.cx}, {"cy", k.cy}, {"width", k.width}, {"height", k.height}}},
  };
  if (cfg.layout.look_at) layout["look_at"] = vec3_json(*cfg.layout.look_at);
  return {
      {"scene",
       {{"room", {{"min", vec3_json(cfg.scene.room.min)}, {"max", vec3_json(cfg.scene.room.max)}}},
        {"spheres", spheres},
        {"boxes", boxes}}},
      {"layout", layout},
      {"noise",
       {{"depth_sigma_rel", cfg.noise.depth_sigma_rel},
        {"rot_perturb_deg", cfg.noise.rot_perturb_deg},
        {"trans_perturb_m", cfg.noise.trans_perturb_m},
        {"dropout_rate", cfg.noise.dropout_rate},
        {"seed", cfg.noise.seed}}},
  };
}

}  // namespace rigcal::sim
