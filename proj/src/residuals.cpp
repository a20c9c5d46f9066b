#include "rigcal/residuals.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <string>
#include <tuple>

#include "rigcal/rng.hpp"

namespace rigcal {

namespace {

// Derivative of a 3-vector with respect to the (up to three) cameras of one
// block, 6 columns per local slot.
using PointJac = Eigen::Matrix<double, 3, 18>;
using PixelJac = Eigen::Matrix<double, 2, 18>;
using ScalarJac = Eigen::Matrix<double, 1, 18>;

Eigen::Matrix<double, 3, 6> left_perturbation(const Vec3& p) {
  Eigen::Matrix<double, 3, 6> m;
  m << -hat(p), Mat3::Identity();
  return m;
}

// p = T W, with W depending on the parameters through dW.
void forward(const RigidTransform& t, int slot, const Vec3& w, const PointJac& dw, Vec3& p, PointJac& dp) {
  p = t.apply(w);
  dp = t.rotation.matrix() * dw;
  dp.middleCols<6>(6 * slot) += left_perturbation(p);
}

// W = T^-1 q, with q depending on the parameters through dq.
void inverse(const RigidTransform& t, int slot, const Vec3& q, const PointJac& dq, Vec3& w, PointJac& dw) {
  const Mat3 rt = t.rotation.matrix().transpose();
  w = rt * (q - t.translation);
  dw = rt * dq;
  Eigen::Matrix<double, 3, 6> local;
  local << hat(q), -Mat3::Identity();
  dw.middleCols<6>(6 * slot) += rt * local;
}

Eigen::Matrix<double, 2, 3> projection_jacobian(const CameraIntrinsics& k, const Vec3& p) {
  const double iz = 1.0 / p.z();
  Eigen::Matrix<double, 2, 3> j;
  j << k.fx * iz, 0.0, -k.fx * p.x() * iz * iz,
       0.0, k.fy * iz, -k.fy * p.y() * iz * iz;
  return j;
}

// One projection / depth lookup / back-projection hop. Returns false when the
// point is behind the camera, leaves the image or lands on invalid depth.
bool reproject_through_depth(const CameraIntrinsics& k, const DepthMap& depth, const Vec3& p, const PointJac& dp,
                             Vec3& q, PointJac& dq) {
  if (p.z() <= kMinProjectDepth) return false;
  const Pixel u = project(k, p);
  const auto s = sample_depth_with_gradient(depth, u);
  if (!s) return false;
  const PixelJac du = projection_jacobian(k, p) * dp;
  const ScalarJac dd = s->gradient.transpose() * du;
  q = backproject(k, u, s->depth);
  Eigen::Matrix<double, 3, 2> dq_du;
  dq_du << s->depth / k.fx, 0.0, 0.0, s->depth / k.fy, 0.0, 0.0;
  const Vec3 dq_dd((u.u - k.cx) / k.fx, (u.v - k.cy) / k.fy, 1.0);
  dq = dq_du * du + dq_dd * dd;
  return true;
}

void export_jacobian(ResidualBlock& b, const Eigen::Matrix<double, 2, 18>& d) {
  b.jacobian.clear();
  for (int s = 0; s < b.n_cameras; ++s) {
    CameraJacobian cj;
    cj.camera = b.cameras[s];
    cj.d = d.middleCols<6>(6 * s);
    b.jacobian.push_back(cj);
  }
}

// Jittered grid over the image; integer pixel centers with valid depth, at
// most `count` of them, in grid order.
std::vector<Pixel> sample_pixels(const DepthMap& depth, int count, Rng& rng) {
  const int w = depth.width;
  const int h = depth.height;
  const int gx = std::max(1, static_cast<int>(std::ceil(std::sqrt(double(count) * w / h))));
  const int gy = std::max(1, (count + gx - 1) / gx);
  std::vector<Pixel> candidates;
  candidates.reserve(static_cast<std::size_t>(gx) * gy);
  for (int cy = 0; cy < gy; ++cy) {
    for (int cx = 0; cx < gx; ++cx) {
      const double x = (cx + rng.uniform()) * w / gx;
      const double y = (cy + rng.uniform()) * h / gy;
      const int px = std::clamp(static_cast<int>(x), 0, w - 1);
      const int py = std::clamp(static_cast<int>(y), 0, h - 1);
      if (depth.valid_at(px, py)) candidates.push_back({double(px), double(py)});
    }
  }
  if (static_cast<int>(candidates.size()) <= count) return candidates;
  // Seeded partial Fisher-Yates, then restore grid order.
  std::vector<std::size_t> idx(candidates.size());
  std::iota(idx.begin(), idx.end(), 0);
  for (int n = 0; n < count; ++n) {
    const std::size_t pick = n + rng.below(idx.size() - n);
    std::swap(idx[n], idx[pick]);
  }
  idx.resize(count);
  std::sort(idx.begin(), idx.end());
  std::vector<Pixel> out;
  out.reserve(count);
  for (std::size_t i : idx) out.push_back(candidates[i]);
  return out;
}

void require_valid_pixels(const CameraRig& rig, int camera) {
  if (rig.depth_maps[camera].valid_count() == 0) {
    throw Error(ErrorCode::kNoValidPixels, "camera " + std::to_string(camera) + " has no valid depth pixel");
  }
}

double huber_rho(double e, double delta) { return e <= delta ? e * e : 2.0 * delta * e - delta * delta; }

}  // namespace

void ObjectiveConfig::validate(int n_cameras) const {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw Error(ErrorCode::kInvalidArgument, "lambda must be >= 0");
  if (!enable_rc && !enable_mc) {
    throw Error(ErrorCode::kInvalidArgument, "at least one constraint required (reprojection or cycle)");
  }
  if (m_points_per_pair < 1 || s_points < 1) {
    throw Error(ErrorCode::kInvalidArgument, "sample counts must be >= 1");
  }
  if (n_cameras < 2) throw Error(ErrorCode::kInvalidArgument, "refinement needs at least 2 cameras");
  if (!enable_rc && n_cameras < 3) {
    throw Error(ErrorCode::kInvalidArgument,
                "the cycle constraint needs N >= 3 cameras (rig has " + std::to_string(n_cameras) + ")");
  }
  make_pair_graph(*this, n_cameras);
  make_triplets(*this, n_cameras);
}

std::vector<std::pair<int, int>> make_pair_graph(const ObjectiveConfig& cfg, int n) {
  if (cfg.pairs) {
    std::set<std::pair<int, int>> seen;
    for (const auto& [i, j] : *cfg.pairs) {
      if (i < 0 || j < 0 || i >= n || j >= n || i == j) {
        throw Error(ErrorCode::kInvalidArgument, "bad camera pair (" + std::to_string(i) + ", " + std::to_string(j) + ")");
      }
      if (!seen.insert({i, j}).second) throw Error(ErrorCode::kInvalidArgument, "duplicate camera pair");
    }
    return *cfg.pairs;
  }
  std::vector<std::pair<int, int>> out;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (i != j) out.emplace_back(i, j);
  return out;
}

std::vector<Triplet> make_triplets(const ObjectiveConfig& cfg, int n) {
  if (cfg.triplets) {
    std::set<std::tuple<int, int, int>> seen;
    for (const auto& t : *cfg.triplets) {
      const bool ids_ok = t.i >= 0 && t.j >= 0 && t.k >= 0 && t.i < n && t.j < n && t.k < n;
      const bool canonical = t.i < t.j && t.i < t.k && t.j != t.k;
      if (!ids_ok || !canonical) {
        throw Error(ErrorCode::kInvalidArgument, "bad triplet (" + std::to_string(t.i) + ", " + std::to_string(t.j) +
                                                     ", " + std::to_string(t.k) + ")");
      }
      if (!seen.insert({t.i, t.j, t.k}).second) throw Error(ErrorCode::kInvalidArgument, "duplicate triplet");
    }
    return *cfg.triplets;
  }
  std::vector<Triplet> out;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      for (int k = j + 1; k < n; ++k) out.push_back({i, j, k});
  return out;
}

std::vector<GeoCorrespondence> sample_geo_correspondences(const CameraRig& rig, const ObjectiveConfig& cfg) {
  const int n = rig.size();
  if (n < 2) throw Error(ErrorCode::kInvalidArgument, "need at least 2 cameras");
  std::vector<GeoCorrespondence> out;
  for (const auto& [i, j] : make_pair_graph(cfg, n)) {
    require_valid_pixels(rig, i);
    Rng rng = Rng::stream(cfg.seed, "geo_sample", static_cast<std::uint64_t>(i) * n + j);
    for (const Pixel& p : sample_pixels(rig.depth_maps[i], cfg.m_points_per_pair, rng)) out.push_back({i, j, p});
  }
  return out;
}

std::vector<SampledPoint> sample_cycle_points(const CameraRig& rig, const std::vector<RigidTransform>& extrinsics,
                                              const Triplet& t, const ObjectiveConfig& cfg) {
  const int n = rig.size();
  if (n < 3) throw Error(ErrorCode::kInvalidArgument, "cycle points need at least 3 cameras");
  require_valid_pixels(rig, t.i);
  Rng rng = Rng::stream(cfg.seed, "cycle_sample", (static_cast<std::uint64_t>(t.i) * n + t.j) * n + t.k);
  const auto& k = rig.cameras[t.i].intrinsics;
  const auto& depth = rig.depth_maps[t.i];
  const RigidTransform cam_to_world = extrinsics[t.i].inverse();
  std::vector<SampledPoint> out;
  for (const Pixel& p : sample_pixels(depth, cfg.s_points, rng)) {
    const Vec3 x_cam = backproject(k, p, depth.at(static_cast<int>(p.u), static_cast<int>(p.v)));
    out.push_back({cam_to_world.apply(x_cam), t.i, p});
  }
  return out;
}

ResidualBlock geo_residual(const CameraRig& rig, const std::vector<RigidTransform>& extrinsics,
                           const GeoCorrespondence& c, bool with_jacobian) {
  ResidualBlock b;
  b.kind = ResidualBlock::Kind::kGeo;
  b.cameras = {c.i, c.j, 0};
  b.n_cameras = 2;
  b.dim = 1;

  const auto d_i = sample_depth(rig.depth_maps[c.i], c.pixel);
  if (!d_i) return b;
  const Vec3 x_i = backproject(rig.cameras[c.i].intrinsics, c.pixel, *d_i);

  // Route through world coordinates: T_ji X_i = T_j (T_i^-1 X_i).
  Vec3 w;
  PointJac dw;
  inverse(extrinsics[c.i], 0, x_i, PointJac::Zero(), w, dw);
  Vec3 y;
  PointJac dy;
  forward(extrinsics[c.j], 1, w, dw, y, dy);
  if (y.z() <= kMinProjectDepth) return b;

  const auto& k_j = rig.cameras[c.j].intrinsics;
  const Pixel u_j = project(k_j, y);
  const auto s = sample_depth_with_gradient(rig.depth_maps[c.j], u_j);
  if (!s) return b;

  b.valid = true;
  b.residual(0) = y.z() - s->depth;
  if (with_jacobian) {
    const PixelJac du = projection_jacobian(k_j, y) * dy;
    Eigen::Matrix<double, 2, 18> d = Eigen::Matrix<double, 2, 18>::Zero();
    d.row(0) = dy.row(2) - s->gradient.transpose() * du;
    export_jacobian(b, d);
  }
  return b;
}

ResidualBlock cycle_residual(const CameraRig& rig, const std::vector<RigidTransform>& extrinsics, const Triplet& t,
                             const SampledPoint& p, bool pixel_residual_scale, bool with_jacobian) {
  ResidualBlock b;
  b.kind = ResidualBlock::Kind::kCycle;
  b.cameras = {t.i, t.j, t.k};
  b.n_cameras = 3;
  b.dim = 2;

  const auto& k_i = rig.cameras[t.i].intrinsics;
  const RigidTransform& t_i = extrinsics[t.i];
  const RigidTransform& t_j = extrinsics[t.j];
  const RigidTransform& t_k = extrinsics[t.k];

  // Hop 1: world point into camera j (T_ji T_i X = T_j X), through D_j.
  Vec3 a;
  PointJac da;
  forward(t_j, 1, p.world_point, PointJac::Zero(), a, da);
  Vec3 x_j;
  PointJac dx_j;
  if (!reproject_through_depth(rig.cameras[t.j].intrinsics, rig.depth_maps[t.j], a, da, x_j, dx_j)) return b;

  // Hop 2: camera j into camera k via T_kj, through D_k.
  Vec3 w2;
  PointJac dw2;
  inverse(t_j, 1, x_j, dx_j, w2, dw2);
  Vec3 bk;
  PointJac dbk;
  forward(t_k, 2, w2, dw2, bk, dbk);
  Vec3 x_k;
  PointJac dx_k;
  if (!reproject_through_depth(rig.cameras[t.k].intrinsics, rig.depth_maps[t.k], bk, dbk, x_k, dx_k)) return b;

  // Hop 3: back into camera i via T_ik.
  Vec3 w3;
  PointJac dw3;
  inverse(t_k, 2, x_k, dx_k, w3, dw3);
  Vec3 c;
  PointJac dc;
  forward(t_i, 0, w3, dw3, c, dc);
  if (c.z() <= kMinProjectDepth) return b;

  Vec3 q;
  PointJac dq;
  forward(t_i, 0, p.world_point, PointJac::Zero(), q, dq);
  if (q.z() <= kMinProjectDepth) return b;

  const Pixel u_cycle = project(k_i, c);
  const Pixel u_ref = project(k_i, q);
  const double scale = pixel_residual_scale ? 1.0 / k_i.fx : 1.0;
  b.valid = true;
  b.residual = scale * Vec2(u_cycle.u - u_ref.u, u_cycle.v - u_ref.v);
  if (with_jacobian) {
    const Eigen::Matrix<double, 2, 18> d =
        scale * (projection_jacobian(k_i, c) * dc - projection_jacobian(k_i, q) * dq);
    export_jacobian(b, d);
  }
  return b;
}

SampleSet draw_samples(const CameraRig& rig, const std::vector<RigidTransform>& extrinsics,
                       const ObjectiveConfig& cfg) {
  cfg.validate(rig.size());
  if (static_cast<int>(extrinsics.size()) != rig.size()) {
    throw Error(ErrorCode::kCountMismatch, "extrinsic count does not match camera count");
  }
  SampleSet s;
  if (cfg.enable_rc) s.geo = sample_geo_correspondences(rig, cfg);
  if (cfg.enable_mc) {
    s.triplets = make_triplets(cfg, rig.size());
    for (const auto& t : s.triplets) s.cycle_points.push_back(sample_cycle_points(rig, extrinsics, t, cfg));
  }
  return s;
}

double block_weight(const ResidualBlock& b, const ObjectiveConfig& cfg) {
  if (!b.valid || cfg.huber_threshold <= 0.0) return 1.0;
  const double e = std::sqrt(b.squared_norm());
  return e <= cfg.huber_threshold ? 1.0 : cfg.huber_threshold / e;
}

ObjectiveValue evaluate_objective(const CameraRig& rig, const std::vector<RigidTransform>& extrinsics,
                                  const SampleSet& samples, const ObjectiveConfig& cfg, bool with_jacobian) {
  ObjectiveValue out;
  std::size_t n_cycle = 0;
  for (const auto& pts : samples.cycle_points) n_cycle += pts.size();
  out.blocks.reserve(samples.geo.size() + n_cycle);

  for (const auto& c : samples.geo) out.blocks.push_back(geo_residual(rig, extrinsics, c, with_jacobian));
  for (std::size_t t = 0; t < samples.triplets.size(); ++t) {
    for (const auto& p : samples.cycle_points[t]) {
      out.blocks.push_back(
          cycle_residual(rig, extrinsics, samples.triplets[t], p, cfg.pixel_residual_scale, with_jacobian));
    }
  }

  for (const auto& b : out.blocks) {
    if (!b.valid) continue;
    const double e2 = b.squared_norm();
    const double term = cfg.huber_threshold > 0.0 ? huber_rho(std::sqrt(e2), cfg.huber_threshold) : e2;
    if (b.kind == ResidualBlock::Kind::kGeo) {
      out.l_geo += term;
      ++out.valid_geo;
    } else {
      out.l_cycle += term;
      ++out.valid_cycle;
    }
  }
  if (out.valid_geo + out.valid_cycle == 0) {
    throw Error(ErrorCode::kDegenerateProblem, "no valid residual blocks");
  }
  out.total = out.l_geo + cfg.lambda * out.l_cycle;
  return out;
}

ObjectiveValue total_objective(const CameraRig& rig, const std::vector<RigidTransform>& extrinsics,
                               const ObjectiveConfig& cfg) {
  return evaluate_objective(rig, extrinsics, draw_samples(rig, extrinsics, cfg), cfg);
}

int parameter_offset(int camera, int gauge_camera) {
  if (camera == gauge_camera) return -1;
  return 6 * (camera < gauge_camera ? camera : camera - 1);
}

StackedSystem stack_jacobian(const std::vector<ResidualBlock>& blocks, const ObjectiveConfig& cfg, int n_cameras,
                             int gauge_camera) {
  std::vector<Eigen::Triplet<double>> entries;
  std::vector<double> residual;
  int row = 0;
  for (const auto& b : blocks) {
    if (!b.valid) continue;
    double w = block_weight(b, cfg);
    if (b.kind == ResidualBlock::Kind::kCycle) w *= cfg.lambda;
    if (w == 0.0) continue;
    const double sw = std::sqrt(w);
    for (int r = 0; r < b.dim; ++r) {
      residual.push_back(sw * b.residual(r));
      for (const auto& cj : b.jacobian) {
        const int col = parameter_offset(cj.camera, gauge_camera);
        if (col < 0) continue;
        for (int c = 0; c < 6; ++c) {
          if (cj.d(r, c) != 0.0) entries.emplace_back(row, col + c, sw * cj.d(r, c));
        }
      }
      ++row;
    }
  }
  StackedSystem sys;
  sys.jacobian.resize(row, 6 * (n_cameras - 1));
  sys.jacobian.setFromTriplets(entries.begin(), entries.end());
  sys.residual = Eigen::Map<const Eigen::VectorXd>(residual.data(), static_cast<Eigen::Index>(residual.size()));
  return sys;
}

}  // namespace rigcal
