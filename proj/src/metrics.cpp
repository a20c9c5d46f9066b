#include "rigcal/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

namespace rigcal {

namespace {

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void append_row(std::string& out, const std::string& variant, const std::string& seed, const std::string& camera,
                double rot, double trans) {
  out += variant + "," + seed + "," + camera + "," + fmt_double(rot) + "," + fmt_double(trans) + "\n";
}

}  // namespace

std::vector<RigidTransform> gauge_align(const std::vector<RigidTransform>& est, const std::vector<RigidTransform>& ref,
                                        int gauge_camera) {
  if (est.size() != ref.size()) {
    throw Error(ErrorCode::kCountMismatch, "estimate has " + std::to_string(est.size()) + " cameras, reference " +
                                              std::to_string(ref.size()));
  }
  if (gauge_camera < 0 || gauge_camera >= static_cast<int>(est.size())) {
    throw Error(ErrorCode::kInvalidArgument, "gauge camera out of range");
  }
  const RigidTransform est_gauge_inv = est[gauge_camera].inverse();
  std::vector<RigidTransform> out;
  out.reserve(est.size());
  for (std::size_t i = 0; i < est.size(); ++i) {
    if (static_cast<int>(i) == gauge_camera) {
      out.push_back(ref[i]);
      continue;
    }
    out.push_back(compose(compose(est[i], est_gauge_inv), ref[gauge_camera]));
  }
  return out;
}

double rotation_error_deg(const Rotation& est, const Rotation& ref) {
  // Same geodesic angle as arccos((trace(E) - 1) / 2) for E = est * ref^T,
  // evaluated with atan2 so that tiny angles keep full precision.
  const Rotation e = Rotation::from_matrix_unchecked(est.matrix() * ref.matrix().transpose());
  return e.angle() * 180.0 / std::numbers::pi;
}

double translation_error_mm(const Vec3& est, const Vec3& ref) { return 1000.0 * (est - ref).norm(); }

double CalibrationReport::mean_rot_deg() const {
  if (cameras.empty()) return 0.0;
  double s = 0.0;
  for (const auto& c : cameras) s += c.rot_error_deg;
  return s / cameras.size();
}

double CalibrationReport::max_rot_deg() const {
  double m = 0.0;
  for (const auto& c : cameras) m = std::max(m, c.rot_error_deg);
  return m;
}

double CalibrationReport::mean_trans_mm() const {
  if (cameras.empty()) return 0.0;
  double s = 0.0;
  for (const auto& c : cameras) s += c.trans_error_mm;
  return s / cameras.size();
}

double CalibrationReport::max_trans_mm() const {
  double m = 0.0;
  for (const auto& c : cameras) m = std::max(m, c.trans_error_mm);
  return m;
}

CalibrationReport make_report(const std::vector<RigidTransform>& est, const std::vector<RigidTransform>& ref,
                              const std::string& variant, std::uint64_t seed, int gauge_camera) {
  const auto aligned = gauge_align(est, ref, gauge_camera);
  CalibrationReport r;
  r.variant = variant;
  r.seed = seed;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    if (static_cast<int>(i) == gauge_camera) continue;
    r.cameras.push_back({static_cast<int>(i), rotation_error_deg(aligned[i].rotation, ref[i].rotation),
                         translation_error_mm(aligned[i].translation, ref[i].translation)});
  }
  return r;
}

std::vector<AblationRow> ablation_summary(const std::vector<CalibrationReport>& reports,
                                          const std::vector<std::string>& variants) {
  std::vector<AblationRow> rows;
  for (const auto& v : variants) {
    AblationRow row;
    row.variant = v;
    for (const auto& r : reports) {
      if (r.variant != v) continue;
      ++row.n_reports;
      row.mean_rot_deg += r.mean_rot_deg();
      row.mean_trans_mm += r.mean_trans_mm();
    }
    if (row.n_reports == 0) throw Error(ErrorCode::kEmptyVariant, "no report for variant '" + v + "'");
    row.mean_rot_deg /= row.n_reports;
    row.mean_trans_mm /= row.n_reports;
    rows.push_back(row);
  }
  return rows;
}

std::vector<AblationRow> ablation_summary(const std::vector<CalibrationReport>& reports) {
  std::vector<std::string> variants;
  for (const auto& r : reports) {
    if (std::find(variants.begin(), variants.end(), r.variant) == variants.end()) variants.push_back(r.variant);
  }
  if (variants.empty()) throw Error(ErrorCode::kEmptyVariant, "no reports");
  return ablation_summary(reports, variants);
}

std::string report_csv(const std::vector<CalibrationReport>& reports) {
  std::string out = std::string(kReportCsvHeader) + "\n";
  for (const auto& r : reports) {
    const std::string seed = std::to_string(r.seed);
    for (const auto& c : r.cameras) {
      append_row(out, r.variant, seed, std::to_string(c.camera_id), c.rot_error_deg, c.trans_error_mm);
    }
    append_row(out, r.variant, seed, "mean", r.mean_rot_deg(), r.mean_trans_mm());
    append_row(out, r.variant, seed, "max", r.max_rot_deg(), r.max_trans_mm());
  }
  return out;
}

std::string ablation_csv(const std::vector<CalibrationReport>& reports, const std::vector<AblationRow>& summary) {
  std::string out = report_csv(reports);
  for (const auto& row : summary) append_row(out, row.variant, "all", "mean", row.mean_rot_deg, row.mean_trans_mm);
  return out;
}

}  // namespace rigcal
