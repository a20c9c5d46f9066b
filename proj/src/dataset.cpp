#include "rigcal/dataset.hpp"

#include <algorithm>
#include <bit>
#include <cinttypes>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

namespace rigcal {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kDepthMagic = "GMACD1";
constexpr const char* kRigFile = "rig.json";

std::string camera_ctx(int id) { return "camera " + std::to_string(id); }

void emit(const json& j, int indent, std::string& out) {
  const std::string pad(static_cast<std::size_t>(indent) * 2, ' ');
  const std::string pad_in(static_cast<std::size_t>(indent + 1) * 2, ' ');
  switch (j.type()) {
    case json::value_t::object: {
      if (j.empty()) {
        out += "{}";
        return;
      }
      out += "{\n";
      bool first = true;
      for (auto it = j.begin(); it != j.end(); ++it) {
        if (!first) out += ",\n";
        first = false;
        out += pad_in + json(it.key()).dump() + ": ";
        emit(it.value(), indent + 1, out);
      }
      out += "\n" + pad + "}";
      return;
    }
    case json::value_t::array: {
      if (j.empty()) {
        out += "[]";
        return;
      }
      // Arrays of plain numbers stay on one line.
      const bool flat = std::all_of(j.begin(), j.end(), [](const json& e) { return e.is_number(); });
      out += flat ? "[" : "[\n";
      bool first = true;
      for (const auto& e : j) {
        if (!first) out += flat ? ", " : ",\n";
        first = false;
        if (!flat) out += pad_in;
        emit(e, indent + 1, out);
      }
      out += flat ? "]" : "\n" + pad + "]";
      return;
    }
    case json::value_t::number_float: {
      const double v = j.get<double>();
      if (!std::isfinite(v)) {
        out += "null";
        return;
      }
      char buf[40];
      std::snprintf(buf, sizeof buf, "%.17g", v);
      out += buf;
      // Keep the value a float on reload (this also preserves -0.0).
      if (std::strpbrk(buf, ".eE") == nullptr) out += ".0";
      return;
    }
    default:
      out += j.dump();
  }
}

json parse_json_file(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw Error(ErrorCode::kMissingFile, file.string());
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return json::parse(ss.str());
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kMalformedJson, file.string() + ": " + e.what());
  }
}

void write_text_file(const fs::path& file, const std::string& text) {
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIoError, "cannot open " + file.string() + " for writing");
  out << text;
  if (!out) throw Error(ErrorCode::kIoError, "write failed for " + file.string());
}

const json& require(const json& obj, const char* key, const std::string& ctx) {
  if (!obj.is_object() || !obj.contains(key)) {
    throw Error(ErrorCode::kMalformedJson, ctx + ": missing field '" + key + "'");
  }
  return obj.at(key);
}

double require_number(const json& obj, const char* key, const std::string& ctx) {
  const json& v = require(obj, key, ctx);
  if (!v.is_number()) {
    throw Error(ErrorCode::kMalformedJson, ctx + ": field '" + key + "' must be a number");
  }
  return v.get<double>();
}

int require_int(const json& obj, const char* key, const std::string& ctx) {
  const json& v = require(obj, key, ctx);
  if (!v.is_number_integer()) {
    throw Error(ErrorCode::kMalformedJson, ctx + ": field '" + key + "' must be an integer");
  }
  return v.get<int>();
}

std::uint32_t to_le(std::uint32_t x) {
  if constexpr (std::endian::native == std::endian::big) return __builtin_bswap32(x);
  return x;
}

}  // namespace

std::string to_json_text(const json& j) {
  std::string out;
  emit(j, 0, out);
  out += "\n";
  return out;
}

json transform_to_json(const RigidTransform& t) {
  json rot = json::array();
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) rot.push_back(t.rotation.matrix()(r, c));
  json trans = json::array();
  for (int r = 0; r < 3; ++r) trans.push_back(t.translation(r));
  return {{"rotation", rot}, {"translation", trans}};
}

RigidTransform transform_from_json(const json& j, const std::string& ctx) {
  const json& rot = require(j, "rotation", ctx);
  const json& trans = require(j, "translation", ctx);
  if (!rot.is_array() || rot.size() != 9) {
    throw Error(ErrorCode::kMalformedJson, ctx + ": rotation must hold 9 numbers");
  }
  if (!trans.is_array() || trans.size() != 3) {
    throw Error(ErrorCode::kMalformedJson, ctx + ": translation must hold 3 numbers");
  }
  Mat3 m;
  for (int i = 0; i < 9; ++i) {
    if (!rot[i].is_number()) throw Error(ErrorCode::kMalformedJson, ctx + ": rotation entry not a number");
    m(i / 3, i % 3) = rot[i].get<double>();
  }
  Vec3 k;
  for (int i = 0; i < 3; ++i) {
    if (!trans[i].is_number()) throw Error(ErrorCode::kMalformedJson, ctx + ": translation entry not a number");
    k(i) = trans[i].get<double>();
  }
  RigidTransform t;
  try {
    t.rotation = Rotation::checked(m, kRotationLoadTolerance);
  } catch (const Error& e) {
    throw Error(ErrorCode::kNotARotation, ctx + ": " + e.what());
  }
  // Bit-exact matrices are kept as-is so that save/load round trips are exact.
  if ((t.rotation.matrix() - m).cwiseAbs().maxCoeff() < 1e-15) t.rotation = Rotation::from_matrix_unchecked(m);
  t.translation = k;
  return t;
}

bool CameraRig::has_ground_truth() const {
  return !cameras.empty() &&
         std::all_of(cameras.begin(), cameras.end(), [](const auto& c) { return c.gt_extrinsic.has_value(); });
}

std::vector<RigidTransform> CameraRig::init_extrinsics() const {
  std::vector<RigidTransform> out;
  out.reserve(cameras.size());
  for (const auto& c : cameras) out.push_back(c.init_extrinsic);
  return out;
}

std::vector<RigidTransform> CameraRig::gt_extrinsics() const {
  std::vector<RigidTransform> out;
  out.reserve(cameras.size());
  for (const auto& c : cameras) {
    if (!c.gt_extrinsic) throw Error(ErrorCode::kInvalidArgument, camera_ctx(c.id) + " has no ground truth");
    out.push_back(*c.gt_extrinsic);
  }
  return out;
}

void CameraRig::validate() const {
  if (depth_maps.size() != cameras.size()) {
    throw Error(ErrorCode::kDimensionMismatch, "rig has " + std::to_string(cameras.size()) + " cameras but " +
                                                   std::to_string(depth_maps.size()) + " depth maps");
  }
  for (std::size_t i = 0; i < cameras.size(); ++i) {
    const auto& c = cameras[i];
    if (c.id != static_cast<int>(i)) {
      throw Error(ErrorCode::kNonContiguousIds,
                  camera_ctx(c.id) + " at position " + std::to_string(i) + "; ids must be 0..N-1");
    }
    try {
      c.intrinsics.validate();
    } catch (const Error& e) {
      throw Error(ErrorCode::kMalformedJson, camera_ctx(c.id) + ": " + e.what());
    }
    const auto& d = depth_maps[i];
    if (d.width != c.intrinsics.width || d.height != c.intrinsics.height) {
      throw Error(ErrorCode::kDimensionMismatch,
                  camera_ctx(c.id) + ": depth " + std::to_string(d.width) + "x" + std::to_string(d.height) +
                      " but intrinsics " + std::to_string(c.intrinsics.width) + "x" +
                      std::to_string(c.intrinsics.height));
    }
    if (d.values.size() != static_cast<std::size_t>(d.width) * d.height) {
      throw Error(ErrorCode::kDimensionMismatch, camera_ctx(c.id) + ": depth buffer size");
    }
  }
}

DepthMap read_depth_file(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw Error(ErrorCode::kMissingFile, file.string());
  std::string header;
  if (!std::getline(in, header)) throw Error(ErrorCode::kBadMagic, file.string() + ": empty file");
  std::istringstream hs(header);
  std::string magic;
  long long w = -1;
  long long h = -1;
  hs >> magic >> w >> h;
  std::string rest;
  if (magic != kDepthMagic || !hs || (hs >> rest) || w <= 0 || h <= 0 || w > 1 << 16 || h > 1 << 16) {
    throw Error(ErrorCode::kBadMagic, file.string() + ": bad header '" + header + "'");
  }
  DepthMap d(static_cast<int>(w), static_cast<int>(h));
  std::vector<char> raw(d.values.size() * 4);
  in.read(raw.data(), static_cast<std::streamsize>(raw.size()));
  if (in.gcount() != static_cast<std::streamsize>(raw.size())) {
    throw Error(ErrorCode::kDimensionMismatch, file.string() + ": truncated pixel data");
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    throw Error(ErrorCode::kDimensionMismatch, file.string() + ": trailing bytes after pixel data");
  }
  for (std::size_t i = 0; i < d.values.size(); ++i) {
    std::uint32_t bits;
    std::memcpy(&bits, raw.data() + 4 * i, 4);
    bits = to_le(bits);
    std::memcpy(&d.values[i], &bits, 4);
  }
  return d;
}

void write_depth_file(const DepthMap& d, const fs::path& file) {
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIoError, "cannot open " + file.string() + " for writing");
  out << kDepthMagic << ' ' << d.width << ' ' << d.height << '\n';
  std::vector<char> raw(d.values.size() * 4);
  for (std::size_t i = 0; i < d.values.size(); ++i) {
    std::uint32_t bits;
    std::memcpy(&bits, &d.values[i], 4);
    bits = to_le(bits);
    std::memcpy(raw.data() + 4 * i, &bits, 4);
  }
  out.write(raw.data(), static_cast<std::streamsize>(raw.size()));
  if (!out) throw Error(ErrorCode::kIoError, "write failed for " + file.string());
}

CameraRig load_rig(const fs::path& dir) {
  const json root = parse_json_file(dir / kRigFile);
  const std::string file_ctx = (dir / kRigFile).string();
  if (!root.is_object()) throw Error(ErrorCode::kMalformedJson, file_ctx + ": top level must be an object");
  const json& unit = require(root, "depth_unit", file_ctx);
  if (unit != "meters") throw Error(ErrorCode::kMalformedJson, file_ctx + ": depth_unit must be \"meters\"");
  const json& cams = require(root, "cameras", file_ctx);
  if (!cams.is_array()) throw Error(ErrorCode::kMalformedJson, file_ctx + ": cameras must be an array");

  std::vector<CameraRecord> records;
  for (std::size_t idx = 0; idx < cams.size(); ++idx) {
    const json& cj = cams[idx];
    const std::string pos_ctx = file_ctx + ": cameras[" + std::to_string(idx) + "]";
    CameraRecord rec;
    rec.id = require_int(cj, "id", pos_ctx);
    const std::string ctx = file_ctx + ": " + camera_ctx(rec.id);
    rec.intrinsics.fx = require_number(cj, "fx", ctx);
    rec.intrinsics.fy = require_number(cj, "fy", ctx);
    rec.intrinsics.cx = require_number(cj, "cx", ctx);
    rec.intrinsics.cy = require_number(cj, "cy", ctx);
    rec.intrinsics.width = require_int(cj, "width", ctx);
    rec.intrinsics.height = require_int(cj, "height", ctx);
    try {
      rec.intrinsics.validate();
    } catch (const Error& e) {
      throw Error(ErrorCode::kMalformedJson, ctx + ": " + e.what());
    }
    rec.init_extrinsic = transform_from_json(require(cj, "init_extrinsic", ctx), ctx + " init_extrinsic");
    if (cj.contains("gt_extrinsic") && !cj.at("gt_extrinsic").is_null()) {
      rec.gt_extrinsic = transform_from_json(cj.at("gt_extrinsic"), ctx + " gt_extrinsic");
    }
    const json& df = require(cj, "depth_file", ctx);
    if (!df.is_string()) throw Error(ErrorCode::kMalformedJson, ctx + ": depth_file must be a string");
    rec.depth_file = df.get<std::string>();
    records.push_back(std::move(rec));
  }

  std::set<int> ids;
  for (const auto& r : records) {
    if (!ids.insert(r.id).second) {
      throw Error(ErrorCode::kNonContiguousIds, camera_ctx(r.id) + " appears more than once");
    }
  }
  std::sort(records.begin(), records.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (records[i].id != static_cast<int>(i)) {
      throw Error(ErrorCode::kNonContiguousIds,
                  camera_ctx(records[i].id) + ": ids must be contiguous from 0 (missing " + std::to_string(i) + ")");
    }
  }

  CameraRig rig;
  rig.cameras = std::move(records);
  for (const auto& c : rig.cameras) {
    DepthMap d = read_depth_file(dir / c.depth_file);
    if (d.width != c.intrinsics.width || d.height != c.intrinsics.height) {
      throw Error(ErrorCode::kDimensionMismatch,
                  camera_ctx(c.id) + ": depth file " + c.depth_file + " is " + std::to_string(d.width) + "x" +
                      std::to_string(d.height) + " but intrinsics say " + std::to_string(c.intrinsics.width) +
                      "x" + std::to_string(c.intrinsics.height));
    }
    rig.depth_maps.push_back(std::move(d));
  }
  rig.validate();
  return rig;
}

void save_rig(const CameraRig& rig, const fs::path& dir) {
  rig.validate();
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::kIoError, "cannot create " + dir.string() + ": " + ec.message());

  json cams = json::array();
  for (std::size_t i = 0; i < rig.cameras.size(); ++i) {
    const auto& c = rig.cameras[i];
    const std::string depth_file = c.depth_file.empty() ? "depth_" + std::to_string(c.id) + ".bin" : c.depth_file;
    json cj = {
        {"id", c.id},
        {"fx", c.intrinsics.fx},
        {"fy", c.intrinsics.fy},
        {"cx", c.intrinsics.cx},
        {"cy", c.intrinsics.cy},
        {"width", c.intrinsics.width},
        {"height", c.intrinsics.height},
        {"init_extrinsic", transform_to_json(c.init_extrinsic)},
        {"depth_file", depth_file},
    };
    if (c.gt_extrinsic) cj["gt_extrinsic"] = transform_to_json(*c.gt_extrinsic);
    cams.push_back(std::move(cj));
    write_depth_file(rig.depth_maps[i], dir / depth_file);
  }
  const json root = {{"depth_unit", "meters"}, {"cameras", cams}};
  write_text_file(dir / kRigFile, to_json_text(root));
}

void save_estimate(const EstimateFile& est, const fs::path& file) {
  json cams = json::array();
  for (std::size_t i = 0; i < est.extrinsics.size(); ++i) {
    cams.push_back({{"id", static_cast<int>(i)}, {"extrinsic", transform_to_json(est.extrinsics[i])}});
  }
  const json root = {
      {"cameras", cams},
      {"loss", {{"l_geo", est.l_geo}, {"l_cycle", est.l_cycle}, {"total", est.loss}}},
      {"iterations", est.iterations},
      {"termination", est.termination},
      {"config", est.config},
  };
  if (file.has_parent_path()) fs::create_directories(file.parent_path());
  write_text_file(file, to_json_text(root));
}

EstimateFile load_estimate(const fs::path& file) {
  const json root = parse_json_file(file);
  const std::string ctx = file.string();
  EstimateFile est;
  const json& cams = require(root, "cameras", ctx);
  if (!cams.is_array()) throw Error(ErrorCode::kMalformedJson, ctx + ": cameras must be an array");
  for (std::size_t i = 0; i < cams.size(); ++i) {
    const int id = require_int(cams[i], "id", ctx + ": cameras[" + std::to_string(i) + "]");
    if (id != static_cast<int>(i)) {
      throw Error(ErrorCode::kNonContiguousIds, ctx + ": " + camera_ctx(id) + " out of order");
    }
    est.extrinsics.push_back(
        transform_from_json(require(cams[i], "extrinsic", ctx), ctx + ": " + camera_ctx(id)));
  }
  const json& loss = require(root, "loss", ctx);
  est.l_geo = require_number(loss, "l_geo", ctx);
  est.l_cycle = require_number(loss, "l_cycle", ctx);
  est.loss = require_number(loss, "total", ctx);
  est.iterations = require_int(root, "iterations", ctx);
  if (root.contains("termination") && root.at("termination").is_string()) {
    est.termination = root.at("termination").get<std::string>();
  }
  if (root.contains("config")) est.config = root.at("config");
  return est;
}

}  // namespace rigcal
