#include "rigcal/cli.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <CLI11.hpp>

#include "rigcal/dataset.hpp"
#include "rigcal/metrics.hpp"

namespace rigcal::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

[[noreturn]] void field_error(const std::string& field, const std::string& what) {
  throw Error(ErrorCode::kMalformedJson, "config field '" + field + "' " + what);
}

void check_keys(const json& obj, const std::string& prefix, std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) field_error(prefix, "must be an object");
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (!ok.count(it.key())) field_error(prefix + "." + it.key(), "is not recognised");
  }
}

void read(const json& obj, const char* key, const std::string& prefix, double& out) {
  if (!obj.contains(key)) return;
  if (!obj.at(key).is_number()) field_error(prefix + "." + key, "must be a number");
  out = obj.at(key).get<double>();
}

void read(const json& obj, const char* key, const std::string& prefix, int& out) {
  if (!obj.contains(key)) return;
  const json& v = obj.at(key);
  if (!v.is_number_integer() || v.get<long long>() < INT32_MIN || v.get<long long>() > INT32_MAX) {
    field_error(prefix + "." + key, "must be an integer");
  }
  out = v.get<int>();
}

void read(const json& obj, const char* key, const std::string& prefix, bool& out) {
  if (!obj.contains(key)) return;
  if (!obj.at(key).is_boolean()) field_error(prefix + "." + key, "must be true or false");
  out = obj.at(key).get<bool>();
}

void read(const json& obj, const char* key, const std::string& prefix, std::uint64_t& out) {
  if (!obj.contains(key)) return;
  if (!obj.at(key).is_number_unsigned()) field_error(prefix + "." + key, "must be a non-negative integer");
  out = obj.at(key).get<std::uint64_t>();
}

std::vector<int> read_ids(const json& v, std::size_t n, const std::string& field) {
  if (!v.is_array() || v.size() != n) field_error(field, "must be an array of " + std::to_string(n) + " camera ids");
  std::vector<int> out;
  for (const auto& e : v) {
    if (!e.is_number_integer()) field_error(field, "must contain integers");
    out.push_back(e.get<int>());
  }
  return out;
}

void parse_objective(const json& o, ObjectiveConfig& cfg) {
  const std::string p = "objective";
  check_keys(o, p,
             {"lambda", "enable_rc", "enable_mc", "m_points_per_pair", "s_points", "pairs", "triplets",
              "pixel_residual_scale", "huber_threshold", "seed"});
  read(o, "lambda", p, cfg.lambda);
  read(o, "enable_rc", p, cfg.enable_rc);
  read(o, "enable_mc", p, cfg.enable_mc);
  read(o, "m_points_per_pair", p, cfg.m_points_per_pair);
  read(o, "s_points", p, cfg.s_points);
  read(o, "pixel_residual_scale", p, cfg.pixel_residual_scale);
  read(o, "huber_threshold", p, cfg.huber_threshold);
  read(o, "seed", p, cfg.seed);
  if (o.contains("pairs")) {
    if (!o.at("pairs").is_array()) field_error(p + ".pairs", "must be an array");
    std::vector<std::pair<int, int>> pairs;
    for (std::size_t i = 0; i < o.at("pairs").size(); ++i) {
      const auto ids = read_ids(o.at("pairs")[i], 2, p + ".pairs[" + std::to_string(i) + "]");
      pairs.emplace_back(ids[0], ids[1]);
    }
    cfg.pairs = pairs;
  }
  if (o.contains("triplets")) {
    if (!o.at("triplets").is_array()) field_error(p + ".triplets", "must be an array");
    std::vector<Triplet> triplets;
    for (std::size_t i = 0; i < o.at("triplets").size(); ++i) {
      const auto ids = read_ids(o.at("triplets")[i], 3, p + ".triplets[" + std::to_string(i) + "]");
      triplets.push_back({ids[0], ids[1], ids[2]});
    }
    cfg.triplets = triplets;
  }
}

void parse_optimizer(const json& o, OptimizerConfig& cfg) {
  const std::string p = "optimizer";
  check_keys(o, p,
             {"max_outer_iters", "max_inner_iters", "lm_lambda0", "lm_up", "lm_down", "rel_tol", "abs_tol",
              "gauge_camera"});
  read(o, "max_outer_iters", p, cfg.max_outer_iters);
  read(o, "max_inner_iters", p, cfg.max_inner_iters);
  read(o, "lm_lambda0", p, cfg.lm_lambda0);
  read(o, "lm_up", p, cfg.lm_up);
  read(o, "lm_down", p, cfg.lm_down);
  read(o, "rel_tol", p, cfg.rel_tol);
  read(o, "abs_tol", p, cfg.abs_tol);
  read(o, "gauge_camera", p, cfg.gauge_camera);
}

json read_config_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kMissingFile, "cannot open config " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  json doc = json::parse(ss.str(), nullptr, false);
  if (doc.is_discarded()) throw Error(ErrorCode::kMalformedJson, "config " + path + " is not valid JSON");
  return doc;
}

void write_text(const fs::path& file, const std::string& text) {
  if (file.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(file.parent_path(), ec);
  }
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + file.string());
  out << text;
  if (!out) throw Error(ErrorCode::kIoError, "failed writing " + file.string());
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

bool is_degeneracy(ErrorCode c) {
  return c == ErrorCode::kDegenerateProblem || c == ErrorCode::kSingularNormalEquations;
}

// Flags shared by the commands that optimize.
struct ObjectiveFlags {
  CLI::Option* lambda = nullptr;
  CLI::Option* max_outer = nullptr;
  CLI::Option* max_inner = nullptr;
  double lambda_v = 1.0;
  int max_outer_v = 0;
  int max_inner_v = 0;

  void add(CLI::App& app) {
    lambda = app.add_option("--lambda", lambda_v, "Weight of the cycle term (default 1.0)");
    max_outer = app.add_option("--max-outer", max_outer_v, "Outer resampling iterations (default 10)");
    max_inner = app.add_option("--max-inner", max_inner_v, "LM steps per outer iteration (default 20)");
  }

  void apply(RunConfig& rc) const {
    if (lambda->count()) rc.objective.lambda = lambda_v;
    if (max_outer->count()) rc.optimizer.max_outer_iters = max_outer_v;
    if (max_inner->count()) rc.optimizer.max_inner_iters = max_inner_v;
  }
};

RunConfig load_run_config(const std::string& config_path) {
  RunConfig rc = default_run_config();
  if (!config_path.empty()) rc = apply_config_json(rc, read_config_file(config_path));
  return rc;
}

void print_losses(std::ostream& out, const OptResult& r) {
  out << "initial L_geo " << fmt("%.9e", r.initial_l_geo) << " L_cycle " << fmt("%.9e", r.initial_l_cycle)
      << " L " << fmt("%.9e", r.initial_loss) << "\n";
  out << "final L_geo " << fmt("%.9e", r.final_l_geo) << " L_cycle " << fmt("%.9e", r.final_l_cycle) << " L "
      << fmt("%.9e", r.final_loss) << "\n";
  out << "iterations outer " << r.outer_iterations << " inner " << r.inner_iterations << " termination "
      << to_string(r.termination) << "\n";
  out << "valid blocks geo " << r.valid_geo << " cycle " << r.valid_cycle << "\n";
}

int cmd_simulate(const std::string& out_dir, const std::string& config, std::optional<std::uint64_t> seed,
                 std::optional<int> cameras, std::ostream& out) {
  RunConfig rc = load_run_config(config);
  if (seed) rc.sim.noise.seed = *seed;
  if (cameras) rc.sim.layout.n_cameras = *cameras;
  rc.sim.layout.validate();
  rc.sim.noise.validate();
  const CameraRig rig = sim::generate_dataset(rc.sim.layout, rc.sim.scene, rc.sim.noise);
  save_rig(rig, out_dir);
  const auto& k = rc.sim.layout.intrinsics;
  const auto& n = rc.sim.noise;
  out << "cameras " << rig.size() << "\n";
  out << "resolution " << k.width << "x" << k.height << "\n";
  out << "noise depth_sigma_rel " << fmt("%.17g", n.depth_sigma_rel) << " rot_perturb_deg "
      << fmt("%.17g", n.rot_perturb_deg) << " trans_perturb_m " << fmt("%.17g", n.trans_perturb_m)
      << " dropout_rate " << fmt("%.17g", n.dropout_rate) << " seed " << n.seed << "\n";
  out << "wrote " << out_dir << "\n";
  return kExitOk;
}

int cmd_refine(const std::string& dataset, const std::string& out_file, RunConfig rc, std::ostream& out) {
  const CameraRig rig = load_rig(dataset);
  const OptResult r = refine(rig, rig.init_extrinsics(), rc.objective, rc.optimizer);
  EstimateFile est;
  est.extrinsics = r.extrinsics;
  est.l_geo = r.final_l_geo;
  est.l_cycle = r.final_l_cycle;
  est.loss = r.final_loss;
  est.iterations = r.outer_iterations;
  est.termination = to_string(r.termination);
  est.config = {{"objective", objective_to_json(rc.objective)}, {"optimizer", optimizer_to_json(rc.optimizer)}};
  save_estimate(est, out_file);
  print_losses(out, r);
  out << "wrote " << out_file << "\n";
  return r.termination == Termination::kDegenerate ? kExitDegenerate : kExitOk;
}

int cmd_evaluate(const std::string& dataset, const std::string& estimate, const std::string& report_file,
                 std::ostream& out) {
  const CameraRig rig = load_rig(dataset);
  if (!rig.has_ground_truth()) {
    throw Error(ErrorCode::kInvalidArgument, "dataset has no ground truth for every camera; cannot evaluate");
  }
  const EstimateFile est = load_estimate(estimate);
  if (static_cast<int>(est.extrinsics.size()) != rig.size()) {
    throw Error(ErrorCode::kCountMismatch, "estimate has " + std::to_string(est.extrinsics.size()) +
                                               " cameras, dataset has " + std::to_string(rig.size()));
  }
  RunConfig rc = default_run_config();
  if (est.config.is_object() && !est.config.empty()) rc = apply_config_json(rc, est.config);
  const CalibrationReport rep = make_report(est.extrinsics, rig.gt_extrinsics(), variant_label(rc.objective),
                                            rc.objective.seed, rc.optimizer.gauge_camera);
  CalibrationReport with_loss = rep;
  with_loss.l_geo = est.l_geo;
  with_loss.l_cycle = est.l_cycle;
  write_text(report_file, report_csv({with_loss}));
  out << "variant " << rep.variant << " mean rot_error_deg " << fmt("%.9f", rep.mean_rot_deg())
      << " mean trans_error_mm " << fmt("%.9f", rep.mean_trans_mm()) << "\n";
  out << "wrote " << report_file << "\n";
  return kExitOk;
}

int cmd_ablate(const std::string& dataset, const std::string& report_file, int trials, RunConfig rc,
               std::ostream& out) {
  if (trials < 1) throw Error(ErrorCode::kInvalidArgument, "--trials must be >= 1");
  const CameraRig base = load_rig(dataset);
  if (!base.has_ground_truth()) {
    throw Error(ErrorCode::kInvalidArgument, "dataset has no ground truth for every camera; cannot ablate");
  }
  const auto gt = base.gt_extrinsics();
  const int gauge = rc.optimizer.gauge_camera;
  const std::vector<std::string> variants = {"original", "no_rc", "no_mc", "full"};

  std::vector<CalibrationReport> reports;
  for (int t = 0; t < trials; ++t) {
    const std::uint64_t seed = rc.seed + static_cast<std::uint64_t>(t);
    sim::NoiseModel noise = rc.sim.noise;
    noise.seed = seed;
    CameraRig rig = base;
    const auto init = sim::perturb_extrinsics(gt, noise, gauge);
    for (int c = 0; c < rig.size(); ++c) rig.cameras[c].init_extrinsic = init[c];

    for (const auto& v : variants) {
      if (v == "original") {
        reports.push_back(make_report(init, gt, v, seed, gauge));
        continue;
      }
      ObjectiveConfig obj = rc.objective;
      obj.seed = seed;
      obj.enable_rc = v != "no_rc";
      obj.enable_mc = v != "no_mc";
      const OptResult r = refine(rig, init, obj, rc.optimizer);
      if (r.termination == Termination::kDegenerate) {
        throw Error(ErrorCode::kDegenerateProblem, "variant " + v + " seed " + std::to_string(seed) +
                                                        " lost every valid residual block");
      }
      CalibrationReport rep = make_report(r.extrinsics, gt, v, seed, gauge);
      rep.l_geo = r.final_l_geo;
      rep.l_cycle = r.final_l_cycle;
      reports.push_back(rep);
    }
  }
  const auto summary = ablation_summary(reports, variants);
  write_text(report_file, ablation_csv(reports, summary));
  for (const auto& row : summary) {
    out << row.variant << " trials " << row.n_reports << " mean rot_error_deg " << fmt("%.9f", row.mean_rot_deg)
        << " mean trans_error_mm " << fmt("%.9f", row.mean_trans_mm) << "\n";
  }
  out << "wrote " << report_file << "\n";
  return kExitOk;
}

}  // namespace

RunConfig default_run_config() {
  RunConfig rc;
  rc.sim.noise.rot_perturb_deg = 2.0;
  rc.sim.noise.trans_perturb_m = 0.05;
  return rc;
}

RunConfig apply_config_json(const RunConfig& base, const json& doc) {
  if (!doc.is_object()) field_error("<root>", "must be an object");
  RunConfig rc = base;
  json sim_part = json::object();
  for (auto it = doc.begin(); it != doc.end(); ++it) {
    const std::string& key = it.key();
    if (key == "scene" || key == "layout" || key == "noise") {
      sim_part[key] = it.value();
    } else if (key == "objective") {
      parse_objective(it.value(), rc.objective);
    } else if (key == "optimizer") {
      parse_optimizer(it.value(), rc.optimizer);
    } else {
      field_error(key, "is not recognised");
    }
  }
  if (!sim_part.empty()) {
    // Sections not present keep the values already in `base`.
    json merged = sim::sim_config_to_json(rc.sim);
    for (auto it = sim_part.begin(); it != sim_part.end(); ++it) {
      if (!it.value().is_object()) field_error(it.key(), "must be an object");
      for (auto f = it.value().begin(); f != it.value().end(); ++f) merged[it.key()][f.key()] = f.value();
    }
    rc.sim = sim::sim_config_from_json(merged);
  }
  return rc;
}

json objective_to_json(const ObjectiveConfig& cfg) {
  json j = {
      {"lambda", cfg.lambda},
      {"enable_rc", cfg.enable_rc},
      {"enable_mc", cfg.enable_mc},
      {"m_points_per_pair", cfg.m_points_per_pair},
      {"s_points", cfg.s_points},
      {"pixel_residual_scale", cfg.pixel_residual_scale},
      {"huber_threshold", cfg.huber_threshold},
      {"seed", cfg.seed},
  };
  if (cfg.pairs) {
    json a = json::array();
    for (const auto& [i, k] : *cfg.pairs) a.push_back({i, k});
    j["pairs"] = a;
  }
  if (cfg.triplets) {
    json a = json::array();
    for (const auto& t : *cfg.triplets) a.push_back({t.i, t.j, t.k});
    j["triplets"] = a;
  }
  return j;
}

json optimizer_to_json(const OptimizerConfig& cfg) {
  return {
      {"max_outer_iters", cfg.max_outer_iters}, {"max_inner_iters", cfg.max_inner_iters},
      {"lm_lambda0", cfg.lm_lambda0},           {"lm_up", cfg.lm_up},
      {"lm_down", cfg.lm_down},                 {"rel_tol", cfg.rel_tol},
      {"abs_tol", cfg.abs_tol},                 {"gauge_camera", cfg.gauge_camera},
  };
}

std::string variant_label(const ObjectiveConfig& cfg) {
  if (!cfg.enable_rc) return "no_rc";
  if (!cfg.enable_mc) return "no_mc";
  return "full";
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multi-camera extrinsic refinement from depth maps", "rigcal"};
  app.require_subcommand(1);

  std::string out_path;
  std::string dataset;
  std::string config;
  std::string estimate;
  std::string report;
  std::uint64_t seed = 0;
  int cameras = 0;
  int trials = 1;
  bool no_rc = false;
  bool no_mc = false;

  CLI::App* simulate = app.add_subcommand("simulate", "Render a synthetic dataset");
  simulate->add_option("--out", out_path, "Output dataset directory")->required();
  simulate->add_option("--config", config, "Config JSON");
  CLI::Option* sim_seed = simulate->add_option("--seed", seed, "Noise seed");
  CLI::Option* sim_cams = simulate->add_option("--cameras", cameras, "Number of cameras");

  CLI::App* refine_cmd = app.add_subcommand("refine", "Refine the initial extrinsics of a dataset");
  refine_cmd->add_option("--dataset", dataset, "Dataset directory")->required();
  refine_cmd->add_option("--out", out_path, "Estimate JSON to write")->required();
  refine_cmd->add_option("--config", config, "Config JSON");
  CLI::Option* ref_seed = refine_cmd->add_option("--seed", seed, "Sampling seed");
  refine_cmd->add_flag("--no-rc", no_rc, "Drop the depth consistency term");
  refine_cmd->add_flag("--no-mc", no_mc, "Drop the cycle consistency term");
  ObjectiveFlags ref_flags;
  ref_flags.add(*refine_cmd);

  CLI::App* evaluate = app.add_subcommand("evaluate", "Score an estimate against ground truth");
  evaluate->add_option("--dataset", dataset, "Dataset directory")->required();
  evaluate->add_option("--estimate", estimate, "Estimate JSON")->required();
  evaluate->add_option("--report", report, "CSV report to write")->required();

  CLI::App* ablate = app.add_subcommand("ablate", "Run every variant over seeded initial perturbations");
  ablate->add_option("--dataset", dataset, "Dataset directory with ground truth")->required();
  ablate->add_option("--report", report, "CSV report to write")->required();
  ablate->add_option("--config", config, "Config JSON");
  CLI::Option* abl_seed = ablate->add_option("--seed", seed, "First trial seed");
  ablate->add_option("--trials", trials, "Number of seeded trials (default 1)");
  ObjectiveFlags abl_flags;
  abl_flags.add(*ablate);

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }

  try {
    if (simulate->parsed()) {
      return cmd_simulate(out_path, config, sim_seed->count() ? std::optional<std::uint64_t>(seed) : std::nullopt,
                          sim_cams->count() ? std::optional<int>(cameras) : std::nullopt, out);
    }
    if (refine_cmd->parsed()) {
      RunConfig rc = load_run_config(config);
      if (ref_seed->count()) rc.objective.seed = seed;
      if (no_rc) rc.objective.enable_rc = false;
      if (no_mc) rc.objective.enable_mc = false;
      ref_flags.apply(rc);
      return cmd_refine(dataset, out_path, rc, out);
    }
    if (evaluate->parsed()) return cmd_evaluate(dataset, estimate, report, out);
    if (ablate->parsed()) {
      RunConfig rc = load_run_config(config);
      if (abl_seed->count()) rc.seed = seed;
      abl_flags.apply(rc);
      return cmd_ablate(dataset, report, trials, rc, out);
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return is_degeneracy(e.code()) ? kExitDegenerate : kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}

}  // namespace rigcal::cli
