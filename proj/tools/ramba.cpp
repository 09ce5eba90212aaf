// Command-line entry point: run, simulate, eval, verify-loops.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>

#include "ramba/error.hpp"
#include "ramba/eval.hpp"
#include "ramba/io.hpp"
#include "ramba/pipeline.hpp"
#include "ramba/sim.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

int report_error(ramba::ErrorCategory category, const std::string& message) {
  json j{{"error", ramba::to_string(category)}, {"message", message}};
  std::cerr << j.dump() << '\n';
  return ramba::exit_code(category);
}

void cmd_run(const fs::path& dataset_dir, const fs::path& config_path, const fs::path& out_dir) {
  const ramba::RunConfig config = ramba::io::read_config(config_path);
  ramba::io::LoadReport load;
  const ramba::Dataset dataset = ramba::io::load_dataset(dataset_dir, &load);
  for (const auto& w : load.warnings) std::cerr << "warning: " << w << '\n';
  const ramba::RunResult result = ramba::run_pipeline(dataset, config);
  ramba::io::write_outputs(out_dir, result, config);

  std::size_t accepted = 0;
  for (const auto& l : result.loops) accepted += l.accepted ? 1 : 0;
  json summary{{"frames", result.trajectory.size()},
               {"keyframes", result.keyframes.size()},
               {"loops_verified", accepted},
               {"loops_candidates", result.loops.size()},
               {"objective_initial",
                result.report.inner.empty() ? 0.0 : result.report.inner.front().initial_objective},
               {"objective_final", result.report.objective.empty() ? 0.0 : result.report.objective.back()},
               {"diagnostics", result.report.diagnostics},
               {"out", out_dir.string()}};
  std::cout << summary.dump(2) << '\n';
}

void cmd_simulate(const std::string& name, std::uint64_t seed, const fs::path& out_dir,
                  double perturb_rot, double perturb_trans) {
  ramba::sim::ScenarioParams params = ramba::sim::scenario(name);
  if (perturb_rot >= 0.0) params.perturb_rot = perturb_rot;
  if (perturb_trans >= 0.0) params.perturb_trans = perturb_trans;
  const ramba::Dataset ds = ramba::sim::simulate(params, seed);
  ramba::io::write_dataset(out_dir, ds);
  std::cout << json{{"scenario", name},
                    {"seed", seed},
                    {"frames", ds.frames.size()},
                    {"imu_samples", ds.imu.size()},
                    {"loop_candidates", ds.loop_candidates.size()},
                    {"out", out_dir.string()}}
                   .dump(2)
            << '\n';
}

void cmd_eval(const fs::path& est_path, const fs::path& gt_path, const fs::path& map_est,
              const fs::path& map_gt) {
  if (map_est.empty() != map_gt.empty()) {
    ramba::fail(ramba::ErrorCategory::kInvalidArgument,
                "--map-est and --map-gt must be given together");
  }
  const auto est = ramba::io::read_trajectory(est_path);
  const auto gt = ramba::io::read_trajectory(gt_path);
  ramba::MetricReport m;
  const ramba::AteResult ate = ramba::ate_rmse(est, gt);
  m.ate_rmse_m = ate.rmse;
  m.alignment = ate.alignment;
  m.rpe = ramba::rpe_rot_rmse(est, gt);
  if (!map_est.empty()) {
    m.chamfer_l1_cm = ramba::chamfer_l1(ramba::io::read_ply(map_est), ramba::io::read_ply(map_gt));
  }
  std::cout << ramba::io::metric_report_json(m) << '\n';
}

void cmd_verify_loops(const fs::path& dataset_dir, const fs::path& candidates_path,
                      const fs::path& out_path, const fs::path& config_path) {
  const ramba::RunConfig config = config_path.empty() ? ramba::profile_config("snail")
                                                      : ramba::io::read_config(config_path);
  const ramba::Dataset dataset = ramba::io::load_dataset(dataset_dir);
  const auto candidates = ramba::io::read_loop_candidates(candidates_path);
  const auto poses = dataset.initial_poses();
  ramba::LoopConfig lc = config.loop;
  lc.registration.voxel_size = config.voxel_size;

  std::ofstream out(out_path);
  if (!out) ramba::fail(ramba::ErrorCategory::kIo, "cannot open '" + out_path.string() + "'");
  out << "# query_id match_id accepted residual_rmse inliers tx ty tz qx qy qz qw\n";
  std::size_t accepted = 0;
  for (const auto& c : candidates) {
    const auto v = ramba::verify_loop(c, dataset.frames, poses, dataset.ext, lc);
    const auto& p = v.loop.relative_pose;
    const auto& q = p.rotation.quaternion();
    char buf[512];
    std::snprintf(buf, sizeof buf, "%lld %lld %d %.17g %zu %.17g %.17g %.17g %.17g %.17g %.17g %.17g",
                  static_cast<long long>(c.query_id), static_cast<long long>(c.match_id),
                  v.accepted ? 1 : 0, v.loop.residual_rmse, v.loop.inliers, p.translation.x(),
                  p.translation.y(), p.translation.z(), q.x(), q.y(), q.z(), q.w());
    out << buf << '\n';
    if (v.accepted) ++accepted;
    else std::cerr << "rejected " << c.query_id << ' ' << c.match_id << ": " << v.reason << '\n';
  }
  out.flush();
  if (!out) ramba::fail(ramba::ErrorCategory::kIo, "failed writing '" + out_path.string() + "'");
  std::cout << json{{"candidates", candidates.size()}, {"accepted", accepted}}.dump() << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Radar bundle adjustment toolkit"};
  app.require_subcommand(1);

  std::string dataset, config, out;
  auto* run = app.add_subcommand("run", "Refine a dataset's trajectory and export map and reports");
  run->add_option("--dataset", dataset, "Dataset directory")->required();
  run->add_option("--config", config, "JSON run configuration")->required();
  run->add_option("--out", out, "Output directory")->required();

  std::string scenario;
  std::uint64_t seed = 0;
  double perturb_rot = -1.0;
  double perturb_trans = -1.0;
  auto* simulate = app.add_subcommand("simulate", "Write a synthetic dataset");
  simulate->add_option("--scenario", scenario, "line, loop, loop-drift or figure-eight")->required();
  simulate->add_option("--seed", seed, "Random seed")->required();
  simulate->add_option("--out", out, "Output directory")->required();
  simulate->add_option("--perturb-rot", perturb_rot, "Override pose rotation noise (rad)");
  simulate->add_option("--perturb-trans", perturb_trans, "Override pose translation noise (m)");

  std::string est, gt, map_est, map_gt;
  auto* eval = app.add_subcommand("eval", "ATE, rotation RPE and Chamfer-L1");
  eval->add_option("--est", est, "Estimated trajectory")->required();
  eval->add_option("--gt", gt, "Ground-truth trajectory")->required();
  eval->add_option("--map-est", map_est, "Map from estimated poses (PLY)");
  eval->add_option("--map-gt", map_gt, "Map from ground-truth poses (PLY)");

  std::string candidates;
  auto* verify = app.add_subcommand("verify-loops", "Verify loop candidates by submap registration");
  verify->add_option("--dataset", dataset, "Dataset directory")->required();
  verify->add_option("--candidates", candidates, "Loop candidates file")->required();
  verify->add_option("--out", out, "Output file")->required();
  verify->add_option("--config", config, "JSON run configuration");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return report_error(ramba::ErrorCategory::kInvalidArgument, e.what());
  }

  try {
    if (*run) cmd_run(dataset, config, out);
    if (*simulate) cmd_simulate(scenario, seed, out, perturb_rot, perturb_trans);
    if (*eval) cmd_eval(est, gt, map_est, map_gt);
    if (*verify) cmd_verify_loops(dataset, candidates, out, config);
  } catch (const ramba::Error& e) {
    return report_error(e.category(), e.what());
  } catch (const std::exception& e) {
    return report_error(ramba::ErrorCategory::kIo, e.what());
  }
  return 0;
}
