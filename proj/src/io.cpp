#include "ramba/io.hpp"

#include <json.hpp>

#include <Eigen/Cholesky>

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <sstream>

#include "ramba/error.hpp"

namespace ramba::io {

namespace {

using nlohmann::json;

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path);
  if (!out) fail(ErrorCategory::kIo, "cannot open '" + path.string() + "' for writing");
  return out;
}

void check_written(std::ofstream& out, const fs::path& path) {
  out.flush();
  if (!out) fail(ErrorCategory::kIo, "failed writing '" + path.string() + "'");
}

std::vector<std::string> tokenize(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream ss(line);
  std::string tok;
  while (ss >> tok) out.push_back(tok);
  return out;
}

bool parse_double(const std::string& s, double& v) {
  const char* end = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(s.data(), end, v);
  return ec == std::errc() && ptr == end && std::isfinite(v);
}

bool parse_int(const std::string& s, std::int64_t& v) {
  const char* end = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(s.data(), end, v);
  return ec == std::errc() && ptr == end;
}

/// Collected problems, reported together.
class Issues {
 public:
  void add(const fs::path& file, std::size_t line, const std::string& msg) {
    std::string where = file.filename().string();
    if (line > 0) where += ":" + std::to_string(line);
    items_.push_back(where + ": " + msg);
  }
  void add(const std::string& msg) { items_.push_back(msg); }
  bool empty() const { return items_.empty(); }
  [[noreturn]] void raise(ErrorCategory category) const {
    std::string msg = std::to_string(items_.size()) + " dataset problem(s):";
    for (const auto& i : items_) msg += "\n  " + i;
    fail(category, msg);
  }
  void raise_if_any() const {
    if (!items_.empty()) raise(ErrorCategory::kData);
  }

 private:
  std::vector<std::string> items_;
};

/// Numeric rows of a whitespace-separated text file, skipping blanks and '#'.
struct Row {
  std::size_t line = 0;
  std::vector<std::string> tokens;
};

std::vector<Row> read_rows(const fs::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCategory::kIo, "cannot open '" + path.string() + "'");
  std::vector<Row> rows;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    rows.push_back({n, tokenize(line)});
  }
  return rows;
}

/// Parses all tokens of `row` as doubles, recording an issue on failure.
bool numbers(const Row& row, std::vector<double>& out, const fs::path& file, Issues& issues) {
  out.resize(row.tokens.size());
  for (std::size_t i = 0; i < row.tokens.size(); ++i) {
    if (!parse_double(row.tokens[i], out[i])) {
      issues.add(file, row.line, "invalid number '" + row.tokens[i] + "'");
      return false;
    }
  }
  return true;
}

bool make_pose(const double* v, Pose& pose) {
  // v = tx ty tz qx qy qz qw
  const Eigen::Quaterniond q(v[6], v[3], v[4], v[5]);
  if (!(q.norm() > 0.5)) return false;
  pose = Pose(Rotation(q.normalized()), Vec3(v[0], v[1], v[2]));
  return true;
}

std::string pose_columns(const Pose& p) {
  const Eigen::Quaterniond& q = p.rotation.quaternion();
  const Vec3& t = p.translation;
  return fmt(t.x()) + " " + fmt(t.y()) + " " + fmt(t.z()) + " " + fmt(q.x()) + " " + fmt(q.y()) +
         " " + fmt(q.z()) + " " + fmt(q.w());
}

std::string vec_columns(const Vec3& v) {
  return fmt(v.x()) + " " + fmt(v.y()) + " " + fmt(v.z());
}

StampedTrajectory parse_trajectory(const fs::path& path, Issues& issues,
                                   std::vector<std::vector<double>>* extra = nullptr) {
  StampedTrajectory out;
  std::vector<double> v;
  for (const Row& row : read_rows(path)) {
    const std::size_t cols = row.tokens.size();
    if (cols != 8 && !(extra && cols == 17)) {
      issues.add(path, row.line,
                 "expected " + std::string(extra ? "8 or 17" : "8") + " columns, found " +
                     std::to_string(cols));
      continue;
    }
    if (!numbers(row, v, path, issues)) continue;
    StampedPose sp;
    sp.timestamp = v[0];
    if (!make_pose(v.data() + 1, sp.pose)) {
      issues.add(path, row.line, "degenerate quaternion");
      continue;
    }
    if (!out.empty() && !(sp.timestamp > out.back().timestamp)) {
      issues.add(path, row.line, "timestamps not strictly increasing");
    }
    out.push_back(sp);
    if (extra) extra->emplace_back(v.begin() + 8, v.end());
  }
  return out;
}

Vec3 vec3(const json& j, const std::string& key) {
  if (!j.is_array() || j.size() != 3) {
    fail(ErrorCategory::kData, "manifest.json: '" + key + "' must be an array of 3 numbers");
  }
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

json vec_json(const Eigen::VectorXd& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

template <int N>
Eigen::Matrix<double, N, 1> vec_from(const json& j, const std::string& key) {
  if (!j.is_array() || j.size() != N) {
    fail(ErrorCategory::kInvalidArgument,
         "config: '" + key + "' must be an array of " + std::to_string(N) + " numbers");
  }
  Eigen::Matrix<double, N, 1> v;
  for (int i = 0; i < N; ++i) v[i] = j[static_cast<std::size_t>(i)].get<double>();
  return v;
}

}  // namespace

void write_trajectory(const fs::path& path, std::span<const StampedPose> trajectory) {
  auto out = open_out(path);
  out << "# timestamp tx ty tz qx qy qz qw\n";
  for (const StampedPose& p : trajectory) out << fmt(p.timestamp) << ' ' << pose_columns(p.pose) << '\n';
  check_written(out, path);
}

StampedTrajectory read_trajectory(const fs::path& path) {
  Issues issues;
  StampedTrajectory t = parse_trajectory(path, issues);
  issues.raise_if_any();
  return t;
}

void write_states(const fs::path& path, std::span<const KeyframeState> states) {
  auto out = open_out(path);
  out << "# timestamp tx ty tz qx qy qz qw vx vy vz bgx bgy bgz bax bay baz\n";
  for (const KeyframeState& s : states) {
    out << fmt(s.timestamp) << ' ' << pose_columns(s.pose) << ' ' << vec_columns(s.velocity_w)
        << ' ' << vec_columns(s.bias_gyro) << ' ' << vec_columns(s.bias_accel) << '\n';
  }
  check_written(out, path);
}

void write_ply(const fs::path& path, std::span<const Vec3> points) {
  auto out = open_out(path);
  out << "ply\nformat ascii 1.0\nelement vertex " << points.size()
      << "\nproperty double x\nproperty double y\nproperty double z\nend_header\n";
  for (const Vec3& p : points) out << vec_columns(p) << '\n';
  check_written(out, path);
}

std::vector<Vec3> read_ply(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCategory::kIo, "cannot open '" + path.string() + "'");
  const auto bad = [&](const std::string& msg) {
    fail(ErrorCategory::kData, path.filename().string() + ": " + msg);
  };

  std::string line;
  if (!std::getline(in, line) || line.rfind("ply", 0) != 0) bad("not a PLY file");
  std::string format;
  std::size_t vertex_count = 0;
  bool in_vertex = false;
  bool seen_vertex = false;
  struct Property {
    std::string name;
    std::size_t size;
    bool is_double;
    bool is_float;
  };
  std::vector<Property> props;
  const std::map<std::string, std::size_t> sizes{
      {"char", 1},  {"uchar", 1},  {"int8", 1},   {"uint8", 1},  {"short", 2},
      {"ushort", 2}, {"int16", 2},  {"uint16", 2}, {"int", 4},    {"uint", 4},
      {"int32", 4}, {"uint32", 4}, {"float", 4},  {"float32", 4}, {"double", 8},
      {"float64", 8}};
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto tok = tokenize(line);
    if (tok.empty()) continue;
    if (tok[0] == "end_header") break;
    if (tok[0] == "format" && tok.size() >= 2) format = tok[1];
    if (tok[0] == "element" && tok.size() == 3) {
      if (seen_vertex && !in_vertex) continue;
      in_vertex = tok[1] == "vertex";
      if (in_vertex) {
        if (seen_vertex) bad("duplicate vertex element");
        seen_vertex = true;
        std::int64_t n = 0;
        if (!parse_int(tok[2], n) || n < 0) bad("invalid vertex count");
        vertex_count = static_cast<std::size_t>(n);
      } else if (!seen_vertex) {
        bad("elements before vertex are not supported");
      }
    }
    if (tok[0] == "property" && in_vertex) {
      if (tok.size() != 3 || !sizes.contains(tok[1])) bad("unsupported vertex property '" + line + "'");
      props.push_back({tok[2], sizes.at(tok[1]), tok[1] == "double" || tok[1] == "float64",
                       tok[1] == "float" || tok[1] == "float32"});
    }
  }
  std::array<int, 3> xyz{-1, -1, -1};
  for (std::size_t i = 0; i < props.size(); ++i) {
    for (int a = 0; a < 3; ++a) {
      if (props[i].name == std::string(1, static_cast<char>('x' + a))) xyz[a] = static_cast<int>(i);
    }
  }
  if (std::any_of(xyz.begin(), xyz.end(), [](int i) { return i < 0; })) bad("missing x/y/z");

  std::vector<Vec3> points(vertex_count);
  if (format == "ascii") {
    for (std::size_t v = 0; v < vertex_count; ++v) {
      if (!std::getline(in, line)) bad("truncated vertex data");
      const auto tok = tokenize(line);
      if (tok.size() < props.size()) bad("short vertex line " + std::to_string(v));
      for (int a = 0; a < 3; ++a) {
        if (!parse_double(tok[static_cast<std::size_t>(xyz[a])], points[v][a])) {
          bad("invalid coordinate in vertex " + std::to_string(v));
        }
      }
    }
  } else if (format == "binary_little_endian") {
    std::size_t stride = 0;
    std::vector<std::size_t> offset;
    for (const auto& p : props) {
      offset.push_back(stride);
      stride += p.size;
    }
    std::vector<char> buf(stride);
    for (std::size_t v = 0; v < vertex_count; ++v) {
      if (!in.read(buf.data(), static_cast<std::streamsize>(stride))) bad("truncated vertex data");
      for (int a = 0; a < 3; ++a) {
        const auto& p = props[static_cast<std::size_t>(xyz[a])];
        const char* src = buf.data() + offset[static_cast<std::size_t>(xyz[a])];
        if (p.is_double) {
          double d;
          std::memcpy(&d, src, 8);
          points[v][a] = d;
        } else if (p.is_float) {
          float f;
          std::memcpy(&f, src, 4);
          points[v][a] = f;
        } else {
          bad("coordinates must be float or double");
        }
      }
    }
  } else {
    bad("unsupported PLY format '" + format + "'");
  }
  return points;
}

void write_loop_candidates(const fs::path& path, std::span<const LoopCandidate> loops) {
  auto out = open_out(path);
  out << "# query_id match_id score\n";
  for (const LoopCandidate& c : loops) out << c.query_id << ' ' << c.match_id << ' ' << fmt(c.score) << '\n';
  check_written(out, path);
}

std::vector<LoopCandidate> read_loop_candidates(const fs::path& path) {
  Issues issues;
  std::vector<LoopCandidate> out;
  for (const Row& row : read_rows(path)) {
    LoopCandidate c;
    std::int64_t q = 0;
    std::int64_t m = 0;
    if (row.tokens.size() != 3 || !parse_int(row.tokens[0], q) || !parse_int(row.tokens[1], m) ||
        !parse_double(row.tokens[2], c.score)) {
      issues.add(path, row.line, "expected 'query_id match_id score'");
      continue;
    }
    if (q == m) {
      issues.add(path, row.line, "query_id equals match_id");
      continue;
    }
    c.query_id = q;
    c.match_id = m;
    out.push_back(c);
  }
  issues.raise_if_any();
  return out;
}

std::string config_to_json(const RunConfig& c) {
  json j;
  j["profile"] = c.profile;
  j["voxel_size"] = c.voxel_size;
  j["keyframe_threshold"] = c.keyframe_threshold;
  j["window"] = c.window;
  j["covariance_half_window"] = c.covariance_half_window;
  j["covariance"] = {{"min_points", c.covariance.min_points},
                     {"variance_floor", c.covariance.variance_floor},
                     {"fallback_variance", c.covariance.fallback_variance}};
  j["refresh_covariances"] = c.refresh_covariances;
  j["refresh_translation"] = c.refresh_translation;
  j["refresh_rotation"] = c.refresh_rotation;
  j["gate"] = {{"min_overlap", c.gate.min_overlap}, {"max_time_gap", c.gate.max_time_gap}};
  j["inner_iterations"] = c.inner_iterations;
  j["outer_iterations"] = c.outer_iterations;
  j["lm"] = {{"initial_lambda", c.lm.initial_lambda},
             {"lambda_decrease", c.lm.lambda_decrease},
             {"lambda_increase", c.lm.lambda_increase},
             {"max_factorization_retries", c.lm.max_factorization_retries},
             {"min_relative_decrease", c.lm.min_relative_decrease},
             {"min_step_norm", c.lm.min_step_norm},
             {"min_diagonal", c.lm.min_diagonal}};
  j["imu_noise"] = {{"gyro_noise_density", c.imu_noise.gyro_noise_density},
                    {"accel_noise_density", c.imu_noise.accel_noise_density},
                    {"gyro_walk_density", c.imu_noise.gyro_walk_density},
                    {"accel_walk_density", c.imu_noise.accel_walk_density}};
  j["priors"] = {{"enabled", c.priors.enabled},
                 {"pose_variances", vec_json(c.priors.pose_covariance.diagonal())},
                 {"bias_variances", vec_json(c.priors.bias_covariance.diagonal())}};
  j["huber_delta"] = c.huber_delta ? json(*c.huber_delta) : json(nullptr);
  j["use_imu"] = c.use_imu;
  j["use_ego_velocity"] = c.use_ego_velocity;
  j["max_gyro_bias"] = c.max_gyro_bias;
  j["max_accel_bias"] = c.max_accel_bias;
  const RegistrationConfig& r = c.loop.registration;
  j["loop"] = {{"submap_half_window", c.loop.submap_half_window},
               {"scales", r.scales},
               {"rounds_per_level", r.rounds_per_level},
               {"convergence_tolerance", r.convergence_tolerance},
               {"min_correspondences", r.min_correspondences},
               {"tau_verify", r.tau_verify},
               {"min_inliers", r.min_inliers},
               {"inlier_chi2", r.inlier_chi2},
               {"huber_delta", r.huber_delta ? json(*r.huber_delta) : json(nullptr)},
               {"coarse_huber_delta", r.coarse_huber_delta ? json(*r.coarse_huber_delta) : json(nullptr)}};
  j["pose_graph"] = {
      {"keyframe_information", vec_json(c.pose_graph.keyframe_information.diagonal())},
      {"odometry_information", vec_json(c.pose_graph.odometry_information.diagonal())},
      {"max_iterations", c.pose_graph.max_iterations},
      {"min_relative_decrease", c.pose_graph.min_relative_decrease}};
  j["map_voxel"] = c.map_voxel;
  j["seed"] = c.seed;
  return j.dump(2);
}

RunConfig config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    fail(ErrorCategory::kInvalidArgument, std::string("config: ") + e.what());
  }
  if (!j.is_object()) fail(ErrorCategory::kInvalidArgument, "config: top level must be an object");
  RunConfig c = profile_config(j.value("profile", std::string("snail")));

  std::vector<std::string> unknown;
  // Reads `key` of `obj` into `dst` when present, and tracks unknown keys.
  const auto apply = [&](const json& obj, const std::string& prefix,
                         const std::map<std::string, std::function<void(const json&)>>& fields) {
    for (const auto& [key, value] : obj.items()) {
      const auto it = fields.find(key);
      if (it == fields.end()) {
        unknown.push_back(prefix + key);
        continue;
      }
      it->second(value);
    }
  };
  const auto opt = [](const json& v) -> std::optional<double> {
    if (v.is_null()) return std::nullopt;
    return v.get<double>();
  };

  try {
    apply(j, "",
          {{"profile", [](const json&) {}},
           {"voxel_size", [&](const json& v) { c.voxel_size = v.get<double>(); }},
           {"keyframe_threshold", [&](const json& v) { c.keyframe_threshold = v.get<double>(); }},
           {"window", [&](const json& v) { c.window = v.get<int>(); }},
           {"covariance_half_window", [&](const json& v) { c.covariance_half_window = v.get<int>(); }},
           {"covariance",
            [&](const json& v) {
              apply(v, "covariance.",
                    {{"min_points", [&](const json& x) { c.covariance.min_points = x.get<int>(); }},
                     {"variance_floor",
                      [&](const json& x) { c.covariance.variance_floor = x.get<double>(); }},
                     {"fallback_variance",
                      [&](const json& x) { c.covariance.fallback_variance = x.get<double>(); }}});
            }},
           {"refresh_covariances", [&](const json& v) { c.refresh_covariances = v.get<bool>(); }},
           {"refresh_translation", [&](const json& v) { c.refresh_translation = v.get<double>(); }},
           {"refresh_rotation", [&](const json& v) { c.refresh_rotation = v.get<double>(); }},
           {"gate",
            [&](const json& v) {
              apply(v, "gate.",
                    {{"min_overlap", [&](const json& x) { c.gate.min_overlap = x.get<double>(); }},
                     {"max_time_gap", [&](const json& x) { c.gate.max_time_gap = x.get<double>(); }}});
            }},
           {"inner_iterations", [&](const json& v) { c.inner_iterations = v.get<int>(); }},
           {"outer_iterations", [&](const json& v) { c.outer_iterations = v.get<int>(); }},
           {"lm",
            [&](const json& v) {
              apply(v, "lm.",
                    {{"initial_lambda", [&](const json& x) { c.lm.initial_lambda = x.get<double>(); }},
                     {"lambda_decrease", [&](const json& x) { c.lm.lambda_decrease = x.get<double>(); }},
                     {"lambda_increase", [&](const json& x) { c.lm.lambda_increase = x.get<double>(); }},
                     {"max_factorization_retries",
                      [&](const json& x) { c.lm.max_factorization_retries = x.get<int>(); }},
                     {"min_relative_decrease",
                      [&](const json& x) { c.lm.min_relative_decrease = x.get<double>(); }},
                     {"min_step_norm", [&](const json& x) { c.lm.min_step_norm = x.get<double>(); }},
                     {"min_diagonal", [&](const json& x) { c.lm.min_diagonal = x.get<double>(); }}});
            }},
           {"imu_noise",
            [&](const json& v) {
              apply(v, "imu_noise.",
                    {{"gyro_noise_density",
                      [&](const json& x) { c.imu_noise.gyro_noise_density = x.get<double>(); }},
                     {"accel_noise_density",
                      [&](const json& x) { c.imu_noise.accel_noise_density = x.get<double>(); }},
                     {"gyro_walk_density",
                      [&](const json& x) { c.imu_noise.gyro_walk_density = x.get<double>(); }},
                     {"accel_walk_density",
                      [&](const json& x) { c.imu_noise.accel_walk_density = x.get<double>(); }}});
            }},
           {"priors",
            [&](const json& v) {
              apply(v, "priors.",
                    {{"enabled", [&](const json& x) { c.priors.enabled = x.get<bool>(); }},
                     {"pose_variances",
                      [&](const json& x) {
                        c.priors.pose_covariance = vec_from<6>(x, "priors.pose_variances").asDiagonal();
                      }},
                     {"bias_variances", [&](const json& x) {
                        c.priors.bias_covariance = vec_from<6>(x, "priors.bias_variances").asDiagonal();
                      }}});
            }},
           {"huber_delta", [&](const json& v) { c.huber_delta = opt(v); }},
           {"use_imu", [&](const json& v) { c.use_imu = v.get<bool>(); }},
           {"use_ego_velocity", [&](const json& v) { c.use_ego_velocity = v.get<bool>(); }},
           {"max_gyro_bias", [&](const json& v) { c.max_gyro_bias = v.get<double>(); }},
           {"max_accel_bias", [&](const json& v) { c.max_accel_bias = v.get<double>(); }},
           {"loop",
            [&](const json& v) {
              RegistrationConfig& r = c.loop.registration;
              apply(v, "loop.",
                    {{"submap_half_window",
                      [&](const json& x) { c.loop.submap_half_window = x.get<int>(); }},
                     {"scales", [&](const json& x) { r.scales = x.get<std::vector<double>>(); }},
                     {"rounds_per_level", [&](const json& x) { r.rounds_per_level = x.get<int>(); }},
                     {"convergence_tolerance",
                      [&](const json& x) { r.convergence_tolerance = x.get<double>(); }},
                     {"min_correspondences",
                      [&](const json& x) { r.min_correspondences = x.get<std::size_t>(); }},
                     {"tau_verify", [&](const json& x) { r.tau_verify = x.get<double>(); }},
                     {"min_inliers", [&](const json& x) { r.min_inliers = x.get<std::size_t>(); }},
                     {"inlier_chi2", [&](const json& x) { r.inlier_chi2 = x.get<double>(); }},
                     {"huber_delta", [&](const json& x) { r.huber_delta = opt(x); }},
                     {"coarse_huber_delta", [&](const json& x) { r.coarse_huber_delta = opt(x); }}});
            }},
           {"pose_graph",
            [&](const json& v) {
              PoseGraphConfig& g = c.pose_graph;
              apply(v, "pose_graph.",
                    {{"keyframe_information",
                      [&](const json& x) {
                        g.keyframe_information =
                            vec_from<6>(x, "pose_graph.keyframe_information").asDiagonal();
                      }},
                     {"odometry_information",
                      [&](const json& x) {
                        g.odometry_information =
                            vec_from<6>(x, "pose_graph.odometry_information").asDiagonal();
                      }},
                     {"max_iterations", [&](const json& x) { g.max_iterations = x.get<int>(); }},
                     {"min_relative_decrease",
                      [&](const json& x) { g.min_relative_decrease = x.get<double>(); }}});
            }},
           {"map_voxel", [&](const json& v) { c.map_voxel = v.get<double>(); }},
           {"seed", [&](const json& v) { c.seed = v.get<std::uint64_t>(); }}});
  } catch (const json::exception& e) {
    fail(ErrorCategory::kInvalidArgument, std::string("config: ") + e.what());
  }
  if (!unknown.empty()) {
    std::string msg = "config: unknown keys:";
    for (const auto& k : unknown) msg += " " + k;
    fail(ErrorCategory::kInvalidArgument, msg);
  }
  if (!(c.voxel_size > 0.0) || c.window < 1 || c.inner_iterations < 0 || c.outer_iterations < 0) {
    fail(ErrorCategory::kInvalidArgument,
         "config: voxel_size must be > 0, window >= 1, iteration counts >= 0");
  }
  c.loop.registration.voxel_size = c.voxel_size;
  return c;
}

RunConfig read_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCategory::kIo, "cannot open config '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return config_from_json(ss.str());
}

Dataset load_dataset(const fs::path& dir, LoadReport* report) {
  const fs::path manifest_path = dir / "manifest.json";
  if (!fs::exists(manifest_path)) {
    fail(ErrorCategory::kIo, "no manifest.json in '" + dir.string() + "'");
  }
  json manifest;
  {
    std::ifstream in(manifest_path);
    try {
      manifest = json::parse(in);
    } catch (const json::parse_error& e) {
      fail(ErrorCategory::kData, std::string("manifest.json: ") + e.what());
    }
  }
  if (!manifest.is_object()) fail(ErrorCategory::kData, "manifest.json: top level must be an object");

  Issues issues;
  LoadReport local;
  LoadReport& rep = report ? *report : local;
  const std::set<std::string> known{"format",      "version",    "frames",     "imu",
                                    "trajectory",  "trajectory_frame", "ego", "loops",
                                    "groundtruth", "extrinsics", "gravity"};
  for (const auto& [key, _] : manifest.items()) {
    if (!known.contains(key)) rep.warnings.push_back("manifest.json: ignoring key '" + key + "'");
  }
  const auto stream = [&](const std::string& key, bool required) -> std::optional<fs::path> {
    if (!manifest.contains(key)) {
      if (required) issues.add("manifest.json: missing stream '" + key + "'");
      return std::nullopt;
    }
    if (!manifest[key].is_string()) {
      issues.add("manifest.json: stream '" + key + "' must be a relative path string");
      return std::nullopt;
    }
    const fs::path p = dir / manifest[key].get<std::string>();
    if (!fs::exists(p)) {
      issues.add("manifest.json: stream '" + key + "' file '" + p.filename().string() +
                 "' does not exist");
      return std::nullopt;
    }
    return p;
  };
  const auto frames_path = stream("frames", true);
  const auto imu_path = stream("imu", true);
  const auto traj_path = stream("trajectory", true);
  const auto ego_path = stream("ego", false);
  const auto loops_path = stream("loops", false);
  const auto gt_path = stream("groundtruth", false);

  Dataset ds;
  bool radar_frame_poses = false;
  try {
    if (manifest.contains("trajectory_frame")) {
      const auto f = manifest["trajectory_frame"].get<std::string>();
      if (f == "radar") {
        radar_frame_poses = true;
      } else if (f != "body") {
        issues.add("manifest.json: trajectory_frame must be 'body' or 'radar'");
      }
    }
    if (manifest.contains("extrinsics")) {
      const json& e = manifest["extrinsics"];
      const json& q = e.at("rotation_xyzw");
      if (!q.is_array() || q.size() != 4) {
        issues.add("manifest.json: extrinsics.rotation_xyzw must have 4 numbers");
      } else {
        const Eigen::Quaterniond quat(q[3].get<double>(), q[0].get<double>(), q[1].get<double>(),
                                      q[2].get<double>());
        if (!(quat.norm() > 0.5)) issues.add("manifest.json: degenerate extrinsic rotation");
        else ds.ext.radar_in_body = Pose(Rotation(quat.normalized()), vec3(e.at("translation"), "extrinsics.translation"));
      }
    }
    if (manifest.contains("gravity")) ds.ext.gravity_w = vec3(manifest["gravity"], "gravity");
  } catch (const json::exception& e) {
    issues.add(std::string("manifest.json: ") + e.what());
  }
  issues.raise_if_any();

  std::vector<double> v;
  // Frame index and point files.
  {
    std::vector<std::int64_t> missing;
    std::set<std::int64_t> ids;
    for (const Row& row : read_rows(*frames_path)) {
      std::int64_t id = 0;
      RadarFrame f;
      if (row.tokens.size() != 3 || !parse_int(row.tokens[0], id) ||
          !parse_double(row.tokens[1], f.timestamp)) {
        issues.add(*frames_path, row.line, "expected 'id timestamp points_file'");
        continue;
      }
      f.id = id;
      if (!ids.insert(id).second) issues.add(*frames_path, row.line, "duplicate frame id");
      if (!ds.frames.empty() && !(f.timestamp > ds.frames.back().timestamp)) {
        issues.add(*frames_path, row.line, "timestamps not strictly increasing");
      }
      const fs::path pts = dir / row.tokens[2];
      if (!fs::exists(pts)) {
        missing.push_back(id);
      } else {
        for (const Row& prow : read_rows(pts)) {
          if (prow.tokens.size() != 3) {
            issues.add(pts, prow.line, "expected 'x y z'");
            continue;
          }
          if (numbers(prow, v, pts, issues)) f.points.emplace_back(v[0], v[1], v[2]);
        }
      }
      ds.frames.push_back(std::move(f));
    }
    if (!missing.empty()) {
      std::string msg = std::to_string(missing.size()) + " frame file(s) missing, ids:";
      for (auto id : missing) msg += " " + std::to_string(id);
      issues.add(*frames_path, 0, msg);
    }
    if (ds.frames.empty()) issues.add(*frames_path, 0, "no frames");
  }

  for (const Row& row : read_rows(*imu_path)) {
    if (row.tokens.size() != 7) {
      issues.add(*imu_path, row.line, "expected 't gx gy gz ax ay az'");
      continue;
    }
    if (!numbers(row, v, *imu_path, issues)) continue;
    ImuSample s{v[0], Vec3(v[1], v[2], v[3]), Vec3(v[4], v[5], v[6])};
    if (!ds.imu.empty() && !(s.timestamp > ds.imu.back().timestamp)) {
      issues.add(*imu_path, row.line, "timestamps not strictly increasing");
    }
    ds.imu.push_back(s);
  }

  {
    std::vector<std::vector<double>> extra;
    const StampedTrajectory traj = parse_trajectory(*traj_path, issues, &extra);
    if (traj.size() != ds.frames.size()) {
      issues.add(*traj_path, 0,
                 "has " + std::to_string(traj.size()) + " poses for " +
                     std::to_string(ds.frames.size()) + " frames");
    } else {
      const Pose body_from_radar = ds.ext.radar_in_body.inverse();
      for (std::size_t i = 0; i < traj.size(); ++i) {
        if (std::abs(traj[i].timestamp - ds.frames[i].timestamp) > 1e-6) {
          issues.add(*traj_path, 0,
                     "pose " + std::to_string(i) + " timestamp does not match frame " +
                         std::to_string(ds.frames[i].id));
        }
        KeyframeState s;
        s.pose = radar_frame_poses ? traj[i].pose * body_from_radar : traj[i].pose;
        s.timestamp = ds.frames[i].timestamp;
        s.frame_id = ds.frames[i].id;
        if (extra[i].size() == 9) {
          s.velocity_w = Vec3(extra[i][0], extra[i][1], extra[i][2]);
          s.bias_gyro = Vec3(extra[i][3], extra[i][4], extra[i][5]);
          s.bias_accel = Vec3(extra[i][6], extra[i][7], extra[i][8]);
        }
        ds.initial.push_back(s);
      }
      if (std::any_of(extra.begin(), extra.end(), [](const auto& e) { return e.empty(); }) &&
          !std::all_of(extra.begin(), extra.end(), [](const auto& e) { return e.empty(); })) {
        issues.add(*traj_path, 0, "mixes 8- and 17-column rows");
      }
      if (!extra.empty() && extra.front().empty()) {
        rep.warnings.push_back(traj_path->filename().string() +
                               ": no velocities or biases, starting from zero");
      }
    }
  }

  if (ego_path) {
    std::map<double, std::size_t> by_time;
    for (std::size_t i = 0; i < ds.frames.size(); ++i) by_time[ds.frames[i].timestamp] = i;
    for (const Row& row : read_rows(*ego_path)) {
      if (row.tokens.size() != 4 && row.tokens.size() != 10) {
        issues.add(*ego_path, row.line, "expected 4 or 10 columns");
        continue;
      }
      if (!numbers(row, v, *ego_path, issues)) continue;
      const auto it = by_time.lower_bound(v[0] - 1e-6);
      if (it == by_time.end() || std::abs(it->first - v[0]) > 1e-6) {
        rep.warnings.push_back(ego_path->filename().string() + ":" + std::to_string(row.line) +
                               ": no frame at this timestamp, ignored");
        continue;
      }
      RadarFrame& f = ds.frames[it->second];
      f.has_ego_velocity = true;
      f.ego_velocity = Vec3(v[1], v[2], v[3]);
      if (v.size() == 10) {
        f.ego_covariance << v[4], v[5], v[6], v[5], v[7], v[8], v[6], v[8], v[9];
        if (Eigen::LLT<Mat3>(f.ego_covariance).info() != Eigen::Success) {
          issues.add(*ego_path, row.line, "covariance is not positive definite");
        }
      }
    }
  }

  if (loops_path) {
    try {
      ds.loop_candidates = read_loop_candidates(*loops_path);
    } catch (const Error& e) {
      issues.add(e.what());
    }
    std::set<FrameId> ids;
    for (const auto& f : ds.frames) ids.insert(f.id);
    for (const auto& c : ds.loop_candidates) {
      if (!ids.contains(c.query_id) || !ids.contains(c.match_id)) {
        issues.add(loops_path->filename().string() + ": candidate " + std::to_string(c.query_id) +
                   " " + std::to_string(c.match_id) + " references an unknown frame");
      }
    }
  }

  if (gt_path) {
    const StampedTrajectory gt = parse_trajectory(*gt_path, issues);
    if (gt.size() != ds.frames.size()) {
      issues.add(*gt_path, 0, "has " + std::to_string(gt.size()) + " poses for " +
                                  std::to_string(ds.frames.size()) + " frames");
    } else {
      std::vector<Pose> poses;
      for (const auto& p : gt) poses.push_back(p.pose);
      ds.ground_truth = std::move(poses);
    }
  }

  issues.raise_if_any();
  return ds;
}

void write_dataset(const fs::path& dir, const Dataset& ds) {
  std::error_code ec;
  fs::create_directories(dir / "points", ec);
  if (ec) fail(ErrorCategory::kIo, "cannot create '" + (dir / "points").string() + "': " + ec.message());

  json manifest;
  manifest["format"] = "ramba-dataset";
  manifest["version"] = 1;
  manifest["frames"] = "frames.txt";
  manifest["imu"] = "imu.txt";
  manifest["trajectory"] = "trajectory.txt";
  manifest["trajectory_frame"] = "body";
  manifest["ego"] = "ego.txt";
  manifest["loops"] = "loops.txt";
  const Eigen::Quaterniond& q = ds.ext.radar_in_body.rotation.quaternion();
  manifest["extrinsics"] = {{"rotation_xyzw", {q.x(), q.y(), q.z(), q.w()}},
                            {"translation", vec_json(ds.ext.radar_in_body.translation)}};
  manifest["gravity"] = vec_json(ds.ext.gravity_w);
  if (ds.ground_truth) manifest["groundtruth"] = "groundtruth.txt";
  {
    auto out = open_out(dir / "manifest.json");
    out << manifest.dump(2) << '\n';
    check_written(out, dir / "manifest.json");
  }

  {
    auto out = open_out(dir / "frames.txt");
    out << "# id timestamp points_file\n";
    for (const RadarFrame& f : ds.frames) {
      const std::string name = "points/" + std::to_string(f.id) + ".txt";
      out << f.id << ' ' << fmt(f.timestamp) << ' ' << name << '\n';
      auto pts = open_out(dir / name);
      for (const Vec3& p : f.points) pts << vec_columns(p) << '\n';
      check_written(pts, dir / name);
    }
    check_written(out, dir / "frames.txt");
  }
  {
    auto out = open_out(dir / "imu.txt");
    out << "# t gx gy gz ax ay az\n";
    for (const ImuSample& s : ds.imu) {
      out << fmt(s.timestamp) << ' ' << vec_columns(s.gyro) << ' ' << vec_columns(s.accel) << '\n';
    }
    check_written(out, dir / "imu.txt");
  }
  write_states(dir / "trajectory.txt", ds.initial);
  {
    auto out = open_out(dir / "ego.txt");
    out << "# t vx vy vz cxx cxy cxz cyy cyz czz\n";
    for (const RadarFrame& f : ds.frames) {
      if (!f.has_ego_velocity) continue;
      const Mat3& c = f.ego_covariance;
      out << fmt(f.timestamp) << ' ' << vec_columns(f.ego_velocity) << ' ' << fmt(c(0, 0)) << ' '
          << fmt(c(0, 1)) << ' ' << fmt(c(0, 2)) << ' ' << fmt(c(1, 1)) << ' ' << fmt(c(1, 2))
          << ' ' << fmt(c(2, 2)) << '\n';
    }
    check_written(out, dir / "ego.txt");
  }
  write_loop_candidates(dir / "loops.txt", ds.loop_candidates);
  if (ds.ground_truth) {
    StampedTrajectory gt;
    for (std::size_t i = 0; i < ds.ground_truth->size(); ++i) {
      gt.push_back({ds.frames[i].timestamp, (*ds.ground_truth)[i]});
    }
    write_trajectory(dir / "groundtruth.txt", gt);
  }
}

void write_outputs(const fs::path& dir, const RunResult& result, const RunConfig& config) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) fail(ErrorCategory::kIo, "cannot create '" + dir.string() + "': " + ec.message());

  write_trajectory(dir / "trajectory.txt", result.trajectory);
  write_states(dir / "keyframes.txt", result.keyframes);
  write_ply(dir / "map.ply", result.map);

  json r;
  json decisions = json::array();
  for (const auto& d : result.decisions) {
    decisions.push_back({{"frame_id", d.frame_id}, {"overlap", d.overlap}, {"is_keyframe", d.is_keyframe}});
  }
  r["keyframe_decisions"] = decisions;
  json loops = json::array();
  for (const auto& l : result.loops) {
    loops.push_back({{"query_id", l.candidate.query_id},
                     {"match_id", l.candidate.match_id},
                     {"score", l.candidate.score},
                     {"accepted", l.accepted},
                     {"reason", l.reason},
                     {"residual_rmse", std::isfinite(l.loop.residual_rmse) ? json(l.loop.residual_rmse) : json(nullptr)},
                     {"inliers", l.loop.inliers},
                     {"relative_pose", pose_columns(l.loop.relative_pose)}});
  }
  r["loops"] = loops;
  const SolveReport& s = result.report;
  r["solve"] = {{"objective", s.objective},
                {"step_norms", s.step_norms},
                {"correspondence_counts", s.correspondence_counts},
                {"final_gradient_norm", s.final_gradient_norm},
                {"wall_time_s", s.wall_time_s},
                {"diagnostics", s.diagnostics}};
  json inner = json::array();
  for (const LmSummary& lm : s.inner) {
    inner.push_back({{"initial_objective", lm.initial_objective},
                     {"final_objective", lm.final_objective},
                     {"iterations", lm.iterations.size()},
                     {"termination", lm.termination}});
  }
  r["solve"]["inner"] = inner;
  r["pose_graph"] = {{"initial_objective", result.pose_graph.initial_objective},
                     {"final_objective", result.pose_graph.final_objective},
                     {"iterations", result.pose_graph.iterations.size()},
                     {"termination", result.pose_graph.termination}};
  r["map_points"] = result.map.size();
  {
    auto out = open_out(dir / "report.json");
    out << r.dump(2) << '\n';
    check_written(out, dir / "report.json");
  }
  {
    auto out = open_out(dir / "config.json");
    out << config_to_json(config) << '\n';
    check_written(out, dir / "config.json");
  }
}

std::string metric_report_json(const MetricReport& m) {
  json j;
  j["ate_rmse_m"] = m.ate_rmse_m;
  json rpe = json::object();
  for (const auto& [d, v] : m.rpe.rmse_deg) rpe[fmt(d)] = v;
  j["rpe_rot_rmse_deg"] = rpe;
  json counts = json::object();
  for (const auto& [d, n] : m.rpe.pair_count) counts[fmt(d)] = n;
  j["rpe_pair_counts"] = counts;
  j["rpe_combined_deg"] = m.rpe.empty ? json(nullptr) : json(m.rpe.combined_deg);
  j["rpe_empty"] = m.rpe.empty;
  j["chamfer_l1_cm"] = m.chamfer_l1_cm >= 0.0 ? json(m.chamfer_l1_cm) : json(nullptr);
  j["alignment"] = pose_columns(m.alignment);
  return j.dump(2);
}

}  // namespace ramba::io
