#include "deepvo/synthworld.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include "deepvo/error.hpp"
#include "deepvo/keyvalue.hpp"

namespace deepvo {
namespace {

constexpr double kPi = std::numbers::pi;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

double hash01(std::uint64_t seed, std::int64_t i, std::int64_t j) {
  std::uint64_t h = splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(i) * 0x632BE59BD9B4E019ULL +
                                                 static_cast<std::uint64_t>(j)));
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

double smooth(double t) { return t * t * (3.0 - 2.0 * t); }

double value_noise(std::uint64_t seed, double x, double y) {
  const double fx = std::floor(x);
  const double fy = std::floor(y);
  const auto i = static_cast<std::int64_t>(fx);
  const auto j = static_cast<std::int64_t>(fy);
  const double tx = smooth(x - fx);
  const double ty = smooth(y - fy);
  const double a = hash01(seed, i, j);
  const double b = hash01(seed, i + 1, j);
  const double c = hash01(seed, i, j + 1);
  const double d = hash01(seed, i + 1, j + 1);
  return (a + (b - a) * tx) + ((c + (d - c) * tx) - (a + (b - a) * tx)) * ty;
}

using Rgb = std::array<double, 3>;

Rgb lerp(const Rgb& a, const Rgb& b, double t) {
  return {a[0] + (b[0] - a[0]) * t, a[1] + (b[1] - a[1]) * t, a[2] + (b[2] - a[2]) * t};
}

/// Seed-derived appearance of one region.
struct Palette {
  Rgb ground_dark;
  Rgb ground_light;
  Rgb skyline;
  Rgb horizon;
  Rgb zenith;
  std::array<double, 6> skyline_phase;
};

Palette make_palette(std::uint64_t seed) {
  std::mt19937_64 rng(splitmix64(seed ^ 0xC0FFEEULL));
  std::uniform_real_distribution<double> dark(25.0, 100.0);
  std::uniform_real_distribution<double> light(140.0, 235.0);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * kPi);
  Palette p;
  for (auto& c : p.ground_dark) c = dark(rng);
  for (auto& c : p.ground_light) c = light(rng);
  for (auto& c : p.skyline) c = dark(rng) * 0.6;
  p.horizon = {200.0, 205.0, 210.0};
  p.zenith = {110.0, 150.0, 215.0};
  for (auto& ph : p.skyline_phase) ph = phase(rng);
  return p;
}

/// Renders from a pose expressed in unscaled world units.
class Renderer {
 public:
  explicit Renderer(const WorldConfig& cfg) : cfg_(cfg), palette_(make_palette(cfg.seed)) {}

  Raster render(const PlanarState& state) const {
    const int w = cfg_.image_width;
    const int h = cfg_.image_height;
    const int ss = cfg_.supersample;
    const double cx = 0.5 * w;
    const double cy = 0.5 * h;
    const double c = std::cos(state.theta);
    const double s = std::sin(state.theta);
    Raster img(w, h, 3);
    for (int v = 0; v < h; ++v) {
      for (int u = 0; u < w; ++u) {
        Rgb acc{0.0, 0.0, 0.0};
        for (int sy = 0; sy < ss; ++sy) {
          for (int sx = 0; sx < ss; ++sx) {
            const double rx = (u + (sx + 0.5) / ss - cx) / cfg_.focal;
            const double ry = (v + (sy + 0.5) / ss - cy) / cfg_.focal;
            // World ray = R_y(theta) * (rx, ry, 1).
            const double wx = c * rx + s;
            const double wz = -s * rx + c;
            const Rgb col = ry > 1e-9 ? ground(state, wx, ry, wz) : sky(wx, ry, wz);
            for (int k = 0; k < 3; ++k) acc[k] += col[k];
          }
        }
        for (int k = 0; k < 3; ++k) {
          const double val = acc[k] / (ss * ss);
          img.at(u, v, k) = static_cast<std::uint8_t>(std::clamp(std::lround(val), 0L, 255L));
        }
      }
    }
    return img;
  }

 private:
  Rgb ground(const PlanarState& state, double wx, double wy, double wz) const {
    const double t = cfg_.camera_height / wy;
    const double gx = state.x + t * wx + cfg_.origin_x;
    const double gz = state.z + t * wz + cfg_.origin_z;
    const double cell = cfg_.texture_cell;
    const double n = 0.55 * value_noise(cfg_.seed, gx / cell, gz / cell) +
                     0.30 * value_noise(cfg_.seed + 1, gx / (3.1 * cell), gz / (3.1 * cell)) +
                     0.15 * value_noise(cfg_.seed + 2, gx / (11.3 * cell), gz / (11.3 * cell));
    const double contrast = std::clamp((n - 0.5) * 2.2 + 0.5, 0.0, 1.0);
    const Rgb base = lerp(palette_.ground_dark, palette_.ground_light, contrast);
    const double dist = t * std::hypot(wx, wz);
    const double fog = std::exp(-dist / cfg_.fog_distance);
    return lerp(palette_.horizon, base, fog);
  }

  Rgb sky(double wx, double wy, double wz) const {
    const double elevation = std::atan2(-wy, std::hypot(wx, wz));
    const double azimuth = std::atan2(wx, wz);
    double skyline = 0.06;
    for (int k = 0; k < 6; ++k) {
      skyline += 0.025 / (1 + k / 2) * std::sin((k + 1) * 3.0 * azimuth + palette_.skyline_phase[k]);
    }
    // Blocky "buildings" on top of the rolling hills.
    const double bin = std::floor(azimuth * 40.0 / kPi);
    skyline += 0.05 * hash01(cfg_.seed + 7, static_cast<std::int64_t>(bin), 0);
    if (elevation < skyline) {
      const double shade = 0.7 + 0.6 * hash01(cfg_.seed + 9, static_cast<std::int64_t>(bin), 1);
      const Rgb col = {palette_.skyline[0] * shade, palette_.skyline[1] * shade, palette_.skyline[2] * shade};
      return col;
    }
    return lerp(palette_.horizon, palette_.zenith, std::clamp(elevation * 2.5, 0.0, 1.0));
  }

  const WorldConfig& cfg_;
  Palette palette_;
};

std::vector<PlanarState> script_states(const MotionScript& script) {
  std::vector<PlanarState> states{PlanarState{}};
  states.reserve(script.size() + 1);
  for (const auto& cmd : script) {
    if (!std::isfinite(cmd.speed) || !std::isfinite(cmd.yaw_rate)) {
      throw Error(Errc::InvalidConfig, "non-finite motion command");
    }
    const double half = 0.5 * cmd.yaw_rate;
    states.push_back(compose(states.back(), {cmd.speed * std::sin(half), cmd.speed * std::cos(half),
                                             cmd.yaw_rate}));
  }
  return states;
}

}  // namespace

void WorldConfig::validate() const {
  if (!(extent_x > 0 && extent_z > 0 && texture_cell > 0 && camera_height > 0 && focal > 0 &&
        image_width > 0 && image_height > 0 && scale_factor > 0 && fog_distance > 0 && supersample > 0)) {
    throw Error(Errc::InvalidConfig, "world configuration values must be positive");
  }
}

WorldConfig read_world_config(const std::filesystem::path& path) {
  const auto kv = KeyValues::load(path);
  WorldConfig cfg;
  cfg.seed = static_cast<std::uint64_t>(kv.number_or("seed", static_cast<double>(cfg.seed)));
  const double extent = kv.number_or("extent", cfg.extent_x);
  cfg.extent_x = kv.number_or("extent_x", extent);
  cfg.extent_z = kv.number_or("extent_z", extent);
  cfg.texture_cell = kv.number_or("texture_cell", cfg.texture_cell);
  cfg.camera_height = kv.number_or("camera_height", cfg.camera_height);
  cfg.focal = kv.number_or("focal", cfg.focal);
  const double size = kv.number_or("image_size", 0.0);
  cfg.image_width = static_cast<int>(kv.number_or("image_width", size > 0 ? size : cfg.image_width));
  cfg.image_height = static_cast<int>(kv.number_or("image_height", size > 0 ? size : cfg.image_height));
  cfg.scale_factor = kv.number_or("scale_factor", cfg.scale_factor);
  cfg.origin_x = kv.number_or("origin_x", cfg.origin_x);
  cfg.origin_z = kv.number_or("origin_z", cfg.origin_z);
  cfg.fog_distance = kv.number_or("fog_distance", cfg.fog_distance);
  cfg.supersample = static_cast<int>(kv.number_or("supersample", cfg.supersample));
  cfg.validate();
  return cfg;
}

MotionScript read_motion_script(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::IoError, "cannot open " + path.string());
  MotionScript script;
  std::string line;
  bool header_seen = false;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos || line[0] == '#') continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream ss(line);
    MotionCommand cmd;
    if (!(ss >> cmd.speed >> cmd.yaw_rate)) {
      if (script.empty() && !header_seen) {
        header_seen = true;
        continue;
      }
      throw Error(Errc::MalformedLine, "script line '" + line + "'");
    }
    script.push_back(cmd);
  }
  return script;
}

void write_motion_script(const std::filesystem::path& path, const MotionScript& script) {
  std::ofstream out(path);
  if (!out) throw Error(Errc::IoError, "cannot write " + path.string());
  out.precision(17);
  out << "speed,yaw_rate\n";
  for (const auto& c : script) out << c.speed << ',' << c.yaw_rate << '\n';
}

std::vector<PoseMatrix> script_poses(const WorldConfig& cfg, const MotionScript& script) {
  const auto states = script_states(script);
  std::vector<PoseMatrix> poses;
  poses.reserve(states.size());
  for (const auto& st : states) {
    poses.push_back(planar_pose(st.x * cfg.scale_factor, st.z * cfg.scale_factor, st.theta));
  }
  return poses;
}

Raster render_frame(const WorldConfig& cfg, const PoseMatrix& pose) {
  cfg.validate();
  const PlanarState st{pose.translation.x() / cfg.scale_factor, pose.translation.z() / cfg.scale_factor,
                       planar_yaw(pose.rotation)};
  return Renderer(cfg).render(st);
}

SyntheticSequence render_sequence(const WorldConfig& cfg, const MotionScript& script) {
  cfg.validate();
  if (script.empty()) throw Error(Errc::InvalidConfig, "motion script is empty");
  const auto states = script_states(script);
  for (const auto& st : states) {
    if (std::abs(st.x) > 0.5 * cfg.extent_x || std::abs(st.z) > 0.5 * cfg.extent_z) {
      throw Error(Errc::InvalidConfig, "trajectory leaves the world extent");
    }
  }
  const Renderer renderer(cfg);
  SyntheticSequence seq;
  seq.frames.reserve(states.size());
  for (const auto& st : states) seq.frames.push_back(renderer.render(st));
  seq.poses = script_poses(cfg, script);
  return seq;
}

WorldConfig region_b_config(const WorldConfig& cfg) {
  WorldConfig b = cfg;
  b.seed = splitmix64(cfg.seed ^ 0xB0B0B0B0ULL);
  b.origin_x = cfg.origin_x + cfg.extent_x;
  return b;
}

RegionCorpora region_split(const WorldConfig& cfg, std::span<const MotionScript> scripts) {
  const WorldConfig b = region_b_config(cfg);
  RegionCorpora out;
  for (const auto& script : scripts) {
    out.region_a.push_back(render_sequence(cfg, script));
    out.region_b.push_back(render_sequence(b, script));
  }
  return out;
}

MotionScript random_drive_script(std::uint64_t seed, int steps, double min_speed, double max_speed,
                                 double max_yaw_rate) {
  std::mt19937_64 rng(splitmix64(seed));
  std::uniform_real_distribution<double> phase(0.0, 2.0 * kPi);
  std::uniform_real_distribution<double> period(8.0, 24.0);
  const double ps = period(rng), py = period(rng), ps2 = period(rng);
  const double phs = phase(rng), phy = phase(rng), phs2 = phase(rng);
  MotionScript script;
  script.reserve(steps);
  for (int k = 0; k < steps; ++k) {
    const double mix = 0.5 + 0.35 * std::sin(2 * kPi * k / ps + phs) + 0.15 * std::sin(2 * kPi * k / ps2 + phs2);
    const double speed = min_speed + (max_speed - min_speed) * std::clamp(mix, 0.0, 1.0);
    const double yaw = max_yaw_rate * std::sin(2 * kPi * k / py + phy);
    script.push_back({speed, yaw});
  }
  return script;
}

ManifestEntry write_sequence(const std::filesystem::path& dir, const std::string& seq_id,
                             const SyntheticSequence& seq) {
  const auto seq_dir = dir / seq_id;
  const auto image_dir = seq_dir / "image";
  std::filesystem::create_directories(image_dir);
  for (std::size_t i = 0; i < seq.frames.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "%06zu.png", i);
    save_png(image_dir / name, seq.frames[i]);
  }
  write_pose_file(seq_dir / "poses.txt", seq.poses);
  return {seq_id, std::filesystem::path(seq_id) / "image", std::filesystem::path(seq_id) / "poses.txt"};
}

}  // namespace deepvo
