#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "deepvo/geom.hpp"
#include "deepvo/ingest.hpp"
#include "deepvo/raster.hpp"

namespace deepvo {

/// Procedural driving world: a textured ground plane under a skyline band.
/// Every world length (extent, texel, camera height, fog, script speeds) is
/// multiplied by scale_factor, so two scales render identical frames with
/// ground truth differing only in metric scale.
struct WorldConfig {
  std::uint64_t seed = 1;
  double extent_x = 400.0;      // meters
  double extent_z = 400.0;      // meters
  double texture_cell = 2.0;    // meters; finer cells alias into noise at desk resolutions
  double camera_height = 1.65;  // meters
  double focal = 150.0;         // px
  int image_width = 310;
  int image_height = 94;
  double scale_factor = 1.0;
  double origin_x = 0.0;  // texture-space offset of this region, meters
  double origin_z = 0.0;
  double fog_distance = 80.0;  // meters
  int supersample = 2;

  void validate() const;
};

WorldConfig read_world_config(const std::filesystem::path& path);

struct MotionCommand {
  double speed = 0.0;     // m/frame, before scale_factor
  double yaw_rate = 0.0;  // rad/frame
};
using MotionScript = std::vector<MotionCommand>;

/// CSV with header `speed,yaw_rate`.
MotionScript read_motion_script(const std::filesystem::path& path);
void write_motion_script(const std::filesystem::path& path, const MotionScript& script);

struct SyntheticSequence {
  std::vector<Raster> frames;
  std::vector<PoseMatrix> poses;
};

/// Camera poses produced by a script: each command moves along the mid-step heading.
std::vector<PoseMatrix> script_poses(const WorldConfig& cfg, const MotionScript& script);

Raster render_frame(const WorldConfig& cfg, const PoseMatrix& pose);
SyntheticSequence render_sequence(const WorldConfig& cfg, const MotionScript& script);

struct RegionCorpora {
  std::vector<SyntheticSequence> region_a;
  std::vector<SyntheticSequence> region_b;
};

/// Region B gets an independent seed and a texture window shifted past region A's extent.
WorldConfig region_b_config(const WorldConfig& cfg);
RegionCorpora region_split(const WorldConfig& cfg, std::span<const MotionScript> scripts);

/// Smoothly varying script used by the desk-scale experiments.
MotionScript random_drive_script(std::uint64_t seed, int steps, double min_speed, double max_speed,
                                 double max_yaw_rate);

/// Writes `<dir>/<seq_id>/image/NNNNNN.png`, `<dir>/<seq_id>/poses.txt` and returns the manifest entry.
ManifestEntry write_sequence(const std::filesystem::path& dir, const std::string& seq_id,
                             const SyntheticSequence& seq);

}  // namespace deepvo
