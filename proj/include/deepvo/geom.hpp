#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

namespace deepvo {

/// Rigid world-from-camera transform, the unit of a KITTI ground-truth line.
struct PoseMatrix {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  static PoseMatrix identity() { return {}; }

  /// Row-major 3x4 block [R | t].
  Eigen::Matrix<double, 3, 4> matrix() const;

  /// Rigid inverse, R^T and -R^T t.
  PoseMatrix inverse() const;

  PoseMatrix operator*(const PoseMatrix& rhs) const;
};

/// Planar motion between consecutive frames, in the body frame of the first.
struct DeltaPose {
  double dx = 0.0;      // lateral, camera x (right), meters
  double dz = 0.0;      // forward, camera z, meters
  double dtheta = 0.0;  // yaw about camera y, radians in (-pi, pi]

  Eigen::Vector3d vector() const { return {dx, dz, dtheta}; }
};

struct PlanarState {
  double x = 0.0;
  double z = 0.0;
  double theta = 0.0;
};

/// Wraps an angle into (-pi, pi].
double wrap_angle(double angle);

/// Rotation about the camera y axis; sin(yaw) lands at (0,2).
Eigen::Matrix3d yaw_rotation(double yaw);

/// Pose with rotation R_y(theta) and translation (x, 0, z).
PoseMatrix planar_pose(double x, double z, double theta);

/// Yaw of a rotation projected onto the ground plane.
double planar_yaw(const Eigen::Matrix3d& rotation);

PoseMatrix parse_pose_line(std::string_view line);
std::string format_pose_line(const PoseMatrix& pose);

std::vector<PoseMatrix> read_pose_file(const std::filesystem::path& path);
void write_pose_file(const std::filesystem::path& path, std::span<const PoseMatrix> poses);

DeltaPose relative_delta(const PoseMatrix& a, const PoseMatrix& b);
std::vector<DeltaPose> decompose_trajectory(std::span<const PoseMatrix> poses);

/// Applies one delta in the body frame of `state`.
PlanarState compose(const PlanarState& state, const DeltaPose& delta);
std::vector<PlanarState> integrate_trajectory(const PlanarState& start,
                                              std::span<const DeltaPose> deltas);

std::vector<double> deviation_curve(std::span<const PlanarState> pred,
                                    std::span<const PlanarState> gt);

/// Total distance travelled along a planar trajectory.
double path_length(std::span<const PlanarState> states);

/// CSV with header `t,x,z,theta`.
void write_trajectory_csv(const std::filesystem::path& path, std::span<const PlanarState> states);

/// Shortest text that parses back to the same double; shared by every CSV and plot writer.
std::string format_real(double v);

}  // namespace deepvo
