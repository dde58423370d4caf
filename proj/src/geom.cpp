#include "deepvo/geom.hpp"

#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <numbers>

#include <Eigen/LU>
#include <Eigen/SVD>

#include "deepvo/error.hpp"

namespace deepvo {
namespace {

constexpr double kRigidTolerance = 1e-6;
constexpr double kRejectTolerance = 1e-2;

Eigen::Matrix3d nearest_rotation(const Eigen::Matrix3d& m) {
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Matrix3d u = svd.matrixU();
  const Eigen::Matrix3d v = svd.matrixV();
  if ((u * v.transpose()).determinant() < 0.0) u.col(2) *= -1.0;
  return u * v.transpose();
}

double parse_number(std::string_view token, std::string_view line) {
  double value = 0.0;
  // from_chars does not accept a leading '+', KITTI files never use one but be lenient.
  if (!token.empty() && token.front() == '+') token.remove_prefix(1);
  const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
  if (ec != std::errc{} || ptr != token.data() + token.size() || !std::isfinite(value)) {
    throw Error(Errc::MalformedLine, "non-numeric token '" + std::string(token) + "' in '" +
                                         std::string(line) + "'");
  }
  return value;
}

}  // namespace

Eigen::Matrix<double, 3, 4> PoseMatrix::matrix() const {
  Eigen::Matrix<double, 3, 4> m;
  m << rotation, translation;
  return m;
}

PoseMatrix PoseMatrix::inverse() const {
  PoseMatrix inv;
  inv.rotation = rotation.transpose();
  inv.translation = -(inv.rotation * translation);
  return inv;
}

PoseMatrix PoseMatrix::operator*(const PoseMatrix& rhs) const {
  PoseMatrix out;
  out.rotation = rotation * rhs.rotation;
  out.translation = rotation * rhs.translation + translation;
  return out;
}

double wrap_angle(double angle) {
  constexpr double kPi = std::numbers::pi;
  double wrapped = std::remainder(angle, 2.0 * kPi);
  if (wrapped <= -kPi) wrapped += 2.0 * kPi;
  return wrapped;
}

Eigen::Matrix3d yaw_rotation(double yaw) {
  const double c = std::cos(yaw);
  const double s = std::sin(yaw);
  Eigen::Matrix3d r;
  r << c, 0.0, s,
       0.0, 1.0, 0.0,
       -s, 0.0, c;
  return r;
}

PoseMatrix planar_pose(double x, double z, double theta) {
  PoseMatrix p;
  p.rotation = yaw_rotation(theta);
  p.translation = {x, 0.0, z};
  return p;
}

double planar_yaw(const Eigen::Matrix3d& rotation) {
  return wrap_angle(std::atan2(rotation(0, 2), rotation(2, 2)));
}

PoseMatrix parse_pose_line(std::string_view line) {
  std::array<double, 12> values{};
  std::size_t count = 0;
  std::size_t pos = 0;
  while (pos < line.size()) {
    while (pos < line.size() && std::isspace(static_cast<unsigned char>(line[pos]))) ++pos;
    if (pos >= line.size()) break;
    std::size_t end = pos;
    while (end < line.size() && !std::isspace(static_cast<unsigned char>(line[end]))) ++end;
    if (count == values.size()) {
      throw Error(Errc::MalformedLine, "more than 12 numbers in '" + std::string(line) + "'");
    }
    values[count++] = parse_number(line.substr(pos, end - pos), line);
    pos = end;
  }
  if (count != values.size()) {
    throw Error(Errc::MalformedLine,
                "expected 12 numbers, got " + std::to_string(count) + " in '" + std::string(line) + "'");
  }

  PoseMatrix pose;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) pose.rotation(r, c) = values[r * 4 + c];
    pose.translation(r) = values[r * 4 + 3];
  }

  const double ortho_err =
      (pose.rotation * pose.rotation.transpose() - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
  const double det_err = std::abs(pose.rotation.determinant() - 1.0);
  const double err = std::max(ortho_err, det_err);
  if (err > kRejectTolerance || pose.rotation.determinant() <= 0.0) {
    throw Error(Errc::NonRigid, "rotation deviates from SO(3) by " + std::to_string(err));
  }
  if (err > kRigidTolerance) {
    std::clog << "deepvo: warning: re-orthonormalizing pose (error " << err << ")\n";
    pose.rotation = nearest_rotation(pose.rotation);
  }
  return pose;
}

std::string format_pose_line(const PoseMatrix& pose) {
  const auto m = pose.matrix();
  std::string out;
  char buf[32];
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 4; ++c) {
      std::snprintf(buf, sizeof(buf), "%e", m(r, c));
      if (!out.empty()) out += ' ';
      out += buf;
    }
  }
  return out;
}

std::vector<PoseMatrix> read_pose_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::IoError, "cannot open pose file " + path.string());
  std::vector<PoseMatrix> poses;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    poses.push_back(parse_pose_line(line));
  }
  return poses;
}

void write_pose_file(const std::filesystem::path& path, std::span<const PoseMatrix> poses) {
  std::ofstream out(path);
  if (!out) throw Error(Errc::IoError, "cannot write pose file " + path.string());
  for (const auto& p : poses) out << format_pose_line(p) << '\n';
}

DeltaPose relative_delta(const PoseMatrix& a, const PoseMatrix& b) {
  const PoseMatrix rel = a.inverse() * b;
  // R^T R is identity only up to rounding; equal orientations must give an exact zero turn.
  const double turn = a.rotation == b.rotation ? 0.0 : planar_yaw(rel.rotation);
  return {rel.translation.x(), rel.translation.z(), turn};
}

std::vector<DeltaPose> decompose_trajectory(std::span<const PoseMatrix> poses) {
  if (poses.size() < 2) throw Error(Errc::TooShort, "need at least two poses");
  std::vector<DeltaPose> deltas;
  deltas.reserve(poses.size() - 1);
  for (std::size_t i = 0; i + 1 < poses.size(); ++i) {
    deltas.push_back(relative_delta(poses[i], poses[i + 1]));
  }
  return deltas;
}

PlanarState compose(const PlanarState& s, const DeltaPose& d) {
  const double c = std::cos(s.theta);
  const double sn = std::sin(s.theta);
  return {s.x + d.dx * c + d.dz * sn, s.z - d.dx * sn + d.dz * c, wrap_angle(s.theta + d.dtheta)};
}

std::vector<PlanarState> integrate_trajectory(const PlanarState& start,
                                              std::span<const DeltaPose> deltas) {
  std::vector<PlanarState> states;
  states.reserve(deltas.size() + 1);
  states.push_back(start);
  for (const auto& d : deltas) states.push_back(compose(states.back(), d));
  return states;
}

std::vector<double> deviation_curve(std::span<const PlanarState> pred,
                                    std::span<const PlanarState> gt) {
  if (pred.size() != gt.size()) {
    throw Error(Errc::LengthMismatch, "prediction has " + std::to_string(pred.size()) +
                                          " states, ground truth " + std::to_string(gt.size()));
  }
  std::vector<double> dev(pred.size());
  for (std::size_t t = 0; t < pred.size(); ++t) {
    dev[t] = std::hypot(pred[t].x - gt[t].x, pred[t].z - gt[t].z);
  }
  return dev;
}

double path_length(std::span<const PlanarState> states) {
  double len = 0.0;
  for (std::size_t i = 1; i < states.size(); ++i) {
    len += std::hypot(states[i].x - states[i - 1].x, states[i].z - states[i - 1].z);
  }
  return len;
}

void write_trajectory_csv(const std::filesystem::path& path, std::span<const PlanarState> states) {
  std::ofstream out(path);
  if (!out) throw Error(Errc::IoError, "cannot write " + path.string());
  out << "t,x,z,theta\n";
  for (std::size_t t = 0; t < states.size(); ++t) {
    out << t << ',' << format_real(states[t].x) << ',' << format_real(states[t].z) << ','
        << format_real(states[t].theta) << '\n';
  }
}

std::string format_real(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

}  // namespace deepvo
