#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <unistd.h>
#include <vector>

#include "deepvo/geom.hpp"
#include "deepvo/nn/tensor.hpp"
#include "deepvo/raster.hpp"

namespace deepvo::testing {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::uint64_t counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("deepvo_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline Raster constant_raster(int w, int h, int c, std::uint8_t v) {
  return Raster(w, h, c, v);
}

inline Raster random_raster(int w, int h, int c, std::mt19937_64& rng) {
  Raster r = constant_raster(w, h, c, 0);
  std::uniform_int_distribution<int> d(0, 255);
  for (auto& v : r.data) v = static_cast<std::uint8_t>(d(rng));
  return r;
}

/// Planar trajectory from random smooth steps.
inline std::vector<PoseMatrix> random_planar_trajectory(std::size_t steps, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> fwd(0.2, 2.0), lat(-0.2, 0.2), yaw(-0.3, 0.3);
  std::vector<PoseMatrix> poses{PoseMatrix::identity()};
  PlanarState s;
  for (std::size_t i = 0; i < steps; ++i) {
    s = compose(s, {lat(rng), fwd(rng), yaw(rng)});
    poses.push_back(planar_pose(s.x, s.z, s.theta));
  }
  return poses;
}

inline double angle_diff(double a, double b) { return std::abs(wrap_angle(a - b)); }

/// |a - n| / max(|a|, |n|, floor): the relative error used by every gradient check.
inline double relative_error(double analytic, double numeric, double floor = 1e-6) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

/// Central differences of a scalar function over selected entries of a tensor. Returns the
/// worst relative error against `analytic`.
inline double check_entries(nn::Tensor<double>& t, const std::vector<nn::Index>& entries,
                            const std::function<double()>& loss, const std::function<double(nn::Index)>& analytic,
                            double eps = 1e-3) {
  double worst = 0.0;
  for (nn::Index i : entries) {
    const double orig = t[i];
    t[i] = orig + eps;
    const double up = loss();
    t[i] = orig - eps;
    const double down = loss();
    t[i] = orig;
    worst = std::max(worst, relative_error(analytic(i), (up - down) / (2.0 * eps)));
  }
  return worst;
}

inline std::vector<nn::Index> all_entries(const nn::Tensor<double>& t) {
  std::vector<nn::Index> v(static_cast<std::size_t>(t.size()));
  for (nn::Index i = 0; i < t.size(); ++i) v[static_cast<std::size_t>(i)] = i;
  return v;
}

inline std::vector<nn::Index> sample_entries(const nn::Tensor<double>& t, std::size_t count, std::mt19937_64& rng) {
  if (static_cast<std::size_t>(t.size()) <= count) return all_entries(t);
  std::uniform_int_distribution<nn::Index> d(0, t.size() - 1);
  std::vector<nn::Index> v;
  for (std::size_t i = 0; i < count; ++i) v.push_back(d(rng));
  return v;
}

/// Values bounded away from zero by `margin` (keeps relu kinks out of reach of eps).
inline void fill_away_from_zero(nn::Tensor<double>& t, std::mt19937_64& rng, double margin = 0.05) {
  std::uniform_real_distribution<double> mag(margin, 1.0);
  std::bernoulli_distribution sign(0.5);
  for (nn::Index i = 0; i < t.size(); ++i) t[i] = sign(rng) ? mag(rng) : -mag(rng);
}

/// Distinct values spaced by `gap` in random order (keeps max-pool ties out of reach).
inline void fill_distinct(nn::Tensor<double>& t, std::mt19937_64& rng, double gap = 0.01) {
  std::vector<double> v(static_cast<std::size_t>(t.size()));
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = gap * (static_cast<double>(i) - 0.5 * v.size());
  std::shuffle(v.begin(), v.end(), rng);
  for (nn::Index i = 0; i < t.size(); ++i) t[i] = v[static_cast<std::size_t>(i)];
}

template <typename Scalar>
void fill_normal(nn::Tensor<Scalar>& t, std::mt19937_64& rng, double stddev = 1.0) {
  std::normal_distribution<double> d(0.0, stddev);
  for (nn::Index i = 0; i < t.size(); ++i) t[i] = static_cast<Scalar>(d(rng));
}

}  // namespace deepvo::testing
