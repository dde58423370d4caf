#pragma once

#include <array>
#include <vector>

#include "deepvo/raster.hpp"

namespace deepvo {

struct FastConfig {
  int threshold = 20;
  int arc_length = 9;
  bool nms = true;

  void validate() const;
};

struct Corner {
  int x = 0;
  int y = 0;
  int score = 0;

  friend bool operator==(const Corner&, const Corner&) = default;
};

/// Radius-3 Bresenham circle, clockwise from 12 o'clock in image coordinates.
inline constexpr std::array<std::array<int, 2>, 16> kFastCircle{{
    {0, -3}, {1, -3}, {2, -2}, {3, -1}, {3, 0}, {3, 1}, {2, 2}, {1, 3},
    {0, 3}, {-1, 3}, {-2, 2}, {-3, 1}, {-3, 0}, {-3, -1}, {-2, -2}, {-1, -3},
}};

/// Segment-test score at an interior pixel: the largest sum of |I(circle) - I(p)| over a
/// qualifying contiguous arc, or 0 when the pixel is not a corner.
int fast_score(const Raster& gray, int x, int y, const FastConfig& cfg);

/// Corners in row-major order. Multi-channel input is rejected; convert with to_luma first.
std::vector<Corner> detect(const Raster& gray, const FastConfig& cfg);

/// Same as detect but accepts RGB input by converting to luma.
std::vector<Corner> detect_any(const Raster& img, const FastConfig& cfg);

/// 255 at corners, 0 elsewhere.
Raster corner_mask(const Raster& img, const FastConfig& cfg);

}  // namespace deepvo
