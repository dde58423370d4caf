#include "deepvo/fastdet.hpp"

#include <cstdlib>

#include "deepvo/error.hpp"

namespace deepvo {
namespace {

void check_input(const Raster& gray) {
  if (gray.channels != 1) throw Error(Errc::MultiChannelInput, "FAST expects a single-channel image");
  if (gray.width < 7 || gray.height < 7) throw Error(Errc::ImageTooSmall, "FAST needs at least 7x7 pixels");
}

}  // namespace

void FastConfig::validate() const {
  if (threshold < 1 || arc_length < 9 || arc_length > 12) {
    throw Error(Errc::InvalidConfig, "FAST threshold >= 1 and arc length in [9, 12] required");
  }
}

int fast_score(const Raster& gray, int x, int y, const FastConfig& cfg) {
  const int center = gray.at(x, y);
  // +1 brighter, -1 darker, 0 similar; doubled so arcs may wrap around.
  std::array<int, 32> state{};
  std::array<int, 32> diff{};
  for (int i = 0; i < 16; ++i) {
    const int d = gray.at(x + kFastCircle[i][0], y + kFastCircle[i][1]) - center;
    const int s = d > cfg.threshold ? 1 : (d < -cfg.threshold ? -1 : 0);
    state[i] = state[i + 16] = s;
    diff[i] = diff[i + 16] = std::abs(d);
  }

  int best = 0;
  for (int sign : {1, -1}) {
    // Maximal runs of `sign`; a run covering the whole circle is capped at 16.
    int run = 0;
    int sum = 0;
    for (int i = 0; i < 32; ++i) {
      if (state[i] == sign) {
        if (run < 16) {
          ++run;
          sum += diff[i];
        }
        if (run >= cfg.arc_length && sum > best) best = sum;
      } else {
        run = 0;
        sum = 0;
      }
    }
  }
  return best;
}

std::vector<Corner> detect(const Raster& gray, const FastConfig& cfg) {
  cfg.validate();
  check_input(gray);

  const int w = gray.width;
  const int h = gray.height;
  std::vector<int> scores(static_cast<std::size_t>(w) * h, 0);
  std::vector<Corner> raw;
  for (int y = 3; y < h - 3; ++y) {
    for (int x = 3; x < w - 3; ++x) {
      const int s = fast_score(gray, x, y, cfg);
      if (s > 0) {
        scores[static_cast<std::size_t>(y) * w + x] = s;
        raw.push_back({x, y, s});
      }
    }
  }
  if (!cfg.nms) return raw;

  std::vector<Corner> kept;
  for (const auto& c : raw) {
    bool is_max = true;
    for (int dy = -1; dy <= 1 && is_max; ++dy) {
      for (int dx = -1; dx <= 1; ++dx) {
        if (dx == 0 && dy == 0) continue;
        const int nx = c.x + dx;
        const int ny = c.y + dy;
        if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
        const int other = scores[static_cast<std::size_t>(ny) * w + nx];
        // Ties resolve to the earlier pixel in row-major order.
        const bool earlier = ny < c.y || (ny == c.y && nx < c.x);
        if (other > c.score || (other == c.score && earlier)) {
          is_max = false;
          break;
        }
      }
    }
    if (is_max) kept.push_back(c);
  }
  return kept;
}

std::vector<Corner> detect_any(const Raster& img, const FastConfig& cfg) {
  return detect(img.channels == 1 ? img : to_luma(img), cfg);
}

Raster corner_mask(const Raster& img, const FastConfig& cfg) {
  const auto corners = detect(img, cfg);
  Raster mask(img.width, img.height, 1, 0);
  for (const auto& c : corners) mask.at(c.x, c.y) = 255;
  return mask;
}

}  // namespace deepvo
