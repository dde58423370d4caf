#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace deepvo {

/// Row-major interleaved 8-bit image.
struct Raster {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<std::uint8_t> data;

  Raster() = default;
  Raster(int w, int h, int c, std::uint8_t fill = 0)
      : width(w), height(h), channels(c), data(static_cast<std::size_t>(w) * h * c, fill) {}

  std::size_t index(int x, int y, int c = 0) const {
    return (static_cast<std::size_t>(y) * width + x) * channels + c;
  }
  std::uint8_t& at(int x, int y, int c = 0) { return data[index(x, y, c)]; }
  std::uint8_t at(int x, int y, int c = 0) const { return data[index(x, y, c)]; }

  bool same_shape(const Raster& o) const {
    return width == o.width && height == o.height && channels == o.channels;
  }
  bool empty() const { return width <= 0 || height <= 0 || channels <= 0; }

  friend bool operator==(const Raster&, const Raster&) = default;
};

/// Decodes an 8-bit (or 16-bit, truncated) gray/RGB/RGBA PNG.
Raster load_raster(const std::filesystem::path& path);
void save_png(const std::filesystem::path& path, const Raster& img);

/// Bilinear resample with independent x/y scale factors.
Raster warp_resize(const Raster& img, int out_w, int out_h);

/// Single-channel luma (0.299, 0.587, 0.114); single-channel input is returned as is.
Raster to_luma(const Raster& img);

}  // namespace deepvo
