#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "splite/tensor.hpp"

namespace splite {

/// 8-bit interleaved image with 1 (gray) or 3 (RGB) channels.
struct Image {
  int width = 0;
  int height = 0;
  int channels = 1;
  std::vector<std::uint8_t> pixels;

  Image() = default;
  Image(int w, int h, int c, std::uint8_t fill = 0)
      : width(w), height(h), channels(c), pixels(static_cast<std::size_t>(w) * h * c, fill) {}

  std::uint8_t& at(int y, int x, int c = 0) { return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c]; }
  std::uint8_t at(int y, int x, int c = 0) const {
    return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }

  void validate() const;

  friend bool operator==(const Image&, const Image&) = default;
};

/// Reads an 8-bit PNG or a binary PGM/PPM (P5/P6). Throws IoError.
Image read_image(const std::filesystem::path& path);

/// Writes a binary PGM (1 channel) or PPM (3 channels).
void write_pnm(const std::filesystem::path& path, const Image& image);

/// Writes a 1×H×W map with values in [0, 1] as an 8-bit PGM.
void write_edge_pgm(const std::filesystem::path& path, const DenseTensor& map);

/// Bilinear resampling (pixel-center aligned).
Image resize_bilinear(const Image& image, int width, int height);

}  // namespace splite
