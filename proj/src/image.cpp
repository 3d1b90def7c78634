#include "splite/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

namespace splite {

void Image::validate() const {
  SPLITE_CHECK(width > 0 && height > 0, "image extents must be positive");
  SPLITE_CHECK(channels == 1 || channels == 3, "image must have 1 or 3 channels");
  SPLITE_CHECK(pixels.size() == static_cast<std::size_t>(width) * height * channels,
               "pixel buffer length does not match image extents");
}

namespace {

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Image decode_png(const std::vector<std::uint8_t>& bytes, const std::filesystem::path& path) {
  png_image png;
  std::memset(&png, 0, sizeof(png));
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&png, bytes.data(), bytes.size())) {
    throw IoError("cannot decode PNG " + path.string() + ": " + png.message);
  }
  const bool color = (png.format & PNG_FORMAT_FLAG_COLOR) != 0;
  png.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  Image image(static_cast<int>(png.width), static_cast<int>(png.height), color ? 3 : 1);
  if (!png_image_finish_read(&png, nullptr, image.pixels.data(), 0, nullptr)) {
    png_image_free(&png);
    throw IoError("cannot decode PNG " + path.string() + ": " + png.message);
  }
  return image;
}

Image decode_pnm(const std::vector<std::uint8_t>& bytes, const std::filesystem::path& path) {
  std::size_t pos = 2;
  auto next_token = [&]() -> long {
    for (;;) {
      while (pos < bytes.size() && std::isspace(bytes[pos])) ++pos;
      if (pos < bytes.size() && bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
        continue;
      }
      break;
    }
    long value = 0;
    bool any = false;
    while (pos < bytes.size() && std::isdigit(bytes[pos])) {
      value = value * 10 + (bytes[pos++] - '0');
      any = true;
      if (value > (1L << 24)) throw IoError("PNM header value too large in " + path.string());
    }
    if (!any) throw IoError("malformed PNM header in " + path.string());
    return value;
  };
  const int channels = bytes[1] == '6' ? 3 : 1;
  const long width = next_token();
  const long height = next_token();
  const long maxval = next_token();
  if (width <= 0 || height <= 0 || maxval <= 0 || maxval > 255) {
    throw IoError("unsupported PNM header in " + path.string());
  }
  ++pos;  // single whitespace before raster
  Image image(static_cast<int>(width), static_cast<int>(height), channels);
  if (bytes.size() < pos + image.pixels.size()) throw IoError("truncated PNM raster in " + path.string());
  std::copy_n(bytes.begin() + static_cast<std::ptrdiff_t>(pos), image.pixels.size(), image.pixels.begin());
  if (maxval != 255) {
    for (auto& p : image.pixels) p = static_cast<std::uint8_t>(std::lround(p * 255.0 / maxval));
  }
  return image;
}

}  // namespace

Image read_image(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  static constexpr std::uint8_t kPngSignature[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  if (bytes.size() >= 8 && std::equal(std::begin(kPngSignature), std::end(kPngSignature), bytes.begin())) {
    return decode_png(bytes, path);
  }
  if (bytes.size() >= 2 && bytes[0] == 'P' && (bytes[1] == '5' || bytes[1] == '6')) {
    return decode_pnm(bytes, path);
  }
  throw IoError("unrecognized image format: " + path.string());
}

void write_pnm(const std::filesystem::path& path, const Image& image) {
  image.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << (image.channels == 3 ? "P6" : "P5") << '\n' << image.width << ' ' << image.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(image.pixels.data()), static_cast<std::streamsize>(image.pixels.size()));
  if (!out) throw IoError("cannot write " + path.string());
}

void write_edge_pgm(const std::filesystem::path& path, const DenseTensor& map) {
  SPLITE_CHECK(map.rank() == 3 && map.channels() == 1, "edge map must be 1×H×W");
  Image image(static_cast<int>(map.width()), static_cast<int>(map.height()), 1);
  for (Index i = 0; i < map.size(); ++i) {
    const float v = std::clamp(map.values()[i], 0.0f, 1.0f);
    image.pixels[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(std::lround(v * 255.0f));
  }
  write_pnm(path, image);
}

Image resize_bilinear(const Image& image, int width, int height) {
  image.validate();
  SPLITE_CHECK(width > 0 && height > 0, "resize target must be positive");
  if (width == image.width && height == image.height) return image;
  Image out(width, height, image.channels);
  const double sx = static_cast<double>(image.width) / width;
  const double sy = static_cast<double>(image.height) / height;
  for (int y = 0; y < height; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, image.height - 1.0);
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, image.height - 1);
    const double ay = fy - y0;
    for (int x = 0; x < width; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, image.width - 1.0);
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, image.width - 1);
      const double ax = fx - x0;
      for (int c = 0; c < image.channels; ++c) {
        const double v = (1 - ay) * ((1 - ax) * image.at(y0, x0, c) + ax * image.at(y0, x1, c)) +
                         ay * ((1 - ax) * image.at(y1, x0, c) + ax * image.at(y1, x1, c));
        out.at(y, x, c) = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
      }
    }
  }
  return out;
}

}  // namespace splite
