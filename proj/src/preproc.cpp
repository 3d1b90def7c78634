#include "splite/preproc.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <deque>
#include <numbers>

#include "splite/random.hpp"

namespace splite {

namespace {

using Plane = RowMatrixXd;

// Mirror without repeating the border sample: -1 -> 1, n -> n - 2.
int reflect101(int i, int n) {
  if (n == 1) return 0;
  while (i < 0 || i >= n) i = i < 0 ? -i : 2 * n - 2 - i;
  return i;
}

Plane to_plane(const Image& gray) {
  Plane p(gray.height, gray.width);
  for (int y = 0; y < gray.height; ++y)
    for (int x = 0; x < gray.width; ++x) p(y, x) = gray.at(y, x);
  return p;
}

void require_gray(const Image& gray, const char* op) {
  gray.validate();
  SPLITE_CHECK(gray.channels == 1, std::string(op) + " expects a single-channel image");
  SPLITE_CHECK(gray.width >= 3 && gray.height >= 3, std::string(op) + " needs an image of at least 3×3");
}

struct Gradients {
  Plane gx, gy;
};

Gradients sobel(const Plane& p) {
  const int h = static_cast<int>(p.rows()), w = static_cast<int>(p.cols());
  Gradients g{Plane(h, w), Plane(h, w)};
  for (int y = 0; y < h; ++y) {
    const int ym = reflect101(y - 1, h), yp = reflect101(y + 1, h);
    for (int x = 0; x < w; ++x) {
      const int xm = reflect101(x - 1, w), xp = reflect101(x + 1, w);
      g.gx(y, x) = (p(ym, xp) + 2 * p(y, xp) + p(yp, xp)) - (p(ym, xm) + 2 * p(y, xm) + p(yp, xm));
      g.gy(y, x) = (p(yp, xm) + 2 * p(yp, x) + p(yp, xp)) - (p(ym, xm) + 2 * p(ym, x) + p(ym, xp));
    }
  }
  return g;
}

Plane gaussian5(const Plane& p, double sigma) {
  std::array<double, 5> k{};
  double sum = 0;
  for (int i = -2; i <= 2; ++i) sum += k[static_cast<std::size_t>(i + 2)] = std::exp(-(i * i) / (2 * sigma * sigma));
  for (auto& v : k) v /= sum;
  const int h = static_cast<int>(p.rows()), w = static_cast<int>(p.cols());
  Plane tmp(h, w), out(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double acc = 0;
      for (int i = -2; i <= 2; ++i) acc += k[static_cast<std::size_t>(i + 2)] * p(y, reflect101(x + i, w));
      tmp(y, x) = acc;
    }
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double acc = 0;
      for (int i = -2; i <= 2; ++i) acc += k[static_cast<std::size_t>(i + 2)] * tmp(reflect101(y + i, h), x);
      out(y, x) = acc;
    }
  return out;
}

void check_edge_map(const DenseTensor& t, const char* name) {
  SPLITE_CHECK(t.rank() == 3 && t.channels() == 1, std::string(name) + " must be a 1×H×W map");
  SPLITE_CHECK(t.all_finite() && (t.values().array() >= 0.0f).all() && (t.values().array() <= 1.0f).all(),
               std::string(name) + " values must lie in [0, 1]");
}

}  // namespace

Image to_grayscale(const Image& rgb) {
  rgb.validate();
  SPLITE_CHECK(rgb.channels == 3, "to_grayscale expects a 3-channel image");
  Image gray(rgb.width, rgb.height, 1);
  for (int y = 0; y < rgb.height; ++y)
    for (int x = 0; x < rgb.width; ++x) {
      const double v = 0.299 * rgb.at(y, x, 0) + 0.587 * rgb.at(y, x, 1) + 0.114 * rgb.at(y, x, 2);
      gray.at(y, x) = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
    }
  return gray;
}

DenseTensor sobel_edges(const Image& gray) {
  require_gray(gray, "sobel_edges");
  const Gradients g = sobel(to_plane(gray));
  const Plane mag = (g.gx.array().square() + g.gy.array().square()).sqrt().matrix();
  const double max = mag.maxCoeff();
  DenseTensor out({1, gray.height, gray.width});
  if (max > 0) out.plane(0) = (mag / max).cast<float>();
  return out;
}

DenseTensor canny_edges(const Image& gray, double low, double high) {
  SPLITE_CHECK(low >= 0.0 && low <= high, "canny thresholds must satisfy 0 <= low <= high");
  require_gray(gray, "canny_edges");
  const int h = gray.height, w = gray.width;
  const Gradients g = sobel(gaussian5(to_plane(gray), 1.4));
  const Plane mag = (g.gx.array().square() + g.gy.array().square()).sqrt().matrix();

  // Non-maximum suppression along the quantized gradient direction. The
  // asymmetric comparison keeps exactly one of two equal neighbors.
  Plane thin = Plane::Zero(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double m = mag(y, x);
      if (m <= 0) continue;
      double angle = std::atan2(g.gy(y, x), g.gx(y, x)) * 180.0 / std::numbers::pi;
      if (angle < 0) angle += 180.0;
      int dy = 0, dx = 0;
      if (angle < 22.5 || angle >= 157.5) {
        dx = 1;
      } else if (angle < 67.5) {
        dy = 1, dx = 1;
      } else if (angle < 112.5) {
        dy = 1;
      } else {
        dy = 1, dx = -1;
      }
      auto at = [&](int yy, int xx) {
        return (yy < 0 || yy >= h || xx < 0 || xx >= w) ? 0.0 : mag(yy, xx);
      };
      if (m > at(y - dy, x - dx) && m >= at(y + dy, x + dx)) thin(y, x) = m;
    }

  DenseTensor out({1, h, w});
  std::deque<std::pair<int, int>> frontier;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (thin(y, x) >= high && thin(y, x) > 0) {
        out(0, y, x) = 1.0f;
        frontier.emplace_back(y, x);
      }
  while (!frontier.empty()) {
    const auto [y, x] = frontier.front();
    frontier.pop_front();
    for (int dy = -1; dy <= 1; ++dy)
      for (int dx = -1; dx <= 1; ++dx) {
        const int yy = y + dy, xx = x + dx;
        if (yy < 0 || yy >= h || xx < 0 || xx >= w || out(0, yy, xx) != 0.0f) continue;
        if (thin(yy, xx) >= low && thin(yy, xx) > 0) {
          out(0, yy, xx) = 1.0f;
          frontier.emplace_back(yy, xx);
        }
      }
  }
  return out;
}

FusedInput early_fusion(const DenseTensor& edge_a, const DenseTensor& edge_b) {
  check_edge_map(edge_a, "edge_a");
  check_edge_map(edge_b, "edge_b");
  SPLITE_CHECK(edge_a.shape() == edge_b.shape(), "edge map shapes differ: " + shape_string(edge_a.shape()) +
                                                     " vs " + shape_string(edge_b.shape()));
  const Index h = edge_a.height(), w = edge_a.width();
  FusedInput fused{DenseTensor({3, h, w}), 1.0};
  fused.tensor.plane(0) = edge_a.plane(0);
  fused.tensor.plane(1) = edge_b.plane(0);
  fused.tensor.plane(2) =
      (edge_a.plane(0).array() != 0.0f || edge_b.plane(0).array() != 0.0f).cast<float>().matrix();
  fused.sparsity = sparsity(fused.tensor, 0.0);
  return fused;
}

FusedInput preprocess(const Image& image, int size) {
  Image resized = resize_bilinear(image, size, size);
  const Image gray = resized.channels == 3 ? to_grayscale(resized) : std::move(resized);
  return early_fusion(sobel_edges(gray), canny_edges(gray));
}

DenseTensor synth_sparse_input(int h, int w, double target_sparsity, std::uint64_t seed) {
  SPLITE_CHECK(h > 0 && w > 0, "synthetic map extents must be positive");
  SPLITE_CHECK(target_sparsity >= 0.0 && target_sparsity <= 1.0, "target sparsity must lie in [0, 1]");
  const Index total = static_cast<Index>(h) * w;
  const Index budget = static_cast<Index>(std::llround((1.0 - target_sparsity) * static_cast<double>(total)));
  const double achieved = 1.0 - static_cast<double>(budget) / static_cast<double>(total);
  if (std::abs(achieved - target_sparsity) > 0.01) {
    throw InvalidArgument("target sparsity " + std::to_string(target_sparsity) + " is unreachable on a " +
                          std::to_string(h) + "×" + std::to_string(w) + " map");
  }
  DenseTensor out({1, h, w});
  if (budget == 0) return out;

  Rng rng(seed);
  // Strokes cover about a third of the region they live in.
  constexpr double kFill = 0.33;
  const double max_radius = 0.5 * std::hypot(h, w);
  double radius = std::min(std::sqrt(static_cast<double>(budget) / (kFill * std::numbers::pi)), max_radius);
  const double cy = 0.5 * (h - 1) + rng.uniform(-0.05, 0.05) * h;
  const double cx = 0.5 * (w - 1) + rng.uniform(-0.05, 0.05) * w;

  Index active = 0;
  int stalled = 0;
  while (active < budget) {
    // One polyline: a smoothly turning walk inside the region.
    const double r0 = radius * std::sqrt(rng.uniform());
    const double a0 = rng.uniform(0.0, 2.0 * std::numbers::pi);
    double y = cy + r0 * std::sin(a0), x = cx + r0 * std::cos(a0);
    double heading = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const float intensity = static_cast<float>(rng.uniform(0.35, 1.0));
    const int length = 12 + static_cast<int>(rng.below(48));
    Index added = 0;
    for (int step = 0; step < length && active < budget; ++step) {
      const int iy = static_cast<int>(std::lround(y)), ix = static_cast<int>(std::lround(x));
      if (iy >= 0 && iy < h && ix >= 0 && ix < w && out(0, iy, ix) == 0.0f) {
        out(0, iy, ix) = intensity;
        ++active;
        ++added;
      }
      heading += rng.uniform(-0.35, 0.35);
      y += std::sin(heading);
      x += std::cos(heading);
      if (std::hypot(y - cy, x - cx) > radius) heading = std::atan2(cy - y, cx - x) + rng.uniform(-0.6, 0.6);
    }
    stalled = added == 0 ? stalled + 1 : 0;
    if (stalled > 32) {
      radius = std::min(radius + 1.0, max_radius);
      if (radius >= max_radius) {
        // Region saturated: fill remaining budget in raster order.
        for (Index i = 0; i < total && active < budget; ++i) {
          if (out.values()[i] == 0.0f) {
            out.values()[i] = intensity;
            ++active;
          }
        }
      }
      stalled = 0;
    }
  }
  return out;
}

FusedInput synth_fused_input(int size, double target_sparsity, std::uint64_t seed) {
  const DenseTensor edges = synth_sparse_input(size, size, target_sparsity, seed);
  DenseTensor binary = edges;
  binary.values() = (edges.values().array() != 0.0f).cast<float>().matrix();
  return early_fusion(edges, binary);
}

}  // namespace splite
