#include "splite/sparse_conv.hpp"

#include <algorithm>
#include <limits>

namespace splite {

ConvSpec ConvSpec::zeros(Index in_channels, Index out_channels, Index kernel, Index stride, ConvMode mode) {
  ConvSpec spec;
  spec.in_channels = in_channels;
  spec.out_channels = out_channels;
  spec.kernel_h = spec.kernel_w = kernel;
  spec.stride = stride;
  spec.mode = mode;
  spec.weights = DenseTensor({out_channels, in_channels, kernel, kernel});
  spec.bias = Eigen::VectorXf::Zero(out_channels);
  return spec;
}

void ConvSpec::validate() const {
  SPLITE_CHECK(in_channels > 0 && out_channels > 0, "convolution channels must be positive");
  SPLITE_CHECK(kernel_h > 0 && kernel_w > 0 && kernel_h % 2 == 1 && kernel_w % 2 == 1,
               "convolution kernel extents must be odd");
  SPLITE_CHECK(stride >= 1, "convolution stride must be positive");
  SPLITE_CHECK(mode != ConvMode::Submanifold || stride == 1, "submanifold convolution requires stride 1");
  SPLITE_CHECK(weights.shape() == Shape({out_channels, in_channels, kernel_h, kernel_w}),
               "convolution weights have shape " + shape_string(weights.shape()) + ", expected " +
                   shape_string({out_channels, in_channels, kernel_h, kernel_w}));
  SPLITE_CHECK(bias.size() == out_channels, "convolution bias length does not match out_channels");
}

std::vector<Coord> generalized_sites(const SparseFeatureMap& input, Index kernel_h, Index kernel_w, Index stride,
                                     Index out_h, Index out_w) {
  const Index pad_h = kernel_h / 2, pad_w = kernel_w / 2;
  std::vector<std::uint8_t> hit(static_cast<std::size_t>(out_h * out_w), 0);
  auto ceil_div = [](Index a, Index b) { return a >= 0 ? (a + b - 1) / b : -((-a) / b); };
  auto floor_div = [](Index a, Index b) { return a >= 0 ? a / b : -((-a + b - 1) / b); };
  for (const Coord& c : input.coords()) {
    // Output oy covers input rows [oy*s - pad, oy*s - pad + k - 1].
    const Index y0 = std::max<Index>(0, ceil_div(c.row + pad_h - kernel_h + 1, stride));
    const Index y1 = std::min<Index>(out_h - 1, floor_div(c.row + pad_h, stride));
    const Index x0 = std::max<Index>(0, ceil_div(c.col + pad_w - kernel_w + 1, stride));
    const Index x1 = std::min<Index>(out_w - 1, floor_div(c.col + pad_w, stride));
    for (Index y = y0; y <= y1; ++y)
      for (Index x = x0; x <= x1; ++x) hit[static_cast<std::size_t>(y * out_w + x)] = 1;
  }
  std::vector<Coord> sites;
  for (Index y = 0; y < out_h; ++y)
    for (Index x = 0; x < out_w; ++x)
      if (hit[static_cast<std::size_t>(y * out_w + x)]) {
        sites.push_back({static_cast<std::int32_t>(y), static_cast<std::int32_t>(x)});
      }
  return sites;
}

SparseFeatureMap sparse_conv2d(const SparseFeatureMap& input, const ConvSpec& spec, const ExecContext& ctx) {
  spec.validate();
  SPLITE_CHECK(input.channels() == spec.in_channels,
               "sparse_conv2d: input has " + std::to_string(input.channels()) + " channels, spec expects " +
                   std::to_string(spec.in_channels));
  const Index out_h = spec.out_extent(input.height(), spec.kernel_h);
  const Index out_w = spec.out_extent(input.width(), spec.kernel_w);
  std::vector<Coord> out_coords = spec.mode == ConvMode::Submanifold
                                      ? input.coords()
                                      : generalized_sites(input, spec.kernel_h, spec.kernel_w, spec.stride, out_h, out_w);
  const Index n_out = static_cast<Index>(out_coords.size());
  RowMatrixXf out(n_out, spec.out_channels);
  if (n_out == 0) return SparseFeatureMap(out_h, out_w, input.stride() * spec.stride, {}, std::move(out));

  // Per-offset (in × out) weight slices.
  const Index kvol = spec.kernel_volume();
  std::vector<RowMatrixXf> taps(static_cast<std::size_t>(kvol));
  for (Index k = 0; k < kvol; ++k) {
    RowMatrixXf& tap = taps[static_cast<std::size_t>(k)];
    tap.resize(spec.in_channels, spec.out_channels);
    for (Index o = 0; o < spec.out_channels; ++o)
      for (Index c = 0; c < spec.in_channels; ++c) tap(c, o) = spec.weights.values()[(o * spec.in_channels + c) * kvol + k];
  }

  const std::vector<std::int32_t> grid = input.index_grid();
  const Index in_h = input.height(), in_w = input.width();
  const RowMatrixXf& features = input.features();

  parallel_chunks(n_out, kRowChunk, ctx.threads, [&](Index begin, Index end) {
    out.middleRows(begin, end - begin).rowwise() = spec.bias.transpose();
    std::vector<std::int32_t> in_rows, out_rows;
    RowMatrixXf gathered, partial;
    for (Index ky = 0; ky < spec.kernel_h; ++ky)
      for (Index kx = 0; kx < spec.kernel_w; ++kx) {
        in_rows.clear();
        out_rows.clear();
        for (Index i = begin; i < end; ++i) {
          const Index y = out_coords[static_cast<std::size_t>(i)].row * spec.stride - spec.pad_h() + ky;
          const Index x = out_coords[static_cast<std::size_t>(i)].col * spec.stride - spec.pad_w() + kx;
          if (y < 0 || y >= in_h || x < 0 || x >= in_w) continue;
          const std::int32_t src = grid[static_cast<std::size_t>(y * in_w + x)];
          if (src < 0) continue;
          in_rows.push_back(src);
          out_rows.push_back(static_cast<std::int32_t>(i));
        }
        if (in_rows.empty()) continue;
        const Index n = static_cast<Index>(in_rows.size());
        gathered.resize(n, spec.in_channels);
        for (Index r = 0; r < n; ++r) gathered.row(r) = features.row(in_rows[static_cast<std::size_t>(r)]);
        partial.noalias() = gathered * taps[static_cast<std::size_t>(ky * spec.kernel_w + kx)];
        for (Index r = 0; r < n; ++r) out.row(out_rows[static_cast<std::size_t>(r)]) += partial.row(r);
      }
  });
  return SparseFeatureMap(out_h, out_w, input.stride() * spec.stride, std::move(out_coords), std::move(out));
}

DenseTensor dense_conv2d(const DenseTensor& input, const ConvSpec& spec, const ExecContext& ctx) {
  spec.validate();
  SPLITE_CHECK(input.rank() == 3, "dense_conv2d expects a (C, H, W) tensor");
  SPLITE_CHECK(input.channels() == spec.in_channels,
               "dense_conv2d: input has " + std::to_string(input.channels()) + " channels, spec expects " +
                   std::to_string(spec.in_channels));
  const Index in_h = input.height(), in_w = input.width();
  const Index out_h = spec.out_extent(in_h, spec.kernel_h);
  const Index out_w = spec.out_extent(in_w, spec.kernel_w);
  const Index kvol = spec.kernel_volume();
  const Index depth = spec.in_channels * kvol;
  DenseTensor out({spec.out_channels, out_h, out_w});
  auto out_mat = out.matrix();
  const auto weight_mat = spec.weights.matrix();  // out × (in·kh·kw)

  if (kvol == 1 && spec.stride == 1) {
    const auto in_mat = input.matrix();
    parallel_chunks(out_h * out_w, kRowChunk, ctx.threads, [&](Index begin, Index end) {
      const Index n = end - begin;
      out_mat.middleCols(begin, n).noalias() = weight_mat * in_mat.middleCols(begin, n);
      out_mat.middleCols(begin, n).colwise() += spec.bias;
    });
    return out;
  }

  parallel_chunks(out_h * out_w, kRowChunk, ctx.threads, [&](Index begin, Index end) {
    const Index n = end - begin;
    RowMatrixXf cols(depth, n);
    for (Index c = 0; c < spec.in_channels; ++c)
      for (Index ky = 0; ky < spec.kernel_h; ++ky)
        for (Index kx = 0; kx < spec.kernel_w; ++kx) {
          const Index row = (c * spec.kernel_h + ky) * spec.kernel_w + kx;
          for (Index p = 0; p < n; ++p) {
            const Index oy = (begin + p) / out_w, ox = (begin + p) % out_w;
            const Index y = oy * spec.stride - spec.pad_h() + ky;
            const Index x = ox * spec.stride - spec.pad_w() + kx;
            cols(row, p) = (y < 0 || y >= in_h || x < 0 || x >= in_w) ? 0.0f : input(c, y, x);
          }
        }
    RowMatrixXf block = weight_mat * cols;
    block.colwise() += spec.bias;
    out_mat.middleCols(begin, n) = block;
  });
  return out;
}

SparseFeatureMap sparse_max_pool(const SparseFeatureMap& input, Index kernel, Index stride) {
  SPLITE_CHECK(kernel > 0 && kernel % 2 == 1 && stride >= 1, "max pool needs an odd kernel and positive stride");
  const Index pad = kernel / 2;
  const Index out_h = (input.height() + 2 * pad - kernel) / stride + 1;
  const Index out_w = (input.width() + 2 * pad - kernel) / stride + 1;
  std::vector<Coord> sites = generalized_sites(input, kernel, kernel, stride, out_h, out_w);
  const std::vector<std::int32_t> grid = input.index_grid();
  RowMatrixXf out(static_cast<Index>(sites.size()), input.channels());
  out.setConstant(-std::numeric_limits<float>::infinity());
  for (std::size_t i = 0; i < sites.size(); ++i) {
    for (Index ky = 0; ky < kernel; ++ky)
      for (Index kx = 0; kx < kernel; ++kx) {
        const Index y = sites[i].row * stride - pad + ky, x = sites[i].col * stride - pad + kx;
        if (y < 0 || y >= input.height() || x < 0 || x >= input.width()) continue;
        const std::int32_t src = grid[static_cast<std::size_t>(y * input.width() + x)];
        if (src >= 0) out.row(static_cast<Index>(i)) = out.row(static_cast<Index>(i)).cwiseMax(input.features().row(src));
      }
  }
  return SparseFeatureMap(out_h, out_w, input.stride() * stride, std::move(sites), std::move(out));
}

DenseTensor dense_max_pool(const DenseTensor& input, Index kernel, Index stride, const DenseTensor* mask) {
  SPLITE_CHECK(input.rank() == 3, "dense_max_pool expects a (C, H, W) tensor");
  SPLITE_CHECK(kernel > 0 && kernel % 2 == 1 && stride >= 1, "max pool needs an odd kernel and positive stride");
  if (mask) {
    SPLITE_CHECK(mask->rank() == 3 && mask->channels() == 1 && mask->height() == input.height() &&
                     mask->width() == input.width(),
                 "max pool mask must be 1×H×W matching the input");
  }
  const Index pad = kernel / 2;
  const Index h = input.height(), w = input.width();
  const Index out_h = (h + 2 * pad - kernel) / stride + 1, out_w = (w + 2 * pad - kernel) / stride + 1;
  DenseTensor out({input.channels(), out_h, out_w});
  constexpr float kNegInf = -std::numeric_limits<float>::infinity();
  for (Index c = 0; c < input.channels(); ++c)
    for (Index oy = 0; oy < out_h; ++oy)
      for (Index ox = 0; ox < out_w; ++ox) {
        float best = kNegInf;
        for (Index ky = 0; ky < kernel; ++ky)
          for (Index kx = 0; kx < kernel; ++kx) {
            const Index y = oy * stride - pad + ky, x = ox * stride - pad + kx;
            if (y < 0 || y >= h || x < 0 || x >= w) continue;
            if (mask && (*mask)(0, y, x) == 0.0f) continue;
            best = std::max(best, input(c, y, x));
          }
        out(c, oy, ox) = best == kNegInf ? 0.0f : best;
      }
  return out;
}

DenseTensor dilate_mask(const DenseTensor& mask, Index kernel_h, Index kernel_w, Index stride) {
  SPLITE_CHECK(mask.rank() == 3 && mask.channels() == 1, "mask must be 1×H×W");
  const Index pad_h = kernel_h / 2, pad_w = kernel_w / 2;
  const Index h = mask.height(), w = mask.width();
  const Index out_h = (h + 2 * pad_h - kernel_h) / stride + 1, out_w = (w + 2 * pad_w - kernel_w) / stride + 1;
  DenseTensor out({1, out_h, out_w});
  for (Index oy = 0; oy < out_h; ++oy)
    for (Index ox = 0; ox < out_w; ++ox) {
      bool any = false;
      for (Index ky = 0; ky < kernel_h && !any; ++ky)
        for (Index kx = 0; kx < kernel_w && !any; ++kx) {
          const Index y = oy * stride - pad_h + ky, x = ox * stride - pad_w + kx;
          any = y >= 0 && y < h && x >= 0 && x < w && mask(0, y, x) != 0.0f;
        }
      out(0, oy, ox) = any ? 1.0f : 0.0f;
    }
  return out;
}

}  // namespace splite
