#pragma once

#include <Eigen/Core>

#include "splite/parallel.hpp"
#include "splite/tensor.hpp"

namespace splite {

enum class ConvMode {
  /// Output active set equals the input active set (stride 1 only).
  Submanifold,
  /// Output active set is every stride-aligned site whose window touches an active input.
  Generalized,
};

/// 2D convolution parameters. Weights are (out, in, kh, kw); padding is
/// kernel/2 so stride 1 keeps the extent and stride 2 halves it (rounding up).
struct ConvSpec {
  Index in_channels = 0;
  Index out_channels = 0;
  Index kernel_h = 1;
  Index kernel_w = 1;
  Index stride = 1;
  ConvMode mode = ConvMode::Submanifold;
  DenseTensor weights;
  Eigen::VectorXf bias;

  /// Zero weights and bias with the declared extents.
  static ConvSpec zeros(Index in_channels, Index out_channels, Index kernel, Index stride = 1,
                        ConvMode mode = ConvMode::Submanifold);

  Index pad_h() const noexcept { return kernel_h / 2; }
  Index pad_w() const noexcept { return kernel_w / 2; }
  Index out_extent(Index in, Index kernel) const { return (in + 2 * (kernel / 2) - kernel) / stride + 1; }
  Index kernel_volume() const noexcept { return kernel_h * kernel_w; }

  void validate() const;
};

/// Convolution evaluated only at output active sites, from active inputs only.
/// Matches dense_conv2d on the output active set.
SparseFeatureMap sparse_conv2d(const SparseFeatureMap& input, const ConvSpec& spec, const ExecContext& ctx = {});

/// Cross-correlation with zero padding via im2col + GEMM.
DenseTensor dense_conv2d(const DenseTensor& input, const ConvSpec& spec, const ExecContext& ctx = {});

/// Max pooling over active sites only; output sites follow generalized rules.
SparseFeatureMap sparse_max_pool(const SparseFeatureMap& input, Index kernel, Index stride);

/// Max pooling with -inf padding. When `mask` (1×H×W) is given, masked-out
/// sites do not participate and windows without any active site yield 0.
DenseTensor dense_max_pool(const DenseTensor& input, Index kernel, Index stride, const DenseTensor* mask = nullptr);

/// Active-site mask after a generalized window of the given size and stride.
DenseTensor dilate_mask(const DenseTensor& mask, Index kernel_h, Index kernel_w, Index stride);

/// Output active sites of a generalized window over `input`, canonical order.
std::vector<Coord> generalized_sites(const SparseFeatureMap& input, Index kernel_h, Index kernel_w, Index stride,
                                     Index out_h, Index out_w);

}  // namespace splite
