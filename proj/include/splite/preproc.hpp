#pragma once

#include <cstdint>

#include "splite/image.hpp"
#include "splite/tensor.hpp"

namespace splite {

inline constexpr int kInputSize = 128;

/// gray = round(0.299 R + 0.587 G + 0.114 B).
Image to_grayscale(const Image& rgb);

/// Sobel gradient magnitude with reflect-101 borders, normalized by its maximum.
DenseTensor sobel_edges(const Image& gray);

/// Gaussian 5×5 (sigma 1.4), Sobel gradients, 4-direction non-maximum
/// suppression and hysteresis. Thresholds are in raw gradient-magnitude units
/// of a 0–255 image. Output is binary {0, 1}.
DenseTensor canny_edges(const Image& gray, double low = 50.0, double high = 150.0);

/// Network input: channels [edge_a, edge_b, union_mask] plus its sparsity.
struct FusedInput {
  DenseTensor tensor;
  double sparsity = 1.0;
};

/// Stacks two 1×H×W edge maps with values in [0, 1] and appends their union mask.
FusedInput early_fusion(const DenseTensor& edge_a, const DenseTensor& edge_b);

/// Sobel (A) and Canny (B) edges of an image resized to `size`×`size`, fused.
FusedInput preprocess(const Image& image, int size = kInputSize);

/// Deterministic edge-like 1×h×w map of random rasterized polylines whose
/// sparsity (threshold 0) lies within ±0.01 of `target_sparsity`. Strokes stay
/// inside a hand-sized region that grows with the edge budget, as in
/// hand-centered crops.
DenseTensor synth_sparse_input(int h, int w, double target_sparsity, std::uint64_t seed);

/// Fuses a synthetic map with its own binarization (a Canny-like second modality).
FusedInput synth_fused_input(int size, double target_sparsity, std::uint64_t seed);

}  // namespace splite
