#pragma once

#include <cstdint>
#include <vector>

#include "splite/tensor.hpp"

namespace splite {

enum class Granularity : std::uint8_t { PerTensor = 0, PerChannel = 1 };

/// int8 payload with affine parameters. Per-channel groups run along axis 0.
struct QuantizedTensor {
  Shape shape;
  std::vector<std::int8_t> data;
  std::vector<float> scale;  // one entry, or shape[0] entries for per-channel
  std::int32_t zero_point = 0;
  Granularity granularity = Granularity::PerTensor;

  Index size() const noexcept { return static_cast<Index>(data.size()); }
  Index num_groups() const noexcept { return static_cast<Index>(scale.size()); }
  /// Number of consecutive elements sharing one scale.
  Index group_size() const noexcept { return scale.empty() ? 0 : size() / num_groups(); }
  float scale_of(Index element) const {
    return granularity == Granularity::PerTensor ? scale[0] : scale[static_cast<std::size_t>(element / group_size())];
  }

  /// Throws InvalidArgument when the payload, scales or zero point are inconsistent.
  void validate() const;

  friend bool operator==(const QuantizedTensor&, const QuantizedTensor&) = default;
};

/// Symmetric int8: q = clamp(round(x / scale), -127, 127), scale = max|x| / 127 per
/// group, zero point 0. An all-zero group gets scale 1.
QuantizedTensor quantize_affine(const DenseTensor& t, Granularity granularity);

/// x = scale * (q - zero_point).
DenseTensor dequantize(const QuantizedTensor& q);

/// Running min/max over calibration activations; always contains 0.
struct ActivationRange {
  float min = 0.0f;
  float max = 0.0f;

  void observe(const DenseTensor& t);
};

struct ActivationParams {
  float scale = 1.0f;
  std::int32_t zero_point = 0;
};

/// Asymmetric per-tensor parameters covering `range` with zero_point in [-128, 127].
ActivationParams activation_params(const ActivationRange& range);

/// Asymmetric per-tensor int8: q = clamp(round(x / scale) + zero_point, -128, 127).
QuantizedTensor quantize_activation(const DenseTensor& t, const ActivationParams& params);

}  // namespace splite
