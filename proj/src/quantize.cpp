#include "splite/quantize.hpp"

#include <algorithm>
#include <cmath>

namespace splite {

void QuantizedTensor::validate() const {
  SPLITE_CHECK(static_cast<Index>(data.size()) == shape_volume(shape),
               "quantized payload length does not match shape " + shape_string(shape));
  if (granularity == Granularity::PerTensor) {
    SPLITE_CHECK(scale.size() == 1, "per-tensor quantization needs exactly one scale");
  } else {
    SPLITE_CHECK(!shape.empty() && static_cast<Index>(scale.size()) == shape[0],
                 "per-channel quantization needs one scale per leading-axis slice");
  }
  for (float s : scale) SPLITE_CHECK(std::isfinite(s) && s > 0.0f, "quantization scale must be positive");
  SPLITE_CHECK(zero_point >= -128 && zero_point <= 127, "zero point outside int8 range");
}

QuantizedTensor quantize_affine(const DenseTensor& t, Granularity granularity) {
  SPLITE_CHECK(t.all_finite(), "cannot quantize non-finite values");
  QuantizedTensor q;
  q.shape = t.shape();
  q.granularity = granularity;
  q.zero_point = 0;
  q.data.resize(static_cast<std::size_t>(t.size()));

  Index groups = 1;
  if (granularity == Granularity::PerChannel) {
    SPLITE_CHECK(t.rank() >= 1, "per-channel quantization needs rank >= 1");
    groups = t.dim(0);
  }
  const Index group_size = groups == 0 ? 0 : t.size() / groups;
  q.scale.assign(static_cast<std::size_t>(std::max<Index>(groups, 1)), 1.0f);
  for (Index g = 0; g < groups; ++g) {
    const auto block = t.values().segment(g * group_size, group_size);
    const float max_abs = group_size == 0 ? 0.0f : block.cwiseAbs().maxCoeff();
    const float scale = max_abs > 0.0f ? max_abs / 127.0f : 1.0f;
    q.scale[static_cast<std::size_t>(g)] = scale;
    for (Index i = 0; i < group_size; ++i) {
      const double r = std::round(static_cast<double>(block[i]) / static_cast<double>(scale));
      q.data[static_cast<std::size_t>(g * group_size + i)] = static_cast<std::int8_t>(std::clamp(r, -127.0, 127.0));
    }
  }
  return q;
}

DenseTensor dequantize(const QuantizedTensor& q) {
  q.validate();
  DenseTensor out(q.shape);
  const Index group_size = q.group_size();
  for (Index i = 0; i < q.size(); ++i) {
    const float scale = q.granularity == Granularity::PerTensor ? q.scale[0] : q.scale[static_cast<std::size_t>(i / group_size)];
    out.values()[i] = scale * static_cast<float>(static_cast<std::int32_t>(q.data[static_cast<std::size_t>(i)]) - q.zero_point);
  }
  return out;
}

void ActivationRange::observe(const DenseTensor& t) {
  if (t.empty()) return;
  min = std::min(min, t.values().minCoeff());
  max = std::max(max, t.values().maxCoeff());
}

ActivationParams activation_params(const ActivationRange& range) {
  const float lo = std::min(range.min, 0.0f);
  const float hi = std::max(range.max, 0.0f);
  SPLITE_CHECK(std::isfinite(lo) && std::isfinite(hi), "non-finite activation range");
  ActivationParams p;
  if (hi - lo <= 0.0f) return p;
  p.scale = (hi - lo) / 255.0f;
  const double zp = std::round(-128.0 - static_cast<double>(lo) / p.scale);
  p.zero_point = static_cast<std::int32_t>(std::clamp(zp, -128.0, 127.0));
  return p;
}

QuantizedTensor quantize_activation(const DenseTensor& t, const ActivationParams& params) {
  SPLITE_CHECK(params.scale > 0.0f, "activation scale must be positive");
  SPLITE_CHECK(t.all_finite(), "cannot quantize non-finite values");
  QuantizedTensor q;
  q.shape = t.shape();
  q.granularity = Granularity::PerTensor;
  q.scale = {params.scale};
  q.zero_point = params.zero_point;
  q.data.resize(static_cast<std::size_t>(t.size()));
  for (Index i = 0; i < t.size(); ++i) {
    const double r = std::round(static_cast<double>(t.values()[i]) / params.scale) + params.zero_point;
    q.data[static_cast<std::size_t>(i)] = static_cast<std::int8_t>(std::clamp(r, -128.0, 127.0));
  }
  return q;
}

}  // namespace splite
