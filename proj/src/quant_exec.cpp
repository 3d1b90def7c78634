#include "splite/quant_exec.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>

#include "splite/losses.hpp"
#include "splite/model_io.hpp"

namespace splite {

QuantizedConv QuantizedConv::from_spec(const ConvSpec& spec) {
  spec.validate();
  return {quantize_affine(spec.weights, Granularity::PerChannel), spec.bias, spec.stride};
}

void QuantizedConv::validate() const {
  weights.validate();
  SPLITE_CHECK(weights.shape.size() == 4, "quantized convolution weights must be (out, in, kh, kw)");
  SPLITE_CHECK(weights.zero_point == 0, "quantized convolution weights must be symmetric");
  SPLITE_CHECK(bias.size() == weights.shape[0], "quantized convolution bias length mismatch");
  SPLITE_CHECK(stride >= 1, "quantized convolution stride must be positive");
}

ConvSpec QuantizedConv::dequantized_spec() const {
  validate();
  ConvSpec spec = ConvSpec::zeros(weights.shape[1], weights.shape[0], weights.shape[2], stride,
                                  stride == 1 ? ConvMode::Submanifold : ConvMode::Generalized);
  spec.kernel_w = weights.shape[3];
  spec.weights = dequantize(weights);
  spec.bias = bias;
  return spec;
}

DenseTensor qconv2d(const QuantizedTensor& input, const QuantizedConv& conv) {
  conv.validate();
  input.validate();
  SPLITE_CHECK(input.granularity == Granularity::PerTensor, "qconv2d input must be per-tensor quantized");
  SPLITE_CHECK(input.shape.size() == 3, "qconv2d input must be C×H×W");
  const Index out_c = conv.weights.shape[0], in_c = conv.weights.shape[1];
  const Index kh = conv.weights.shape[2], kw = conv.weights.shape[3];
  SPLITE_CHECK(kh % 2 == 1 && kw % 2 == 1, "qconv2d kernel extents must be odd");
  SPLITE_CHECK(input.shape[0] == in_c, "qconv2d: input has " + std::to_string(input.shape[0]) +
                                           " channels, weights expect " + std::to_string(in_c));
  const Index h = input.shape[1], w = input.shape[2], s = conv.stride;
  const Index out_h = (h + 2 * (kh / 2) - kh) / s + 1, out_w = (w + 2 * (kw / 2) - kw) / s + 1;
  const Index depth = in_c * kh * kw;

  using IntMatrix = Eigen::Matrix<std::int32_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const IntMatrix wq = Eigen::Map<const Eigen::Matrix<std::int8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
                           conv.weights.data.data(), out_c, depth)
                           .cast<std::int32_t>();
  IntMatrix cols(depth, out_h * out_w);
  const std::int32_t zp = input.zero_point;
  for (Index c = 0; c < in_c; ++c)
    for (Index ky = 0; ky < kh; ++ky)
      for (Index kx = 0; kx < kw; ++kx) {
        const Index row = (c * kh + ky) * kw + kx;
        for (Index oy = 0; oy < out_h; ++oy)
          for (Index ox = 0; ox < out_w; ++ox) {
            const Index y = oy * s - kh / 2 + ky, x = ox * s - kw / 2 + kx;
            // Padding is real zero, i.e. q == zero point.
            cols(row, oy * out_w + ox) = (y < 0 || y >= h || x < 0 || x >= w)
                                             ? 0
                                             : static_cast<std::int32_t>(input.data[static_cast<std::size_t>((c * h + y) * w + x)]) - zp;
          }
      }

  const std::int64_t max_in = cols.size() ? static_cast<std::int64_t>(cols.cwiseAbs().maxCoeff()) : 0;
  const std::int64_t max_w = wq.size() ? static_cast<std::int64_t>(wq.cwiseAbs().maxCoeff()) : 0;
  IntMatrix acc(out_c, out_h * out_w);
  if (max_in * max_w * depth <= std::numeric_limits<std::int32_t>::max()) {
    acc.noalias() = wq * cols;  // cannot overflow
  } else {
    for (Index o = 0; o < out_c; ++o)
      for (Index p = 0; p < cols.cols(); ++p) {
        std::int32_t sum = 0;
        for (Index k = 0; k < depth; ++k) {
          std::int32_t prod = 0;
          if (__builtin_mul_overflow(wq(o, k), cols(k, p), &prod) || __builtin_add_overflow(sum, prod, &sum)) {
            throw Error("qconv2d: int32 accumulator overflow at output channel " + std::to_string(o));
          }
        }
        acc(o, p) = sum;
      }
  }

  DenseTensor out({out_c, out_h, out_w});
  auto m = out.matrix();
  const double s_in = input.scale[0];
  for (Index o = 0; o < out_c; ++o) {
    const double scale = s_in * conv.weights.scale_of(o * depth);
    m.row(o) = ((acc.row(o).cast<double>() * scale).array() + static_cast<double>(conv.bias[o])).cast<float>();
  }
  return out;
}

double qconv_error_bound(const QuantizedTensor& input, const QuantizedConv& conv) {
  conv.validate();
  SPLITE_CHECK(!input.scale.empty(), "input quantization parameters missing");
  const double max_w = *std::max_element(conv.weights.scale.begin(), conv.weights.scale.end());
  const double k = static_cast<double>(conv.weights.shape[1] * conv.weights.shape[2] * conv.weights.shape[3]);
  return static_cast<double>(input.scale[0]) * max_w * k * 0.5;
}

void fake_quant_inplace(Eigen::Map<Eigen::VectorXf> values, const ActivationParams& params) {
  SPLITE_CHECK(params.scale > 0.0f, "activation scale must be positive");
  for (Index i = 0; i < values.size(); ++i) {
    SPLITE_CHECK(std::isfinite(values[i]), "cannot quantize non-finite values");
    const double r = std::round(static_cast<double>(values[i]) / params.scale) + params.zero_point;
    const auto q = static_cast<std::int32_t>(std::clamp(r, -128.0, 127.0));
    values[i] = params.scale * static_cast<float>(q - params.zero_point);
  }
}

DenseTensor fake_quant(const DenseTensor& t, const ActivationParams& params) {
  DenseTensor out = t;
  fake_quant_inplace(Eigen::Map<Eigen::VectorXf>(out.data(), out.size()), params);
  return out;
}

DenseTensor fake_quant_weights(const DenseTensor& t, Granularity granularity) {
  return dequantize(quantize_affine(t, granularity));
}

std::map<std::string, ActivationRange> calibrate_activations(const HandModel& model,
                                                             const std::vector<FusedInput>& inputs,
                                                             const ExecContext& ctx) {
  std::map<std::string, ActivationRange> ranges;
  for (const std::string& name : boundary_names()) ranges[name] = {};
  HandModel observer = model;
  observer.set_boundary_hook([&ranges](const std::string& boundary, Eigen::Map<Eigen::VectorXf> values) {
    if (values.size() == 0) return;
    ActivationRange& r = ranges.at(boundary);
    r.min = std::min(r.min, values.minCoeff());
    r.max = std::max(r.max, values.maxCoeff());
  });
  for (const FusedInput& in : inputs) {
    const int w = static_cast<int>(in.tensor.width()), h = static_cast<int>(in.tensor.height());
    observer.predict_fused(in, w, h, default_intrinsics(w, h), ctx);
  }
  return ranges;
}

void check_store_match(const WeightStore& f32_store, const WeightStore& i8_store) {
  const WeightStore folded = fold_batchnorm(f32_store);
  for (const auto& [name, tensor] : i8_store) {
    if (name.rfind("calib.", 0) == 0) continue;
    SPLITE_CHECK(folded.contains(name), "store mismatch: " + name + " is absent from the f32 store");
    SPLITE_CHECK(shape_of(folded.at(name)) == shape_of(tensor), "store mismatch: " + name + " changed shape");
  }
  for (const auto& [name, tensor] : folded) {
    SPLITE_CHECK(i8_store.contains(name), "store mismatch: " + name + " is absent from the int8 store");
  }
}

std::vector<PipelineDelta> quantized_pipeline_delta(const std::vector<FusedInput>& inputs, const WeightStore& f32_store,
                                                    const WeightStore& i8_store, const MeshTopology& topology,
                                                    const ModelConfig& config, const ExecContext& ctx) {
  check_store_match(f32_store, i8_store);
  const HandModel reference(f32_store, topology, config);
  const HandModel quantized(i8_store, topology, config);
  std::vector<PipelineDelta> out;
  for (const FusedInput& in : inputs) {
    const int w = static_cast<int>(in.tensor.width()), h = static_cast<int>(in.tensor.height());
    const CameraIntrinsics k = default_intrinsics(w, h);
    const Prediction a = reference.predict_fused(in, w, h, k, ctx);
    const Prediction b = quantized.predict_fused(in, w, h, k, ctx);
    const Eigen::VectorXd joint = (a.joints - b.joints).rowwise().norm() * 1000.0;
    PipelineDelta d;
    d.mean_joint_mm = joint.mean();
    d.max_joint_mm = joint.maxCoeff();
    d.pa_mpjpe_mm = pa_mpjpe<double>(b.joints, a.joints);
    d.mean_vertex_mm = (a.vertices - b.vertices).rowwise().norm().mean() * 1000.0;
    out.push_back(d);
  }
  return out;
}

}  // namespace splite
