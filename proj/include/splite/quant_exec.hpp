#pragma once

#include <map>
#include <string>
#include <vector>

#include "splite/pipeline.hpp"
#include "splite/quantize.hpp"
#include "splite/sparse_conv.hpp"

namespace splite {

class WeightStore;

/// Convolution with int8 weights (per output channel) and f32 bias.
struct QuantizedConv {
  QuantizedTensor weights;  // (out, in, kh, kw)
  Eigen::VectorXf bias;
  Index stride = 1;

  static QuantizedConv from_spec(const ConvSpec& spec);
  /// The f32 convolution over the dequantized weights.
  ConvSpec dequantized_spec() const;
  void validate() const;
};

/// Integer convolution of a per-tensor quantized C×H×W input. Products of
/// (q_in - zp_in) and q_w are summed in 32-bit integers, then rescaled by
/// scale_in · scale_w[o] and offset by the bias. Throws on accumulator overflow.
DenseTensor qconv2d(const QuantizedTensor& input, const QuantizedConv& conv);

/// scale_in · max_o scale_w[o] · (kernel volume · in_channels) · 0.5.
double qconv_error_bound(const QuantizedTensor& input, const QuantizedConv& conv);

/// dequantize(quantize_activation(t, params)) in one pass.
DenseTensor fake_quant(const DenseTensor& t, const ActivationParams& params);
void fake_quant_inplace(Eigen::Map<Eigen::VectorXf> values, const ActivationParams& params);

/// dequantize(quantize_affine(t, granularity)).
DenseTensor fake_quant_weights(const DenseTensor& t, Granularity granularity);

/// Min/max of the encoder boundary activations over `inputs`.
std::map<std::string, ActivationRange> calibrate_activations(const HandModel& model,
                                                             const std::vector<FusedInput>& inputs,
                                                             const ExecContext& ctx = {});

/// Differences between the f32 and the int8 model on one input.
struct PipelineDelta {
  double mean_joint_mm = 0;   // mean joint distance
  double max_joint_mm = 0;
  double pa_mpjpe_mm = 0;     // aligned mean joint distance
  double mean_vertex_mm = 0;
};

/// Runs both models on every input. Throws when the int8 store does not hold
/// the same parameters (by name and shape) as the BN-folded f32 store.
std::vector<PipelineDelta> quantized_pipeline_delta(const std::vector<FusedInput>& inputs, const WeightStore& f32_store,
                                                    const WeightStore& i8_store, const MeshTopology& topology,
                                                    const ModelConfig& config = {}, const ExecContext& ctx = {});

/// Throws InvalidArgument naming the first parameter the two stores disagree on.
void check_store_match(const WeightStore& f32_store, const WeightStore& i8_store);

}  // namespace splite
