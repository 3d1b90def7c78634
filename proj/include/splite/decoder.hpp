#pragma once

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "splite/mesh.hpp"
#include "splite/parallel.hpp"
#include "splite/spiral.hpp"

namespace splite {

class WeightStore;

/// Number of input channels a partial spiral layer contracts: ceil(fraction * C).
inline Index partial_width(Index channels, double fraction = 0.25) {
  return static_cast<Index>(std::ceil(fraction * static_cast<double>(channels) - 1e-9));
}

/// Spiral layer with C in = out channels contracting the first
/// `partial_channels` input channels of each of `length` spiral members.
/// partial_channels == channels is the full-channel (SpiralConv++) layer.
template <typename Scalar>
struct SpiralLayer {
  Index channels = 0;
  Index length = 0;
  Index partial_channels = 0;
  RowMatrix<Scalar> weights;                  // C × (partial_channels · length)
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> bias;  // C

  static SpiralLayer zeros(Index channels, Index length, Index partial_channels) {
    SpiralLayer layer{channels, length, partial_channels, RowMatrix<Scalar>::Zero(channels, partial_channels * length),
                      Eigen::Matrix<Scalar, Eigen::Dynamic, 1>::Zero(channels)};
    return layer;
  }

  void validate() const {
    SPLITE_CHECK(channels > 0 && length > 0, "spiral layer needs positive channels and length");
    SPLITE_CHECK(partial_channels >= 1 && partial_channels <= channels, "partial channel count out of range");
    SPLITE_CHECK(weights.rows() == channels && weights.cols() == partial_channels * length,
                 "spiral layer weights must be " + std::to_string(channels) + "×" +
                     std::to_string(partial_channels * length));
    SPLITE_CHECK(bias.size() == channels, "spiral layer bias length must equal channels");
  }
};

using SpliteLayerSpec = SpiralLayer<float>;

/// ReLU(gather(x) · Wᵀ + bias + x): partial-channel spiral convolution with a
/// pre-activation residual.
template <typename Derived>
RowMatrix<typename Derived::Scalar> splite_layer(const Eigen::MatrixBase<Derived>& features,
                                                 const SpiralLayer<typename Derived::Scalar>& layer,
                                                 const SpiralIndexTable& table, const ExecContext& ctx = {}) {
  using Scalar = typename Derived::Scalar;
  layer.validate();
  SPLITE_CHECK(features.cols() == layer.channels, "splite_layer: feature width does not match the layer");
  SPLITE_CHECK(table.length() == layer.length, "splite_layer: spiral table length does not match the layer");
  const RowMatrix<Scalar> gathered = parallel_gather(features, table, layer.partial_channels, ctx);
  RowMatrix<Scalar> out;
  chunked_matmul_transposed(gathered, layer.weights, out, ctx);
  out.rowwise() += layer.bias.transpose();
  out += features;
  return out.cwiseMax(Scalar(0));
}

/// Full-channel spiral convolution with the same residual form.
template <typename Derived>
RowMatrix<typename Derived::Scalar> spiralconv_pp_layer(const Eigen::MatrixBase<Derived>& features,
                                                        const SpiralLayer<typename Derived::Scalar>& layer,
                                                        const SpiralIndexTable& table, const ExecContext& ctx = {}) {
  SPLITE_CHECK(layer.partial_channels == layer.channels, "spiralconv_pp_layer needs a full-channel layer");
  return splite_layer(features, layer, table, ctx);
}

/// U · features for a row-stochastic upsampling matrix.
template <typename Derived>
RowMatrix<typename Derived::Scalar> mesh_upsample(const Eigen::MatrixBase<Derived>& features,
                                                  const UpsampleMatrix& upsample) {
  using Scalar = typename Derived::Scalar;
  SPLITE_CHECK(upsample.cols() == features.rows(), "mesh_upsample: upsample columns do not match vertex count");
  const Eigen::SparseMatrix<Scalar, Eigen::RowMajor> u = upsample.template cast<Scalar>();
  return u * features.derived();
}

struct DecoderConfig {
  Index feature_channels = 256;  // C_g
  Index width = 48;              // decoder channels C
  Index spiral_length = 9;       // L
  double partial_fraction = 0.25;
  bool partial = true;  // false: full-channel SpiralConv++ layers

  Index gathered_channels() const { return partial ? partial_width(width, partial_fraction) : width; }
};

struct CostCount {
  std::int64_t params = 0;
  std::int64_t flops = 0;
};

/// One spiral layer: params = C·(C_p·L) + C, FLOPs = V·2·C·(C_p·L).
CostCount count_spiral_layer(Index channels, Index gathered_channels, Index length, Index vertices);

/// Spiral layers summed over the given level sizes.
CostCount count_params_flops(const DecoderConfig& config, const std::vector<Index>& level_sizes);

/// Reduce (C_g → C) on the coarsest mesh, then per level a spiral layer followed
/// by upsampling (none after the finest level), then a per-vertex C → 3 head.
class SpliteDecoder {
 public:
  SpliteDecoder(DecoderConfig config, const MeshTopology& topology);

  /// Loads `<prefix>.reduce.*`, `<prefix>.level<l>.*` and `<prefix>.head.*`.
  static SpliteDecoder from_store(const WeightStore& store, const MeshTopology& topology, DecoderConfig config,
                                  const std::string& prefix = "decoder");

  /// Writes this decoder's parameters into `store` under `prefix`.
  void to_store(WeightStore& store, const std::string& prefix = "decoder") const;

  /// mesh_features: V_0 × C_g. Returns V_last × 3 root-relative coordinates.
  RowMatrixXf decode(const RowMatrixXf& mesh_features, const ExecContext& ctx = {}) const;

  const DecoderConfig& config() const noexcept { return config_; }
  const std::vector<SpiralIndexTable>& tables() const noexcept { return tables_; }
  std::vector<SpliteLayerSpec>& layers() noexcept { return layers_; }
  const std::vector<SpliteLayerSpec>& layers() const noexcept { return layers_; }
  const std::vector<UpsampleMatrix>& upsamplers() const noexcept { return upsample_; }

  RowMatrixXf reduce_weight, head_weight;
  Eigen::VectorXf reduce_bias, head_bias;

 private:
  DecoderConfig config_;
  std::vector<SpiralIndexTable> tables_;
  std::vector<SpliteLayerSpec> layers_;
  std::vector<UpsampleMatrix> upsample_;
};

}  // namespace splite
