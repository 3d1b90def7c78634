#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "splite/parallel.hpp"
#include "splite/sparse_conv.hpp"
#include "splite/tensor.hpp"

namespace splite {

class WeightStore;

enum class Arch { ResNet18, ResNet50 };

std::string arch_name(Arch arch);
Arch parse_arch(std::string_view name);

struct BackboneConfig {
  Arch arch = Arch::ResNet18;
  /// Stages executed on active sites before the features are densified (0..4).
  int sparse_stages = 2;
  Index feature_channels = 256;  // C_g
  Index keypoints = 21;
  Index in_channels = 3;

  /// Blocks per stage and the output width of each stage.
  std::vector<int> blocks() const;
  std::vector<Index> stage_widths() const;
  void validate() const;
};

/// Inference-time batch norm: y = (x - mean) / sqrt(var + eps) * gamma + beta.
struct BatchNorm {
  Eigen::VectorXf gamma, beta, mean, var;
  float eps = 1e-5f;

  Eigen::VectorXf scale() const { return (gamma.array() / (var.array() + eps).sqrt()).matrix(); }
  Eigen::VectorXf shift() const { return (beta.array() - mean.array() * scale().array()).matrix(); }
};

/// A convolution with an optional unfolded batch norm after it.
struct ConvUnit {
  ConvSpec spec;
  std::optional<BatchNorm> bn;
};

struct ResidualBlock {
  std::vector<ConvUnit> convs;  // 2 (basic) or 3 (bottleneck); ReLU between them
  std::optional<ConvUnit> shortcut;
};

struct BackboneOutput {
  DenseTensor feature_grid;    // C_g × H/4 × W/4
  DenseTensor heatmap_logits;  // K × H/4 × W/4
  Eigen::VectorXf depth_logits;  // K
};

/// Called on the features at module boundaries: "input", "stem" (after the
/// max-pool), "stage1".."stage4". The hook may rewrite the values in place.
using BoundaryHook = std::function<void(const std::string& boundary, Eigen::Map<Eigen::VectorXf> values)>;

/// ResNet encoder: 7×7/2 stem, 3×3/2 max-pool, four residual stages on the
/// stride-4 grid, then 1×1 feature and heatmap heads and a pooled depth head.
/// The stem, pool and the first `sparse_stages` stages run on active sites.
class Backbone {
 public:
  /// Reads `<prefix>.stem.*`, `<prefix>.stage<s>.block<b>.*`, `<prefix>.head_*`.
  /// With `fold_bn`, batch norms are folded into the convolutions first.
  static Backbone from_store(const WeightStore& store, const BackboneConfig& config, bool fold_bn = true,
                             const std::string& prefix = "backbone");

  /// Hybrid execution: sparse up to the cut, dense afterwards.
  BackboneOutput forward(const DenseTensor& input, const ExecContext& ctx = {}, const BoundaryHook& hook = {}) const;

  /// All-dense execution. With `masked`, every layer before the cut is
  /// restricted to the active set the sparse path would carry, which makes it
  /// the numerical twin of forward(); without it this is the plain dense network.
  BackboneOutput forward_dense(const DenseTensor& input, bool masked, const ExecContext& ctx = {},
                               const BoundaryHook& hook = {}) const;

  /// Stem through the last sparse stage, sparse or plain dense.
  SparseFeatureMap run_sparse_stages(const DenseTensor& input, const ExecContext& ctx = {}) const;
  DenseTensor run_dense_stages(const DenseTensor& input, const ExecContext& ctx = {}) const;

  const BackboneConfig& config() const noexcept { return config_; }
  const ConvUnit& stem() const noexcept { return stem_; }
  const std::vector<std::vector<ResidualBlock>>& stages() const noexcept { return stages_; }

 private:
  DenseTensor dense_prefix(const DenseTensor& input, int stages, bool masked, DenseTensor* mask, const ExecContext& ctx,
                           const BoundaryHook& hook) const;
  BackboneOutput heads(const DenseTensor& grid, const ExecContext& ctx) const;

  BackboneConfig config_;
  ConvUnit stem_;
  std::vector<std::vector<ResidualBlock>> stages_;
  ConvSpec head_feat_, head_heatmap_;
  RowMatrixXf depth_weight_;
  Eigen::VectorXf depth_bias_;
};

/// He-initialized convolutions with randomized batch-norm statistics and small
/// heads, for benchmarks and tests.
void init_backbone_weights(WeightStore& store, const BackboneConfig& config, std::uint64_t seed,
                           const std::string& prefix = "backbone");

}  // namespace splite
