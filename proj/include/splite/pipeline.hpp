#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "splite/backbone.hpp"
#include "splite/decoder.hpp"
#include "splite/image.hpp"
#include "splite/lifting.hpp"
#include "splite/mesh.hpp"
#include "splite/preproc.hpp"
#include "splite/quantize.hpp"
#include "splite/records.hpp"

namespace splite {

class WeightStore;

struct ModelConfig {
  BackboneConfig backbone;
  DecoderConfig decoder;
  int input_size = kInputSize;
  double temperature = 1.0;
  // Feature-grid to input-pixel mapping.
  double grid_stride = 4.0;
  double grid_offset = 1.5;
  // Root depth = root_depth + root_range·tanh(l_0); joint j = root + joint_range·tanh(l_j).
  double root_depth = 0.5;
  double root_range = 0.2;
  double joint_range = 0.1;
  /// Fake-quantize activations at module boundaries using the store's
  /// `calib.<boundary>` ranges.
  bool quantize_activations = false;
};

struct StageTimings {
  double preproc_ms = 0, encode_ms = 0, lift_ms = 0, decode_ms = 0;
};

struct Prediction {
  RowMatrixXd joints;    // 21 × 3, meters
  RowMatrixXd vertices;  // V × 3, meters
  RowMatrixXd uv;        // 21 × 2, input-image pixels
  Eigen::VectorXd confidence;
  Eigen::VectorXd depth;
  StageTimings timings;

  PredictionRecord record(const std::string& image_id) const { return {image_id, joints, vertices, uv, confidence}; }
};

/// Focal length 1.2·max(width, height), principal point at the image center.
CameraIntrinsics default_intrinsics(int width, int height);

/// Per-keypoint depth in meters from the depth logits.
Eigen::VectorXd decode_depth(const Eigen::VectorXf& logits, const ModelConfig& config);

/// Edge fusion → encoder → soft-argmax → pose pooling → lifting → mesh decoder
/// → back-projection.
class HandModel {
 public:
  /// Reads `backbone.*`, `lifting.matrix` (V_0 × 21) and `decoder.*`.
  HandModel(const WeightStore& store, const MeshTopology& topology, ModelConfig config = {});

  Prediction predict(const Image& image, const CameraIntrinsics& camera, const ExecContext& ctx = {}) const;

  /// Runs from an already fused input for an image of the given size.
  Prediction predict_fused(const FusedInput& input, int image_width, int image_height, const CameraIntrinsics& camera,
                           const ExecContext& ctx = {}) const;

  /// Replaces the boundary hook used by the encoder (calibration, fake quantization).
  void set_boundary_hook(BoundaryHook hook) { hook_ = std::move(hook); }

  const ModelConfig& config() const noexcept { return config_; }
  const Backbone& backbone() const noexcept { return backbone_; }
  const SpliteDecoder& decoder() const noexcept { return decoder_; }
  const RowMatrixXf& lifting() const noexcept { return lifting_; }

 private:
  ModelConfig config_;
  Backbone backbone_;
  SpliteDecoder decoder_;
  RowMatrixXf lifting_;
  BoundaryHook hook_;
};

/// Random backbone, lifting and decoder parameters for `topology`.
void init_model_weights(WeightStore& store, const MeshTopology& topology, const ModelConfig& config,
                        std::uint64_t seed);

/// Boundary names the encoder reports, in execution order.
std::vector<std::string> boundary_names();

}  // namespace splite
