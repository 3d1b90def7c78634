#include "splite/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "splite/model_io.hpp"
#include "splite/quant_exec.hpp"
#include "splite/random.hpp"

namespace splite {

namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point since) {
  return std::chrono::duration<double, std::milli>(Clock::now() - since).count();
}

BoundaryHook activation_quant_hook(const WeightStore& store) {
  std::map<std::string, ActivationParams> params;
  for (const std::string& name : boundary_names()) {
    const std::string key = "calib." + name;
    if (!store.contains(key)) throw MissingParameter(key);
    const DenseTensor range = store.dense(key, {2});
    params.emplace(name, activation_params({range.values()[0], range.values()[1]}));
  }
  return [params = std::move(params)](const std::string& boundary, Eigen::Map<Eigen::VectorXf> values) {
    fake_quant_inplace(values, params.at(boundary));
  };
}

}  // namespace

std::vector<std::string> boundary_names() { return {"input", "stem", "stage1", "stage2", "stage3", "stage4"}; }

CameraIntrinsics default_intrinsics(int width, int height) {
  const double f = 1.2 * std::max(width, height);
  return {f, f, width / 2.0, height / 2.0};
}

Eigen::VectorXd decode_depth(const Eigen::VectorXf& logits, const ModelConfig& config) {
  SPLITE_CHECK(logits.size() > 0, "depth logits are empty");
  const Eigen::VectorXd t = logits.cast<double>().array().tanh().matrix();
  const double root = config.root_depth + config.root_range * t[0];
  Eigen::VectorXd d = (root + config.joint_range * t.array()).matrix();
  d[0] = root;
  return d;
}

HandModel::HandModel(const WeightStore& store, const MeshTopology& topology, ModelConfig config)
    : config_(std::move(config)),
      backbone_(Backbone::from_store(store, config_.backbone)),
      decoder_(SpliteDecoder::from_store(store, topology, config_.decoder)) {
  SPLITE_CHECK(config_.decoder.feature_channels == config_.backbone.feature_channels,
               "decoder input width must equal the encoder feature width");
  lifting_ = store.dense("lifting.matrix", {topology.level(0).num_vertices, config_.backbone.keypoints}).matrix();
  SPLITE_CHECK(lifting_.allFinite(), "lifting.matrix has non-finite entries");
  if (config_.quantize_activations) hook_ = activation_quant_hook(store);
}

Prediction HandModel::predict(const Image& image, const CameraIntrinsics& camera, const ExecContext& ctx) const {
  const auto t0 = Clock::now();
  const FusedInput input = preprocess(image, config_.input_size);
  const double preproc = elapsed_ms(t0);
  Prediction p = predict_fused(input, image.width, image.height, camera, ctx);
  p.timings.preproc_ms = preproc;
  return p;
}

Prediction HandModel::predict_fused(const FusedInput& input, int image_width, int image_height,
                                    const CameraIntrinsics& camera, const ExecContext& ctx) const {
  camera.validate();
  SPLITE_CHECK(image_width > 0 && image_height > 0, "image size must be positive");
  Prediction p;
  auto t = Clock::now();
  const BackboneOutput enc = backbone_.forward(input.tensor, ctx, hook_);
  p.timings.encode_ms = elapsed_ms(t);

  t = Clock::now();
  const Landmarks2D lm = soft_argmax(enc.heatmap_logits, config_.temperature);
  const RowMatrixXf pooled = pose_pooling(enc.feature_grid, lm.uv);
  const RowMatrixXf mesh_features = pose_to_vertex(pooled, lifting_);
  // Grid units → network-input pixels → original image pixels (pixel centers).
  const RowMatrixXd net_px = grid_to_pixel(lm.uv, config_.grid_stride, config_.grid_offset);
  p.uv.resize(net_px.rows(), 2);
  p.uv.col(0) = ((net_px.col(0).array() + 0.5) * image_width / input.tensor.width() - 0.5).matrix();
  p.uv.col(1) = ((net_px.col(1).array() + 0.5) * image_height / input.tensor.height() - 0.5).matrix();
  p.confidence = lm.confidence;
  p.depth = decode_depth(enc.depth_logits, config_);
  p.joints = backproject(p.uv, p.depth, camera);
  p.timings.lift_ms = elapsed_ms(t);

  t = Clock::now();
  const RowMatrixXf local = decoder_.decode(mesh_features, ctx);
  p.vertices = local.cast<double>().rowwise() + p.joints.row(0);
  p.timings.decode_ms = elapsed_ms(t);
  return p;
}

namespace {

DenseTensor gaussian(Rng& rng, Shape shape, double stddev) {
  DenseTensor t(std::move(shape));
  for (Index i = 0; i < t.size(); ++i) t.values()[i] = static_cast<float>(stddev * rng.normal());
  return t;
}

}  // namespace

void init_model_weights(WeightStore& store, const MeshTopology& topology, const ModelConfig& config,
                        std::uint64_t seed) {
  topology.validate();
  init_backbone_weights(store, config.backbone, seed);
  Rng rng(seed ^ 0x9E3779B97F4A7C15ull);

  // Each coarse vertex starts as a convex combination of the keypoints.
  const Index v0 = topology.level(0).num_vertices, k = config.backbone.keypoints;
  DenseTensor lift({v0, k});
  auto m = lift.matrix();
  for (Index r = 0; r < v0; ++r) {
    for (Index c = 0; c < k; ++c) m(r, c) = static_cast<float>(rng.uniform());
    m.row(r) /= m.row(r).sum();
  }
  store.set("lifting.matrix", std::move(lift));

  SpliteDecoder dec(config.decoder, topology);
  const DecoderConfig& dc = config.decoder;
  dec.reduce_weight = gaussian(rng, {dc.width, dc.feature_channels}, std::sqrt(1.0 / dc.feature_channels)).matrix();
  for (auto& layer : dec.layers()) {
    const double fan_in = static_cast<double>(layer.weights.cols());
    layer.weights = gaussian(rng, {layer.channels, layer.weights.cols()}, 0.5 * std::sqrt(1.0 / fan_in)).matrix();
  }
  dec.head_weight = gaussian(rng, {3, dc.width}, 0.01).matrix();
  dec.to_store(store);
}

}  // namespace splite
