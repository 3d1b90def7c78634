#include "splite/decoder.hpp"

#include "splite/model_io.hpp"

namespace splite {

CostCount count_spiral_layer(Index channels, Index gathered_channels, Index length, Index vertices) {
  const std::int64_t fan_in = static_cast<std::int64_t>(gathered_channels) * length;
  return {channels * fan_in + channels, static_cast<std::int64_t>(vertices) * 2 * channels * fan_in};
}

CostCount count_params_flops(const DecoderConfig& config, const std::vector<Index>& level_sizes) {
  SPLITE_CHECK(config.width > 0 && config.spiral_length > 0, "decoder width and spiral length must be positive");
  CostCount total;
  for (Index v : level_sizes) {
    const CostCount layer = count_spiral_layer(config.width, config.gathered_channels(), config.spiral_length, v);
    total.params += layer.params;
    total.flops += layer.flops;
  }
  return total;
}

SpliteDecoder::SpliteDecoder(DecoderConfig config, const MeshTopology& topology) : config_(config) {
  topology.validate();
  SPLITE_CHECK(config_.width > 0 && config_.feature_channels > 0 && config_.spiral_length > 0,
               "decoder dimensions must be positive");
  const Index cp = config_.gathered_channels();
  for (Index l = 0; l < topology.num_levels(); ++l) {
    tables_.push_back(build_spiral_table(topology, l, config_.spiral_length));
    layers_.push_back(SpliteLayerSpec::zeros(config_.width, config_.spiral_length, cp));
    if (l + 1 < topology.num_levels()) upsample_.push_back(topology.level(l).upsample);
  }
  reduce_weight = RowMatrixXf::Zero(config_.width, config_.feature_channels);
  reduce_bias = Eigen::VectorXf::Zero(config_.width);
  head_weight = RowMatrixXf::Zero(3, config_.width);
  head_bias = Eigen::VectorXf::Zero(3);
}

namespace {

RowMatrixXf load_matrix(const WeightStore& store, const std::string& name, Index rows, Index cols) {
  return store.dense(name, {rows, cols}).matrix();
}

Eigen::VectorXf load_vector(const WeightStore& store, const std::string& name, Index n) {
  return store.dense(name, {n}).values();
}

DenseTensor as_tensor(const RowMatrixXf& m) {
  return DenseTensor({m.rows(), m.cols()}, Eigen::Map<const Eigen::VectorXf>(m.data(), m.size()));
}

DenseTensor as_tensor(const Eigen::VectorXf& v) { return DenseTensor({v.size()}, v); }

}  // namespace

SpliteDecoder SpliteDecoder::from_store(const WeightStore& store, const MeshTopology& topology, DecoderConfig config,
                                        const std::string& prefix) {
  SpliteDecoder dec(config, topology);
  const Index c = config.width;
  dec.reduce_weight = load_matrix(store, prefix + ".reduce.weight", c, config.feature_channels);
  dec.reduce_bias = load_vector(store, prefix + ".reduce.bias", c);
  for (std::size_t l = 0; l < dec.layers_.size(); ++l) {
    SpliteLayerSpec& layer = dec.layers_[l];
    const std::string base = prefix + ".level" + std::to_string(l);
    layer.weights = load_matrix(store, base + ".weight", c, layer.partial_channels * layer.length);
    layer.bias = load_vector(store, base + ".bias", c);
  }
  dec.head_weight = load_matrix(store, prefix + ".head.weight", 3, c);
  dec.head_bias = load_vector(store, prefix + ".head.bias", 3);
  return dec;
}

void SpliteDecoder::to_store(WeightStore& store, const std::string& prefix) const {
  store.set(prefix + ".reduce.weight", as_tensor(reduce_weight));
  store.set(prefix + ".reduce.bias", as_tensor(reduce_bias));
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const std::string base = prefix + ".level" + std::to_string(l);
    store.set(base + ".weight", as_tensor(layers_[l].weights));
    store.set(base + ".bias", as_tensor(layers_[l].bias));
  }
  store.set(prefix + ".head.weight", as_tensor(head_weight));
  store.set(prefix + ".head.bias", as_tensor(head_bias));
}

RowMatrixXf SpliteDecoder::decode(const RowMatrixXf& mesh_features, const ExecContext& ctx) const {
  SPLITE_CHECK(!tables_.empty(), "decoder has no mesh levels");
  SPLITE_CHECK(mesh_features.rows() == tables_.front().num_vertices() && mesh_features.cols() == config_.feature_channels,
               "decode: mesh features must be " + std::to_string(tables_.front().num_vertices()) + "×" +
                   std::to_string(config_.feature_channels));
  RowMatrixXf x;
  chunked_matmul_transposed(mesh_features, reduce_weight, x, ctx);
  x.rowwise() += reduce_bias.transpose();
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    x = splite_layer(x, layers_[l], tables_[l], ctx);
    if (l < upsample_.size()) x = mesh_upsample(x, upsample_[l]);
  }
  RowMatrixXf out;
  chunked_matmul_transposed(x, head_weight, out, ctx);
  out.rowwise() += head_bias.transpose();
  return out;
}

}  // namespace splite
