#include "splite/backbone.hpp"

#include <cmath>

#include "splite/model_io.hpp"
#include "splite/random.hpp"

namespace splite {

std::string arch_name(Arch arch) { return arch == Arch::ResNet18 ? "resnet18" : "resnet50"; }

Arch parse_arch(std::string_view name) {
  if (name == "resnet18") return Arch::ResNet18;
  if (name == "resnet50") return Arch::ResNet50;
  throw InvalidArgument("unknown architecture '" + std::string(name) + "' (expected resnet18 or resnet50)");
}

std::vector<int> BackboneConfig::blocks() const {
  return arch == Arch::ResNet18 ? std::vector<int>{2, 2, 2, 2} : std::vector<int>{3, 4, 6, 3};
}

std::vector<Index> BackboneConfig::stage_widths() const {
  const Index expansion = arch == Arch::ResNet18 ? 1 : 4;
  return {64 * expansion, 128 * expansion, 256 * expansion, 512 * expansion};
}

void BackboneConfig::validate() const {
  SPLITE_CHECK(sparse_stages >= 0 && sparse_stages <= 4, "sparse stage count must be within 0..4");
  SPLITE_CHECK(feature_channels > 0 && keypoints > 0 && in_channels > 0, "backbone dimensions must be positive");
}

namespace {

constexpr Index kStemWidth = 64;
constexpr Index kStemKernel = 7;

struct ConvDesc {
  std::string prefix, conv, bn;
  Index in = 0, out = 0, kernel = 1, stride = 1;
  ConvMode mode = ConvMode::Submanifold;
};

struct BlockLayout {
  std::vector<ConvDesc> convs;
  std::optional<ConvDesc> shortcut;
};

std::string block_prefix(const std::string& prefix, int stage, int block) {
  return prefix + ".stage" + std::to_string(stage + 1) + ".block" + std::to_string(block);
}

ConvDesc stem_layout(const BackboneConfig& config, const std::string& prefix) {
  return {prefix + ".stem", "conv", "bn", config.in_channels, kStemWidth, kStemKernel, 2, ConvMode::Generalized};
}

BlockLayout block_layout(const BackboneConfig& config, const std::string& prefix, int stage, int block) {
  const auto widths = config.stage_widths();
  const Index out = widths[static_cast<std::size_t>(stage)];
  const Index in = block > 0 ? out : (stage == 0 ? kStemWidth : widths[static_cast<std::size_t>(stage - 1)]);
  const std::string p = block_prefix(prefix, stage, block);
  BlockLayout layout;
  if (config.arch == Arch::ResNet18) {
    layout.convs = {{p, "conv1", "bn1", in, out, 3}, {p, "conv2", "bn2", out, out, 3}};
  } else {
    const Index mid = out / 4;
    layout.convs = {{p, "conv1", "bn1", in, mid, 1}, {p, "conv2", "bn2", mid, mid, 3}, {p, "conv3", "bn3", mid, out, 1}};
  }
  if (in != out) layout.shortcut = ConvDesc{p + ".downsample", "conv", "bn", in, out, 1};
  return layout;
}

ConvUnit load_unit(const WeightStore& store, const ConvDesc& d) {
  ConvUnit unit;
  unit.spec = ConvSpec::zeros(d.in, d.out, d.kernel, d.stride, d.mode);
  const std::string conv = d.prefix + "." + d.conv, bn = d.prefix + "." + d.bn;
  unit.spec.weights = store.dense(conv + ".weight", {d.out, d.in, d.kernel, d.kernel});
  if (store.contains(conv + ".bias")) unit.spec.bias = store.dense(conv + ".bias", {d.out}).values();
  if (store.contains(bn + ".weight")) {
    unit.bn = BatchNorm{store.dense(bn + ".weight", {d.out}).values(), store.dense(bn + ".bias", {d.out}).values(),
                        store.dense(bn + ".running_mean", {d.out}).values(),
                        store.dense(bn + ".running_var", {d.out}).values()};
  }
  return unit;
}

ConvSpec load_head(const WeightStore& store, const std::string& name, Index in, Index out) {
  ConvSpec spec = ConvSpec::zeros(in, out, 1);
  spec.weights = store.dense(name + ".weight", {out, in, 1, 1});
  spec.bias = store.dense(name + ".bias", {out}).values();
  return spec;
}

void relu(RowMatrixXf& m) { m = m.cwiseMax(0.0f); }
void relu(DenseTensor& t) { t.values() = t.values().cwiseMax(0.0f); }

void apply_bn(const std::optional<BatchNorm>& bn, RowMatrixXf& features) {
  if (!bn) return;
  features = (features.array().rowwise() * bn->scale().transpose().array()).rowwise() + bn->shift().transpose().array();
}

void apply_bn(const std::optional<BatchNorm>& bn, DenseTensor& t) {
  if (!bn) return;
  auto m = t.matrix();
  m = (m.array().colwise() * bn->scale().array()).colwise() + bn->shift().array();
}

void apply_mask(DenseTensor& t, const DenseTensor* mask) {
  if (!mask) return;
  auto m = t.matrix();
  const Eigen::Map<const Eigen::RowVectorXf> active(mask->data(), mask->size());
  m.array().rowwise() *= active.array();
}

void call_hook(const BoundaryHook& hook, const std::string& name, RowMatrixXf& m) {
  if (hook) hook(name, Eigen::Map<Eigen::VectorXf>(m.data(), m.size()));
}

void call_hook(const BoundaryHook& hook, const std::string& name, DenseTensor& t) {
  if (hook) hook(name, Eigen::Map<Eigen::VectorXf>(t.data(), t.size()));
}

SparseFeatureMap sparse_unit(const ConvUnit& unit, const SparseFeatureMap& x, const ExecContext& ctx) {
  SparseFeatureMap y = sparse_conv2d(x, unit.spec, ctx);
  apply_bn(unit.bn, y.features());
  return y;
}

DenseTensor dense_unit(const ConvUnit& unit, const DenseTensor& x, const DenseTensor* mask, const ExecContext& ctx) {
  DenseTensor y = dense_conv2d(x, unit.spec, ctx);
  apply_bn(unit.bn, y);
  apply_mask(y, mask);
  return y;
}

SparseFeatureMap sparse_block(const ResidualBlock& block, const SparseFeatureMap& x, const ExecContext& ctx) {
  SparseFeatureMap h = x;
  for (std::size_t i = 0; i < block.convs.size(); ++i) {
    h = sparse_unit(block.convs[i], h, ctx);
    if (i + 1 < block.convs.size()) relu(h.features());
  }
  if (block.shortcut) {
    h.features() += sparse_unit(*block.shortcut, x, ctx).features();
  } else {
    h.features() += x.features();
  }
  relu(h.features());
  return h;
}

DenseTensor dense_block(const ResidualBlock& block, const DenseTensor& x, const DenseTensor* mask,
                        const ExecContext& ctx) {
  DenseTensor h = x;
  for (std::size_t i = 0; i < block.convs.size(); ++i) {
    h = dense_unit(block.convs[i], h, mask, ctx);
    if (i + 1 < block.convs.size()) relu(h);
  }
  if (block.shortcut) {
    h.values() += dense_unit(*block.shortcut, x, mask, ctx).values();
  } else {
    h.values() += x.values();
  }
  relu(h);
  return h;
}

/// 1×H×W indicator of sites where any channel is nonzero.
DenseTensor active_mask(const DenseTensor& t) {
  DenseTensor mask({1, t.height(), t.width()});
  const auto m = t.matrix();
  for (Index i = 0; i < m.cols(); ++i) mask.values()[i] = (m.col(i).array() != 0.0f).any() ? 1.0f : 0.0f;
  return mask;
}

}  // namespace

Backbone Backbone::from_store(const WeightStore& store, const BackboneConfig& config, bool fold_bn,
                              const std::string& prefix) {
  config.validate();
  const WeightStore folded = fold_bn ? fold_batchnorm(store) : WeightStore{};
  const WeightStore& src = fold_bn ? folded : store;
  Backbone b;
  b.config_ = config;
  b.stem_ = load_unit(src, stem_layout(config, prefix));
  const auto blocks = config.blocks();
  for (int s = 0; s < 4; ++s) {
    std::vector<ResidualBlock> stage;
    for (int k = 0; k < blocks[static_cast<std::size_t>(s)]; ++k) {
      const BlockLayout layout = block_layout(config, prefix, s, k);
      ResidualBlock block;
      for (const ConvDesc& d : layout.convs) block.convs.push_back(load_unit(src, d));
      if (layout.shortcut) block.shortcut = load_unit(src, *layout.shortcut);
      stage.push_back(std::move(block));
    }
    b.stages_.push_back(std::move(stage));
  }
  const Index width = config.stage_widths().back();
  b.head_feat_ = load_head(src, prefix + ".head_feat", width, config.feature_channels);
  b.head_heatmap_ = load_head(src, prefix + ".head_heatmap", width, config.keypoints);
  b.depth_weight_ = src.dense(prefix + ".head_depth.weight", {config.keypoints, width}).matrix();
  b.depth_bias_ = src.dense(prefix + ".head_depth.bias", {config.keypoints}).values();
  return b;
}

SparseFeatureMap Backbone::run_sparse_stages(const DenseTensor& input, const ExecContext& ctx) const {
  SPLITE_CHECK(input.rank() == 3 && input.channels() == config_.in_channels,
               "backbone input must be " + std::to_string(config_.in_channels) + "×H×W");
  SparseFeatureMap x = sparsify(input);
  x = sparse_unit(stem_, x, ctx);
  relu(x.features());
  x = sparse_max_pool(x, 3, 2);
  for (int s = 0; s < config_.sparse_stages; ++s)
    for (const ResidualBlock& block : stages_[static_cast<std::size_t>(s)]) x = sparse_block(block, x, ctx);
  return x;
}

DenseTensor Backbone::dense_prefix(const DenseTensor& input, int stages, bool masked, DenseTensor* mask,
                                   const ExecContext& ctx, const BoundaryHook& hook) const {
  SPLITE_CHECK(input.rank() == 3 && input.channels() == config_.in_channels,
               "backbone input must be " + std::to_string(config_.in_channels) + "×H×W");
  DenseTensor x = input;
  DenseTensor m;
  if (masked) m = dilate_mask(active_mask(x), stem_.spec.kernel_h, stem_.spec.kernel_w, stem_.spec.stride);
  call_hook(hook, "input", x);
  x = dense_unit(stem_, x, masked ? &m : nullptr, ctx);
  relu(x);
  x = dense_max_pool(x, 3, 2, masked ? &m : nullptr);
  if (masked) {
    m = dilate_mask(m, 3, 3, 2);
    apply_mask(x, &m);
  }
  call_hook(hook, "stem", x);
  for (int s = 0; s < stages; ++s) {
    for (const ResidualBlock& block : stages_[static_cast<std::size_t>(s)]) x = dense_block(block, x, masked ? &m : nullptr, ctx);
    call_hook(hook, "stage" + std::to_string(s + 1), x);
  }
  if (mask) *mask = std::move(m);
  return x;
}

DenseTensor Backbone::run_dense_stages(const DenseTensor& input, const ExecContext& ctx) const {
  return dense_prefix(input, config_.sparse_stages, false, nullptr, ctx, {});
}

BackboneOutput Backbone::heads(const DenseTensor& grid, const ExecContext& ctx) const {
  BackboneOutput out;
  out.feature_grid = dense_conv2d(grid, head_feat_, ctx);
  out.heatmap_logits = dense_conv2d(grid, head_heatmap_, ctx);
  const Eigen::VectorXf pooled = grid.matrix().rowwise().mean();
  out.depth_logits = depth_weight_ * pooled + depth_bias_;
  return out;
}

BackboneOutput Backbone::forward(const DenseTensor& input, const ExecContext& ctx, const BoundaryHook& hook) const {
  SPLITE_CHECK(input.rank() == 3 && input.channels() == config_.in_channels,
               "backbone input must be " + std::to_string(config_.in_channels) + "×H×W");
  SparseFeatureMap x = sparsify(input);
  call_hook(hook, "input", x.features());
  x = sparse_unit(stem_, x, ctx);
  relu(x.features());
  x = sparse_max_pool(x, 3, 2);
  call_hook(hook, "stem", x.features());
  for (int s = 0; s < config_.sparse_stages; ++s) {
    for (const ResidualBlock& block : stages_[static_cast<std::size_t>(s)]) x = sparse_block(block, x, ctx);
    call_hook(hook, "stage" + std::to_string(s + 1), x.features());
  }
  DenseTensor grid = densify(x);
  for (int s = config_.sparse_stages; s < 4; ++s) {
    for (const ResidualBlock& block : stages_[static_cast<std::size_t>(s)]) grid = dense_block(block, grid, nullptr, ctx);
    call_hook(hook, "stage" + std::to_string(s + 1), grid);
  }
  return heads(grid, ctx);
}

BackboneOutput Backbone::forward_dense(const DenseTensor& input, bool masked, const ExecContext& ctx,
                                       const BoundaryHook& hook) const {
  DenseTensor grid = dense_prefix(input, config_.sparse_stages, masked, nullptr, ctx, hook);
  for (int s = config_.sparse_stages; s < 4; ++s) {
    for (const ResidualBlock& block : stages_[static_cast<std::size_t>(s)]) grid = dense_block(block, grid, nullptr, ctx);
    call_hook(hook, "stage" + std::to_string(s + 1), grid);
  }
  return heads(grid, ctx);
}

namespace {

DenseTensor random_tensor(Rng& rng, Shape shape, double stddev) {
  DenseTensor t(std::move(shape));
  for (Index i = 0; i < t.size(); ++i) t.values()[i] = static_cast<float>(stddev * rng.normal());
  return t;
}

DenseTensor uniform_vector(Rng& rng, Index n, double lo, double hi) {
  DenseTensor t({n});
  for (Index i = 0; i < n; ++i) t.values()[i] = static_cast<float>(rng.uniform(lo, hi));
  return t;
}

void init_unit(WeightStore& store, Rng& rng, const ConvDesc& d, double gamma_lo, double gamma_hi) {
  const double fan_in = static_cast<double>(d.in * d.kernel * d.kernel);
  store.set(d.prefix + "." + d.conv + ".weight", random_tensor(rng, {d.out, d.in, d.kernel, d.kernel}, std::sqrt(2.0 / fan_in)));
  const std::string bn = d.prefix + "." + d.bn;
  store.set(bn + ".weight", uniform_vector(rng, d.out, gamma_lo, gamma_hi));
  store.set(bn + ".bias", random_tensor(rng, {d.out}, 0.05));
  store.set(bn + ".running_mean", random_tensor(rng, {d.out}, 0.05));
  store.set(bn + ".running_var", uniform_vector(rng, d.out, 0.8, 1.2));
}

}  // namespace

void init_backbone_weights(WeightStore& store, const BackboneConfig& config, std::uint64_t seed,
                           const std::string& prefix) {
  config.validate();
  Rng rng(seed);
  init_unit(store, rng, stem_layout(config, prefix), 0.8, 1.2);
  const auto blocks = config.blocks();
  for (int s = 0; s < 4; ++s)
    for (int k = 0; k < blocks[static_cast<std::size_t>(s)]; ++k) {
      const BlockLayout layout = block_layout(config, prefix, s, k);
      for (std::size_t i = 0; i < layout.convs.size(); ++i) {
        // A damped last norm keeps the residual sum from growing stage over stage.
        const bool last = i + 1 == layout.convs.size();
        init_unit(store, rng, layout.convs[i], last ? 0.2 : 0.8, last ? 0.4 : 1.2);
      }
      if (layout.shortcut) init_unit(store, rng, *layout.shortcut, 0.8, 1.2);
    }
  const Index width = config.stage_widths().back();
  const double head_std = std::sqrt(1.0 / static_cast<double>(width));
  store.set(prefix + ".head_feat.weight", random_tensor(rng, {config.feature_channels, width, 1, 1}, head_std));
  store.set(prefix + ".head_feat.bias", DenseTensor({config.feature_channels}));
  store.set(prefix + ".head_heatmap.weight", random_tensor(rng, {config.keypoints, width, 1, 1}, head_std));
  store.set(prefix + ".head_heatmap.bias", DenseTensor({config.keypoints}));
  store.set(prefix + ".head_depth.weight", random_tensor(rng, {config.keypoints, width}, head_std));
  store.set(prefix + ".head_depth.bias", DenseTensor({config.keypoints}));
}

}  // namespace splite
