#include <doctest.h>

#include "oracles.hpp"
#include "splite/model_io.hpp"
#include "splite/pipeline.hpp"
#include "splite/quant_exec.hpp"
#include "splite/quantize.hpp"

using namespace splite;

namespace {

QuantizedTensor quantize_input(const DenseTensor& x) {
  ActivationRange r;
  r.observe(x);
  return quantize_activation(x, activation_params(r));
}

double max_abs_diff(const DenseTensor& a, const Tensor<double>& b) {
  double m = 0;
  for (Index i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.values()[i] - b.values()[i]));
  return m;
}

}  // namespace

TEST_CASE("symmetric weight quantization") {
  Rng rng(71);
  const DenseTensor w = oracle::random_tensor(rng, {6, 3, 3, 3});
  const QuantizedTensor q = quantize_affine(w, Granularity::PerChannel);
  CHECK(q.scale.size() == 6);
  CHECK(q.zero_point == 0);
  for (std::int8_t v : q.data) CHECK(v >= -127);
  const DenseTensor d = dequantize(q);
  for (Index i = 0; i < w.size(); ++i) CHECK(std::abs(d.values()[i] - w.values()[i]) <= q.scale_of(i) / 2 * 1.0001f);
  const QuantizedTensor zero = quantize_affine(DenseTensor({2, 2}), Granularity::PerTensor);
  CHECK(zero.scale[0] == 1.0f);
}

TEST_CASE("activation parameters always represent zero") {
  ActivationRange r;
  DenseTensor t({3});
  t.values() << 0.5f, 2.0f, 4.0f;
  r.observe(t);
  CHECK(r.min == 0.0f);
  const ActivationParams p = activation_params(r);
  const QuantizedTensor q = quantize_activation(DenseTensor({1}), p);
  CHECK(dequantize(q).values()[0] == 0.0f);
  CHECK(p.zero_point >= -128);
  CHECK(p.zero_point <= 127);
}

TEST_CASE("qconv zero input is bias only") {
  Rng rng(72);
  const ConvSpec spec = oracle::random_conv(rng, 3, 4, 3, 1, ConvMode::Generalized);
  const QuantizedConv qc = QuantizedConv::from_spec(spec);
  ActivationParams p{0.05f, -20};
  const DenseTensor out = qconv2d(quantize_activation(DenseTensor({3, 5, 5}), p), qc);
  for (Index o = 0; o < 4; ++o) CHECK((out.plane(o).array() == spec.bias[o]).all());
}

TEST_CASE("qconv identity on representable values is exact") {
  ConvSpec id = ConvSpec::zeros(3, 3, 1);
  for (Index c = 0; c < 3; ++c) id.weights.values()[c * 3 + c] = 1.0f;
  const ActivationParams p{0.125f, 0};
  Rng rng(73);
  DenseTensor x({3, 4, 4});
  for (Index i = 0; i < x.size(); ++i) x.values()[i] = 0.125f * static_cast<float>(static_cast<int>(rng.below(200)) - 100);
  const DenseTensor got = qconv2d(quantize_activation(x, p), QuantizedConv::from_spec(id));
  CHECK(got == dense_conv2d(x, id));
}

TEST_CASE("qconv stays within the analytic bound") {
  Rng rng(74);
  for (int i = 0; i < 30; ++i) {
    const Index cin = 1 + static_cast<Index>(rng.below(16)), cout = 1 + static_cast<Index>(rng.below(16));
    const Index k = rng.below(2) == 0 ? 1 : 3, stride = 1 + static_cast<Index>(rng.below(2));
    const ConvSpec spec = oracle::random_conv(rng, cin, cout, k, stride, ConvMode::Generalized);
    const QuantizedConv qc = QuantizedConv::from_spec(spec);
    const QuantizedTensor in = quantize_input(oracle::random_tensor(rng, {cin, 9, 11}, -2, 3));
    const DenseTensor got = qconv2d(in, qc);
    const Tensor<double> ref = oracle::conv_reference(dequantize(in), qc.dequantized_spec());
    CHECK(max_abs_diff(got, ref) <= qconv_error_bound(in, qc));
  }
}

TEST_CASE("qconv rejects malformed operands") {
  Rng rng(75);
  const QuantizedConv qc = QuantizedConv::from_spec(oracle::random_conv(rng, 2, 2, 3, 1, ConvMode::Generalized));
  const QuantizedTensor in = quantize_input(oracle::random_tensor(rng, {3, 4, 4}));
  CHECK_THROWS_AS(qconv2d(in, qc), InvalidArgument);
  QuantizedTensor no_scale = quantize_input(oracle::random_tensor(rng, {2, 4, 4}));
  no_scale.scale.clear();
  CHECK_THROWS_AS(qconv2d(no_scale, qc), InvalidArgument);
}

TEST_CASE("qconv raises instead of wrapping on overflow") {
  // 255 · 127 · depth exceeds int32 once depth > 66311.
  const Index cin = 7400;
  QuantizedConv qc;
  qc.weights.shape = {1, cin, 3, 3};
  qc.weights.data.assign(static_cast<std::size_t>(cin * 9), 127);
  qc.weights.scale = {1.0f};
  qc.weights.granularity = Granularity::PerChannel;
  qc.bias = Eigen::VectorXf::Zero(1);
  QuantizedTensor in;
  in.shape = {cin, 3, 3};
  in.data.assign(static_cast<std::size_t>(cin * 9), 127);
  in.scale = {1.0f};
  in.zero_point = -128;
  CHECK_THROWS_AS(qconv2d(in, qc), Error);
  in.data.assign(in.data.size(), -128);  // (q - zp) = 0 everywhere: no overflow
  CHECK(qconv2d(in, qc).values().isZero());
}

TEST_CASE("fake quantization") {
  Rng rng(76);
  for (int i = 0; i < 100; ++i) {
    const DenseTensor t = oracle::random_tensor(rng, {1 + static_cast<Index>(rng.below(50))}, -5, 5);
    ActivationRange r;
    r.observe(t);
    const ActivationParams p = activation_params(r);
    const DenseTensor once = fake_quant(t, p);
    CHECK(fake_quant(once, p) == once);
    CHECK(once == dequantize(quantize_activation(t, p)));
    DenseTensor inplace = t;
    fake_quant_inplace(Eigen::Map<Eigen::VectorXf>(inplace.data(), inplace.size()), p);
    CHECK(inplace == once);
  }
  const DenseTensor w = oracle::random_tensor(rng, {4, 9});
  const DenseTensor fw = fake_quant_weights(w, Granularity::PerChannel);
  CHECK(fake_quant_weights(fw, Granularity::PerChannel) == fw);
}

TEST_CASE("single-layer quantization error propagates within a Lipschitz bound") {
  Rng rng(77);
  const ConvSpec c1 = oracle::random_conv(rng, 4, 8, 3, 1, ConvMode::Generalized);
  const ConvSpec c2 = oracle::random_conv(rng, 8, 5, 3, 1, ConvMode::Generalized);
  const DenseTensor x = oracle::random_tensor(rng, {4, 12, 12});
  auto net = [&](const ConvSpec& first) {
    DenseTensor h = dense_conv2d(x, first);
    h.values() = h.values().cwiseMax(0.0f);
    return dense_conv2d(h, c2);
  };
  const QuantizedConv q1 = QuantizedConv::from_spec(c1);
  const DenseTensor ref = net(c1), got = net(q1.dequantized_spec());
  // Layer bound: |ΔW| ≤ scale/2 per weight, times the input sup norm, over the window.
  const double max_scale = *std::max_element(q1.weights.scale.begin(), q1.weights.scale.end());
  const double layer_bound = max_scale / 2 * 4 * 9 * x.values().cwiseAbs().maxCoeff();
  // ReLU is 1-Lipschitz; conv2 is bounded by its largest absolute row sum.
  double lipschitz = 0;
  for (Index o = 0; o < 5; ++o)
    lipschitz = std::max(lipschitz, static_cast<double>(c2.weights.matrix().row(o).cwiseAbs().sum()));
  const double diff = (got.values() - ref.values()).cwiseAbs().maxCoeff();
  CHECK(diff <= lipschitz * layer_bound * 1.001 + 1e-6);
  CHECK(diff > 0);
}

TEST_CASE("quantized pipeline") {
  const MeshTopology topo = make_hand_template_topology();
  WeightStore f32;
  init_model_weights(f32, topo, ModelConfig{}, 11);
  const std::vector<FusedInput> inputs{synth_fused_input(128, 0.9, 1)};

  const WeightStore folded = fold_batchnorm(f32);
  WeightStore on_grid;
  for (const auto& [name, t] : folded) {
    const auto& d = std::get<DenseTensor>(t);
    on_grid.set(name, d.rank() >= 2 ? fake_quant_weights(d, Granularity::PerChannel) : d);
  }
  const auto exact = quantized_pipeline_delta(inputs, on_grid, quantize_store(on_grid), topo);
  CHECK(exact[0].mean_joint_mm <= 1e-3);
  CHECK(exact[0].mean_vertex_mm <= 1e-3);

  const WeightStore i8 = quantize_store(f32);
  const auto delta = quantized_pipeline_delta(inputs, f32, i8, topo);
  CHECK(delta[0].mean_joint_mm <= 5.0);
  CHECK(delta[0].max_joint_mm >= delta[0].mean_joint_mm);
  CHECK(quantized_pipeline_delta(inputs, f32, i8, topo, {}, {4})[0].mean_joint_mm == delta[0].mean_joint_mm);

  WeightStore wrong = i8;
  wrong.erase("lifting.matrix");
  CHECK_THROWS_AS(check_store_match(fold_batchnorm(f32), wrong), InvalidArgument);
  CHECK_THROWS_AS(quantized_pipeline_delta(inputs, f32, wrong, topo), InvalidArgument);
}

TEST_CASE("activation calibration covers every boundary") {
  const MeshTopology topo = make_hand_template_topology();
  WeightStore store;
  init_model_weights(store, topo, ModelConfig{}, 12);
  const HandModel model(store, topo);
  const auto ranges = calibrate_activations(model, {synth_fused_input(128, 0.85, 2)});
  for (const auto& name : boundary_names()) {
    REQUIRE(ranges.count(name) == 1);
    CHECK(ranges.at(name).min <= 0.0f);
    CHECK(ranges.at(name).max > 0.0f);
  }
}
