#include <doctest.h>

#include "oracles.hpp"
#include "splite/sparse_conv.hpp"

using namespace splite;

namespace {

double max_error_on_sites(const DenseTensor& got, const Tensor<double>& ref,
                          const std::vector<std::pair<Index, Index>>& sites) {
  double err = 0;
  for (const auto& [y, x] : sites)
    for (Index c = 0; c < got.channels(); ++c) err = std::max(err, std::abs(got(c, y, x) - ref(c, y, x)));
  return err;
}

}  // namespace

TEST_CASE("dense conv matches the direct reference") {
  Rng rng(11);
  for (Index stride : {1, 2})
    for (Index k : {1, 3, 7}) {
      const DenseTensor x = oracle::random_tensor(rng, {3, 11, 9});
      const ConvSpec spec = oracle::random_conv(rng, 3, 5, k, stride, ConvMode::Generalized);
      const DenseTensor y = dense_conv2d(x, spec);
      const Tensor<double> ref = oracle::conv_reference(x, spec);
      REQUIRE(y.shape() == ref.shape());
      for (Index i = 0; i < y.size(); ++i) CHECK(std::abs(y.values()[i] - ref.values()[i]) <= 1e-6);
    }
}

TEST_CASE("dense conv impulse response and identity") {
  Rng rng(12);
  DenseTensor impulse({1, 7, 7});
  impulse(0, 3, 3) = 1.0f;
  ConvSpec spec = oracle::random_conv(rng, 1, 1, 3, 1, ConvMode::Submanifold);
  spec.bias.setZero();
  const DenseTensor y = dense_conv2d(impulse, spec);
  for (Index dy = -1; dy <= 1; ++dy)
    for (Index dx = -1; dx <= 1; ++dx)
      CHECK(y(0, 3 + dy, 3 + dx) == spec.weights.values()[(1 - dy) * 3 + (1 - dx)]);

  ConvSpec id = ConvSpec::zeros(4, 4, 1);
  for (Index c = 0; c < 4; ++c) id.weights.values()[c * 4 + c] = 1.0f;
  const DenseTensor x = oracle::random_tensor(rng, {4, 5, 6});
  CHECK(dense_conv2d(x, id) == x);
  CHECK(densify(sparse_conv2d(sparsify(x), id)) == x);
}

TEST_CASE("conv specs are validated") {
  ConvSpec spec = ConvSpec::zeros(2, 3, 3);
  CHECK_NOTHROW(spec.validate());
  ConvSpec even = ConvSpec::zeros(2, 3, 2);
  CHECK_THROWS_AS(even.validate(), InvalidArgument);
  ConvSpec strided = ConvSpec::zeros(2, 3, 3, 2, ConvMode::Submanifold);
  CHECK_THROWS_AS(strided.validate(), InvalidArgument);
  spec.bias.resize(1);
  CHECK_THROWS_AS(spec.validate(), InvalidArgument);
  CHECK_THROWS_AS(dense_conv2d(DenseTensor({3, 4, 4}), ConvSpec::zeros(2, 3, 3)), InvalidArgument);
  CHECK_THROWS_AS(sparse_conv2d(SparseFeatureMap::empty(4, 4, 1, 3), ConvSpec::zeros(2, 3, 3)), InvalidArgument);
}

TEST_CASE("empty active sets stay empty") {
  const SparseFeatureMap e = SparseFeatureMap::empty(8, 8, 1, 2);
  CHECK(sparse_conv2d(e, ConvSpec::zeros(2, 3, 3)).num_active() == 0);
  const SparseFeatureMap g = sparse_conv2d(e, ConvSpec::zeros(2, 3, 3, 2, ConvMode::Generalized));
  CHECK(g.num_active() == 0);
  CHECK(g.height() == 4);
}

TEST_CASE("sparse conv equals dense conv on the output active set") {
  Rng rng(13);
  for (int i = 0; i < 40; ++i) {
    const Index cin = 1 + static_cast<Index>(rng.below(8)), cout = 1 + static_cast<Index>(rng.below(8));
    const Index k = i % 3 == 0 ? 1 : (i % 3 == 1 ? 3 : 7);
    const bool generalized = i % 2 == 1;
    const Index stride = generalized && i % 4 == 1 ? 2 : 1;
    const DenseTensor x = oracle::random_sparse_tensor(rng, cin, 16, 16, 0.85);
    const ConvSpec spec =
        oracle::random_conv(rng, cin, cout, k, stride, generalized ? ConvMode::Generalized : ConvMode::Submanifold);
    const SparseFeatureMap y = sparse_conv2d(sparsify(x), spec);
    const auto sites = oracle::reference_active_sites(x, spec);
    REQUIRE(static_cast<std::size_t>(y.num_active()) == sites.size());
    for (std::size_t s = 0; s < sites.size(); ++s) {
      CHECK(y.coords()[s].row == sites[s].first);
      CHECK(y.coords()[s].col == sites[s].second);
    }
    CHECK(max_error_on_sites(densify(y), oracle::conv_reference(x, spec), sites) <= 1e-5);
  }
}

TEST_CASE("submanifold conv preserves the active set and is linear") {
  Rng rng(14);
  const DenseTensor x = oracle::random_sparse_tensor(rng, 4, 20, 20, 0.9);
  ConvSpec spec = oracle::random_conv(rng, 4, 6, 3, 1, ConvMode::Submanifold);
  spec.bias.setZero();
  const SparseFeatureMap in = sparsify(x);
  const SparseFeatureMap y = sparse_conv2d(in, spec);
  CHECK(y.coords() == in.coords());
  SparseFeatureMap scaled = in;
  scaled.features() *= 2.5f;
  const SparseFeatureMap y2 = sparse_conv2d(scaled, spec);
  CHECK((y2.features() - 2.5f * y.features()).cwiseAbs().maxCoeff() <= 1e-5f);
}

TEST_CASE("sparse conv is independent of the worker count") {
  Rng rng(15);
  const DenseTensor x = oracle::random_sparse_tensor(rng, 8, 48, 48, 0.5);
  const ConvSpec spec = oracle::random_conv(rng, 8, 16, 3, 1, ConvMode::Submanifold);
  const SparseFeatureMap one = sparse_conv2d(sparsify(x), spec, {1});
  CHECK(sparse_conv2d(sparsify(x), spec, {2}) == one);
  CHECK(sparse_conv2d(sparsify(x), spec, {8}) == one);
  CHECK(dense_conv2d(x, spec, {3}) == dense_conv2d(x, spec, {1}));
}

TEST_CASE("sparse max pool only sees active sites") {
  DenseTensor x({1, 4, 4});
  x(0, 0, 0) = -3.0f;
  x(0, 3, 3) = 2.0f;
  const SparseFeatureMap p = sparse_max_pool(sparsify(x), 3, 2);
  CHECK(p.height() == 2);
  const DenseTensor d = densify(p);
  CHECK(d(0, 0, 0) == -3.0f);  // absent neighbours do not contribute zeros
  CHECK(d(0, 1, 1) == 2.0f);

  DenseTensor mask({1, 4, 4});
  mask(0, 0, 0) = 1.0f;
  mask(0, 3, 3) = 1.0f;
  const DenseTensor m = dense_max_pool(x, 3, 2, &mask);
  CHECK(m(0, 0, 0) == -3.0f);
  CHECK(m(0, 1, 1) == 2.0f);
  CHECK(m(0, 0, 1) == 0.0f);
  const DenseTensor grown = dilate_mask(mask, 3, 3, 2);
  CHECK(grown.shape() == Shape{1, 2, 2});
  CHECK(grown(0, 0, 0) == 1.0f);
  CHECK(grown(0, 0, 1) == 0.0f);
  CHECK(grown(0, 1, 1) == 1.0f);
}
