#include <doctest.h>

#include "oracles.hpp"
#include "splite/tensor.hpp"

using namespace splite;

TEST_CASE("tensor construction checks the data length") {
  CHECK_THROWS_AS(DenseTensor({2, 3}, Eigen::VectorXf::Zero(5)), InvalidArgument);
  DenseTensor t({2, 3, 4});
  CHECK(t.size() == 24);
  CHECK(t.channels() == 2);
  t(1, 2, 3) = 7.0f;
  CHECK(t.values()[23] == 7.0f);
  CHECK(t.plane(1)(2, 3) == 7.0f);
  CHECK(t.matrix().rows() == 2);
  CHECK(t.matrix().cols() == 12);
}

TEST_CASE("sparsity counts elements at or below the threshold") {
  DenseTensor t({1, 2, 2});
  CHECK(sparsity(t) == 1.0);
  t(0, 0, 0) = 0.5f;
  CHECK(sparsity(t) == doctest::Approx(0.75));
  CHECK(sparsity(t, 0.5) == 1.0);
}

TEST_CASE("sparse feature maps reject non-canonical coordinates") {
  RowMatrixXf f = RowMatrixXf::Ones(2, 1);
  CHECK_THROWS_AS(SparseFeatureMap(4, 4, 1, {{1, 1}, {0, 0}}, f), InvalidArgument);
  CHECK_THROWS_AS(SparseFeatureMap(4, 4, 1, {{1, 1}, {1, 1}}, f), InvalidArgument);
  CHECK_THROWS_AS(SparseFeatureMap(4, 4, 1, {{0, 0}, {4, 0}}, f), InvalidArgument);
  CHECK_THROWS_AS(SparseFeatureMap(4, 4, 1, {{0, 0}}, f), InvalidArgument);
  SparseFeatureMap ok(4, 4, 1, {{0, 3}, {2, 1}}, f);
  const auto grid = ok.index_grid();
  CHECK(grid[3] == 0);
  CHECK(grid[9] == 1);
  CHECK(grid[0] == -1);
}

TEST_CASE("densify inverts sparsify on random sparse tensors") {
  Rng rng(3);
  for (int i = 0; i < 20; ++i) {
    const DenseTensor t = oracle::random_sparse_tensor(rng, 1 + static_cast<Index>(rng.below(5)), 9, 13, rng.uniform(0.3, 0.99));
    const SparseFeatureMap s = sparsify(t);
    CHECK(densify(s) == t);
    Index active = 0;
    for (Index y = 0; y < 9; ++y)
      for (Index x = 0; x < 13; ++x)
        if (t(0, y, x) != 0.0f) ++active;
    CHECK(s.num_active() == active);
    CHECK(std::is_sorted(s.coords().begin(), s.coords().end()));
  }
}

TEST_CASE("sparsify threshold drops small sites") {
  DenseTensor t({2, 1, 3});
  t(0, 0, 0) = 0.05f;
  t(1, 0, 1) = -0.5f;
  const SparseFeatureMap s = sparsify(t, 0.1);
  REQUIRE(s.num_active() == 1);
  CHECK(s.coords()[0] == Coord{0, 1});
  CHECK(s.features()(0, 1) == -0.5f);
}
