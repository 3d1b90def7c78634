#pragma once

#include <Eigen/Core>

#include <compare>
#include <cstdint>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "splite/common.hpp"

namespace splite {

using Index = Eigen::Index;
using Shape = std::vector<Index>;

template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowMatrixXf = RowMatrix<float>;
using RowMatrixXd = RowMatrix<double>;

inline Index shape_volume(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), Index{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape);

/// Row-major dense array. Rank-3 tensors are laid out (channels, height, width);
/// convolution weights are (out, in, kh, kw).
template <typename Scalar>
class Tensor {
 public:
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using PlaneMap = Eigen::Map<RowMatrix<Scalar>>;
  using ConstPlaneMap = Eigen::Map<const RowMatrix<Scalar>>;

  Tensor() = default;

  explicit Tensor(Shape shape) : shape_(std::move(shape)), values_(Vector::Zero(shape_volume(shape_))) {
    for (Index d : shape_) SPLITE_CHECK(d >= 0, "negative tensor extent");
  }

  Tensor(Shape shape, Vector values) : shape_(std::move(shape)), values_(std::move(values)) {
    SPLITE_CHECK(values_.size() == shape_volume(shape_),
                 "tensor data length " + std::to_string(values_.size()) + " does not match shape " +
                     shape_string(shape_));
  }

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }

  const Shape& shape() const noexcept { return shape_; }
  Index rank() const noexcept { return static_cast<Index>(shape_.size()); }
  Index dim(Index axis) const { return shape_.at(static_cast<std::size_t>(axis)); }
  Index size() const noexcept { return values_.size(); }
  bool empty() const noexcept { return values_.size() == 0; }

  Vector& values() noexcept { return values_; }
  const Vector& values() const noexcept { return values_; }
  Scalar* data() noexcept { return values_.data(); }
  const Scalar* data() const noexcept { return values_.data(); }

  // Rank-3 accessors.
  Index channels() const { return dim(0); }
  Index height() const { return dim(1); }
  Index width() const { return dim(2); }

  Scalar& operator()(Index c, Index y, Index x) { return values_[(c * shape_[1] + y) * shape_[2] + x]; }
  Scalar operator()(Index c, Index y, Index x) const { return values_[(c * shape_[1] + y) * shape_[2] + x]; }

  /// The (height × width) plane of channel `c`.
  PlaneMap plane(Index c) { return PlaneMap(data() + c * shape_[1] * shape_[2], shape_[1], shape_[2]); }
  ConstPlaneMap plane(Index c) const {
    return ConstPlaneMap(data() + c * shape_[1] * shape_[2], shape_[1], shape_[2]);
  }

  /// View as dim(0) × (product of remaining extents).
  PlaneMap matrix() { return PlaneMap(data(), shape_.empty() ? 0 : shape_[0], inner_volume()); }
  ConstPlaneMap matrix() const { return ConstPlaneMap(data(), shape_.empty() ? 0 : shape_[0], inner_volume()); }

  bool all_finite() const { return values_.allFinite(); }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.values_ == b.values_;
  }

 private:
  Index inner_volume() const {
    return shape_.empty() || shape_[0] == 0 ? 0 : values_.size() / shape_[0];
  }

  Shape shape_;
  Vector values_;
};

using DenseTensor = Tensor<float>;

struct Coord {
  std::int32_t row = 0;
  std::int32_t col = 0;
  friend auto operator<=>(const Coord&, const Coord&) = default;
};

/// Active-site list in canonical (sorted, unique) order with one feature row per site.
class SparseFeatureMap {
 public:
  SparseFeatureMap() = default;

  /// Validates canonical order, bounds and feature row count.
  SparseFeatureMap(Index height, Index width, Index stride, std::vector<Coord> coords, RowMatrixXf features);

  /// Empty map with `channels` feature columns.
  static SparseFeatureMap empty(Index height, Index width, Index stride, Index channels) {
    return SparseFeatureMap(height, width, stride, {}, RowMatrixXf(0, channels));
  }

  Index height() const noexcept { return height_; }
  Index width() const noexcept { return width_; }
  Index stride() const noexcept { return stride_; }
  Index channels() const noexcept { return features_.cols(); }
  Index num_active() const noexcept { return static_cast<Index>(coords_.size()); }

  const std::vector<Coord>& coords() const noexcept { return coords_; }
  const RowMatrixXf& features() const noexcept { return features_; }
  RowMatrixXf& features() noexcept { return features_; }

  /// Row-major (height × width) table of site indices, -1 where inactive.
  std::vector<std::int32_t> index_grid() const;

  friend bool operator==(const SparseFeatureMap& a, const SparseFeatureMap& b) {
    return a.height_ == b.height_ && a.width_ == b.width_ && a.stride_ == b.stride_ &&
           a.coords_ == b.coords_ && a.features_.cols() == b.features_.cols() && a.features_ == b.features_;
  }

 private:
  Index height_ = 0;
  Index width_ = 0;
  Index stride_ = 1;
  std::vector<Coord> coords_;
  RowMatrixXf features_;
};

/// Fraction of elements whose magnitude is at most `threshold`.
double sparsity(const DenseTensor& t, double threshold = 0.0);

/// (C, height, width) tensor with zeros at inactive sites.
DenseTensor densify(const SparseFeatureMap& s);

/// Keeps every site where some channel exceeds `threshold` in magnitude.
SparseFeatureMap sparsify(const DenseTensor& t, double threshold = 0.0, Index stride = 1);

}  // namespace splite
