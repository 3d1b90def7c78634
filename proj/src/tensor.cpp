#include "splite/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace splite {

std::string shape_string(const Shape& shape) {
  std::ostringstream out;
  out << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) out << (i ? ", " : "") << shape[i];
  out << ')';
  return out.str();
}

SparseFeatureMap::SparseFeatureMap(Index height, Index width, Index stride, std::vector<Coord> coords,
                                   RowMatrixXf features)
    : height_(height), width_(width), stride_(stride), coords_(std::move(coords)), features_(std::move(features)) {
  SPLITE_CHECK(height_ >= 0 && width_ >= 0, "negative sparse map extent");
  SPLITE_CHECK(stride_ >= 1, "sparse map stride must be positive");
  SPLITE_CHECK(features_.rows() == num_active(), "feature row count does not match active site count");
  for (std::size_t i = 0; i < coords_.size(); ++i) {
    const Coord& c = coords_[i];
    SPLITE_CHECK(c.row >= 0 && c.row < height_ && c.col >= 0 && c.col < width_, "active site out of bounds");
    if (i > 0) SPLITE_CHECK(coords_[i - 1] < c, "active sites must be sorted and unique");
  }
}

std::vector<std::int32_t> SparseFeatureMap::index_grid() const {
  std::vector<std::int32_t> grid(static_cast<std::size_t>(height_ * width_), -1);
  for (std::size_t i = 0; i < coords_.size(); ++i) {
    grid[static_cast<std::size_t>(coords_[i].row * width_ + coords_[i].col)] = static_cast<std::int32_t>(i);
  }
  return grid;
}

double sparsity(const DenseTensor& t, double threshold) {
  if (t.empty()) throw InvalidArgument("empty input");
  SPLITE_CHECK(threshold >= 0.0, "sparsity threshold must be nonnegative");
  const auto count = (t.values().array().abs().cast<double>() <= threshold).count();
  return static_cast<double>(count) / static_cast<double>(t.size());
}

DenseTensor densify(const SparseFeatureMap& s) {
  DenseTensor out({s.channels(), s.height(), s.width()});
  const auto& coords = s.coords();
  for (std::size_t i = 0; i < coords.size(); ++i) {
    for (Index c = 0; c < s.channels(); ++c) {
      out(c, coords[i].row, coords[i].col) = s.features()(static_cast<Index>(i), c);
    }
  }
  return out;
}

SparseFeatureMap sparsify(const DenseTensor& t, double threshold, Index stride) {
  SPLITE_CHECK(t.rank() == 3, "sparsify expects a rank-3 tensor, got shape " + shape_string(t.shape()));
  const Index channels = t.channels(), height = t.height(), width = t.width();
  std::vector<Coord> coords;
  for (Index y = 0; y < height; ++y) {
    for (Index x = 0; x < width; ++x) {
      for (Index c = 0; c < channels; ++c) {
        if (std::abs(static_cast<double>(t(c, y, x))) > threshold) {
          coords.push_back({static_cast<std::int32_t>(y), static_cast<std::int32_t>(x)});
          break;
        }
      }
    }
  }
  RowMatrixXf features(static_cast<Index>(coords.size()), channels);
  for (std::size_t i = 0; i < coords.size(); ++i) {
    for (Index c = 0; c < channels; ++c) features(static_cast<Index>(i), c) = t(c, coords[i].row, coords[i].col);
  }
  return SparseFeatureMap(height, width, stride, std::move(coords), std::move(features));
}

}  // namespace splite
