#pragma once

#include <Eigen/Core>

#include "splite/tensor.hpp"

namespace splite {

inline constexpr Index kNumKeypoints = 21;

/// Keypoint locations as (u, v) = (column, row), one row per keypoint.
struct Landmarks2D {
  RowMatrixXd uv;              // K × 2
  Eigen::VectorXd confidence;  // K, max softmax probability
};

/// Per keypoint: softmax over the H×W grid at `temperature`, then the
/// expected (column, row). Throws on non-finite logits or temperature <= 0.
Landmarks2D soft_argmax(const DenseTensor& heatmap_logits, double temperature = 1.0);

/// Bilinear samples of a C×H×W grid at each landmark; coordinates outside the
/// grid are clamped to the border. Returns K × C.
RowMatrixXf pose_pooling(const DenseTensor& feature_grid, const RowMatrixXd& uv);

/// M_lift · F_p.
template <typename Lift, typename Pooled>
RowMatrix<typename Pooled::Scalar> pose_to_vertex(const Eigen::MatrixBase<Pooled>& pooled,
                                                  const Eigen::MatrixBase<Lift>& lift) {
  SPLITE_CHECK(lift.cols() == pooled.rows(), "pose_to_vertex: lifting matrix has " + std::to_string(lift.cols()) +
                                                 " columns for " + std::to_string(pooled.rows()) + " keypoints");
  return lift.template cast<typename Pooled::Scalar>() * pooled;
}

struct CameraIntrinsics {
  double fx = 0, fy = 0, cx = 0, cy = 0;

  void validate() const { SPLITE_CHECK(fx > 0 && fy > 0, "focal lengths must be positive"); }
};

/// (x, y, z) = ((u - cx) d / fx, (v - cy) d / fy, d). Throws if any d <= 0.
RowMatrixXd backproject(const RowMatrixXd& uv, const Eigen::VectorXd& depth, const CameraIntrinsics& k);

/// Feature-grid coordinates to input pixels: stride * uv + offset.
inline RowMatrixXd grid_to_pixel(const RowMatrixXd& uv, double stride = 4.0, double offset = 1.5) {
  return (uv.array() * stride + offset).matrix();
}

}  // namespace splite
