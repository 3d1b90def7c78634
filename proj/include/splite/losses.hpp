#pragma once

#include <Eigen/Core>
#include <Eigen/LU>
#include <Eigen/SVD>

#include <cmath>
#include <functional>
#include <vector>

#include "splite/lifting.hpp"
#include "splite/mesh.hpp"

namespace splite {

/// A scalar loss and its gradient with respect to the prediction argument.
struct LossGrad {
  double value = 0;
  RowMatrixXd grad;
};

/// Pinhole projection of N×3 points to N×2 pixels. Throws if any z <= 0.
RowMatrixXd project(const RowMatrixXd& points, const CameraIntrinsics& k);

/// Σ ‖project(pred_i) − gt_i‖², gradient with respect to pred (N×3).
LossGrad reprojection_loss(const RowMatrixXd& pred3d, const RowMatrixXd& gt2d, const CameraIntrinsics& k);

/// Σ ‖pred_i − gt_i‖², gradient with respect to pred.
LossGrad pose3d_loss(const RowMatrixXd& pred3d, const RowMatrixXd& gt3d);

/// Σ (d_i − gt_i)², gradient with respect to d (N×1).
LossGrad depth_loss(const Eigen::VectorXd& pred, const Eigen::VectorXd& gt);

/// Σ over undirected edges of ‖V_i − V_j‖², gradient with respect to V.
LossGrad smoothness_loss(const RowMatrixXd& verts, const std::vector<Edge>& edges);

struct LossWeights {
  double reproj = 1, pose = 1, depth = 1, smooth = 1;

  void validate() const {
    SPLITE_CHECK(reproj >= 0 && pose >= 0 && depth >= 0 && smooth >= 0, "loss weights must be nonnegative");
  }
};

struct LossComponents {
  double reproj = 0, pose = 0, depth = 0, smooth = 0;
};

double aggregate_loss(const LossComponents& c, const LossWeights& w);

/// Everything the weighted objective depends on. The prediction state is
/// (joints, depth, verts); the rest is fixed.
struct LossInputs {
  RowMatrixXd joints;     // N×3 predicted
  Eigen::VectorXd depth;  // N predicted
  RowMatrixXd verts;      // V×3 predicted
  RowMatrixXd gt2d, gt3d;
  Eigen::VectorXd gt_depth;
  std::vector<Edge> edges;
  CameraIntrinsics camera;
};

/// Weighted objective with its gradient over the flattened prediction state
/// [joints (row-major), depth, verts (row-major)].
struct TotalLoss {
  LossComponents components;
  double value = 0;
  Eigen::VectorXd grad;
};

TotalLoss total_loss(const LossInputs& in, const LossWeights& w);

/// Flattened prediction state of `in`, and its inverse.
Eigen::VectorXd pack_state(const LossInputs& in);
void unpack_state(const Eigen::VectorXd& state, LossInputs& in);

/// Max relative difference between `analytic` and central differences of `f`
/// at `x`; the denominator is max(1, |analytic|, |numeric|).
double grad_check(const std::function<double(const Eigen::VectorXd&)>& f, const Eigen::VectorXd& x,
                  const Eigen::VectorXd& analytic, double h = 1e-5);

/// Similarity transform (scale, rotation with det +1, translation) that best
/// maps `pred` onto `gt` in the least-squares sense; returns the aligned pred.
/// Coincident pred points keep scale 1.
template <typename Scalar>
RowMatrix<Scalar> procrustes_align(const RowMatrix<Scalar>& pred, const RowMatrix<Scalar>& gt) {
  using Mat3 = Eigen::Matrix<Scalar, 3, 3>;
  SPLITE_CHECK(pred.cols() == 3 && gt.cols() == 3 && pred.rows() == gt.rows() && pred.rows() > 0,
               "procrustes: need two N×3 point sets of equal size");
  SPLITE_CHECK(pred.allFinite() && gt.allFinite(), "procrustes: non-finite points");
  const auto n = static_cast<Scalar>(pred.rows());
  const Eigen::Matrix<Scalar, 1, 3> mu_p = pred.colwise().mean(), mu_g = gt.colwise().mean();
  const RowMatrix<Scalar> x = pred.rowwise() - mu_p;
  const RowMatrix<Scalar> y = gt.rowwise() - mu_g;
  const Scalar var_p = x.squaredNorm() / n;
  if (var_p == Scalar(0)) return (x.rowwise() + mu_g).eval();
  const Mat3 cov = (y.transpose() * x) / n;
  Eigen::JacobiSVD<Mat3> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 s = Mat3::Identity();
  if (svd.matrixU().determinant() * svd.matrixV().determinant() < 0) s(2, 2) = -1;
  const Mat3 r = svd.matrixU() * s * svd.matrixV().transpose();
  const Scalar scale = (svd.singularValues().asDiagonal() * s).trace() / var_p;
  return ((scale * x * r.transpose()).rowwise() + mu_g).eval();
}

/// Mean per-point distance after similarity alignment, in millimeters for
/// inputs in meters.
template <typename Scalar>
Scalar pa_mpjpe(const RowMatrix<Scalar>& pred, const RowMatrix<Scalar>& gt) {
  const RowMatrix<Scalar> aligned = procrustes_align(pred, gt);
  return Scalar(1000) * (aligned - gt).rowwise().norm().mean();
}

/// The same metric over mesh vertices.
template <typename Scalar>
Scalar pa_mpvpe(const RowMatrix<Scalar>& pred_verts, const RowMatrix<Scalar>& gt_verts) {
  return pa_mpjpe(pred_verts, gt_verts);
}

}  // namespace splite
