#include "splite/losses.hpp"

#include <algorithm>

namespace splite {

RowMatrixXd project(const RowMatrixXd& points, const CameraIntrinsics& k) {
  k.validate();
  SPLITE_CHECK(points.cols() == 3, "project expects N×3 points");
  SPLITE_CHECK((points.col(2).array() > 0).all(), "project: z must be positive");
  RowMatrixXd uv(points.rows(), 2);
  uv.col(0) = (k.fx * points.col(0).array() / points.col(2).array() + k.cx).matrix();
  uv.col(1) = (k.fy * points.col(1).array() / points.col(2).array() + k.cy).matrix();
  return uv;
}

LossGrad reprojection_loss(const RowMatrixXd& pred3d, const RowMatrixXd& gt2d, const CameraIntrinsics& k) {
  SPLITE_CHECK(gt2d.cols() == 2 && gt2d.rows() == pred3d.rows(), "reprojection_loss: shape mismatch");
  const RowMatrixXd r = project(pred3d, k) - gt2d;
  LossGrad out{r.squaredNorm(), RowMatrixXd(pred3d.rows(), 3)};
  const auto x = pred3d.col(0).array(), y = pred3d.col(1).array(), z = pred3d.col(2).array();
  const auto ru = r.col(0).array(), rv = r.col(1).array();
  out.grad.col(0) = (2 * ru * k.fx / z).matrix();
  out.grad.col(1) = (2 * rv * k.fy / z).matrix();
  out.grad.col(2) = (-2 * (ru * k.fx * x + rv * k.fy * y) / z.square()).matrix();
  return out;
}

LossGrad pose3d_loss(const RowMatrixXd& pred3d, const RowMatrixXd& gt3d) {
  SPLITE_CHECK(pred3d.rows() == gt3d.rows() && pred3d.cols() == gt3d.cols(), "pose3d_loss: shape mismatch");
  const RowMatrixXd d = pred3d - gt3d;
  return {d.squaredNorm(), 2 * d};
}

LossGrad depth_loss(const Eigen::VectorXd& pred, const Eigen::VectorXd& gt) {
  SPLITE_CHECK(pred.size() == gt.size(), "depth_loss: length mismatch");
  const Eigen::VectorXd d = pred - gt;
  return {d.squaredNorm(), 2 * d};
}

LossGrad smoothness_loss(const RowMatrixXd& verts, const std::vector<Edge>& edges) {
  SPLITE_CHECK(verts.cols() == 3, "smoothness_loss expects V×3 vertices");
  LossGrad out{0, RowMatrixXd::Zero(verts.rows(), 3)};
  for (const auto& [i, j] : edges) {
    SPLITE_CHECK(i >= 0 && j >= 0 && i < verts.rows() && j < verts.rows(),
                 "smoothness_loss: edge (" + std::to_string(i) + ", " + std::to_string(j) + ") out of range");
    const Eigen::RowVector3d d = verts.row(i) - verts.row(j);
    out.value += d.squaredNorm();
    out.grad.row(i) += 2 * d;
    out.grad.row(j) -= 2 * d;
  }
  return out;
}

double aggregate_loss(const LossComponents& c, const LossWeights& w) {
  w.validate();
  return w.reproj * c.reproj + w.pose * c.pose + w.depth * c.depth + w.smooth * c.smooth;
}

Eigen::VectorXd pack_state(const LossInputs& in) {
  Eigen::VectorXd s(in.joints.size() + in.depth.size() + in.verts.size());
  s << in.joints.reshaped<Eigen::RowMajor>(), in.depth, in.verts.reshaped<Eigen::RowMajor>();
  return s;
}

void unpack_state(const Eigen::VectorXd& state, LossInputs& in) {
  const Index nj = in.joints.size(), nd = in.depth.size(), nv = in.verts.size();
  SPLITE_CHECK(state.size() == nj + nd + nv, "unpack_state: length mismatch");
  in.joints.reshaped<Eigen::RowMajor>() = state.head(nj);
  in.depth = state.segment(nj, nd);
  in.verts.reshaped<Eigen::RowMajor>() = state.tail(nv);
}

TotalLoss total_loss(const LossInputs& in, const LossWeights& w) {
  const LossGrad reproj = reprojection_loss(in.joints, in.gt2d, in.camera);
  const LossGrad pose = pose3d_loss(in.joints, in.gt3d);
  const LossGrad depth = depth_loss(in.depth, in.gt_depth);
  const LossGrad smooth = smoothness_loss(in.verts, in.edges);
  TotalLoss out;
  out.components = {reproj.value, pose.value, depth.value, smooth.value};
  out.value = aggregate_loss(out.components, w);
  const RowMatrixXd joint_grad = w.reproj * reproj.grad + w.pose * pose.grad;
  const RowMatrixXd vert_grad = w.smooth * smooth.grad;
  out.grad.resize(joint_grad.size() + depth.grad.size() + vert_grad.size());
  out.grad << joint_grad.reshaped<Eigen::RowMajor>(), w.depth * depth.grad, vert_grad.reshaped<Eigen::RowMajor>();
  return out;
}

double grad_check(const std::function<double(const Eigen::VectorXd&)>& f, const Eigen::VectorXd& x,
                  const Eigen::VectorXd& analytic, double h) {
  SPLITE_CHECK(analytic.size() == x.size(), "grad_check: gradient length mismatch");
  SPLITE_CHECK(h > 0, "grad_check: step must be positive");
  double worst = 0;
  Eigen::VectorXd probe = x;
  for (Index i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + h;
    const double up = f(probe);
    probe[i] = x[i] - h;
    const double down = f(probe);
    probe[i] = x[i];
    const double numeric = (up - down) / (2 * h);
    const double denom = std::max({1.0, std::abs(analytic[i]), std::abs(numeric)});
    worst = std::max(worst, std::abs(analytic[i] - numeric) / denom);
  }
  return worst;
}

}  // namespace splite
