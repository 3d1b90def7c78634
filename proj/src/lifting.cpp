#include "splite/lifting.hpp"

#include <algorithm>
#include <cmath>

namespace splite {

Landmarks2D soft_argmax(const DenseTensor& heatmap_logits, double temperature) {
  SPLITE_CHECK(heatmap_logits.rank() == 3, "soft_argmax expects K×H×W logits");
  SPLITE_CHECK(temperature > 0 && std::isfinite(temperature), "soft_argmax temperature must be positive");
  SPLITE_CHECK(heatmap_logits.all_finite(), "soft_argmax: non-finite heatmap logits");
  const Index k = heatmap_logits.channels(), h = heatmap_logits.height(), w = heatmap_logits.width();
  SPLITE_CHECK(h > 0 && w > 0, "soft_argmax: empty grid");
  Landmarks2D out{RowMatrixXd(k, 2), Eigen::VectorXd(k)};
  for (Index j = 0; j < k; ++j) {
    const Eigen::MatrixXd logits = heatmap_logits.plane(j).cast<double>() / temperature;
    const Eigen::MatrixXd p = (logits.array() - logits.maxCoeff()).exp().matrix();
    const double total = p.sum();
    const Eigen::VectorXd row_mass = p.rowwise().sum();
    const Eigen::RowVectorXd col_mass = p.colwise().sum();
    out.uv(j, 0) = col_mass.dot(Eigen::RowVectorXd::LinSpaced(w, 0, static_cast<double>(w - 1))) / total;
    out.uv(j, 1) = row_mass.dot(Eigen::VectorXd::LinSpaced(h, 0, static_cast<double>(h - 1))) / total;
    out.confidence[j] = p.maxCoeff() / total;
  }
  return out;
}

RowMatrixXf pose_pooling(const DenseTensor& feature_grid, const RowMatrixXd& uv) {
  SPLITE_CHECK(feature_grid.rank() == 3, "pose_pooling expects a C×H×W grid");
  SPLITE_CHECK(uv.cols() == 2, "pose_pooling expects K×2 landmarks");
  const Index c = feature_grid.channels(), h = feature_grid.height(), w = feature_grid.width();
  SPLITE_CHECK(h > 0 && w > 0, "pose_pooling: empty grid");
  // Channels-last copy so each tap is one contiguous row.
  const RowMatrixXf sites = feature_grid.matrix().transpose();
  RowMatrixXf out(uv.rows(), c);
  for (Index j = 0; j < uv.rows(); ++j) {
    const double u = std::isfinite(uv(j, 0)) ? std::clamp(uv(j, 0), 0.0, static_cast<double>(w - 1)) : 0.0;
    const double v = std::isfinite(uv(j, 1)) ? std::clamp(uv(j, 1), 0.0, static_cast<double>(h - 1)) : 0.0;
    const Index x0 = static_cast<Index>(std::floor(u)), y0 = static_cast<Index>(std::floor(v));
    const Index x1 = std::min(x0 + 1, w - 1), y1 = std::min(y0 + 1, h - 1);
    const double ax = u - static_cast<double>(x0), ay = v - static_cast<double>(y0);
    out.row(j) = ((1 - ax) * (1 - ay) * sites.row(y0 * w + x0).cast<double>() +
                  ax * (1 - ay) * sites.row(y0 * w + x1).cast<double>() +
                  (1 - ax) * ay * sites.row(y1 * w + x0).cast<double>() +
                  ax * ay * sites.row(y1 * w + x1).cast<double>())
                     .cast<float>();
  }
  return out;
}

RowMatrixXd backproject(const RowMatrixXd& uv, const Eigen::VectorXd& depth, const CameraIntrinsics& k) {
  k.validate();
  SPLITE_CHECK(uv.cols() == 2 && uv.rows() == depth.size(), "backproject: need K×2 pixels and K depths");
  SPLITE_CHECK((depth.array() > 0).all(), "backproject: depth must be positive");
  RowMatrixXd out(uv.rows(), 3);
  out.col(0) = ((uv.col(0).array() - k.cx) * depth.array() / k.fx).matrix();
  out.col(1) = ((uv.col(1).array() - k.cy) * depth.array() / k.fy).matrix();
  out.col(2) = depth;
  return out;
}

}  // namespace splite
