// Independent reference implementations shared by the unit and acceptance
// tests. Everything here is written as plain loops in double precision and
// avoids the library's kernels.
#pragma once

#include <Eigen/Eigenvalues>
#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <set>
#include <string>
#include <vector>

#include "splite/decoder.hpp"
#include "splite/mesh.hpp"
#include "splite/model_io.hpp"
#include "splite/random.hpp"
#include "splite/sparse_conv.hpp"
#include "splite/spiral.hpp"
#include "splite/tensor.hpp"

namespace oracle {

using namespace splite;

inline DenseTensor random_tensor(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
  DenseTensor t(std::move(shape));
  for (Index i = 0; i < t.size(); ++i) t.values()[i] = static_cast<float>(rng.uniform(lo, hi));
  return t;
}

inline RowMatrixXd random_matrix(Rng& rng, Index rows, Index cols, double lo = -1.0, double hi = 1.0) {
  RowMatrixXd m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(lo, hi);
  return m;
}

/// C×H×W tensor with exactly round((1 - sparsity)·H·W) active sites whose
/// features are nonzero in every channel.
inline DenseTensor random_sparse_tensor(Rng& rng, Index channels, Index h, Index w, double sparsity) {
  DenseTensor t({channels, h, w});
  std::vector<Index> sites(static_cast<std::size_t>(h * w));
  for (Index i = 0; i < h * w; ++i) sites[static_cast<std::size_t>(i)] = i;
  const auto active = static_cast<std::size_t>(std::llround((1.0 - sparsity) * static_cast<double>(h * w)));
  for (std::size_t i = 0; i < active; ++i) {
    std::swap(sites[i], sites[i + rng.below(sites.size() - i)]);
    for (Index c = 0; c < channels; ++c) {
      const double mag = rng.uniform(0.1, 1.0);
      t.values()[c * h * w + sites[i]] = static_cast<float>(rng.uniform() < 0.5 ? -mag : mag);
    }
  }
  return t;
}

inline ConvSpec random_conv(Rng& rng, Index in, Index out, Index kernel, Index stride, ConvMode mode) {
  ConvSpec spec = ConvSpec::zeros(in, out, kernel, stride, mode);
  const double bound = 1.0 / std::sqrt(static_cast<double>(in * kernel * kernel));
  spec.weights = random_tensor(rng, {out, in, kernel, kernel}, -bound, bound);
  for (Index o = 0; o < out; ++o) spec.bias[o] = static_cast<float>(rng.uniform(-0.1, 0.1));
  return spec;
}

/// Zero-padded cross-correlation, direct summation in double.
inline Tensor<double> conv_reference(const DenseTensor& in, const ConvSpec& spec) {
  const Index h = in.height(), w = in.width(), kh = spec.kernel_h, kw = spec.kernel_w, s = spec.stride;
  const Index oh = (h + 2 * (kh / 2) - kh) / s + 1, ow = (w + 2 * (kw / 2) - kw) / s + 1;
  Tensor<double> out({spec.out_channels, oh, ow});
  for (Index o = 0; o < spec.out_channels; ++o)
    for (Index y = 0; y < oh; ++y)
      for (Index x = 0; x < ow; ++x) {
        double acc = spec.bias[o];
        for (Index c = 0; c < spec.in_channels; ++c)
          for (Index ky = 0; ky < kh; ++ky)
            for (Index kx = 0; kx < kw; ++kx) {
              const Index iy = y * s - kh / 2 + ky, ix = x * s - kw / 2 + kx;
              if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
              acc += static_cast<double>(spec.weights.values()[((o * spec.in_channels + c) * kh + ky) * kw + kx]) *
                     in(c, iy, ix);
            }
        out(o, y, x) = acc;
      }
  return out;
}

/// Output active sites of a convolution over the active sites of `in`:
/// submanifold keeps them, generalized takes every site whose window touches one.
inline std::vector<std::pair<Index, Index>> reference_active_sites(const DenseTensor& in, const ConvSpec& spec) {
  const Index h = in.height(), w = in.width(), kh = spec.kernel_h, kw = spec.kernel_w, s = spec.stride;
  auto active = [&](Index y, Index x) {
    for (Index c = 0; c < in.channels(); ++c)
      if (in(c, y, x) != 0.0f) return true;
    return false;
  };
  std::vector<std::pair<Index, Index>> out;
  if (spec.mode == ConvMode::Submanifold) {
    for (Index y = 0; y < h; ++y)
      for (Index x = 0; x < w; ++x)
        if (active(y, x)) out.emplace_back(y, x);
    return out;
  }
  const Index oh = (h + 2 * (kh / 2) - kh) / s + 1, ow = (w + 2 * (kw / 2) - kw) / s + 1;
  for (Index y = 0; y < oh; ++y)
    for (Index x = 0; x < ow; ++x) {
      bool hit = false;
      for (Index ky = 0; ky < kh && !hit; ++ky)
        for (Index kx = 0; kx < kw && !hit; ++kx) {
          const Index iy = y * s - kh / 2 + ky, ix = x * s - kw / 2 + kx;
          hit = iy >= 0 && iy < h && ix >= 0 && ix < w && active(iy, ix);
        }
      if (hit) out.emplace_back(y, x);
    }
  return out;
}

/// Bilinear sample with border clamping, written as an explicit 4-tap sum.
inline std::vector<double> bilinear_reference(const DenseTensor& grid, double u, double v) {
  const Index h = grid.height(), w = grid.width();
  u = std::min(std::max(u, 0.0), static_cast<double>(w - 1));
  v = std::min(std::max(v, 0.0), static_cast<double>(h - 1));
  const auto x0 = static_cast<Index>(u), y0 = static_cast<Index>(v);
  const Index x1 = std::min(x0 + 1, w - 1), y1 = std::min(y0 + 1, h - 1);
  const double fx = u - x0, fy = v - y0;
  std::vector<double> out(static_cast<std::size_t>(grid.channels()));
  for (Index c = 0; c < grid.channels(); ++c) {
    out[static_cast<std::size_t>(c)] = grid(c, y0, x0) * (1 - fx) * (1 - fy) + grid(c, y0, x1) * fx * (1 - fy) +
                                       grid(c, y1, x0) * (1 - fx) * fy + grid(c, y1, x1) * fx * fy;
  }
  return out;
}

/// Triple-loop matrix product.
template <typename A, typename B>
RowMatrixXd matmul_reference(const A& a, const B& b) {
  RowMatrixXd out = RowMatrixXd::Zero(a.rows(), b.cols());
  for (Index i = 0; i < a.rows(); ++i)
    for (Index j = 0; j < b.cols(); ++j)
      for (Index k = 0; k < a.cols(); ++k) out(i, j) += static_cast<double>(a(i, k)) * static_cast<double>(b(k, j));
  return out;
}

/// Sequential spiral gather.
template <typename Scalar>
RowMatrix<Scalar> gather_reference(const RowMatrix<Scalar>& features, const SpiralIndexTable& table, Index cp) {
  RowMatrix<Scalar> out(table.num_vertices(), cp * table.length());
  for (Index v = 0; v < table.num_vertices(); ++v)
    for (Index k = 0; k < table.length(); ++k)
      for (Index c = 0; c < cp; ++c) out(v, k * cp + c) = features(table.indices(v, k), c);
  return out;
}

/// Partial-channel layer computed as a full-channel layer whose weights are
/// zero outside the first `cp` channels of each spiral member.
inline RowMatrixXd splite_layer_reference(const RowMatrixXd& x, const SpiralLayer<double>& layer,
                                          const SpiralIndexTable& table) {
  const Index c = layer.channels, cp = layer.partial_channels, len = layer.length;
  RowMatrixXd full = RowMatrixXd::Zero(c, c * len);
  for (Index o = 0; o < c; ++o)
    for (Index k = 0; k < len; ++k)
      for (Index i = 0; i < cp; ++i) full(o, k * c + i) = layer.weights(o, k * cp + i);
  RowMatrixXd out(x.rows(), c);
  for (Index v = 0; v < x.rows(); ++v)
    for (Index o = 0; o < c; ++o) {
      double acc = layer.bias[o] + x(v, o);
      for (Index k = 0; k < len; ++k)
        for (Index i = 0; i < c; ++i) acc += full(o, k * c + i) * x(table.indices(v, k), i);
      out(v, o) = std::max(acc, 0.0);
    }
  return out;
}

/// Neighbor order around `v` by angle about `normal`, counter-clockwise,
/// rotated to start at the smallest index.
inline std::vector<std::int32_t> angular_ring(const RowMatrixXd& pos, std::int32_t v,
                                              const std::set<std::int32_t>& neighbors, const Eigen::Vector3d& normal) {
  const Eigen::Vector3d p = pos.row(v).transpose();
  const Eigen::Vector3d n = normal.normalized();
  Eigen::Vector3d e1 = (pos.row(*neighbors.begin()).transpose() - p);
  e1 = (e1 - e1.dot(n) * n).normalized();
  const Eigen::Vector3d e2 = n.cross(e1);
  std::vector<std::pair<double, std::int32_t>> by_angle;
  for (auto u : neighbors) {
    const Eigen::Vector3d d = pos.row(u).transpose() - p;
    double a = std::atan2(d.dot(e2), d.dot(e1));
    if (a < 0) a += 2 * std::numbers::pi;
    by_angle.emplace_back(a, u);
  }
  std::sort(by_angle.begin(), by_angle.end());
  std::vector<std::int32_t> out;
  for (const auto& [a, u] : by_angle) out.push_back(u);
  return out;  // the smallest index has angle 0, so it comes first
}

/// Spiral rows from geometric neighbor orders: ring by ring, each ring
/// appending the unvisited neighbors of the previous ring's vertices in their
/// angular order.
inline IndexMatrix spiral_reference(const RowMatrixXd& pos, const std::vector<Face>& faces, Index length,
                                    const std::vector<Eigen::Vector3d>& normals) {
  const Index nv = pos.rows();
  std::vector<std::set<std::int32_t>> nb(static_cast<std::size_t>(nv));
  for (const Face& f : faces)
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b)
        if (a != b) nb[static_cast<std::size_t>(f[a])].insert(f[b]);
  std::vector<std::vector<std::int32_t>> rings(static_cast<std::size_t>(nv));
  for (Index v = 0; v < nv; ++v) {
    rings[static_cast<std::size_t>(v)] =
        angular_ring(pos, static_cast<std::int32_t>(v), nb[static_cast<std::size_t>(v)], normals[static_cast<std::size_t>(v)]);
  }
  IndexMatrix out(nv, length);
  for (Index v = 0; v < nv; ++v) {
    std::vector<std::int32_t> order{static_cast<std::int32_t>(v)};
    std::set<std::int32_t> seen{static_cast<std::int32_t>(v)};
    std::vector<std::int32_t> frontier{static_cast<std::int32_t>(v)};
    while (!frontier.empty() && static_cast<Index>(order.size()) < length) {
      std::vector<std::int32_t> next;
      for (auto u : frontier)
        for (auto n : rings[static_cast<std::size_t>(u)])
          if (seen.insert(n).second) next.push_back(n);
      order.insert(order.end(), next.begin(), next.end());
      frontier = next;
    }
    for (Index k = 0; k < length; ++k) out(v, k) = k < static_cast<Index>(order.size()) ? order[static_cast<std::size_t>(k)] : static_cast<std::int32_t>(v);
  }
  return out;
}

/// n×n vertex grid in the z = 0 plane, two CCW triangles per cell.
inline void grid_mesh(int n, RowMatrixXd& pos, std::vector<Face>& faces) {
  pos.resize(n * n, 3);
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) pos.row(y * n + x) << x, y, 0.0;
  faces.clear();
  for (int y = 0; y + 1 < n; ++y)
    for (int x = 0; x + 1 < n; ++x) {
      const int a = y * n + x, b = a + 1, c = a + n, d = c + 1;
      faces.push_back({a, b, d});
      faces.push_back({a, d, c});
    }
}

/// Regular tetrahedron with outward CCW faces.
inline void tetrahedron(RowMatrixXd& pos, std::vector<Face>& faces) {
  pos.resize(4, 3);
  pos << 1, 1, 1, 1, -1, -1, -1, 1, -1, -1, -1, 1;
  faces = {{0, 1, 2}, {0, 3, 1}, {0, 2, 3}, {1, 3, 2}};
}

/// Optimal rotation aligning centered `x` onto centered `y` by Horn's unit
/// quaternion method (largest eigenvector of the 4×4 profile matrix).
inline Eigen::Matrix3d horn_rotation(const RowMatrixXd& x, const RowMatrixXd& y) {
  const Eigen::Matrix3d s = x.transpose() * y;
  Eigen::Matrix4d n;
  n << s(0, 0) + s(1, 1) + s(2, 2), s(1, 2) - s(2, 1), s(2, 0) - s(0, 2), s(0, 1) - s(1, 0),
      s(1, 2) - s(2, 1), s(0, 0) - s(1, 1) - s(2, 2), s(0, 1) + s(1, 0), s(2, 0) + s(0, 2),
      s(2, 0) - s(0, 2), s(0, 1) + s(1, 0), -s(0, 0) + s(1, 1) - s(2, 2), s(1, 2) + s(2, 1),
      s(0, 1) - s(1, 0), s(2, 0) + s(0, 2), s(1, 2) + s(2, 1), -s(0, 0) - s(1, 1) + s(2, 2);
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix4d> eig(n);
  const Eigen::Vector4d q = eig.eigenvectors().col(3);
  return Eigen::Quaterniond(q[0], q[1], q[2], q[3]).normalized().toRotationMatrix();
}

/// Similarity-aligned mean joint error (mm) using Horn's rotation and the
/// closed-form scale sum(y · R x) / sum(|x|²).
inline double pa_mpjpe_reference(const RowMatrixXd& pred, const RowMatrixXd& gt) {
  const Eigen::RowVector3d mp = pred.colwise().mean(), mg = gt.colwise().mean();
  const RowMatrixXd x = pred.rowwise() - mp, y = gt.rowwise() - mg;
  const Eigen::Matrix3d r = horn_rotation(x, y);
  const RowMatrixXd rx = x * r.transpose();
  const double scale = (rx.array() * y.array()).sum() / x.squaredNorm();
  double total = 0;
  for (Index i = 0; i < pred.rows(); ++i) total += (scale * rx.row(i) + mg - gt.row(i)).norm();
  return 1000.0 * total / static_cast<double>(pred.rows());
}

/// Random proper rotation from a normalized Gaussian quaternion.
inline Eigen::Matrix3d random_rotation(Rng& rng) {
  return Eigen::Quaterniond(rng.normal(), rng.normal(), rng.normal(), rng.normal()).normalized().toRotationMatrix();
}

/// Store with a random mix of f32, i8 (both granularities) and i32 entries,
/// including signed zeros, denormals and extreme magnitudes.
inline WeightStore random_store(Rng& rng) {
  WeightStore store;
  const int entries = static_cast<int>(rng.below(8));
  for (int e = 0; e < entries; ++e) {
    Shape shape;
    const int rank = static_cast<int>(rng.below(5));
    for (int d = 0; d < rank; ++d) shape.push_back(static_cast<Index>(rng.below(5)) + (d == 0 ? 1 : 0));
    const std::string name = "m" + std::to_string(rng.below(4)) + ".layer" + std::to_string(e) + ".w";
    switch (rng.below(3)) {
      case 0: {
        DenseTensor t(shape);
        for (Index i = 0; i < t.size(); ++i) {
          const auto pick = rng.below(10);
          t.values()[i] = pick == 0   ? -0.0f
                          : pick == 1 ? std::numeric_limits<float>::denorm_min()
                          : pick == 2 ? std::numeric_limits<float>::max()
                                      : static_cast<float>(rng.normal() * 10.0);
        }
        store.set(name, t);
        break;
      }
      case 1: {
        QuantizedTensor q;
        q.shape = shape.empty() ? Shape{1} : shape;
        q.data.resize(static_cast<std::size_t>(shape_volume(q.shape)));
        for (auto& v : q.data) v = static_cast<std::int8_t>(static_cast<int>(rng.below(256)) - 128);
        q.granularity = rng.below(2) == 0 ? Granularity::PerTensor : Granularity::PerChannel;
        const std::size_t scales = q.granularity == Granularity::PerTensor ? 1 : static_cast<std::size_t>(q.shape[0]);
        for (std::size_t i = 0; i < scales; ++i) q.scale.push_back(static_cast<float>(rng.uniform(1e-6, 2.0)));
        q.zero_point = static_cast<std::int32_t>(rng.below(256)) - 128;
        store.set(name, q);
        break;
      }
      default: {
        IntTensor t{shape, std::vector<std::int32_t>(static_cast<std::size_t>(shape_volume(shape)))};
        for (auto& v : t.data) v = static_cast<std::int32_t>(rng.next());
        store.set(name, t);
      }
    }
  }
  return store;
}

}  // namespace oracle
