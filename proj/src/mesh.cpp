#include "splite/mesh.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <set>

#include "splite/random.hpp"

namespace splite {

const MeshLevel& MeshTopology::level(Index l) const {
  SPLITE_CHECK(l >= 0 && l < num_levels(), "mesh level " + std::to_string(l) + " out of range");
  return levels[static_cast<std::size_t>(l)];
}

void MeshTopology::validate() const {
  SPLITE_CHECK(!levels.empty(), "mesh topology has no levels");
  for (std::size_t l = 0; l < levels.size(); ++l) {
    const MeshLevel& lv = levels[l];
    const std::string where = "level " + std::to_string(l);
    SPLITE_CHECK(lv.num_vertices > 0, where + ": vertex count must be positive");
    for (std::size_t f = 0; f < lv.faces.size(); ++f) {
      const Face& face = lv.faces[f];
      for (auto v : face) {
        SPLITE_CHECK(v >= 0 && v < lv.num_vertices,
                     where + ": face " + std::to_string(f) + " references vertex " + std::to_string(v) + " out of range");
      }
      SPLITE_CHECK(face[0] != face[1] && face[1] != face[2] && face[0] != face[2],
                   where + ": face " + std::to_string(f) + " is degenerate");
    }
    if (lv.positions.size() != 0) {
      SPLITE_CHECK(lv.positions.rows() == lv.num_vertices && lv.positions.cols() == 3 && lv.positions.allFinite(),
                   where + ": positions must be finite V×3");
    }
    if (l + 1 == levels.size()) {
      SPLITE_CHECK(lv.upsample.nonZeros() == 0 && lv.upsample.rows() == 0, where + ": finest level has an upsample matrix");
      continue;
    }
    const Index next = levels[l + 1].num_vertices;
    SPLITE_CHECK(lv.upsample.rows() == next && lv.upsample.cols() == lv.num_vertices,
                 where + ": upsample matrix must be " + std::to_string(next) + "×" + std::to_string(lv.num_vertices));
    for (Index r = 0; r < lv.upsample.outerSize(); ++r) {
      double sum = 0.0;
      for (UpsampleMatrix::InnerIterator it(lv.upsample, r); it; ++it) {
        SPLITE_CHECK(it.value() >= 0.0 && std::isfinite(it.value()),
                     where + ": upsample row " + std::to_string(r) + " has a negative or non-finite entry");
        sum += it.value();
      }
      SPLITE_CHECK(std::abs(sum - 1.0) <= 1e-6,
                   where + ": upsample row " + std::to_string(r) + " sums to " + std::to_string(sum) + ", expected 1");
    }
  }
}

std::vector<Edge> face_edges(const std::vector<Face>& faces) {
  std::set<Edge> edges;
  for (const Face& f : faces) {
    for (int i = 0; i < 3; ++i) {
      const auto a = f[static_cast<std::size_t>(i)], b = f[static_cast<std::size_t>((i + 1) % 3)];
      edges.insert({std::min(a, b), std::max(a, b)});
    }
  }
  return {edges.begin(), edges.end()};
}

namespace {

using Points = std::vector<Eigen::Vector3d>;

Points sphere_points(Index n, Rng& rng) {
  const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
  Points pts(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) {
    const double z = 1.0 - (2.0 * static_cast<double>(i) + 1.0) / static_cast<double>(n);
    const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
    const double phi = golden * static_cast<double>(i);
    Eigen::Vector3d p(r * std::cos(phi), r * std::sin(phi), z);
    p += 1e-3 * Eigen::Vector3d(rng.normal(), rng.normal(), rng.normal());
    pts[static_cast<std::size_t>(i)] = p.normalized();
  }
  return pts;
}

// Incremental convex hull; faces wind counter-clockwise seen from outside.
std::vector<Face> convex_hull(const Points& pts) {
  const auto n = static_cast<std::int32_t>(pts.size());
  SPLITE_CHECK(n >= 4, "convex hull needs at least 4 points");
  auto plane_dist = [&](const Face& f, const Eigen::Vector3d& p) {
    const auto &a = pts[static_cast<std::size_t>(f[0])], &b = pts[static_cast<std::size_t>(f[1])],
               &c = pts[static_cast<std::size_t>(f[2])];
    return (b - a).cross(c - a).dot(p - a);
  };

  // Initial tetrahedron from the first points in general position.
  std::int32_t i0 = 0, i1 = 1, i2 = -1, i3 = -1;
  for (std::int32_t i = 2; i < n && i2 < 0; ++i) {
    if ((pts[static_cast<std::size_t>(i1)] - pts[0]).cross(pts[static_cast<std::size_t>(i)] - pts[0]).norm() > 1e-9) i2 = i;
  }
  SPLITE_CHECK(i2 >= 0, "degenerate point set");
  for (std::int32_t i = 2; i < n && i3 < 0; ++i) {
    if (i != i2 && std::abs(plane_dist({i0, i1, i2}, pts[static_cast<std::size_t>(i)])) > 1e-9) i3 = i;
  }
  SPLITE_CHECK(i3 >= 0, "degenerate point set");
  if (plane_dist({i0, i1, i2}, pts[static_cast<std::size_t>(i3)]) > 0) std::swap(i1, i2);

  std::vector<Face> faces{{i0, i1, i2}, {i0, i3, i1}, {i1, i3, i2}, {i2, i3, i0}};
  std::vector<bool> alive(4, true);
  std::map<std::pair<std::int32_t, std::int32_t>, std::size_t> owner;  // directed edge -> face
  auto add_face = [&](Face f) {
    faces.push_back(f);
    alive.push_back(true);
    for (int k = 0; k < 3; ++k) owner[{f[static_cast<std::size_t>(k)], f[static_cast<std::size_t>((k + 1) % 3)]}] = faces.size() - 1;
  };
  for (std::size_t f = 0; f < faces.size(); ++f)
    for (int k = 0; k < 3; ++k) owner[{faces[f][static_cast<std::size_t>(k)], faces[f][static_cast<std::size_t>((k + 1) % 3)]}] = f;

  for (std::int32_t p = 0; p < n; ++p) {
    if (p == i0 || p == i1 || p == i2 || p == i3) continue;
    const Eigen::Vector3d& pt = pts[static_cast<std::size_t>(p)];
    std::vector<bool> visible(faces.size(), false);
    bool any = false;
    for (std::size_t f = 0; f < faces.size(); ++f) {
      if (alive[f] && plane_dist(faces[f], pt) > 1e-12) visible[f] = any = true;
    }
    SPLITE_CHECK(any, "point lies inside the hull; points are not in convex position");
    std::vector<std::pair<std::int32_t, std::int32_t>> horizon;
    const std::size_t count = faces.size();
    for (std::size_t f = 0; f < count; ++f) {
      if (!visible[f]) continue;
      for (int k = 0; k < 3; ++k) {
        const auto u = faces[f][static_cast<std::size_t>(k)], v = faces[f][static_cast<std::size_t>((k + 1) % 3)];
        if (!visible[owner.at({v, u})]) horizon.emplace_back(u, v);
      }
    }
    for (std::size_t f = 0; f < count; ++f) {
      if (!visible[f]) continue;
      alive[f] = false;
      for (int k = 0; k < 3; ++k) owner.erase({faces[f][static_cast<std::size_t>(k)], faces[f][static_cast<std::size_t>((k + 1) % 3)]});
    }
    for (const auto& [u, v] : horizon) add_face({u, v, p});
  }
  std::vector<Face> out;
  for (std::size_t f = 0; f < faces.size(); ++f)
    if (alive[f]) out.push_back(faces[f]);
  SPLITE_CHECK(static_cast<std::int32_t>(out.size()) == 2 * n - 4, "hull is missing vertices");
  return out;
}

UpsampleMatrix radial_barycentric(const Points& fine, const Points& coarse, const std::vector<Face>& coarse_faces) {
  std::vector<Eigen::Triplet<double>> triplets;
  for (std::size_t r = 0; r < fine.size(); ++r) {
    const Eigen::Vector3d& d = fine[r];
    double best_min = -1e300;
    Eigen::Vector3d best_bary = Eigen::Vector3d::Zero();
    const Face* best_face = nullptr;
    for (const Face& f : coarse_faces) {
      const auto &a = coarse[static_cast<std::size_t>(f[0])], &b = coarse[static_cast<std::size_t>(f[1])],
                 &c = coarse[static_cast<std::size_t>(f[2])];
      const Eigen::Vector3d normal = (b - a).cross(c - a);
      const double denom = normal.dot(d);
      if (denom <= 0) continue;
      const Eigen::Vector3d q = d * (normal.dot(a) / denom);
      const double area = normal.squaredNorm();
      const Eigen::Vector3d bary((b - q).cross(c - q).dot(normal) / area, (c - q).cross(a - q).dot(normal) / area,
                                 (a - q).cross(b - q).dot(normal) / area);
      if (bary.minCoeff() > best_min) {
        best_min = bary.minCoeff();
        best_bary = bary;
        best_face = &f;
      }
    }
    SPLITE_CHECK(best_face != nullptr, "no coarse face for fine vertex");
    Eigen::Vector3d w = best_bary.cwiseMax(0.0);
    w /= w.sum();
    for (int k = 0; k < 3; ++k) {
      if (w[k] > 0) triplets.emplace_back(static_cast<int>(r), (*best_face)[static_cast<std::size_t>(k)], w[k]);
    }
  }
  UpsampleMatrix m(static_cast<Index>(fine.size()), static_cast<Index>(coarse.size()));
  m.setFromTriplets(triplets.begin(), triplets.end());
  return m;
}

}  // namespace

MeshTopology make_ellipsoid_topology(const std::vector<Index>& vertex_counts, const Eigen::Vector3d& radii,
                                     std::uint64_t seed) {
  SPLITE_CHECK(!vertex_counts.empty(), "need at least one level");
  Rng rng(seed);
  std::vector<Points> points;
  MeshTopology topo;
  for (Index n : vertex_counts) {
    SPLITE_CHECK(n >= 4, "each level needs at least 4 vertices");
    points.push_back(sphere_points(n, rng));
    MeshLevel level;
    level.num_vertices = n;
    level.faces = convex_hull(points.back());
    level.positions.resize(n, 3);
    for (Index i = 0; i < n; ++i) level.positions.row(i) = points.back()[static_cast<std::size_t>(i)].cwiseProduct(radii).transpose();
    topo.levels.push_back(std::move(level));
  }
  for (std::size_t l = 0; l + 1 < topo.levels.size(); ++l) {
    topo.levels[l].upsample = radial_barycentric(points[l + 1], points[l], topo.levels[l].faces);
  }
  topo.validate();
  return topo;
}

MeshTopology make_hand_template_topology(std::uint64_t seed) {
  return make_ellipsoid_topology(hand_level_sizes(), Eigen::Vector3d(0.045, 0.09, 0.025), seed);
}

}  // namespace splite
