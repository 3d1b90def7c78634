#pragma once

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "splite/tensor.hpp"

namespace splite {

using Face = std::array<std::int32_t, 3>;
using Edge = std::pair<std::int32_t, std::int32_t>;
using UpsampleMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

/// One resolution of the template mesh. `upsample` maps this level's vertex
/// features to the next (finer) level: (V_next × V) with nonnegative rows
/// summing to 1. It is empty on the finest level.
struct MeshLevel {
  Index num_vertices = 0;
  std::vector<Face> faces;
  UpsampleMatrix upsample;
  /// Optional template positions (V × 3, meters); may be empty.
  RowMatrixXd positions;
};

/// Coarse-to-fine template mesh hierarchy.
struct MeshTopology {
  std::vector<MeshLevel> levels;

  Index num_levels() const noexcept { return static_cast<Index>(levels.size()); }
  const MeshLevel& level(Index l) const;

  /// Throws InvalidArgument naming the level (and row) of the first violation.
  void validate() const;
};

/// Undirected edges of a face list, each once with first < second, sorted.
std::vector<Edge> face_edges(const std::vector<Face>& faces);

/// Closed genus-0 template hierarchy: level l is the convex hull of
/// `vertex_counts[l]` well-spread points on an ellipsoid with the given radii.
/// Upsampling rows are barycentric coordinates of each fine vertex in the
/// coarse face hit by its radial ray. Faces wind counter-clockwise seen from outside.
MeshTopology make_ellipsoid_topology(const std::vector<Index>& vertex_counts, const Eigen::Vector3d& radii,
                                     std::uint64_t seed = 0);

/// The five-level 49 → 98 → 195 → 389 → 778 hierarchy used by the decoder.
MeshTopology make_hand_template_topology(std::uint64_t seed = 0);

inline const std::vector<Index>& hand_level_sizes() {
  static const std::vector<Index> sizes{49, 98, 195, 389, 778};
  return sizes;
}

}  // namespace splite
