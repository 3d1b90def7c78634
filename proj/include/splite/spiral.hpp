#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <vector>

#include "splite/mesh.hpp"
#include "splite/parallel.hpp"

namespace splite {

using IndexMatrix = Eigen::Matrix<std::int32_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Per-vertex spiral sequences: row v lists `length` vertex indices starting
/// with v itself; exhausted spirals are padded with v.
struct SpiralIndexTable {
  IndexMatrix indices;

  Index num_vertices() const noexcept { return indices.rows(); }
  Index length() const noexcept { return indices.cols(); }

  void validate() const;
};

/// Vertex adjacency derived from a face list.
class MeshAdjacency {
 public:
  MeshAdjacency(Index num_vertices, const std::vector<Face>& faces);

  Index num_vertices() const noexcept { return static_cast<Index>(neighbors_.size()); }
  /// Neighbors in ascending index order.
  const std::vector<std::int32_t>& neighbors(std::int32_t v) const { return neighbors_[static_cast<std::size_t>(v)]; }
  /// True when the faces around v form one consistently wound fan (closed or open).
  bool manifold(std::int32_t v) const { return manifold_[static_cast<std::size_t>(v)]; }
  /// Neighbors counter-clockwise (from face winding) starting at the smallest
  /// index. Open fans are walked to their end and resume at the fan's other
  /// end. Ascending order for non-manifold vertices.
  const std::vector<std::int32_t>& one_ring(std::int32_t v) const { return rings_[static_cast<std::size_t>(v)]; }

 private:
  std::vector<std::vector<std::int32_t>> neighbors_;
  std::vector<std::vector<std::int32_t>> rings_;
  std::vector<bool> manifold_;
};

/// Spiral ordering: [v] + one ring (MeshAdjacency::one_ring) + successive rings,
/// where each ring appends, for every vertex of the previous ring in order, its
/// not yet visited neighbors in that vertex's own one-ring order. Rows of
/// non-manifold vertices use BFS order by (hop distance, vertex index).
SpiralIndexTable build_spiral_table(Index num_vertices, const std::vector<Face>& faces, Index length);
SpiralIndexTable build_spiral_table(const MeshTopology& topology, Index level, Index length);

/// Gathers the first `partial_channels` channels of every spiral member:
/// row v = concat_k features[table(v, k)][0 : partial_channels].
///
/// The table is consumed as one flat index vector, so each vertex chunk is a
/// single indexed row gather followed by a free reshape.
template <typename Derived>
RowMatrix<typename Derived::Scalar> parallel_gather(const Eigen::MatrixBase<Derived>& features,
                                                    const SpiralIndexTable& table, Index partial_channels,
                                                    const ExecContext& ctx = {}) {
  using Scalar = typename Derived::Scalar;
  const Index vertices = table.num_vertices(), length = table.length();
  SPLITE_CHECK(features.rows() == vertices, "parallel_gather: feature rows do not match the spiral table");
  SPLITE_CHECK(partial_channels >= 1 && partial_channels <= features.cols(),
               "parallel_gather: partial channel count out of range");
  SPLITE_CHECK(table.indices.size() == 0 ||
                   (table.indices.minCoeff() >= 0 && table.indices.maxCoeff() < vertices),
               "parallel_gather: spiral index out of range");
  RowMatrix<Scalar> out(vertices, partial_channels * length);
  const RowMatrix<Scalar> source = features.leftCols(partial_channels);
  parallel_chunks(vertices, kRowChunk, ctx.threads, [&](Index begin, Index end) {
    const Index rows = (end - begin) * length;
    Eigen::Map<const Eigen::Matrix<std::int32_t, Eigen::Dynamic, 1>> flat(table.indices.data() + begin * length, rows);
    Eigen::Map<RowMatrix<Scalar>> dest(out.data() + begin * partial_channels * length, rows, partial_channels);
    dest = source(flat, Eigen::all);
  });
  return out;
}

}  // namespace splite
