#include "splite/spiral.hpp"

#include <algorithm>
#include <deque>
#include <map>
#include <set>

namespace splite {

void SpiralIndexTable::validate() const {
  const Index v = num_vertices();
  SPLITE_CHECK(length() >= 1 || v == 0, "spiral length must be positive");
  for (Index r = 0; r < v; ++r) {
    SPLITE_CHECK(indices(r, 0) == r, "spiral row " + std::to_string(r) + " does not start at its own vertex");
    for (Index k = 0; k < length(); ++k) {
      SPLITE_CHECK(indices(r, k) >= 0 && indices(r, k) < v,
                   "spiral row " + std::to_string(r) + " has an index out of range");
    }
  }
}

MeshAdjacency::MeshAdjacency(Index num_vertices, const std::vector<Face>& faces)
    : neighbors_(static_cast<std::size_t>(num_vertices)),
      rings_(static_cast<std::size_t>(num_vertices)),
      manifold_(static_cast<std::size_t>(num_vertices), true) {
  // succ[v][a] = b for every face (v, a, b) after rotating v to the front.
  std::vector<std::multimap<std::int32_t, std::int32_t>> succ(static_cast<std::size_t>(num_vertices));
  for (const Face& f : faces) {
    for (int k = 0; k < 3; ++k) {
      const auto v = f[static_cast<std::size_t>(k)];
      SPLITE_CHECK(v >= 0 && v < num_vertices, "face references a vertex out of range");
      succ[static_cast<std::size_t>(v)].emplace(f[static_cast<std::size_t>((k + 1) % 3)], f[static_cast<std::size_t>((k + 2) % 3)]);
    }
  }
  for (Index vi = 0; vi < num_vertices; ++vi) {
    const auto v = static_cast<std::size_t>(vi);
    std::set<std::int32_t> nb;
    std::map<std::int32_t, int> in_degree, out_degree;
    for (const auto& [a, b] : succ[v]) {
      nb.insert(a);
      nb.insert(b);
      ++out_degree[a];
      ++in_degree[b];
    }
    neighbors_[v].assign(nb.begin(), nb.end());
    if (nb.empty()) continue;

    bool ok = true;
    std::int32_t fan_start = -1;
    int starts = 0;
    for (auto n : nb) {
      if (out_degree[n] > 1 || in_degree[n] > 1) ok = false;
      if (in_degree[n] == 0) {
        ++starts;
        fan_start = n;
      }
    }
    ok = ok && starts <= 1;
    std::vector<std::int32_t> ring;
    if (ok) {
      std::map<std::int32_t, std::int32_t> next;
      for (const auto& [a, b] : succ[v]) next[a] = b;
      const std::int32_t first = *nb.begin();
      std::int32_t cur = first;
      std::set<std::int32_t> seen;
      while (ring.size() < nb.size()) {
        if (!seen.insert(cur).second) break;
        ring.push_back(cur);
        auto it = next.find(cur);
        if (it != next.end()) {
          cur = it->second;
        } else if (fan_start >= 0) {
          cur = fan_start;  // open fan: resume at the other end
        } else {
          break;
        }
      }
      ok = ring.size() == nb.size();
    }
    manifold_[v] = ok;
    rings_[v] = ok ? ring : neighbors_[v];
  }
}

namespace {

std::vector<std::int32_t> bfs_order(std::int32_t v, const MeshAdjacency& adj, Index length) {
  std::vector<std::int32_t> order{v};
  std::vector<std::int32_t> frontier{v};
  std::set<std::int32_t> visited{v};
  while (!frontier.empty() && static_cast<Index>(order.size()) < length) {
    std::set<std::int32_t> next;
    for (auto u : frontier)
      for (auto n : adj.neighbors(u))
        if (!visited.count(n)) next.insert(n);
    frontier.assign(next.begin(), next.end());
    for (auto n : frontier) {
      visited.insert(n);
      order.push_back(n);
    }
  }
  return order;
}

std::vector<std::int32_t> spiral_order(std::int32_t v, const MeshAdjacency& adj, Index length) {
  std::vector<std::int32_t> order{v};
  std::vector<bool> visited(static_cast<std::size_t>(adj.num_vertices()), false);
  visited[static_cast<std::size_t>(v)] = true;
  std::vector<std::int32_t> ring{v};
  while (!ring.empty() && static_cast<Index>(order.size()) < length) {
    std::vector<std::int32_t> next;
    for (auto u : ring)
      for (auto n : adj.one_ring(u))
        if (!visited[static_cast<std::size_t>(n)]) {
          visited[static_cast<std::size_t>(n)] = true;
          next.push_back(n);
        }
    order.insert(order.end(), next.begin(), next.end());
    ring = std::move(next);
  }
  return order;
}

}  // namespace

SpiralIndexTable build_spiral_table(Index num_vertices, const std::vector<Face>& faces, Index length) {
  SPLITE_CHECK(length >= 1, "spiral length must be at least 1");
  const MeshAdjacency adj(num_vertices, faces);
  SpiralIndexTable table;
  table.indices.resize(num_vertices, length);
  for (Index vi = 0; vi < num_vertices; ++vi) {
    const auto v = static_cast<std::int32_t>(vi);
    const auto order = adj.manifold(v) ? spiral_order(v, adj, length) : bfs_order(v, adj, length);
    for (Index k = 0; k < length; ++k) {
      table.indices(vi, k) = k < static_cast<Index>(order.size()) ? order[static_cast<std::size_t>(k)] : v;
    }
  }
  return table;
}

SpiralIndexTable build_spiral_table(const MeshTopology& topology, Index level, Index length) {
  const MeshLevel& lv = topology.level(level);
  return build_spiral_table(lv.num_vertices, lv.faces, length);
}

}  // namespace splite
