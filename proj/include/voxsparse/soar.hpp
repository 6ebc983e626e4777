#pragma once

#include <iosfwd>
#include <vector>

#include "voxsparse/voxgrid.hpp"

namespace voxsparse {

// Size-bounded partition of a voxel set into spatially contiguous chunks,
// each chunk listing voxel indices in breadth-first insertion order.
struct ChunkOrder {
    std::vector<std::vector<u32>> chunks;
    std::vector<u32> roots;  // voxels chosen by root selection (chunk starts and component restarts)

    u64 total() const;
    std::vector<u32> flatten() const;         // concatenation of all chunks
    std::vector<u32> chunk_of() const;        // voxel index -> chunk id
    void validate(u32 universe, u32 max_voxels) const;
};

// Frontier-growing chunker. Root = unselected voxel with the fewest static
// neighbors (ties to the lowest index). Popped duplicates are dropped. When a
// chunk fills, the next root is the min-neighbor unselected voxel still in
// the queue, and the queue is flushed. An empty queue with unselected voxels
// left falls back to global root selection and keeps filling the same chunk.
ChunkOrder soar_chunk(const AdjacencyMap& adj, u32 max_voxels);
ChunkOrder soar_chunk(const std::vector<std::vector<u32>>& graph, u32 max_voxels);

// Chunks adjacent iff any of their member voxels are adjacent.
std::vector<std::vector<u32>> chunk_graph(const ChunkOrder& order, const AdjacencyMap& adj);

// Reapplies the chunker level by level, treating each chunk as a point.
// capacities are ordered innermost first. Level 0 chunks hold voxel indices;
// level L>0 chunks hold level-(L-1) chunk ids.
std::vector<ChunkOrder> soar_hierarchical(const AdjacencyMap& adj,
                                          const std::vector<u32>& level_capacities);

// Depth-concatenation of the hierarchy into one voxel permutation.
std::vector<u32> flatten_hierarchy(const std::vector<ChunkOrder>& levels);

// Adjacency edges whose endpoints fall in different chunks, each undirected
// edge counted once. Proxy for cross-tile refetches.
u64 boundary_edge_count(const ChunkOrder& order, const AdjacencyMap& adj);

// Same count for an arbitrary permutation cut into fixed-size windows.
u64 boundary_edge_count(const std::vector<u32>& perm, u32 window, const AdjacencyMap& adj);

void write_permutation(std::ostream& os, const std::vector<u32>& perm);
std::vector<u32> read_permutation(std::istream& is);

}  // namespace voxsparse
