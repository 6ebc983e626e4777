#pragma once

#include <array>
#include <iosfwd>
#include <optional>
#include <unordered_map>
#include <vector>

#include "voxsparse/types.hpp"

namespace voxsparse {

struct Voxel {
    u32 x = 0, y = 0, z = 0;
    friend bool operator==(const Voxel&, const Voxel&) = default;
};

enum class VoxelOrder { Raster, Soar, Custom };
enum class DuplicatePolicy { KeepFirst, Average };

// Sparse occupancy of a 3D grid: the ordered list of active voxels plus one
// feature row per voxel. The list order is the processing order of every
// downstream stage, so reordering passes permute this structure in place.
struct ActiveVoxelSet {
    std::vector<Voxel> voxels;
    std::vector<float> features;  // voxels.size() * channels, row-major
    u32 channels = 0;
    u32 grid_extent = kDefaultGridExtent;
    VoxelOrder order = VoxelOrder::Custom;

    std::size_t size() const { return voxels.size(); }
    const float* feature_row(u32 i) const { return features.data() + static_cast<std::size_t>(i) * channels; }
    float* feature_row(u32 i) { return features.data() + static_cast<std::size_t>(i) * channels; }

    // Throws on duplicate coordinates, out-of-extent voxels, or a feature
    // array whose length disagrees with the voxel list.
    void validate() const;
};

// O(1) coordinate -> dense index lookup over one active set.
class SpatialHash {
public:
    SpatialHash() = default;
    explicit SpatialHash(const ActiveVoxelSet& set);

    // Inactive, negative, or out-of-extent coordinates return nullopt.
    std::optional<u32> lookup(i64 x, i64 y, i64 z) const;
    u32 extent() const { return extent_; }
    std::size_t size() const { return map_.size(); }

private:
    std::unordered_map<u64, u32> map_;
    u32 extent_ = kDefaultGridExtent;
};

struct KernelOffset {
    int dx = 0, dy = 0, dz = 0;
    friend bool operator==(const KernelOffset&, const KernelOffset&) = default;
};

// Grid-wide bit convention for k^3 weight masks:
//   bit = (dz+k/2)*k^2 + (dy+k/2)*k + (dx+k/2)
int offset_to_weight_index(const KernelOffset& d, int k);
KernelOffset weight_index_to_offset(int widx, int k);

struct NeighborRef {
    u32 index = 0;        // dense index into the owning set
    KernelOffset offset;  // signed offset of the neighbor relative to the query voxel
    friend bool operator==(const NeighborRef&, const NeighborRef&) = default;
};

// Active voxels in the k^3 window centered at v (self included), tagged with
// their signed offsets, in ascending weight-index order. The window is
// clipped at grid boundaries.
std::vector<NeighborRef> neighbors(const SpatialHash& hash, const Voxel& v, int k = 3);

// Per-voxel neighbor lists (self excluded), ascending weight-index order.
struct AdjacencyMap {
    int k = 3;
    std::vector<std::vector<NeighborRef>> entries;

    std::size_t size() const { return entries.size(); }
    u64 edge_count() const;  // undirected edges
};

AdjacencyMap build_adjacency_map(const ActiveVoxelSet& set, int k = 3);

// Banked-memory model for hardware neighborhood search. The banked tile is
// the box of voxels one parallel read of all banks returns; with the default
// bank/line encoding (bank = {y[2],z[1:0]}, line slot = {y[1:0],x[1:0]})
// that box is 4x8x4. Level-1 lookup groups are coarser (8^3 by default).
struct AdmacConfig {
    u32 banks = 8;
    u32 line_voxels = 16;  // voxels served by one memory read
    u32 tile_x = 4, tile_y = 8, tile_z = 4;
    u32 group_extent = 8;  // level-1 table granularity, per axis

    void validate() const;  // banks * line_voxels must cover one banked tile
};

struct AdmacCostReport {
    u64 streaming_reads = 0;   // ceil(n / line_voxels) to ingest the voxel list
    u64 level1_builds = 0;     // distinct occupied level-1 groups
    u64 level2_builds = 0;     // per-voxel address entries
    u64 neighbor_fetch_total = 0;
    std::vector<u32> neighbor_fetch_per_voxel;  // banked tiles touched by each 26-neighborhood
};

AdmacCostReport admac_cost(const ActiveVoxelSet& set, const AdmacConfig& cfg = {});

// Quantize a pointcloud onto the grid. Each voxel keeps the feature row of
// the first point that lands in it (or the mean under Average policy).
// Throws naming the offending point if a quantized coordinate leaves the grid.
ActiveVoxelSet voxelize(const std::vector<std::array<double, 3>>& points,
                        const std::vector<float>& features, u32 channels, double resolution,
                        u32 grid_extent = kDefaultGridExtent,
                        DuplicatePolicy dup = DuplicatePolicy::KeepFirst);

// Raster order: ascending (z, y, x), x fastest.
std::vector<u32> raster_permutation(const ActiveVoxelSet& set);

// Reorder voxels and feature rows by perm (new index i takes old perm[i]).
ActiveVoxelSet apply_permutation(const ActiveVoxelSet& set, const std::vector<u32>& perm,
                                 VoxelOrder tag = VoxelOrder::Custom);

// Voxel list formats: text is one record per line "x y z f1 ... fC";
// binary is little-endian u32 x3 + f32 xC per record (channel count is
// external to the stream).
void write_voxel_text(std::ostream& os, const ActiveVoxelSet& set);
ActiveVoxelSet read_voxel_text(std::istream& is, u32 grid_extent = kDefaultGridExtent);
void write_voxel_binary(std::ostream& os, const ActiveVoxelSet& set);
ActiveVoxelSet read_voxel_binary(std::istream& is, u32 channels,
                                 u32 grid_extent = kDefaultGridExtent);

}  // namespace voxsparse
