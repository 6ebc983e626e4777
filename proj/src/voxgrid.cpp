#include "voxsparse/voxgrid.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>
#include <unordered_set>

namespace voxsparse {

namespace {

u64 pack_key(u32 x, u32 y, u32 z, u32 extent) {
    return (static_cast<u64>(z) * extent + y) * extent + x;
}

}  // namespace

void ActiveVoxelSet::validate() const {
    if (features.size() != voxels.size() * static_cast<std::size_t>(channels))
        throw Error("ActiveVoxelSet: feature array length does not match voxel count");
    std::unordered_set<u64> seen;
    seen.reserve(voxels.size());
    for (const Voxel& v : voxels) {
        if (v.x >= grid_extent || v.y >= grid_extent || v.z >= grid_extent)
            throw Error("ActiveVoxelSet: voxel (" + std::to_string(v.x) + "," + std::to_string(v.y) +
                        "," + std::to_string(v.z) + ") outside grid extent " +
                        std::to_string(grid_extent));
        if (!seen.insert(pack_key(v.x, v.y, v.z, grid_extent)).second)
            throw Error("ActiveVoxelSet: duplicate voxel (" + std::to_string(v.x) + "," +
                        std::to_string(v.y) + "," + std::to_string(v.z) + ")");
    }
}

SpatialHash::SpatialHash(const ActiveVoxelSet& set) : extent_(set.grid_extent) {
    map_.reserve(set.voxels.size());
    for (u32 i = 0; i < set.voxels.size(); ++i) {
        const Voxel& v = set.voxels[i];
        auto [it, inserted] = map_.emplace(pack_key(v.x, v.y, v.z, extent_), i);
        if (!inserted) throw Error("SpatialHash: duplicate voxel coordinates in active set");
    }
}

std::optional<u32> SpatialHash::lookup(i64 x, i64 y, i64 z) const {
    if (x < 0 || y < 0 || z < 0 || x >= extent_ || y >= extent_ || z >= extent_) return std::nullopt;
    auto it = map_.find(pack_key(static_cast<u32>(x), static_cast<u32>(y), static_cast<u32>(z), extent_));
    if (it == map_.end()) return std::nullopt;
    return it->second;
}

int offset_to_weight_index(const KernelOffset& d, int k) {
    const int h = k / 2;
    return (d.dz + h) * k * k + (d.dy + h) * k + (d.dx + h);
}

KernelOffset weight_index_to_offset(int widx, int k) {
    const int h = k / 2;
    return {widx % k - h, (widx / k) % k - h, widx / (k * k) - h};
}

std::vector<NeighborRef> neighbors(const SpatialHash& hash, const Voxel& v, int k) {
    if (k < 1 || k % 2 == 0) throw Error("neighbors: kernel size must be odd and positive");
    const int h = k / 2;
    std::vector<NeighborRef> out;
    for (int dz = -h; dz <= h; ++dz)
        for (int dy = -h; dy <= h; ++dy)
            for (int dx = -h; dx <= h; ++dx) {
                auto idx = hash.lookup(static_cast<i64>(v.x) + dx, static_cast<i64>(v.y) + dy,
                                       static_cast<i64>(v.z) + dz);
                if (idx) out.push_back({*idx, {dx, dy, dz}});
            }
    return out;
}

u64 AdjacencyMap::edge_count() const {
    u64 directed = 0;
    for (const auto& e : entries) directed += e.size();
    return directed / 2;
}

AdjacencyMap build_adjacency_map(const ActiveVoxelSet& set, int k) {
    if (set.voxels.empty()) throw Error("build_adjacency_map: empty active set");
    SpatialHash hash(set);
    AdjacencyMap adj;
    adj.k = k;
    adj.entries.resize(set.voxels.size());
    for (u32 i = 0; i < set.voxels.size(); ++i) {
        auto refs = neighbors(hash, set.voxels[i], k);
        auto& list = adj.entries[i];
        list.reserve(refs.size() > 0 ? refs.size() - 1 : 0);
        for (const NeighborRef& r : refs)
            if (r.index != i) list.push_back(r);
    }
    return adj;
}

void AdmacConfig::validate() const {
    if (banks == 0 || line_voxels == 0 || group_extent == 0)
        throw Error("AdmacConfig: counts must be positive");
    if (static_cast<u64>(banks) * line_voxels != static_cast<u64>(tile_x) * tile_y * tile_z)
        throw Error("AdmacConfig: banks * line_voxels must cover one banked tile");
}

AdmacCostReport admac_cost(const ActiveVoxelSet& set, const AdmacConfig& cfg) {
    cfg.validate();
    AdmacCostReport rep;
    rep.streaming_reads = ceil_div(set.voxels.size(), cfg.line_voxels);
    rep.level2_builds = set.voxels.size();

    std::unordered_set<u64> groups;
    for (const Voxel& v : set.voxels)
        groups.insert(pack_key(v.x / cfg.group_extent, v.y / cfg.group_extent, v.z / cfg.group_extent,
                               set.grid_extent));
    rep.level1_builds = groups.size();

    // One banked access serves a whole tile; a voxel's fetch cost is the
    // number of distinct tiles its 26 neighbor addresses fall into.
    rep.neighbor_fetch_per_voxel.reserve(set.voxels.size());
    for (const Voxel& v : set.voxels) {
        std::unordered_set<u64> tiles;
        for (int dz = -1; dz <= 1; ++dz)
            for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx) {
                    if (dx == 0 && dy == 0 && dz == 0) continue;
                    const i64 nx = static_cast<i64>(v.x) + dx;
                    const i64 ny = static_cast<i64>(v.y) + dy;
                    const i64 nz = static_cast<i64>(v.z) + dz;
                    if (nx < 0 || ny < 0 || nz < 0 || nx >= set.grid_extent ||
                        ny >= set.grid_extent || nz >= set.grid_extent)
                        continue;
                    tiles.insert(pack_key(static_cast<u32>(nx) / cfg.tile_x,
                                          static_cast<u32>(ny) / cfg.tile_y,
                                          static_cast<u32>(nz) / cfg.tile_z, set.grid_extent));
                }
        rep.neighbor_fetch_per_voxel.push_back(static_cast<u32>(tiles.size()));
        rep.neighbor_fetch_total += tiles.size();
    }
    return rep;
}

ActiveVoxelSet voxelize(const std::vector<std::array<double, 3>>& points,
                        const std::vector<float>& features, u32 channels, double resolution,
                        u32 grid_extent, DuplicatePolicy dup) {
    if (resolution <= 0.0) throw Error("voxelize: resolution must be positive");
    if (features.size() != points.size() * static_cast<std::size_t>(channels))
        throw Error("voxelize: feature array length does not match point count");

    ActiveVoxelSet set;
    set.channels = channels;
    set.grid_extent = grid_extent;
    set.order = VoxelOrder::Custom;

    std::unordered_map<u64, u32> index;
    std::vector<u32> hits;  // points collapsed into each voxel, for averaging
    index.reserve(points.size());

    for (std::size_t p = 0; p < points.size(); ++p) {
        i64 q[3];
        for (int a = 0; a < 3; ++a) q[a] = static_cast<i64>(std::floor(points[p][a] / resolution));
        for (int a = 0; a < 3; ++a) {
            if (q[a] < 0 || q[a] >= grid_extent)
                throw Error("voxelize: point " + std::to_string(p) + " quantizes to (" +
                            std::to_string(q[0]) + "," + std::to_string(q[1]) + "," +
                            std::to_string(q[2]) + ") outside grid extent " +
                            std::to_string(grid_extent));
        }
        const u64 key = pack_key(static_cast<u32>(q[0]), static_cast<u32>(q[1]),
                                 static_cast<u32>(q[2]), grid_extent);
        auto [it, inserted] = index.emplace(key, static_cast<u32>(set.voxels.size()));
        if (inserted) {
            set.voxels.push_back(
                {static_cast<u32>(q[0]), static_cast<u32>(q[1]), static_cast<u32>(q[2])});
            set.features.insert(set.features.end(), features.begin() + p * channels,
                                features.begin() + (p + 1) * channels);
            hits.push_back(1);
        } else if (dup == DuplicatePolicy::Average) {
            float* row = set.feature_row(it->second);
            const u32 n = ++hits[it->second];
            for (u32 c = 0; c < channels; ++c)
                row[c] += (features[p * channels + c] - row[c]) / static_cast<float>(n);
        }
    }
    return set;
}

std::vector<u32> raster_permutation(const ActiveVoxelSet& set) {
    std::vector<u32> perm(set.voxels.size());
    for (u32 i = 0; i < perm.size(); ++i) perm[i] = i;
    std::sort(perm.begin(), perm.end(), [&](u32 a, u32 b) {
        const Voxel& va = set.voxels[a];
        const Voxel& vb = set.voxels[b];
        return std::tie(va.z, va.y, va.x) < std::tie(vb.z, vb.y, vb.x);
    });
    return perm;
}

ActiveVoxelSet apply_permutation(const ActiveVoxelSet& set, const std::vector<u32>& perm,
                                 VoxelOrder tag) {
    if (perm.size() != set.voxels.size())
        throw Error("apply_permutation: permutation length does not match voxel count");
    ActiveVoxelSet out;
    out.channels = set.channels;
    out.grid_extent = set.grid_extent;
    out.order = tag;
    out.voxels.reserve(set.voxels.size());
    out.features.reserve(set.features.size());
    std::vector<bool> used(set.voxels.size(), false);
    for (u32 src : perm) {
        if (src >= set.voxels.size() || used[src])
            throw Error("apply_permutation: not a valid permutation");
        used[src] = true;
        out.voxels.push_back(set.voxels[src]);
        const float* row = set.feature_row(src);
        out.features.insert(out.features.end(), row, row + set.channels);
    }
    return out;
}

void write_voxel_text(std::ostream& os, const ActiveVoxelSet& set) {
    for (u32 i = 0; i < set.voxels.size(); ++i) {
        const Voxel& v = set.voxels[i];
        os << v.x << ' ' << v.y << ' ' << v.z;
        const float* row = set.feature_row(i);
        for (u32 c = 0; c < set.channels; ++c) os << ' ' << row[c];
        os << '\n';
    }
}

ActiveVoxelSet read_voxel_text(std::istream& is, u32 grid_extent) {
    ActiveVoxelSet set;
    set.grid_extent = grid_extent;
    std::string line;
    bool channels_known = false;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ls(line);
        u32 x, y, z;
        if (!(ls >> x >> y >> z))
            throw Error("voxel text: malformed record at line " + std::to_string(lineno));
        std::vector<float> row;
        float f;
        while (ls >> f) row.push_back(f);
        if (!channels_known) {
            set.channels = static_cast<u32>(row.size());
            channels_known = true;
        } else if (row.size() != set.channels) {
            throw Error("voxel text: inconsistent channel count at line " + std::to_string(lineno));
        }
        set.voxels.push_back({x, y, z});
        set.features.insert(set.features.end(), row.begin(), row.end());
    }
    set.validate();
    return set;
}

void write_voxel_binary(std::ostream& os, const ActiveVoxelSet& set) {
    for (u32 i = 0; i < set.voxels.size(); ++i) {
        const Voxel& v = set.voxels[i];
        u32 coords[3] = {v.x, v.y, v.z};
        os.write(reinterpret_cast<const char*>(coords), sizeof(coords));
        os.write(reinterpret_cast<const char*>(set.feature_row(i)),
                 static_cast<std::streamsize>(sizeof(float) * set.channels));
    }
}

ActiveVoxelSet read_voxel_binary(std::istream& is, u32 channels, u32 grid_extent) {
    ActiveVoxelSet set;
    set.grid_extent = grid_extent;
    set.channels = channels;
    u32 coords[3];
    std::vector<float> row(channels);
    while (is.read(reinterpret_cast<char*>(coords), sizeof(coords))) {
        if (channels &&
            !is.read(reinterpret_cast<char*>(row.data()),
                     static_cast<std::streamsize>(sizeof(float) * channels)))
            throw Error("voxel binary: truncated record");
        set.voxels.push_back({coords[0], coords[1], coords[2]});
        set.features.insert(set.features.end(), row.begin(), row.end());
    }
    set.validate();
    return set;
}

}  // namespace voxsparse
