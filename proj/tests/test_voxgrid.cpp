#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <set>
#include <sstream>

#include "doctest.h"
#include "testutil.hpp"

using namespace voxsparse;

TEST_CASE("spatial hash answers exact membership") {
    ActiveVoxelSet set = vxt::random_cloud(11, 10, 120, 2);
    SpatialHash hash(set);
    for (u32 i = 0; i < set.voxels.size(); ++i) {
        auto hit = hash.lookup(set.voxels[i].x, set.voxels[i].y, set.voxels[i].z);
        REQUIRE(hit.has_value());
        CHECK(*hit == i);
    }
    CHECK_FALSE(hash.lookup(-1, 0, 0).has_value());
    CHECK_FALSE(hash.lookup(63, 63, 63).has_value() !=
                (std::find_if(set.voxels.begin(), set.voxels.end(), [](const Voxel& v) {
                     return v.x == 63 && v.y == 63 && v.z == 63;
                 }) != set.voxels.end()));
}

TEST_CASE("weight index layout is z-major with the center at the middle") {
    CHECK(offset_to_weight_index({0, 0, 0}, 3) == 13);
    CHECK(offset_to_weight_index({-1, -1, -1}, 3) == 0);
    CHECK(offset_to_weight_index({1, 1, 1}, 3) == 26);
    CHECK(offset_to_weight_index({1, 0, 0}, 3) == 14);
    CHECK(offset_to_weight_index({0, 1, 0}, 3) == 16);
    CHECK(offset_to_weight_index({0, 0, 1}, 3) == 22);
    for (int w = 0; w < 27; ++w) CHECK(offset_to_weight_index(weight_index_to_offset(w, 3), 3) == w);
}

TEST_CASE("adjacency map matches a quadratic scan") {
    for (u64 seed : {3ULL, 4ULL, 5ULL}) {
        ActiveVoxelSet set = vxt::random_cloud(seed, 8, 90, 1);
        AdjacencyMap adj = build_adjacency_map(set);
        auto want = vxt::brute_adjacency(set);
        REQUIRE(adj.entries.size() == want.size());
        for (u32 v = 0; v < want.size(); ++v) {
            std::set<u32> got;
            for (const auto& nb : adj.entries[v]) got.insert(nb.index);
            CHECK(got == std::set<u32>(want[v].begin(), want[v].end()));
        }
    }
}

TEST_CASE("adjacency neighbor offsets are consistent with coordinates") {
    ActiveVoxelSet set = vxt::random_cloud(9, 6, 40, 1);
    AdjacencyMap adj = build_adjacency_map(set);
    for (u32 v = 0; v < adj.entries.size(); ++v)
        for (const auto& nb : adj.entries[v]) {
            const Voxel& a = set.voxels[v];
            const Voxel& b = set.voxels[nb.index];
            CHECK(static_cast<i64>(a.x) + nb.offset.dx == static_cast<i64>(b.x));
            CHECK(static_cast<i64>(a.y) + nb.offset.dy == static_cast<i64>(b.y));
            CHECK(static_cast<i64>(a.z) + nb.offset.dz == static_cast<i64>(b.z));
        }
}

TEST_CASE("voxelize quantizes and dedups") {
    std::vector<std::array<double, 3>> pts = {
        {0.1, 0.1, 0.1}, {0.12, 0.11, 0.13},  // same cell
        {1.0, 2.0, 3.0},
    };
    std::vector<float> feats = {1.f, 3.f, 5.f};
    ActiveVoxelSet first = voxelize(pts, feats, 1, 0.5);
    REQUIRE(first.voxels.size() == 2);
    CHECK(first.features[0] == 1.f);
    ActiveVoxelSet avg = voxelize(pts, feats, 1, 0.5, kDefaultGridExtent, DuplicatePolicy::Average);
    CHECK(avg.features[0] == doctest::Approx(2.f));
    CHECK_THROWS_AS(voxelize({{1e9, 0, 0}}, {1.f}, 1, 1.0), Error);
}

TEST_CASE("raster permutation sorts by z then y then x") {
    ActiveVoxelSet set;
    set.voxels = {{1, 0, 1}, {0, 0, 0}, {0, 1, 0}, {2, 0, 0}};
    set.channels = 1;
    set.features = {1, 2, 3, 4};
    set.grid_extent = 8;
    std::vector<u32> perm = raster_permutation(set);
    CHECK(perm == std::vector<u32>{1, 3, 2, 0});
    ActiveVoxelSet sorted = apply_permutation(set, perm, VoxelOrder::Raster);
    CHECK(sorted.voxels[0].x == 0);
    CHECK(sorted.features[1] == 4);
    CHECK(sorted.order == VoxelOrder::Raster);
}

TEST_CASE("text and binary round trips preserve the cloud") {
    ActiveVoxelSet set = vxt::random_cloud(21, 9, 70, 3);
    std::stringstream text;
    write_voxel_text(text, set);
    ActiveVoxelSet back = read_voxel_text(text, set.grid_extent);
    REQUIRE(back.voxels.size() == set.voxels.size());
    CHECK(back.channels == 3);
    for (u32 i = 0; i < set.voxels.size(); ++i) {
        CHECK(back.voxels[i].x == set.voxels[i].x);
        CHECK(back.features[i * 3 + 2] == doctest::Approx(set.features[i * 3 + 2]));
    }
    std::stringstream bin(std::ios::in | std::ios::out | std::ios::binary);
    write_voxel_binary(bin, set);
    ActiveVoxelSet back2 = read_voxel_binary(bin, 3, set.grid_extent);
    REQUIRE(back2.voxels.size() == set.voxels.size());
    for (u32 i = 0; i < set.features.size(); ++i) CHECK(back2.features[i] == set.features[i]);
}

TEST_CASE("hash-build cost counts banked tiles") {
    ActiveVoxelSet one;
    one.voxels = {{0, 0, 0}};
    one.channels = 1;
    one.features = {1.f};
    one.grid_extent = 64;
    AdmacCostReport r = admac_cost(one);
    CHECK(r.streaming_reads == 1);
    CHECK(r.level1_builds == 1);
    CHECK(r.level2_builds == 1);
    CHECK(r.neighbor_fetch_total == 1);  // all in-bounds neighbors share tile (0,0,0)

    ActiveVoxelSet pair;
    pair.voxels = {{3, 0, 0}, {4, 0, 0}};
    pair.channels = 1;
    pair.features = {1.f, 1.f};
    pair.grid_extent = 64;
    AdmacCostReport r2 = admac_cost(pair);
    // each voxel's neighborhood straddles the x=4 tile boundary
    REQUIRE(r2.neighbor_fetch_per_voxel.size() == 2);
    CHECK(r2.neighbor_fetch_per_voxel[0] == 2);
    CHECK(r2.neighbor_fetch_per_voxel[1] == 2);
    CHECK(r2.streaming_reads == 1);
}

TEST_CASE("streaming reads batch sixteen voxels per line") {
    ActiveVoxelSet set = vxt::random_cloud(2, 12, 100, 1);
    AdmacCostReport r = admac_cost(set);
    CHECK(r.streaming_reads == ceil_div(set.voxels.size(), 16));
    CHECK(r.level2_builds == set.voxels.size());
}

TEST_CASE("validate rejects inconsistent sets") {
    ActiveVoxelSet bad;
    bad.voxels = {{0, 0, 0}};
    bad.channels = 2;
    bad.features = {1.f};  // wrong row size
    bad.grid_extent = 8;
    CHECK_THROWS_AS(bad.validate(), Error);

    ActiveVoxelSet dup;
    dup.voxels = {{1, 1, 1}, {1, 1, 1}};
    dup.channels = 1;
    dup.features = {1.f, 2.f};
    dup.grid_extent = 8;
    CHECK_THROWS_AS(dup.validate(), Error);

    ActiveVoxelSet oob;
    oob.voxels = {{9, 0, 0}};
    oob.channels = 1;
    oob.features = {1.f};
    oob.grid_extent = 8;
    CHECK_THROWS_AS(oob.validate(), Error);
}
