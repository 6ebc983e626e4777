#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <random>
#include <sstream>

#include "doctest.h"
#include "testutil.hpp"

using namespace voxsparse;

namespace {

ConvSpec subm(u32 c, u32 n) {
    ConvSpec conv;
    conv.kind = ConvKind::Submanifold;
    conv.stride = 1;
    conv.in_channels = c;
    conv.out_channels = n;
    return conv;
}

LayerShape shape_of(u64 I, u64 O, u64 C, u64 N, u64 M = 1000) {
    LayerShape s;
    s.I = I;
    s.O = O;
    s.K = 27;
    s.C = C;
    s.N = N;
    s.M = M;
    s.k = 3;
    return s;
}

}  // namespace

TEST_CASE("tile footprint adds the four resident datatypes") {
    CHECK(tile_size(150, 100, 16, 32, 27, 900) == 20324);
    CHECK(tile_size(0, 1, 1, 1, 1, 0) == 2);  // one anchor row, one weight word
}

TEST_CASE("transfer volume closed form, hand-computed spot values") {
    LayerShape layer = shape_of(900, 1000, 16, 32);
    // output-stationary walk, four regions: kernel refetched per region,
    // gathered inputs once, outputs once
    double da_os = data_accesses(WalkPattern::OS, CoirFlavor::Cirf, 250, 16, 32, layer, 1.2, 8.0);
    CHECK(da_os == doctest::Approx(114496.0));
    // weight-stationary over a single region: kernel once
    double da_ws = data_accesses(WalkPattern::WS, CoirFlavor::Cirf, 1000, 16, 32, layer, 1.2, 8.0);
    CHECK(da_ws == doctest::Approx(73024.0));
    // input-anchored mirror swaps the two voxel datatypes
    LayerShape mirror = shape_of(1000, 900, 32, 16);
    double da_corf =
        data_accesses(WalkPattern::OS, CoirFlavor::Corf, 250, 32, 16, mirror, 1.2, 8.0);
    CHECK(da_corf ==
          doctest::Approx(4 * 13824.0 + 1.0 * (1.2 * 1000 * 16) + 1.0 * (1000 * 32 + 8.0 * 1000)));
}

TEST_CASE("nearest-rank quantile") {
    CHECK(quantile_nearest({1, 2, 3, 4, 5}, 0.9) == 5);
    CHECK(quantile_nearest({1, 2, 3, 4, 5}, 0.5) == 3);
    CHECK(quantile_nearest({7}, 0.9) == 7);
    CHECK(quantile_nearest({5, 1}, 0.9) == 5);
}

TEST_CASE("sweeps cover powers of two plus the layer total") {
    CHECK(anchor_sweep(1000) == std::vector<u64>{32, 64, 128, 256, 512, 1000});
    CHECK(anchor_sweep(64) == std::vector<u64>{32, 64});
    CHECK(anchor_sweep(10) == std::vector<u64>{10});
    CHECK(channel_sweep(64) == std::vector<u64>{8, 16, 32, 64});
    CHECK(channel_sweep(4) == std::vector<u64>{4});
    CHECK(channel_sweep(48) == std::vector<u64>{8, 16, 32});
}

TEST_CASE("region factors on the filled 2-cube") {
    SynthSpec s;
    s.kind = CloudKind::SolidBlock;
    s.extent = 2;
    s.channels = 1;
    s.grid_extent = 16;
    ActiveVoxelSet in = generate_cloud(s);
    ConvSpec conv = subm(1, 1);
    ActiveVoxelSet out = derive_output_set(in, conv);
    CoirMetadata meta = build_coir(in, out, conv, CoirFlavor::Cirf);
    SparsityAttributes sa = extract_sparsity_attributes(meta, vxt::identity_perm(8), {4});
    const SparsityCurve& curve = sa.curve(4);
    // each half of the cube gathers all 8 inputs and holds 4 anchors x 8 pairs
    CHECK(curve.sa_unique_avg == doctest::Approx(2.0));
    CHECK(curve.sa_pairs_avg == doctest::Approx(8.0));
    CHECK(curve.table.regions() == 2);
    CHECK(curve.table.unique[0] == 8);
    CHECK(curve.table.pairs[0] == 32);
}

TEST_CASE("short final region divides by the nominal size") {
    // 6 anchors in regions of 4: second region has 2 anchors, factors still /4
    ActiveVoxelSet in;
    for (u32 i = 0; i < 6; ++i) in.voxels.push_back({i * 3, 0, 0});  // isolated
    in.channels = 1;
    in.features.assign(6, 1.f);
    in.grid_extent = 64;
    ConvSpec conv = subm(1, 1);
    ActiveVoxelSet out = derive_output_set(in, conv);
    CoirMetadata meta = build_coir(in, out, conv, CoirFlavor::Cirf);
    SparsityAttributes sa = extract_sparsity_attributes(meta, vxt::identity_perm(6), {4});
    const SparsityCurve& c = sa.curve(4);
    REQUIRE(c.table.regions() == 2);
    CHECK(c.table.unique[1] == 2);
    CHECK(c.sa_unique_avg == doctest::Approx((4.0 / 4 + 2.0 / 4) / 2));
    CHECK(c.sa_pairs_avg == doctest::Approx((4.0 / 4 + 2.0 / 4) / 2));
}

TEST_CASE("reference walk agrees with the closed form when regions divide evenly") {
    SynthSpec s;
    s.kind = CloudKind::SolidBlock;
    s.extent = 8;
    s.channels = 16;
    s.grid_extent = 32;
    ActiveVoxelSet in = generate_cloud(s);
    ConvSpec conv = subm(16, 32);
    ActiveVoxelSet out = derive_output_set(in, conv);

    for (CoirFlavor flavor : {CoirFlavor::Cirf, CoirFlavor::Corf}) {
        CoirMetadata meta = build_coir(in, out, conv, flavor);
        LayerShape layer = layer_shape(in, out, meta);
        SparsityAttributes sa =
            extract_sparsity_attributes(meta, vxt::identity_perm(512), {32, 64, 128});
        for (u32 delta : {32u, 64u, 128u}) {
            const SparsityCurve& curve = sa.curve(delta);
            for (WalkPattern walk : {WalkPattern::IS, WalkPattern::OS, WalkPattern::WS}) {
                for (u64 dc : {8ull, 16ull}) {
                    for (u64 dn : {8ull, 32ull}) {
                        DataflowChoice d;
                        d.walk = walk;
                        d.flavor = flavor;
                        d.delta_anchor = delta;
                        d.delta_c = dc;
                        d.delta_n = dn;
                        TrafficBreakdown t = count_tiled_traffic(d, curve.table, layer);
                        double predicted = data_accesses(d, sa, layer);
                        CHECK(static_cast<double>(t.total()) == doctest::Approx(predicted));
                        std::vector<u64> per = per_region_traffic(d, curve.table, layer);
                        u64 sum = 0;
                        for (u64 w : per) sum += w;
                        CHECK(sum == t.total());
                    }
                }
            }
        }
    }
}

TEST_CASE("optimizer finds the enumeration minimum on random spaces") {
    std::mt19937_64 rng(77);
    for (int inst = 0; inst < 20; ++inst) {
        u32 extent = 6 + static_cast<u32>(rng() % 6);
        u32 count = 40 + static_cast<u32>(rng() % 150);
        ActiveVoxelSet in = vxt::random_cloud(rng(), extent, count, 1, 32);
        ConvSpec conv = subm(1, 1);
        ActiveVoxelSet out = derive_output_set(in, conv);
        CoirMetadata cirf = build_coir(in, out, conv, CoirFlavor::Cirf);
        CoirMetadata corf = build_coir(in, out, conv, CoirFlavor::Corf);
        LayerShape layer = layer_shape(in, out, cirf);
        layer.C = 8ull << (rng() % 3);
        layer.N = 8ull << (rng() % 3);
        SparsityAttributes sa_cirf = vxt::attributes_for(cirf, layer.O);
        SparsityAttributes sa_corf = vxt::attributes_for(corf, layer.I);
        u64 budget = 1500 + rng() % 30000;
        TileMode mode = rng() % 2 ? TileMode::Rst : TileMode::Sst;

        bool any = false;
        double want = vxt::brute_min_da(layer, sa_cirf, &sa_corf, budget, mode, &any);
        if (!any) {
            CHECK_THROWS_AS(optimize_layer(layer, sa_cirf, &sa_corf, budget, mode), Error);
            continue;
        }
        OptimizeResult r = optimize_layer(layer, sa_cirf, &sa_corf, budget, mode);
        CHECK(r.choice.predicted_da == doctest::Approx(want).epsilon(1e-12));
    }
}

TEST_CASE("relaxed sizing accepts budgets strict sizing rejects") {
    RegionTable t;
    t.delta_anchor = 4;
    t.anchors = {4, 4, 4, 4, 4, 4, 4, 4, 4, 4};
    t.unique = {6, 6, 6, 6, 6, 6, 6, 6, 6, 100};  // one blown-up region
    t.pairs = {12, 12, 12, 12, 12, 12, 12, 12, 12, 450};
    SparsityCurve curve;
    curve.table = t;
    u64 k = 27;
    FeasibilityResult strict = tile_feasible(curve, 8, 8, k, 1, 3000, TileMode::Sst);
    FeasibilityResult relaxed = tile_feasible(curve, 8, 8, k, 1, 3000, TileMode::Rst);
    CHECK_FALSE(strict.feasible);
    CHECK(relaxed.feasible);
    CHECK(relaxed.split_regions == 1);
    CHECK(relaxed.tile_words < strict.min_budget);
}

TEST_CASE("optimizer failure names the smallest workable budget") {
    LayerShape layer = shape_of(500, 500, 64, 64, 4000);
    RegionTable t;
    t.delta_anchor = 100;
    t.anchors.assign(5, 100);
    t.unique.assign(5, 150);
    t.pairs.assign(5, 800);
    SparsityCurve curve;
    curve.table = t;
    curve.sa_unique_avg = 1.5;
    curve.sa_pairs_avg = 8;
    SparsityAttributes sa;
    sa.flavor = CoirFlavor::Cirf;
    sa.by_region_size[100] = curve;
    try {
        optimize_layer(layer, sa, nullptr, 64, TileMode::Sst);
        FAIL("expected a budget error");
    } catch (const Error& e) {
        CHECK(std::string(e.what()).find("words") != std::string::npos);
    }
}

TEST_CASE("network descriptor round trip and validation") {
    std::string text =
        "subm 3 1 4 8\n"
        "strided 3 2 8 16\n"
        "transposed 3 2 16 8 encoder=1\n";
    std::stringstream ss(text);
    std::vector<NetworkLayer> net = parse_network(ss);
    REQUIRE(net.size() == 3);
    CHECK(net[0].conv.kind == ConvKind::Submanifold);
    CHECK(net[1].conv.stride == 2);
    REQUIRE(net[2].encoder_ref.has_value());
    CHECK(*net[2].encoder_ref == 1);

    std::stringstream out;
    write_network(out, net);
    std::stringstream again(out.str());
    std::vector<NetworkLayer> net2 = parse_network(again);
    CHECK(net2.size() == 3);
    CHECK(net2[2].encoder_ref == net[2].encoder_ref);

    std::stringstream bad1("subm 3 1 4 8\nsubm 3 1 6 8\n");  // channel mismatch
    CHECK_THROWS_AS(parse_network(bad1), Error);
    std::stringstream bad2("transposed 3 2 4 8\n");  // no encoder reference
    CHECK_THROWS_AS(parse_network(bad2), Error);
    std::stringstream bad3("subm 3 1 4 8 encoder=5\n");  // forward reference
    CHECK_THROWS_AS(parse_network(bad3), Error);
}

TEST_CASE("set propagation threads a u-net shaped stack") {
    ActiveVoxelSet cloud = vxt::random_cloud(5, 12, 250, 4, 64);
    std::stringstream ss(
        "subm 3 1 4 8\n"
        "strided 3 2 8 16\n"
        "subm 3 1 16 16\n"
        "transposed 3 2 16 8 encoder=1\n");
    std::vector<NetworkLayer> net = parse_network(ss);
    std::vector<ActiveVoxelSet> sets = propagate_sets(cloud, net);
    REQUIRE(sets.size() == 5);
    CHECK(sets[0].voxels.size() == cloud.voxels.size());
    CHECK(sets[2].voxels.size() == sets[3].voxels.size());  // submanifold keeps the set
    CHECK(sets[4].voxels.size() == sets[1].voxels.size());  // decoder returns to encoder set
    for (size_t l = 0; l < net.size(); ++l) {
        CoirMetadata meta = build_coir(sets[l], sets[l + 1], net[l].conv, CoirFlavor::Cirf);
        CHECK(count_pairs(sets[l], sets[l + 1], net[l].conv) == meta.total_pairs());
    }
}

TEST_CASE("cross-cloud table: build, round trip, row lookup") {
    std::vector<ActiveVoxelSet> clouds;
    for (u64 seed : {21ULL, 22ULL, 23ULL}) clouds.push_back(vxt::random_cloud(seed, 14, 400, 4, 64));
    std::stringstream ss("subm 3 1 4 8\nstrided 3 2 8 8\n");
    std::vector<NetworkLayer> net = parse_network(ss);
    MsaBuildConfig cfg;
    cfg.budget = 16384;
    MsaTable table = build_msa_table(clouds, net, cfg);
    REQUIRE(table.layers.size() == 2);
    REQUIRE(table.rows.size() == 16);
    for (const auto& row : table.rows) REQUIRE(row.per_layer.size() == 2);

    bool clamped = false;
    CHECK(table.bin_for(table.arf_lo, &clamped) == 0);
    CHECK_FALSE(clamped);
    CHECK(table.bin_for(table.arf_hi, &clamped) == 15);
    CHECK(table.bin_for(0.01, &clamped) == 0);
    CHECK(clamped);
    CHECK(table.bin_for(1e9, &clamped) == 15);
    CHECK(clamped);
    for (u32 b : {0u, 7u, 15u}) CHECK(table.bin_for(table.bin_center(b)) == b);

    std::stringstream file;
    write_msa_table(file, table);
    MsaTable back = read_msa_table(file);
    CHECK(back.arf_bins == table.arf_bins);
    CHECK(back.arf_lo == doctest::Approx(table.arf_lo));
    REQUIRE(back.rows.size() == table.rows.size());
    for (u32 r = 0; r < table.rows.size(); ++r)
        for (u32 l = 0; l < 2; ++l) {
            CHECK(back.rows[r].per_layer[l].delta_anchor == table.rows[r].per_layer[l].delta_anchor);
            CHECK(back.rows[r].per_layer[l].walk == table.rows[r].per_layer[l].walk);
            CHECK(back.rows[r].per_layer[l].delta_c == table.rows[r].per_layer[l].delta_c);
        }
    REQUIRE(back.layers.size() == 2);
    CHECK(back.layers[0].mean_outputs == table.layers[0].mean_outputs);
}

TEST_CASE("synthetic row attributes pin the pair factor to the bin") {
    std::vector<ActiveVoxelSet> clouds = {vxt::random_cloud(31, 12, 300, 4, 64)};
    std::stringstream ss("subm 3 1 4 8\n");
    std::vector<NetworkLayer> net = parse_network(ss);
    MsaTable table = build_msa_table(clouds, net, {});
    SparsityAttributes sa = msa_bin_attributes(table, 0, 5.0);
    REQUIRE(!sa.by_region_size.empty());
    for (const auto& [delta, curve] : sa.by_region_size) {
        CHECK(curve.sa_pairs_avg == doctest::Approx(5.0).epsilon(0.2));
        CHECK(curve.table.regions() >= 1);
    }
}

TEST_CASE("run-time selection emits consistent plans and transfer tables") {
    std::vector<ActiveVoxelSet> clouds;
    for (u64 seed : {41ULL, 42ULL}) clouds.push_back(vxt::random_cloud(seed, 14, 500, 4, 64));
    std::stringstream ss("subm 3 1 4 8\nstrided 3 2 8 8\n");
    std::vector<NetworkLayer> net = parse_network(ss);
    MsaTable table = build_msa_table(clouds, net, {});

    ActiveVoxelSet cloud = vxt::random_cloud(50, 14, 450, 4, 64);
    OtfPlan plan = otf_select(cloud, table, net);
    REQUIRE(plan.layers.size() == 2);
    std::vector<ActiveVoxelSet> sets = propagate_sets(cloud, net);
    for (u32 l = 0; l < 2; ++l) {
        const OtfLayerPlan& lp = plan.layers[l];
        CHECK(lp.metadata.total_pairs() == count_pairs(sets[l], sets[l + 1], net[l].conv));
        CHECK(lp.choice.delta_anchor > 0);
        CHECK(lp.dma.total_words() > 0);
        u64 anchors = 0;
        for (const auto& blk : lp.metadata.blocks) anchors += blk.anchor_count;
        CHECK(anchors == sets[l + 1].voxels.size());
        // anchor order is a permutation of the output set
        std::vector<bool> seen(sets[l + 1].voxels.size(), false);
        for (u32 v : lp.anchor_order) {
            REQUIRE(v < seen.size());
            CHECK(!seen[v]);
            seen[v] = true;
        }
    }

    OtfPlan plan2 = otf_select(cloud, table, net);
    for (u32 l = 0; l < 2; ++l) {
        CHECK(plan2.layers[l].choice.delta_anchor == plan.layers[l].choice.delta_anchor);
        CHECK(plan2.layers[l].anchor_order == plan.layers[l].anchor_order);
        CHECK(plan2.layers[l].dma.total_words() == plan.layers[l].dma.total_words());
    }
}

TEST_CASE("transfer tables serialize in the documented text form") {
    DmaTable t;
    DmaEntry a;
    a.tile = 0;
    a.block = true;
    a.source = 100;
    a.destination = 0;
    a.words = 64;
    DmaEntry b;
    b.tile = 1;
    b.block = false;
    b.source = 4;
    b.destination = 16;
    b.words = 4;
    t.entries = {a, b};
    CHECK(t.total_words() == 68);
    std::stringstream ss;
    write_dma_table(ss, t);
    std::string line;
    std::getline(ss, line);
    CHECK(line.find("block") != std::string::npos);
    std::getline(ss, line);
    CHECK(line.find("voxel") != std::string::npos);
}
