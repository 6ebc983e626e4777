#include "voxsparse/pipeline.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "voxsparse/soar.hpp"
#include "voxsparse/sparseconv.hpp"

namespace voxsparse {

namespace fs = std::filesystem;

std::vector<MemoryLevel> default_levels(const ArchConfig& arch) {
    double total_muls =
        static_cast<double>(arch.cores) * static_cast<double>(arch.core.muls_per_cycle());
    MemoryLevel l2;
    l2.name = "l2";
    l2.capacity = arch.l2_buffer_words();
    l2.bandwidth = arch.dram_words_per_clk();
    l2.compute = total_muls;
    l2.instances = 1;
    MemoryLevel l1;
    l1.name = "l1";
    l1.capacity = arch.core.l1_words;
    l1.bandwidth = arch.bus_words_per_clk;
    l1.compute = total_muls;
    l1.instances = arch.cores;
    return {l2, l1};
}

ReuseKnobs parse_knob_list(const std::string& list) {
    ReuseKnobs knobs;
    if (list == "all") return knobs;
    knobs.input_multicast = knobs.systolic_weights = knobs.local_accum = false;
    if (list == "none") return knobs;
    std::stringstream ss(list);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item == "multicast") knobs.input_multicast = true;
        else if (item == "systolic") knobs.systolic_weights = true;
        else if (item == "accum") knobs.local_accum = true;
        else if (!item.empty()) throw Error("unknown reuse knob '" + item + "'");
    }
    return knobs;
}

u64 otf_frontend_cycles(const ActiveVoxelSet& inputs, u64 pairs, const AdmacConfig& cfg) {
    AdmacCostReport rep = admac_cost(inputs, cfg);
    return rep.streaming_reads + rep.neighbor_fetch_total + ceil_div(pairs, 4);
}

LayerSimInput prepare_layer_sim(const std::string& name, const LayerShape& shape,
                                const CoirMetadata& meta, const std::vector<u32>& anchor_order,
                                const DataflowChoice& l2_choice, const DataflowChoice& l1_choice,
                                u64 otf_cycles) {
    LayerSimInput in;
    in.name = name;
    in.shape = shape;
    in.l2_choice = l2_choice;
    in.l1_choice = l1_choice;
    in.otf_cycles = otf_cycles;

    std::vector<u32> sweep{static_cast<u32>(l2_choice.delta_anchor)};
    if (l1_choice.delta_anchor != l2_choice.delta_anchor)
        sweep.push_back(static_cast<u32>(l1_choice.delta_anchor));
    SparsityAttributes sa = extract_sparsity_attributes(meta, anchor_order, sweep);
    in.l2_regions = sa.by_region_size.at(static_cast<u32>(l2_choice.delta_anchor)).table;
    in.l1_blocks = tile_metadata(meta, static_cast<u32>(l1_choice.delta_anchor), anchor_order);

    for (u32 t = 0; t < in.l2_regions.regions(); ++t) {
        u64 entries = 1 + in.l2_regions.unique[t];  // one ordered block + gather list
        if (t == 0) entries += 1;                   // kernel arrives with the first tile
        in.tile_dma_entries.push_back(entries);
    }
    return in;
}

namespace {

std::vector<u32> identity_order(size_t n) {
    std::vector<u32> order(n);
    for (u32 i = 0; i < order.size(); ++i) order[i] = i;
    return order;
}

std::vector<u32> locality_order(const ActiveVoxelSet& set, u32 window, bool use_soar) {
    if (!use_soar || set.voxels.empty()) return identity_order(set.voxels.size());
    AdjacencyMap adj = build_adjacency_map(set);
    return soar_chunk(adj, window).flatten();
}

std::vector<u32> sweep32(const std::vector<u64>& sweep) {
    std::vector<u32> out;
    for (u64 v : sweep) out.push_back(static_cast<u32>(v));
    return out;
}

// nest the inner region size under the outer one; the sweep grid is mostly
// powers of two so a dividing value usually exists
u64 nest_delta(u64 inner, u64 outer) {
    if (inner > outer) return outer;
    if (outer % inner == 0) return inner;
    u64 best = outer;
    for (u64 v = 32; v <= inner; v *= 2)
        if (outer % v == 0) best = v;
    return best;
}

struct LayerSelection {
    CoirFlavor flavor = CoirFlavor::Cirf;
    DataflowChoice l2;
    DataflowChoice l1;
    bool via_argmin = false;
    LayerShape shape;
    std::vector<u32> order;
};

}  // namespace

PipelineArtifacts run_pipeline(const RunManifest& m, std::ostream& log) {
    PipelineArtifacts out;
    auto guard = [](const char* st, auto&& fn) {
        try {
            return fn();
        } catch (const Error& e) {
            throw Error(std::string(st) + ": " + e.what());
        }
    };

    fs::create_directories(m.out_dir);
    auto emit = [&](const std::string& fname) {
        std::string p = (fs::path(m.out_dir) / fname).string();
        out.files.push_back(p);
        return p;
    };

    // ingest
    ActiveVoxelSet cloud = guard("ingest", [&] {
        if (!m.input_path.empty()) {
            bool binary = m.input_path.size() > 4 &&
                          m.input_path.compare(m.input_path.size() - 4, 4, ".bin") == 0;
            std::ifstream f(m.input_path, binary ? std::ios::binary : std::ios::in);
            if (!f) throw Error("cannot open " + m.input_path);
            return binary ? read_voxel_binary(f, m.synth.channels) : read_voxel_text(f);
        }
        SynthSpec s = m.synth;
        s.seed = m.seed;
        return generate_cloud(s);
    });
    std::vector<NetworkLayer> network = guard("ingest", [&] {
        std::ifstream f(m.network_path);
        if (!f) throw Error("cannot open " + m.network_path);
        return parse_network(f);
    });
    ArchConfig arch = guard("ingest", [&] {
        ArchConfig a;
        if (!m.arch_path.empty()) {
            std::ifstream f(m.arch_path);
            if (!f) throw Error("cannot open " + m.arch_path);
            a = parse_arch_config(f);
        }
        if (!m.knobs.empty()) a.knobs = parse_knob_list(m.knobs);
        return a;
    });
    log << "[ingest] " << cloud.voxels.size() << " voxels, " << network.size() << " layers\n";

    // whole-cloud locality ordering ahead of everything else
    if (m.use_soar) {
        guard("reorder", [&] {
            AdjacencyMap adj = build_adjacency_map(cloud);
            std::vector<u32> perm = soar_chunk(adj, m.soar_window).flatten();
            cloud = apply_permutation(cloud, perm, VoxelOrder::Soar);
            std::ofstream f(emit("permutation.txt"));
            write_permutation(f, perm);
        });
        log << "[reorder] window " << m.soar_window << "\n";
    }

    std::vector<ActiveVoxelSet> sets =
        guard("metadata", [&] { return propagate_sets(cloud, network); });

    const std::vector<MemoryLevel> levels = default_levels(arch);
    std::vector<LayerSelection> picks(network.size());
    std::vector<CoirMetadata> metas(network.size());
    std::vector<u64> layer_pairs(network.size(), 0);

    if (m.use_msa) {
        MsaTable table = guard("optimize", [&] {
            MsaBuildConfig cfg;
            cfg.mode = m.mode;
            cfg.budget = arch.l2_buffer_words();
            std::vector<ActiveVoxelSet> train;
            for (u32 i = 0; i < m.train_clouds; ++i) {
                SynthSpec s = m.synth;
                s.seed = m.seed + 1 + i;
                train.push_back(generate_cloud(s));
            }
            return build_msa_table(train, network, cfg);
        });
        {
            std::ofstream f(emit("msa-table.txt"));
            write_msa_table(f, table);
        }
        OtfPlan plan = guard("optimize", [&] { return otf_select(cloud, table, network, m.use_soar); });
        for (const std::string& w : plan.warnings) log << "[optimize] " << w << "\n";

        for (size_t l = 0; l < network.size(); ++l) {
            guard("optimize", [&] {
                const OtfLayerPlan& lp = plan.layers[l];
                metas[l] = build_coir(sets[l], sets[l + 1], network[l].conv, CoirFlavor::Cirf);
                layer_pairs[l] = metas[l].total_pairs();

                LayerSelection sel;
                sel.flavor = CoirFlavor::Cirf;
                sel.l2 = lp.choice;
                sel.shape = layer_shape(sets[l], sets[l + 1], metas[l]);
                sel.order = lp.anchor_order;

                SparsityAttributes bin =
                    msa_bin_attributes(table, static_cast<u32>(l), lp.arf);
                OptimizeResult inner = optimize_layer(sel.shape, bin, nullptr,
                                                      arch.core.l1_words, m.mode);
                sel.l1 = inner.choice;
                sel.l1.delta_anchor = nest_delta(sel.l1.delta_anchor, sel.l2.delta_anchor);
                picks[l] = sel;

                std::ofstream f(emit("dma-layer" + std::to_string(l) + ".txt"));
                write_dma_table(f, lp.dma);
                return 0;
            });
        }
        log << "[optimize] table-driven, " << table.rows.size() << " rows\n";
    } else {
        for (size_t l = 0; l < network.size(); ++l) {
            guard("optimize", [&] {
                CoirMetadata cirf =
                    build_coir(sets[l], sets[l + 1], network[l].conv, CoirFlavor::Cirf);
                CoirMetadata corf =
                    build_coir(sets[l], sets[l + 1], network[l].conv, CoirFlavor::Corf);
                layer_pairs[l] = cirf.total_pairs();

                std::vector<u32> order_out =
                    locality_order(sets[l + 1], m.soar_window, m.use_soar);
                std::vector<u32> order_in = locality_order(sets[l], m.soar_window, m.use_soar);

                LayerShape shape_cirf = layer_shape(sets[l], sets[l + 1], cirf);
                LayerShape shape_corf = layer_shape(sets[l], sets[l + 1], corf);
                SparsityAttributes sa_cirf = extract_sparsity_attributes(
                    cirf, order_out, sweep32(anchor_sweep(sets[l + 1].voxels.size())));
                SparsityAttributes sa_corf = extract_sparsity_attributes(
                    corf, order_in, sweep32(anchor_sweep(sets[l].voxels.size())));

                std::optional<HierarchyChoice> hc_cirf, hc_corf;
                std::string why;
                try {
                    hc_cirf = carom_select(levels, shape_cirf, sa_cirf, m.mode);
                } catch (const Error& e) {
                    why = e.what();
                }
                try {
                    hc_corf = carom_select(levels, shape_corf, sa_corf, m.mode);
                } catch (const Error& e) {
                    why = e.what();
                }

                LayerSelection sel;
                if (hc_cirf || hc_corf) {
                    bool take_corf =
                        hc_corf && (!hc_cirf ||
                                    hc_corf->levels[0].da < hc_cirf->levels[0].da);
                    const HierarchyChoice& hc = take_corf ? *hc_corf : *hc_cirf;
                    sel.flavor = take_corf ? CoirFlavor::Corf : CoirFlavor::Cirf;
                    sel.l2 = hc.levels[0].choice;
                    sel.l1 = hc.levels[1].choice;
                    sel.via_argmin = hc.levels[0].via_argmin;
                } else {
                    // anchor counts with no nestable divisor leave the strict
                    // hierarchy empty; pick each level independently instead
                    // and clamp the inner region under the outer one
                    OptimizeResult l2 = optimize_layer(shape_cirf, sa_cirf, &sa_corf,
                                                       levels[0].capacity, m.mode);
                    const bool corf_choice = l2.choice.flavor == CoirFlavor::Corf;
                    const SparsityAttributes& sa = corf_choice ? sa_corf : sa_cirf;
                    const LayerShape& shape = corf_choice ? shape_corf : shape_cirf;
                    OptimizeResult l1 = optimize_layer(shape, sa, nullptr,
                                                       levels[1].capacity, m.mode);
                    sel.flavor = l2.choice.flavor;
                    sel.l2 = l2.choice;
                    sel.l1 = l1.choice;
                    sel.l1.delta_anchor = nest_delta(sel.l1.delta_anchor, sel.l2.delta_anchor);
                    log << "[optimize] layer " << l
                        << ": hierarchy infeasible (" << why << "), per-level fallback\n";
                }
                bool take_corf = sel.flavor == CoirFlavor::Corf;
                sel.shape = take_corf ? shape_corf : shape_cirf;
                sel.order = take_corf ? order_in : order_out;
                metas[l] = take_corf ? std::move(corf) : std::move(cirf);
                picks[l] = sel;
                return 0;
            });
        }
        log << "[optimize] exact attributes, " << network.size() << " layers\n";
    }

    // simulate
    std::vector<LayerSimInput> sims;
    guard("simulate", [&] {
        for (size_t l = 0; l < network.size(); ++l) {
            std::string name = "layer" + std::to_string(l) + "-" +
                               to_string(network[l].conv.kind);
            u64 otf = m.use_msa ? otf_frontend_cycles(sets[l], layer_pairs[l]) : 0;
            sims.push_back(prepare_layer_sim(name, picks[l].shape, metas[l], picks[l].order,
                                             picks[l].l2, picks[l].l1, otf));
        }
        out.report = simulate_network(sims, arch);
        return 0;
    });
    log << "[simulate] " << out.report.total_cycles << " cycles\n";

    // report
    guard("report", [&] {
        for (size_t l = 0; l < network.size(); ++l) {
            LayerPlanOut plan;
            plan.name = sims[l].name;
            plan.shape = picks[l].shape;
            plan.flavor = picks[l].flavor;
            plan.l2_choice = picks[l].l2;
            plan.l1_choice = picks[l].l1;
            plan.l2_via_argmin = picks[l].via_argmin;
            plan.pairs = layer_pairs[l];
            plan.metadata_words = metas[l].words();
            plan.rulebook_words = 2 * layer_pairs[l];
            out.plans.push_back(plan);
        }
        std::ofstream pf(emit("plan.txt"));
        for (const auto& p : out.plans) {
            pf << p.name << ": " << (p.flavor == CoirFlavor::Cirf ? "out-anchored" : "in-anchored")
               << " l2[walk=" << to_string(p.l2_choice.walk) << " region=" << p.l2_choice.delta_anchor
               << " dc=" << p.l2_choice.delta_c << " dn=" << p.l2_choice.delta_n
               << " da=" << p.l2_choice.predicted_da << (p.l2_via_argmin ? " argmin" : "")
               << "] l1[walk=" << to_string(p.l1_choice.walk) << " region=" << p.l1_choice.delta_anchor
               << " dc=" << p.l1_choice.delta_c << " dn=" << p.l1_choice.delta_n << "]"
               << " pairs=" << p.pairs << " metadata=" << p.metadata_words
               << " rulebook=" << p.rulebook_words << "\n";
        }
        EnergyTable joules;
        std::ofstream jf(emit("report.json"));
        write_report_json(jf, out.report, joules);
        std::ofstream cf(emit("report.csv"));
        write_report_csv(cf, out.report, joules);
        return 0;
    });
    log << "[report] " << out.files.size() << " artifacts in " << m.out_dir << "\n";
    return out;
}

u32 verify_engine(u32 instances, u64 seed, std::ostream& log) {
    std::mt19937_64 rng(seed);
    auto pick = [&](u32 lo, u32 hi) { return lo + static_cast<u32>(rng() % (hi - lo + 1)); };
    u32 failures = 0;
    const double tol = 1e-5;

    for (u32 i = 0; i < instances; ++i) {
        ConvKind kind = i % 3 == 0   ? ConvKind::Submanifold
                        : i % 3 == 1 ? ConvKind::Strided
                                     : ConvKind::Transposed;
        SynthSpec s;
        s.kind = CloudKind::UniformRandom;
        s.extent = pick(4, 12);
        u32 cap = s.extent * s.extent * s.extent;
        s.count = pick(4, std::max<u32>(5, cap / 3));
        s.channels = pick(1, 8);
        s.grid_extent = 16;
        s.seed = seed ^ (0x51ed2700ULL + i);
        ActiveVoxelSet base = generate_cloud(s);

        u32 n_ch = pick(1, 8);
        ConvSpec conv;
        conv.kind = kind;
        conv.k = 3;
        conv.stride = kind == ConvKind::Submanifold ? 1 : 2;
        conv.in_channels = s.channels;
        conv.out_channels = n_ch;
        WeightTensor w = WeightTensor::random(3, s.channels, n_ch, rng());

        try {
            const ActiveVoxelSet* enc = nullptr;
            ActiveVoxelSet inputs = base;
            if (kind == ConvKind::Transposed) {
                // run on the coarse set and expand back onto the fine one
                ConvSpec down;
                down.kind = ConvKind::Strided;
                down.stride = 2;
                down.in_channels = s.channels;
                down.out_channels = s.channels;
                ActiveVoxelSet coarse = derive_output_set(base, down);
                std::mt19937_64 frng(s.seed + 7);
                std::uniform_real_distribution<float> dist(-1.0f, 1.0f);
                for (float& f : coarse.features) f = dist(frng);
                inputs = std::move(coarse);
                enc = &base;
            }

            ActiveVoxelSet want = dense_oracle(inputs, conv, w, enc);
            ActiveVoxelSet got_cirf = sparse_conv(inputs, conv, w, CoirFlavor::Cirf, enc);
            ActiveVoxelSet got_corf = sparse_conv(inputs, conv, w, CoirFlavor::Corf, enc);
            ActiveVoxelSet got_ggs = gather_gemm_scatter(inputs, conv, w, enc);
            double d1 = max_rel_diff(got_cirf, want);
            double d2 = max_rel_diff(got_corf, want);
            double d3 = max_rel_diff(got_ggs, want);
            if (d1 > tol || d2 > tol || d3 > tol) {
                ++failures;
                log << "instance " << i << " (" << to_string(kind) << "): rel diff "
                    << std::max({d1, d2, d3}) << "\n";
            }
        } catch (const Error& e) {
            ++failures;
            log << "instance " << i << " (" << to_string(kind) << "): " << e.what() << "\n";
        }
    }
    return failures;
}

std::string cpu_tiling_recommend(const std::vector<LayerShape>& layers,
                                 const std::vector<SparsityAttributes>& attrs, u64 llc_words,
                                 TileMode mode) {
    if (llc_words == 0) throw Error("cache size must be positive");
    if (layers.size() != attrs.size())
        throw Error("one attribute set per layer expected");
    u64 budget = llc_words - llc_words / 10;

    std::ostringstream os;
    os << "tile budget " << budget << " words (90% of " << llc_words << ")\n";
    for (size_t l = 0; l < layers.size(); ++l) {
        OptimizeResult r = optimize_layer(layers[l], attrs[l], nullptr, budget, mode);
        const DataflowChoice& d = r.choice;
        u64 anchors = d.flavor == CoirFlavor::Cirf ? layers[l].O : layers[l].I;
        u64 regions = ceil_div(anchors, d.delta_anchor);
        u64 cs = ceil_div(layers[l].C, d.delta_c);
        u64 ns = ceil_div(layers[l].N, d.delta_n);
        os << "layer " << l << ": "
           << (d.flavor == CoirFlavor::Cirf ? "out-anchored" : "in-anchored")
           << " region=" << d.delta_anchor << "x" << regions << " dc=" << d.delta_c << "x" << cs
           << " dn=" << d.delta_n << "x" << ns << " tile=" << d.predicted_tile_words
           << " words, transfers=" << d.predicted_da << " words\n";
        switch (d.walk) {
            case WalkPattern::OS:
                os << "  for region / for n-slice / for c-slice  (anchor rows stay resident)\n";
                break;
            case WalkPattern::IS:
                os << "  for region / for c-slice / for n-slice  (gathered rows stay resident)\n";
                break;
            case WalkPattern::WS:
                os << "  for c-slice / for n-slice / for region  (kernel slice stays resident)\n";
                break;
        }
    }
    return os.str();
}

}  // namespace voxsparse
