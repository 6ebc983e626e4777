// voxsparse command line front end. Every subcommand reads and writes the
// documented file formats only; flags can also be set through environment
// variables prefixed VOXSPARSE_ (e.g. VOXSPARSE_ARCH, VOXSPARSE_SEED).

#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "json.hpp"
#include "voxsparse/pipeline.hpp"
#include "voxsparse/soar.hpp"
#include "voxsparse/sparseconv.hpp"

using namespace voxsparse;

namespace {

bool has_suffix(const std::string& s, const std::string& suf) {
    return s.size() >= suf.size() && s.compare(s.size() - suf.size(), suf.size(), suf) == 0;
}

ActiveVoxelSet load_cloud(const std::string& path, u32 channels, u32 grid) {
    bool binary = has_suffix(path, ".bin");
    std::ifstream f(path, binary ? std::ios::binary : std::ios::in);
    if (!f) throw Error("cannot open " + path);
    return binary ? read_voxel_binary(f, channels, grid) : read_voxel_text(f, grid);
}

void store_cloud(const std::string& path, const ActiveVoxelSet& set) {
    bool binary = has_suffix(path, ".bin");
    std::ofstream f(path, binary ? std::ios::binary : std::ios::out);
    if (!f) throw Error("cannot write " + path);
    if (binary) write_voxel_binary(f, set);
    else write_voxel_text(f, set);
}

std::vector<NetworkLayer> load_network(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw Error("cannot open " + path);
    return parse_network(f);
}

ArchConfig load_arch(const std::string& path) {
    if (path.empty()) return ArchConfig{};
    std::ifstream f(path);
    if (!f) throw Error("cannot open " + path);
    return parse_arch_config(f);
}

void print_report(const SimReport& report) {
    EnergyTable joules;
    EnergyBreakdown total = energy(report, joules);
    std::cout << "total cycles: " << report.total_cycles << "\n";
    if (report.otf_total_cycles)
        std::cout << "front-end cycles (overlapped): " << report.otf_total_cycles << "\n";
    std::cout << "energy: " << total.total() << " units (dram " << total.dram << ", l2 "
              << total.l2 << ", l1 " << total.l1 << ", mac " << total.mac << ", uop "
              << total.uop << ")\n";
    for (const auto& lc : report.layers)
        std::cout << "  " << lc.name << ": " << lc.cycles << " cycles, util "
                  << lc.core_utilization << ", dram " << lc.dram_l2_words << " words, macs "
                  << lc.macs << "\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"sparse 3D convolution toolkit"};
    app.require_subcommand(1);

    // shared manifest-style options
    RunManifest manifest;
    std::string kind_name = "solid-block";
    std::string mode_name = "rst";
    std::string dataflow_name = "isa";
    bool no_soar = false;

    auto add_synth = [&](CLI::App* cmd) {
        cmd->add_option("--kind", kind_name,
                        "solid-block|surface-shell|wavy-sheet|thin-strips|uniform-random")
            ->envname("VOXSPARSE_KIND");
        cmd->add_option("--extent", manifest.synth.extent, "cube edge / sheet side / strip length");
        cmd->add_option("--count", manifest.synth.count, "uniform-random voxel budget");
        cmd->add_option("--strips", manifest.synth.strips, "thin-strips line count");
        cmd->add_option("--channels", manifest.synth.channels, "feature channels");
        cmd->add_option("--amplitude", manifest.synth.amplitude, "wavy-sheet height swing");
        cmd->add_option("--wavelength", manifest.synth.wavelength, "wavy-sheet period");
        cmd->add_option("--grid", manifest.synth.grid_extent, "grid extent");
        cmd->add_option("--seed", manifest.seed, "generation seed")->envname("VOXSPARSE_SEED");
    };
    auto add_run_flags = [&](CLI::App* cmd) {
        cmd->add_option("--in", manifest.input_path, "voxel file (.bin or text)")
            ->envname("VOXSPARSE_IN");
        cmd->add_option("--network", manifest.network_path, "network descriptor")
            ->envname("VOXSPARSE_NETWORK")
            ->required();
        cmd->add_option("--arch", manifest.arch_path, "arch config file")
            ->envname("VOXSPARSE_ARCH");
        cmd->add_option("--mode", mode_name, "tile sizing: sst or rst")
            ->envname("VOXSPARSE_MODE");
        cmd->add_option("--dataflow", dataflow_name, "selection source: msa or isa")
            ->envname("VOXSPARSE_DATAFLOW");
        cmd->add_flag("--no-soar", no_soar, "skip locality reordering");
        cmd->add_option("--knobs", manifest.knobs, "all|none|multicast,systolic,accum")
            ->envname("VOXSPARSE_KNOBS");
        cmd->add_option("--out", manifest.out_dir, "artifact directory")
            ->envname("VOXSPARSE_OUT");
        cmd->add_option("--window", manifest.soar_window, "reorder chunk capacity");
        add_synth(cmd);
    };
    auto finish_manifest = [&] {
        manifest.synth.kind = cloud_kind_from_string(kind_name);
        if (mode_name == "sst") manifest.mode = TileMode::Sst;
        else if (mode_name == "rst") manifest.mode = TileMode::Rst;
        else throw Error("--mode must be sst or rst");
        if (dataflow_name == "msa") manifest.use_msa = true;
        else if (dataflow_name == "isa") manifest.use_msa = false;
        else throw Error("--dataflow must be msa or isa");
        manifest.use_soar = !no_soar;
    };

    // generate
    auto* gen = app.add_subcommand("generate", "emit a synthetic voxel cloud");
    std::string gen_out;
    add_synth(gen);
    gen->add_option("--out", gen_out, "output file (.bin for binary)")->required();

    // adjacency
    auto* adj_cmd = app.add_subcommand("adjacency", "neighborhood statistics for a cloud");
    std::string adj_in;
    u32 adj_channels = 1, adj_grid = kDefaultGridExtent;
    adj_cmd->add_option("--in", adj_in, "voxel file")->required();
    adj_cmd->add_option("--channels", adj_channels, "channel count for binary input");
    adj_cmd->add_option("--grid", adj_grid, "grid extent");

    // metadata
    auto* meta_cmd = app.add_subcommand("metadata", "per-layer metadata sizes for a network");
    std::string meta_in, meta_net, meta_out;
    u32 meta_channels = 1, meta_tile = 0;
    meta_cmd->add_option("--in", meta_in, "voxel file")->required();
    meta_cmd->add_option("--network", meta_net, "network descriptor")->required();
    meta_cmd->add_option("--channels", meta_channels, "channel count for binary input");
    meta_cmd->add_option("--tile", meta_tile, "write tiled blocks at this region size");
    meta_cmd->add_option("--out", meta_out, "directory for tiled metadata");

    // reorder
    auto* reo = app.add_subcommand("reorder", "locality-order a cloud");
    std::string reo_in, reo_out, reo_perm;
    u32 reo_window = 256, reo_channels = 1;
    reo->add_option("--in", reo_in, "voxel file")->required();
    reo->add_option("--out", reo_out, "reordered cloud file")->required();
    reo->add_option("--perm", reo_perm, "permutation file");
    reo->add_option("--window", reo_window, "chunk capacity");
    reo->add_option("--channels", reo_channels, "channel count for binary input");

    // optimize
    auto* opt = app.add_subcommand("optimize", "single-level dataflow selection per layer");
    std::string opt_in, opt_net, opt_arch, opt_mode = "rst";
    u32 opt_channels = 1;
    u64 opt_budget = 0;
    opt->add_option("--in", opt_in, "voxel file")->required();
    opt->add_option("--network", opt_net, "network descriptor")->required();
    opt->add_option("--arch", opt_arch, "arch config (budget default)")->envname("VOXSPARSE_ARCH");
    opt->add_option("--mode", opt_mode, "sst or rst")->envname("VOXSPARSE_MODE");
    opt->add_option("--budget", opt_budget, "tile budget in words");
    opt->add_option("--channels", opt_channels, "channel count for binary input");

    // simulate / run
    auto* sim = app.add_subcommand("simulate", "full pipeline with cycle simulation");
    add_run_flags(sim);
    auto* run = app.add_subcommand("run", "full pipeline, artifact listing");
    add_run_flags(run);

    // verify
    auto* ver = app.add_subcommand("verify", "randomized check against the dense reference");
    u32 ver_instances = 40;
    u64 ver_seed = 1;
    ver->add_option("--instances", ver_instances, "instance count");
    ver->add_option("--seed", ver_seed, "seed")->envname("VOXSPARSE_SEED");

    // report
    auto* rep = app.add_subcommand("report", "summarize a report.json");
    std::string rep_in;
    rep->add_option("--in", rep_in, "report.json path")->required();

    // cpu-tile
    auto* cpu = app.add_subcommand("cpu-tile", "cache tiling plan for a host CPU");
    std::string cpu_in, cpu_net, cpu_mode = "rst";
    u32 cpu_channels = 1;
    u64 cpu_llc = 0;
    cpu->add_option("--in", cpu_in, "voxel file")->required();
    cpu->add_option("--network", cpu_net, "network descriptor")->required();
    cpu->add_option("--llc", cpu_llc, "last-level cache size in words")->required();
    cpu->add_option("--mode", cpu_mode, "sst or rst");
    cpu->add_option("--channels", cpu_channels, "channel count for binary input");

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) {
            manifest.synth.kind = cloud_kind_from_string(kind_name);
            manifest.synth.seed = manifest.seed;
            ActiveVoxelSet cloud = generate_cloud(manifest.synth);
            store_cloud(gen_out, cloud);
            std::cout << cloud.voxels.size() << " voxels -> " << gen_out << "\n";
        } else if (adj_cmd->parsed()) {
            ActiveVoxelSet cloud = load_cloud(adj_in, adj_channels, adj_grid);
            AdjacencyMap adj = build_adjacency_map(cloud);
            AdmacCostReport cost = admac_cost(cloud);
            std::cout << cloud.voxels.size() << " voxels, " << adj.edge_count()
                      << " undirected neighbor edges\n";
            std::cout << "hash build: " << cost.streaming_reads << " streaming reads, "
                      << cost.level1_builds << " group entries, " << cost.level2_builds
                      << " voxel entries, " << cost.neighbor_fetch_total
                      << " neighbor tile fetches\n";
        } else if (meta_cmd->parsed()) {
            ActiveVoxelSet cloud = load_cloud(meta_in, meta_channels, kDefaultGridExtent);
            std::vector<NetworkLayer> network = load_network(meta_net);
            std::vector<ActiveVoxelSet> sets = propagate_sets(cloud, network);
            for (size_t l = 0; l < network.size(); ++l) {
                CoirMetadata cirf =
                    build_coir(sets[l], sets[l + 1], network[l].conv, CoirFlavor::Cirf);
                CoirMetadata corf =
                    build_coir(sets[l], sets[l + 1], network[l].conv, CoirFlavor::Corf);
                MetadataSizeReport sz = metadata_size(cirf);
                std::cout << "layer " << l << " (" << to_string(network[l].conv.kind)
                          << "): in=" << sets[l].voxels.size()
                          << " out=" << sets[l + 1].voxels.size() << " pairs=" << sz.pairs
                          << " out-anchored=" << cirf.words() << "w in-anchored=" << corf.words()
                          << "w pair-list=" << sz.rulebook_words << "w\n";
                if (meta_tile && !meta_out.empty()) {
                    std::filesystem::create_directories(meta_out);
                    std::vector<u32> order(cirf.entries.size());
                    for (u32 i = 0; i < order.size(); ++i) order[i] = i;
                    TiledMetadata tiled = tile_metadata(cirf, meta_tile, order);
                    std::string path =
                        meta_out + "/layer" + std::to_string(l) + ".meta";
                    std::ofstream f(path, std::ios::binary);
                    write_tiled_metadata(f, tiled);
                    std::cout << "  " << tiled.blocks.size() << " blocks -> " << path << "\n";
                }
            }
        } else if (reo->parsed()) {
            ActiveVoxelSet cloud = load_cloud(reo_in, reo_channels, kDefaultGridExtent);
            AdjacencyMap adj = build_adjacency_map(cloud);
            std::vector<u32> before(cloud.voxels.size());
            for (u32 i = 0; i < before.size(); ++i) before[i] = i;
            ChunkOrder order = soar_chunk(adj, reo_window);
            std::vector<u32> perm = order.flatten();
            std::cout << "window " << reo_window << ": " << boundary_edge_count(before, reo_window, adj)
                      << " boundary edges before, " << boundary_edge_count(perm, reo_window, adj)
                      << " after (" << order.chunks.size() << " chunks)\n";
            store_cloud(reo_out, apply_permutation(cloud, perm, VoxelOrder::Soar));
            if (!reo_perm.empty()) {
                std::ofstream f(reo_perm);
                write_permutation(f, perm);
            }
        } else if (opt->parsed()) {
            ActiveVoxelSet cloud = load_cloud(opt_in, opt_channels, kDefaultGridExtent);
            std::vector<NetworkLayer> network = load_network(opt_net);
            std::vector<ActiveVoxelSet> sets = propagate_sets(cloud, network);
            ArchConfig arch = load_arch(opt_arch);
            u64 budget = opt_budget ? opt_budget : arch.l2_buffer_words();
            TileMode mode = opt_mode == "sst" ? TileMode::Sst : TileMode::Rst;
            std::cout << "budget " << budget << " words, "
                      << (mode == TileMode::Sst ? "strict" : "relaxed") << " sizing\n";
            for (size_t l = 0; l < network.size(); ++l) {
                CoirMetadata cirf =
                    build_coir(sets[l], sets[l + 1], network[l].conv, CoirFlavor::Cirf);
                CoirMetadata corf =
                    build_coir(sets[l], sets[l + 1], network[l].conv, CoirFlavor::Corf);
                std::vector<u32> order_out(sets[l + 1].voxels.size());
                for (u32 i = 0; i < order_out.size(); ++i) order_out[i] = i;
                std::vector<u32> order_in(sets[l].voxels.size());
                for (u32 i = 0; i < order_in.size(); ++i) order_in[i] = i;
                std::vector<u32> sweep_out, sweep_in;
                for (u64 v : anchor_sweep(sets[l + 1].voxels.size()))
                    sweep_out.push_back(static_cast<u32>(v));
                for (u64 v : anchor_sweep(sets[l].voxels.size()))
                    sweep_in.push_back(static_cast<u32>(v));
                SparsityAttributes sa_cirf =
                    extract_sparsity_attributes(cirf, order_out, sweep_out);
                SparsityAttributes sa_corf = extract_sparsity_attributes(corf, order_in, sweep_in);
                LayerShape shape = layer_shape(sets[l], sets[l + 1], cirf);
                OptimizeResult r = optimize_layer(shape, sa_cirf, &sa_corf, budget, mode);
                const DataflowChoice& d = r.choice;
                u64 anchors = d.flavor == CoirFlavor::Cirf ? shape.O : shape.I;
                u64 tiles = ceil_div(anchors, d.delta_anchor) + d.split_regions;
                std::cout << "layer " << l << ": "
                          << (d.flavor == CoirFlavor::Cirf ? "out-anchored" : "in-anchored")
                          << " walk=" << to_string(d.walk) << " region=" << d.delta_anchor
                          << " dc=" << d.delta_c << " dn=" << d.delta_n << " tiles=" << tiles
                          << " da=" << d.predicted_da << " tile_words=" << d.predicted_tile_words
                          << "\n";
            }
        } else if (sim->parsed() || run->parsed()) {
            finish_manifest();
            PipelineArtifacts artifacts = run_pipeline(manifest, std::cout);
            print_report(artifacts.report);
            if (run->parsed())
                for (const auto& f : artifacts.files) std::cout << "artifact: " << f << "\n";
        } else if (ver->parsed()) {
            u32 failures = verify_engine(ver_instances, ver_seed, std::cout);
            std::cout << (failures ? "FAIL: " : "ok: ") << ver_instances - failures << "/"
                      << ver_instances << " instances match the dense reference\n";
            return failures ? 1 : 0;
        } else if (rep->parsed()) {
            std::ifstream f(rep_in);
            if (!f) throw Error("cannot open " + rep_in);
            nlohmann::json j = nlohmann::json::parse(f);
            std::cout << "total cycles: " << j["total_cycles"].get<u64>() << "\n";
            std::cout << "energy: " << j["energy"]["total"].get<double>() << " units\n";
            for (const auto& lj : j["layers"])
                std::cout << "  " << lj["name"].get<std::string>() << ": "
                          << lj["cycles"].get<u64>() << " cycles, util "
                          << lj["core_utilization"].get<double>() << ", dram "
                          << lj["dram_l2_words"].get<u64>() << " words\n";
        } else if (cpu->parsed()) {
            ActiveVoxelSet cloud = load_cloud(cpu_in, cpu_channels, kDefaultGridExtent);
            std::vector<NetworkLayer> network = load_network(cpu_net);
            std::vector<ActiveVoxelSet> sets = propagate_sets(cloud, network);
            std::vector<LayerShape> shapes;
            std::vector<SparsityAttributes> attrs;
            for (size_t l = 0; l < network.size(); ++l) {
                CoirMetadata cirf =
                    build_coir(sets[l], sets[l + 1], network[l].conv, CoirFlavor::Cirf);
                std::vector<u32> order(cirf.entries.size());
                for (u32 i = 0; i < order.size(); ++i) order[i] = i;
                std::vector<u32> sweep;
                for (u64 v : anchor_sweep(sets[l + 1].voxels.size()))
                    sweep.push_back(static_cast<u32>(v));
                shapes.push_back(layer_shape(sets[l], sets[l + 1], cirf));
                attrs.push_back(extract_sparsity_attributes(cirf, order, sweep));
            }
            TileMode mode = cpu_mode == "sst" ? TileMode::Sst : TileMode::Rst;
            std::cout << cpu_tiling_recommend(shapes, attrs, cpu_llc, mode);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
