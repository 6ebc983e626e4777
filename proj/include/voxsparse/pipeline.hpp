#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "voxsparse/accelsim.hpp"
#include "voxsparse/carom.hpp"
#include "voxsparse/coir.hpp"
#include "voxsparse/spade.hpp"
#include "voxsparse/synth.hpp"

namespace voxsparse {

// Everything the end-to-end run needs. The seed pins synthetic generation and
// any randomized selection, so two runs of the same manifest produce
// byte-identical artifacts.
struct RunManifest {
    std::string input_path;   // voxel file; empty means synthesize from `synth`
    SynthSpec synth;
    std::string network_path;
    std::string arch_path;    // empty means built-in defaults
    TileMode mode = TileMode::Rst;
    bool use_msa = false;     // table-driven selection instead of exact attributes
    bool use_soar = true;
    std::string knobs;        // "", "all", "none", or comma list of multicast|systolic|accum
    std::string out_dir = "out";
    u64 seed = 1;
    u32 train_clouds = 4;     // table-building corpus size in msa mode
    u32 soar_window = 256;    // chunk capacity for locality ordering
};

struct LayerPlanOut {
    std::string name;
    LayerShape shape;
    CoirFlavor flavor = CoirFlavor::Cirf;
    DataflowChoice l2_choice;
    DataflowChoice l1_choice;
    bool l2_via_argmin = false;
    u64 pairs = 0;
    u64 metadata_words = 0;
    u64 rulebook_words = 0;
};

struct PipelineArtifacts {
    std::vector<LayerPlanOut> plans;
    SimReport report;
    std::vector<std::string> files;  // paths written under out_dir
};

// Two-level hierarchy matching the simulated machine: the outer level sees
// DRAM bandwidth against aggregate compute, the inner level the shared bus.
std::vector<MemoryLevel> default_levels(const ArchConfig& arch);

// "all", "none", or a comma list of multicast|systolic|accum.
ReuseKnobs parse_knob_list(const std::string& list);

// Front-end preprocessing cost of one layer when selection happens at run
// time: streaming ingest, hash-build neighbor fetches, pair lookups.
u64 otf_frontend_cycles(const ActiveVoxelSet& inputs, u64 pairs, const AdmacConfig& cfg = {});

// Assembles the simulator feed for one layer: real per-region tables at both
// chosen region sizes, metadata blocks, inbound descriptor counts.
LayerSimInput prepare_layer_sim(const std::string& name, const LayerShape& shape,
                                const CoirMetadata& meta, const std::vector<u32>& anchor_order,
                                const DataflowChoice& l2_choice, const DataflowChoice& l1_choice,
                                u64 otf_cycles);

// ingest -> adjacency -> (reorder) -> metadata -> selection -> simulate ->
// report. Throws Error prefixed with the failing stage's name. `log` gets one
// line per stage.
PipelineArtifacts run_pipeline(const RunManifest& manifest, std::ostream& log);

// Randomized engine check against the dense reference; returns the number of
// failing instances (0 is a pass) and prints one line per failure.
u32 verify_engine(u32 instances, u64 seed, std::ostream& log);

// Single-level tiling advisor for cache-based hosts: budget is 90% of the
// last-level cache, the plan minimizes modeled transfer volume per layer.
std::string cpu_tiling_recommend(const std::vector<LayerShape>& layers,
                                 const std::vector<SparsityAttributes>& attrs, u64 llc_words,
                                 TileMode mode = TileMode::Rst);

}  // namespace voxsparse
