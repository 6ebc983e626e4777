#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "voxsparse/carom.hpp"
#include "voxsparse/spade.hpp"

namespace voxsparse {

enum class WavesPolicy { FixedFifo, LinkList };

struct CoreConfig {
    u32 denn_count = 8;       // dense compute blocks per core, 4 or 8
    u32 pes_per_denn = 4;
    u32 elems_per_pe = 4;
    u32 lookups_per_cycle = 4;  // front-end pair rate
    u64 waves_words = 1024;
    WavesPolicy waves_policy = WavesPolicy::LinkList;
    u64 l1_words = 16384;     // 64 KB at 4-byte words

    u32 muls_per_cycle() const { return denn_count * pes_per_denn * elems_per_pe; }
    void validate() const;
};

struct ReuseKnobs {
    bool input_multicast = true;
    bool systolic_weights = true;
    bool local_accum = true;
    u32 systolic_group = 4;  // 1, 2 or 4 cooperating compute blocks
};

struct ArchConfig {
    u32 cores = 8;
    u32 n_groups = 1;
    CoreConfig core;
    u64 l2_words = 524288;       // 2 MB total, half usable per buffer
    double bus_words_per_clk = 16;   // shared L1<->L2 link
    double dram_bytes_per_clk = 48;
    u32 word_bytes = 4;
    u32 drain_cycles = 8;
    ReuseKnobs knobs;

    double dram_words_per_clk() const { return dram_bytes_per_clk / word_bytes; }
    u64 l2_buffer_words() const { return l2_words / 2; }
    void validate() const;
};

ArchConfig parse_arch_config(std::istream& is);
void write_arch_config(std::ostream& os, const ArchConfig& arch);

// Work dispatch at matrix-vector granularity instead of scalar MACs.
struct UopReport {
    u64 uops = 0;
    u64 savings = 1;
};
UopReport uop_count(u64 total_ops, u64 delta_c, u64 delta_n);

struct L1Traffic {
    u64 inputs = 0;
    u64 weights = 0;
    u64 outputs = 0;
    u64 metadata = 0;
    u64 total() const { return inputs + weights + outputs + metadata; }
};

struct TileCycles {
    u64 backend = 0;   // MAC-limited
    u64 frontend = 0;  // pair-lookup-limited
    u64 total = 0;     // pipelined max plus drain
    L1Traffic traffic;
};

// One spatial tile through one core. total_c/total_n is the channel volume
// this tile covers end to end; dispatch_c/dispatch_n is the per-uop slice the
// front end schedules. Local accumulation only pays off past 15-wide slices.
TileCycles sspnna_tile_cycles(const MetadataBlock& blk, CoirFlavor flavor, u64 total_c,
                              u64 total_n, u64 dispatch_c, u64 dispatch_n,
                              const CoreConfig& core, const ReuseKnobs& knobs, u32 drain_cycles);

struct WavesReport {
    u64 plane_tuples_total = 0;
    u64 fixed_stored = 0;
    u64 linklist_stored = 0;
    double ratio = 1.0;  // linklist / fixed
};

// Tuples of up to 4 pairs per weight plane. The fixed layout statically
// partitions the buffer across planes; the linked layout spends one word per
// tuple on a next pointer but fills the whole buffer regardless of skew.
WavesReport waves_occupancy(const MetadataBlock& blk, int kernel_volume, u64 buffer_words);

struct TileWork {
    u32 id = 0;
    u64 duration = 0;  // cycles
    u64 ops = 0;       // MACs, the sort key
    u64 words_in = 0;
    u64 words_out = 0;
    u32 n_group = 0;
};

struct ScheduledTile {
    u32 id = 0;
    u32 core = 0;
    u64 start = 0;
    u64 end = 0;
};

struct Schedule {
    std::vector<ScheduledTile> tiles;
    std::vector<u64> core_busy;
    u64 makespan = 0;
};

// Greedy list scheduling onto the earliest-available core of the tile's
// group; sort_by_ops=false keeps arrival order (the baseline).
Schedule schedule_tiles(std::vector<TileWork> tiles, u32 cores, u32 n_groups,
                        bool sort_by_ops = true);

// Everything the simulator needs for one layer, precomputed from metadata.
struct LayerSimInput {
    std::string name;
    LayerShape shape;
    DataflowChoice l2_choice;
    DataflowChoice l1_choice;
    RegionTable l2_regions;        // at the L2 region size, anchor order
    TiledMetadata l1_blocks;       // at the L1 region size, same anchor order
    u64 otf_cycles = 0;            // front-end preprocessing overlapped ahead
    std::vector<u64> tile_dma_entries;  // per L2 tile, optional
};

struct LayerCounters {
    std::string name;
    u64 cycles = 0;
    u64 start = 0;
    u64 end = 0;
    u64 core_compute = 0;
    u64 core_exchange = 0;
    u64 core_idle = 0;
    u64 dma_busy = 0;
    u64 dram_l2_words = 0;
    u64 l2_l1_words = 0;
    u64 l1_words = 0;
    u64 macs = 0;
    u64 uops = 0;
    u64 pairs = 0;
    u64 l2_tiles = 0;
    u64 l1_tiles = 0;
    double core_utilization = 0;  // busy share of cores over the layer span
};

struct SimReport {
    std::vector<LayerCounters> layers;
    u64 total_cycles = 0;
    u64 otf_total_cycles = 0;
};

// Deterministic event-ordered simulation: per layer, L2 tiles stream in over
// the DRAM link one ahead of execution; cores alternate exchange and compute
// phases with exclusive access to the shared L2 port, granted in request
// order (ties to the lower core id); layer l+1 may not start computing until
// layer l finished and its own front-end pass (if any) is done.
SimReport simulate_network(const std::vector<LayerSimInput>& layers, const ArchConfig& arch);

struct EnergyTable {
    double dram_word = 200;
    double l2_word = 6;
    double l1_word = 2;
    double mac = 1;
    double uop = 2;
};

struct EnergyBreakdown {
    double dram = 0, l2 = 0, l1 = 0, mac = 0, uop = 0;
    double total() const { return dram + l2 + l1 + mac + uop; }
};

EnergyBreakdown energy(const LayerCounters& layer, const EnergyTable& table);
EnergyBreakdown energy(const SimReport& report, const EnergyTable& table);

void write_report_json(std::ostream& os, const SimReport& report, const EnergyTable& table);
void write_report_csv(std::ostream& os, const SimReport& report, const EnergyTable& table);

}  // namespace voxsparse
