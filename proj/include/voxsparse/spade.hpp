#pragma once

#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "voxsparse/coir.hpp"

namespace voxsparse {

enum class WalkPattern { IS, OS, WS };
const char* to_string(WalkPattern w);
WalkPattern walk_from_string(const std::string& s);

enum class TileMode { Sst, Rst };

struct LayerShape {
    u64 I = 0;  // active inputs
    u64 O = 0;  // active outputs
    u64 K = 0;  // kernel volume
    u64 C = 0;  // input channels
    u64 N = 0;  // output channels
    u64 M = 0;  // metadata words for the whole layer
    int k = 3;  // kernel edge, K = k^3

    void validate() const;
};

LayerShape layer_shape(const ActiveVoxelSet& inputs, const ActiveVoxelSet& outputs,
                       const CoirMetadata& meta);

// Per-region measurements for one anchor-region size.
struct RegionTable {
    u32 delta_anchor = 0;
    std::vector<u32> anchors;   // actual anchors per region (last may be short)
    std::vector<u32> unique;    // distinct partner voxels touched per region
    std::vector<u64> pairs;     // metadata pair words per region

    u32 regions() const { return static_cast<u32>(anchors.size()); }
};

// Region-averaged sparsity factors plus the retained raw tables. sa_unique is
// the footprint factor of the gathered datatype (the 1+beta form); sa_pairs is
// the average neighbor count per anchor (the ARF).
struct SparsityCurve {
    double sa_unique_avg = 0, sa_unique_max = 0, sa_unique_q90 = 0;
    double sa_pairs_avg = 0, sa_pairs_max = 0, sa_pairs_q90 = 0;
    RegionTable table;
};

struct SparsityAttributes {
    CoirFlavor flavor = CoirFlavor::Cirf;
    u64 anchor_count = 0;
    u64 partner_count = 0;
    u64 total_pairs = 0;
    int mask_words = 1;
    std::map<u32, SparsityCurve> by_region_size;

    const SparsityCurve& curve(u32 delta_anchor) const;
};

// Nearest-rank upper quantile: sorted ascending, element at ceil(q*n)-1.
double quantile_nearest(std::vector<double> values, double q);

// Regions are consecutive runs of delta anchors in `order`. f_unique counts
// distinct partners per region; f_pairs counts pair words. Averages divide by
// the nominal region size even for a short final region.
SparsityAttributes extract_sparsity_attributes(const CoirMetadata& meta,
                                               const std::vector<u32>& order,
                                               const std::vector<u32>& delta_sweep);

// Resident working-set words for one tile: gathered rows, anchor rows, the
// full kernel slice, and the metadata block.
u64 tile_size(u64 delta_gathered, u64 delta_anchor, u64 delta_c, u64 delta_n, u64 kernel_volume,
              u64 delta_m);

struct DataflowChoice {
    WalkPattern walk = WalkPattern::OS;
    CoirFlavor flavor = CoirFlavor::Cirf;
    u64 delta_anchor = 0;  // output-region size for output-anchored metadata, input-region otherwise
    u64 delta_c = 0;
    u64 delta_n = 0;
    double predicted_da = 0;
    u64 predicted_tile_words = 0;  // at the sizing quantile
    u32 split_regions = 0;         // relaxed sizing: regions that overflow and split
};

// Scalar-attribute transfer volume model. sa_unique and sa_pairs are the
// region-averaged factors for the chosen region size. For output-anchored
// metadata the gathered datatype is the inputs; input-anchored metadata swaps
// the roles of the two voxel datatypes and their refetch multipliers.
double data_accesses(WalkPattern walk, CoirFlavor flavor, u64 delta_anchor, u64 delta_c,
                     u64 delta_n, const LayerShape& layer, double sa_unique, double sa_pairs);

double data_accesses(const DataflowChoice& d, const SparsityAttributes& sa,
                     const LayerShape& layer);

// Candidate enumeration grids.
std::vector<u64> anchor_sweep(u64 total);           // {32,64,...,8192} clipped, plus the total
std::vector<u64> channel_sweep(u64 total);          // powers of two in [8, total], or {total}

struct FeasibilityResult {
    bool feasible = false;
    u64 tile_words = 0;      // footprint at the sizing rule
    u32 split_regions = 0;
    u64 min_budget = 0;      // smallest budget this candidate would accept
};

// Strict sizing uses the worst region; relaxed sizing uses the 90-quantile
// region and splits overshoot regions in half until they fit (bounded by the
// unchanged unique-partner footprint).
FeasibilityResult tile_feasible(const SparsityCurve& curve, u64 delta_c, u64 delta_n,
                                u64 kernel_volume, int mask_words, u64 budget, TileMode mode);

struct OptimizeResult {
    DataflowChoice choice;
    u64 candidates_considered = 0;
};

// Enumerates walk x flavor x (region, channel, channel) over the sweeps and
// returns the feasible candidate with minimum modeled transfer volume.
// Ties prefer larger regions, then larger delta_n, then larger delta_c, then
// enumeration order. Throws with the minimum workable budget when nothing fits.
OptimizeResult optimize_layer(const LayerShape& layer, const SparsityAttributes& sa_cirf,
                              const SparsityAttributes* sa_corf, u64 budget, TileMode mode);

// Word-transfer counter for a reference tiled walk: loops regions and channel
// tiles per the walk pattern, fetching each datatype when its residency rule
// says so, using actual per-region counts and actual channel-slice sizes.
struct TrafficBreakdown {
    u64 weights = 0;
    u64 gathered = 0;   // partner-side voxel rows
    u64 anchors = 0;    // anchor-side voxel rows
    u64 metadata = 0;
    u64 total() const { return weights + gathered + anchors + metadata; }
};

TrafficBreakdown count_tiled_traffic(const DataflowChoice& d, const RegionTable& table,
                                     const LayerShape& layer);

// Same accounting, attributed to the region that triggered each fetch.
std::vector<u64> per_region_traffic(const DataflowChoice& d, const RegionTable& table,
                                    const LayerShape& layer);

// --- cross-cloud attribute tables -----------------------------------------

struct MsaLayerCurve {
    std::map<u32, double> msa_unique;      // region size -> mean sa_unique_avg
    std::map<u32, double> msa_unique_q90;  // mean of per-cloud q90 factors
    std::map<u32, double> msa_unique_max;
    double mean_arf = 1.0;
    u64 mean_inputs = 0;
    u64 mean_outputs = 0;
    int k = 3;
};

struct MsaRow {
    double arf_center = 0;
    std::vector<DataflowChoice> per_layer;
};

struct MsaTable {
    int arf_bins = 16;
    double arf_lo = 1.0;
    double arf_hi = 27.0;
    std::vector<MsaLayerCurve> layers;
    std::vector<MsaRow> rows;

    u32 bin_for(double arf, bool* clamped = nullptr) const;
    double bin_center(u32 bin) const;
};

struct NetworkLayer {
    ConvSpec conv;
    std::optional<u32> encoder_ref;  // output set := input set of that layer
};

// Text descriptor, one layer per line: kind k stride C N [encoder=<layer>]
std::vector<NetworkLayer> parse_network(std::istream& is);
void write_network(std::ostream& os, const std::vector<NetworkLayer>& network);

// sets[l] is layer l's input; sets[L] the final output. Channel counts are
// coerced to each layer's expectation (features zeroed on mismatch) so shape
// propagation works on bare geometry.
std::vector<ActiveVoxelSet> propagate_sets(const ActiveVoxelSet& cloud,
                                           const std::vector<NetworkLayer>& network);

// Pair count without materializing metadata (the cheap first pass).
u64 count_pairs(const ActiveVoxelSet& inputs, const ActiveVoxelSet& outputs,
                const ConvSpec& conv);

struct MsaBuildConfig {
    u64 budget = 16384;
    TileMode mode = TileMode::Rst;
    int arf_bins = 16;
};

MsaTable build_msa_table(const std::vector<ActiveVoxelSet>& clouds,
                         const std::vector<NetworkLayer>& network, const MsaBuildConfig& cfg);

// Synthetic uniform attributes for one table row: unique factors from the
// cross-cloud curve, pair factors pinned to the bin's ARF value.
SparsityAttributes msa_bin_attributes(const MsaTable& table, u32 layer, double arf);

void write_msa_table(std::ostream& os, const MsaTable& table);
MsaTable read_msa_table(std::istream& is);

// --- on-the-fly selection ---------------------------------------------------

struct DmaEntry {
    u32 tile = 0;
    bool block = false;  // one block transfer for the ordered datatype
    u64 source = 0;      // word offset in the outer level
    u64 destination = 0; // word offset in the tile buffer
    u32 words = 0;
};

struct DmaTable {
    std::vector<DmaEntry> entries;
    u64 total_words() const;
};

void write_dma_table(std::ostream& os, const DmaTable& table);

struct OtfLayerPlan {
    double arf = 1.0;
    u32 bin = 0;
    bool clamped = false;
    DataflowChoice choice;
    LayerShape shape;
    std::vector<u32> anchor_order;
    TiledMetadata metadata;
    DmaTable dma;
};

struct OtfPlan {
    std::vector<OtfLayerPlan> layers;
    std::vector<std::string> warnings;
};

// Cheap pass: per-layer pair counts only, nearest table row, locality order
// for the anchors, tiled metadata at the chosen region size, DMA tables with
// one block entry per tile for anchors and per-voxel entries for gathers.
OtfPlan otf_select(const ActiveVoxelSet& cloud, const MsaTable& table,
                   const std::vector<NetworkLayer>& network, bool apply_soar = true);

}  // namespace voxsparse
