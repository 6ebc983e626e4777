#pragma once

#include <iosfwd>
#include <vector>

#include "voxsparse/voxgrid.hpp"

namespace voxsparse {

enum class ConvKind { Submanifold, Strided, Transposed };

struct ConvSpec {
    ConvKind kind = ConvKind::Submanifold;
    int k = 3;
    int stride = 1;  // 1 for submanifold, 2 for strided/transposed
    u32 in_channels = 0;
    u32 out_channels = 0;

    int kernel_volume() const { return k * k * k; }
    int mask_words() const { return static_cast<int>(ceil_div(static_cast<u64>(kernel_volume()), 32)); }
    void validate() const;
};

const char* to_string(ConvKind kind);
ConvKind conv_kind_from_string(const std::string& s);

enum class CoirFlavor { Corf, Cirf };
const char* to_string(CoirFlavor f);

// One compressed neighborhood record. The anchor is an input point for CORF
// (partners are its response field in output space) or an output point for
// CIRF (partners are its receptive field in input space). Partner j
// corresponds to the j-th set bit of the mask, and the bit position is the
// weight index of the pair.
struct CoirEntry {
    u32 anchor = 0;
    std::vector<u32> partners;
    std::vector<u32> mask;  // ceil(k^3/32) words, bit order per offset_to_weight_index

    u32 pair_count() const { return static_cast<u32>(partners.size()); }
    bool mask_bit(int widx) const { return (mask[widx / 32] >> (widx % 32)) & 1u; }
};

struct CoirMetadata {
    CoirFlavor flavor = CoirFlavor::Cirf;
    ConvSpec conv;
    std::vector<CoirEntry> entries;  // one per anchor, anchor-space order

    u64 total_pairs() const;
    u64 words() const;  // per entry: 1 header + mask words + partner indices
};

// Active output set of a layer. Submanifold layers preserve the input set;
// strided layers activate every coarse voxel whose receptive window covers an
// active input; transposed layers restore the recorded encoder set.
ActiveVoxelSet derive_output_set(const ActiveVoxelSet& inputs, const ConvSpec& conv,
                                 const ActiveVoxelSet* encoder_set = nullptr);

CoirMetadata build_coir(const ActiveVoxelSet& inputs, const ActiveVoxelSet& outputs,
                        const ConvSpec& conv, CoirFlavor flavor);

struct MetadataSizeReport {
    u64 coir_words = 0;
    u64 rulebook_words = 0;  // weight-wise (input,output) listing, 2 words per pair
    u64 pairs = 0;
};

MetadataSizeReport metadata_size(const CoirMetadata& meta);

// One tile's worth of metadata plus the datatype split the DMA tables need:
// anchors stream in order (block transfer), partners are gathered per voxel.
struct MetadataBlock {
    std::vector<CoirEntry> entries;
    u32 anchor_count = 0;
    u32 unique_partners = 0;
    u64 pairs = 0;
    u64 words = 0;
};

struct TiledMetadata {
    CoirFlavor flavor = CoirFlavor::Cirf;
    u32 anchors_per_tile = 0;
    std::vector<MetadataBlock> blocks;

    u64 total_pairs() const;
};

// Partition entries into blocks of anchors_per_tile consecutive anchors in
// the given anchor order. `order` must be a permutation of the anchor space.
TiledMetadata tile_metadata(const CoirMetadata& meta, u32 anchors_per_tile,
                            const std::vector<u32>& order);

// Little-endian block serialization. Per block: header (anchor count u32,
// word count u64), then per entry: anchor u32, mask words, partner indices.
void write_tiled_metadata(std::ostream& os, const TiledMetadata& tiled);
TiledMetadata read_tiled_metadata(std::istream& is, const ConvSpec& conv, CoirFlavor flavor);

}  // namespace voxsparse
