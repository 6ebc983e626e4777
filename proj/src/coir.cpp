#include "voxsparse/coir.hpp"

#include <algorithm>
#include <bit>
#include <istream>
#include <ostream>
#include <string>
#include <unordered_set>

namespace voxsparse {

void ConvSpec::validate() const {
    if (k < 1 || k % 2 == 0) throw Error("conv kernel size must be odd and positive, got " + std::to_string(k));
    int want_stride = (kind == ConvKind::Submanifold) ? 1 : 2;
    if (stride != want_stride)
        throw Error(std::string("conv kind ") + to_string(kind) + " requires stride " +
                    std::to_string(want_stride) + ", got " + std::to_string(stride));
    if (in_channels == 0 || out_channels == 0) throw Error("conv channel counts must be positive");
}

const char* to_string(ConvKind kind) {
    switch (kind) {
        case ConvKind::Submanifold: return "subm";
        case ConvKind::Strided: return "strided";
        case ConvKind::Transposed: return "transposed";
    }
    return "?";
}

ConvKind conv_kind_from_string(const std::string& s) {
    if (s == "subm" || s == "submanifold") return ConvKind::Submanifold;
    if (s == "strided" || s == "conv") return ConvKind::Strided;
    if (s == "transposed" || s == "deconv") return ConvKind::Transposed;
    throw Error("unknown conv kind '" + s + "'");
}

const char* to_string(CoirFlavor f) { return f == CoirFlavor::Corf ? "corf" : "cirf"; }

u64 CoirMetadata::total_pairs() const {
    u64 n = 0;
    for (const auto& e : entries) n += e.pair_count();
    return n;
}

u64 CoirMetadata::words() const {
    u64 per_entry_fixed = 1 + static_cast<u64>(conv.mask_words());
    return entries.size() * per_entry_fixed + total_pairs();
}

namespace {

ActiveVoxelSet make_output_shell(std::vector<Voxel> voxels, u32 out_channels, u32 extent) {
    ActiveVoxelSet out;
    out.voxels = std::move(voxels);
    out.channels = out_channels;
    out.grid_extent = extent;
    out.features.assign(static_cast<size_t>(out.voxels.size()) * out_channels, 0.0f);
    out.order = VoxelOrder::Raster;
    return out;
}

}  // namespace

ActiveVoxelSet derive_output_set(const ActiveVoxelSet& inputs, const ConvSpec& conv,
                                 const ActiveVoxelSet* encoder_set) {
    conv.validate();
    inputs.validate();
    if (conv.in_channels != inputs.channels)
        throw Error("conv expects " + std::to_string(conv.in_channels) + " input channels, set has " +
                    std::to_string(inputs.channels));

    if (conv.kind == ConvKind::Submanifold) {
        auto out = make_output_shell(inputs.voxels, conv.out_channels, inputs.grid_extent);
        out.order = inputs.order;
        return out;
    }

    if (conv.kind == ConvKind::Transposed) {
        if (!encoder_set) throw Error("transposed conv requires the encoder output set");
        auto out = make_output_shell(encoder_set->voxels, conv.out_channels, encoder_set->grid_extent);
        out.order = encoder_set->order;
        return out;
    }

    // Strided: a coarse voxel is active when any fine voxel falls inside its
    // receptive window. Enumerated from the input side to stay linear in the
    // active count.
    u32 out_extent = static_cast<u32>(ceil_div(inputs.grid_extent, 2));
    int h = conv.k / 2;
    std::unordered_set<u64> seen;
    std::vector<Voxel> outs;
    for (const auto& v : inputs.voxels) {
        for (int dz = -h; dz <= h; ++dz)
            for (int dy = -h; dy <= h; ++dy)
                for (int dx = -h; dx <= h; ++dx) {
                    i64 ox2 = static_cast<i64>(v.x) - dx;
                    i64 oy2 = static_cast<i64>(v.y) - dy;
                    i64 oz2 = static_cast<i64>(v.z) - dz;
                    if ((ox2 & 1) || (oy2 & 1) || (oz2 & 1)) continue;
                    i64 ox = ox2 / 2, oy = oy2 / 2, oz = oz2 / 2;
                    i64 lim = static_cast<i64>(out_extent);
                    if (ox < 0 || oy < 0 || oz < 0 || ox >= lim || oy >= lim || oz >= lim) continue;
                    u64 key = (static_cast<u64>(oz) * out_extent + static_cast<u64>(oy)) * out_extent +
                              static_cast<u64>(ox);
                    if (seen.insert(key).second)
                        outs.push_back({static_cast<u32>(ox), static_cast<u32>(oy), static_cast<u32>(oz)});
                }
    }
    std::sort(outs.begin(), outs.end(), [](const Voxel& a, const Voxel& b) {
        if (a.z != b.z) return a.z < b.z;
        if (a.y != b.y) return a.y < b.y;
        return a.x < b.x;
    });
    return make_output_shell(std::move(outs), conv.out_channels, out_extent);
}

CoirMetadata build_coir(const ActiveVoxelSet& inputs, const ActiveVoxelSet& outputs,
                        const ConvSpec& conv, CoirFlavor flavor) {
    conv.validate();
    CoirMetadata meta;
    meta.flavor = flavor;
    meta.conv = conv;

    const bool anchor_is_output = (flavor == CoirFlavor::Cirf);
    const ActiveVoxelSet& anchors = anchor_is_output ? outputs : inputs;
    const ActiveVoxelSet& partners = anchor_is_output ? inputs : outputs;
    SpatialHash partner_hash(partners);

    int h = conv.k / 2;
    int mask_words = conv.mask_words();
    meta.entries.reserve(anchors.size());

    for (u32 a = 0; a < anchors.size(); ++a) {
        const Voxel& v = anchors.voxels[a];
        CoirEntry e;
        e.anchor = a;
        e.mask.assign(mask_words, 0);
        int widx = 0;
        for (int dz = -h; dz <= h; ++dz)
            for (int dy = -h; dy <= h; ++dy)
                for (int dx = -h; dx <= h; ++dx, ++widx) {
                    i64 px, py, pz;
                    bool valid = true;
                    switch (conv.kind) {
                        case ConvKind::Submanifold:
                            // pair offset is input - output in either direction
                            if (anchor_is_output) {
                                px = static_cast<i64>(v.x) + dx;
                                py = static_cast<i64>(v.y) + dy;
                                pz = static_cast<i64>(v.z) + dz;
                            } else {
                                px = static_cast<i64>(v.x) - dx;
                                py = static_cast<i64>(v.y) - dy;
                                pz = static_cast<i64>(v.z) - dz;
                            }
                            break;
                        case ConvKind::Strided:
                            // input = 2*output + offset
                            if (anchor_is_output) {
                                px = 2 * static_cast<i64>(v.x) + dx;
                                py = 2 * static_cast<i64>(v.y) + dy;
                                pz = 2 * static_cast<i64>(v.z) + dz;
                            } else {
                                i64 tx = static_cast<i64>(v.x) - dx;
                                i64 ty = static_cast<i64>(v.y) - dy;
                                i64 tz = static_cast<i64>(v.z) - dz;
                                valid = !((tx & 1) || (ty & 1) || (tz & 1));
                                px = tx / 2;
                                py = ty / 2;
                                pz = tz / 2;
                            }
                            break;
                        case ConvKind::Transposed:
                            // output = 2*input + offset
                            if (anchor_is_output) {
                                i64 tx = static_cast<i64>(v.x) - dx;
                                i64 ty = static_cast<i64>(v.y) - dy;
                                i64 tz = static_cast<i64>(v.z) - dz;
                                valid = !((tx & 1) || (ty & 1) || (tz & 1));
                                px = tx / 2;
                                py = ty / 2;
                                pz = tz / 2;
                            } else {
                                px = 2 * static_cast<i64>(v.x) + dx;
                                py = 2 * static_cast<i64>(v.y) + dy;
                                pz = 2 * static_cast<i64>(v.z) + dz;
                            }
                            break;
                        default:
                            valid = false;
                            px = py = pz = 0;
                    }
                    if (!valid) continue;
                    auto hit = partner_hash.lookup(px, py, pz);
                    if (!hit) continue;
                    e.partners.push_back(*hit);
                    e.mask[widx / 32] |= (1u << (widx % 32));
                }
        meta.entries.push_back(std::move(e));
    }
    return meta;
}

MetadataSizeReport metadata_size(const CoirMetadata& meta) {
    MetadataSizeReport r;
    r.pairs = meta.total_pairs();
    r.coir_words = meta.words();
    r.rulebook_words = 2 * r.pairs;
    return r;
}

u64 TiledMetadata::total_pairs() const {
    u64 n = 0;
    for (const auto& b : blocks) n += b.pairs;
    return n;
}

TiledMetadata tile_metadata(const CoirMetadata& meta, u32 anchors_per_tile,
                            const std::vector<u32>& order) {
    if (anchors_per_tile == 0) throw Error("anchors_per_tile must be positive");
    if (order.size() != meta.entries.size()) throw Error("anchor order length mismatch");

    TiledMetadata tiled;
    tiled.flavor = meta.flavor;
    tiled.anchors_per_tile = anchors_per_tile;
    u64 per_entry_fixed = 1 + static_cast<u64>(meta.conv.mask_words());

    for (size_t base = 0; base < order.size(); base += anchors_per_tile) {
        size_t end = std::min(order.size(), base + anchors_per_tile);
        MetadataBlock blk;
        std::unordered_set<u32> uniq;
        for (size_t i = base; i < end; ++i) {
            u32 a = order[i];
            if (a >= meta.entries.size()) throw Error("anchor order index out of range");
            const CoirEntry& e = meta.entries[a];
            blk.pairs += e.pair_count();
            blk.words += per_entry_fixed + e.pair_count();
            for (u32 p : e.partners) uniq.insert(p);
            blk.entries.push_back(e);
        }
        blk.anchor_count = static_cast<u32>(blk.entries.size());
        blk.unique_partners = static_cast<u32>(uniq.size());
        tiled.blocks.push_back(std::move(blk));
    }
    return tiled;
}

namespace {

template <typename T>
void put(std::ostream& os, T v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw Error("truncated metadata stream");
    return v;
}

}  // namespace

void write_tiled_metadata(std::ostream& os, const TiledMetadata& tiled) {
    put<u32>(os, static_cast<u32>(tiled.blocks.size()));
    put<u32>(os, tiled.anchors_per_tile);
    for (const auto& blk : tiled.blocks) {
        put<u32>(os, blk.anchor_count);
        put<u64>(os, blk.words);
        for (const auto& e : blk.entries) {
            put<u32>(os, e.anchor);
            for (u32 w : e.mask) put<u32>(os, w);
            for (u32 p : e.partners) put<u32>(os, p);
        }
    }
    if (!os) throw Error("metadata write failed");
}

TiledMetadata read_tiled_metadata(std::istream& is, const ConvSpec& conv, CoirFlavor flavor) {
    TiledMetadata tiled;
    tiled.flavor = flavor;
    u32 nblocks = get<u32>(is);
    tiled.anchors_per_tile = get<u32>(is);
    int mask_words = conv.mask_words();
    u64 per_entry_fixed = 1 + static_cast<u64>(mask_words);

    for (u32 b = 0; b < nblocks; ++b) {
        MetadataBlock blk;
        blk.anchor_count = get<u32>(is);
        u64 want_words = get<u64>(is);
        std::unordered_set<u32> uniq;
        for (u32 i = 0; i < blk.anchor_count; ++i) {
            CoirEntry e;
            e.anchor = get<u32>(is);
            e.mask.resize(mask_words);
            int pairs = 0;
            for (int w = 0; w < mask_words; ++w) {
                e.mask[w] = get<u32>(is);
                pairs += std::popcount(e.mask[w]);
            }
            e.partners.resize(pairs);
            for (int p = 0; p < pairs; ++p) {
                e.partners[p] = get<u32>(is);
                uniq.insert(e.partners[p]);
            }
            blk.pairs += pairs;
            blk.words += per_entry_fixed + pairs;
            blk.entries.push_back(std::move(e));
        }
        if (blk.words != want_words) throw Error("metadata block word count mismatch");
        blk.unique_partners = static_cast<u32>(uniq.size());
        tiled.blocks.push_back(std::move(blk));
    }
    return tiled;
}

}  // namespace voxsparse
