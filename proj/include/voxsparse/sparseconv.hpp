#pragma once

#include <vector>

#include "voxsparse/coir.hpp"

namespace voxsparse {

// Dense weight bank for one layer, layout [weight_index][in_channel][out_channel].
struct WeightTensor {
    int k = 3;
    u32 in_channels = 0;
    u32 out_channels = 0;
    std::vector<float> data;

    static WeightTensor zeros(int k, u32 c, u32 n);
    static WeightTensor random(int k, u32 c, u32 n, u64 seed);

    float& at(int widx, u32 c, u32 n) {
        return data[(static_cast<size_t>(widx) * in_channels + c) * out_channels + n];
    }
    float at(int widx, u32 c, u32 n) const {
        return data[(static_cast<size_t>(widx) * in_channels + c) * out_channels + n];
    }
    void validate(const ConvSpec& conv) const;
};

// Anchor-major execution over compressed neighborhood metadata. Output-anchored
// metadata gathers receptive fields and accumulates locally; input-anchored
// metadata broadcasts each input row and scatter-adds into the response field.
// Both orders produce identical sums up to float rounding (accumulation is in
// double, stored once per output element for the gather order).
ActiveVoxelSet sparse_conv(const ActiveVoxelSet& inputs, const ConvSpec& conv,
                           const WeightTensor& weights, CoirFlavor flavor,
                           const ActiveVoxelSet* encoder_set = nullptr);

// Runs on an already-built metadata object; outputs shell must match the one
// the metadata was built against.
void sparse_conv_apply(const CoirMetadata& meta, const ActiveVoxelSet& inputs,
                       const WeightTensor& weights, ActiveVoxelSet& outputs);

// Weight-wise pair listing: for each kernel offset, the (input,output) index
// pairs it connects. Two words per pair when serialized.
struct Rulebook {
    int k = 3;
    std::vector<std::vector<std::pair<u32, u32>>> pairs_by_weight;  // k^3 lists

    u64 total_pairs() const;
    u64 words() const { return 2 * total_pairs(); }
};

Rulebook build_rulebook(const ActiveVoxelSet& inputs, const ActiveVoxelSet& outputs,
                        const ConvSpec& conv);

// Gather rows per weight, multiply by that weight plane, scatter-add.
ActiveVoxelSet gather_gemm_scatter(const ActiveVoxelSet& inputs, const ConvSpec& conv,
                                   const WeightTensor& weights,
                                   const ActiveVoxelSet* encoder_set = nullptr);

// Dense reference: materializes the input grid, slides the kernel with the
// appropriate stride arithmetic, and masks the result to the active output
// set. No hashing or metadata involved.
ActiveVoxelSet dense_oracle(const ActiveVoxelSet& inputs, const ConvSpec& conv,
                            const WeightTensor& weights,
                            const ActiveVoxelSet* encoder_set = nullptr);

// Max relative elementwise difference between two feature maps over the same
// voxel set (voxels must match exactly).
double max_rel_diff(const ActiveVoxelSet& a, const ActiveVoxelSet& b);

}  // namespace voxsparse
