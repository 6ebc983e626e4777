#include "voxsparse/sparseconv.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace voxsparse {

WeightTensor WeightTensor::zeros(int k, u32 c, u32 n) {
    WeightTensor w;
    w.k = k;
    w.in_channels = c;
    w.out_channels = n;
    w.data.assign(static_cast<size_t>(k) * k * k * c * n, 0.0f);
    return w;
}

WeightTensor WeightTensor::random(int k, u32 c, u32 n, u64 seed) {
    WeightTensor w = zeros(k, c, n);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<float> dist(-1.0f, 1.0f);
    for (auto& v : w.data) v = dist(rng);
    return w;
}

void WeightTensor::validate(const ConvSpec& conv) const {
    if (k != conv.k || in_channels != conv.in_channels || out_channels != conv.out_channels)
        throw Error("weight tensor shape does not match conv spec");
    if (data.size() != static_cast<size_t>(k) * k * k * in_channels * out_channels)
        throw Error("weight tensor storage size mismatch");
}

void sparse_conv_apply(const CoirMetadata& meta, const ActiveVoxelSet& inputs,
                       const WeightTensor& weights, ActiveVoxelSet& outputs) {
    const ConvSpec& conv = meta.conv;
    weights.validate(conv);
    if (inputs.channels != conv.in_channels) throw Error("input channel mismatch");
    if (outputs.channels != conv.out_channels) throw Error("output channel mismatch");
    const u32 C = conv.in_channels, N = conv.out_channels;
    const int kv = conv.kernel_volume();

    if (meta.flavor == CoirFlavor::Cirf) {
        if (meta.entries.size() != outputs.size()) throw Error("metadata anchor count != output count");
        std::vector<double> acc(N);
        for (const auto& e : meta.entries) {
            std::fill(acc.begin(), acc.end(), 0.0);
            size_t j = 0;
            for (int widx = 0; widx < kv; ++widx) {
                if (!e.mask_bit(widx)) continue;
                const float* in_row = inputs.feature_row(e.partners[j]);
                for (u32 c = 0; c < C; ++c) {
                    double x = in_row[c];
                    for (u32 n = 0; n < N; ++n) acc[n] += x * weights.at(widx, c, n);
                }
                ++j;
            }
            float* out_row = outputs.feature_row(e.anchor);
            for (u32 n = 0; n < N; ++n) out_row[n] = static_cast<float>(acc[n]);
        }
    } else {
        if (meta.entries.size() != inputs.size()) throw Error("metadata anchor count != input count");
        // scatter order: accumulate the whole output map in double, then store
        std::vector<double> acc(static_cast<size_t>(outputs.size()) * N, 0.0);
        for (const auto& e : meta.entries) {
            const float* in_row = inputs.feature_row(e.anchor);
            size_t j = 0;
            for (int widx = 0; widx < kv; ++widx) {
                if (!e.mask_bit(widx)) continue;
                double* out_acc = acc.data() + static_cast<size_t>(e.partners[j]) * N;
                for (u32 c = 0; c < C; ++c) {
                    double x = in_row[c];
                    for (u32 n = 0; n < N; ++n) out_acc[n] += x * weights.at(widx, c, n);
                }
                ++j;
            }
        }
        for (u32 o = 0; o < outputs.size(); ++o) {
            float* row = outputs.feature_row(o);
            for (u32 n = 0; n < N; ++n) row[n] = static_cast<float>(acc[static_cast<size_t>(o) * N + n]);
        }
    }
}

ActiveVoxelSet sparse_conv(const ActiveVoxelSet& inputs, const ConvSpec& conv,
                           const WeightTensor& weights, CoirFlavor flavor,
                           const ActiveVoxelSet* encoder_set) {
    ActiveVoxelSet outputs = derive_output_set(inputs, conv, encoder_set);
    CoirMetadata meta = build_coir(inputs, outputs, conv, flavor);
    sparse_conv_apply(meta, inputs, weights, outputs);
    return outputs;
}

u64 Rulebook::total_pairs() const {
    u64 n = 0;
    for (const auto& lst : pairs_by_weight) n += lst.size();
    return n;
}

Rulebook build_rulebook(const ActiveVoxelSet& inputs, const ActiveVoxelSet& outputs,
                        const ConvSpec& conv) {
    conv.validate();
    Rulebook rb;
    rb.k = conv.k;
    rb.pairs_by_weight.assign(conv.kernel_volume(), {});
    SpatialHash out_hash(outputs);
    int h = conv.k / 2;

    for (u32 i = 0; i < inputs.size(); ++i) {
        const Voxel& v = inputs.voxels[i];
        int widx = 0;
        for (int dz = -h; dz <= h; ++dz)
            for (int dy = -h; dy <= h; ++dy)
                for (int dx = -h; dx <= h; ++dx, ++widx) {
                    i64 ox, oy, oz;
                    switch (conv.kind) {
                        case ConvKind::Submanifold:
                            ox = static_cast<i64>(v.x) - dx;
                            oy = static_cast<i64>(v.y) - dy;
                            oz = static_cast<i64>(v.z) - dz;
                            break;
                        case ConvKind::Strided: {
                            i64 tx = static_cast<i64>(v.x) - dx;
                            i64 ty = static_cast<i64>(v.y) - dy;
                            i64 tz = static_cast<i64>(v.z) - dz;
                            if ((tx & 1) || (ty & 1) || (tz & 1)) continue;
                            ox = tx / 2;
                            oy = ty / 2;
                            oz = tz / 2;
                            break;
                        }
                        case ConvKind::Transposed:
                            ox = 2 * static_cast<i64>(v.x) + dx;
                            oy = 2 * static_cast<i64>(v.y) + dy;
                            oz = 2 * static_cast<i64>(v.z) + dz;
                            break;
                        default:
                            continue;
                    }
                    auto hit = out_hash.lookup(ox, oy, oz);
                    if (hit) rb.pairs_by_weight[widx].push_back({i, *hit});
                }
    }
    return rb;
}

ActiveVoxelSet gather_gemm_scatter(const ActiveVoxelSet& inputs, const ConvSpec& conv,
                                   const WeightTensor& weights,
                                   const ActiveVoxelSet* encoder_set) {
    weights.validate(conv);
    ActiveVoxelSet outputs = derive_output_set(inputs, conv, encoder_set);
    Rulebook rb = build_rulebook(inputs, outputs, conv);
    const u32 C = conv.in_channels, N = conv.out_channels;

    std::vector<double> acc(static_cast<size_t>(outputs.size()) * N, 0.0);
    for (int widx = 0; widx < conv.kernel_volume(); ++widx) {
        const auto& lst = rb.pairs_by_weight[widx];
        if (lst.empty()) continue;
        // gather
        std::vector<float> gathered(lst.size() * C);
        for (size_t p = 0; p < lst.size(); ++p) {
            const float* row = inputs.feature_row(lst[p].first);
            std::copy(row, row + C, gathered.begin() + p * C);
        }
        // one weight plane GEMM, scatter-add
        for (size_t p = 0; p < lst.size(); ++p) {
            double* out_acc = acc.data() + static_cast<size_t>(lst[p].second) * N;
            const float* row = gathered.data() + p * C;
            for (u32 c = 0; c < C; ++c) {
                double x = row[c];
                for (u32 n = 0; n < N; ++n) out_acc[n] += x * weights.at(widx, c, n);
            }
        }
    }
    for (u32 o = 0; o < outputs.size(); ++o) {
        float* row = outputs.feature_row(o);
        for (u32 n = 0; n < N; ++n) row[n] = static_cast<float>(acc[static_cast<size_t>(o) * N + n]);
    }
    return outputs;
}

ActiveVoxelSet dense_oracle(const ActiveVoxelSet& inputs, const ConvSpec& conv,
                            const WeightTensor& weights,
                            const ActiveVoxelSet* encoder_set) {
    weights.validate(conv);
    inputs.validate();
    if (inputs.grid_extent > 64)
        throw Error("dense reference limited to small grids");
    ActiveVoxelSet outputs = derive_output_set(inputs, conv, encoder_set);

    const u32 C = conv.in_channels, N = conv.out_channels;
    const u64 ext = inputs.grid_extent;
    std::vector<float> dense(ext * ext * ext * C, 0.0f);
    for (u32 i = 0; i < inputs.size(); ++i) {
        const Voxel& v = inputs.voxels[i];
        u64 cell = (static_cast<u64>(v.z) * ext + v.y) * ext + v.x;
        const float* row = inputs.feature_row(i);
        std::copy(row, row + C, dense.begin() + cell * C);
    }

    int h = conv.k / 2;
    for (u32 o = 0; o < outputs.size(); ++o) {
        const Voxel& v = outputs.voxels[o];
        std::vector<double> acc(N, 0.0);
        int widx = 0;
        for (int dz = -h; dz <= h; ++dz)
            for (int dy = -h; dy <= h; ++dy)
                for (int dx = -h; dx <= h; ++dx, ++widx) {
                    i64 ix, iy, iz;
                    switch (conv.kind) {
                        case ConvKind::Submanifold:
                            ix = static_cast<i64>(v.x) + dx;
                            iy = static_cast<i64>(v.y) + dy;
                            iz = static_cast<i64>(v.z) + dz;
                            break;
                        case ConvKind::Strided:
                            ix = 2 * static_cast<i64>(v.x) + dx;
                            iy = 2 * static_cast<i64>(v.y) + dy;
                            iz = 2 * static_cast<i64>(v.z) + dz;
                            break;
                        case ConvKind::Transposed: {
                            i64 tx = static_cast<i64>(v.x) - dx;
                            i64 ty = static_cast<i64>(v.y) - dy;
                            i64 tz = static_cast<i64>(v.z) - dz;
                            if ((tx & 1) || (ty & 1) || (tz & 1)) continue;
                            ix = tx / 2;
                            iy = ty / 2;
                            iz = tz / 2;
                            break;
                        }
                        default:
                            continue;
                    }
                    if (ix < 0 || iy < 0 || iz < 0 || ix >= static_cast<i64>(ext) ||
                        iy >= static_cast<i64>(ext) || iz >= static_cast<i64>(ext))
                        continue;
                    u64 cell = (static_cast<u64>(iz) * ext + static_cast<u64>(iy)) * ext +
                               static_cast<u64>(ix);
                    const float* row = dense.data() + cell * C;
                    for (u32 c = 0; c < C; ++c) {
                        double x = row[c];
                        for (u32 n = 0; n < N; ++n) acc[n] += x * weights.at(widx, c, n);
                    }
                }
        float* out_row = outputs.feature_row(o);
        for (u32 n = 0; n < N; ++n) out_row[n] = static_cast<float>(acc[n]);
    }
    return outputs;
}

double max_rel_diff(const ActiveVoxelSet& a, const ActiveVoxelSet& b) {
    if (a.size() != b.size() || a.channels != b.channels)
        throw Error("feature map shapes differ");
    for (u32 i = 0; i < a.size(); ++i) {
        if (a.voxels[i].x != b.voxels[i].x || a.voxels[i].y != b.voxels[i].y ||
            a.voxels[i].z != b.voxels[i].z)
            throw Error("voxel sets differ at index " + std::to_string(i));
    }
    double worst = 0.0;
    for (size_t i = 0; i < a.features.size(); ++i) {
        double x = a.features[i], y = b.features[i];
        double denom = std::max({std::abs(x), std::abs(y), 1.0});
        worst = std::max(worst, std::abs(x - y) / denom);
    }
    return worst;
}

}  // namespace voxsparse
