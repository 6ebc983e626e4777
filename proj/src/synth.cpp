#include "voxsparse/synth.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <tuple>
#include <unordered_set>

namespace voxsparse {

std::string to_string(CloudKind kind) {
    switch (kind) {
        case CloudKind::SolidBlock: return "solid-block";
        case CloudKind::SurfaceShell: return "surface-shell";
        case CloudKind::WavySheet: return "wavy-sheet";
        case CloudKind::ThinStrips: return "thin-strips";
        case CloudKind::UniformRandom: return "uniform-random";
    }
    throw Error("bad cloud kind");
}

CloudKind cloud_kind_from_string(const std::string& name) {
    if (name == "solid-block") return CloudKind::SolidBlock;
    if (name == "surface-shell") return CloudKind::SurfaceShell;
    if (name == "wavy-sheet") return CloudKind::WavySheet;
    if (name == "thin-strips") return CloudKind::ThinStrips;
    if (name == "uniform-random") return CloudKind::UniformRandom;
    throw Error("unknown cloud kind '" + name + "'");
}

void SynthSpec::validate() const {
    if (extent == 0) throw Error("cloud extent must be positive");
    if (channels == 0) throw Error("cloud needs at least one channel");
    if (kind == CloudKind::UniformRandom) {
        u64 capacity = static_cast<u64>(extent) * extent * extent;
        u64 want = count ? count : capacity / 8;
        if (want == 0 || want > capacity)
            throw Error("uniform-random count must be in [1, extent^3]");
    }
    if (kind == CloudKind::ThinStrips && strips == 0)
        throw Error("thin-strips needs at least one strip");
    if (kind == CloudKind::WavySheet && wavelength <= 0.0)
        throw Error("wavy-sheet wavelength must be positive");
}

ActiveVoxelSet generate_cloud(const SynthSpec& spec) {
    spec.validate();
    std::vector<Voxel> voxels;

    switch (spec.kind) {
        case CloudKind::SolidBlock:
            for (u32 z = 0; z < spec.extent; ++z)
                for (u32 y = 0; y < spec.extent; ++y)
                    for (u32 x = 0; x < spec.extent; ++x) voxels.push_back({x, y, z});
            break;
        case CloudKind::SurfaceShell:
            for (u32 z = 0; z < spec.extent; ++z)
                for (u32 y = 0; y < spec.extent; ++y)
                    for (u32 x = 0; x < spec.extent; ++x) {
                        bool edge = x == 0 || y == 0 || z == 0 || x == spec.extent - 1 ||
                                    y == spec.extent - 1 || z == spec.extent - 1;
                        if (edge) voxels.push_back({x, y, z});
                    }
            break;
        case CloudKind::WavySheet: {
            const double two_pi = 6.283185307179586;
            u32 lift = static_cast<u32>(std::ceil(2.0 * std::abs(spec.amplitude))) + 1;
            for (u32 y = 0; y < spec.extent; ++y)
                for (u32 x = 0; x < spec.extent; ++x) {
                    double h = spec.amplitude * (std::sin(two_pi * x / spec.wavelength) +
                                                 std::cos(two_pi * y / spec.wavelength));
                    u32 z = static_cast<u32>(static_cast<i64>(std::llround(h)) + lift);
                    voxels.push_back({x, y, z});
                }
            break;
        }
        case CloudKind::ThinStrips:
            // spacing 3 keeps strips outside each other's 3^3 neighborhoods
            for (u32 s = 0; s < spec.strips; ++s)
                for (u32 z = 0; z < spec.extent; ++z) voxels.push_back({3 * s, 0, z});
            break;
        case CloudKind::UniformRandom: {
            u64 capacity = static_cast<u64>(spec.extent) * spec.extent * spec.extent;
            u64 want = spec.count ? spec.count : capacity / 8;
            std::mt19937_64 rng(spec.seed * 0x9e3779b97f4a7c15ULL + 0x2545f4914f6cdd1dULL);
            std::uniform_int_distribution<u32> coord(0, spec.extent - 1);
            std::unordered_set<u64> seen;
            while (voxels.size() < want) {
                Voxel v{coord(rng), coord(rng), coord(rng)};
                u64 key = (static_cast<u64>(v.z) << 42) | (static_cast<u64>(v.y) << 21) | v.x;
                if (seen.insert(key).second) voxels.push_back(v);
            }
            break;
        }
    }

    std::sort(voxels.begin(), voxels.end(), [](const Voxel& a, const Voxel& b) {
        return std::tie(a.z, a.y, a.x) < std::tie(b.z, b.y, b.x);
    });

    ActiveVoxelSet set;
    set.voxels = std::move(voxels);
    set.channels = spec.channels;
    set.grid_extent = spec.grid_extent;
    set.order = VoxelOrder::Raster;
    std::mt19937_64 rng(spec.seed);
    std::uniform_real_distribution<float> dist(-1.0f, 1.0f);
    set.features.resize(set.voxels.size() * spec.channels);
    for (float& f : set.features) f = dist(rng);
    set.validate();
    return set;
}

}  // namespace voxsparse
