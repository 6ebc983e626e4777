#pragma once

#include <string>

#include "voxsparse/voxgrid.hpp"

namespace voxsparse {

// Deterministic test geometry. Same spec + seed always yields the same cloud,
// voxels in raster order.
enum class CloudKind {
    SolidBlock,     // filled cube, extent^3 voxels
    SurfaceShell,   // cube boundary, extent^3 - (extent-2)^3 voxels
    WavySheet,      // single-voxel-thick height field over an extent x extent base
    ThinStrips,     // parallel lines along z, spaced so they never touch
    UniformRandom,  // `count` distinct voxels drawn uniformly from extent^3
};

std::string to_string(CloudKind kind);
CloudKind cloud_kind_from_string(const std::string& name);

struct SynthSpec {
    CloudKind kind = CloudKind::SolidBlock;
    u32 extent = 8;
    u32 count = 0;  // UniformRandom voxel budget; 0 picks extent^3 / 8
    u32 strips = 8;
    u32 channels = 4;
    u32 grid_extent = kDefaultGridExtent;
    u64 seed = 1;
    double amplitude = 3.0;
    double wavelength = 9.0;

    void validate() const;
};

ActiveVoxelSet generate_cloud(const SynthSpec& spec);

}  // namespace voxsparse
