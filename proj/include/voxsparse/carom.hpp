#pragma once

#include <string>
#include <vector>

#include "voxsparse/spade.hpp"

namespace voxsparse {

struct MemoryLevel {
    std::string name;
    u64 capacity = 0;     // words usable for one working set
    double bandwidth = 0; // words/cycle to the enclosing level
    double compute = 0;   // MACs/cycle available against this working set
    u32 instances = 1;

    void validate() const;
};

// Transfer volume sustainable while the working set computes (words).
double da_threshold(const MemoryLevel& level, double ops);

// MAC count of a working set with the given average neighbor count.
double ops_at_level(u64 anchors, u64 n, u64 c, double sa_pairs);

struct LevelChoice {
    std::string level;
    DataflowChoice choice;
    double da = 0;     // traffic between this level and the enclosing one
    double da_th = 0;
    double ops = 0;    // working-set MACs this level serves
    bool via_argmin = false;  // admitted only through the argmin clause
};

struct HierarchyChoice {
    std::vector<LevelChoice> levels;  // outer to inner
};

// Outer levels keep any candidate whose traffic fits under the threshold
// (plus the traffic argmin as a floor) and pick the one maximizing the MACs
// of the tile handed to the next level; the innermost level minimizes
// traffic outright. Each level's candidate tile dims divide the enclosing
// working set.
HierarchyChoice carom_select(const std::vector<MemoryLevel>& levels, const LayerShape& layer,
                             const SparsityAttributes& sa, TileMode mode);

}  // namespace voxsparse
