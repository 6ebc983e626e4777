#include "voxsparse/carom.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace voxsparse {

void MemoryLevel::validate() const {
    if (!capacity || bandwidth <= 0 || compute <= 0 || !instances)
        throw Error("memory level '" + name + "' needs positive capacity, bandwidth and compute");
}

double da_threshold(const MemoryLevel& level, double ops) {
    if (ops <= 0) throw Error("operation count must be positive");
    return ops * level.bandwidth / level.compute;
}

double ops_at_level(u64 anchors, u64 n, u64 c, double sa_pairs) {
    return sa_pairs * static_cast<double>(anchors) * static_cast<double>(n) *
           static_cast<double>(c);
}

namespace {

struct Candidate {
    DataflowChoice choice;
    double da = 0;
    double next_ops = 0;
};

std::vector<u64> nested_sweep(std::vector<u64> grid, u64 outer) {
    std::vector<u64> out;
    for (u64 v : grid)
        if (v <= outer && outer % v == 0) out.push_back(v);
    if (std::find(out.begin(), out.end(), outer) == out.end()) out.push_back(outer);
    std::sort(out.begin(), out.end());
    return out;
}

bool tie_better(const DataflowChoice& cand, const DataflowChoice& cur) {
    if (cand.delta_anchor != cur.delta_anchor) return cand.delta_anchor > cur.delta_anchor;
    if (cand.delta_n != cur.delta_n) return cand.delta_n > cur.delta_n;
    if (cand.delta_c != cur.delta_c) return cand.delta_c > cur.delta_c;
    return false;
}

bool close(double a, double b) { return std::abs(a - b) <= 1e-12 * std::max({std::abs(a), std::abs(b), 1.0}); }

}  // namespace

HierarchyChoice carom_select(const std::vector<MemoryLevel>& levels, const LayerShape& layer,
                             const SparsityAttributes& sa, TileMode mode) {
    if (levels.size() < 2) throw Error("hierarchy selection needs at least two levels");
    for (const auto& lvl : levels) lvl.validate();
    layer.validate();

    const bool out_anchored = sa.flavor == CoirFlavor::Cirf;
    u64 ws_anchor = out_anchored ? layer.O : layer.I;
    u64 ws_c = layer.C;
    u64 ws_n = layer.N;

    std::vector<u64> anchor_grid;
    for (const auto& [delta, curve] : sa.by_region_size) anchor_grid.push_back(delta);

    HierarchyChoice hierarchy;
    for (size_t q = 0; q < levels.size(); ++q) {
        const MemoryLevel& level = levels[q];
        const bool innermost = q + 1 == levels.size();

        LayerShape ws = layer;
        if (out_anchored) ws.O = ws_anchor; else ws.I = ws_anchor;
        ws.C = ws_c;
        ws.N = ws_n;
        double ws_ops = ops_at_level(ws_anchor, ws_n, ws_c,
                                     sa.curve(static_cast<u32>(ws_anchor)).sa_pairs_avg);
        double th = da_threshold(level, ws_ops);

        std::vector<Candidate> feasible;
        u64 smallest_workable = std::numeric_limits<u64>::max();
        for (u64 da_anchor : nested_sweep(anchor_grid, ws_anchor)) {
            auto it = sa.by_region_size.find(static_cast<u32>(da_anchor));
            if (it == sa.by_region_size.end()) continue;
            const SparsityCurve& curve = it->second;
            for (u64 dc : nested_sweep(channel_sweep(layer.C), ws_c)) {
                for (u64 dn : nested_sweep(channel_sweep(layer.N), ws_n)) {
                    FeasibilityResult feas = tile_feasible(curve, dc, dn, layer.K, sa.mask_words,
                                                           level.capacity, mode);
                    smallest_workable = std::min(smallest_workable, feas.min_budget);
                    if (!feas.feasible) continue;
                    for (WalkPattern walk : {WalkPattern::IS, WalkPattern::OS, WalkPattern::WS}) {
                        Candidate cand;
                        cand.choice.walk = walk;
                        cand.choice.flavor = sa.flavor;
                        cand.choice.delta_anchor = da_anchor;
                        cand.choice.delta_c = dc;
                        cand.choice.delta_n = dn;
                        cand.choice.predicted_tile_words = feas.tile_words;
                        cand.choice.split_regions = feas.split_regions;
                        cand.da = data_accesses(walk, sa.flavor, da_anchor, dc, dn, ws,
                                                curve.sa_unique_avg, curve.sa_pairs_avg);
                        cand.choice.predicted_da = cand.da;
                        cand.next_ops = ops_at_level(da_anchor, dn, dc, curve.sa_pairs_avg);
                        feasible.push_back(cand);
                    }
                }
            }
        }
        if (feasible.empty())
            throw Error("level '" + level.name + "': no tile fits " +
                        std::to_string(level.capacity) + " words; smallest workable budget is " +
                        std::to_string(smallest_workable) + " words");

        // traffic argmin, kept as the floor of the candidate set
        const Candidate* da_min = &feasible[0];
        for (const auto& c : feasible) {
            if (c.da < da_min->da && !close(c.da, da_min->da)) da_min = &c;
            else if (close(c.da, da_min->da) && tie_better(c.choice, da_min->choice)) da_min = &c;
        }

        const Candidate* picked = nullptr;
        if (innermost) {
            picked = da_min;
        } else {
            for (const auto& c : feasible) {
                if (c.da > th && &c != da_min) continue;
                if (!picked) {
                    picked = &c;
                    continue;
                }
                bool better = false;
                if (!close(c.next_ops, picked->next_ops)) better = c.next_ops > picked->next_ops;
                else if (!close(c.da, picked->da)) better = c.da < picked->da;
                else better = tie_better(c.choice, picked->choice);
                if (better) picked = &c;
            }
        }

        LevelChoice lc;
        lc.level = level.name;
        lc.choice = picked->choice;
        lc.da = picked->da;
        lc.da_th = th;
        lc.ops = ws_ops;
        lc.via_argmin = picked->da > th;
        hierarchy.levels.push_back(lc);

        ws_anchor = picked->choice.delta_anchor;
        ws_c = picked->choice.delta_c;
        ws_n = picked->choice.delta_n;
    }
    return hierarchy;
}

}  // namespace voxsparse
