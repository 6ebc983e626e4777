#include "voxsparse/spade.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <set>
#include <sstream>
#include <unordered_set>

#include "voxsparse/soar.hpp"

namespace voxsparse {

const char* to_string(WalkPattern w) {
    switch (w) {
        case WalkPattern::IS: return "IS";
        case WalkPattern::OS: return "OS";
        case WalkPattern::WS: return "WS";
    }
    return "?";
}

WalkPattern walk_from_string(const std::string& s) {
    if (s == "IS" || s == "is") return WalkPattern::IS;
    if (s == "OS" || s == "os") return WalkPattern::OS;
    if (s == "WS" || s == "ws") return WalkPattern::WS;
    throw Error("unknown walk pattern '" + s + "'");
}

void LayerShape::validate() const {
    if (!I || !O || !K || !C || !N) throw Error("layer shape fields must be positive");
    if (K != static_cast<u64>(k) * k * k) throw Error("kernel volume does not match kernel edge");
}

LayerShape layer_shape(const ActiveVoxelSet& inputs, const ActiveVoxelSet& outputs,
                       const CoirMetadata& meta) {
    LayerShape s;
    s.I = inputs.size();
    s.O = outputs.size();
    s.k = meta.conv.k;
    s.K = static_cast<u64>(meta.conv.kernel_volume());
    s.C = meta.conv.in_channels;
    s.N = meta.conv.out_channels;
    s.M = meta.words();
    return s;
}

double quantile_nearest(std::vector<double> values, double q) {
    if (values.empty()) return 0.0;
    std::sort(values.begin(), values.end());
    size_t rank = static_cast<size_t>(std::ceil(q * static_cast<double>(values.size())));
    if (rank == 0) rank = 1;
    return values[std::min(values.size() - 1, rank - 1)];
}

const SparsityCurve& SparsityAttributes::curve(u32 delta_anchor) const {
    auto it = by_region_size.find(delta_anchor);
    if (it == by_region_size.end())
        throw Error("no sparsity curve extracted for region size " + std::to_string(delta_anchor));
    return it->second;
}

SparsityAttributes extract_sparsity_attributes(const CoirMetadata& meta,
                                               const std::vector<u32>& order,
                                               const std::vector<u32>& delta_sweep) {
    const u32 n = static_cast<u32>(meta.entries.size());
    if (order.size() != n) throw Error("anchor order length mismatch");

    SparsityAttributes sa;
    sa.flavor = meta.flavor;
    sa.anchor_count = n;
    sa.total_pairs = meta.total_pairs();
    sa.mask_words = meta.conv.mask_words();
    {
        std::unordered_set<u32> uniq;
        for (const auto& e : meta.entries)
            for (u32 p : e.partners) uniq.insert(p);
        sa.partner_count = uniq.size();
    }

    std::vector<u32> sweep(delta_sweep);
    std::sort(sweep.begin(), sweep.end());
    sweep.erase(std::unique(sweep.begin(), sweep.end()), sweep.end());

    for (u32 delta : sweep) {
        if (delta == 0) throw Error("region size must be positive");
        SparsityCurve curve;
        curve.table.delta_anchor = delta;
        std::vector<double> su, sp;
        std::unordered_set<u32> uniq;
        for (u32 base = 0; base < n; base += delta) {
            u32 end = std::min(n, base + delta);
            uniq.clear();
            u64 pairs = 0;
            for (u32 i = base; i < end; ++i) {
                const CoirEntry& e = meta.entries[order[i]];
                pairs += e.pair_count();
                for (u32 p : e.partners) uniq.insert(p);
            }
            curve.table.anchors.push_back(end - base);
            curve.table.unique.push_back(static_cast<u32>(uniq.size()));
            curve.table.pairs.push_back(pairs);
            // nominal region size in the denominator, short tail included
            su.push_back(static_cast<double>(uniq.size()) / delta);
            sp.push_back(static_cast<double>(pairs) / delta);
        }
        if (!su.empty()) {
            curve.sa_unique_avg = std::accumulate(su.begin(), su.end(), 0.0) / su.size();
            curve.sa_unique_max = *std::max_element(su.begin(), su.end());
            curve.sa_unique_q90 = quantile_nearest(su, 0.9);
            curve.sa_pairs_avg = std::accumulate(sp.begin(), sp.end(), 0.0) / sp.size();
            curve.sa_pairs_max = *std::max_element(sp.begin(), sp.end());
            curve.sa_pairs_q90 = quantile_nearest(sp, 0.9);
        }
        sa.by_region_size.emplace(delta, std::move(curve));
    }
    return sa;
}

u64 tile_size(u64 delta_gathered, u64 delta_anchor, u64 delta_c, u64 delta_n, u64 kernel_volume,
              u64 delta_m) {
    return delta_gathered * delta_c + delta_anchor * delta_n + kernel_volume * delta_c * delta_n +
           delta_m;
}

double data_accesses(WalkPattern walk, CoirFlavor flavor, u64 delta_anchor, u64 delta_c,
                     u64 delta_n, const LayerShape& layer, double sa_unique, double sa_pairs) {
    if (!delta_anchor || !delta_c || !delta_n) throw Error("tile dimensions must be positive");
    auto mult = [&](WalkPattern home, u64 steps) -> double {
        return walk == home ? 1.0 : static_cast<double>(steps);
    };
    const double weights = static_cast<double>(layer.C * layer.N * layer.K);
    const u64 steps_c = ceil_div(layer.C, delta_c);
    const u64 steps_n = ceil_div(layer.N, delta_n);

    if (flavor == CoirFlavor::Cirf) {
        const u64 regions = ceil_div(layer.O, delta_anchor);
        double O = static_cast<double>(layer.O);
        return mult(WalkPattern::WS, regions) * weights +
               mult(WalkPattern::IS, steps_n) * (sa_unique * O * static_cast<double>(layer.C)) +
               mult(WalkPattern::OS, steps_c) *
                   (O * static_cast<double>(layer.N) + sa_pairs * O);
    }
    const u64 regions = ceil_div(layer.I, delta_anchor);
    double I = static_cast<double>(layer.I);
    return mult(WalkPattern::WS, regions) * weights +
           mult(WalkPattern::OS, steps_c) * (sa_unique * I * static_cast<double>(layer.N)) +
           mult(WalkPattern::IS, steps_n) *
               (I * static_cast<double>(layer.C) + sa_pairs * I);
}

double data_accesses(const DataflowChoice& d, const SparsityAttributes& sa,
                     const LayerShape& layer) {
    if (sa.flavor != d.flavor) throw Error("attribute flavor does not match dataflow flavor");
    const SparsityCurve& c = sa.curve(static_cast<u32>(d.delta_anchor));
    return data_accesses(d.walk, d.flavor, d.delta_anchor, d.delta_c, d.delta_n, layer,
                         c.sa_unique_avg, c.sa_pairs_avg);
}

std::vector<u64> anchor_sweep(u64 total) {
    std::vector<u64> sweep;
    if (total == 0) return sweep;
    for (u64 v = 32; v <= 8192 && v < total; v *= 2) sweep.push_back(v);
    sweep.push_back(total);
    return sweep;
}

std::vector<u64> channel_sweep(u64 total) {
    std::vector<u64> sweep;
    for (u64 v = 8; v <= total; v *= 2) sweep.push_back(v);
    if (sweep.empty() && total > 0) sweep.push_back(total);
    return sweep;
}

namespace {

u64 region_footprint(u64 unique, u64 anchors, u64 pairs, u64 delta_c, u64 delta_n,
                     u64 kernel_volume, int mask_words) {
    u64 meta_words = pairs + (1 + static_cast<u64>(mask_words)) * anchors;
    return tile_size(unique, anchors, delta_c, delta_n, kernel_volume, meta_words);
}

}  // namespace

FeasibilityResult tile_feasible(const SparsityCurve& curve, u64 delta_c, u64 delta_n,
                                u64 kernel_volume, int mask_words, u64 budget, TileMode mode) {
    FeasibilityResult r;
    const RegionTable& t = curve.table;
    if (t.regions() == 0) {
        r.tile_words = kernel_volume * delta_c * delta_n;
        r.feasible = r.tile_words <= budget;
        r.min_budget = r.tile_words;
        return r;
    }

    std::vector<u64> footprints(t.regions());
    for (u32 i = 0; i < t.regions(); ++i)
        footprints[i] =
            region_footprint(t.unique[i], t.anchors[i], t.pairs[i], delta_c, delta_n,
                             kernel_volume, mask_words);

    if (mode == TileMode::Sst) {
        u64 worst = *std::max_element(footprints.begin(), footprints.end());
        r.tile_words = worst;
        r.min_budget = worst;
        r.feasible = worst <= budget;
        return r;
    }

    std::vector<double> as_double(footprints.begin(), footprints.end());
    u64 q90 = static_cast<u64>(quantile_nearest(as_double, 0.9));
    r.tile_words = q90;

    // an overshoot region splits in half repeatedly; the gathered rows are an
    // upper bound for each half, so a fit under that bound is a real fit
    bool splittable = true;
    for (u32 i = 0; i < t.regions(); ++i) {
        if (footprints[i] <= std::max(budget, q90)) continue;
        bool fits = false;
        u64 anchors = t.anchors[i], pairs = t.pairs[i];
        for (int s = 0; s < 32 && anchors > 1; ++s) {
            anchors = ceil_div(anchors, 2);
            pairs = ceil_div(pairs, 2);
            u64 f = region_footprint(t.unique[i], anchors, pairs, delta_c, delta_n,
                                     kernel_volume, mask_words);
            if (f <= budget) {
                fits = true;
                break;
            }
        }
        if (!fits) splittable = false;
        ++r.split_regions;
    }

    r.feasible = q90 <= budget && splittable;
    // smallest budget this candidate works under: the q90 reservation plus
    // every region reachable by splitting
    u64 min_after_split = 0;
    for (u32 i = 0; i < t.regions(); ++i) {
        u64 best = footprints[i];
        u64 anchors = t.anchors[i], pairs = t.pairs[i];
        for (int s = 0; s < 32 && anchors > 1; ++s) {
            anchors = ceil_div(anchors, 2);
            pairs = ceil_div(pairs, 2);
            best = std::min(best, region_footprint(t.unique[i], anchors, pairs, delta_c, delta_n,
                                                   kernel_volume, mask_words));
        }
        min_after_split = std::max(min_after_split, best);
    }
    r.min_budget = std::max(q90, min_after_split);
    return r;
}

OptimizeResult optimize_layer(const LayerShape& layer, const SparsityAttributes& sa_cirf,
                              const SparsityAttributes* sa_corf, u64 budget, TileMode mode) {
    layer.validate();
    if (sa_cirf.flavor != CoirFlavor::Cirf) throw Error("first attribute set must be output-anchored");
    if (sa_corf && sa_corf->flavor != CoirFlavor::Corf)
        throw Error("second attribute set must be input-anchored");

    OptimizeResult result;
    bool found = false;
    double best_da = 0;
    u64 smallest_workable = std::numeric_limits<u64>::max();

    const WalkPattern walks[] = {WalkPattern::IS, WalkPattern::OS, WalkPattern::WS};

    auto consider = [&](const SparsityAttributes& sa) {
        for (const auto& [delta_anchor, curve] : sa.by_region_size) {
            for (u64 dc : channel_sweep(layer.C)) {
                for (u64 dn : channel_sweep(layer.N)) {
                    FeasibilityResult feas = tile_feasible(curve, dc, dn, layer.K, sa.mask_words,
                                                           budget, mode);
                    smallest_workable = std::min(smallest_workable, feas.min_budget);
                    if (!feas.feasible) {
                        result.candidates_considered += 3;
                        continue;
                    }
                    for (WalkPattern walk : walks) {
                        ++result.candidates_considered;
                        double da = data_accesses(walk, sa.flavor, delta_anchor, dc, dn, layer,
                                                  curve.sa_unique_avg, curve.sa_pairs_avg);
                        DataflowChoice cand;
                        cand.walk = walk;
                        cand.flavor = sa.flavor;
                        cand.delta_anchor = delta_anchor;
                        cand.delta_c = dc;
                        cand.delta_n = dn;
                        cand.predicted_da = da;
                        cand.predicted_tile_words = feas.tile_words;
                        cand.split_regions = feas.split_regions;

                        if (!found) {
                            result.choice = cand;
                            best_da = da;
                            found = true;
                            continue;
                        }
                        double scale = std::max({std::abs(da), std::abs(best_da), 1.0});
                        bool tie = std::abs(da - best_da) <= 1e-12 * scale;
                        bool better = !tie && da < best_da;
                        if (tie) {
                            const DataflowChoice& cur = result.choice;
                            if (cand.delta_anchor != cur.delta_anchor)
                                better = cand.delta_anchor > cur.delta_anchor;
                            else if (cand.delta_n != cur.delta_n)
                                better = cand.delta_n > cur.delta_n;
                            else if (cand.delta_c != cur.delta_c)
                                better = cand.delta_c > cur.delta_c;
                        }
                        if (better) {
                            result.choice = cand;
                            best_da = std::min(best_da, da);
                        }
                    }
                }
            }
        }
    };

    consider(sa_cirf);
    if (sa_corf) consider(*sa_corf);

    if (!found)
        throw Error("no feasible tile within " + std::to_string(budget) +
                    " words; smallest workable budget is " + std::to_string(smallest_workable) +
                    " words");
    return result;
}

TrafficBreakdown count_tiled_traffic(const DataflowChoice& d, const RegionTable& table,
                                     const LayerShape& layer) {
    TrafficBreakdown t;
    const bool out_anchored = d.flavor == CoirFlavor::Cirf;
    const u64 anchor_ch = out_anchored ? layer.N : layer.C;
    const u64 gathered_ch = out_anchored ? layer.C : layer.N;
    const u64 steps_c = ceil_div(layer.C, d.delta_c);
    const u64 steps_n = ceil_div(layer.N, d.delta_n);
    // the channel loop that forces each side's refetch
    const u64 anchor_steps = out_anchored ? steps_c : steps_n;
    const u64 gathered_steps = out_anchored ? steps_n : steps_c;
    const WalkPattern anchor_home = out_anchored ? WalkPattern::OS : WalkPattern::IS;
    const WalkPattern gathered_home = out_anchored ? WalkPattern::IS : WalkPattern::OS;

    const u64 regions = table.regions();
    t.weights = layer.C * layer.N * layer.K * (d.walk == WalkPattern::WS ? 1 : regions);
    const u64 am = (d.walk == anchor_home) ? 1 : anchor_steps;
    const u64 gm = (d.walk == gathered_home) ? 1 : gathered_steps;
    for (u32 r = 0; r < regions; ++r) {
        t.anchors += static_cast<u64>(table.anchors[r]) * anchor_ch * am;
        t.metadata += table.pairs[r] * am;
        t.gathered += static_cast<u64>(table.unique[r]) * gathered_ch * gm;
    }
    return t;
}

std::vector<u64> per_region_traffic(const DataflowChoice& d, const RegionTable& table,
                                    const LayerShape& layer) {
    const bool out_anchored = d.flavor == CoirFlavor::Cirf;
    const u64 anchor_ch = out_anchored ? layer.N : layer.C;
    const u64 gathered_ch = out_anchored ? layer.C : layer.N;
    const u64 steps_c = ceil_div(layer.C, d.delta_c);
    const u64 steps_n = ceil_div(layer.N, d.delta_n);
    const u64 anchor_steps = out_anchored ? steps_c : steps_n;
    const u64 gathered_steps = out_anchored ? steps_n : steps_c;
    const WalkPattern anchor_home = out_anchored ? WalkPattern::OS : WalkPattern::IS;
    const WalkPattern gathered_home = out_anchored ? WalkPattern::IS : WalkPattern::OS;

    const u64 weights = layer.C * layer.N * layer.K;
    const u64 am = (d.walk == anchor_home) ? 1 : anchor_steps;
    const u64 gm = (d.walk == gathered_home) ? 1 : gathered_steps;
    std::vector<u64> words(table.regions(), 0);
    for (u32 r = 0; r < table.regions(); ++r) {
        words[r] = static_cast<u64>(table.anchors[r]) * anchor_ch * am + table.pairs[r] * am +
                   static_cast<u64>(table.unique[r]) * gathered_ch * gm;
        if (d.walk == WalkPattern::WS) {
            if (r == 0) words[r] += weights;  // resident after the first fetch
        } else {
            words[r] += weights;
        }
    }
    return words;
}

// --- network descriptor ------------------------------------------------------

std::vector<NetworkLayer> parse_network(std::istream& is) {
    std::vector<NetworkLayer> net;
    std::string line;
    u32 lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ls(line);
        std::string kind;
        NetworkLayer layer;
        int k = 0, stride = 0;
        u32 c = 0, n = 0;
        if (!(ls >> kind >> k >> stride >> c >> n))
            throw Error("network line " + std::to_string(lineno) + ": expected 'kind k stride C N'");
        layer.conv.kind = conv_kind_from_string(kind);
        layer.conv.k = k;
        layer.conv.stride = stride;
        layer.conv.in_channels = c;
        layer.conv.out_channels = n;
        std::string extra;
        while (ls >> extra) {
            if (extra.rfind("encoder=", 0) == 0)
                layer.encoder_ref = static_cast<u32>(std::stoul(extra.substr(8)));
            else
                throw Error("network line " + std::to_string(lineno) + ": unknown token '" + extra +
                            "'");
        }
        layer.conv.validate();
        if (layer.conv.kind == ConvKind::Transposed && !layer.encoder_ref)
            throw Error("network line " + std::to_string(lineno) +
                        ": transposed layer needs encoder=<layer>");
        net.push_back(layer);
    }
    // channel continuity and encoder references point backwards
    for (size_t l = 0; l + 1 < net.size(); ++l)
        if (net[l].conv.out_channels != net[l + 1].conv.in_channels)
            throw Error("layer " + std::to_string(l + 1) + " input channels do not match layer " +
                        std::to_string(l) + " output channels");
    for (size_t l = 0; l < net.size(); ++l)
        if (net[l].encoder_ref && *net[l].encoder_ref >= l)
            throw Error("layer " + std::to_string(l) + " encoder reference must point to an earlier layer");
    return net;
}

void write_network(std::ostream& os, const std::vector<NetworkLayer>& network) {
    for (const auto& layer : network) {
        os << to_string(layer.conv.kind) << ' ' << layer.conv.k << ' ' << layer.conv.stride << ' '
           << layer.conv.in_channels << ' ' << layer.conv.out_channels;
        if (layer.encoder_ref) os << " encoder=" << *layer.encoder_ref;
        os << '\n';
    }
}

std::vector<ActiveVoxelSet> propagate_sets(const ActiveVoxelSet& cloud,
                                           const std::vector<NetworkLayer>& network) {
    std::vector<ActiveVoxelSet> sets;
    sets.reserve(network.size() + 1);
    sets.push_back(cloud);
    for (size_t l = 0; l < network.size(); ++l) {
        ActiveVoxelSet& in = sets.back();
        if (in.channels != network[l].conv.in_channels) {
            in.channels = network[l].conv.in_channels;
            in.features.assign(static_cast<size_t>(in.size()) * in.channels, 0.0f);
        }
        const ActiveVoxelSet* encoder =
            network[l].encoder_ref ? &sets[*network[l].encoder_ref] : nullptr;
        sets.push_back(derive_output_set(in, network[l].conv, encoder));
    }
    return sets;
}

u64 count_pairs(const ActiveVoxelSet& inputs, const ActiveVoxelSet& outputs,
                const ConvSpec& conv) {
    conv.validate();
    SpatialHash in_hash(inputs);
    int h = conv.k / 2;
    u64 pairs = 0;
    for (const auto& v : outputs.voxels) {
        for (int dz = -h; dz <= h; ++dz)
            for (int dy = -h; dy <= h; ++dy)
                for (int dx = -h; dx <= h; ++dx) {
                    i64 px, py, pz;
                    switch (conv.kind) {
                        case ConvKind::Submanifold:
                            px = static_cast<i64>(v.x) + dx;
                            py = static_cast<i64>(v.y) + dy;
                            pz = static_cast<i64>(v.z) + dz;
                            break;
                        case ConvKind::Strided:
                            px = 2 * static_cast<i64>(v.x) + dx;
                            py = 2 * static_cast<i64>(v.y) + dy;
                            pz = 2 * static_cast<i64>(v.z) + dz;
                            break;
                        case ConvKind::Transposed: {
                            i64 tx = static_cast<i64>(v.x) - dx;
                            i64 ty = static_cast<i64>(v.y) - dy;
                            i64 tz = static_cast<i64>(v.z) - dz;
                            if ((tx & 1) || (ty & 1) || (tz & 1)) continue;
                            px = tx / 2;
                            py = ty / 2;
                            pz = tz / 2;
                            break;
                        }
                        default:
                            continue;
                    }
                    if (in_hash.lookup(px, py, pz)) ++pairs;
                }
    }
    return pairs;
}

// --- cross-cloud tables ------------------------------------------------------

u32 MsaTable::bin_for(double arf, bool* clamped) const {
    if (clamped) *clamped = false;
    double lo = arf_lo, hi = arf_hi;
    if (arf < lo || arf > hi) {
        if (clamped) *clamped = true;
        arf = std::clamp(arf, lo, hi);
    }
    double width = (hi - lo) / arf_bins;
    u32 bin = width > 0 ? static_cast<u32>((arf - lo) / width) : 0;
    return std::min<u32>(bin, arf_bins - 1);
}

double MsaTable::bin_center(u32 bin) const {
    double width = (arf_hi - arf_lo) / arf_bins;
    return arf_lo + (bin + 0.5) * width;
}

SparsityAttributes msa_bin_attributes(const MsaTable& table, u32 layer, double arf) {
    if (layer >= table.layers.size()) throw Error("layer index outside table");
    const MsaLayerCurve& lc = table.layers[layer];
    SparsityAttributes sa;
    sa.flavor = CoirFlavor::Cirf;
    sa.anchor_count = lc.mean_outputs;
    sa.partner_count = lc.mean_inputs;
    int mask_words = static_cast<int>(ceil_div(static_cast<u64>(lc.k) * lc.k * lc.k, 32));
    sa.mask_words = mask_words;
    sa.total_pairs = static_cast<u64>(arf * static_cast<double>(lc.mean_outputs));

    for (const auto& [delta, unique_avg] : lc.msa_unique) {
        SparsityCurve curve;
        curve.sa_unique_avg = unique_avg;
        curve.sa_unique_q90 = lc.msa_unique_q90.at(delta);
        curve.sa_unique_max = lc.msa_unique_max.at(delta);
        curve.sa_pairs_avg = curve.sa_pairs_q90 = curve.sa_pairs_max = arf;
        // uniform synthetic regions at the cross-cloud statistics
        curve.table.delta_anchor = delta;
        u64 remaining = lc.mean_outputs;
        while (remaining > 0) {
            u32 a = static_cast<u32>(std::min<u64>(delta, remaining));
            curve.table.anchors.push_back(a);
            curve.table.unique.push_back(
                static_cast<u32>(std::llround(curve.sa_unique_q90 * delta)));
            curve.table.pairs.push_back(static_cast<u64>(std::llround(arf * delta)));
            remaining -= a;
        }
        sa.by_region_size.emplace(delta, std::move(curve));
    }
    return sa;
}

MsaTable build_msa_table(const std::vector<ActiveVoxelSet>& clouds,
                         const std::vector<NetworkLayer>& network, const MsaBuildConfig& cfg) {
    if (clouds.empty()) throw Error("need at least one pointcloud");
    if (network.empty()) throw Error("empty network");

    MsaTable table;
    table.arf_bins = cfg.arf_bins;
    table.arf_lo = 1.0;
    table.arf_hi = static_cast<double>(network[0].conv.kernel_volume());
    table.layers.resize(network.size());

    // pass 1: shapes per cloud to fix the shared region-size grid
    std::vector<std::vector<ActiveVoxelSet>> sets_per_cloud;
    sets_per_cloud.reserve(clouds.size());
    for (const auto& cloud : clouds) sets_per_cloud.push_back(propagate_sets(cloud, network));

    for (size_t l = 0; l < network.size(); ++l) {
        MsaLayerCurve& lc = table.layers[l];
        lc.k = network[l].conv.k;
        u64 sum_i = 0, sum_o = 0;
        for (const auto& sets : sets_per_cloud) {
            sum_i += sets[l].size();
            sum_o += sets[l + 1].size();
        }
        lc.mean_inputs = sum_i / clouds.size();
        lc.mean_outputs = sum_o / clouds.size();
        if (lc.mean_outputs == 0) throw Error("layer " + std::to_string(l) + " has no active outputs");

        std::vector<u64> grid = anchor_sweep(lc.mean_outputs);
        double arf_sum = 0;
        std::map<u32, double> sum_avg, sum_q90, sum_max;
        for (const auto& sets : sets_per_cloud) {
            const ActiveVoxelSet& in = sets[l];
            const ActiveVoxelSet& out = sets[l + 1];
            CoirMetadata meta = build_coir(in, out, network[l].conv, CoirFlavor::Cirf);
            std::vector<u32> order(out.size());
            std::iota(order.begin(), order.end(), 0);
            // clamp each grid point to this cloud's anchor count
            std::vector<u32> sweep;
            for (u64 g : grid) sweep.push_back(static_cast<u32>(std::min<u64>(g, out.size())));
            SparsityAttributes sa = extract_sparsity_attributes(meta, order, sweep);
            arf_sum += out.size() ? static_cast<double>(meta.total_pairs()) / out.size() : 1.0;
            for (u64 g : grid) {
                const SparsityCurve& c = sa.curve(static_cast<u32>(std::min<u64>(g, out.size())));
                sum_avg[static_cast<u32>(g)] += c.sa_unique_avg;
                sum_q90[static_cast<u32>(g)] += c.sa_unique_q90;
                sum_max[static_cast<u32>(g)] += c.sa_unique_max;
            }
        }
        lc.mean_arf = arf_sum / clouds.size();
        for (u64 g : grid) {
            u32 key = static_cast<u32>(g);
            lc.msa_unique[key] = sum_avg[key] / clouds.size();
            lc.msa_unique_q90[key] = sum_q90[key] / clouds.size();
            lc.msa_unique_max[key] = sum_max[key] / clouds.size();
        }
    }

    for (int b = 0; b < table.arf_bins; ++b) {
        MsaRow row;
        row.arf_center = table.bin_center(b);
        for (size_t l = 0; l < network.size(); ++l) {
            const MsaLayerCurve& lc = table.layers[l];
            SparsityAttributes sa = msa_bin_attributes(table, static_cast<u32>(l), row.arf_center);
            LayerShape shape;
            shape.I = std::max<u64>(1, lc.mean_inputs);
            shape.O = lc.mean_outputs;
            shape.k = lc.k;
            shape.K = static_cast<u64>(lc.k) * lc.k * lc.k;
            shape.C = network[l].conv.in_channels;
            shape.N = network[l].conv.out_channels;
            shape.M = sa.total_pairs + (1 + sa.mask_words) * shape.O;
            row.per_layer.push_back(optimize_layer(shape, sa, nullptr, cfg.budget, cfg.mode).choice);
        }
        table.rows.push_back(std::move(row));
    }
    return table;
}

void write_msa_table(std::ostream& os, const MsaTable& table) {
    os << "msa-table v1\n";
    os << "bins " << table.arf_bins << ' ' << table.arf_lo << ' ' << table.arf_hi << '\n';
    os << "layers " << table.layers.size() << '\n';
    os.precision(17);
    for (size_t l = 0; l < table.layers.size(); ++l) {
        const MsaLayerCurve& lc = table.layers[l];
        os << "layer " << l << " k " << lc.k << " arf " << lc.mean_arf << " in " << lc.mean_inputs
           << " out " << lc.mean_outputs << '\n';
        for (const auto& [delta, v] : lc.msa_unique)
            os << "curve " << l << ' ' << delta << ' ' << v << ' ' << lc.msa_unique_q90.at(delta)
               << ' ' << lc.msa_unique_max.at(delta) << '\n';
    }
    for (size_t b = 0; b < table.rows.size(); ++b) {
        const MsaRow& row = table.rows[b];
        os << "row " << b << ' ' << row.arf_center;
        for (const auto& c : row.per_layer)
            os << "  " << to_string(c.walk) << ' ' << to_string(c.flavor) << ' ' << c.delta_anchor
               << ' ' << c.delta_c << ' ' << c.delta_n << ' ' << c.predicted_da << ' '
               << c.predicted_tile_words << ' ' << c.split_regions;
        os << '\n';
    }
    if (!os) throw Error("table write failed");
}

MsaTable read_msa_table(std::istream& is) {
    MsaTable table;
    std::string line;
    if (!std::getline(is, line) || line != "msa-table v1") throw Error("not a table file");
    size_t nlayers = 0;
    while (std::getline(is, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ls(line);
        std::string tag;
        ls >> tag;
        if (tag == "bins") {
            ls >> table.arf_bins >> table.arf_lo >> table.arf_hi;
        } else if (tag == "layers") {
            ls >> nlayers;
            table.layers.resize(nlayers);
        } else if (tag == "layer") {
            size_t l;
            std::string kw;
            ls >> l;
            if (l >= table.layers.size()) throw Error("layer index outside declared count");
            MsaLayerCurve& lc = table.layers[l];
            while (ls >> kw) {
                if (kw == "k") ls >> lc.k;
                else if (kw == "arf") ls >> lc.mean_arf;
                else if (kw == "in") ls >> lc.mean_inputs;
                else if (kw == "out") ls >> lc.mean_outputs;
            }
        } else if (tag == "curve") {
            size_t l;
            u32 delta;
            double avg, q90, mx;
            ls >> l >> delta >> avg >> q90 >> mx;
            if (l >= table.layers.size()) throw Error("curve layer outside declared count");
            table.layers[l].msa_unique[delta] = avg;
            table.layers[l].msa_unique_q90[delta] = q90;
            table.layers[l].msa_unique_max[delta] = mx;
        } else if (tag == "row") {
            size_t b;
            MsaRow row;
            ls >> b >> row.arf_center;
            std::string walk, flavor;
            DataflowChoice c;
            while (ls >> walk >> flavor >> c.delta_anchor >> c.delta_c >> c.delta_n >>
                   c.predicted_da >> c.predicted_tile_words >> c.split_regions) {
                c.walk = walk_from_string(walk);
                c.flavor = flavor == "corf" ? CoirFlavor::Corf : CoirFlavor::Cirf;
                row.per_layer.push_back(c);
            }
            table.rows.push_back(std::move(row));
        } else {
            throw Error("unknown table line tag '" + tag + "'");
        }
    }
    return table;
}

// --- on-the-fly selection ------------------------------------------------------

u64 DmaTable::total_words() const {
    u64 n = 0;
    for (const auto& e : entries) n += e.words;
    return n;
}

void write_dma_table(std::ostream& os, const DmaTable& table) {
    for (const auto& e : table.entries)
        os << e.tile << ' ' << (e.block ? "block" : "voxel") << ' ' << e.source << ' '
           << e.destination << ' ' << e.words << '\n';
    if (!os) throw Error("dma table write failed");
}

OtfPlan otf_select(const ActiveVoxelSet& cloud, const MsaTable& table,
                   const std::vector<NetworkLayer>& network, bool apply_soar) {
    if (table.rows.empty()) throw Error("table has no rows");
    if (table.layers.size() != network.size()) throw Error("table was built for a different network");

    OtfPlan plan;
    auto sets = propagate_sets(cloud, network);
    for (size_t l = 0; l < network.size(); ++l) {
        const ActiveVoxelSet& in = sets[l];
        const ActiveVoxelSet& out = sets[l + 1];
        OtfLayerPlan lp;

        u64 pairs = count_pairs(in, out, network[l].conv);
        lp.arf = out.size() ? static_cast<double>(pairs) / out.size() : 1.0;
        lp.bin = table.bin_for(lp.arf, &lp.clamped);
        if (lp.clamped)
            plan.warnings.push_back("layer " + std::to_string(l) + ": neighbor count " +
                                    std::to_string(lp.arf) + " outside table range, clamped");
        lp.choice = table.rows[lp.bin].per_layer[l];

        CoirMetadata meta = build_coir(in, out, network[l].conv, CoirFlavor::Cirf);
        lp.shape = layer_shape(in, out, meta);

        u32 tile_anchors = static_cast<u32>(std::min<u64>(lp.choice.delta_anchor, out.size()));
        if (tile_anchors == 0) tile_anchors = 1;
        if (apply_soar && out.size() > 1) {
            AdjacencyMap adj = build_adjacency_map(out, 3);
            lp.anchor_order = soar_chunk(adj, tile_anchors).flatten();
        } else {
            lp.anchor_order.resize(out.size());
            std::iota(lp.anchor_order.begin(), lp.anchor_order.end(), 0);
        }
        lp.metadata = tile_metadata(meta, tile_anchors, lp.anchor_order);

        // block transfer for the in-order anchor stream, per-voxel entries for
        // the gathered rows
        const u64 N = network[l].conv.out_channels, C = network[l].conv.in_channels;
        u64 src_meta = 0;
        for (u32 t = 0; t < lp.metadata.blocks.size(); ++t) {
            const MetadataBlock& blk = lp.metadata.blocks[t];
            DmaEntry block;
            block.tile = t;
            block.block = true;
            block.source = src_meta;
            block.destination = 0;
            block.words = static_cast<u32>(blk.words + blk.anchor_count * N);
            src_meta += blk.words;
            lp.dma.entries.push_back(block);

            std::set<u32> uniq;
            for (const auto& e : blk.entries) uniq.insert(e.partners.begin(), e.partners.end());
            u64 dst = block.words;
            for (u32 p : uniq) {
                DmaEntry row;
                row.tile = t;
                row.block = false;
                row.source = static_cast<u64>(p) * C;
                row.destination = dst;
                row.words = static_cast<u32>(C);
                dst += C;
                lp.dma.entries.push_back(row);
            }
        }
        plan.layers.push_back(std::move(lp));
    }
    return plan;
}

}  // namespace voxsparse
