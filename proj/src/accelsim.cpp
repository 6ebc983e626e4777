#include "voxsparse/accelsim.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>

#include "json.hpp"

namespace voxsparse {

void CoreConfig::validate() const {
    if (denn_count != 4 && denn_count != 8)
        throw Error("core supports 4 or 8 compute blocks, got " + std::to_string(denn_count));
    if (!pes_per_denn || !elems_per_pe || !lookups_per_cycle || !l1_words)
        throw Error("core config fields must be positive");
}

void ArchConfig::validate() const {
    core.validate();
    if (!cores || !n_groups || cores % n_groups != 0)
        throw Error("core count must be positive and divisible into groups");
    if (!l2_words || bus_words_per_clk <= 0 || dram_bytes_per_clk <= 0 || !word_bytes)
        throw Error("memory system parameters must be positive");
    if (knobs.systolic_group != 1 && knobs.systolic_group != 2 && knobs.systolic_group != 4)
        throw Error("systolic group must be 1, 2 or 4");
    if (knobs.systolic_group > core.denn_count)
        throw Error("systolic group exceeds compute block count");
}

ArchConfig parse_arch_config(std::istream& is) {
    ArchConfig arch;
    std::string line;
    u32 lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw Error("arch config line " + std::to_string(lineno) + ": expected key=value");
        std::string key = line.substr(0, eq);
        std::string val = line.substr(eq + 1);
        auto num = [&]() -> u64 { return std::stoull(val); };
        auto flt = [&]() -> double { return std::stod(val); };
        if (key == "cores") arch.cores = static_cast<u32>(num());
        else if (key == "n_groups") arch.n_groups = static_cast<u32>(num());
        else if (key == "denns") arch.core.denn_count = static_cast<u32>(num());
        else if (key == "pes") arch.core.pes_per_denn = static_cast<u32>(num());
        else if (key == "elems") arch.core.elems_per_pe = static_cast<u32>(num());
        else if (key == "lookups") arch.core.lookups_per_cycle = static_cast<u32>(num());
        else if (key == "waves_words") arch.core.waves_words = num();
        else if (key == "waves_policy") {
            if (val == "fixed") arch.core.waves_policy = WavesPolicy::FixedFifo;
            else if (val == "linklist") arch.core.waves_policy = WavesPolicy::LinkList;
            else throw Error("waves_policy must be fixed or linklist");
        } else if (key == "l1_words") arch.core.l1_words = num();
        else if (key == "l2_words") arch.l2_words = num();
        else if (key == "bus_words") arch.bus_words_per_clk = flt();
        else if (key == "dram_bytes") arch.dram_bytes_per_clk = flt();
        else if (key == "word_bytes") arch.word_bytes = static_cast<u32>(num());
        else if (key == "drain") arch.drain_cycles = static_cast<u32>(num());
        else if (key == "multicast") arch.knobs.input_multicast = num() != 0;
        else if (key == "systolic") arch.knobs.systolic_weights = num() != 0;
        else if (key == "accum") arch.knobs.local_accum = num() != 0;
        else if (key == "group") arch.knobs.systolic_group = static_cast<u32>(num());
        else throw Error("arch config line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    }
    arch.validate();
    return arch;
}

void write_arch_config(std::ostream& os, const ArchConfig& arch) {
    os << "cores=" << arch.cores << '\n'
       << "n_groups=" << arch.n_groups << '\n'
       << "denns=" << arch.core.denn_count << '\n'
       << "pes=" << arch.core.pes_per_denn << '\n'
       << "elems=" << arch.core.elems_per_pe << '\n'
       << "lookups=" << arch.core.lookups_per_cycle << '\n'
       << "waves_words=" << arch.core.waves_words << '\n'
       << "waves_policy=" << (arch.core.waves_policy == WavesPolicy::FixedFifo ? "fixed" : "linklist")
       << '\n'
       << "l1_words=" << arch.core.l1_words << '\n'
       << "l2_words=" << arch.l2_words << '\n'
       << "bus_words=" << arch.bus_words_per_clk << '\n'
       << "dram_bytes=" << arch.dram_bytes_per_clk << '\n'
       << "word_bytes=" << arch.word_bytes << '\n'
       << "drain=" << arch.drain_cycles << '\n'
       << "multicast=" << (arch.knobs.input_multicast ? 1 : 0) << '\n'
       << "systolic=" << (arch.knobs.systolic_weights ? 1 : 0) << '\n'
       << "accum=" << (arch.knobs.local_accum ? 1 : 0) << '\n'
       << "group=" << arch.knobs.systolic_group << '\n';
}

UopReport uop_count(u64 total_ops, u64 delta_c, u64 delta_n) {
    if (!delta_c || !delta_n) throw Error("dispatch slice must be positive");
    UopReport r;
    r.savings = delta_c * delta_n;
    r.uops = ceil_div(total_ops, r.savings);
    return r;
}

TileCycles sspnna_tile_cycles(const MetadataBlock& blk, CoirFlavor flavor, u64 total_c,
                              u64 total_n, u64 dispatch_c, u64 dispatch_n,
                              const CoreConfig& core, const ReuseKnobs& knobs, u32 drain_cycles) {
    if (!total_c || !total_n || !dispatch_c || !dispatch_n)
        throw Error("channel volumes must be positive");
    TileCycles tc;
    const u64 pairs = blk.pairs;
    const u64 macs = pairs * total_c * total_n;
    const u64 steps_c = ceil_div(total_c, dispatch_c);
    const u64 steps_n = ceil_div(total_n, dispatch_n);

    tc.backend = ceil_div(macs, core.muls_per_cycle());
    tc.frontend = ceil_div(pairs, core.lookups_per_cycle) * steps_c * steps_n;
    tc.total = std::max(tc.backend, tc.frontend) + drain_cycles;

    // weight planes this block actually touches
    u64 planes = 0;
    if (!blk.entries.empty()) {
        std::vector<u32> merged(blk.entries[0].mask.size(), 0);
        for (const auto& e : blk.entries)
            for (size_t w = 0; w < merged.size(); ++w) merged[w] |= e.mask[w];
        for (u32 w : merged) planes += std::popcount(w);
    }

    tc.traffic.inputs =
        pairs * total_c * steps_n * (knobs.input_multicast ? 1 : core.pes_per_denn);
    u64 weight_share = knobs.systolic_weights ? core.denn_count / knobs.systolic_group
                                              : core.denn_count;
    tc.traffic.weights = planes * total_c * total_n * weight_share;
    bool accumulate_locally = knobs.local_accum && dispatch_c > 15 && dispatch_n > 15;
    u64 out_elems = flavor == CoirFlavor::Cirf ? blk.anchor_count : blk.unique_partners;
    tc.traffic.outputs = accumulate_locally ? out_elems * total_n
                                            : 2 * pairs * total_n * steps_c;
    tc.traffic.metadata = blk.words;
    return tc;
}

WavesReport waves_occupancy(const MetadataBlock& blk, int kernel_volume, u64 buffer_words) {
    WavesReport r;
    std::vector<u64> plane_pairs(kernel_volume, 0);
    for (const auto& e : blk.entries)
        for (int w = 0; w < kernel_volume; ++w)
            if (e.mask_bit(w)) ++plane_pairs[w];

    const u64 tuple_words = 4;
    u64 fixed_cap_per_plane = buffer_words / (static_cast<u64>(kernel_volume) * tuple_words);
    u64 linklist_cap = buffer_words / (tuple_words + 1);

    u64 tuples_total = 0, fixed_stored = 0;
    for (u64 p : plane_pairs) {
        u64 tuples = ceil_div(p, 4);
        tuples_total += tuples;
        fixed_stored += std::min(tuples, fixed_cap_per_plane);
    }
    r.plane_tuples_total = tuples_total;
    r.fixed_stored = fixed_stored;
    r.linklist_stored = std::min(tuples_total, linklist_cap);
    if (fixed_stored > 0)
        r.ratio = static_cast<double>(r.linklist_stored) / static_cast<double>(fixed_stored);
    else
        r.ratio = r.linklist_stored > 0 ? static_cast<double>(r.linklist_stored) : 1.0;
    return r;
}

Schedule schedule_tiles(std::vector<TileWork> tiles, u32 cores, u32 n_groups, bool sort_by_ops) {
    if (!cores || !n_groups || cores % n_groups != 0)
        throw Error("core count must divide into groups");
    u32 per_group = cores / n_groups;
    for (const auto& t : tiles)
        if (t.n_group >= n_groups) throw Error("tile group id out of range");

    if (sort_by_ops)
        std::stable_sort(tiles.begin(), tiles.end(), [](const TileWork& a, const TileWork& b) {
            if (a.ops != b.ops) return a.ops > b.ops;
            return a.id < b.id;
        });

    Schedule sched;
    sched.core_busy.assign(cores, 0);
    std::vector<u64> avail(cores, 0);
    for (const auto& t : tiles) {
        u32 base = t.n_group * per_group;
        u32 pick = base;
        for (u32 c = base; c < base + per_group; ++c)
            if (avail[c] < avail[pick]) pick = c;
        ScheduledTile st;
        st.id = t.id;
        st.core = pick;
        st.start = avail[pick];
        st.end = st.start + t.duration;
        avail[pick] = st.end;
        sched.core_busy[pick] += t.duration;
        sched.makespan = std::max(sched.makespan, st.end);
        sched.tiles.push_back(st);
    }
    return sched;
}

namespace {

u64 cycles_for_words(u64 words, double words_per_clk) {
    if (words == 0) return 0;
    return static_cast<u64>(std::ceil(static_cast<double>(words) / words_per_clk));
}

struct BlockWork {
    u32 block = 0;
    u64 compute = 0;
    u64 exchange_words = 0;
    u64 entries = 0;
    u64 macs = 0;
    u64 uops = 0;
    u64 l1_words = 0;
    u64 pairs = 0;
};

}  // namespace

SimReport simulate_network(const std::vector<LayerSimInput>& layers, const ArchConfig& arch) {
    arch.validate();
    SimReport report;
    u64 otf_done = 0;
    u64 dma_cursor = 0;
    u64 exec_prev_end = 0;

    for (const auto& L : layers) {
        LayerCounters lc;
        lc.name = L.name;
        otf_done += L.otf_cycles;
        report.otf_total_cycles += L.otf_cycles;
        const u64 layer_ready = std::max(exec_prev_end, otf_done);

        const u32 R2 = L.l2_regions.regions();
        lc.l2_tiles = R2;
        if (R2 == 0) {
            lc.start = lc.end = layer_ready;
            exec_prev_end = layer_ready;
            report.layers.push_back(lc);
            continue;
        }

        std::vector<u64> tile_words = per_region_traffic(L.l2_choice, L.l2_regions, L.shape);
        for (u64 w : tile_words) lc.dram_l2_words += w;

        // L1 blocks grouped under their L2 tile by anchor position
        const u64 l1_delta = L.l1_blocks.anchors_per_tile;
        const u64 l2_delta = L.l2_choice.delta_anchor;
        std::vector<std::vector<u32>> blocks_of(R2);
        for (u32 b = 0; b < L.l1_blocks.blocks.size(); ++b) {
            u64 owner = (static_cast<u64>(b) * l1_delta) / l2_delta;
            blocks_of[static_cast<u32>(std::min<u64>(owner, R2 - 1))].push_back(b);
        }

        const bool out_anchored = L.l1_choice.flavor == CoirFlavor::Cirf;
        std::vector<u64> exec_start(R2, 0), exec_end(R2, 0);
        std::vector<u64> dma_end(R2, 0);
        u64 prev_end = layer_ready;

        for (u32 t = 0; t < R2; ++t) {
            // inbound stream: serialized engine, slot reuse two tiles back
            u64 entries_t = t < L.tile_dma_entries.size() ? L.tile_dma_entries[t] : 0;
            u64 duration = cycles_for_words(tile_words[t], arch.dram_words_per_clk()) + entries_t;
            u64 start_floor = std::max(dma_cursor, otf_done);
            if (t >= 2) start_floor = std::max(start_floor, exec_end[t - 2]);
            dma_end[t] = start_floor + duration;
            dma_cursor = dma_end[t];
            lc.dma_busy += duration;

            exec_start[t] = std::max(prev_end, dma_end[t]);

            // per-block work at the core level
            RegionTable tile_table;
            tile_table.delta_anchor = static_cast<u32>(l1_delta);
            u64 tile_anchors = 0;
            for (u32 b : blocks_of[t]) {
                const MetadataBlock& blk = L.l1_blocks.blocks[b];
                tile_table.anchors.push_back(blk.anchor_count);
                tile_table.unique.push_back(blk.unique_partners);
                tile_table.pairs.push_back(blk.pairs);
                tile_anchors += blk.anchor_count;
            }
            LayerShape ws = L.shape;
            if (out_anchored) ws.O = std::max<u64>(1, tile_anchors);
            else ws.I = std::max<u64>(1, tile_anchors);
            std::vector<u64> exchange =
                per_region_traffic(L.l1_choice, tile_table, ws);

            std::vector<BlockWork> work;
            std::vector<TileWork> tw;
            for (size_t j = 0; j < blocks_of[t].size(); ++j) {
                const MetadataBlock& blk = L.l1_blocks.blocks[blocks_of[t][j]];
                TileCycles cyc = sspnna_tile_cycles(
                    blk, L.l1_choice.flavor, L.shape.C, L.shape.N, L.l1_choice.delta_c,
                    L.l1_choice.delta_n, arch.core, arch.knobs, arch.drain_cycles);
                BlockWork bw;
                bw.block = blocks_of[t][j];
                bw.compute = cyc.total;
                bw.exchange_words = exchange[j];
                bw.entries = blk.unique_partners + 2;
                bw.macs = blk.pairs * L.shape.C * L.shape.N;
                bw.uops = uop_count(bw.macs, L.l1_choice.delta_c, L.l1_choice.delta_n).uops;
                bw.l1_words = cyc.traffic.total();
                bw.pairs = blk.pairs;
                work.push_back(bw);

                TileWork w;
                w.id = static_cast<u32>(j);
                w.duration = cyc.total;
                w.ops = bw.macs;
                w.words_in = bw.exchange_words;
                tw.push_back(w);

                lc.macs += bw.macs;
                lc.uops += bw.uops;
                lc.l1_words += bw.l1_words;
                lc.l2_l1_words += bw.exchange_words;
                lc.pairs += bw.pairs;
                ++lc.l1_tiles;
            }

            Schedule sched = schedule_tiles(tw, arch.cores, arch.n_groups, true);
            // per-core sequences in assigned start order
            std::vector<std::vector<u32>> seq(arch.cores);
            {
                std::vector<const ScheduledTile*> by_start;
                for (const auto& st : sched.tiles) by_start.push_back(&st);
                std::stable_sort(by_start.begin(), by_start.end(),
                                 [](const ScheduledTile* a, const ScheduledTile* b) {
                                     if (a->start != b->start) return a->start < b->start;
                                     return a->id < b->id;
                                 });
                for (const ScheduledTile* st : by_start) seq[st->core].push_back(st->id);
            }

            // exclusive L2 port, grants in request order, ties to lower core id
            std::vector<u64> core_ready(arch.cores, exec_start[t]);
            std::vector<u32> next(arch.cores, 0);
            u64 bus_free = exec_start[t];
            u64 tile_end = exec_start[t];
            while (true) {
                u32 pick = arch.cores;
                for (u32 c = 0; c < arch.cores; ++c) {
                    if (next[c] >= seq[c].size()) continue;
                    if (pick == arch.cores || core_ready[c] < core_ready[pick]) pick = c;
                }
                if (pick == arch.cores) break;
                const BlockWork& bw = work[seq[pick][next[pick]]];
                u64 grant = std::max(bus_free, core_ready[pick]);
                u64 exch = cycles_for_words(bw.exchange_words, arch.bus_words_per_clk) + bw.entries;
                lc.core_idle += grant - core_ready[pick];
                lc.core_exchange += exch;
                lc.core_compute += bw.compute;
                bus_free = grant + exch;
                core_ready[pick] = grant + exch + bw.compute;
                tile_end = std::max(tile_end, core_ready[pick]);
                ++next[pick];
            }
            exec_end[t] = tile_end;
            prev_end = tile_end;
        }

        lc.start = layer_ready;
        lc.end = exec_end[R2 - 1];
        lc.cycles = lc.end - lc.start;
        u64 span = lc.end - exec_start[0];
        if (span > 0) {
            // barrier waits between tiles show up here as well
            u64 total_core_cycles = span * arch.cores;
            u64 busy = lc.core_compute + lc.core_exchange;
            lc.core_idle = total_core_cycles > busy ? total_core_cycles - busy : 0;
            lc.core_utilization = static_cast<double>(busy) / static_cast<double>(total_core_cycles);
        }
        exec_prev_end = lc.end;
        report.layers.push_back(lc);
    }
    report.total_cycles = exec_prev_end;
    return report;
}

EnergyBreakdown energy(const LayerCounters& layer, const EnergyTable& table) {
    EnergyBreakdown e;
    e.dram = static_cast<double>(layer.dram_l2_words) * table.dram_word;
    e.l2 = static_cast<double>(layer.l2_l1_words) * table.l2_word;
    e.l1 = static_cast<double>(layer.l1_words) * table.l1_word;
    e.mac = static_cast<double>(layer.macs) * table.mac;
    e.uop = static_cast<double>(layer.uops) * table.uop;
    return e;
}

EnergyBreakdown energy(const SimReport& report, const EnergyTable& table) {
    EnergyBreakdown total;
    for (const auto& layer : report.layers) {
        EnergyBreakdown e = energy(layer, table);
        total.dram += e.dram;
        total.l2 += e.l2;
        total.l1 += e.l1;
        total.mac += e.mac;
        total.uop += e.uop;
    }
    return total;
}

void write_report_json(std::ostream& os, const SimReport& report, const EnergyTable& table) {
    nlohmann::json j;
    j["total_cycles"] = report.total_cycles;
    j["otf_cycles"] = report.otf_total_cycles;
    EnergyBreakdown tot = energy(report, table);
    j["energy"] = {{"dram", tot.dram}, {"l2", tot.l2},   {"l1", tot.l1},
                   {"mac", tot.mac},   {"uop", tot.uop}, {"total", tot.total()}};
    j["layers"] = nlohmann::json::array();
    for (const auto& lc : report.layers) {
        EnergyBreakdown e = energy(lc, table);
        nlohmann::json lj;
        lj["name"] = lc.name;
        lj["cycles"] = lc.cycles;
        lj["start"] = lc.start;
        lj["end"] = lc.end;
        lj["core_compute"] = lc.core_compute;
        lj["core_exchange"] = lc.core_exchange;
        lj["core_idle"] = lc.core_idle;
        lj["core_utilization"] = lc.core_utilization;
        lj["dma_busy"] = lc.dma_busy;
        lj["dram_l2_words"] = lc.dram_l2_words;
        lj["l2_l1_words"] = lc.l2_l1_words;
        lj["l1_words"] = lc.l1_words;
        lj["macs"] = lc.macs;
        lj["uops"] = lc.uops;
        lj["pairs"] = lc.pairs;
        lj["l2_tiles"] = lc.l2_tiles;
        lj["l1_tiles"] = lc.l1_tiles;
        lj["energy"] = e.total();
        j["layers"].push_back(lj);
    }
    os << j.dump(2) << '\n';
}

void write_report_csv(std::ostream& os, const SimReport& report, const EnergyTable& table) {
    os << "layer,counter,value\n";
    for (const auto& lc : report.layers) {
        auto row = [&](const char* counter, double value) {
            os << lc.name << ',' << counter << ',' << value << '\n';
        };
        row("cycles", static_cast<double>(lc.cycles));
        row("core_compute", static_cast<double>(lc.core_compute));
        row("core_exchange", static_cast<double>(lc.core_exchange));
        row("core_idle", static_cast<double>(lc.core_idle));
        row("core_utilization", lc.core_utilization);
        row("dma_busy", static_cast<double>(lc.dma_busy));
        row("dram_l2_words", static_cast<double>(lc.dram_l2_words));
        row("l2_l1_words", static_cast<double>(lc.l2_l1_words));
        row("l1_words", static_cast<double>(lc.l1_words));
        row("macs", static_cast<double>(lc.macs));
        row("uops", static_cast<double>(lc.uops));
        row("pairs", static_cast<double>(lc.pairs));
        row("l2_tiles", static_cast<double>(lc.l2_tiles));
        row("l1_tiles", static_cast<double>(lc.l1_tiles));
        row("energy", energy(lc, table).total());
    }
    os << "total,cycles," << report.total_cycles << '\n';
    os << "total,otf_cycles," << report.otf_total_cycles << '\n';
    os << "total,energy," << energy(report, table).total() << '\n';
}

}  // namespace voxsparse
