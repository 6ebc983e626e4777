#include "voxsparse/soar.hpp"

#include <algorithm>
#include <deque>
#include <istream>
#include <numeric>
#include <ostream>
#include <set>
#include <string>

namespace voxsparse {

u64 ChunkOrder::total() const {
    u64 n = 0;
    for (const auto& c : chunks) n += c.size();
    return n;
}

std::vector<u32> ChunkOrder::flatten() const {
    std::vector<u32> out;
    out.reserve(total());
    for (const auto& c : chunks) out.insert(out.end(), c.begin(), c.end());
    return out;
}

std::vector<u32> ChunkOrder::chunk_of() const {
    std::vector<u32> owner(total(), 0);
    for (u32 ci = 0; ci < chunks.size(); ++ci)
        for (u32 v : chunks[ci]) {
            if (v >= owner.size()) owner.resize(v + 1, UINT32_MAX);
            owner[v] = ci;
        }
    return owner;
}

void ChunkOrder::validate(u32 universe, u32 max_voxels) const {
    std::vector<bool> seen(universe, false);
    u64 covered = 0;
    for (const auto& c : chunks) {
        if (c.empty()) throw Error("empty chunk");
        if (c.size() > max_voxels) throw Error("chunk exceeds capacity");
        for (u32 v : c) {
            if (v >= universe) throw Error("chunk references unknown voxel");
            if (seen[v]) throw Error("voxel assigned to two chunks");
            seen[v] = true;
            ++covered;
        }
    }
    if (covered != universe) throw Error("chunks do not cover the voxel set");
}

ChunkOrder soar_chunk(const std::vector<std::vector<u32>>& graph, u32 max_voxels) {
    if (max_voxels == 0) throw Error("chunk capacity must be positive");
    const u32 n = static_cast<u32>(graph.size());
    ChunkOrder order;
    if (n == 0) return order;

    std::vector<u32> degree(n);
    for (u32 i = 0; i < n; ++i) degree[i] = static_cast<u32>(graph[i].size());

    // global root scan order: ascending (degree, index), consumed left to right
    std::vector<u32> by_degree(n);
    std::iota(by_degree.begin(), by_degree.end(), 0);
    std::stable_sort(by_degree.begin(), by_degree.end(),
                     [&](u32 a, u32 b) { return degree[a] < degree[b]; });
    u32 scan = 0;

    std::vector<bool> selected(n, false);
    u32 remaining = n;
    std::deque<u32> queue;

    auto global_root = [&]() -> u32 {
        while (scan < n && selected[by_degree[scan]]) ++scan;
        return by_degree[scan];
    };

    auto select = [&](u32 v, std::vector<u32>& chunk) {
        selected[v] = true;
        --remaining;
        chunk.push_back(v);
        for (u32 nb : graph[v])
            if (!selected[nb]) queue.push_back(nb);
    };

    std::vector<u32> chunk;
    bool need_root_from_queue = false;
    while (remaining > 0) {
        // root selection for a fresh chunk, or component restart mid-chunk
        u32 root;
        if (need_root_from_queue) {
            u32 best = UINT32_MAX;
            for (u32 v : queue) {
                if (selected[v]) continue;
                if (best == UINT32_MAX || degree[v] < degree[best] ||
                    (degree[v] == degree[best] && v < best))
                    best = v;
            }
            queue.clear();
            need_root_from_queue = false;
            root = (best != UINT32_MAX) ? best : global_root();
        } else {
            root = global_root();
        }
        order.roots.push_back(root);
        select(root, chunk);

        while (chunk.size() < max_voxels) {
            if (queue.empty()) {
                if (remaining == 0) break;
                // isolated component: continue the same chunk from a fresh root
                u32 next = global_root();
                order.roots.push_back(next);
                select(next, chunk);
                continue;
            }
            u32 v = queue.front();
            queue.pop_front();
            if (selected[v]) continue;
            select(v, chunk);
        }

        order.chunks.push_back(std::move(chunk));
        chunk.clear();
        if (remaining > 0) need_root_from_queue = !queue.empty();
    }
    return order;
}

ChunkOrder soar_chunk(const AdjacencyMap& adj, u32 max_voxels) {
    std::vector<std::vector<u32>> graph(adj.size());
    for (u32 i = 0; i < adj.size(); ++i) {
        graph[i].reserve(adj.entries[i].size());
        for (const auto& nb : adj.entries[i]) graph[i].push_back(nb.index);
    }
    return soar_chunk(graph, max_voxels);
}

std::vector<std::vector<u32>> chunk_graph(const ChunkOrder& order, const AdjacencyMap& adj) {
    std::vector<u32> owner = order.chunk_of();
    std::set<std::pair<u32, u32>> edges;
    for (u32 v = 0; v < adj.size(); ++v)
        for (const auto& nb : adj.entries[v]) {
            u32 a = owner[v], b = owner[nb.index];
            if (a != b) edges.insert({std::min(a, b), std::max(a, b)});
        }
    std::vector<std::vector<u32>> graph(order.chunks.size());
    for (const auto& [a, b] : edges) {
        graph[a].push_back(b);
        graph[b].push_back(a);
    }
    for (auto& lst : graph) std::sort(lst.begin(), lst.end());
    return graph;
}

std::vector<ChunkOrder> soar_hierarchical(const AdjacencyMap& adj,
                                          const std::vector<u32>& level_capacities) {
    if (level_capacities.empty()) throw Error("need at least one chunk capacity");
    std::vector<ChunkOrder> levels;
    levels.push_back(soar_chunk(adj, level_capacities[0]));
    for (size_t l = 1; l < level_capacities.size(); ++l) {
        // reinterpret each previous-level chunk as a point
        auto graph = chunk_graph(levels[0], adj);
        if (l > 1) {
            // contract the graph level by level
            for (size_t m = 1; m < l; ++m) {
                std::vector<u32> owner = levels[m].chunk_of();
                std::set<std::pair<u32, u32>> edges;
                for (u32 v = 0; v < graph.size(); ++v)
                    for (u32 nb : graph[v]) {
                        u32 a = owner[v], b = owner[nb];
                        if (a != b) edges.insert({std::min(a, b), std::max(a, b)});
                    }
                std::vector<std::vector<u32>> next(levels[m].chunks.size());
                for (const auto& [a, b] : edges) {
                    next[a].push_back(b);
                    next[b].push_back(a);
                }
                for (auto& lst : next) std::sort(lst.begin(), lst.end());
                graph = std::move(next);
            }
        }
        levels.push_back(soar_chunk(graph, level_capacities[l]));
    }
    return levels;
}

std::vector<u32> flatten_hierarchy(const std::vector<ChunkOrder>& levels) {
    if (levels.empty()) return {};
    // order at the outermost level, expanded inward
    std::vector<u32> ids = levels.back().flatten();
    for (size_t l = levels.size() - 1; l-- > 0;) {
        std::vector<u32> expanded;
        expanded.reserve(levels[l].total());
        for (u32 cid : ids) {
            const auto& members = levels[l].chunks[cid];
            expanded.insert(expanded.end(), members.begin(), members.end());
        }
        ids = std::move(expanded);
    }
    return ids;
}

u64 boundary_edge_count(const ChunkOrder& order, const AdjacencyMap& adj) {
    std::vector<u32> owner = order.chunk_of();
    u64 crossings = 0;
    for (u32 v = 0; v < adj.size(); ++v)
        for (const auto& nb : adj.entries[v])
            if (v < nb.index && owner[v] != owner[nb.index]) ++crossings;
    return crossings;
}

u64 boundary_edge_count(const std::vector<u32>& perm, u32 window, const AdjacencyMap& adj) {
    if (window == 0) throw Error("window must be positive");
    std::vector<u32> owner(perm.size());
    for (u32 pos = 0; pos < perm.size(); ++pos) owner[perm[pos]] = pos / window;
    u64 crossings = 0;
    for (u32 v = 0; v < adj.size(); ++v)
        for (const auto& nb : adj.entries[v])
            if (v < nb.index && owner[v] != owner[nb.index]) ++crossings;
    return crossings;
}

void write_permutation(std::ostream& os, const std::vector<u32>& perm) {
    for (u32 v : perm) os << v << '\n';
    if (!os) throw Error("permutation write failed");
}

std::vector<u32> read_permutation(std::istream& is) {
    std::vector<u32> perm;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty() || line[0] == '#') continue;
        perm.push_back(static_cast<u32>(std::stoul(line)));
    }
    return perm;
}

}  // namespace voxsparse
