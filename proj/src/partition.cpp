#include "cob/partition.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <tuple>

#include "cob/common.hpp"
#include "cob/rng.hpp"

namespace cob {

namespace {

// One graph in the coarsening hierarchy, with merged-edge and merged-node
// weights. Level 0 is the input graph with unit weights.
struct Level {
    int n = 0;
    std::vector<std::int64_t> off;
    std::vector<int> adj;
    std::vector<std::int64_t> ew;
    std::vector<std::int64_t> vw;
    std::vector<int> fine_to_coarse;  // indexed by the finer level's node ids
};

std::vector<int> shuffled_ids(int n, Rng& rng) {
    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    for (int i = n - 1; i > 0; --i) {
        const int j = static_cast<int>(rng.next_below(static_cast<std::uint64_t>(i) + 1));
        std::swap(order[i], order[j]);
    }
    return order;
}

Level level_from_graph(const Graph& g) {
    Level lv;
    lv.n = g.num_nodes;
    lv.off = g.csr_offsets;
    lv.adj.assign(g.csr_neighbors.begin(), g.csr_neighbors.end());
    lv.ew.assign(lv.adj.size(), 1);
    lv.vw.assign(static_cast<std::size_t>(lv.n), 1);
    return lv;
}

// Heavy-edge matching: visit nodes in random order, pair each unmatched node
// with its unmatched neighbor of largest edge weight (ties to the smallest
// id), subject to the merged node weight staying under weight_limit.
Level coarsen(const Level& fine, std::int64_t weight_limit, Rng& rng) {
    const std::vector<int> order = shuffled_ids(fine.n, rng);
    std::vector<int> mate(static_cast<std::size_t>(fine.n), -1);
    for (int u : order) {
        if (mate[u] != -1) continue;
        int best = -1;
        std::int64_t best_w = -1;
        for (std::int64_t k = fine.off[u]; k < fine.off[u + 1]; ++k) {
            const int v = fine.adj[k];
            if (mate[v] != -1 || v == u) continue;
            if (fine.vw[u] + fine.vw[v] > weight_limit) continue;
            if (fine.ew[k] > best_w || (fine.ew[k] == best_w && v < best)) {
                best_w = fine.ew[k];
                best = v;
            }
        }
        mate[u] = best == -1 ? u : best;
        if (best != -1) mate[best] = u;
    }

    Level coarse;
    coarse.fine_to_coarse.assign(static_cast<std::size_t>(fine.n), -1);
    int next_id = 0;
    for (int u : order) {
        if (coarse.fine_to_coarse[u] != -1) continue;
        coarse.fine_to_coarse[u] = next_id;
        coarse.fine_to_coarse[mate[u]] = next_id;
        ++next_id;
    }
    coarse.n = next_id;
    coarse.vw.assign(static_cast<std::size_t>(next_id), 0);
    for (int u = 0; u < fine.n; ++u) coarse.vw[coarse.fine_to_coarse[u]] += fine.vw[u];

    std::vector<std::tuple<int, int, std::int64_t>> arcs;
    arcs.reserve(fine.adj.size());
    for (int u = 0; u < fine.n; ++u) {
        const int cu = coarse.fine_to_coarse[u];
        for (std::int64_t k = fine.off[u]; k < fine.off[u + 1]; ++k) {
            const int cv = coarse.fine_to_coarse[fine.adj[k]];
            if (cu != cv) arcs.emplace_back(cu, cv, fine.ew[k]);
        }
    }
    std::sort(arcs.begin(), arcs.end(),
              [](const auto& a, const auto& b) {
                  return std::tie(std::get<0>(a), std::get<1>(a)) <
                         std::tie(std::get<0>(b), std::get<1>(b));
              });
    coarse.off.assign(static_cast<std::size_t>(next_id) + 1, 0);
    for (std::size_t i = 0; i < arcs.size();) {
        std::size_t j = i;
        std::int64_t w = 0;
        while (j < arcs.size() && std::get<0>(arcs[j]) == std::get<0>(arcs[i]) &&
               std::get<1>(arcs[j]) == std::get<1>(arcs[i])) {
            w += std::get<2>(arcs[j]);
            ++j;
        }
        coarse.adj.push_back(std::get<1>(arcs[i]));
        coarse.ew.push_back(w);
        ++coarse.off[std::get<0>(arcs[i]) + 1];
        i = j;
    }
    for (int c = 0; c < next_id; ++c) coarse.off[c + 1] += coarse.off[c];
    return coarse;
}

struct PartState {
    int P;
    std::int64_t cap;
    std::vector<int> part;            // coarse node -> cluster
    std::vector<std::int64_t> load;   // cluster -> total fine-node weight
    std::vector<int> count;           // cluster -> coarse node count
};

// Weight of u's edges into each cluster touched by its neighborhood.
// Returns (weight into own cluster, best other cluster, weight into it).
struct NeighborLink {
    std::int64_t internal = 0;
    int best = -1;
    std::int64_t best_w = -1;
};

NeighborLink scan_links(const Level& lv, const PartState& st, int u,
                        std::vector<std::int64_t>& wbuf, std::vector<int>& touched) {
    touched.clear();
    for (std::int64_t k = lv.off[u]; k < lv.off[u + 1]; ++k) {
        const int p = st.part[lv.adj[k]];
        if (wbuf[p] == 0) touched.push_back(p);
        wbuf[p] += lv.ew[k];
    }
    NeighborLink out;
    const int own = st.part[u];
    for (int p : touched) {
        if (p == own) {
            out.internal = wbuf[p];
        } else if (wbuf[p] > out.best_w || (wbuf[p] == out.best_w && p < out.best)) {
            out.best_w = wbuf[p];
            out.best = p;
        }
        wbuf[p] = 0;
    }
    return out;
}

// (weight into u's own cluster, weight into `target`) for a prospective swap.
std::pair<std::int64_t, std::int64_t> links_toward(const Level& lv, const PartState& st, int u,
                                                   int target) {
    std::int64_t internal = 0, toward = 0;
    const int own = st.part[u];
    for (std::int64_t k = lv.off[u]; k < lv.off[u + 1]; ++k) {
        const int p = st.part[lv.adj[k]];
        if (p == own) internal += lv.ew[k];
        if (p == target) toward += lv.ew[k];
    }
    return {internal, toward};
}

std::int64_t edge_weight_between(const Level& lv, int u, int v) {
    for (std::int64_t k = lv.off[u]; k < lv.off[u + 1]; ++k)
        if (lv.adj[k] == v) return lv.ew[k];
    return 0;
}

void region_grow_initial(const Level& lv, PartState& st, Rng& rng) {
    const int P = st.P;
    st.part.assign(static_cast<std::size_t>(lv.n), -1);
    st.load.assign(static_cast<std::size_t>(P), 0);
    st.count.assign(static_cast<std::size_t>(P), 0);

    const std::vector<int> order = shuffled_ids(lv.n, rng);
    std::vector<std::vector<int>> queue(static_cast<std::size_t>(P));
    std::vector<std::size_t> head(static_cast<std::size_t>(P), 0);
    for (int p = 0; p < P; ++p) {
        const int s = order[p];
        st.part[s] = p;
        st.load[p] += lv.vw[s];
        st.count[p] += 1;
        queue[p].push_back(s);
    }
    bool progressed = true;
    while (progressed) {
        progressed = false;
        for (int p = 0; p < P; ++p) {
            while (head[p] < queue[p].size()) {
                const int u = queue[p][head[p]];
                bool claimed = false;
                for (std::int64_t k = lv.off[u]; k < lv.off[u + 1]; ++k) {
                    const int v = lv.adj[k];
                    if (st.part[v] != -1) continue;
                    if (st.load[p] + lv.vw[v] > st.cap) continue;
                    st.part[v] = p;
                    st.load[p] += lv.vw[v];
                    st.count[p] += 1;
                    queue[p].push_back(v);
                    claimed = true;
                    progressed = true;
                    break;
                }
                if (claimed) break;
                ++head[p];
            }
        }
    }
    // Leftovers (disconnected pieces, capacity skips): smallest cluster that
    // fits, else smallest outright; coarse-level overflow shrinks as weights
    // refine toward 1.
    for (int u : order) {
        if (st.part[u] != -1) continue;
        int best = -1, best_any = 0;
        for (int p = 0; p < P; ++p) {
            if (st.load[p] < st.load[best_any]) best_any = p;
            if (st.load[p] + lv.vw[u] > st.cap) continue;
            if (best == -1 || st.load[p] < st.load[best]) best = p;
        }
        if (best == -1) best = best_any;
        st.part[u] = best;
        st.load[best] += lv.vw[u];
        st.count[best] += 1;
    }
}

std::int64_t state_cut(const Level& lv, const PartState& st) {
    std::int64_t cut = 0;
    for (int u = 0; u < lv.n; ++u)
        for (std::int64_t k = lv.off[u]; k < lv.off[u + 1]; ++k)
            if (st.part[u] != st.part[lv.adj[k]]) cut += lv.ew[k];
    return cut / 2;
}

std::int64_t overload_sum(const PartState& st) {
    std::int64_t over = 0;
    for (std::int64_t l : st.load) over += std::max<std::int64_t>(0, l - st.cap);
    return over;
}

void move_node(const Level& lv, PartState& st, int u, int to) {
    const int from = st.part[u];
    st.part[u] = to;
    st.load[from] -= lv.vw[u];
    st.load[to] += lv.vw[u];
    st.count[from] -= 1;
    st.count[to] += 1;
}

// Drain clusters above capacity by pushing out the nodes whose departure
// hurts the cut least, into the lightest cluster (preferring a linked one).
void rebalance(const Level& lv, PartState& st) {
    std::vector<std::int64_t> wbuf(static_cast<std::size_t>(st.P), 0);
    std::vector<int> touched;
    for (int p = 0; p < st.P; ++p) {
        int guard = lv.n + 1;
        while (st.load[p] > st.cap && st.count[p] > 1 && guard-- > 0) {
            int pick = -1, pick_to = -1;
            std::int64_t pick_score = 0;
            for (int u = 0; u < lv.n; ++u) {
                if (st.part[u] != p) continue;
                const NeighborLink ln = scan_links(lv, st, u, wbuf, touched);
                int to = -1;
                for (int q = 0; q < st.P; ++q) {
                    if (q == p || st.load[q] + lv.vw[u] > st.cap) continue;
                    if (to == -1 || st.load[q] < st.load[to]) to = q;
                }
                if (ln.best != -1 && st.load[ln.best] + lv.vw[u] <= st.cap) to = ln.best;
                if (to == -1) continue;
                const std::int64_t score = (to == ln.best ? ln.best_w : 0) - ln.internal;
                if (pick == -1 || score > pick_score) {
                    pick = u;
                    pick_to = to;
                    pick_score = score;
                }
            }
            if (pick == -1) break;
            move_node(lv, st, pick, pick_to);
        }
    }
}

// Exchange pairs of nodes across clusters when the combined gain is positive.
// Swaps keep cluster sizes fixed, so they make progress even when every
// cluster sits at capacity and single moves are blocked. A shared edge between
// the pair stays cut after the exchange, hence the -2*w_uv correction.
std::int64_t swap_sweep(const Level& lv, PartState& st, Rng& rng,
                        std::vector<std::int64_t>& wbuf, std::vector<int>& touched) {
    std::vector<std::vector<int>> members(static_cast<std::size_t>(st.P));
    for (int u = 0; u < lv.n; ++u) members[st.part[u]].push_back(u);
    std::int64_t swaps = 0;
    for (int u : shuffled_ids(lv.n, rng)) {
        const int p = st.part[u];
        const NeighborLink ln = scan_links(lv, st, u, wbuf, touched);
        if (ln.best == -1) continue;
        const int q = ln.best;
        const std::int64_t gain_u = ln.best_w - ln.internal;
        int best_v = -1;
        std::int64_t best_total = 0;
        for (int v : members[q]) {
            const std::int64_t new_p = st.load[p] - lv.vw[u] + lv.vw[v];
            const std::int64_t new_q = st.load[q] - lv.vw[v] + lv.vw[u];
            if (new_p > std::max(st.cap, st.load[p]) || new_q > std::max(st.cap, st.load[q]))
                continue;
            const auto [v_internal, v_toward] = links_toward(lv, st, v, p);
            const std::int64_t total =
                gain_u + (v_toward - v_internal) - 2 * edge_weight_between(lv, u, v);
            if (total > best_total) {
                best_total = total;
                best_v = v;
            }
        }
        if (best_v == -1) continue;
        move_node(lv, st, u, q);
        move_node(lv, st, best_v, p);
        members[q].erase(std::find(members[q].begin(), members[q].end(), best_v));
        members[q].push_back(u);
        auto it = std::find(members[p].begin(), members[p].end(), u);
        *it = best_v;
        ++swaps;
    }
    return swaps;
}

// Greedy boundary passes: move a node to its most-linked other cluster when
// that strictly reduces the cut, fits under capacity, and leaves no cluster
// empty. When single moves stall, try pairwise exchanges. Each pass is checked
// to never raise the cut or the overload.
void refine(const Level& lv, PartState& st, Rng& rng) {
    std::vector<std::int64_t> wbuf(static_cast<std::size_t>(st.P), 0);
    std::vector<int> touched;
    const int max_passes = 8;
    for (int pass = 0; pass < max_passes; ++pass) {
        const std::int64_t cut_before = state_cut(lv, st);
        const std::int64_t over_before = overload_sum(st);
        const std::vector<int> order = shuffled_ids(lv.n, rng);
        std::int64_t moves = 0;
        for (int u : order) {
            if (st.count[st.part[u]] <= 1) continue;
            const NeighborLink ln = scan_links(lv, st, u, wbuf, touched);
            if (ln.best == -1 || ln.best_w <= ln.internal) continue;
            if (st.load[ln.best] + lv.vw[u] > st.cap) continue;
            move_node(lv, st, u, ln.best);
            ++moves;
        }
        if (moves == 0) moves = swap_sweep(lv, st, rng, wbuf, touched);
        const std::int64_t cut_after = state_cut(lv, st);
        const std::int64_t over_after = overload_sum(st);
        if (cut_after > cut_before || over_after > over_before)
            throw ContractError("partition: refinement pass worsened cut " +
                                std::to_string(cut_before) + "->" + std::to_string(cut_after) +
                                " or overload " + std::to_string(over_before) + "->" +
                                std::to_string(over_after));
        if (moves == 0) break;
    }
}

// Every cluster must own at least one node; steal the loosest-bound node from
// the heaviest multi-node cluster.
void fix_empty_clusters(const Level& lv, PartState& st) {
    std::vector<std::int64_t> wbuf(static_cast<std::size_t>(st.P), 0);
    std::vector<int> touched;
    for (int p = 0; p < st.P; ++p) {
        while (st.count[p] == 0) {
            int donor = -1;
            for (int q = 0; q < st.P; ++q)
                if (st.count[q] > 1 && (donor == -1 || st.load[q] > st.load[donor])) donor = q;
            if (donor == -1)
                throw ContractError("partition: cannot populate empty cluster " +
                                    std::to_string(p));
            int pick = -1;
            std::int64_t pick_internal = 0;
            for (int u = 0; u < lv.n; ++u) {
                if (st.part[u] != donor) continue;
                const NeighborLink ln = scan_links(lv, st, u, wbuf, touched);
                if (pick == -1 || ln.internal < pick_internal) {
                    pick = u;
                    pick_internal = ln.internal;
                }
            }
            move_node(lv, st, pick, p);
        }
    }
}

std::vector<int> partition_core(const Graph& graph, int P, std::int64_t cap, std::uint64_t seed,
                                std::int64_t* cut_out) {
    Rng rng(seed);
    std::vector<Level> levels;
    levels.push_back(level_from_graph(graph));
    const int coarse_target = std::max(30 * P, 2 * P);
    const std::int64_t weight_limit = std::max<std::int64_t>(1, cap / 2);
    while (levels.back().n > coarse_target) {
        Level next = coarsen(levels.back(), weight_limit, rng);
        if (next.n >= levels.back().n * 95 / 100) break;
        levels.push_back(std::move(next));
    }

    PartState st;
    st.P = P;
    st.cap = cap;
    region_grow_initial(levels.back(), st, rng);
    rebalance(levels.back(), st);
    refine(levels.back(), st, rng);

    for (std::size_t li = levels.size() - 1; li > 0; --li) {
        const Level& fine = levels[li - 1];
        const std::vector<int>& map = levels[li].fine_to_coarse;
        PartState fst;
        fst.P = P;
        fst.cap = cap;
        fst.part.resize(static_cast<std::size_t>(fine.n));
        fst.load.assign(static_cast<std::size_t>(P), 0);
        fst.count.assign(static_cast<std::size_t>(P), 0);
        for (int u = 0; u < fine.n; ++u) {
            const int p = st.part[map[u]];
            fst.part[u] = p;
            fst.load[p] += fine.vw[u];
            fst.count[p] += 1;
        }
        st = std::move(fst);
        rebalance(fine, st);
        refine(fine, st, rng);
    }

    fix_empty_clusters(levels[0], st);
    rebalance(levels[0], st);
    refine(levels[0], st, rng);

    if (cut_out != nullptr) *cut_out = state_cut(levels[0], st);
    return std::move(st.part);
}

}  // namespace

std::int64_t Partition::capacity(int num_nodes, int P, double epsilon) {
    const std::int64_t target = (static_cast<std::int64_t>(num_nodes) + P - 1) / P;
    return static_cast<std::int64_t>(std::floor((1.0 + epsilon) * static_cast<double>(target)));
}

void Partition::validate(int num_nodes) const {
    if (P < 1) throw ContractError("partition: P must be >= 1");
    if (static_cast<int>(assignment.size()) != num_nodes)
        throw ContractError("partition: assignment length mismatch");
    if (static_cast<int>(members.size()) != P)
        throw ContractError("partition: members length mismatch");
    const std::int64_t cap = capacity(num_nodes, P, epsilon);
    std::int64_t covered = 0;
    for (int p = 0; p < P; ++p) {
        if (members[p].empty())
            throw ContractError("partition: cluster " + std::to_string(p) + " is empty");
        if (static_cast<std::int64_t>(members[p].size()) > cap)
            throw ContractError("partition: cluster " + std::to_string(p) + " holds " +
                                std::to_string(members[p].size()) + " nodes, capacity " +
                                std::to_string(cap));
        for (NodeId u : members[p]) {
            if (u < 0 || u >= num_nodes || assignment[u] != p)
                throw ContractError("partition: membership and assignment disagree at node " +
                                    std::to_string(u));
        }
        covered += static_cast<std::int64_t>(members[p].size());
    }
    if (covered != num_nodes)
        throw ContractError("partition: members cover " + std::to_string(covered) + " of " +
                            std::to_string(num_nodes) + " nodes");
}

Partition partition_multilevel(const Graph& graph, int P, double epsilon, std::uint64_t seed) {
    const int n = graph.num_nodes;
    if (P < 1 || P > n)
        throw ConfigError("partition: P must lie in [1, N], got P=" + std::to_string(P) +
                          " N=" + std::to_string(n));
    if (epsilon < 0.0) throw ConfigError("partition: epsilon must be >= 0");
    const std::int64_t cap = Partition::capacity(n, P, epsilon);
    if (cap * P < n)
        throw ConfigError("partition: infeasible balance, capacity " + std::to_string(cap) +
                          " x " + std::to_string(P) + " clusters < " + std::to_string(n) +
                          " nodes");

    Partition out;
    out.P = P;
    out.epsilon = epsilon;
    if (P == 1) {
        out.assignment.assign(static_cast<std::size_t>(n), 0);
        out.members.resize(1);
        out.members[0].resize(static_cast<std::size_t>(n));
        std::iota(out.members[0].begin(), out.members[0].end(), 0);
        out.validate(n);
        return out;
    }

    // Small instances are cheap enough to partition several times from
    // different seeds and keep the lowest cut; large ones get a single
    // multilevel run.
    const int restarts = (n <= 64 && P <= 8) ? 8 : 1;
    std::vector<int> best_part;
    std::int64_t best_cut = 0;
    for (int r = 0; r < restarts; ++r) {
        std::int64_t cut = 0;
        std::vector<int> part =
            partition_core(graph, P, cap, derive_seed(seed, 11, static_cast<std::uint64_t>(r), 0),
                           &cut);
        if (r == 0 || cut < best_cut) {
            best_cut = cut;
            best_part = std::move(part);
        }
    }

    out.assignment = std::move(best_part);
    out.members.assign(static_cast<std::size_t>(P), {});
    for (int u = 0; u < n; ++u) out.members[out.assignment[u]].push_back(u);
    out.validate(n);
    return out;
}

std::int64_t edge_cut(const Graph& graph, const Partition& part) {
    if (static_cast<int>(part.assignment.size()) != graph.num_nodes)
        throw ValidationError("edge_cut: partition does not cover the graph");
    std::int64_t cut = 0;
    for (NodeId u = 0; u < graph.num_nodes; ++u)
        for (NodeId v : graph.neighbors(u))
            if (v > u && part.assignment[u] != part.assignment[v]) ++cut;
    return cut;
}

}  // namespace cob
