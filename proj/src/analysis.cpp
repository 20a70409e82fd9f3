#include "cob/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "cob/common.hpp"

namespace cob {

namespace {

void check_row_stochastic(const Tensor& m, const char* what) {
    for (int r = 0; r < m.rows(); ++r) {
        double s = 0.0;
        for (int c = 0; c < m.cols(); ++c) {
            const double v = m.at(r, c);
            if (v < -1e-12) throw ValidationError(std::string(what) + ": negative score");
            s += v;
        }
        if (std::abs(s - 1.0) > 1e-9)
            throw ValidationError(std::string(what) + ": row " + std::to_string(r) +
                                  " sums to " + std::to_string(s));
    }
}

// ring index per node via BFS: 0 for the source, k for exact distance k,
// -1 for nodes beyond max_hops (max_hops < 0 means unbounded).
void bfs_ring_index(const Graph& g, NodeId source, int max_hops, std::vector<int>& ring) {
    ring.assign(static_cast<std::size_t>(g.num_nodes), -1);
    std::vector<NodeId> frontier{source};
    ring[source] = 0;
    int depth = 0;
    while (!frontier.empty() && (max_hops < 0 || depth < max_hops)) {
        ++depth;
        std::vector<NodeId> next;
        for (NodeId u : frontier)
            for (NodeId v : g.neighbors(u))
                if (ring[v] == -1) {
                    ring[v] = depth;
                    next.push_back(v);
                }
        frontier = std::move(next);
    }
}

}  // namespace

AttnView dense_view(Tensor matrix, int layer_index) {
    if (matrix.rows() != matrix.cols()) throw ShapeError("attn view: dense matrix must be square");
    check_row_stochastic(matrix, "attn view (dense)");
    AttnView v;
    v.dense = true;
    v.n = matrix.rows();
    v.matrix = std::move(matrix);
    v.layer_index = layer_index;
    return v;
}

AttnView bga_view(const Partition& part, std::vector<Tensor> intra, Tensor inter,
                  int layer_index) {
    if (static_cast<int>(intra.size()) != part.P)
        throw ShapeError("attn view: need one intra block per cluster");
    int n = 0;
    for (int p = 0; p < part.P; ++p) {
        const int sz = static_cast<int>(part.members[p].size());
        if (intra[p].rows() != sz || intra[p].cols() != sz)
            throw ShapeError("attn view: intra block " + std::to_string(p) + " is not " +
                             std::to_string(sz) + " square");
        check_row_stochastic(intra[p], "attn view (intra)");
        n += sz;
    }
    if (inter.rows() != part.P || inter.cols() != part.P)
        throw ShapeError("attn view: inter matrix must be P x P");
    check_row_stochastic(inter, "attn view (inter)");
    AttnView v;
    v.dense = false;
    v.n = n;
    v.part = part;
    v.intra = std::move(intra);
    v.inter = std::move(inter);
    v.layer_index = layer_index;
    v.index_in_cluster.assign(static_cast<std::size_t>(n), -1);
    for (int p = 0; p < part.P; ++p)
        for (std::size_t i = 0; i < part.members[p].size(); ++i)
            v.index_in_cluster[part.members[p][i]] = static_cast<int>(i);
    return v;
}

double AttnView::intra_score(int u, int v) const {
    if (dense) return matrix.at(u, v);
    const int p = part.assignment[u];
    if (part.assignment[v] != p) return 0.0;
    return intra[p].at(index_in_cluster[u], index_in_cluster[v]);
}

void AttnView::fill_row(int u, std::vector<double>& row) const {
    row.assign(static_cast<std::size_t>(n), 0.0);
    if (dense) {
        for (int v = 0; v < n; ++v) row[v] = matrix.at(u, v);
        return;
    }
    const int p = part.assignment[u];
    const int iu = index_in_cluster[u];
    for (std::size_t i = 0; i < part.members[p].size(); ++i)
        row[part.members[p][i]] += 0.5 * intra[p].at(iu, static_cast<int>(i));
    for (int q = 0; q < part.P; ++q) {
        const double share = 0.5 * inter.at(p, q) / static_cast<double>(part.members[q].size());
        for (NodeId v : part.members[q]) row[v] += share;
    }
}

CukProfile empirical_cuk(const Graph& graph, const std::vector<int>& labels, int max_hops) {
    if (max_hops < 0) throw ConfigError("empirical_cuk: max_hops must be >= 0");
    if (static_cast<int>(labels.size()) != graph.num_nodes)
        throw ShapeError("empirical_cuk: label count mismatch");
    CukProfile prof;
    prof.mean_c.assign(static_cast<std::size_t>(max_hops) + 1, 0.0);
    prof.nodes_counted.assign(static_cast<std::size_t>(max_hops) + 1, 0);
    std::vector<int> ring;
    std::vector<std::int64_t> total(static_cast<std::size_t>(max_hops) + 1);
    std::vector<std::int64_t> same(static_cast<std::size_t>(max_hops) + 1);
    for (NodeId u = 0; u < graph.num_nodes; ++u) {
        bfs_ring_index(graph, u, max_hops, ring);
        std::fill(total.begin(), total.end(), 0);
        std::fill(same.begin(), same.end(), 0);
        for (NodeId v = 0; v < graph.num_nodes; ++v) {
            const int k = ring[v];
            if (k < 0) continue;
            ++total[k];
            if (labels[v] == labels[u]) ++same[k];
        }
        for (int k = 0; k <= max_hops; ++k) {
            if (total[k] == 0) continue;
            prof.mean_c[k] += static_cast<double>(same[k]) / static_cast<double>(total[k]);
            ++prof.nodes_counted[k];
        }
    }
    for (int k = 0; k <= max_hops; ++k)
        if (prof.nodes_counted[k] > 0)
            prof.mean_c[k] /= static_cast<double>(prof.nodes_counted[k]);
    return prof;
}

double theoretical_cuk(double rho, int num_classes, int k) {
    if (rho < 0.0 || rho > 1.0) throw ConfigError("theoretical_cuk: rho must lie in [0,1]");
    if (num_classes < 2) throw ConfigError("theoretical_cuk: need at least two classes");
    if (k < 0) throw ConfigError("theoretical_cuk: k must be >= 0");
    const double y = static_cast<double>(num_classes);
    double c = 1.0;
    for (int i = 0; i < k; ++i) c = (1.0 + y * rho * c - rho - c) / (y - 1.0);
    return c;
}

double theoretical_cuk_closed(double rho, int num_classes, int k) {
    if (rho < 0.0 || rho > 1.0) throw ConfigError("theoretical_cuk: rho must lie in [0,1]");
    if (num_classes < 2) throw ConfigError("theoretical_cuk: need at least two classes");
    if (k < 0) throw ConfigError("theoretical_cuk: k must be >= 0");
    const double y = static_cast<double>(num_classes);
    const double r = (y * rho - 1.0) / (y - 1.0);
    return 1.0 / y + (1.0 - 1.0 / y) * std::pow(r, k);
}

AttnKProfile attn_k_profile(const AttnView& view, const Graph& graph, int max_hops) {
    if (max_hops < 0) throw ConfigError("attn_k_profile: max_hops must be >= 0");
    if (view.n != graph.num_nodes) throw ShapeError("attn_k_profile: view/graph size mismatch");
    AttnKProfile prof;
    prof.bins.assign(static_cast<std::size_t>(max_hops) + 1, 0.0);
    std::vector<int> ring;
    std::vector<double> row;
    for (NodeId u = 0; u < graph.num_nodes; ++u) {
        bfs_ring_index(graph, u, max_hops, ring);
        view.fill_row(u, row);
        for (NodeId v = 0; v < graph.num_nodes; ++v) {
            const int k = ring[v];
            if (k >= 0)
                prof.bins[k] += row[v];
            else
                prof.overflow += row[v];
        }
    }
    for (double& b : prof.bins) b /= static_cast<double>(graph.num_nodes);
    prof.overflow /= static_cast<double>(graph.num_nodes);
    return prof;
}

namespace {

AttnSnrReport snr_from_masses(double same, double diff) {
    AttnSnrReport rep;
    rep.same_mass = same;
    rep.diff_mass = diff;
    if (diff <= 0.0 && same <= 0.0)
        throw ValidationError("attn_snr: no attention mass at all");
    if (diff <= 0.0) {
        rep.plus_inf = true;
        rep.snr_db = std::numeric_limits<double>::infinity();
    } else if (same <= 0.0) {
        rep.minus_inf = true;
        rep.snr_db = -std::numeric_limits<double>::infinity();
    } else {
        rep.snr_db = 10.0 * std::log10(same / diff);
    }
    return rep;
}

}  // namespace

AttnSnrReport attn_snr_masses(const Tensor& masses, const std::vector<int>& labels) {
    if (masses.rows() != masses.cols() || masses.rows() != static_cast<int>(labels.size()))
        throw ShapeError("attn_snr: mass matrix / label mismatch");
    double same = 0.0, diff = 0.0;
    for (int u = 0; u < masses.rows(); ++u)
        for (int v = 0; v < masses.cols(); ++v)
            (labels[u] == labels[v] ? same : diff) += masses.at(u, v);
    return snr_from_masses(same, diff);
}

AttnSnrReport attn_snr(const AttnView& view, const std::vector<int>& labels) {
    if (static_cast<int>(labels.size()) != view.n)
        throw ShapeError("attn_snr: label count mismatch");
    if (view.dense) return attn_snr_masses(view.matrix, labels);
    double same = 0.0, diff = 0.0;
    for (int p = 0; p < view.part.P; ++p) {
        const auto& mem = view.part.members[p];
        for (std::size_t i = 0; i < mem.size(); ++i)
            for (std::size_t j = 0; j < mem.size(); ++j)
                (labels[mem[i]] == labels[mem[j]] ? same : diff) +=
                    view.intra[p].at(static_cast<int>(i), static_cast<int>(j));
    }
    return snr_from_masses(same, diff);
}

AttnView denoise_attention(const Tensor& raw_logit_scores, const std::vector<int>& labels,
                           double factor) {
    if (factor <= 0.0) throw ConfigError("denoise: factor must be > 0");
    const int n = raw_logit_scores.rows();
    if (raw_logit_scores.cols() != n || static_cast<int>(labels.size()) != n)
        throw ShapeError("denoise: logits must be N x N with matching labels");
    Tensor out = Tensor::zeros(n, n, false);
    for (int u = 0; u < n; ++u) {
        double mx = raw_logit_scores.at(u, 0);
        for (int v = 1; v < n; ++v) mx = std::max(mx, raw_logit_scores.at(u, v));
        double sum = 0.0;
        for (int v = 0; v < n; ++v) {
            double e = std::exp(raw_logit_scores.at(u, v) - mx);
            if (labels[u] == labels[v]) e *= factor;
            out.at(u, v) = e;
            sum += e;
        }
        for (int v = 0; v < n; ++v) out.at(u, v) /= sum;
    }
    return dense_view(std::move(out), 0);
}

double smoothness_frobenius(const Tensor& z, const AttnView& view) {
    if (z.rows() != view.n) throw ShapeError("smoothness: Z row count mismatch");
    std::vector<double> row;
    double acc = 0.0;
    for (int u = 0; u < view.n; ++u) {
        view.fill_row(u, row);
        for (int c = 0; c < z.cols(); ++c) {
            double mixed = 0.0;
            for (int v = 0; v < view.n; ++v) mixed += row[v] * z.at(v, c);
            const double d = z.at(u, c) - mixed;
            acc += d * d;
        }
    }
    return std::sqrt(acc);
}

std::vector<double> cu_reachable(const Graph& graph, const std::vector<int>& labels, int K) {
    if (static_cast<int>(labels.size()) != graph.num_nodes)
        throw ShapeError("cu_reachable: label count mismatch");
    std::vector<double> out(static_cast<std::size_t>(graph.num_nodes), 0.0);
    std::vector<int> ring;
    for (NodeId u = 0; u < graph.num_nodes; ++u) {
        bfs_ring_index(graph, u, K, ring);
        std::int64_t total = 0, same = 0;
        for (NodeId v = 0; v < graph.num_nodes; ++v) {
            if (ring[v] < 0) continue;
            ++total;
            if (labels[v] == labels[u]) ++same;
        }
        out[u] = static_cast<double>(same) / static_cast<double>(total);
    }
    return out;
}

Thm31Report thm31_identity(const Tensor& q, const Tensor& k, const std::vector<int>& labels) {
    const int n = q.rows();
    if (k.rows() != n || k.cols() != q.cols() || static_cast<int>(labels.size()) != n)
        throw ShapeError("thm31: Q/K/labels sizes disagree");
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(q.cols()));
    Thm31Report rep;
    rep.nodes.resize(static_cast<std::size_t>(n));
    std::vector<double> e(static_cast<std::size_t>(n));
    for (int u = 0; u < n; ++u) {
        double mx = -std::numeric_limits<double>::infinity();
        for (int v = 0; v < n; ++v) {
            double dot = 0.0;
            for (int c = 0; c < q.cols(); ++c) dot += q.at(u, c) * k.at(v, c);
            e[v] = dot * inv_sqrt;
            mx = std::max(mx, e[v]);
        }
        double same_sum = 0.0, diff_sum = 0.0;
        std::int64_t same_n = 0, diff_n = 0;
        for (int v = 0; v < n; ++v) {
            const double ev = std::exp(e[v] - mx);
            if (labels[v] == labels[u]) {
                same_sum += ev;
                ++same_n;
            } else {
                diff_sum += ev;
                ++diff_n;
            }
        }
        Thm31Node& node = rep.nodes[u];
        if (same_n == 0 || diff_n == 0) {
            node.degenerate = true;
            node.lhs = diff_n == 0 ? 0.0 : 1.0;
            continue;
        }
        node.lhs = diff_sum / (same_sum + diff_sum);
        const double cu = static_cast<double>(same_n) / static_cast<double>(n);
        const double eta = same_sum / static_cast<double>(same_n);
        const double gamma = diff_sum / static_cast<double>(diff_n);
        node.rhs = 1.0 / (1.0 + (cu / (1.0 - cu)) * (eta / gamma));
        node.gap = std::abs(node.lhs - node.rhs);
        rep.max_gap = std::max(rep.max_gap, node.gap);
    }
    return rep;
}

std::int64_t attention_cost(const Partition& part) {
    std::int64_t cost = static_cast<std::int64_t>(part.P) * part.P;
    for (const auto& mem : part.members)
        cost += static_cast<std::int64_t>(mem.size()) * static_cast<std::int64_t>(mem.size());
    return cost;
}

}  // namespace cob
