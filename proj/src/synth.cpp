#include "cob/synth.hpp"

#include <string>
#include <unordered_set>
#include <vector>

#include "cob/common.hpp"
#include "cob/rng.hpp"

namespace cob {

void SynthSpec::validate() const {
    if (num_nodes < 2)
        throw ConfigError("synth: num_nodes must be >= 2, got " + std::to_string(num_nodes));
    if (num_classes < 2)
        throw ConfigError("synth: num_classes must be >= 2, got " + std::to_string(num_classes));
    if (target_rho < 0.0 || target_rho > 1.0)
        throw ConfigError("synth: target_rho must lie in [0,1], got " + std::to_string(target_rho));
    if (avg_degree <= 0.0)
        throw ConfigError("synth: avg_degree must be positive, got " + std::to_string(avg_degree));
    if (edge_budget() < 1)
        throw ConfigError("synth: edge budget floor(N*avg_degree/2) must be >= 1");
}

SynthResult generate_homophilic_graph(const SynthSpec& spec) {
    spec.validate();
    const int n = spec.num_nodes;
    const std::int64_t budget = spec.edge_budget();

    Rng rng(spec.seed);

    std::vector<int> labels(n);
    std::vector<std::int64_t> class_count(spec.num_classes, 0);
    for (int u = 0; u < n; ++u) {
        labels[u] = static_cast<int>(rng.next_below(static_cast<std::uint64_t>(spec.num_classes)));
        ++class_count[labels[u]];
    }

    std::int64_t avail_same = 0;
    for (std::int64_t c : class_count) avail_same += c * (c - 1) / 2;
    const std::int64_t total_pairs = static_cast<std::int64_t>(n) * (n - 1) / 2;
    std::int64_t avail_diff = total_pairs - avail_same;

    std::unordered_set<std::int64_t> seen;
    seen.reserve(static_cast<std::size_t>(budget) * 2);
    std::vector<std::pair<NodeId, NodeId>> edges;
    edges.reserve(static_cast<std::size_t>(budget));

    for (std::int64_t e = 0; e < budget; ++e) {
        const bool want_same = rng.next_double() < spec.target_rho;
        std::int64_t& avail = want_same ? avail_same : avail_diff;
        if (avail <= 0)
            throw GenerationError(
                "synth: exhausted distinct " + std::string(want_same ? "same" : "different") +
                "-label pairs after " + std::to_string(e) + " of " + std::to_string(budget) +
                " edges");
        for (;;) {
            const int u = static_cast<int>(rng.next_below(static_cast<std::uint64_t>(n)));
            const int v = static_cast<int>(rng.next_below(static_cast<std::uint64_t>(n)));
            if (u == v) continue;
            if ((labels[u] == labels[v]) != want_same) continue;
            const int a = u < v ? u : v;
            const int b = u < v ? v : u;
            const std::int64_t key = static_cast<std::int64_t>(a) * n + b;
            if (!seen.insert(key).second) continue;
            edges.emplace_back(static_cast<NodeId>(a), static_cast<NodeId>(b));
            --avail;
            break;
        }
    }

    SynthResult out;
    out.graph = Graph::from_edges(n, edges);
    out.data.feature_dim = 0;
    out.data.labels = std::move(labels);
    out.data.num_classes = spec.num_classes;
    out.data.train_mask.assign(static_cast<std::size_t>(n), 0);
    out.data.val_mask.assign(static_cast<std::size_t>(n), 0);
    out.data.test_mask.assign(static_cast<std::size_t>(n), 0);
    return out;
}

}  // namespace cob
