#pragma once

#include <cstdint>

#include "cob/graph.hpp"

namespace cob {

// Label-uniform random graph with a target edge homophily. Each edge flips a
// rho-coin for its kind (same-label vs different-label endpoints), then draws
// an unordered pair of that kind uniformly, redrawing on self-loops and
// duplicates.
struct SynthSpec {
    int num_nodes = 0;
    int num_classes = 2;
    double target_rho = 0.5;
    double avg_degree = 4.0;
    std::uint64_t seed = 0;

    std::int64_t edge_budget() const {
        return static_cast<std::int64_t>(num_nodes * avg_degree / 2.0);
    }
    void validate() const;
};

struct SynthResult {
    Graph graph;
    NodeData data;  // labels only; feature_dim = 0, masks empty
};

SynthResult generate_homophilic_graph(const SynthSpec& spec);

}  // namespace cob
