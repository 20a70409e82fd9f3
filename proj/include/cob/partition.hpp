#pragma once

#include <cstdint>
#include <vector>

#include "cob/graph.hpp"

namespace cob {

struct Partition {
    int P = 0;
    std::vector<int> assignment;            // node id -> cluster id
    std::vector<std::vector<NodeId>> members;  // cluster id -> sorted node ids
    double epsilon = 0.0;

    // Largest cluster size allowed: floor((1+epsilon) * ceil(N/P)).
    static std::int64_t capacity(int num_nodes, int P, double epsilon);
    void validate(int num_nodes) const;
};

// Multilevel balanced k-way partitioning: heavy-edge-matching coarsening,
// seeded BFS region growing on the coarsest graph, then uncoarsening with
// boundary refinement passes that only take cut-reducing moves inside the
// balance bound.
Partition partition_multilevel(const Graph& graph, int P, double epsilon, std::uint64_t seed);

std::int64_t edge_cut(const Graph& graph, const Partition& part);

}  // namespace cob
