#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cob/common.hpp"

namespace cob {

// Undirected simple graph in CSR form. Neighbor lists are sorted, free of
// self-loops and duplicates, and symmetric (u in nbr(v) iff v in nbr(u)).
struct Graph {
    int num_nodes = 0;
    std::int64_t num_undirected_edges = 0;
    std::vector<std::int64_t> csr_offsets;  // length num_nodes+1
    std::vector<NodeId> csr_neighbors;      // length 2*E, sorted per row

    std::span<const NodeId> neighbors(NodeId u) const {
        return {csr_neighbors.data() + csr_offsets[u],
                csr_neighbors.data() + csr_offsets[u + 1]};
    }
    int degree(NodeId u) const {
        return static_cast<int>(csr_offsets[u + 1] - csr_offsets[u]);
    }
    bool has_edge(NodeId u, NodeId v) const;

    // Symmetrizes, deduplicates and drops self-loops. Returns the graph and
    // the number of self-loop input lines dropped.
    static Graph from_edges(int num_nodes, const std::vector<std::pair<NodeId, NodeId>>& edges,
                            std::int64_t* dropped_self_loops = nullptr);

    // Throws ValidationError if any CSR invariant is broken.
    void validate() const;
};

struct NodeData {
    int feature_dim = 0;
    std::vector<double> features;  // row-major num_nodes x feature_dim
    std::vector<int> labels;       // class ids in [0, num_classes)
    int num_classes = 0;
    std::vector<std::uint8_t> train_mask, val_mask, test_mask;

    std::span<const double> feature_row(NodeId u) const {
        return {features.data() + static_cast<std::size_t>(u) * feature_dim,
                static_cast<std::size_t>(feature_dim)};
    }
    std::vector<int> mask_indices(const std::vector<std::uint8_t>& mask) const;
    void validate(int num_nodes) const;
};

// Exact shortest-path-distance layers around a source node.
// rings[k] holds the nodes at distance exactly k; rings[0] = {u}.
struct KHopRings {
    NodeId source = 0;
    std::vector<std::vector<NodeId>> rings;
};

struct LoadedGraph {
    Graph graph;
    NodeData data;
    std::int64_t dropped_self_loops = 0;
    std::int64_t skipped_unknown_citations = 0;
    std::int64_t raw_edge_lines = 0;
};

// Plain-text ingestion. Formats:
//   edges:    "u<TAB>v" per line, 0-based decimal ids, '#' comments ignored
//   labels:   "node_id<TAB>class_id" per line
//   features: first line "N d", then N lines of d reals separated by spaces
//   masks:    "node_id<TAB>{train|val|test}" per line
// feature_path and mask_path may be empty.
LoadedGraph load_edge_list(const std::string& edge_path, const std::string& label_path,
                           const std::string& feature_path, const std::string& mask_path);

// Raw citation-network ingestion (cora.content / cora.cites as distributed).
// split_spec "planetoid-public" reconstructs a 140/500/1000 split: 20 train
// nodes per class in content-file order, then 500 val and 1000 test among the
// remaining nodes in content-file order. split_spec "none" leaves masks empty.
LoadedGraph load_cora_raw(const std::string& content_path, const std::string& cites_path,
                          const std::string& split_spec);

// BFS layers out to distance max_hops. Nodes farther than max_hops (or
// unreachable) appear in no ring.
KHopRings khop_rings(const Graph& graph, NodeId source, int max_hops);

// Fraction of undirected edges (counted once) whose endpoints share a label.
double edge_homophily(const Graph& graph, const std::vector<int>& labels);

}  // namespace cob
