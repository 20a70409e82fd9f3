#include "cob/graph.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <deque>
#include <fstream>
#include <sstream>
#include <unordered_map>

namespace cob {

namespace {

std::ifstream open_or_throw(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open file: " + path);
    return in;
}

long long parse_int(std::string_view tok, const std::string& path, std::int64_t line_no) {
    long long value = 0;
    auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), value);
    if (ec != std::errc() || ptr != tok.data() + tok.size()) {
        throw ParseError(path + ":" + std::to_string(line_no) + ": expected integer, got '" +
                         std::string(tok) + "'");
    }
    return value;
}

bool is_comment_or_blank(const std::string& line) {
    for (char c : line) {
        if (c == '#') return true;
        if (!std::isspace(static_cast<unsigned char>(c))) return false;
    }
    return true;
}

std::vector<std::string_view> split_ws(const std::string& line) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
        std::size_t j = i;
        while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
        if (j > i) out.emplace_back(line.data() + i, j - i);
        i = j;
    }
    return out;
}

}  // namespace

bool Graph::has_edge(NodeId u, NodeId v) const {
    auto nbr = neighbors(u);
    return std::binary_search(nbr.begin(), nbr.end(), v);
}

Graph Graph::from_edges(int num_nodes, const std::vector<std::pair<NodeId, NodeId>>& edges,
                        std::int64_t* dropped_self_loops) {
    std::int64_t self_loops = 0;
    std::vector<std::pair<NodeId, NodeId>> canon;
    canon.reserve(edges.size());
    for (auto [u, v] : edges) {
        if (u < 0 || v < 0 || u >= num_nodes || v >= num_nodes) {
            throw BoundsError("edge endpoint out of range: (" + std::to_string(u) + ", " +
                              std::to_string(v) + ") with N=" + std::to_string(num_nodes));
        }
        if (u == v) {
            ++self_loops;
            continue;
        }
        canon.emplace_back(std::min(u, v), std::max(u, v));
    }
    std::sort(canon.begin(), canon.end());
    canon.erase(std::unique(canon.begin(), canon.end()), canon.end());
    if (dropped_self_loops) *dropped_self_loops = self_loops;

    Graph g;
    g.num_nodes = num_nodes;
    g.num_undirected_edges = static_cast<std::int64_t>(canon.size());
    std::vector<std::int64_t> deg(num_nodes, 0);
    for (auto [u, v] : canon) {
        ++deg[u];
        ++deg[v];
    }
    g.csr_offsets.assign(num_nodes + 1, 0);
    for (int i = 0; i < num_nodes; ++i) g.csr_offsets[i + 1] = g.csr_offsets[i] + deg[i];
    g.csr_neighbors.resize(g.csr_offsets[num_nodes]);
    std::vector<std::int64_t> cursor(g.csr_offsets.begin(), g.csr_offsets.end() - 1);
    for (auto [u, v] : canon) {
        g.csr_neighbors[cursor[u]++] = v;
        g.csr_neighbors[cursor[v]++] = u;
    }
    for (int u = 0; u < num_nodes; ++u) {
        std::sort(g.csr_neighbors.begin() + g.csr_offsets[u],
                  g.csr_neighbors.begin() + g.csr_offsets[u + 1]);
    }
    return g;
}

void Graph::validate() const {
    if (static_cast<int>(csr_offsets.size()) != num_nodes + 1)
        throw ValidationError("csr_offsets length mismatch");
    if (csr_offsets.front() != 0 ||
        csr_offsets.back() != static_cast<std::int64_t>(csr_neighbors.size()) ||
        csr_offsets.back() != 2 * num_undirected_edges)
        throw ValidationError("csr_offsets endpoints inconsistent");
    for (int u = 0; u < num_nodes; ++u) {
        if (csr_offsets[u + 1] < csr_offsets[u])
            throw ValidationError("csr_offsets not non-decreasing");
        auto nbr = neighbors(u);
        for (std::size_t i = 0; i < nbr.size(); ++i) {
            NodeId v = nbr[i];
            if (v < 0 || v >= num_nodes) throw ValidationError("neighbor id out of range");
            if (v == u) throw ValidationError("self-loop stored");
            if (i > 0 && nbr[i - 1] >= v)
                throw ValidationError("neighbor list not strictly ascending");
            if (!has_edge(v, u)) throw ValidationError("CSR not symmetric");
        }
    }
}

std::vector<int> NodeData::mask_indices(const std::vector<std::uint8_t>& mask) const {
    std::vector<int> idx;
    for (std::size_t i = 0; i < mask.size(); ++i)
        if (mask[i]) idx.push_back(static_cast<int>(i));
    return idx;
}

void NodeData::validate(int num_nodes) const {
    if (static_cast<int>(labels.size()) != num_nodes)
        throw ValidationError("labels length != num_nodes");
    if (feature_dim > 0 &&
        features.size() != static_cast<std::size_t>(num_nodes) * feature_dim)
        throw ValidationError("feature matrix size mismatch");
    for (double x : features)
        if (!std::isfinite(x)) throw ValidationError("non-finite feature value");
    auto check_mask = [&](const std::vector<std::uint8_t>& m, const char* name) {
        if (static_cast<int>(m.size()) != num_nodes)
            throw ValidationError(std::string(name) + " mask length != num_nodes");
    };
    check_mask(train_mask, "train");
    check_mask(val_mask, "val");
    check_mask(test_mask, "test");
    for (int u = 0; u < num_nodes; ++u) {
        int in = train_mask[u] + val_mask[u] + test_mask[u];
        if (in > 1)
            throw ValidationError("masks overlap at node " + std::to_string(u));
        if (in == 1 && (labels[u] < 0 || labels[u] >= num_classes))
            throw ValidationError("masked node " + std::to_string(u) + " has invalid label");
    }
}

LoadedGraph load_edge_list(const std::string& edge_path, const std::string& label_path,
                           const std::string& feature_path, const std::string& mask_path) {
    LoadedGraph out;

    // Labels first: they define the node-id universe together with the edges.
    std::vector<std::pair<int, int>> label_lines;
    int max_id = -1;
    {
        auto in = open_or_throw(label_path);
        std::string line;
        std::int64_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            if (is_comment_or_blank(line)) continue;
            auto toks = split_ws(line);
            if (toks.size() != 2)
                throw ParseError(label_path + ":" + std::to_string(line_no) +
                                 ": expected 'node_id<TAB>class_id'");
            int u = static_cast<int>(parse_int(toks[0], label_path, line_no));
            int c = static_cast<int>(parse_int(toks[1], label_path, line_no));
            if (u < 0) throw BoundsError(label_path + ": negative node id");
            if (c < 0) throw ValidationError(label_path + ": negative class id");
            label_lines.emplace_back(u, c);
            max_id = std::max(max_id, u);
        }
    }

    std::vector<std::pair<NodeId, NodeId>> edges;
    {
        auto in = open_or_throw(edge_path);
        std::string line;
        std::int64_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            if (is_comment_or_blank(line)) continue;
            auto toks = split_ws(line);
            if (toks.size() != 2)
                throw ParseError(edge_path + ":" + std::to_string(line_no) +
                                 ": expected 'u<TAB>v'");
            auto u = parse_int(toks[0], edge_path, line_no);
            auto v = parse_int(toks[1], edge_path, line_no);
            if (u < 0 || v < 0)
                throw BoundsError(edge_path + ":" + std::to_string(line_no) + ": negative id");
            edges.emplace_back(static_cast<NodeId>(u), static_cast<NodeId>(v));
            max_id = std::max(max_id, static_cast<int>(std::max(u, v)));
            ++out.raw_edge_lines;
        }
    }

    int num_nodes = max_id + 1;
    if (num_nodes <= 0) throw ValidationError("no nodes found in inputs");

    out.data.labels.assign(num_nodes, -1);
    for (auto [u, c] : label_lines) out.data.labels[u] = c;
    int max_class = -1;
    for (int c : out.data.labels) max_class = std::max(max_class, c);
    out.data.num_classes = max_class + 1;

    if (!feature_path.empty()) {
        auto in = open_or_throw(feature_path);
        std::string line;
        if (!std::getline(in, line)) throw ParseError(feature_path + ": empty file");
        auto header = split_ws(line);
        if (header.size() != 2) throw ParseError(feature_path + ":1: expected 'N d'");
        int n = static_cast<int>(parse_int(header[0], feature_path, 1));
        int d = static_cast<int>(parse_int(header[1], feature_path, 1));
        if (n != num_nodes)
            throw ValidationError(feature_path + ": header N=" + std::to_string(n) +
                                  " but inputs imply N=" + std::to_string(num_nodes));
        out.data.feature_dim = d;
        out.data.features.reserve(static_cast<std::size_t>(n) * d);
        for (int row = 0; row < n; ++row) {
            if (!std::getline(in, line))
                throw ParseError(feature_path + ": truncated at row " + std::to_string(row));
            auto toks = split_ws(line);
            if (static_cast<int>(toks.size()) != d)
                throw ParseError(feature_path + ":" + std::to_string(row + 2) + ": expected " +
                                 std::to_string(d) + " values");
            for (auto t : toks) {
                double x = 0.0;
                auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), x);
                if (ec != std::errc() || ptr != t.data() + t.size())
                    throw ParseError(feature_path + ":" + std::to_string(row + 2) +
                                     ": bad real '" + std::string(t) + "'");
                out.data.features.push_back(x);
            }
        }
    }

    out.data.train_mask.assign(num_nodes, 0);
    out.data.val_mask.assign(num_nodes, 0);
    out.data.test_mask.assign(num_nodes, 0);
    if (!mask_path.empty()) {
        auto in = open_or_throw(mask_path);
        std::string line;
        std::int64_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            if (is_comment_or_blank(line)) continue;
            auto toks = split_ws(line);
            if (toks.size() != 2)
                throw ParseError(mask_path + ":" + std::to_string(line_no) +
                                 ": expected 'node_id<TAB>{train|val|test}'");
            int u = static_cast<int>(parse_int(toks[0], mask_path, line_no));
            if (u < 0 || u >= num_nodes)
                throw BoundsError(mask_path + ":" + std::to_string(line_no) + ": node id " +
                                  std::to_string(u) + " out of range");
            if (out.data.train_mask[u] || out.data.val_mask[u] || out.data.test_mask[u])
                throw ValidationError(mask_path + ":" + std::to_string(line_no) + ": node " +
                                      std::to_string(u) + " assigned to multiple masks");
            if (toks[1] == "train")
                out.data.train_mask[u] = 1;
            else if (toks[1] == "val")
                out.data.val_mask[u] = 1;
            else if (toks[1] == "test")
                out.data.test_mask[u] = 1;
            else
                throw ParseError(mask_path + ":" + std::to_string(line_no) + ": unknown role '" +
                                 std::string(toks[1]) + "'");
        }
    }

    out.graph = Graph::from_edges(num_nodes, edges, &out.dropped_self_loops);
    out.graph.validate();
    out.data.validate(num_nodes);
    return out;
}

LoadedGraph load_cora_raw(const std::string& content_path, const std::string& cites_path,
                          const std::string& split_spec) {
    LoadedGraph out;

    std::unordered_map<std::string, int> id_of;         // paper id -> dense id
    std::unordered_map<std::string, int> class_of;      // class name -> class id
    std::vector<int> labels;
    std::vector<double> features;
    int feature_dim = -1;
    {
        auto in = open_or_throw(content_path);
        std::string line;
        std::int64_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            if (is_comment_or_blank(line)) continue;
            auto toks = split_ws(line);
            if (toks.size() < 3)
                throw ParseError(content_path + ":" + std::to_string(line_no) +
                                 ": expected 'id<TAB>features...<TAB>class'");
            int d = static_cast<int>(toks.size()) - 2;
            if (feature_dim < 0) feature_dim = d;
            if (d != feature_dim)
                throw ParseError(content_path + ":" + std::to_string(line_no) +
                                 ": inconsistent feature width");
            std::string paper_id(toks.front());
            if (!id_of.emplace(paper_id, static_cast<int>(labels.size())).second)
                throw ValidationError(content_path + ": duplicate paper id " + paper_id);
            for (int i = 1; i <= d; ++i) {
                double x = 0.0;
                auto t = toks[i];
                auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), x);
                if (ec != std::errc() || ptr != t.data() + t.size())
                    throw ParseError(content_path + ":" + std::to_string(line_no) +
                                     ": bad feature value");
                features.push_back(x);
            }
            std::string cls(toks.back());
            auto [it, inserted] = class_of.emplace(cls, static_cast<int>(class_of.size()));
            labels.push_back(it->second);
        }
    }
    int num_nodes = static_cast<int>(labels.size());
    if (num_nodes == 0) throw ValidationError(content_path + ": no content lines");

    std::vector<std::pair<NodeId, NodeId>> edges;
    {
        auto in = open_or_throw(cites_path);
        std::string line;
        std::int64_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            if (is_comment_or_blank(line)) continue;
            auto toks = split_ws(line);
            if (toks.size() != 2)
                throw ParseError(cites_path + ":" + std::to_string(line_no) +
                                 ": expected 'cited<TAB>citing'");
            auto a = id_of.find(std::string(toks[0]));
            auto b = id_of.find(std::string(toks[1]));
            if (a == id_of.end() || b == id_of.end()) {
                ++out.skipped_unknown_citations;
                continue;
            }
            edges.emplace_back(a->second, b->second);
            ++out.raw_edge_lines;
        }
    }

    out.data.feature_dim = feature_dim;
    out.data.features = std::move(features);
    out.data.labels = std::move(labels);
    out.data.num_classes = static_cast<int>(class_of.size());
    out.data.train_mask.assign(num_nodes, 0);
    out.data.val_mask.assign(num_nodes, 0);
    out.data.test_mask.assign(num_nodes, 0);

    if (split_spec == "planetoid-public") {
        std::vector<int> taken(out.data.num_classes, 0);
        int train_total = 0;
        for (int u = 0; u < num_nodes && train_total < 20 * out.data.num_classes; ++u) {
            int c = out.data.labels[u];
            if (taken[c] < 20) {
                out.data.train_mask[u] = 1;
                ++taken[c];
                ++train_total;
            }
        }
        int val_left = 500, test_left = 1000;
        for (int u = 0; u < num_nodes && (val_left > 0 || test_left > 0); ++u) {
            if (out.data.train_mask[u]) continue;
            if (val_left > 0) {
                out.data.val_mask[u] = 1;
                --val_left;
            } else {
                out.data.test_mask[u] = 1;
                --test_left;
            }
        }
    } else if (split_spec != "none") {
        throw ConfigError("unknown split_spec '" + split_spec + "'");
    }

    out.graph = Graph::from_edges(num_nodes, edges, &out.dropped_self_loops);
    out.graph.validate();
    out.data.validate(num_nodes);
    return out;
}

KHopRings khop_rings(const Graph& graph, NodeId source, int max_hops) {
    if (source < 0 || source >= graph.num_nodes)
        throw BoundsError("khop_rings: source out of range");
    if (max_hops < 0) throw BoundsError("khop_rings: max_hops must be >= 0");

    KHopRings out;
    out.source = source;
    out.rings.resize(max_hops + 1);
    std::vector<int> dist(graph.num_nodes, -1);
    dist[source] = 0;
    out.rings[0] = {source};
    std::deque<NodeId> frontier{source};
    while (!frontier.empty()) {
        NodeId u = frontier.front();
        frontier.pop_front();
        if (dist[u] == max_hops) continue;
        for (NodeId v : graph.neighbors(u)) {
            if (dist[v] < 0) {
                dist[v] = dist[u] + 1;
                out.rings[dist[v]].push_back(v);
                frontier.push_back(v);
            }
        }
    }
    return out;
}

double edge_homophily(const Graph& graph, const std::vector<int>& labels) {
    if (graph.num_undirected_edges < 1)
        throw ValidationError("edge_homophily undefined on an empty edge set");
    if (static_cast<int>(labels.size()) != graph.num_nodes)
        throw ShapeError("edge_homophily: labels length mismatch");
    std::int64_t same = 0;
    for (NodeId u = 0; u < graph.num_nodes; ++u) {
        for (NodeId v : graph.neighbors(u)) {
            if (v <= u) continue;  // count each undirected edge once
            if (labels[u] == labels[v]) ++same;
        }
    }
    return static_cast<double>(same) / static_cast<double>(graph.num_undirected_edges);
}

}  // namespace cob
