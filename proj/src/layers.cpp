#include "cob/layers.hpp"

#include <cmath>

#include "cob/common.hpp"

namespace cob {

Tensor init_weight(Rng& rng, int fan_in, int fan_out) {
    if (fan_in < 1 || fan_out < 1) throw ShapeError("init_weight: dimensions must be positive");
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::vector<double> v(static_cast<std::size_t>(fan_in) * fan_out);
    for (double& x : v) x = rng.uniform(-bound, bound);
    return Tensor::from_values(fan_in, fan_out, std::move(v), true);
}

LayerNormParams make_layer_norm(int dim) {
    LayerNormParams p;
    p.gamma = Tensor::from_values(1, dim, std::vector<double>(static_cast<std::size_t>(dim), 1.0),
                                  true);
    p.beta = Tensor::zeros(1, dim, true);
    return p;
}

AttentionBlock make_attention_block(int dim, int num_heads, Rng& rng) {
    if (num_heads < 1 || dim % num_heads != 0)
        throw ConfigError("attention: hidden dim " + std::to_string(dim) +
                          " not divisible by num_heads " + std::to_string(num_heads));
    AttentionBlock b;
    b.num_heads = num_heads;
    const int dh = dim / num_heads;
    for (int i = 0; i < num_heads; ++i) {
        b.w_q.push_back(init_weight(rng, dim, dh));
        b.w_k.push_back(init_weight(rng, dim, dh));
        b.w_v.push_back(init_weight(rng, dim, dh));
    }
    b.w_o = init_weight(rng, dim, dim);
    b.norm = make_layer_norm(dim);
    return b;
}

AttentionOut attention_forward(Tape& tape, const AttentionBlock& block, const Tensor& queries,
                               const Tensor& keys, bool capture_scores) {
    const int dim = queries.cols();
    if (keys.cols() != dim) throw ShapeError("attention: query/key widths differ");
    if (static_cast<int>(block.w_q.size()) != block.num_heads)
        throw ShapeError("attention: head weight count mismatch");
    const int dh = dim / block.num_heads;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));

    std::vector<Tensor> head_outs;
    std::vector<double> avg_scores;
    for (int i = 0; i < block.num_heads; ++i) {
        Tensor q = tape.matmul(queries, block.w_q[i]);
        Tensor k = tape.matmul(keys, block.w_k[i]);
        Tensor v = tape.matmul(keys, block.w_v[i]);
        Tensor logits = tape.scale(tape.matmul(q, k, false, true), inv_sqrt);
        Tensor scores = tape.row_softmax(logits);
        if (capture_scores) {
            if (avg_scores.empty()) avg_scores.assign(scores.values().size(), 0.0);
            for (std::size_t j = 0; j < avg_scores.size(); ++j)
                avg_scores[j] += scores.values()[j] / block.num_heads;
        }
        head_outs.push_back(tape.matmul(scores, v));
    }
    Tensor merged = head_outs[0];
    for (std::size_t i = 1; i < head_outs.size(); ++i)
        merged = tape.concat_cols(merged, head_outs[i]);
    Tensor projected = tape.matmul(merged, block.w_o);
    AttentionOut out;
    out.out = tape.layer_norm(tape.add(queries, projected), block.norm.gamma, block.norm.beta);
    if (capture_scores)
        out.scores =
            Tensor::from_values(queries.rows(), keys.rows(), std::move(avg_scores), false);
    return out;
}

FfnBlock make_ffn_block(int dim, Rng& rng) {
    FfnBlock b;
    b.w1 = init_weight(rng, dim, 4 * dim);
    b.b1 = Tensor::zeros(1, 4 * dim, true);
    b.w2 = init_weight(rng, 4 * dim, dim);
    b.b2 = Tensor::zeros(1, dim, true);
    b.norm = make_layer_norm(dim);
    return b;
}

Tensor ffn_forward(Tape& tape, const FfnBlock& block, const Tensor& h) {
    if (h.cols() != block.w1.rows()) throw ShapeError("ffn: input width mismatch");
    Tensor inner = tape.relu(tape.add(tape.matmul(h, block.w1), block.b1));
    Tensor projected = tape.add(tape.matmul(inner, block.w2), block.b2);
    return tape.layer_norm(tape.add(h, projected), block.norm.gamma, block.norm.beta);
}

GcnLayer make_gcn_layer(int in_dim, int out_dim, Rng& rng) {
    return GcnLayer{init_weight(rng, in_dim, out_dim)};
}

SparseMatrix normalized_adjacency(const Graph& graph) {
    const int n = graph.num_nodes;
    SparseMatrix s;
    s.rows = n;
    s.cols = n;
    s.offsets.assign(static_cast<std::size_t>(n) + 1, 0);
    for (NodeId u = 0; u < n; ++u) s.offsets[u + 1] = s.offsets[u] + graph.degree(u) + 1;
    s.col_index.resize(static_cast<std::size_t>(s.offsets[n]));
    s.weights.resize(static_cast<std::size_t>(s.offsets[n]));
    for (NodeId u = 0; u < n; ++u) {
        const double du = std::sqrt(static_cast<double>(graph.degree(u)) + 1.0);
        std::int64_t at = s.offsets[u];
        bool self_done = false;
        for (NodeId v : graph.neighbors(u)) {
            if (!self_done && v > u) {
                s.col_index[at] = u;
                s.weights[at] = 1.0 / (du * du);
                ++at;
                self_done = true;
            }
            const double dv = std::sqrt(static_cast<double>(graph.degree(v)) + 1.0);
            s.col_index[at] = v;
            s.weights[at] = 1.0 / (du * dv);
            ++at;
        }
        if (!self_done) {
            s.col_index[at] = u;
            s.weights[at] = 1.0 / (du * du);
            ++at;
        }
    }
    return s;
}

Tensor gcn_forward(Tape& tape, const GcnLayer& layer, const SparseMatrix& adj, const Tensor& h,
                   bool apply_activation) {
    if (adj.cols != h.rows()) throw ShapeError("gcn: adjacency size vs feature rows mismatch");
    Tensor mixed = tape.spmm(adj, h);
    Tensor out = tape.matmul(mixed, layer.w);
    return apply_activation ? tape.relu(out) : out;
}

void collect_params(const LayerNormParams& p, const std::string& prefix,
                    std::vector<std::pair<std::string, Tensor>>& out) {
    out.emplace_back(prefix + ".gamma", p.gamma);
    out.emplace_back(prefix + ".beta", p.beta);
}

void collect_params(const AttentionBlock& b, const std::string& prefix,
                    std::vector<std::pair<std::string, Tensor>>& out) {
    for (std::size_t i = 0; i < b.w_q.size(); ++i) {
        const std::string h = prefix + ".h" + std::to_string(i);
        out.emplace_back(h + ".wq", b.w_q[i]);
        out.emplace_back(h + ".wk", b.w_k[i]);
        out.emplace_back(h + ".wv", b.w_v[i]);
    }
    out.emplace_back(prefix + ".wo", b.w_o);
    collect_params(b.norm, prefix + ".norm", out);
}

void collect_params(const FfnBlock& b, const std::string& prefix,
                    std::vector<std::pair<std::string, Tensor>>& out) {
    out.emplace_back(prefix + ".w1", b.w1);
    out.emplace_back(prefix + ".b1", b.b1);
    out.emplace_back(prefix + ".w2", b.w2);
    out.emplace_back(prefix + ".b2", b.b2);
    collect_params(b.norm, prefix + ".norm", out);
}

}  // namespace cob
