#pragma once

#include <string>
#include <vector>

#include "cob/graph.hpp"
#include "cob/rng.hpp"
#include "cob/tensor.hpp"

namespace cob {

// uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)), the usual linear-layer default
Tensor init_weight(Rng& rng, int fan_in, int fan_out);

struct LayerNormParams {
    Tensor gamma;  // 1 x dim, ones
    Tensor beta;   // 1 x dim, zeros
};
LayerNormParams make_layer_norm(int dim);

// Post-norm multi-head scaled dot-product attention:
// out = LayerNorm(queries + concat_heads(softmax(Q Kt / sqrt(d_head)) V) W_O)
struct AttentionBlock {
    int num_heads = 1;
    std::vector<Tensor> w_q, w_k, w_v;  // per head, dim x (dim/num_heads)
    Tensor w_o;                         // dim x dim
    LayerNormParams norm;
};
AttentionBlock make_attention_block(int dim, int num_heads, Rng& rng);

struct AttentionOut {
    Tensor out;
    Tensor scores;  // head-averaged post-softmax matrix; defined only when captured
};
AttentionOut attention_forward(Tape& tape, const AttentionBlock& block, const Tensor& queries,
                               const Tensor& keys, bool capture_scores);

// out = LayerNorm(h + W2 relu(W1 h + b1) + b2), inner width 4 x dim
struct FfnBlock {
    Tensor w1, b1;  // dim -> 4*dim
    Tensor w2, b2;  // 4*dim -> dim
    LayerNormParams norm;
};
FfnBlock make_ffn_block(int dim, Rng& rng);
Tensor ffn_forward(Tape& tape, const FfnBlock& block, const Tensor& h);

// Single graph convolution against the cached symmetric-normalized adjacency
// with self-loops; hidden layers apply relu, the final layer does not.
struct GcnLayer {
    Tensor w;  // in x out, no bias
};
GcnLayer make_gcn_layer(int in_dim, int out_dim, Rng& rng);
SparseMatrix normalized_adjacency(const Graph& graph);
Tensor gcn_forward(Tape& tape, const GcnLayer& layer, const SparseMatrix& adj, const Tensor& h,
                   bool apply_activation);

void collect_params(const LayerNormParams& p, const std::string& prefix,
                    std::vector<std::pair<std::string, Tensor>>& out);
void collect_params(const AttentionBlock& b, const std::string& prefix,
                    std::vector<std::pair<std::string, Tensor>>& out);
void collect_params(const FfnBlock& b, const std::string& prefix,
                    std::vector<std::pair<std::string, Tensor>>& out);

}  // namespace cob
