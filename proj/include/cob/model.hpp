#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "cob/layers.hpp"
#include "cob/partition.hpp"

namespace cob {

struct ModelConfig {
    int hidden = 64;
    int num_bga_layers = 1;
    int num_heads = 1;
    double dropout_gcn = 0.5;
    double dropout_bga = 0.1;
    int gcn_layers = 2;
    double alpha = 0.8;
    double tau = 0.5;
    bool vanilla_attention = false;  // single full-graph attention in place of clustered BGA

    void validate() const;
};

struct BgaLayerParams {
    AttentionBlock intra_attn;
    FfnBlock intra_ffn;
    AttentionBlock inter_attn;
    FfnBlock inter_ffn;
};

struct CobformerParams {
    Tensor embed_w, embed_b;  // d -> h
    std::vector<BgaLayerParams> bga;
    Tensor fusion_w;  // 2h -> h, shared across BGA layers
    Tensor head_g_w, head_g_b;
    Tensor head_t_w, head_t_b;
    std::vector<GcnLayer> gcn;

    std::vector<std::pair<std::string, Tensor>> named() const;
    std::vector<Tensor> all() const;
    std::vector<Tensor> gcn_group() const;  // GCN convolutions + their label head
    std::vector<Tensor> bga_group() const;  // embedding, BGA blocks, fusion, its label head
};

CobformerParams make_cobformer(const ModelConfig& cfg, int feature_dim, int num_classes,
                               Rng& rng);

struct BgaLayerCapture {
    std::vector<Tensor> intra;  // per cluster, |V_p| x |V_p| head-averaged scores
    Tensor inter;               // P x P
};

struct BgaOut {
    Tensor node_repr;  // N x h
    std::int64_t attn_entries = 0;  // (query,key) score pairs materialized
    std::vector<BgaLayerCapture> captures;
};

BgaOut bga_forward(Tape& tape, const CobformerParams& params, const ModelConfig& cfg,
                   const Tensor& features, const Partition& part, bool train,
                   std::uint64_t dropout_seed, bool capture);

Tensor gcn_branch(Tape& tape, const CobformerParams& params, const ModelConfig& cfg,
                  const SparseMatrix& adj, const Tensor& features, bool train,
                  std::uint64_t dropout_seed);

std::pair<Tensor, Tensor> predict_heads(Tape& tape, const CobformerParams& params,
                                        const Tensor& gcn_out, const Tensor& bga_out);

Tensor soft_labels(Tape& tape, const Tensor& logits, double tau);

// L = alpha * L_ce + (1-alpha) * L_co; the co-term's target distributions are
// gradient-detached and it averages over nodes outside the train mask.
Tensor collaborative_loss(Tape& tape, const Tensor& prob_g, const Tensor& prob_t,
                          const Tensor& soft_g, const Tensor& soft_t,
                          const std::vector<int>& labels,
                          const std::vector<std::uint8_t>& train_mask, double alpha);

// Same arithmetic with the mutual-supervision multipliers bound to the fixed
// probability tables target_g/target_t (N x |Y|, no grad) instead of detached
// live tensors. At target = soft value this matches collaborative_loss in
// value and gradient, but it is an ordinary differentiable composite, so
// central finite differences of it equal the training gradient; the live
// loss's stop-gradient would otherwise be invisible to finite differences.
Tensor collaborative_loss_frozen_targets(Tape& tape, const Tensor& prob_g, const Tensor& prob_t,
                                         const Tensor& soft_g, const Tensor& soft_t,
                                         const Tensor& target_g, const Tensor& target_t,
                                         const std::vector<int>& labels,
                                         const std::vector<std::uint8_t>& train_mask,
                                         double alpha);

// Per-node approximation of a cross-cluster attention score: the inter score
// between the two clusters spread uniformly over the key cluster.
double approx_global_attention(const Partition& part, const Tensor& inter_scores, int p, int q);

// Max abs difference between attending to a mean-pooled cluster token and the
// equivalent per-node sum with each node weighted inter/|V_q|.
double prop41_identity_gap(const Tensor& node_repr, const Partition& part,
                           const Tensor& inter_scores, const Tensor& w_v);

Partition trivial_partition(int num_nodes);

}  // namespace cob
