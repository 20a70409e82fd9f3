#pragma once

#include <cstdint>
#include <vector>

#include "cob/graph.hpp"
#include "cob/model.hpp"
#include "cob/partition.hpp"
#include "cob/tensor.hpp"

namespace cob {

// Head-averaged attention, either one dense row-stochastic matrix or the BGA
// structure (per-cluster intra blocks + P x P inter matrix). Full rows of the
// BGA view weight the two sources equally: 0.5 * intra + 0.5 * the inter score
// spread uniformly over each key cluster, which keeps rows stochastic.
struct AttnView {
    bool dense = false;
    Tensor matrix;  // N x N when dense
    Partition part;
    std::vector<Tensor> intra;
    Tensor inter;
    int layer_index = 0;
    int n = 0;
    std::vector<int> index_in_cluster;

    void fill_row(int u, std::vector<double>& row) const;
    double intra_score(int u, int v) const;  // exact zero across clusters
};

AttnView dense_view(Tensor matrix, int layer_index);
AttnView bga_view(const Partition& part, std::vector<Tensor> intra, Tensor inter,
                  int layer_index);

struct CukProfile {
    std::vector<double> mean_c;       // index k = 0..Kmax; NaN-free, excluded-node semantics
    std::vector<std::int64_t> nodes_counted;  // nodes with a non-empty k-ring
};

CukProfile empirical_cuk(const Graph& graph, const std::vector<int>& labels, int max_hops);

// Homophily recursion across hops, plus its closed form; the two agree to
// 1e-12 everywhere.
double theoretical_cuk(double rho, int num_classes, int k);
double theoretical_cuk_closed(double rho, int num_classes, int k);

struct AttnKProfile {
    std::vector<double> bins;  // k = 0..Kmax, mean over nodes
    double overflow = 0.0;     // mass beyond Kmax or unreachable
};

AttnKProfile attn_k_profile(const AttnView& view, const Graph& graph, int max_hops);

struct AttnSnrReport {
    double same_mass = 0.0;
    double diff_mass = 0.0;
    double snr_db = 0.0;
    bool plus_inf = false;
    bool minus_inf = false;
};

// Dense: all pairs; BGA: intra-cluster scores only.
AttnSnrReport attn_snr(const AttnView& view, const std::vector<int>& labels);
AttnSnrReport attn_snr_masses(const Tensor& masses, const std::vector<int>& labels);

// Oracle diagnostic: scale the exp-scores of same-label pairs and renormalize
// rows. Never used in training.
AttnView denoise_attention(const Tensor& raw_logit_scores, const std::vector<int>& labels,
                           double factor);

double smoothness_frobenius(const Tensor& z, const AttnView& view);

// C_u over the union of rings 0..K (K < 0 means every reachable node).
std::vector<double> cu_reachable(const Graph& graph, const std::vector<int>& labels, int K);

struct Thm31Node {
    double lhs = 0.0;
    double rhs = 0.0;
    double gap = 0.0;
    bool degenerate = false;
};
struct Thm31Report {
    std::vector<Thm31Node> nodes;
    double max_gap = 0.0;  // over non-degenerate nodes
};

// Exact identity for full dense attention: the off-label attention mass of a
// node equals 1 / (1 + (C_u/(1-C_u)) * (eta_u/gamma_u)).
Thm31Report thm31_identity(const Tensor& q, const Tensor& k, const std::vector<int>& labels);

std::int64_t attention_cost(const Partition& part);

}  // namespace cob
