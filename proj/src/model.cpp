#include "cob/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cob/common.hpp"

namespace cob {

void ModelConfig::validate() const {
    if (hidden < 1) throw ConfigError("model: hidden must be >= 1");
    if (num_bga_layers < 1) throw ConfigError("model: num_bga_layers must be >= 1");
    if (num_heads < 1 || hidden % num_heads != 0)
        throw ConfigError("model: hidden must divide evenly into num_heads");
    if (dropout_gcn < 0.0 || dropout_gcn >= 1.0 || dropout_bga < 0.0 || dropout_bga >= 1.0)
        throw ConfigError("model: dropout rates must lie in [0,1)");
    if (gcn_layers != 2 && gcn_layers != 3)
        throw ConfigError("model: gcn_layers must be 2 or 3, got " + std::to_string(gcn_layers));
    if (alpha <= 0.0 || alpha > 1.0) throw ConfigError("model: alpha must lie in (0,1]");
    if (tau <= 0.0) throw ConfigError("model: tau must be > 0");
}

std::vector<std::pair<std::string, Tensor>> CobformerParams::named() const {
    std::vector<std::pair<std::string, Tensor>> out;
    out.emplace_back("embed.w", embed_w);
    out.emplace_back("embed.b", embed_b);
    for (std::size_t k = 0; k < bga.size(); ++k) {
        const std::string p = "bga" + std::to_string(k);
        collect_params(bga[k].intra_attn, p + ".intra.attn", out);
        collect_params(bga[k].intra_ffn, p + ".intra.ffn", out);
        collect_params(bga[k].inter_attn, p + ".inter.attn", out);
        collect_params(bga[k].inter_ffn, p + ".inter.ffn", out);
    }
    out.emplace_back("fusion.w", fusion_w);
    out.emplace_back("head_g.w", head_g_w);
    out.emplace_back("head_g.b", head_g_b);
    out.emplace_back("head_t.w", head_t_w);
    out.emplace_back("head_t.b", head_t_b);
    for (std::size_t i = 0; i < gcn.size(); ++i)
        out.emplace_back("gcn" + std::to_string(i) + ".w", gcn[i].w);
    return out;
}

std::vector<Tensor> CobformerParams::all() const {
    std::vector<Tensor> out;
    for (auto& [name, t] : named()) out.push_back(t);
    return out;
}

std::vector<Tensor> CobformerParams::gcn_group() const {
    std::vector<Tensor> out;
    for (const GcnLayer& l : gcn) out.push_back(l.w);
    out.push_back(head_g_w);
    out.push_back(head_g_b);
    return out;
}

std::vector<Tensor> CobformerParams::bga_group() const {
    std::vector<Tensor> out;
    const std::vector<Tensor> gg = gcn_group();
    for (auto& [name, t] : named()) {
        bool in_gcn = false;
        for (const Tensor& g : gg) in_gcn = in_gcn || g.d == t.d;
        if (!in_gcn) out.push_back(t);
    }
    return out;
}

CobformerParams make_cobformer(const ModelConfig& cfg, int feature_dim, int num_classes,
                               Rng& rng) {
    cfg.validate();
    if (feature_dim < 1 || num_classes < 2)
        throw ConfigError("model: need feature_dim >= 1 and num_classes >= 2");
    CobformerParams p;
    p.embed_w = init_weight(rng, feature_dim, cfg.hidden);
    p.embed_b = Tensor::zeros(1, cfg.hidden, true);
    for (int k = 0; k < cfg.num_bga_layers; ++k) {
        BgaLayerParams layer;
        layer.intra_attn = make_attention_block(cfg.hidden, cfg.num_heads, rng);
        layer.intra_ffn = make_ffn_block(cfg.hidden, rng);
        layer.inter_attn = make_attention_block(cfg.hidden, cfg.num_heads, rng);
        layer.inter_ffn = make_ffn_block(cfg.hidden, rng);
        p.bga.push_back(std::move(layer));
    }
    p.fusion_w = init_weight(rng, 2 * cfg.hidden, cfg.hidden);
    p.head_g_w = init_weight(rng, cfg.hidden, num_classes);
    p.head_g_b = Tensor::zeros(1, num_classes, true);
    p.head_t_w = init_weight(rng, cfg.hidden, num_classes);
    p.head_t_b = Tensor::zeros(1, num_classes, true);
    p.gcn.push_back(make_gcn_layer(feature_dim, cfg.hidden, rng));
    for (int i = 1; i < cfg.gcn_layers; ++i)
        p.gcn.push_back(make_gcn_layer(cfg.hidden, cfg.hidden, rng));
    return p;
}

Partition trivial_partition(int num_nodes) {
    Partition part;
    part.P = 1;
    part.epsilon = 0.0;
    part.assignment.assign(static_cast<std::size_t>(num_nodes), 0);
    part.members.resize(1);
    part.members[0].resize(static_cast<std::size_t>(num_nodes));
    std::iota(part.members[0].begin(), part.members[0].end(), 0);
    return part;
}

BgaOut bga_forward(Tape& tape, const CobformerParams& params, const ModelConfig& cfg,
                   const Tensor& features, const Partition& part, bool train,
                   std::uint64_t dropout_seed, bool capture) {
    const int n = features.rows();
    if (static_cast<int>(part.assignment.size()) != n)
        throw ContractError("bga_forward: partition does not cover the feature rows");
    const int P = part.P;
    for (int p = 0; p < P; ++p)
        if (part.members[p].empty())
            throw ContractError("bga_forward: cluster " + std::to_string(p) + " is empty");

    // Cluster-major ordering and its inverse, so per-cluster slices are
    // contiguous row ranges of one concatenated matrix.
    std::vector<int> order;
    order.reserve(static_cast<std::size_t>(n));
    std::vector<int> groups_cm(static_cast<std::size_t>(n));
    std::vector<int> position(static_cast<std::size_t>(n));
    for (int p = 0; p < P; ++p)
        for (NodeId u : part.members[p]) {
            groups_cm[order.size()] = p;
            position[u] = static_cast<int>(order.size());
            order.push_back(u);
        }

    BgaOut out;
    Tensor h = tape.add(tape.matmul(features, params.embed_w), params.embed_b);
    for (std::size_t k = 0; k < params.bga.size(); ++k) {
        const BgaLayerParams& layer = params.bga[k];
        Tensor hd = tape.dropout(h, cfg.dropout_bga, train,
                                 derive_seed(dropout_seed, 101, static_cast<std::uint64_t>(k), 0));
        BgaLayerCapture cap;
        std::vector<Tensor> cluster_rows;
        cluster_rows.reserve(static_cast<std::size_t>(P));
        for (int p = 0; p < P; ++p) {
            Tensor hp = tape.row_gather(hd, part.members[p]);
            AttentionOut attn = attention_forward(tape, layer.intra_attn, hp, hp, capture);
            out.attn_entries += static_cast<std::int64_t>(hp.rows()) * hp.rows();
            cluster_rows.push_back(ffn_forward(tape, layer.intra_ffn, attn.out));
            if (capture) cap.intra.push_back(attn.scores);
        }
        Tensor h_cm = P == 1 ? cluster_rows[0] : tape.concat_rows(cluster_rows);
        Tensor tokens = tape.mean_rows(h_cm, groups_cm, P);
        AttentionOut inter = attention_forward(tape, layer.inter_attn, tokens, tokens, capture);
        out.attn_entries += static_cast<std::int64_t>(P) * P;
        Tensor tokens_out = ffn_forward(tape, layer.inter_ffn, inter.out);
        if (capture) {
            cap.inter = inter.scores;
            out.captures.push_back(std::move(cap));
        }
        Tensor h_nodes = tape.row_gather(h_cm, position);
        Tensor cluster_side = tape.row_gather(tokens_out, part.assignment);
        h = tape.matmul(tape.concat_cols(h_nodes, cluster_side), params.fusion_w);
    }
    out.node_repr = h;
    return out;
}

Tensor gcn_branch(Tape& tape, const CobformerParams& params, const ModelConfig& cfg,
                  const SparseMatrix& adj, const Tensor& features, bool train,
                  std::uint64_t dropout_seed) {
    Tensor h = features;
    for (std::size_t i = 0; i < params.gcn.size(); ++i) {
        h = tape.dropout(h, cfg.dropout_gcn, train,
                         derive_seed(dropout_seed, 201, static_cast<std::uint64_t>(i), 0));
        h = gcn_forward(tape, params.gcn[i], adj, h, i + 1 < params.gcn.size());
    }
    return h;
}

std::pair<Tensor, Tensor> predict_heads(Tape& tape, const CobformerParams& params,
                                        const Tensor& gcn_out, const Tensor& bga_out) {
    Tensor zg = tape.add(tape.matmul(gcn_out, params.head_g_w), params.head_g_b);
    Tensor zt = tape.add(tape.matmul(bga_out, params.head_t_w), params.head_t_b);
    return {zg, zt};
}

Tensor soft_labels(Tape& tape, const Tensor& logits, double tau) {
    if (tau <= 0.0) throw ConfigError("soft_labels: tau must be > 0");
    return tape.row_softmax(tape.scale(logits, tau));
}

namespace {

Tensor masked_mean_neg_loglik(Tape& tape, const Tensor& probs, const std::vector<int>& labels,
                              const std::vector<std::uint8_t>& mask, std::int64_t count) {
    Tensor rows = tape.row_select(probs, mask);
    std::vector<double> onehot(static_cast<std::size_t>(rows.rows()) * rows.cols(), 0.0);
    int at = 0;
    for (std::size_t u = 0; u < mask.size(); ++u) {
        if (!mask[u]) continue;
        const int y = labels[u];
        if (y < 0 || y >= rows.cols())
            throw ValidationError("loss: label out of range at node " + std::to_string(u));
        onehot[static_cast<std::size_t>(at) * rows.cols() + y] = 1.0;
        ++at;
    }
    Tensor picked = tape.elementwise_mul(
        tape.log(rows), Tensor::from_values(rows.rows(), rows.cols(), std::move(onehot), false));
    return tape.scale(tape.sum_all(picked), -1.0 / static_cast<double>(count));
}

}  // namespace

namespace {

// Shared skeleton of the two loss entry points. When target_g/target_t are
// null the multipliers are the detached live soft labels; otherwise they are
// the caller's fixed probability tables. Identical op order either way, so
// the two variants agree bitwise at target = soft value.
Tensor blended_loss(Tape& tape, const Tensor& prob_g, const Tensor& prob_t,
                    const Tensor& soft_g, const Tensor& soft_t, const Tensor* target_g,
                    const Tensor* target_t, const std::vector<int>& labels,
                    const std::vector<std::uint8_t>& train_mask, double alpha) {
    if (alpha <= 0.0 || alpha > 1.0) throw ConfigError("loss: alpha must lie in (0,1]");
    const int n = prob_g.rows();
    if (prob_t.rows() != n || static_cast<int>(train_mask.size()) != n ||
        static_cast<int>(labels.size()) != n)
        throw ShapeError("loss: row counts disagree");
    std::int64_t n_train = 0;
    for (std::uint8_t m : train_mask) n_train += m ? 1 : 0;
    if (n_train == 0) throw ConfigError("loss: train mask is empty");

    Tensor ce = tape.add(masked_mean_neg_loglik(tape, prob_g, labels, train_mask, n_train),
                         masked_mean_neg_loglik(tape, prob_t, labels, train_mask, n_train));
    if (alpha == 1.0) return ce;

    std::vector<std::uint8_t> unlabeled(train_mask.size());
    std::int64_t n_un = 0;
    for (std::size_t u = 0; u < train_mask.size(); ++u) {
        unlabeled[u] = train_mask[u] ? 0 : 1;
        n_un += unlabeled[u];
    }
    if (n_un == 0) throw ConfigError("loss: no unlabeled nodes for the collaborative term");
    Tensor sg = tape.row_select(soft_g, unlabeled);
    Tensor st = tape.row_select(soft_t, unlabeled);
    Tensor mult_g = target_g ? tape.row_select(*target_g, unlabeled) : tape.detach(sg);
    Tensor mult_t = target_t ? tape.row_select(*target_t, unlabeled) : tape.detach(st);
    Tensor cross = tape.add(tape.elementwise_mul(mult_g, tape.log(st)),
                            tape.elementwise_mul(mult_t, tape.log(sg)));
    Tensor co = tape.scale(tape.sum_all(cross), -1.0 / static_cast<double>(n_un));
    return tape.add(tape.scale(ce, alpha), tape.scale(co, 1.0 - alpha));
}

}  // namespace

Tensor collaborative_loss(Tape& tape, const Tensor& prob_g, const Tensor& prob_t,
                          const Tensor& soft_g, const Tensor& soft_t,
                          const std::vector<int>& labels,
                          const std::vector<std::uint8_t>& train_mask, double alpha) {
    return blended_loss(tape, prob_g, prob_t, soft_g, soft_t, nullptr, nullptr, labels,
                        train_mask, alpha);
}

Tensor collaborative_loss_frozen_targets(Tape& tape, const Tensor& prob_g, const Tensor& prob_t,
                                         const Tensor& soft_g, const Tensor& soft_t,
                                         const Tensor& target_g, const Tensor& target_t,
                                         const std::vector<int>& labels,
                                         const std::vector<std::uint8_t>& train_mask,
                                         double alpha) {
    if (target_g.rows() != soft_g.rows() || target_g.cols() != soft_g.cols() ||
        target_t.rows() != soft_t.rows() || target_t.cols() != soft_t.cols())
        throw ShapeError("loss: frozen target shape mismatch");
    return blended_loss(tape, prob_g, prob_t, soft_g, soft_t, &target_g, &target_t, labels,
                        train_mask, alpha);
}

double approx_global_attention(const Partition& part, const Tensor& inter_scores, int p, int q) {
    if (p < 0 || p >= part.P || q < 0 || q >= part.P)
        throw BoundsError("approx_global_attention: cluster index out of range");
    if (inter_scores.rows() != part.P || inter_scores.cols() != part.P)
        throw ShapeError("approx_global_attention: inter score matrix is not P x P");
    return inter_scores.at(p, q) / static_cast<double>(part.members[q].size());
}

double prop41_identity_gap(const Tensor& node_repr, const Partition& part,
                           const Tensor& inter_scores, const Tensor& w_v) {
    const int h = node_repr.cols();
    if (w_v.rows() != h) throw ShapeError("prop41: value projection width mismatch");
    const int dh = w_v.cols();
    double max_gap = 0.0;
    for (int p = 0; p < part.P; ++p) {
        for (int q = 0; q < part.P; ++q) {
            const double a = inter_scores.at(p, q);
            const double sz = static_cast<double>(part.members[q].size());
            for (int c = 0; c < dh; ++c) {
                double token = 0.0;
                double expanded = 0.0;
                for (NodeId v : part.members[q]) {
                    double proj = 0.0;
                    for (int j = 0; j < h; ++j) proj += node_repr.at(v, j) * w_v.at(j, c);
                    token += proj / sz;
                    expanded += (a / sz) * proj;
                }
                max_gap = std::max(max_gap, std::abs(a * token - expanded));
            }
        }
    }
    return max_gap;
}

}  // namespace cob
