#include "cob/train.hpp"

#include <algorithm>
#include <cmath>

#include "cob/common.hpp"

namespace cob {

void TrainConfig::validate() const {
    if (learning_rate <= 0.0) throw ConfigError("train: learning_rate must be > 0");
    if (weight_decay_gcn < 0.0 || weight_decay_bga < 0.0)
        throw ConfigError("train: weight decay must be >= 0");
    if (max_epochs < 0) throw ConfigError("train: max_epochs must be >= 0");
    if (patience < 1) throw ConfigError("train: patience must be >= 1");
    if (alpha <= 0.0 || alpha > 1.0) throw ConfigError("train: alpha must lie in (0,1]");
    if (tau <= 0.0) throw ConfigError("train: tau must be > 0");
    if (P < 1) throw ConfigError("train: P must be >= 1");
    if (epsilon < 0.0) throw ConfigError("train: epsilon must be >= 0");
    if (batch_clusters < 0) throw ConfigError("train: batch_clusters must be >= 0");
}

void adam_init(AdamState& state, const std::vector<Tensor>& params) {
    state.m.clear();
    state.v.clear();
    state.t = 0;
    for (const Tensor& p : params) {
        state.m.emplace_back(p.values().size(), 0.0);
        state.v.emplace_back(p.values().size(), 0.0);
    }
}

void adam_step(std::vector<Tensor>& params, AdamState& state, double learning_rate,
               double weight_decay) {
    if (state.m.size() != params.size())
        throw ContractError("adam: state not initialized for this parameter list");
    state.t += 1;
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor& p = params[i];
        p.d->ensure_grad();
        std::vector<double>& m = state.m[i];
        std::vector<double>& v = state.v[i];
        for (std::size_t j = 0; j < p.values().size(); ++j) {
            const double g = p.grad()[j];
            m[j] = state.beta1 * m[j] + (1.0 - state.beta1) * g;
            v[j] = state.beta2 * v[j] + (1.0 - state.beta2) * g * g;
            const double mhat = m[j] / bc1;
            const double vhat = v[j] / bc2;
            const double theta = p.values()[j];
            p.values()[j] =
                theta - learning_rate * mhat / (std::sqrt(vhat) + state.eps) -
                learning_rate * weight_decay * theta;
        }
    }
}

std::vector<int> argmax_rows(const Tensor& t) {
    std::vector<int> out(static_cast<std::size_t>(t.rows()));
    for (int r = 0; r < t.rows(); ++r) {
        int best = 0;
        for (int c = 1; c < t.cols(); ++c)
            if (t.at(r, c) > t.at(r, best)) best = c;
        out[r] = best;
    }
    return out;
}

std::pair<double, double> micro_macro_f1(const std::vector<int>& predicted,
                                         const std::vector<int>& labels,
                                         const std::vector<std::uint8_t>& mask) {
    if (predicted.size() != labels.size() || mask.size() != labels.size())
        throw ContractError("f1: input lengths disagree");
    std::int64_t total = 0, correct = 0;
    int max_class = 0;
    for (std::size_t u = 0; u < mask.size(); ++u) {
        if (!mask[u]) continue;
        ++total;
        if (predicted[u] == labels[u]) ++correct;
        max_class = std::max({max_class, labels[u], predicted[u]});
    }
    if (total == 0) throw ContractError("f1: empty mask");

    std::vector<std::int64_t> tp(static_cast<std::size_t>(max_class) + 1, 0);
    std::vector<std::int64_t> fp(tp.size(), 0), fn(tp.size(), 0);
    std::vector<std::uint8_t> in_labels(tp.size(), 0);
    for (std::size_t u = 0; u < mask.size(); ++u) {
        if (!mask[u]) continue;
        in_labels[labels[u]] = 1;
        if (predicted[u] == labels[u]) {
            ++tp[labels[u]];
        } else {
            ++fp[predicted[u]];
            ++fn[labels[u]];
        }
    }
    double macro = 0.0;
    int classes = 0;
    for (std::size_t c = 0; c < tp.size(); ++c) {
        if (!in_labels[c]) continue;
        ++classes;
        const std::int64_t denom = 2 * tp[c] + fp[c] + fn[c];
        if (denom > 0) macro += 2.0 * static_cast<double>(tp[c]) / static_cast<double>(denom);
    }
    return {static_cast<double>(correct) / static_cast<double>(total), macro / classes};
}

void restore_checkpoint(CobformerParams& params, const Checkpoint& ckpt) {
    auto named = params.named();
    if (named.size() != ckpt.size())
        throw ContractError("checkpoint: tensor count mismatch");
    for (std::size_t i = 0; i < named.size(); ++i) {
        if (named[i].first != ckpt[i].first)
            throw ContractError("checkpoint: tensor name mismatch at " + named[i].first);
        if (named[i].second.values().size() != ckpt[i].second.size())
            throw ContractError("checkpoint: tensor size mismatch at " + named[i].first);
        named[i].second.values() = ckpt[i].second;
    }
}

namespace {

Checkpoint snapshot(const CobformerParams& params) {
    Checkpoint out;
    for (auto& [name, t] : params.named()) out.emplace_back(name, t.values());
    return out;
}

// Subgraph induced by a cluster sample: kept nodes in cluster-block order,
// edges restricted to the sample, masks/labels/features gathered along.
struct ClusterBatch {
    Graph graph;
    Partition part;
    Tensor features;
    std::vector<int> labels;
    std::vector<std::uint8_t> train_mask;
    std::int64_t train_nodes = 0;
    std::int64_t unlabeled_nodes = 0;
};

ClusterBatch induce_cluster_batch(const Graph& graph, const NodeData& data,
                                  const Partition& part, const std::vector<int>& clusters) {
    ClusterBatch out;
    std::vector<int> old2new(static_cast<std::size_t>(graph.num_nodes), -1);
    std::vector<NodeId> nodes;
    out.part.P = static_cast<int>(clusters.size());
    out.part.epsilon = part.epsilon;
    out.part.members.resize(clusters.size());
    for (std::size_t b = 0; b < clusters.size(); ++b)
        for (NodeId u : part.members[clusters[b]]) {
            old2new[u] = static_cast<int>(nodes.size());
            out.part.assignment.push_back(static_cast<int>(b));
            out.part.members[b].push_back(static_cast<NodeId>(nodes.size()));
            nodes.push_back(u);
        }

    std::vector<std::pair<NodeId, NodeId>> edges;
    for (NodeId u : nodes)
        for (NodeId v : graph.neighbors(u))
            if (u < v && old2new[v] >= 0) edges.emplace_back(old2new[u], old2new[v]);
    out.graph = Graph::from_edges(static_cast<int>(nodes.size()), edges);

    const int m = static_cast<int>(nodes.size());
    std::vector<double> feat(static_cast<std::size_t>(m) * data.feature_dim);
    out.labels.resize(m);
    out.train_mask.resize(m);
    for (int i = 0; i < m; ++i) {
        const NodeId u = nodes[i];
        std::copy_n(data.features.begin() + static_cast<std::size_t>(u) * data.feature_dim,
                    data.feature_dim, feat.begin() + static_cast<std::size_t>(i) * data.feature_dim);
        out.labels[i] = data.labels[u];
        out.train_mask[i] = data.train_mask[u];
        out.train_nodes += data.train_mask[u] ? 1 : 0;
        out.unlabeled_nodes += data.train_mask[u] ? 0 : 1;
    }
    out.features = Tensor::from_values(m, data.feature_dim, std::move(feat), false);
    return out;
}

// Distinct cluster ids, ascending, sampled by partial Fisher-Yates.
std::vector<int> sample_clusters(int total, int want, Rng& rng) {
    std::vector<int> ids(static_cast<std::size_t>(total));
    for (int p = 0; p < total; ++p) ids[p] = p;
    for (int i = 0; i < want; ++i) {
        const int j = i + static_cast<int>(rng.next_below(static_cast<std::uint64_t>(total - i)));
        std::swap(ids[i], ids[j]);
    }
    ids.resize(static_cast<std::size_t>(want));
    std::sort(ids.begin(), ids.end());
    return ids;
}

}  // namespace

TrainResult train_loop(CobformerParams& params, const ModelConfig& model_cfg,
                       const TrainConfig& train_cfg, const Graph& graph, const NodeData& data,
                       const Partition& part) {
    train_cfg.validate();
    ModelConfig cfg = model_cfg;
    cfg.alpha = train_cfg.alpha;
    cfg.tau = train_cfg.tau;
    cfg.validate();
    data.validate(graph.num_nodes);
    part.validate(graph.num_nodes);
    if (train_cfg.batch_clusters > part.P)
        throw ConfigError("train: batch_clusters exceeds the partition's cluster count");
    const bool minibatch = train_cfg.batch_clusters > 0 && train_cfg.batch_clusters < part.P;

    const Tensor features =
        Tensor::from_values(graph.num_nodes, data.feature_dim, data.features, false);
    const SparseMatrix adj = normalized_adjacency(graph);

    std::vector<Tensor> group_g = params.gcn_group();
    std::vector<Tensor> group_b = params.bga_group();
    const std::vector<Tensor> all = params.all();
    AdamState state_g, state_b;
    adam_init(state_g, group_g);
    adam_init(state_b, group_b);

    TrainResult res;
    res.best_checkpoint = snapshot(params);
    double best_val = -1.0;
    int since_best = 0;

    for (int epoch = 1; epoch <= train_cfg.max_epochs; ++epoch) {
        const std::uint64_t seed_base = derive_seed(train_cfg.seed, 7, epoch, 0);
        EpochRecord rec;
        rec.epoch = epoch;
        try {
            if (minibatch) {
                ClusterBatch batch;
                for (std::uint64_t attempt = 0;; ++attempt) {
                    // a usable batch covers labeled nodes, plus unlabeled
                    // ones whenever the mutual term is active
                    if (attempt == 64)
                        throw ContractError("train: no usable cluster batch after 64 draws");
                    Rng rng(derive_seed(train_cfg.seed, 9, epoch, attempt));
                    batch = induce_cluster_batch(
                        graph, data, part,
                        sample_clusters(part.P, train_cfg.batch_clusters, rng));
                    if (batch.train_nodes > 0 &&
                        (cfg.alpha == 1.0 || batch.unlabeled_nodes > 0))
                        break;
                }
                const SparseMatrix batch_adj = normalized_adjacency(batch.graph);
                Tape tape;
                Tensor gcn_out =
                    gcn_branch(tape, params, cfg, batch_adj, batch.features, true, seed_base);
                BgaOut bga = bga_forward(tape, params, cfg, batch.features, batch.part, true,
                                         seed_base, false);
                auto [zg, zt] = predict_heads(tape, params, gcn_out, bga.node_repr);
                Tensor loss = collaborative_loss(
                    tape, tape.row_softmax(zg), tape.row_softmax(zt),
                    soft_labels(tape, zg, cfg.tau), soft_labels(tape, zt, cfg.tau), batch.labels,
                    batch.train_mask, cfg.alpha);
                rec.loss = loss.item();
                zero_grad(all);
                tape.backward(loss);
            } else {
                Tape tape;
                Tensor gcn_out = gcn_branch(tape, params, cfg, adj, features, true, seed_base);
                BgaOut bga = bga_forward(tape, params, cfg, features, part, true, seed_base, false);
                auto [zg, zt] = predict_heads(tape, params, gcn_out, bga.node_repr);
                Tensor loss = collaborative_loss(
                    tape, tape.row_softmax(zg), tape.row_softmax(zt), soft_labels(tape, zg, cfg.tau),
                    soft_labels(tape, zt, cfg.tau), data.labels, data.train_mask, cfg.alpha);
                rec.loss = loss.item();
                zero_grad(all);
                tape.backward(loss);
            }
            adam_step(group_g, state_g, train_cfg.learning_rate, train_cfg.weight_decay_gcn);
            adam_step(group_b, state_b, train_cfg.learning_rate, train_cfg.weight_decay_bga);

            Tape tape;
            Tensor gcn_out = gcn_branch(tape, params, cfg, adj, features, false, seed_base);
            BgaOut bga = bga_forward(tape, params, cfg, features, part, false, seed_base, false);
            res.attn_entries_per_forward = bga.attn_entries;
            auto [zg, zt] = predict_heads(tape, params, gcn_out, bga.node_repr);
            const std::vector<int> pred_g = argmax_rows(zg);
            const std::vector<int> pred_t = argmax_rows(zt);
            rec.val_g = micro_macro_f1(pred_g, data.labels, data.val_mask).first;
            rec.val_t = micro_macro_f1(pred_t, data.labels, data.val_mask).first;
            std::tie(rec.test_mi_g, rec.test_ma_g) =
                micro_macro_f1(pred_g, data.labels, data.test_mask);
            std::tie(rec.test_mi_t, rec.test_ma_t) =
                micro_macro_f1(pred_t, data.labels, data.test_mask);
        } catch (const NumericalFault& e) {
            throw NumericalFault("epoch " + std::to_string(epoch) + ": " + e.what());
        }
        res.history.push_back(rec);

        const double val_mean = 0.5 * (rec.val_g + rec.val_t);
        if (val_mean > best_val) {
            best_val = val_mean;
            res.best_epoch = epoch;
            res.best_record = rec;
            res.best_checkpoint = snapshot(params);
            since_best = 0;
        } else if (++since_best >= train_cfg.patience) {
            break;
        }
    }
    return res;
}

}  // namespace cob
