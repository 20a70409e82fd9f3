#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "cob/model.hpp"

namespace cob {

struct TrainConfig {
    double learning_rate = 1e-2;
    double weight_decay_gcn = 5e-4;
    double weight_decay_bga = 5e-5;
    int max_epochs = 1000;
    int patience = 100;
    std::uint64_t seed = 0;
    double alpha = 0.8;
    double tau = 0.5;
    int P = 112;
    double epsilon = 0.1;
    // 0 = full batch; otherwise each epoch updates on the subgraph induced by
    // this many sampled clusters. Evaluation always uses the full graph.
    int batch_clusters = 0;

    void validate() const;
};

// Adam with decoupled weight decay; one state per parameter group.
struct AdamState {
    std::vector<std::vector<double>> m, v;
    std::int64_t t = 0;
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
};
void adam_init(AdamState& state, const std::vector<Tensor>& params);
void adam_step(std::vector<Tensor>& params, AdamState& state, double learning_rate,
               double weight_decay);

struct EpochRecord {
    int epoch = 0;
    double loss = 0.0;
    double val_g = 0.0, val_t = 0.0;
    double test_mi_g = 0.0, test_ma_g = 0.0;
    double test_mi_t = 0.0, test_ma_t = 0.0;
};

using Checkpoint = std::vector<std::pair<std::string, std::vector<double>>>;

struct TrainResult {
    std::vector<EpochRecord> history;
    Checkpoint best_checkpoint;
    int best_epoch = 0;  // 0 = initialization (no epoch improved)
    EpochRecord best_record;
    std::int64_t attn_entries_per_forward = 0;
};

// Full-batch collaborative training: both branches forward, Adam per group,
// early stop and model selection on the mean of the two heads' validation
// Micro-F1. alpha/tau are taken from TrainConfig.
TrainResult train_loop(CobformerParams& params, const ModelConfig& model_cfg,
                       const TrainConfig& train_cfg, const Graph& graph, const NodeData& data,
                       const Partition& part);

std::vector<int> argmax_rows(const Tensor& t);

// (MicroF1, MacroF1) over the masked nodes; Macro averages classes that occur
// in the masked labels.
std::pair<double, double> micro_macro_f1(const std::vector<int>& predicted,
                                         const std::vector<int>& labels,
                                         const std::vector<std::uint8_t>& mask);

void restore_checkpoint(CobformerParams& params, const Checkpoint& ckpt);

}  // namespace cob
