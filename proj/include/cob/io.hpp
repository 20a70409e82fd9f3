#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "cob/analysis.hpp"
#include "cob/model.hpp"
#include "cob/partition.hpp"
#include "cob/synth.hpp"
#include "cob/train.hpp"

namespace cob {

struct NamedTensor {
    std::string name;
    int rows = 0;
    int cols = 0;
    std::vector<double> values;
};

// Binary checkpoint: magic "CBT1", then per tensor a u32 name length, the
// name bytes, u32 rows, u32 cols, and rows*cols little-endian doubles.
void save_checkpoint(const std::string& path, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> load_checkpoint(const std::string& path);

std::vector<NamedTensor> to_named_tensors(const CobformerParams& params);
std::vector<NamedTensor> checkpoint_tensors(const CobformerParams& params,
                                            const Checkpoint& ckpt);
void load_into(CobformerParams& params, const std::vector<NamedTensor>& tensors);

// Text partition artifact: "node<TAB>cluster" lines, then a summary line
// "P=... cut=... maxload=...".
void save_partition(const std::string& path, const Partition& part, std::int64_t cut);
Partition load_partition(const std::string& path);

// Attention dump: "BGA P=<P> layer=<k>" with per-cluster blocks and the inter
// matrix, or "DENSE N=<N>" with N rows.
struct AttnDump {
    bool dense = false;
    int layer_index = 0;
    Tensor matrix;              // dense mode
    std::vector<Tensor> intra;  // BGA mode
    Tensor inter;
};
void save_attention_dump(const std::string& path, const AttnView& view);
AttnDump load_attention_dump(const std::string& path);

void write_metrics(const std::string& path, const std::vector<EpochRecord>& history);

nlohmann::json default_config();
nlohmann::json load_json_file(const std::string& path);
void merge_config(nlohmann::json& base, const nlohmann::json& overlay);

ModelConfig model_from_json(const nlohmann::json& cfg);
TrainConfig train_from_json(const nlohmann::json& cfg);
SynthSpec synth_from_json(const nlohmann::json& cfg);

void write_manifest(const std::string& path, const nlohmann::json& config_echo,
                    std::uint64_t seed);

}  // namespace cob
