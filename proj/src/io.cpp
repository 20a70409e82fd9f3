#include "cob/io.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <sstream>

#include "cob/analysis.hpp"
#include "cob/common.hpp"

namespace cob {

namespace {

constexpr char kMagic[4] = {'C', 'B', 'T', '1'};

void write_u32(std::ofstream& out, std::uint32_t v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

std::uint32_t read_u32(std::ifstream& in, const std::string& path) {
    std::uint32_t v = 0;
    in.read(reinterpret_cast<char*>(&v), sizeof v);
    if (in.gcount() != sizeof v)
        throw ParseError(path + ": truncated at byte offset " +
                         std::to_string(static_cast<std::int64_t>(in.tellg()) < 0
                                            ? 0
                                            : static_cast<std::int64_t>(in.tellg())));
    return v;
}

std::ofstream open_out(const std::string& path, bool binary) {
    std::ofstream out(path, binary ? std::ios::binary : std::ios::out);
    if (!out) throw Error("cannot open for writing: " + path);
    return out;
}

std::ifstream open_in(const std::string& path, bool binary) {
    std::ifstream in(path, binary ? std::ios::binary : std::ios::in);
    if (!in) throw Error("cannot open for reading: " + path);
    return in;
}

// Canonical real formatting for text artifacts: shortest round-trip form.
std::string fmt_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    double parsed = std::strtod(buf, nullptr);
    if (parsed == v) {
        for (int prec = 1; prec < 17; ++prec) {
            char shorter[32];
            std::snprintf(shorter, sizeof shorter, "%.*g", prec, v);
            if (std::strtod(shorter, nullptr) == v) return shorter;
        }
    }
    return buf;
}

}  // namespace

void save_checkpoint(const std::string& path, const std::vector<NamedTensor>& tensors) {
    std::ofstream out = open_out(path, true);
    out.write(kMagic, 4);
    for (const NamedTensor& t : tensors) {
        write_u32(out, static_cast<std::uint32_t>(t.name.size()));
        out.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
        write_u32(out, static_cast<std::uint32_t>(t.rows));
        write_u32(out, static_cast<std::uint32_t>(t.cols));
        out.write(reinterpret_cast<const char*>(t.values.data()),
                  static_cast<std::streamsize>(t.values.size() * sizeof(double)));
    }
    if (!out) throw Error("write failed: " + path);
}

std::vector<NamedTensor> load_checkpoint(const std::string& path) {
    std::ifstream in = open_in(path, true);
    char magic[4] = {};
    in.read(magic, 4);
    if (in.gcount() != 4 || std::memcmp(magic, kMagic, 4) != 0)
        throw ParseError(path + ": expected checkpoint format CBT1, found \"" +
                         std::string(magic, magic + std::max<std::streamsize>(in.gcount(), 0)) +
                         "\"");
    std::vector<NamedTensor> out;
    while (true) {
        if (in.peek() == std::ifstream::traits_type::eof()) break;
        NamedTensor t;
        const std::uint32_t name_len = read_u32(in, path);
        t.name.resize(name_len);
        in.read(t.name.data(), name_len);
        if (in.gcount() != static_cast<std::streamsize>(name_len))
            throw ParseError(path + ": truncated tensor name at byte offset " +
                             std::to_string(static_cast<std::int64_t>(in.tellg())));
        t.rows = static_cast<int>(read_u32(in, path));
        t.cols = static_cast<int>(read_u32(in, path));
        const std::size_t n = static_cast<std::size_t>(t.rows) * static_cast<std::size_t>(t.cols);
        t.values.resize(n);
        in.read(reinterpret_cast<char*>(t.values.data()),
                static_cast<std::streamsize>(n * sizeof(double)));
        if (in.gcount() != static_cast<std::streamsize>(n * sizeof(double)))
            throw ParseError(path + ": truncated tensor \"" + t.name + "\" at byte offset " +
                             std::to_string(static_cast<std::int64_t>(in.tellg())));
        out.push_back(std::move(t));
    }
    return out;
}

std::vector<NamedTensor> to_named_tensors(const CobformerParams& params) {
    std::vector<NamedTensor> out;
    for (auto& [name, t] : params.named())
        out.push_back({name, t.rows(), t.cols(), t.values()});
    return out;
}

std::vector<NamedTensor> checkpoint_tensors(const CobformerParams& params,
                                            const Checkpoint& ckpt) {
    const auto named = params.named();
    if (named.size() != ckpt.size()) throw ContractError("checkpoint: tensor count mismatch");
    std::vector<NamedTensor> out;
    for (std::size_t i = 0; i < named.size(); ++i) {
        if (named[i].first != ckpt[i].first)
            throw ContractError("checkpoint: name mismatch at " + named[i].first);
        out.push_back(
            {ckpt[i].first, named[i].second.rows(), named[i].second.cols(), ckpt[i].second});
    }
    return out;
}

void load_into(CobformerParams& params, const std::vector<NamedTensor>& tensors) {
    auto named = params.named();
    if (named.size() != tensors.size())
        throw ValidationError("checkpoint: expected " + std::to_string(named.size()) +
                              " tensors, file has " + std::to_string(tensors.size()));
    for (std::size_t i = 0; i < named.size(); ++i) {
        if (named[i].first != tensors[i].name)
            throw ValidationError("checkpoint: tensor \"" + tensors[i].name +
                                  "\" where \"" + named[i].first + "\" expected");
        Tensor& t = named[i].second;
        if (t.rows() != tensors[i].rows || t.cols() != tensors[i].cols)
            throw ValidationError("checkpoint: shape mismatch for " + tensors[i].name);
        t.values() = tensors[i].values;
    }
}

void save_partition(const std::string& path, const Partition& part, std::int64_t cut) {
    std::ofstream out = open_out(path, false);
    for (std::size_t u = 0; u < part.assignment.size(); ++u)
        out << u << '\t' << part.assignment[u] << '\n';
    std::size_t maxload = 0;
    for (const auto& mem : part.members) maxload = std::max(maxload, mem.size());
    out << "P=" << part.P << " cut=" << cut << " maxload=" << maxload << '\n';
    if (!out) throw Error("write failed: " + path);
}

Partition load_partition(const std::string& path) {
    std::ifstream in = open_in(path, false);
    Partition part;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.rfind("P=", 0) == 0) {
            int p = 0;
            if (std::sscanf(line.c_str(), "P=%d", &p) != 1 || p < 1)
                throw ParseError(path + ":" + std::to_string(line_no) + ": bad summary line");
            part.P = p;
            continue;
        }
        long node = 0, cluster = 0;
        if (std::sscanf(line.c_str(), "%ld\t%ld", &node, &cluster) != 2)
            throw ParseError(path + ":" + std::to_string(line_no) + ": expected node<TAB>cluster");
        if (node != static_cast<long>(part.assignment.size()))
            throw ParseError(path + ":" + std::to_string(line_no) + ": node ids must be dense");
        part.assignment.push_back(static_cast<int>(cluster));
    }
    if (part.P < 1) throw ParseError(path + ": missing summary line");
    part.members.assign(static_cast<std::size_t>(part.P), {});
    for (std::size_t u = 0; u < part.assignment.size(); ++u) {
        const int c = part.assignment[u];
        if (c < 0 || c >= part.P)
            throw ParseError(path + ": cluster id " + std::to_string(c) + " out of range");
        part.members[c].push_back(static_cast<NodeId>(u));
    }
    return part;
}

namespace {

void write_matrix_rows(std::ofstream& out, const Tensor& m) {
    for (int r = 0; r < m.rows(); ++r) {
        for (int c = 0; c < m.cols(); ++c) {
            if (c) out << ' ';
            out << fmt_double(m.at(r, c));
        }
        out << '\n';
    }
}

Tensor read_matrix_rows(std::ifstream& in, const std::string& path, int rows, int cols) {
    Tensor m = Tensor::zeros(rows, cols, false);
    std::string line;
    for (int r = 0; r < rows; ++r) {
        if (!std::getline(in, line))
            throw ParseError(path + ": truncated at byte offset " +
                             std::to_string(static_cast<std::int64_t>(in.tellg()) < 0
                                                ? -1
                                                : static_cast<std::int64_t>(in.tellg())));
        std::istringstream ss(line);
        for (int c = 0; c < cols; ++c)
            if (!(ss >> m.at(r, c)))
                throw ParseError(path + ": short row, expected " + std::to_string(cols) +
                                 " reals");
    }
    return m;
}

}  // namespace

void save_attention_dump(const std::string& path, const AttnView& view) {
    std::ofstream out = open_out(path, false);
    if (view.dense) {
        out << "DENSE N=" << view.n << '\n';
        write_matrix_rows(out, view.matrix);
    } else {
        out << "BGA P=" << view.part.P << " layer=" << view.layer_index << '\n';
        for (int p = 0; p < view.part.P; ++p) {
            out << "cluster " << p << ": " << view.intra[p].rows() << "x" << view.intra[p].cols()
                << '\n';
            write_matrix_rows(out, view.intra[p]);
        }
        out << "inter: " << view.part.P << "x" << view.part.P << '\n';
        write_matrix_rows(out, view.inter);
    }
    if (!out) throw Error("write failed: " + path);
}

AttnDump load_attention_dump(const std::string& path) {
    std::ifstream in = open_in(path, false);
    std::string line;
    if (!std::getline(in, line)) throw ParseError(path + ": empty dump");
    AttnDump dump;
    int n = 0, p_count = 0;
    if (std::sscanf(line.c_str(), "DENSE N=%d", &n) == 1) {
        dump.dense = true;
        dump.matrix = read_matrix_rows(in, path, n, n);
        return dump;
    }
    if (std::sscanf(line.c_str(), "BGA P=%d layer=%d", &p_count, &dump.layer_index) != 2)
        throw ParseError(path + ": unrecognized dump header \"" + line + "\"");
    for (int p = 0; p < p_count; ++p) {
        if (!std::getline(in, line))
            throw ParseError(path + ": truncated before cluster " + std::to_string(p));
        int idx = 0, r = 0, c = 0;
        if (std::sscanf(line.c_str(), "cluster %d: %dx%d", &idx, &r, &c) != 3 || idx != p)
            throw ParseError(path + ": bad cluster header \"" + line + "\"");
        dump.intra.push_back(read_matrix_rows(in, path, r, c));
    }
    if (!std::getline(in, line)) throw ParseError(path + ": truncated before inter matrix");
    int ir = 0, ic = 0;
    if (std::sscanf(line.c_str(), "inter: %dx%d", &ir, &ic) != 2)
        throw ParseError(path + ": bad inter header \"" + line + "\"");
    dump.inter = read_matrix_rows(in, path, ir, ic);
    return dump;
}

void write_metrics(const std::string& path, const std::vector<EpochRecord>& history) {
    std::ofstream out = open_out(path, false);
    for (const EpochRecord& r : history) {
        nlohmann::json j;
        j["epoch"] = r.epoch;
        j["loss"] = r.loss;
        j["val_g"] = r.val_g;
        j["val_t"] = r.val_t;
        j["test_mi_g"] = r.test_mi_g;
        j["test_ma_g"] = r.test_ma_g;
        j["test_mi_t"] = r.test_mi_t;
        j["test_ma_t"] = r.test_ma_t;
        out << j.dump() << '\n';
    }
    if (!out) throw Error("write failed: " + path);
}

nlohmann::json default_config() {
    const ModelConfig m;
    const TrainConfig t;
    const SynthSpec s;
    return nlohmann::json{
        {"model",
         {{"hidden", m.hidden},
          {"num_bga_layers", m.num_bga_layers},
          {"num_heads", m.num_heads},
          {"dropout_gcn", m.dropout_gcn},
          {"dropout_bga", m.dropout_bga},
          {"gcn_layers", m.gcn_layers},
          {"vanilla_attention", m.vanilla_attention}}},
        {"train",
         {{"learning_rate", t.learning_rate},
          {"weight_decay_gcn", t.weight_decay_gcn},
          {"weight_decay_bga", t.weight_decay_bga},
          {"max_epochs", t.max_epochs},
          {"patience", t.patience},
          {"alpha", t.alpha},
          {"tau", t.tau},
          {"P", t.P},
          {"epsilon", t.epsilon}}},
        {"synth",
         {{"n", s.num_nodes},
          {"classes", s.num_classes},
          {"rho", s.target_rho},
          {"deg", s.avg_degree}}},
        {"data",
         {{"cora_content", ""},
          {"cora_cites", ""},
          {"edges", ""},
          {"labels", ""},
          {"features", ""},
          {"masks", ""}}},
        {"seed", 0},
        {"out_dir", "out"}};
}

nlohmann::json load_json_file(const std::string& path) {
    std::ifstream in = open_in(path, false);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(path + ": " + e.what());
    }
    return j;
}

void merge_config(nlohmann::json& base, const nlohmann::json& overlay) {
    if (!overlay.is_object()) {
        base = overlay;
        return;
    }
    for (auto it = overlay.begin(); it != overlay.end(); ++it) {
        if (base.contains(it.key()) && base[it.key()].is_object() && it.value().is_object())
            merge_config(base[it.key()], it.value());
        else
            base[it.key()] = it.value();
    }
}

namespace {

template <typename T>
T get_field(const nlohmann::json& j, const std::string& key, T fallback) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config field \"" + key + "\": " + e.what());
    }
}

}  // namespace

ModelConfig model_from_json(const nlohmann::json& cfg) {
    ModelConfig m;
    const nlohmann::json j = cfg.contains("model") ? cfg.at("model") : nlohmann::json::object();
    m.hidden = get_field(j, "hidden", m.hidden);
    m.num_bga_layers = get_field(j, "num_bga_layers", m.num_bga_layers);
    m.num_heads = get_field(j, "num_heads", m.num_heads);
    m.dropout_gcn = get_field(j, "dropout_gcn", m.dropout_gcn);
    m.dropout_bga = get_field(j, "dropout_bga", m.dropout_bga);
    m.gcn_layers = get_field(j, "gcn_layers", m.gcn_layers);
    m.vanilla_attention = get_field(j, "vanilla_attention", m.vanilla_attention);
    return m;
}

TrainConfig train_from_json(const nlohmann::json& cfg) {
    TrainConfig t;
    const nlohmann::json j = cfg.contains("train") ? cfg.at("train") : nlohmann::json::object();
    t.learning_rate = get_field(j, "learning_rate", t.learning_rate);
    t.weight_decay_gcn = get_field(j, "weight_decay_gcn", t.weight_decay_gcn);
    t.weight_decay_bga = get_field(j, "weight_decay_bga", t.weight_decay_bga);
    t.max_epochs = get_field(j, "max_epochs", t.max_epochs);
    t.patience = get_field(j, "patience", t.patience);
    t.alpha = get_field(j, "alpha", t.alpha);
    t.tau = get_field(j, "tau", t.tau);
    t.P = get_field(j, "P", t.P);
    t.epsilon = get_field(j, "epsilon", t.epsilon);
    t.batch_clusters = get_field(j, "batch_clusters", t.batch_clusters);
    t.seed = get_field(cfg, "seed", std::uint64_t{0});
    return t;
}

SynthSpec synth_from_json(const nlohmann::json& cfg) {
    SynthSpec s;
    const nlohmann::json j = cfg.contains("synth") ? cfg.at("synth") : nlohmann::json::object();
    s.num_nodes = get_field(j, "n", s.num_nodes);
    s.num_classes = get_field(j, "classes", s.num_classes);
    s.target_rho = get_field(j, "rho", s.target_rho);
    s.avg_degree = get_field(j, "deg", s.avg_degree);
    s.seed = get_field(cfg, "seed", std::uint64_t{0});
    return s;
}

void write_manifest(const std::string& path, const nlohmann::json& config_echo,
                    std::uint64_t seed) {
    nlohmann::json j;
    j["config"] = config_echo;
    j["seed"] = seed;
    j["format_versions"] = {{"checkpoint", 1}, {"partition", 1}, {"attn_dump", 1}, {"metrics", 1}};
    std::ofstream out = open_out(path, false);
    out << j.dump(2) << '\n';
    if (!out) throw Error("write failed: " + path);
}

}  // namespace cob
