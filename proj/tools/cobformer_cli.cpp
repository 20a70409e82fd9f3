#include <CLI11.hpp>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "cob/analysis.hpp"
#include "cob/common.hpp"
#include "cob/io.hpp"
#include "cob/model.hpp"
#include "cob/partition.hpp"
#include "cob/synth.hpp"
#include "cob/train.hpp"

namespace {

using nlohmann::json;

cob::LoadedGraph load_dataset(const json& cfg) {
    const json& d = cfg.at("data");
    const std::string content = d.value("cora_content", "");
    if (!content.empty())
        return cob::load_cora_raw(content, d.value("cora_cites", ""), "planetoid-public");
    const std::string edges = d.value("edges", "");
    if (edges.empty())
        throw cob::ConfigError(
            "no dataset configured: set data.cora_content/cora_cites or data.edges/labels");
    return cob::load_edge_list(edges, d.value("labels", ""), d.value("features", ""),
                               d.value("masks", ""));
}

std::string out_path(const json& cfg, const std::string& name) {
    const std::string dir = cfg.value("out_dir", "out");
    std::filesystem::create_directories(dir);
    return dir + "/" + name;
}

cob::Partition make_partition(const json& cfg, const cob::Graph& graph) {
    const cob::ModelConfig mcfg = cob::model_from_json(cfg);
    if (mcfg.vanilla_attention) return cob::trivial_partition(graph.num_nodes);
    const cob::TrainConfig tcfg = cob::train_from_json(cfg);
    return cob::partition_multilevel(graph, tcfg.P, tcfg.epsilon, tcfg.seed);
}

int run_partition(const json& cfg) {
    const cob::LoadedGraph lg = load_dataset(cfg);
    const cob::TrainConfig tcfg = cob::train_from_json(cfg);
    const cob::Partition part =
        cob::partition_multilevel(lg.graph, tcfg.P, tcfg.epsilon, tcfg.seed);
    const std::int64_t cut = cob::edge_cut(lg.graph, part);
    cob::save_partition(out_path(cfg, "partition.tsv"), part, cut);
    cob::write_manifest(out_path(cfg, "manifest.json"), cfg, tcfg.seed);
    std::size_t maxload = 0;
    for (const auto& mem : part.members) maxload = std::max(maxload, mem.size());
    std::cout << "P=" << part.P << " cut=" << cut << " maxload=" << maxload << "\n";
    return 0;
}

int run_synth(const json& cfg) {
    const cob::SynthSpec spec = cob::synth_from_json(cfg);
    const cob::SynthResult res = cob::generate_homophilic_graph(spec);
    const double measured = cob::edge_homophily(res.graph, res.data.labels);

    std::ofstream edges(out_path(cfg, "synth_edges.tsv"));
    for (cob::NodeId u = 0; u < res.graph.num_nodes; ++u)
        for (cob::NodeId v : res.graph.neighbors(u))
            if (v > u) edges << u << '\t' << v << '\n';
    std::ofstream labels(out_path(cfg, "synth_labels.tsv"));
    for (cob::NodeId u = 0; u < res.graph.num_nodes; ++u)
        labels << u << '\t' << res.data.labels[u] << '\n';

    json echo = cfg;
    echo["measured_rho"] = measured;
    cob::write_manifest(out_path(cfg, "manifest.json"), echo, spec.seed);
    std::cout << "n=" << res.graph.num_nodes << " edges=" << res.graph.num_undirected_edges
              << " measured_rho=" << measured << "\n";
    return 0;
}

int run_train(const json& cfg) {
    const cob::LoadedGraph lg = load_dataset(cfg);
    cob::ModelConfig mcfg = cob::model_from_json(cfg);
    const cob::TrainConfig tcfg = cob::train_from_json(cfg);
    const cob::Partition part = make_partition(cfg, lg.graph);

    cob::Rng rng(tcfg.seed);
    cob::CobformerParams params =
        cob::make_cobformer(mcfg, lg.data.feature_dim, lg.data.num_classes, rng);
    const cob::TrainResult res =
        cob::train_loop(params, mcfg, tcfg, lg.graph, lg.data, part);

    cob::write_metrics(out_path(cfg, "metrics.jsonl"), res.history);
    cob::save_checkpoint(out_path(cfg, "checkpoint.bin"),
                         cob::checkpoint_tensors(params, res.best_checkpoint));
    cob::save_partition(out_path(cfg, "partition.tsv"), part, cob::edge_cut(lg.graph, part));
    cob::write_manifest(out_path(cfg, "manifest.json"), cfg, tcfg.seed);

    json summary;
    summary["best_epoch"] = res.best_epoch;
    summary["epochs_run"] = res.history.size();
    summary["val_g"] = res.best_record.val_g;
    summary["val_t"] = res.best_record.val_t;
    summary["test_mi_g"] = res.best_record.test_mi_g;
    summary["test_ma_g"] = res.best_record.test_ma_g;
    summary["test_mi_t"] = res.best_record.test_mi_t;
    summary["test_ma_t"] = res.best_record.test_ma_t;
    summary["attn_entries_per_forward"] = res.attn_entries_per_forward;
    std::ofstream(out_path(cfg, "summary.json")) << summary.dump(2) << "\n";
    std::cout << summary.dump() << "\n";
    return 0;
}

int run_analyze(const json& cfg) {
    const cob::LoadedGraph lg = load_dataset(cfg);
    cob::ModelConfig mcfg = cob::model_from_json(cfg);
    const cob::TrainConfig tcfg = cob::train_from_json(cfg);
    const cob::Partition part = make_partition(cfg, lg.graph);
    const int khops = cfg.value("analyze", json::object()).value("khops", 5);

    cob::Rng rng(tcfg.seed);
    cob::CobformerParams params =
        cob::make_cobformer(mcfg, lg.data.feature_dim, lg.data.num_classes, rng);
    const std::string ckpt = cfg.value("analyze", json::object()).value("checkpoint", "");
    if (!ckpt.empty()) cob::load_into(params, cob::load_checkpoint(ckpt));

    cob::Tape tape;
    const cob::Tensor features = cob::Tensor::from_values(
        lg.graph.num_nodes, lg.data.feature_dim, lg.data.features, false);
    cob::ModelConfig eval_cfg = mcfg;
    eval_cfg.alpha = tcfg.alpha;
    eval_cfg.tau = tcfg.tau;
    const cob::BgaOut bga =
        cob::bga_forward(tape, params, eval_cfg, features, part, false, 0, true);

    {
        const cob::CukProfile prof = cob::empirical_cuk(lg.graph, lg.data.labels, khops);
        std::ofstream out(out_path(cfg, "cuk_empirical.csv"));
        out << "k,mean_C\n";
        for (std::size_t k = 0; k < prof.mean_c.size(); ++k)
            out << k << ',' << prof.mean_c[k] << '\n';
    }
    {
        const double rho = cfg.value("analyze", json::object())
                               .value("rho", cob::edge_homophily(lg.graph, lg.data.labels));
        const int classes =
            cfg.value("analyze", json::object()).value("classes", lg.data.num_classes);
        std::ofstream out(out_path(cfg, "cuk_theory.csv"));
        out << "k,C\n";
        for (int k = 0; k <= khops; ++k)
            out << k << ',' << cob::theoretical_cuk(rho, classes, k) << '\n';
    }
    for (std::size_t layer = 0; layer < bga.captures.size(); ++layer) {
        const cob::AttnView view =
            part.P == 1
                ? cob::dense_view(bga.captures[layer].intra[0], static_cast<int>(layer))
                : cob::bga_view(part, bga.captures[layer].intra, bga.captures[layer].inter,
                                static_cast<int>(layer));
        const cob::AttnKProfile prof = cob::attn_k_profile(view, lg.graph, khops);
        const std::string name =
            layer == 0 ? "attnk.csv" : "attnk_layer" + std::to_string(layer) + ".csv";
        std::ofstream out(out_path(cfg, name));
        out << "k,attn_mass\n";
        for (std::size_t k = 0; k < prof.bins.size(); ++k)
            out << k << ',' << prof.bins[k] << '\n';
        out << "overflow," << prof.overflow << '\n';

        cob::save_attention_dump(
            out_path(cfg, layer == 0 ? "attention.dump"
                                     : "attention_layer" + std::to_string(layer) + ".dump"),
            view);
        if (layer == 0) {
            const cob::AttnSnrReport snr = cob::attn_snr(view, lg.data.labels);
            std::ofstream sout(out_path(cfg, "snr.txt"));
            sout << "S=" << snr.same_mass << "\nD=" << snr.diff_mass << "\ndB=" << snr.snr_db
                 << "\n";
        }
    }
    {
        const double n43 = 3.0 * std::pow(static_cast<double>(lg.graph.num_nodes), 4.0 / 3.0);
        std::ofstream out(out_path(cfg, "cost.txt"));
        out << "counter=" << bga.attn_entries << "\n"
            << "per_layer=" << cob::attention_cost(part) << "\n"
            << "bound_3n43=" << n43 << "\n";
    }
    cob::write_manifest(out_path(cfg, "manifest.json"), cfg, tcfg.seed);
    std::cout << "analysis artifacts written to " << cfg.value("out_dir", "out") << "\n";
    return 0;
}

int run_gradcheck(const json& cfg) {
    const json g = cfg.value("gradcheck", json::object());
    const int n = g.value("nodes", 30);
    const int hidden = g.value("hidden", 8);
    const int clusters = g.value("clusters", 2);
    const int feat_dim = g.value("feature_dim", 6);
    const int classes = g.value("classes", 3);
    const double h = g.value("h", 1e-5);
    const double threshold = g.value("threshold", 1e-4);
    const std::uint64_t seed = cfg.value("seed", std::uint64_t{0});

    cob::SynthSpec spec;
    spec.num_nodes = n;
    spec.num_classes = classes;
    spec.target_rho = 0.7;
    spec.avg_degree = 4.0;
    spec.seed = cob::derive_seed(seed, 11, 0, 0);
    const cob::SynthResult synth = cob::generate_homophilic_graph(spec);

    cob::Rng rng(cob::derive_seed(seed, 12, 0, 0));
    cob::NodeData data = synth.data;
    data.feature_dim = feat_dim;
    data.features.resize(static_cast<std::size_t>(n) * feat_dim);
    for (double& x : data.features) x = rng.uniform(-1.0, 1.0);
    for (int u = 0; u < n; ++u) data.train_mask[u] = u % 3 == 0 ? 1 : 0;

    const cob::Partition part = cob::partition_multilevel(
        synth.graph, clusters, 0.3, cob::derive_seed(seed, 13, 0, 0));
    cob::ModelConfig mcfg = cob::model_from_json(cfg);
    mcfg.hidden = hidden;
    const cob::TrainConfig tcfg = cob::train_from_json(cfg);
    cob::ModelConfig run_cfg = mcfg;
    run_cfg.alpha = tcfg.alpha;
    run_cfg.tau = tcfg.tau;
    cob::CobformerParams params = cob::make_cobformer(run_cfg, feat_dim, classes, rng);

    const cob::Tensor features = cob::Tensor::from_values(n, feat_dim, data.features, false);
    const cob::SparseMatrix adj = cob::normalized_adjacency(synth.graph);
    const std::uint64_t drop_seed = cob::derive_seed(seed, 14, 0, 0);

    // The live loss stops gradients through the mutual-supervision targets,
    // which finite differences cannot see. Freeze those targets at the
    // current parameters so the checked composite has the training gradient.
    cob::Tensor target_g, target_t;
    {
        cob::Tape tape;
        cob::Tensor gcn_out =
            cob::gcn_branch(tape, params, run_cfg, adj, features, true, drop_seed);
        cob::BgaOut bga =
            cob::bga_forward(tape, params, run_cfg, features, part, true, drop_seed, false);
        auto [zg, zt] = cob::predict_heads(tape, params, gcn_out, bga.node_repr);
        const cob::Tensor sg = cob::soft_labels(tape, zg, run_cfg.tau);
        const cob::Tensor st = cob::soft_labels(tape, zt, run_cfg.tau);
        target_g = cob::Tensor::from_values(sg.rows(), sg.cols(), sg.values(), false);
        target_t = cob::Tensor::from_values(st.rows(), st.cols(), st.values(), false);
    }
    const auto build = [&](cob::Tape& tape) {
        cob::Tensor gcn_out =
            cob::gcn_branch(tape, params, run_cfg, adj, features, true, drop_seed);
        cob::BgaOut bga =
            cob::bga_forward(tape, params, run_cfg, features, part, true, drop_seed, false);
        auto [zg, zt] = cob::predict_heads(tape, params, gcn_out, bga.node_repr);
        return cob::collaborative_loss_frozen_targets(
            tape, tape.row_softmax(zg), tape.row_softmax(zt),
            cob::soft_labels(tape, zg, run_cfg.tau), cob::soft_labels(tape, zt, run_cfg.tau),
            target_g, target_t, data.labels, data.train_mask, run_cfg.alpha);
    };
    const cob::GradCheckResult res = cob::grad_check(build, params.all(), h);
    const bool pass = res.max_rel_error < threshold;
    std::cout << "max_rel_error=" << res.max_rel_error << " coords=" << res.coords_checked
              << " threshold=" << threshold << " " << (pass ? "PASS" : "FAIL") << "\n";
    return pass ? 0 : 1;
}

void set_json(json& cfg, const std::string& dotted, const json& value) {
    json* at = &cfg;
    std::size_t start = 0;
    while (true) {
        const std::size_t dot = dotted.find('.', start);
        const std::string key = dotted.substr(start, dot - start);
        if (dot == std::string::npos) {
            (*at)[key] = value;
            return;
        }
        at = &(*at)[key];
        start = dot + 1;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"cobformer: clustered graph transformer laboratory"};
    app.require_subcommand(1);

    struct FlagSpec {
        std::string flag;
        std::string key;
        enum { Int, Real, Str, Uint, Bool } kind;
    };
    const std::vector<FlagSpec> flags = {
        {"--out", "out_dir", FlagSpec::Str},
        {"--seed", "seed", FlagSpec::Uint},
        {"--cora-content", "data.cora_content", FlagSpec::Str},
        {"--cora-cites", "data.cora_cites", FlagSpec::Str},
        {"--edges", "data.edges", FlagSpec::Str},
        {"--labels", "data.labels", FlagSpec::Str},
        {"--features", "data.features", FlagSpec::Str},
        {"--masks", "data.masks", FlagSpec::Str},
        {"--hidden", "model.hidden", FlagSpec::Int},
        {"--heads", "model.num_heads", FlagSpec::Int},
        {"--bga-layers", "model.num_bga_layers", FlagSpec::Int},
        {"--gcn-layers", "model.gcn_layers", FlagSpec::Int},
        {"--dropout-gcn", "model.dropout_gcn", FlagSpec::Real},
        {"--dropout-bga", "model.dropout_bga", FlagSpec::Real},
        {"--vanilla", "model.vanilla_attention", FlagSpec::Bool},
        {"--lr", "train.learning_rate", FlagSpec::Real},
        {"--wd-gcn", "train.weight_decay_gcn", FlagSpec::Real},
        {"--wd-bga", "train.weight_decay_bga", FlagSpec::Real},
        {"--epochs", "train.max_epochs", FlagSpec::Int},
        {"--patience", "train.patience", FlagSpec::Int},
        {"--alpha", "train.alpha", FlagSpec::Real},
        {"--tau", "train.tau", FlagSpec::Real},
        {"--P", "train.P", FlagSpec::Int},
        {"--epsilon", "train.epsilon", FlagSpec::Real},
        {"--batch-clusters", "train.batch_clusters", FlagSpec::Int},
        {"--n", "synth.n", FlagSpec::Int},
        {"--classes", "synth.classes", FlagSpec::Int},
        {"--rho", "synth.rho", FlagSpec::Real},
        {"--deg", "synth.deg", FlagSpec::Real},
        {"--checkpoint", "analyze.checkpoint", FlagSpec::Str},
        {"--khops", "analyze.khops", FlagSpec::Int},
        {"--theory-rho", "analyze.rho", FlagSpec::Real},
        {"--theory-classes", "analyze.classes", FlagSpec::Int},
        {"--gc-nodes", "gradcheck.nodes", FlagSpec::Int},
        {"--gc-hidden", "gradcheck.hidden", FlagSpec::Int},
        {"--gc-clusters", "gradcheck.clusters", FlagSpec::Int},
        {"--gc-feature-dim", "gradcheck.feature_dim", FlagSpec::Int},
        {"--gc-classes", "gradcheck.classes", FlagSpec::Int},
        {"--gc-step", "gradcheck.h", FlagSpec::Real},
        {"--gc-threshold", "gradcheck.threshold", FlagSpec::Real},
    };

    struct SubState {
        CLI::App* sub = nullptr;
        std::string config_path;
        std::map<std::string, std::string> str_vals;
        std::map<std::string, std::int64_t> int_vals;
        std::map<std::string, std::uint64_t> uint_vals;
        std::map<std::string, double> real_vals;
        std::map<std::string, bool> bool_vals;
        std::map<std::string, CLI::Option*> opts;
    };
    std::vector<std::unique_ptr<SubState>> subs;
    for (const std::string& name :
         {std::string("partition"), std::string("synth"), std::string("train"),
          std::string("analyze"), std::string("gradcheck")}) {
        auto st = std::make_unique<SubState>();
        st->sub = app.add_subcommand(name, name + " subcommand");
        st->sub->add_option("--config", st->config_path, "JSON config file");
        for (const FlagSpec& f : flags) {
            switch (f.kind) {
                case FlagSpec::Str:
                    st->opts[f.key] = st->sub->add_option(f.flag, st->str_vals[f.key]);
                    break;
                case FlagSpec::Int:
                    st->opts[f.key] = st->sub->add_option(f.flag, st->int_vals[f.key]);
                    break;
                case FlagSpec::Uint:
                    st->opts[f.key] = st->sub->add_option(f.flag, st->uint_vals[f.key]);
                    break;
                case FlagSpec::Real:
                    st->opts[f.key] = st->sub->add_option(f.flag, st->real_vals[f.key]);
                    break;
                case FlagSpec::Bool:
                    st->opts[f.key] = st->sub->add_flag(f.flag, st->bool_vals[f.key]);
                    break;
            }
        }
        subs.push_back(std::move(st));
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        for (const auto& st : subs) {
            if (!st->sub->parsed()) continue;
            json cfg = cob::default_config();
            if (!st->config_path.empty()) cob::merge_config(cfg, cob::load_json_file(st->config_path));
            for (const FlagSpec& f : flags) {
                CLI::Option* opt = st->opts.at(f.key);
                if (!opt->count()) continue;
                switch (f.kind) {
                    case FlagSpec::Str: set_json(cfg, f.key, st->str_vals[f.key]); break;
                    case FlagSpec::Int: set_json(cfg, f.key, st->int_vals[f.key]); break;
                    case FlagSpec::Uint: set_json(cfg, f.key, st->uint_vals[f.key]); break;
                    case FlagSpec::Real: set_json(cfg, f.key, st->real_vals[f.key]); break;
                    case FlagSpec::Bool: set_json(cfg, f.key, st->bool_vals[f.key]); break;
                }
            }
            const std::string name = st->sub->get_name();
            if (name == "partition") return run_partition(cfg);
            if (name == "synth") return run_synth(cfg);
            if (name == "train") return run_train(cfg);
            if (name == "analyze") return run_analyze(cfg);
            if (name == "gradcheck") return run_gradcheck(cfg);
        }
        std::cerr << "error: no subcommand\n";
        return 2;
    } catch (const cob::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
