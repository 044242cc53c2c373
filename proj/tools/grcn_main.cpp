// grcn: synthesize datasets, train, evaluate, and inspect graph-refined
// recommendation models.
//
//   grcn synth --spec spec.json --out data/
//   grcn train --config run.json --out run/
//   grcn eval --checkpoint run/checkpoint.ckpt --config run.json --split test
//   grcn inspect-edges --checkpoint run/checkpoint.ckpt --config run.json
//   grcn export-embeddings --checkpoint run/checkpoint.ckpt --config run.json
//
// GRCN_THREADS caps OpenMP parallelism. Exit codes: 0 success, 2 config or
// validation error, 3 numeric failure, 4 I/O failure.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "CLI11.hpp"

#include "grcn/checkpoint.hpp"
#include "grcn/config.hpp"
#include "grcn/errors.hpp"
#include "grcn/eval.hpp"
#include "grcn/synthgen.hpp"
#include "grcn/train.hpp"

namespace fs = std::filesystem;
using namespace grcn;

namespace {

int exit_code_for(const Error& e) {
    switch (e.kind()) {
        case ErrorKind::numeric: return 3;
        case ErrorKind::io: return 4;
        default: return 2;
    }
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write file: " + path);
    out << text;
}

struct DatasetBundle {
    InteractionGraph graph;  // split with the run seed
    FeatureSet features;
    std::uint64_t id_digest = 0;
    InteractionData raw;
};

DatasetBundle load_dataset(const RunConfig& cfg, std::uint64_t split_seed, bool need_features) {
    if (cfg.interactions.empty()) {
        throw ValidationError("config: `interactions` path is required");
    }
    DatasetBundle b;
    b.raw = load_interactions_tsv(cfg.interactions);
    if (need_features && cfg.feature_paths.empty()) {
        throw ValidationError("config: at least one feature file is required");
    }
    if (need_features) {
        for (const auto& [modality, path] : cfg.feature_paths) {
            b.features.tables.push_back(load_feature_file(path, modality));
        }
    }
    if (all_ids_numeric(b.raw)) {
        // Numeric ids index feature rows directly; keep that alignment and
        // any interaction-free items.
        std::size_t min_items = b.features.tables.empty() ? 0 : b.features.tables[0].num_items;
        b.raw = with_numeric_dense_ids(b.raw, 0, min_items);
    } else if (need_features) {
        for (const auto& t : b.features.tables) {
            if (t.num_items != b.raw.item_ids.size()) {
                throw ValidationError(
                    "non-numeric item ids require feature rows to match the "
                    "number of distinct items in the interactions file");
            }
        }
    }
    std::uint32_t num_users = static_cast<std::uint32_t>(b.raw.user_ids.size());
    std::uint32_t num_items = static_cast<std::uint32_t>(b.raw.item_ids.size());
    auto unsplit = InteractionGraph::build(num_users, num_items, b.raw.edges);
    b.graph = split_per_user(unsplit, {8, 1, 1}, split_seed);
    b.id_digest = id_mapping_digest(b.raw.user_ids, b.raw.item_ids);
    if (need_features) b.features.validate(num_items);
    return b;
}

RunConfig assemble_config(const std::string& config_path, CLI::App* cmd,
                          const std::uint64_t& seed_flag, const std::string& variant_flag,
                          const std::string& modalities_flag, const std::string& out_flag,
                          const std::size_t& k_flag, const std::string& split_flag) {
    RunConfig cfg;
    if (!config_path.empty()) cfg = run_config_from_json(read_file(config_path));
    // Flags override config values, which override defaults.
    if (cmd->count("--seed")) cfg.seed = seed_flag;
    if (cmd->count("--variant")) apply_variant(cfg.hyper, variant_flag);
    if (cmd->count("--out")) cfg.out_dir = out_flag;
    if (cmd->count("--k")) cfg.hyper.top_k = k_flag;
    if (cmd->count("--split")) {
        cfg.split = split_flag == "validation" ? Partition::validation : Partition::test;
    }
    if (cmd->count("--modalities")) {
        std::map<Modality, std::string> keep;
        std::stringstream ss(modalities_flag);
        std::string name;
        while (std::getline(ss, name, ',')) {
            Modality m = modality_from_name(name);
            auto it = cfg.feature_paths.find(m);
            if (it == cfg.feature_paths.end()) {
                throw ValidationError("--modalities names `" + name +
                                      "` but the config has no feature file for it");
            }
            keep.insert(*it);
        }
        if (keep.empty()) throw ValidationError("--modalities selected nothing");
        cfg.feature_paths = std::move(keep);
    }
    return cfg;
}

void check_digest(const Checkpoint& ckpt, const DatasetBundle& data) {
    if (ckpt.id_digest != data.id_digest) {
        char a[17], b[17];
        std::snprintf(a, sizeof a, "%016llx", static_cast<unsigned long long>(ckpt.id_digest));
        std::snprintf(b, sizeof b, "%016llx", static_cast<unsigned long long>(data.id_digest));
        throw ValidationError(std::string("checkpoint was trained on a different dataset "
                                          "(id digest ") +
                              a + " vs " + b + ")");
    }
    if (ckpt.params.num_users != data.graph.num_users() ||
        ckpt.params.num_items != data.graph.num_items()) {
        throw ValidationError("checkpoint size does not match the dataset");
    }
}

FeatureSet features_for_model(const Checkpoint& ckpt, const DatasetBundle& data) {
    if (ckpt.params.hyper.uniform_baseline) return {};
    FeatureSet selected;
    for (Modality m : ckpt.params.modalities) {
        bool found = false;
        for (const auto& t : data.features.tables) {
            if (t.modality == m) {
                selected.tables.push_back(t);
                found = true;
                break;
            }
        }
        if (!found) {
            throw ValidationError(std::string("checkpoint needs the ") + modality_name(m) +
                                  " modality but no feature file was configured for it");
        }
    }
    return selected;
}

int cmd_synth(const std::string& spec_path, const std::string& out_dir, CLI::App* cmd,
              std::uint64_t seed_flag) {
    SynthSpec spec = SynthSpec::from_json(read_file(spec_path));
    if (cmd->count("--seed")) spec.seed = seed_flag;
    fs::create_directories(out_dir);
    SynthDataset data = generate(spec);

    std::size_t files = 0;
    save_interactions_tsv((fs::path(out_dir) / "interactions.tsv").string(), data.graph);
    files += 1;
    for (const auto& table : data.features.tables) {
        save_feature_file((fs::path(out_dir) /
                           (std::string("features_") + modality_name(table.modality) + ".txt"))
                              .string(),
                          table);
        files += 1;
    }
    save_labels_tsv((fs::path(out_dir) / "labels.tsv").string(), data);
    files += 1;
    write_file((fs::path(out_dir) / "synth_spec.json").string(), spec.to_json());
    files += 1;

    std::size_t n_false = 0;
    for (EdgeLabel l : data.edge_labels) n_false += l == EdgeLabel::false_positive ? 1 : 0;
    std::printf("synth: %zu users, %zu items, %zu edges, noise fraction %.4f, %zu files -> %s\n",
                spec.num_users, spec.num_items, data.graph.num_edges(),
                static_cast<double>(n_false) / static_cast<double>(data.graph.num_edges()),
                files, out_dir.c_str());
    return 0;
}

int cmd_train(const RunConfig& cfg) {
    DatasetBundle data = load_dataset(cfg, cfg.seed, !cfg.hyper.uniform_baseline);
    fs::create_directories(cfg.out_dir);

    FitResult result = fit(data.graph, data.features, cfg.hyper, cfg.seed);

    Checkpoint ckpt;
    ckpt.params = std::move(result.params);
    ckpt.seed = cfg.seed;
    ckpt.id_digest = data.id_digest;
    std::string ckpt_path = (fs::path(cfg.out_dir) / "checkpoint.ckpt").string();
    save_checkpoint(ckpt_path, ckpt);
    write_file((fs::path(cfg.out_dir) / "report.jsonl").string(),
               train_report_jsonl(result.report));
    write_file((fs::path(cfg.out_dir) / "id_map.json").string(), id_mapping_json(data.raw));

    std::printf("train: %zu epochs, best epoch %zu, best validation recall@10 %.6f -> %s\n",
                result.report.stopped_epoch, result.report.best_epoch,
                result.report.best_val_recall, ckpt_path.c_str());
    return 0;
}

int cmd_eval(const RunConfig& cfg) {
    if (cfg.checkpoint.empty()) throw ValidationError("eval: --checkpoint is required");
    Checkpoint ckpt = load_checkpoint(cfg.checkpoint);
    DatasetBundle data = load_dataset(cfg, ckpt.seed, !ckpt.params.hyper.uniform_baseline);
    check_digest(ckpt, data);
    FeatureSet features = features_for_model(ckpt, data);

    TrainCsr csr = build_train_csr(data.graph);
    Representations repr = compute_representations(csr, features, ckpt.params);
    RankingResult metrics = evaluate_split(repr, data.graph, cfg.split, cfg.hyper.top_k);

    std::string json = metrics_json(metrics);
    std::fputs(json.c_str(), stdout);
    fs::create_directories(cfg.out_dir);
    std::string name = cfg.split == Partition::validation ? "metrics_validation.json"
                                                          : "metrics_test.json";
    write_file((fs::path(cfg.out_dir) / name).string(), json);
    return 0;
}

int cmd_inspect_edges(const RunConfig& cfg) {
    if (cfg.checkpoint.empty()) throw ValidationError("inspect-edges: --checkpoint is required");
    Checkpoint ckpt = load_checkpoint(cfg.checkpoint);
    if (ckpt.params.hyper.uniform_baseline) {
        throw ValidationError("inspect-edges: the uniform baseline has no refined weights");
    }
    DatasetBundle data = load_dataset(cfg, ckpt.seed, true);
    check_digest(ckpt, data);
    FeatureSet features = features_for_model(ckpt, data);

    TrainCsr csr = build_train_csr(data.graph);
    Tape tape;
    BoundModel bound = bind_params(tape, ckpt.params);
    ForwardResult fwd = run_forward(tape, csr, features, bound, ckpt.params);
    EdgeWeightSet weights = extract_edge_weights(tape, fwd);

    std::ostringstream out;
    out << "user\titem\ts_user_from_item\ts_item_from_user";
    for (Modality m : ckpt.params.modalities) {
        out << "\tsbar_user_" << modality_name(m) << "\tsbar_item_" << modality_name(m);
    }
    out << "\n";
    char buf[64];
    for (std::size_t e = 0; e < csr.num_edges; ++e) {
        std::uint32_t item_pos = csr.user_to_item_order[e];
        out << csr.edge_user[e] << '\t' << csr.edge_item[e];
        std::snprintf(buf, sizeof buf, "\t%.17g\t%.17g", weights.user_from_item[e],
                      weights.item_from_user[item_pos]);
        out << buf;
        for (std::size_t m = 0; m < weights.sbar_user.size(); ++m) {
            std::snprintf(buf, sizeof buf, "\t%.17g\t%.17g", weights.sbar_user[m][e],
                          weights.sbar_item[m][item_pos]);
            out << buf;
        }
        out << "\n";
    }

    if (!cfg.labels.empty()) {
        LabeledEdges labeled = resolve_labels(load_labels_tsv(cfg.labels), data.raw);
        std::map<std::pair<std::uint32_t, std::uint32_t>, EdgeLabel> by_edge;
        for (std::size_t r = 0; r < labeled.edges.size(); ++r) {
            const Edge& edge = labeled.edges[r];
            if (!data.graph.has_edge(edge.user, edge.item)) {
                throw ValidationError("labels row " + std::to_string(r + 1) +
                                      " references unknown edge (" + std::to_string(edge.user) +
                                      "," + std::to_string(edge.item) + ")");
            }
            by_edge[{edge.user, edge.item}] = labeled.labels[r];
        }
        // AUC over the labeled train edges, fused user-side weight as score.
        std::vector<double> scores;
        std::vector<bool> is_true;
        for (std::size_t e = 0; e < csr.num_edges; ++e) {
            auto it = by_edge.find({csr.edge_user[e], csr.edge_item[e]});
            if (it == by_edge.end()) continue;
            scores.push_back(weights.user_from_item[e]);
            is_true.push_back(it->second == EdgeLabel::true_positive);
        }
        double auc = edge_weight_auc(scores, is_true);
        std::snprintf(buf, sizeof buf, "# edge_weight_auc\t%.17g\n", auc);
        out << buf;
        std::printf("edge_weight_auc %.6f over %zu labeled train edges\n", auc, scores.size());
    }

    fs::create_directories(cfg.out_dir);
    std::string path = (fs::path(cfg.out_dir) / "edge_weights.tsv").string();
    write_file(path, out.str());
    std::printf("inspect-edges: %zu train edges -> %s\n", csr.num_edges, path.c_str());
    return 0;
}

int cmd_export_embeddings(const RunConfig& cfg) {
    if (cfg.checkpoint.empty()) {
        throw ValidationError("export-embeddings: --checkpoint is required");
    }
    Checkpoint ckpt = load_checkpoint(cfg.checkpoint);
    DatasetBundle data = load_dataset(cfg, ckpt.seed, !ckpt.params.hyper.uniform_baseline);
    check_digest(ckpt, data);
    FeatureSet features = features_for_model(ckpt, data);

    TrainCsr csr = build_train_csr(data.graph);
    Representations repr = compute_representations(csr, features, ckpt.params);
    fs::create_directories(cfg.out_dir);
    save_matrix_file((fs::path(cfg.out_dir) / "user_repr.txt").string(), repr.users);
    save_matrix_file((fs::path(cfg.out_dir) / "item_repr.txt").string(), repr.items);
    write_file((fs::path(cfg.out_dir) / "id_map.json").string(), id_mapping_json(data.raw));
    std::printf("export-embeddings: %zux%zu users, %zux%zu items -> %s\n", repr.users.rows(),
                repr.users.cols(), repr.items.rows(), repr.items.cols(), cfg.out_dir.c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"graph-refined convolutional recommender"};
    app.require_subcommand(1);

    std::string config_path, spec_path, out_dir = ".", variant, modalities, split = "test";
    std::string checkpoint_path, labels_path;
    std::uint64_t seed = 1;
    std::size_t k = 10;

    auto add_common = [&](CLI::App* cmd, bool with_model_flags) {
        cmd->add_option("--config", config_path, "run configuration JSON");
        cmd->add_option("--seed", seed, "master seed");
        cmd->add_option("--out", out_dir, "output directory");
        if (with_model_flags) {
            cmd->add_option("--k", k, "ranking cutoff (default 10)");
            cmd->add_option("--split", split, "evaluation split")
                ->check(CLI::IsMember({"validation", "test"}));
            cmd->add_option("--variant", variant, "model variant")
                ->check(CLI::IsMember({"full", "id-only", "hard", "max", "mean"}));
            cmd->add_option("--modalities", modalities,
                            "comma-separated modality subset (e.g. visual,acoustic)");
        }
    };

    CLI::App* synth = app.add_subcommand("synth", "generate a synthetic dataset");
    synth->add_option("--spec", spec_path, "synthesis spec JSON")->required();
    synth->add_option("--seed", seed, "override the synthesis seed");
    synth->add_option("--out", out_dir, "output directory");

    CLI::App* train = app.add_subcommand("train", "train a model");
    add_common(train, true);

    CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint");
    add_common(eval, true);
    eval->add_option("--checkpoint", checkpoint_path, "checkpoint path");

    CLI::App* inspect = app.add_subcommand("inspect-edges", "dump refined edge weights");
    add_common(inspect, true);
    inspect->add_option("--checkpoint", checkpoint_path, "checkpoint path");
    inspect->add_option("--labels", labels_path, "edge labels TSV for AUC");

    CLI::App* exporter = app.add_subcommand("export-embeddings",
                                            "write representation matrices for plotting");
    add_common(exporter, true);
    exporter->add_option("--checkpoint", checkpoint_path, "checkpoint path");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (synth->parsed()) return cmd_synth(spec_path, out_dir, synth, seed);

        CLI::App* active = train->parsed() ? train
                           : eval->parsed() ? eval
                           : inspect->parsed() ? inspect
                                               : exporter;
        RunConfig cfg = assemble_config(config_path, active, seed, variant, modalities,
                                        out_dir, k, split);
        auto* ckpt_opt = active->get_option_no_throw("--checkpoint");
        if (ckpt_opt && ckpt_opt->count()) cfg.checkpoint = checkpoint_path;
        if (inspect->parsed() && inspect->count("--labels")) cfg.labels = labels_path;

        if (train->parsed()) return cmd_train(cfg);
        if (eval->parsed()) return cmd_eval(cfg);
        if (inspect->parsed()) return cmd_inspect_edges(cfg);
        return cmd_export_embeddings(cfg);
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return exit_code_for(e);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
}
