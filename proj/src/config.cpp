#include "grcn/config.hpp"

#include "grcn/errors.hpp"

namespace grcn {

nlohmann::ordered_json hyper_to_json(const Hyperparams& h) {
    nlohmann::ordered_json j;
    j["embed_dim"] = h.embed_dim;
    j["proj_dim"] = h.proj_dim;
    j["conv_layers"] = h.conv_layers;
    j["routing_iters"] = h.routing_iters;
    j["leaky_slope"] = h.leaky_slope;
    j["learning_rate"] = h.learning_rate;
    j["reg_lambda"] = h.reg_lambda;
    j["top_k"] = h.top_k;
    j["fusion"] = fusion_mode_name(h.fusion);
    j["id_only"] = h.id_only;
    j["uniform_baseline"] = h.uniform_baseline;
    j["reg_squared"] = h.reg_squared;
    j["batch_size"] = h.batch_size;
    j["max_epochs"] = h.max_epochs;
    j["patience"] = h.patience;
    return j;
}

Hyperparams hyper_from_json(const nlohmann::json& j) {
    Hyperparams h;
    try {
        if (j.contains("embed_dim")) h.embed_dim = j.at("embed_dim").get<std::size_t>();
        if (j.contains("proj_dim")) h.proj_dim = j.at("proj_dim").get<std::size_t>();
        if (j.contains("conv_layers")) h.conv_layers = j.at("conv_layers").get<std::size_t>();
        if (j.contains("routing_iters")) {
            h.routing_iters = j.at("routing_iters").get<std::size_t>();
        }
        if (j.contains("leaky_slope")) h.leaky_slope = j.at("leaky_slope").get<double>();
        if (j.contains("learning_rate")) h.learning_rate = j.at("learning_rate").get<double>();
        if (j.contains("reg_lambda")) h.reg_lambda = j.at("reg_lambda").get<double>();
        if (j.contains("top_k")) h.top_k = j.at("top_k").get<std::size_t>();
        if (j.contains("fusion")) {
            h.fusion = fusion_mode_from_name(j.at("fusion").get<std::string>());
        }
        if (j.contains("id_only")) h.id_only = j.at("id_only").get<bool>();
        if (j.contains("uniform_baseline")) {
            h.uniform_baseline = j.at("uniform_baseline").get<bool>();
        }
        if (j.contains("reg_squared")) h.reg_squared = j.at("reg_squared").get<bool>();
        if (j.contains("batch_size")) h.batch_size = j.at("batch_size").get<std::size_t>();
        if (j.contains("max_epochs")) h.max_epochs = j.at("max_epochs").get<std::size_t>();
        if (j.contains("patience")) h.patience = j.at("patience").get<std::size_t>();
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("hyperparameters: mistyped field: ") + e.what());
    }
    h.validate();
    return h;
}

RunConfig run_config_from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("run config: invalid JSON: ") + e.what());
    }
    RunConfig cfg;
    try {
        if (j.contains("interactions")) cfg.interactions = j.at("interactions").get<std::string>();
        if (j.contains("features")) {
            for (auto& [name, path] : j.at("features").items()) {
                cfg.feature_paths[modality_from_name(name)] = path.get<std::string>();
            }
        }
        if (j.contains("labels")) cfg.labels = j.at("labels").get<std::string>();
        if (j.contains("checkpoint")) cfg.checkpoint = j.at("checkpoint").get<std::string>();
        if (j.contains("out")) cfg.out_dir = j.at("out").get<std::string>();
        if (j.contains("seed")) cfg.seed = j.at("seed").get<std::uint64_t>();
        if (j.contains("split")) {
            std::string s = j.at("split").get<std::string>();
            if (s == "validation") {
                cfg.split = Partition::validation;
            } else if (s == "test") {
                cfg.split = Partition::test;
            } else {
                throw ValidationError("run config: split must be validation or test");
            }
        }
        if (j.contains("hyper")) cfg.hyper = hyper_from_json(j.at("hyper"));
        if (j.contains("variant")) apply_variant(cfg.hyper, j.at("variant").get<std::string>());
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("run config: mistyped field: ") + e.what());
    }
    return cfg;
}

std::string run_config_to_json(const RunConfig& cfg) {
    nlohmann::ordered_json j;
    j["interactions"] = cfg.interactions;
    nlohmann::ordered_json feats = nlohmann::ordered_json::object();
    for (const auto& [m, path] : cfg.feature_paths) feats[modality_name(m)] = path;
    j["features"] = feats;
    if (!cfg.labels.empty()) j["labels"] = cfg.labels;
    if (!cfg.checkpoint.empty()) j["checkpoint"] = cfg.checkpoint;
    j["out"] = cfg.out_dir;
    j["seed"] = cfg.seed;
    j["split"] = cfg.split == Partition::validation ? "validation" : "test";
    j["variant"] = variant_name(cfg.hyper);
    j["hyper"] = hyper_to_json(cfg.hyper);
    return j.dump(2) + "\n";
}

void apply_variant(Hyperparams& hyper, const std::string& variant) {
    hyper.id_only = false;
    hyper.uniform_baseline = false;
    if (variant == "full") {
        hyper.fusion = FusionMode::base_max;
    } else if (variant == "id-only") {
        hyper.fusion = FusionMode::base_max;
        hyper.id_only = true;
    } else if (variant == "hard") {
        hyper.fusion = FusionMode::hard;
    } else if (variant == "max") {
        hyper.fusion = FusionMode::max;
    } else if (variant == "mean") {
        hyper.fusion = FusionMode::mean;
    } else if (variant == "uniform-gcn") {
        hyper.uniform_baseline = true;
    } else {
        throw ValidationError("unknown variant: " + variant +
                              " (expected full, id-only, hard, max, mean, or uniform-gcn)");
    }
}

std::string variant_name(const Hyperparams& hyper) {
    if (hyper.uniform_baseline) return "uniform-gcn";
    if (hyper.id_only) return "id-only";
    switch (hyper.fusion) {
        case FusionMode::base_max: return "full";
        case FusionMode::hard: return "hard";
        case FusionMode::max: return "max";
        case FusionMode::mean: return "mean";
    }
    return "full";
}

}  // namespace grcn
