#pragma once

#include <map>
#include <string>

#include "grcn/gcn.hpp"
#include "grcn/graph.hpp"

#include "json.hpp"

namespace grcn {

nlohmann::ordered_json hyper_to_json(const Hyperparams& h);
Hyperparams hyper_from_json(const nlohmann::json& j);

// One CLI run: paths plus hyperparameters plus seed. Flags override config
// file values, which override defaults.
struct RunConfig {
    std::string interactions;
    std::map<Modality, std::string> feature_paths;
    std::string labels;
    std::string checkpoint;
    std::string out_dir = ".";
    std::uint64_t seed = 1;
    Partition split = Partition::test;
    Hyperparams hyper;
};

RunConfig run_config_from_json(const std::string& text);
std::string run_config_to_json(const RunConfig& cfg);

// Named variants: full, id-only, hard, max, mean, uniform-gcn.
void apply_variant(Hyperparams& hyper, const std::string& variant);
std::string variant_name(const Hyperparams& hyper);

}  // namespace grcn
