#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "grcn/features.hpp"
#include "grcn/graph.hpp"
#include "grcn/tape.hpp"

namespace grcn {

// How per-modality affinity scores are fused into one edge weight:
//   base_max  max over modalities of rho^m * sbar^m (the default),
//   max/mean  plain max or mean without base vectors,
//   hard      base_max followed by relu(s - neighborhood mean).
enum class FusionMode { base_max, max, mean, hard };

const char* fusion_mode_name(FusionMode m);
FusionMode fusion_mode_from_name(const std::string& name);

// Trainable state of the graph refining layer for one modality.
struct ModalityParams {
    Modality modality = Modality::visual;
    Tensor proj_weight;   // proj_dim x feat_dim
    Tensor proj_bias;     // proj_dim
    Tensor routing_seed;  // num_users x proj_dim
    Tensor user_rho;      // num_users
    Tensor item_rho;      // num_items
};

struct RefineParams {
    std::vector<ModalityParams> modal;

    // Projections and routing seeds are Xavier-uniform; base vectors start at
    // one so base_max fusion reduces to plain max before training.
    static RefineParams init(const FeatureSet& features, std::size_t num_users,
                             std::size_t proj_dim, std::uint64_t seed);
};

// Tape handles of one modality's parameters for a single forward pass.
struct BoundModalityParams {
    Var proj_weight;
    Var proj_bias;
    Var routing_seed;
    Var user_rho;
    Var item_rho;
};

// Fused per-edge pruning weights and the per-modality scores behind them,
// extracted as plain values for inspection and acceptance checks.
struct EdgeWeightSet {
    std::vector<double> user_from_item;               // user order
    std::vector<double> item_from_user;               // item order
    std::vector<std::vector<double>> sbar_user;       // [modality][edge], user order
    std::vector<std::vector<double>> sbar_item;       // [modality][edge], item order
};

// Eq.-style projection of raw item content into the shared metric space:
// rows of leaky_relu(features * W^T + b).
Var project_items(Tape& tape, Var features, const BoundModalityParams& params, double slope);

// Neighbor routing for a single user. `neighbors` indexes rows of
// `projected` (the user's train neighborhood) and must be nonempty.
Var route_preference(Tape& tape, Var projected, Var seed_vector,
                     const std::vector<std::uint32_t>& neighbors, std::size_t iterations);

// Routing for all users at once over the train CSR; one row per user.
// Users without train edges keep their normalized seed.
Var route_all_users(Tape& tape, Var projected, Var routing_seeds, const TrainCsr& csr,
                    std::size_t iterations);

struct AffinityScores {
    Var user_from_item;  // softmax over each user's train neighborhood, user order
    Var item_from_user;  // softmax over each item's train neighborhood, item order
};

// Bidirectional affinities for one modality. The edge logit is the inner
// product of the routed user preference and the projected item feature; the
// two directions differ only in the softmax neighborhood.
AffinityScores affinity_scores(Tape& tape, Var routed_users, Var projected_items,
                               const TrainCsr& csr);

struct FusedWeights {
    Var user_from_item;  // user order
    Var item_from_user;  // item order
};

FusedWeights fuse_scores(Tape& tape, const std::vector<AffinityScores>& scores,
                         const std::vector<BoundModalityParams>& params, const TrainCsr& csr,
                         FusionMode mode);

}  // namespace grcn
