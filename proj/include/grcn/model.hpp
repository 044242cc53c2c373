#pragma once

#include <utility>
#include <vector>

#include "grcn/gcn.hpp"

namespace grcn {

// Tape handles of every trainable tensor for one forward pass, in the same
// order as ModelParams::trainable().
struct BoundModel {
    Var id_embeddings;
    std::vector<BoundModalityParams> modal;
    std::vector<std::pair<std::string, Var>> named;
};

BoundModel bind_params(Tape& tape, const ModelParams& params);

// Everything one forward pass produces that later stages consume.
struct ForwardResult {
    Var user_repr;  // num_users x repr width
    Var item_repr;  // num_items x repr width
    Var w_user;     // fused weights, user order
    Var w_item;     // fused weights, item order
    std::vector<Var> sbar_user;       // per modality, user order
    std::vector<Var> sbar_item;       // per modality, item order
    std::vector<Var> routed_users;    // per modality, num_users x proj_dim
    std::vector<Var> projected_items; // per modality, num_items x proj_dim
};

// Full forward pass: refine (unless the uniform baseline), propagate,
// combine, assemble. Scoring happens on top of the returned representations.
ForwardResult run_forward(Tape& tape, const TrainCsr& csr, const FeatureSet& features,
                          const BoundModel& bound, const ModelParams& params);

// Fused weights and per-modality scores as plain values.
EdgeWeightSet extract_edge_weights(const Tape& tape, const ForwardResult& fwd);

// Representations evaluated with the current parameter values (fresh tape).
struct Representations {
    Tensor users;
    Tensor items;
};

Representations compute_representations(const TrainCsr& csr, const FeatureSet& features,
                                        const ModelParams& params);

}  // namespace grcn
