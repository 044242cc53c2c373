#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "grcn/refine.hpp"

namespace grcn {

struct Hyperparams {
    std::size_t embed_dim = 64;     // ID embedding width
    std::size_t proj_dim = 64;      // projected content width
    std::size_t conv_layers = 2;    // stacked convolution depth
    std::size_t routing_iters = 3;  // preference routing iterations
    double leaky_slope = 0.01;
    double learning_rate = 1e-3;
    double reg_lambda = 1e-4;
    std::size_t top_k = 10;
    FusionMode fusion = FusionMode::base_max;
    bool id_only = false;           // predict from ID embeddings alone
    bool uniform_baseline = false;  // no refining; all weights 1/|N(.)|
    bool reg_squared = false;       // switch the regularizer to ||theta||^2
    std::size_t batch_size = 1024;
    std::size_t max_epochs = 200;
    std::size_t patience = 20;

    void validate() const;
};

// All trainable state plus the configuration it was built under.
struct ModelParams {
    std::size_t num_users = 0;
    std::size_t num_items = 0;
    std::vector<Modality> modalities;
    Tensor id_embeddings;  // (num_users + num_items) x embed_dim, users first
    RefineParams refine;
    Hyperparams hyper;

    static ModelParams init(std::size_t num_users, std::size_t num_items,
                            const FeatureSet& features, const Hyperparams& hyper,
                            std::uint64_t seed);

    // Stable (name, tensor) view of every trainable tensor; the order is the
    // checkpoint and optimizer slot order.
    std::vector<std::pair<std::string, Tensor*>> trainable();
    std::vector<std::pair<std::string, const Tensor*>> trainable() const;
};

// Weighted message passing over train edges (no self loops, no transform or
// nonlinearity between layers). Returns embeddings per layer 0..layers, each
// entry holding the user block and the item block.
std::vector<std::pair<Var, Var>> propagate(Tape& tape, const TrainCsr& csr, Var w_user,
                                           Var w_item, Var e0_users, Var e0_items,
                                           std::size_t layers);

// Elementwise sum across layers for one side of the bipartite graph.
Var combine_layers(Tape& tape, const std::vector<Var>& layers);

// Concatenates the combined ID embedding with the per-modality content
// vectors (same modality order on both sides); id_only keeps the embedding.
Var assemble_representation(Tape& tape, Var combined, const std::vector<Var>& content_parts,
                            const std::vector<Modality>& content_order,
                            const std::vector<Modality>& expected_order, bool id_only);

// Inner-product preference score.
Var score(Tape& tape, Var user_repr, Var item_repr);
double score_rows(const Tensor& user_repr, std::size_t u, const Tensor& item_repr,
                  std::size_t i);

// Per-edge 1/|N(.)| weights for the unweighted-GCN ablation baseline.
std::pair<Tensor, Tensor> uniform_edge_weights(const TrainCsr& csr);

}  // namespace grcn
