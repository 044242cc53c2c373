#include "grcn/model.hpp"

#include "grcn/errors.hpp"

namespace grcn {

BoundModel bind_params(Tape& tape, const ModelParams& params) {
    BoundModel b;
    b.id_embeddings = tape.leaf(params.id_embeddings, true);
    b.named.emplace_back("id_embeddings", b.id_embeddings);
    for (const auto& mp : params.refine.modal) {
        BoundModalityParams bm;
        bm.proj_weight = tape.leaf(mp.proj_weight, true);
        bm.proj_bias = tape.leaf(mp.proj_bias, true);
        bm.routing_seed = tape.leaf(mp.routing_seed, true);
        bm.user_rho = tape.leaf(mp.user_rho, true);
        bm.item_rho = tape.leaf(mp.item_rho, true);
        std::string prefix = modality_name(mp.modality);
        b.named.emplace_back(prefix + ".proj_weight", bm.proj_weight);
        b.named.emplace_back(prefix + ".proj_bias", bm.proj_bias);
        b.named.emplace_back(prefix + ".routing_seed", bm.routing_seed);
        b.named.emplace_back(prefix + ".user_rho", bm.user_rho);
        b.named.emplace_back(prefix + ".item_rho", bm.item_rho);
        b.modal.push_back(bm);
    }
    return b;
}

ForwardResult run_forward(Tape& tape, const TrainCsr& csr, const FeatureSet& features,
                          const BoundModel& bound, const ModelParams& params) {
    const Hyperparams& h = params.hyper;
    ForwardResult fwd;

    if (params.modalities.size() != bound.modal.size()) {
        throw ValidationError("run_forward: bound modality count does not match model");
    }
    if (!h.uniform_baseline && features.modalities() != params.modalities) {
        throw ValidationError("run_forward: feature modalities do not match the model");
    }

    if (h.uniform_baseline) {
        auto [wu, wi] = uniform_edge_weights(csr);
        fwd.w_user = tape.constant(std::move(wu));
        fwd.w_item = tape.constant(std::move(wi));
    } else {
        std::vector<AffinityScores> scores;
        for (std::size_t m = 0; m < bound.modal.size(); ++m) {
            Var feats = tape.constant(features.tables[m].features);
            Var projected = project_items(tape, feats, bound.modal[m], h.leaky_slope);
            Var routed = route_all_users(tape, projected, bound.modal[m].routing_seed, csr,
                                         h.routing_iters);
            scores.push_back(affinity_scores(tape, routed, projected, csr));
            fwd.projected_items.push_back(projected);
            fwd.routed_users.push_back(routed);
            fwd.sbar_user.push_back(scores.back().user_from_item);
            fwd.sbar_item.push_back(scores.back().item_from_user);
        }
        FusedWeights w = fuse_scores(tape, scores, bound.modal, csr, h.fusion);
        fwd.w_user = w.user_from_item;
        fwd.w_item = w.item_from_user;
    }

    Var e0_users = tape.slice_rows(bound.id_embeddings, 0, csr.num_users);
    Var e0_items = tape.slice_rows(bound.id_embeddings, csr.num_users, csr.num_items);
    auto layers = propagate(tape, csr, fwd.w_user, fwd.w_item, e0_users, e0_items,
                            h.conv_layers);
    std::vector<Var> user_layers, item_layers;
    for (auto& [lu, li] : layers) {
        user_layers.push_back(lu);
        item_layers.push_back(li);
    }
    Var combined_u = combine_layers(tape, user_layers);
    Var combined_i = combine_layers(tape, item_layers);

    bool id_only = h.id_only || h.uniform_baseline;
    fwd.user_repr = assemble_representation(tape, combined_u, fwd.routed_users,
                                            params.modalities, params.modalities, id_only);
    fwd.item_repr = assemble_representation(tape, combined_i, fwd.projected_items,
                                            params.modalities, params.modalities, id_only);
    return fwd;
}

EdgeWeightSet extract_edge_weights(const Tape& tape, const ForwardResult& fwd) {
    EdgeWeightSet w;
    w.user_from_item = tape.value(fwd.w_user).values();
    w.item_from_user = tape.value(fwd.w_item).values();
    for (Var v : fwd.sbar_user) w.sbar_user.push_back(tape.value(v).values());
    for (Var v : fwd.sbar_item) w.sbar_item.push_back(tape.value(v).values());
    return w;
}

Representations compute_representations(const TrainCsr& csr, const FeatureSet& features,
                                        const ModelParams& params) {
    Tape tape;
    BoundModel bound = bind_params(tape, params);
    ForwardResult fwd = run_forward(tape, csr, features, bound, params);
    return {tape.value(fwd.user_repr), tape.value(fwd.item_repr)};
}

}  // namespace grcn
