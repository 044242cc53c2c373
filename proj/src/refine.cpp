#include "grcn/refine.hpp"

#include <cmath>

#include "grcn/errors.hpp"

namespace grcn {

const char* fusion_mode_name(FusionMode m) {
    switch (m) {
        case FusionMode::base_max: return "base_max";
        case FusionMode::max: return "max";
        case FusionMode::mean: return "mean";
        case FusionMode::hard: return "hard";
    }
    return "?";
}

FusionMode fusion_mode_from_name(const std::string& name) {
    if (name == "base_max") return FusionMode::base_max;
    if (name == "max") return FusionMode::max;
    if (name == "mean") return FusionMode::mean;
    if (name == "hard") return FusionMode::hard;
    throw ValidationError("unknown fusion mode: " + name);
}

namespace {

Tensor xavier_uniform(std::size_t rows, std::size_t cols, Rng& rng) {
    double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
    Tensor t({rows, cols});
    for (std::size_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(-limit, limit);
    return t;
}

}  // namespace

RefineParams RefineParams::init(const FeatureSet& features, std::size_t num_users,
                                std::size_t proj_dim, std::uint64_t seed) {
    RefineParams p;
    for (const auto& table : features.tables) {
        ModalityParams mp;
        mp.modality = table.modality;
        const char* name = modality_name(table.modality);
        Rng rw = Rng::derive(seed, std::string("init:proj_weight:") + name);
        mp.proj_weight = xavier_uniform(proj_dim, table.dim, rw);
        mp.proj_bias = Tensor({proj_dim});
        Rng rs = Rng::derive(seed, std::string("init:routing_seed:") + name);
        mp.routing_seed = xavier_uniform(num_users, proj_dim, rs);
        mp.user_rho = Tensor::full({num_users}, 1.0);
        mp.item_rho = Tensor::full({table.num_items}, 1.0);
        p.modal.push_back(std::move(mp));
    }
    return p;
}

Var project_items(Tape& tape, Var features, const BoundModalityParams& params, double slope) {
    return tape.leaky_relu(tape.linear(features, params.proj_weight, params.proj_bias), slope);
}

Var route_preference(Tape& tape, Var projected, Var seed_vector,
                     const std::vector<std::uint32_t>& neighbors, std::size_t iterations) {
    if (neighbors.empty()) {
        throw DomainError("route_preference: empty train neighborhood");
    }
    if (iterations == 0) return tape.l2_normalize(seed_vector);
    Var sub = tape.gather_rows(projected, neighbors);
    Var current = seed_vector;
    for (std::size_t t = 0; t < iterations; ++t) {
        Var logits = tape.matvec(sub, current);
        Var p = tape.softmax(logits);
        Var mass = tape.vecmat(p, sub);
        current = tape.l2_normalize(tape.add(current, mass));
    }
    return current;
}

Var route_all_users(Tape& tape, Var projected, Var routing_seeds, const TrainCsr& csr,
                    std::size_t iterations) {
    Var current = routing_seeds;
    if (iterations == 0) return tape.rows_l2_normalize(current);
    for (std::size_t t = 0; t < iterations; ++t) {
        Var logits = tape.edge_dot(current, projected, csr.edge_user, csr.edge_item);
        Var p = tape.segment_softmax(logits, csr.user_offsets);
        Var mass = tape.segment_weighted_rows(projected, p, csr.edge_item, csr.user_offsets);
        current = tape.rows_l2_normalize(tape.add(current, mass));
    }
    return current;
}

AffinityScores affinity_scores(Tape& tape, Var routed_users, Var projected_items,
                               const TrainCsr& csr) {
    // The logit of edge (u,i) is the same inner product in both directions;
    // only the softmax neighborhood differs.
    Var logits = tape.edge_dot(routed_users, projected_items, csr.edge_user, csr.edge_item);
    AffinityScores s;
    s.user_from_item = tape.segment_softmax(logits, csr.user_offsets);
    Var logits_item_order = tape.gather(logits, csr.item_to_user_order);
    s.item_from_user = tape.segment_softmax(logits_item_order, csr.item_offsets);
    return s;
}

FusedWeights fuse_scores(Tape& tape, const std::vector<AffinityScores>& scores,
                         const std::vector<BoundModalityParams>& params, const TrainCsr& csr,
                         FusionMode mode) {
    if (scores.empty() || scores.size() != params.size()) {
        throw ValidationError("fuse_scores: no available modality");
    }
    std::vector<Var> user_terms, item_terms;
    for (std::size_t m = 0; m < scores.size(); ++m) {
        if (mode == FusionMode::base_max || mode == FusionMode::hard) {
            Var rho_u = tape.gather(params[m].user_rho, csr.edge_user);
            Var rho_i = tape.gather(params[m].item_rho, csr.edge_item_i);
            user_terms.push_back(tape.mul(rho_u, scores[m].user_from_item));
            item_terms.push_back(tape.mul(rho_i, scores[m].item_from_user));
        } else {
            user_terms.push_back(scores[m].user_from_item);
            item_terms.push_back(scores[m].item_from_user);
        }
    }
    FusedWeights w;
    if (mode == FusionMode::mean) {
        w.user_from_item = tape.emean(user_terms);
        w.item_from_user = tape.emean(item_terms);
    } else {
        w.user_from_item = tape.emax(user_terms);
        w.item_from_user = tape.emax(item_terms);
    }
    if (mode == FusionMode::hard) {
        // Hard pruning: zero every weight at or below its neighborhood mean.
        Var tau_u = tape.segment_mean_expand(w.user_from_item, csr.user_offsets);
        Var tau_i = tape.segment_mean_expand(w.item_from_user, csr.item_offsets);
        w.user_from_item = tape.relu(tape.sub(w.user_from_item, tau_u));
        w.item_from_user = tape.relu(tape.sub(w.item_from_user, tau_i));
    }
    return w;
}

}  // namespace grcn
