#include "grcn/gcn.hpp"

#include <cmath>

#include "grcn/errors.hpp"

namespace grcn {

void Hyperparams::validate() const {
    if (embed_dim == 0 || proj_dim == 0 || conv_layers == 0 || routing_iters == 0 ||
        top_k == 0) {
        throw ValidationError(
            "embed_dim, proj_dim, conv_layers, routing_iters, and top_k must be positive");
    }
    if (reg_lambda < 0.0) throw ValidationError("reg_lambda must be nonnegative");
    if (!(leaky_slope > 0.0 && leaky_slope < 1.0)) {
        throw ValidationError("leaky_slope must lie in (0,1)");
    }
    if (learning_rate < 0.0) throw ValidationError("learning_rate must be nonnegative");
    if (batch_size == 0) throw ValidationError("batch_size must be positive");
}

ModelParams ModelParams::init(std::size_t num_users, std::size_t num_items,
                              const FeatureSet& features, const Hyperparams& hyper,
                              std::uint64_t seed) {
    hyper.validate();
    ModelParams p;
    p.num_users = num_users;
    p.num_items = num_items;
    p.hyper = hyper;
    Rng re = Rng::derive(seed, "init:id_embeddings");
    double limit = std::sqrt(6.0 / static_cast<double>(num_users + num_items + hyper.embed_dim));
    p.id_embeddings = Tensor({num_users + num_items, hyper.embed_dim});
    for (std::size_t i = 0; i < p.id_embeddings.numel(); ++i) {
        p.id_embeddings[i] = re.uniform(-limit, limit);
    }
    if (!hyper.uniform_baseline) {
        features.validate(num_items);
        p.modalities = features.modalities();
        p.refine = RefineParams::init(features, num_users, hyper.proj_dim, seed);
    }
    return p;
}

std::vector<std::pair<std::string, Tensor*>> ModelParams::trainable() {
    std::vector<std::pair<std::string, Tensor*>> out;
    out.emplace_back("id_embeddings", &id_embeddings);
    for (auto& mp : refine.modal) {
        std::string prefix = modality_name(mp.modality);
        out.emplace_back(prefix + ".proj_weight", &mp.proj_weight);
        out.emplace_back(prefix + ".proj_bias", &mp.proj_bias);
        out.emplace_back(prefix + ".routing_seed", &mp.routing_seed);
        out.emplace_back(prefix + ".user_rho", &mp.user_rho);
        out.emplace_back(prefix + ".item_rho", &mp.item_rho);
    }
    return out;
}

std::vector<std::pair<std::string, const Tensor*>> ModelParams::trainable() const {
    std::vector<std::pair<std::string, const Tensor*>> out;
    for (auto& [name, t] : const_cast<ModelParams*>(this)->trainable()) {
        out.emplace_back(name, t);
    }
    return out;
}

std::vector<std::pair<Var, Var>> propagate(Tape& tape, const TrainCsr& csr, Var w_user,
                                           Var w_item, Var e0_users, Var e0_items,
                                           std::size_t layers) {
    if (layers == 0) throw ValidationError("propagate: need at least one layer");
    if (csr.num_edges == 0) throw ValidationError("propagate: no train edges");
    auto check_cover = [&](Var w, std::size_t expected, const std::vector<std::uint32_t>& us,
                           const std::vector<std::uint32_t>& is, const char* dir) {
        std::size_t have = tape.value(w).numel();
        if (have != expected) {
            std::size_t missing = have < expected ? have : expected;
            std::string edge = missing < csr.num_edges
                                   ? "(" + std::to_string(us[missing]) + "," +
                                         std::to_string(is[missing]) + ")"
                                   : "(past end)";
            throw ValidationError(std::string("propagate: ") + dir + " weights cover " +
                                  std::to_string(have) + " of " + std::to_string(expected) +
                                  " train edges; first uncovered edge " + edge);
        }
    };
    check_cover(w_user, csr.num_edges, csr.edge_user, csr.edge_item, "user-side");
    check_cover(w_item, csr.num_edges, csr.edge_user_i, csr.edge_item_i, "item-side");

    std::vector<std::pair<Var, Var>> out;
    out.emplace_back(e0_users, e0_items);
    for (std::size_t l = 1; l <= layers; ++l) {
        Var prev_u = out.back().first;
        Var prev_i = out.back().second;
        Var next_u = tape.segment_weighted_rows(prev_i, w_user, csr.edge_item, csr.user_offsets);
        Var next_i = tape.segment_weighted_rows(prev_u, w_item, csr.edge_user_i,
                                                csr.item_offsets);
        out.emplace_back(next_u, next_i);
    }
    return out;
}

Var combine_layers(Tape& tape, const std::vector<Var>& layers) {
    if (layers.empty()) throw DomainError("combine_layers: no layers");
    if (layers.size() == 1) return layers[0];
    return tape.add_n(layers);
}

Var assemble_representation(Tape& tape, Var combined, const std::vector<Var>& content_parts,
                            const std::vector<Modality>& content_order,
                            const std::vector<Modality>& expected_order, bool id_only) {
    if (id_only) return combined;
    if (content_order != expected_order) {
        std::string got, want;
        for (Modality m : content_order) got += std::string(" ") + modality_name(m);
        for (Modality m : expected_order) want += std::string(" ") + modality_name(m);
        throw ValidationError("assemble_representation: modality order mismatch, got" + got +
                              ", expected" + want);
    }
    if (content_parts.size() != content_order.size()) {
        throw ValidationError("assemble_representation: content part count does not match order");
    }
    std::vector<Var> parts{combined};
    parts.insert(parts.end(), content_parts.begin(), content_parts.end());
    return tape.concat_cols(parts);
}

Var score(Tape& tape, Var user_repr, Var item_repr) { return tape.dot(user_repr, item_repr); }

double score_rows(const Tensor& user_repr, std::size_t u, const Tensor& item_repr,
                  std::size_t i) {
    if (user_repr.cols() != item_repr.cols()) {
        throw ShapeError("score: representation widths differ, " + user_repr.shape_str() +
                         " vs " + item_repr.shape_str());
    }
    std::size_t d = user_repr.cols();
    const double* a = user_repr.data() + u * d;
    const double* b = item_repr.data() + i * d;
    double acc = 0.0;
    for (std::size_t j = 0; j < d; ++j) acc += a[j] * b[j];
    return acc;
}

std::pair<Tensor, Tensor> uniform_edge_weights(const TrainCsr& csr) {
    Tensor wu({csr.num_edges == 0 ? 1 : csr.num_edges});
    Tensor wi({csr.num_edges == 0 ? 1 : csr.num_edges});
    for (std::size_t u = 0; u < csr.num_users; ++u) {
        std::size_t deg = csr.user_degree(static_cast<std::uint32_t>(u));
        for (std::size_t e = csr.user_offsets[u]; e < csr.user_offsets[u + 1]; ++e) {
            wu[e] = 1.0 / static_cast<double>(deg);
        }
    }
    for (std::size_t i = 0; i < csr.num_items; ++i) {
        std::size_t deg = csr.item_degree(static_cast<std::uint32_t>(i));
        for (std::size_t e = csr.item_offsets[i]; e < csr.item_offsets[i + 1]; ++e) {
            wi[e] = 1.0 / static_cast<double>(deg);
        }
    }
    return {std::move(wu), std::move(wi)};
}

}  // namespace grcn
