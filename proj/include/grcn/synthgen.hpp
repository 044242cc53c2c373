#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "grcn/features.hpp"
#include "grcn/graph.hpp"

namespace grcn {

struct ModalitySpec {
    Modality modality = Modality::visual;
    std::size_t dim = 16;
};

// Knobs of the planted-cluster generator: items carry cluster centroids in
// feature space, users prefer one cluster, and a noise_fraction of each
// user's interactions are accidental out-of-cluster views. taste_sharpness
// concentrates each user's true interactions on in-cluster items aligned
// with a private taste direction (0 keeps the draw uniform).
struct SynthSpec {
    std::size_t num_users = 60;
    std::size_t num_items = 120;
    std::size_t num_clusters = 4;
    std::vector<ModalitySpec> modalities{{Modality::visual, 16}, {Modality::acoustic, 16}};
    std::size_t interactions_per_user = 20;
    double noise_fraction = 0.3;
    double cluster_separation = 1.0;
    double feature_noise_scale = 1.0;
    double taste_sharpness = 0.0;
    std::uint64_t seed = 1;

    void validate() const;
    std::string to_json() const;
    static SynthSpec from_json(const std::string& text);
};

enum class EdgeLabel : std::uint8_t { true_positive = 0, false_positive = 1 };

struct SynthDataset {
    InteractionGraph graph;  // unsplit
    FeatureSet features;
    std::vector<EdgeLabel> edge_labels;  // aligned with graph.edges()
    std::vector<std::uint32_t> user_cluster;
    std::vector<std::uint32_t> item_cluster;
};

// Deterministic under spec.seed. Per user: ceil((1-noise)*k) true edges from
// the user's cluster, floor(noise*k) false edges uniform over other clusters.
SynthDataset generate(const SynthSpec& spec);

// Rank-sum AUC of `scores` against binary labels with true_positive as the
// positive class; tied scores contribute half.
double edge_weight_auc(const std::vector<double>& scores, const std::vector<bool>& is_true);

// Labels TSV: `user<TAB>item<TAB>true_positive|false_positive` per edge, in
// the same raw id space as the interactions TSV.
void save_labels_tsv(const std::string& path, const SynthDataset& data);

struct RawLabels {
    std::vector<std::pair<std::string, std::string>> ids;  // (user, item)
    std::vector<EdgeLabel> labels;
};
RawLabels load_labels_tsv(const std::string& path);

struct LabeledEdges {
    std::vector<Edge> edges;  // dense indices
    std::vector<EdgeLabel> labels;
};

// Maps raw label ids through the dataset's id remapping; rejects labels that
// reference ids or edges the dataset does not contain.
LabeledEdges resolve_labels(const RawLabels& raw, const InteractionData& data);

}  // namespace grcn
