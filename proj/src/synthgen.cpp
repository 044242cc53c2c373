#include "grcn/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <unordered_map>

#include "grcn/errors.hpp"

#include "json.hpp"

namespace grcn {

void SynthSpec::validate() const {
    if (num_users == 0 || num_items == 0 || num_clusters == 0) {
        throw ValidationError("synth spec: users, items, and clusters must be positive");
    }
    if (num_clusters > num_items) {
        throw ValidationError("synth spec: num_clusters must not exceed num_items");
    }
    if (!(noise_fraction >= 0.0 && noise_fraction < 1.0)) {
        throw ValidationError("synth spec: noise_fraction must lie in [0,1)");
    }
    if (interactions_per_user == 0) {
        throw ValidationError("synth spec: interactions_per_user must be positive");
    }
    if (modalities.empty()) throw ValidationError("synth spec: at least one modality");
    for (std::size_t i = 1; i < modalities.size(); ++i) {
        if (!(static_cast<int>(modalities[i - 1].modality) <
              static_cast<int>(modalities[i].modality))) {
            throw ValidationError("synth spec: modalities must be unique and ordered");
        }
    }
    if (cluster_separation <= 0.0 || feature_noise_scale < 0.0) {
        throw ValidationError("synth spec: invalid separation or noise scale");
    }
    if (taste_sharpness < 0.0) {
        throw ValidationError("synth spec: taste_sharpness must be nonnegative");
    }
}

std::string SynthSpec::to_json() const {
    nlohmann::ordered_json j;
    j["num_users"] = num_users;
    j["num_items"] = num_items;
    j["num_clusters"] = num_clusters;
    nlohmann::ordered_json mods = nlohmann::ordered_json::object();
    for (const auto& m : modalities) mods[modality_name(m.modality)] = m.dim;
    j["modalities"] = mods;
    j["interactions_per_user"] = interactions_per_user;
    j["noise_fraction"] = noise_fraction;
    j["cluster_separation"] = cluster_separation;
    j["feature_noise_scale"] = feature_noise_scale;
    j["taste_sharpness"] = taste_sharpness;
    j["seed"] = seed;
    return j.dump(2) + "\n";
}

SynthSpec SynthSpec::from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("synth spec: invalid JSON: ") + e.what());
    }
    SynthSpec s;
    try {
        s.num_users = j.at("num_users").get<std::size_t>();
        s.num_items = j.at("num_items").get<std::size_t>();
        s.num_clusters = j.at("num_clusters").get<std::size_t>();
        s.modalities.clear();
        for (auto& [name, dim] : j.at("modalities").items()) {
            s.modalities.push_back({modality_from_name(name), dim.get<std::size_t>()});
        }
        std::sort(s.modalities.begin(), s.modalities.end(),
                  [](const ModalitySpec& a, const ModalitySpec& b) {
                      return static_cast<int>(a.modality) < static_cast<int>(b.modality);
                  });
        s.interactions_per_user = j.at("interactions_per_user").get<std::size_t>();
        s.noise_fraction = j.at("noise_fraction").get<double>();
        if (j.contains("cluster_separation")) {
            s.cluster_separation = j.at("cluster_separation").get<double>();
        }
        if (j.contains("feature_noise_scale")) {
            s.feature_noise_scale = j.at("feature_noise_scale").get<double>();
        }
        if (j.contains("taste_sharpness")) {
            s.taste_sharpness = j.at("taste_sharpness").get<double>();
        }
        if (j.contains("seed")) s.seed = j.at("seed").get<std::uint64_t>();
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("synth spec: missing or mistyped field: ") + e.what());
    }
    s.validate();
    return s;
}

SynthDataset generate(const SynthSpec& spec) {
    spec.validate();
    SynthDataset data;

    // Round-robin cluster assignment keeps clusters balanced and nonempty.
    data.item_cluster.resize(spec.num_items);
    std::vector<std::vector<std::uint32_t>> cluster_items(spec.num_clusters);
    for (std::size_t i = 0; i < spec.num_items; ++i) {
        std::uint32_t c = static_cast<std::uint32_t>(i % spec.num_clusters);
        data.item_cluster[i] = c;
        cluster_items[c].push_back(static_cast<std::uint32_t>(i));
    }
    for (std::size_t c = 0; c < spec.num_clusters; ++c) {
        if (cluster_items[c].empty()) {
            throw ValidationError("synth: cluster " + std::to_string(c) + " has zero items");
        }
    }
    data.user_cluster.resize(spec.num_users);
    for (std::size_t u = 0; u < spec.num_users; ++u) {
        data.user_cluster[u] = static_cast<std::uint32_t>(u % spec.num_clusters);
    }

    // Features: centroid on a sphere of radius cluster_separation, Gaussian
    // perturbation per item.
    std::vector<std::vector<std::vector<double>>> centroids_by_modality;
    for (const auto& mspec : spec.modalities) {
        Rng rng = Rng::derive(spec.seed, std::string("synth:features:") +
                                             modality_name(mspec.modality));
        std::vector<std::vector<double>> centroids(spec.num_clusters,
                                                   std::vector<double>(mspec.dim));
        for (std::size_t c = 0; c < spec.num_clusters; ++c) {
            double norm2 = 0.0;
            for (std::size_t d = 0; d < mspec.dim; ++d) {
                centroids[c][d] = rng.normal();
                norm2 += centroids[c][d] * centroids[c][d];
            }
            double scale = spec.cluster_separation / std::max(std::sqrt(norm2), 1e-12);
            for (double& v : centroids[c]) v *= scale;
        }
        ModalityFeatureTable table =
            ModalityFeatureTable::make(mspec.modality, spec.num_items, mspec.dim);
        for (std::size_t i = 0; i < spec.num_items; ++i) {
            const auto& ctr = centroids[data.item_cluster[i]];
            for (std::size_t d = 0; d < mspec.dim; ++d) {
                table.features.at(i, d) = ctr[d] + rng.normal(0.0, spec.feature_noise_scale);
            }
        }
        data.features.tables.push_back(std::move(table));
        centroids_by_modality.push_back(std::move(centroids));
    }

    // Interactions: true edges sampled without replacement from the user's
    // cluster, false edges from everywhere else.
    std::size_t k = spec.interactions_per_user;
    std::size_t n_false = static_cast<std::size_t>(spec.noise_fraction * static_cast<double>(k));
    std::size_t n_true = k - n_false;

    std::vector<Edge> edges;
    edges.reserve(spec.num_users * k);
    for (std::size_t u = 0; u < spec.num_users; ++u) {
        std::uint32_t c = data.user_cluster[u];
        const auto& own = cluster_items[c];
        if (own.size() < n_true) {
            throw ValidationError("synth: cluster " + std::to_string(c) + " has " +
                                  std::to_string(own.size()) + " items but " +
                                  std::to_string(n_true) + " true edges are required per user");
        }
        std::vector<std::uint32_t> others;
        others.reserve(spec.num_items - own.size());
        for (std::uint32_t i = 0; i < spec.num_items; ++i) {
            if (data.item_cluster[i] != c) others.push_back(i);
        }
        if (n_false > others.size()) {
            throw ValidationError("synth: not enough out-of-cluster items for user " +
                                  std::to_string(u));
        }
        Rng rng = Rng::derive(spec.seed, "synth:edges", u);
        if (spec.taste_sharpness == 0.0) {
            std::vector<std::uint32_t> own_pool = own;
            rng.shuffle(own_pool);
            for (std::size_t t = 0; t < n_true; ++t) {
                edges.push_back({static_cast<std::uint32_t>(u), own_pool[t]});
            }
        } else {
            // True edges concentrate on in-cluster items whose feature noise
            // aligns with the user's private taste direction.
            std::vector<double> affinity(own.size(), 0.0);
            for (std::size_t m = 0; m < spec.modalities.size(); ++m) {
                const auto& table = data.features.tables[m];
                const auto& ctr = centroids_by_modality[m][c];
                std::vector<double> taste(table.dim);
                double tn2 = 0.0;
                for (std::size_t d = 0; d < table.dim; ++d) {
                    taste[d] = rng.normal();
                    tn2 += taste[d] * taste[d];
                }
                double tn = std::max(std::sqrt(tn2), 1e-12);
                double sigma = std::max(spec.feature_noise_scale, 1e-12);
                for (std::size_t k = 0; k < own.size(); ++k) {
                    double along = 0.0;
                    for (std::size_t d = 0; d < table.dim; ++d) {
                        along += (table.features.at(own[k], d) - ctr[d]) * taste[d] / tn;
                    }
                    affinity[k] += along / (sigma * spec.modalities.size());
                }
            }
            // Sequential weighted draws without replacement.
            std::vector<double> weight(own.size());
            double mx = affinity[0];
            for (double a : affinity) mx = std::max(mx, a);
            for (std::size_t k = 0; k < own.size(); ++k) {
                weight[k] = std::exp(spec.taste_sharpness * (affinity[k] - mx));
            }
            std::vector<bool> taken(own.size(), false);
            for (std::size_t t = 0; t < n_true; ++t) {
                double total = 0.0;
                for (std::size_t k = 0; k < own.size(); ++k) {
                    if (!taken[k]) total += weight[k];
                }
                double draw = rng.uniform() * total;
                std::size_t pick = 0;
                double acc = 0.0;
                for (std::size_t k = 0; k < own.size(); ++k) {
                    if (taken[k]) continue;
                    acc += weight[k];
                    pick = k;
                    if (draw <= acc) break;
                }
                taken[pick] = true;
                edges.push_back({static_cast<std::uint32_t>(u), own[pick]});
            }
        }
        std::vector<std::uint32_t> other_pool = others;
        rng.shuffle(other_pool);
        for (std::size_t t = 0; t < n_false; ++t) {
            edges.push_back({static_cast<std::uint32_t>(u), other_pool[t]});
        }
    }

    data.graph = InteractionGraph::build(static_cast<std::uint32_t>(spec.num_users),
                                         static_cast<std::uint32_t>(spec.num_items), edges);
    // Labels follow the graph's sorted edge order; a true edge never collides
    // with a false one because the item pools are disjoint per user.
    data.edge_labels.resize(data.graph.num_edges());
    for (std::size_t e = 0; e < data.graph.num_edges(); ++e) {
        const Edge& edge = data.graph.edges()[e];
        bool same_cluster = data.item_cluster[edge.item] == data.user_cluster[edge.user];
        data.edge_labels[e] = same_cluster ? EdgeLabel::true_positive : EdgeLabel::false_positive;
    }
    return data;
}

double edge_weight_auc(const std::vector<double>& scores, const std::vector<bool>& is_true) {
    if (scores.size() != is_true.size()) {
        throw ValidationError("edge_weight_auc: score/label counts differ");
    }
    std::size_t n_pos = 0;
    for (bool b : is_true) n_pos += b ? 1 : 0;
    std::size_t n_neg = is_true.size() - n_pos;
    if (n_pos == 0 || n_neg == 0) {
        throw DomainError("edge_weight_auc: labels contain a single class; AUC is undefined");
    }
    // Rank-sum with average ranks for ties.
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    double pos_rank_sum = 0.0;
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
        double avg_rank = 0.5 * static_cast<double>(i + 1 + j);  // ranks are 1-based
        for (std::size_t t = i; t < j; ++t) {
            if (is_true[order[t]]) pos_rank_sum += avg_rank;
        }
        i = j;
    }
    double np = static_cast<double>(n_pos), nn = static_cast<double>(n_neg);
    return (pos_rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
}

void save_labels_tsv(const std::string& path, const SynthDataset& data) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write labels file: " + path);
    for (std::size_t e = 0; e < data.graph.num_edges(); ++e) {
        const Edge& edge = data.graph.edges()[e];
        out << edge.user << '\t' << edge.item << '\t'
            << (data.edge_labels[e] == EdgeLabel::true_positive ? "true_positive"
                                                                : "false_positive")
            << '\n';
    }
}

RawLabels load_labels_tsv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open labels file: " + path);
    RawLabels out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        auto t1 = line.find('\t');
        auto t2 = line.find('\t', t1 == std::string::npos ? t1 : t1 + 1);
        if (t1 == std::string::npos || t2 == std::string::npos) {
            throw ValidationError(path + ":" + std::to_string(lineno) +
                                  ": expected `user<TAB>item<TAB>label`");
        }
        std::string label = line.substr(t2 + 1);
        if (!label.empty() && label.back() == '\r') label.pop_back();
        EdgeLabel l;
        if (label == "true_positive") {
            l = EdgeLabel::true_positive;
        } else if (label == "false_positive") {
            l = EdgeLabel::false_positive;
        } else {
            throw ValidationError(path + ":" + std::to_string(lineno) + ": unknown label `" +
                                  label + "`");
        }
        out.ids.emplace_back(line.substr(0, t1), line.substr(t1 + 1, t2 - t1 - 1));
        out.labels.push_back(l);
    }
    return out;
}

LabeledEdges resolve_labels(const RawLabels& raw, const InteractionData& data) {
    std::unordered_map<std::string, std::uint32_t> users, items;
    for (std::uint32_t u = 0; u < data.user_ids.size(); ++u) users[data.user_ids[u]] = u;
    for (std::uint32_t i = 0; i < data.item_ids.size(); ++i) items[data.item_ids[i]] = i;
    LabeledEdges out;
    out.labels = raw.labels;
    out.edges.reserve(raw.ids.size());
    for (std::size_t r = 0; r < raw.ids.size(); ++r) {
        auto uit = users.find(raw.ids[r].first);
        auto iit = items.find(raw.ids[r].second);
        if (uit == users.end() || iit == items.end()) {
            throw ValidationError("labels row " + std::to_string(r + 1) +
                                  " references unknown edge (" + raw.ids[r].first + "," +
                                  raw.ids[r].second + ")");
        }
        out.edges.push_back({uit->second, iit->second});
    }
    return out;
}

}  // namespace grcn
