#include "grcn/graph.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include "grcn/errors.hpp"

#include "json.hpp"

namespace grcn {

const char* partition_name(Partition p) {
    switch (p) {
        case Partition::train: return "train";
        case Partition::validation: return "validation";
        case Partition::test: return "test";
    }
    return "?";
}

InteractionGraph InteractionGraph::build(std::uint32_t num_users, std::uint32_t num_items,
                                         const std::vector<Edge>& edges) {
    InteractionGraph g;
    g.num_users_ = num_users;
    g.num_items_ = num_items;
    for (std::size_t row = 0; row < edges.size(); ++row) {
        const Edge& e = edges[row];
        if (e.user >= num_users || e.item >= num_items) {
            throw ValidationError("edge row " + std::to_string(row) + " out of range: (" +
                                  std::to_string(e.user) + "," + std::to_string(e.item) +
                                  ") with " + std::to_string(num_users) + " users and " +
                                  std::to_string(num_items) + " items");
        }
    }
    g.edges_ = edges;
    std::sort(g.edges_.begin(), g.edges_.end(), [](const Edge& a, const Edge& b) {
        return a.user != b.user ? a.user < b.user : a.item < b.item;
    });
    std::size_t before = g.edges_.size();
    g.edges_.erase(std::unique(g.edges_.begin(), g.edges_.end()), g.edges_.end());
    g.duplicate_count_ = before - g.edges_.size();

    g.partition_.assign(g.edges_.size(), Partition::train);
    g.user_adjacency_.assign(num_users, {});
    g.item_adjacency_.assign(num_items, {});
    for (const Edge& e : g.edges_) {
        g.user_adjacency_[e.user].push_back(e.item);
        g.item_adjacency_[e.item].push_back(e.user);
    }
    // Edges are sorted by (user,item) so user lists arrive sorted; item lists
    // arrive sorted by user for the same reason.
    return g;
}

bool InteractionGraph::has_edge(std::uint32_t u, std::uint32_t i) const {
    const auto& items = user_adjacency_[u];
    return std::binary_search(items.begin(), items.end(), i);
}

std::size_t InteractionGraph::count_partition(Partition p) const {
    return static_cast<std::size_t>(std::count(partition_.begin(), partition_.end(), p));
}

std::vector<std::uint32_t> InteractionGraph::user_items_in(std::uint32_t u, Partition p) const {
    std::vector<std::uint32_t> out;
    // Edges of user u are contiguous in the sorted edge list.
    auto lo = std::lower_bound(edges_.begin(), edges_.end(), u,
                               [](const Edge& e, std::uint32_t user) { return e.user < user; });
    for (auto it = lo; it != edges_.end() && it->user == u; ++it) {
        std::size_t idx = static_cast<std::size_t>(it - edges_.begin());
        if (partition_[idx] == p) out.push_back(it->item);
    }
    return out;
}

InteractionGraph split_per_user(const InteractionGraph& g, std::array<std::size_t, 3> ratios,
                                std::uint64_t seed) {
    if (ratios[0] == 0 || ratios[1] == 0 || ratios[2] == 0) {
        throw ValidationError("split ratios must be positive");
    }
    InteractionGraph out = g;
    double total_ratio = static_cast<double>(ratios[0] + ratios[1] + ratios[2]);

    std::size_t edge_begin = 0;
    for (std::uint32_t u = 0; u < g.num_users(); ++u) {
        std::size_t degree = g.user_items(u).size();
        if (degree == 0) continue;
        std::size_t lo = edge_begin;
        edge_begin += degree;
        if (degree < 3) {
            // Too few interactions to hold anything out; evaluation on such a
            // user would be vacuous.
            continue;
        }
        std::vector<std::size_t> order(degree);
        std::iota(order.begin(), order.end(), lo);
        Rng rng = Rng::derive(seed, "split", u);
        rng.shuffle(order);

        // Largest-remainder rounding of degree * ratio / sum.
        std::array<std::size_t, 3> quota;
        std::array<double, 3> frac;
        std::size_t assigned = 0;
        for (int p = 0; p < 3; ++p) {
            double exact = static_cast<double>(degree) * static_cast<double>(ratios[p]) /
                           total_ratio;
            quota[p] = static_cast<std::size_t>(exact);
            frac[p] = exact - static_cast<double>(quota[p]);
            assigned += quota[p];
        }
        while (assigned < degree) {
            int best = 0;
            for (int p = 1; p < 3; ++p) {
                if (frac[p] > frac[best]) best = p;
            }
            quota[best] += 1;
            frac[best] = -1.0;
            ++assigned;
        }
        std::size_t pos = 0;
        for (int p = 0; p < 3; ++p) {
            for (std::size_t c = 0; c < quota[p]; ++c, ++pos) {
                out.partition_[order[pos]] = static_cast<Partition>(p);
            }
        }
    }
    return out;
}

std::uint32_t sample_negative_item(const InteractionGraph& g, std::uint32_t user, Rng& rng) {
    if (g.user_items(user).size() >= g.num_items()) {
        throw SamplingError("user " + std::to_string(user) +
                            " is connected to all items; no negative exists");
    }
    for (;;) {
        std::uint32_t j = static_cast<std::uint32_t>(rng.uniform_int(g.num_items()));
        if (!g.has_edge(user, j)) return j;
    }
}

TripletBatch sample_triplets(const InteractionGraph& g, std::size_t batch_size, Rng& rng) {
    TripletBatch batch;
    if (batch_size == 0) return batch;
    std::vector<std::size_t> train_edges;
    for (std::size_t e = 0; e < g.num_edges(); ++e) {
        if (g.partition(e) == Partition::train) train_edges.push_back(e);
    }
    if (train_edges.empty()) throw SamplingError("no train edges to sample from");
    batch.rows.reserve(batch_size);
    for (std::size_t b = 0; b < batch_size; ++b) {
        const Edge& e = g.edges()[train_edges[rng.uniform_int(train_edges.size())]];
        std::uint32_t j = sample_negative_item(g, e.user, rng);
        batch.rows.push_back({e.user, e.item, j});
    }
    return batch;
}

TrainCsr build_train_csr(const InteractionGraph& g) {
    TrainCsr csr;
    csr.num_users = g.num_users();
    csr.num_items = g.num_items();

    for (std::size_t e = 0; e < g.num_edges(); ++e) {
        if (g.partition(e) != Partition::train) continue;
        csr.edge_user.push_back(g.edges()[e].user);
        csr.edge_item.push_back(g.edges()[e].item);
        csr.edge_to_graph_index.push_back(e);
    }
    csr.num_edges = csr.edge_user.size();

    csr.user_offsets.assign(csr.num_users + 1, 0);
    for (std::uint32_t u : csr.edge_user) csr.user_offsets[u + 1] += 1;
    for (std::size_t u = 0; u < csr.num_users; ++u) {
        csr.user_offsets[u + 1] += csr.user_offsets[u];
    }

    // Item-order view: stable sort of user-order positions by item.
    std::vector<std::uint32_t> by_item(csr.num_edges);
    std::iota(by_item.begin(), by_item.end(), 0u);
    std::stable_sort(by_item.begin(), by_item.end(), [&](std::uint32_t a, std::uint32_t b) {
        return csr.edge_item[a] < csr.edge_item[b];
    });
    csr.item_offsets.assign(csr.num_items + 1, 0);
    csr.edge_user_i.resize(csr.num_edges);
    csr.edge_item_i.resize(csr.num_edges);
    csr.user_to_item_order.resize(csr.num_edges);
    csr.item_to_user_order = by_item;
    for (std::size_t pos = 0; pos < csr.num_edges; ++pos) {
        std::uint32_t uo = by_item[pos];
        csr.edge_user_i[pos] = csr.edge_user[uo];
        csr.edge_item_i[pos] = csr.edge_item[uo];
        csr.user_to_item_order[uo] = static_cast<std::uint32_t>(pos);
        csr.item_offsets[csr.edge_item[uo] + 1] += 1;
    }
    for (std::size_t i = 0; i < csr.num_items; ++i) {
        csr.item_offsets[i + 1] += csr.item_offsets[i];
    }
    return csr;
}

InteractionData load_interactions_tsv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open interaction file: " + path);
    InteractionData data;
    std::unordered_map<std::string, std::uint32_t> user_index, item_index;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        auto tab = line.find('\t');
        if (tab == std::string::npos) {
            throw ValidationError(path + ":" + std::to_string(lineno) +
                                  ": expected `user<TAB>item`");
        }
        std::string user_id = line.substr(0, tab);
        std::string item_id = line.substr(tab + 1);
        if (!item_id.empty() && item_id.back() == '\r') item_id.pop_back();
        if (user_id.empty() || item_id.empty()) {
            throw ValidationError(path + ":" + std::to_string(lineno) + ": empty id");
        }
        auto [uit, unew] = user_index.try_emplace(
            user_id, static_cast<std::uint32_t>(data.user_ids.size()));
        if (unew) data.user_ids.push_back(user_id);
        auto [iit, inew] = item_index.try_emplace(
            item_id, static_cast<std::uint32_t>(data.item_ids.size()));
        if (inew) data.item_ids.push_back(item_id);
        data.edges.push_back({uit->second, iit->second});
    }
    return data;
}

void save_interactions_tsv(const std::string& path, const InteractionGraph& g) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write interaction file: " + path);
    for (const Edge& e : g.edges()) {
        out << e.user << '\t' << e.item << '\n';
    }
}

std::string id_mapping_json(const InteractionData& data) {
    nlohmann::json j;
    j["users"] = data.user_ids;
    j["items"] = data.item_ids;
    return j.dump(2) + "\n";
}

namespace {

bool parse_decimal(const std::string& s, std::size_t* out) {
    if (s.empty() || s.size() > 9) return false;
    std::size_t v = 0;
    for (char c : s) {
        if (c < '0' || c > '9') return false;
        v = v * 10 + static_cast<std::size_t>(c - '0');
    }
    *out = v;
    return true;
}

}  // namespace

bool all_ids_numeric(const InteractionData& data) {
    std::size_t v;
    for (const auto& s : data.user_ids) {
        if (!parse_decimal(s, &v)) return false;
    }
    for (const auto& s : data.item_ids) {
        if (!parse_decimal(s, &v)) return false;
    }
    return true;
}

InteractionData with_numeric_dense_ids(const InteractionData& data, std::size_t min_users,
                                       std::size_t min_items) {
    std::size_t num_users = min_users, num_items = min_items;
    std::vector<std::size_t> user_value(data.user_ids.size()), item_value(data.item_ids.size());
    for (std::size_t u = 0; u < data.user_ids.size(); ++u) {
        parse_decimal(data.user_ids[u], &user_value[u]);
        num_users = std::max(num_users, user_value[u] + 1);
    }
    for (std::size_t i = 0; i < data.item_ids.size(); ++i) {
        parse_decimal(data.item_ids[i], &item_value[i]);
        num_items = std::max(num_items, item_value[i] + 1);
    }
    InteractionData out;
    out.user_ids.reserve(num_users);
    for (std::size_t u = 0; u < num_users; ++u) out.user_ids.push_back(std::to_string(u));
    out.item_ids.reserve(num_items);
    for (std::size_t i = 0; i < num_items; ++i) out.item_ids.push_back(std::to_string(i));
    out.edges.reserve(data.edges.size());
    for (const Edge& e : data.edges) {
        out.edges.push_back({static_cast<std::uint32_t>(user_value[e.user]),
                             static_cast<std::uint32_t>(item_value[e.item])});
    }
    return out;
}

std::uint64_t id_mapping_digest(const std::vector<std::string>& user_ids,
                                const std::vector<std::string>& item_ids) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto mix = [&h](const std::string& s) {
        for (char c : s) {
            h ^= static_cast<unsigned char>(c);
            h *= 0x100000001b3ULL;
        }
        h ^= 0x1f;
        h *= 0x100000001b3ULL;
    };
    for (const auto& s : user_ids) mix(s);
    h ^= 0xabcd;
    h *= 0x100000001b3ULL;
    for (const auto& s : item_ids) mix(s);
    return h;
}

}  // namespace grcn
