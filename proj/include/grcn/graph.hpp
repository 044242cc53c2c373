#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "grcn/rng.hpp"

namespace grcn {

enum class Partition : std::uint8_t { train = 0, validation = 1, test = 2 };

const char* partition_name(Partition p);

struct Edge {
    std::uint32_t user;
    std::uint32_t item;

    friend bool operator==(const Edge&, const Edge&) = default;
};

// Bipartite implicit-feedback graph. Immutable after construction; the edge
// list is deduplicated and sorted by (user, item), and both adjacency views
// are exact transposes of it.
class InteractionGraph {
public:
    static InteractionGraph build(std::uint32_t num_users, std::uint32_t num_items,
                                  const std::vector<Edge>& edges);

    std::uint32_t num_users() const { return num_users_; }
    std::uint32_t num_items() const { return num_items_; }
    const std::vector<Edge>& edges() const { return edges_; }
    std::size_t num_edges() const { return edges_.size(); }
    std::size_t duplicate_count() const { return duplicate_count_; }

    const std::vector<std::uint32_t>& user_items(std::uint32_t u) const {
        return user_adjacency_[u];
    }
    const std::vector<std::uint32_t>& item_users(std::uint32_t i) const {
        return item_adjacency_[i];
    }

    Partition partition(std::size_t edge_index) const { return partition_[edge_index]; }
    const std::vector<Partition>& partitions() const { return partition_; }
    bool has_edge(std::uint32_t u, std::uint32_t i) const;
    std::size_t count_partition(Partition p) const;

    // Items of u restricted to one partition, in ascending order.
    std::vector<std::uint32_t> user_items_in(std::uint32_t u, Partition p) const;

private:
    std::uint32_t num_users_ = 0;
    std::uint32_t num_items_ = 0;
    std::vector<Edge> edges_;
    std::vector<Partition> partition_;
    std::vector<std::vector<std::uint32_t>> user_adjacency_;
    std::vector<std::vector<std::uint32_t>> item_adjacency_;
    std::size_t duplicate_count_ = 0;

    friend InteractionGraph split_per_user(const InteractionGraph&, std::array<std::size_t, 3>,
                                           std::uint64_t);
};

// Shuffles each user's edges and partitions them by the given ratios with
// largest-remainder rounding. Users with fewer than 3 interactions keep all
// edges in train. The edge set itself never changes.
InteractionGraph split_per_user(const InteractionGraph& g, std::array<std::size_t, 3> ratios,
                                std::uint64_t seed);

struct Triplet {
    std::uint32_t user;
    std::uint32_t item_pos;
    std::uint32_t item_neg;
};

struct TripletBatch {
    std::vector<Triplet> rows;
};

// Uniformly samples train edges and rejection-samples a negative item per
// row (A[u][j] = 0 over the full edge set).
TripletBatch sample_triplets(const InteractionGraph& g, std::size_t batch_size, Rng& rng);

// Negative for one known positive edge; shared by the epoch loop.
std::uint32_t sample_negative_item(const InteractionGraph& g, std::uint32_t user, Rng& rng);

// Train edges in compressed sparse rows for both directions, plus the
// permutation linking the two edge orders. Edge position in "user order"
// follows the graph's sorted edge list restricted to train.
struct TrainCsr {
    std::size_t num_users = 0;
    std::size_t num_items = 0;
    std::size_t num_edges = 0;

    std::vector<std::size_t> user_offsets;     // num_users+1
    std::vector<std::uint32_t> edge_item;      // item of each edge, user order
    std::vector<std::uint32_t> edge_user;      // user of each edge, user order

    std::vector<std::size_t> item_offsets;     // num_items+1
    std::vector<std::uint32_t> edge_user_i;    // user of each edge, item order
    std::vector<std::uint32_t> edge_item_i;    // item of each edge, item order

    std::vector<std::uint32_t> user_to_item_order;  // position map, user -> item order
    std::vector<std::uint32_t> item_to_user_order;  // position map, item -> user order
    std::vector<std::size_t> edge_to_graph_index;   // user-order position -> graph edge index

    std::size_t user_degree(std::uint32_t u) const {
        return user_offsets[u + 1] - user_offsets[u];
    }
    std::size_t item_degree(std::uint32_t i) const {
        return item_offsets[i + 1] - item_offsets[i];
    }
};

TrainCsr build_train_csr(const InteractionGraph& g);

// TSV interchange: one `user<TAB>item` per line; raw ids are remapped to
// dense indices in first-appearance order.
struct InteractionData {
    std::vector<Edge> edges;
    std::vector<std::string> user_ids;  // index -> raw id
    std::vector<std::string> item_ids;
};

InteractionData load_interactions_tsv(const std::string& path);
void save_interactions_tsv(const std::string& path, const InteractionGraph& g);
std::string id_mapping_json(const InteractionData& data);
std::uint64_t id_mapping_digest(const std::vector<std::string>& user_ids,
                                const std::vector<std::string>& item_ids);

// When every raw id is a decimal integer, the dense index IS the numeric id
// (padded with ids that never interact). This keeps feature-file rows aligned
// with item indices and keeps cold items in the candidate pool. `min_items`
// extends the item range, e.g. to the feature table's row count.
bool all_ids_numeric(const InteractionData& data);
InteractionData with_numeric_dense_ids(const InteractionData& data, std::size_t min_users = 0,
                                       std::size_t min_items = 0);

}  // namespace grcn
