#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "grcn/graph.hpp"
#include "grcn/model.hpp"

namespace grcn {

struct RankingResult {
    std::size_t k = 10;
    double precision = 0.0;
    double recall = 0.0;
    double ndcg = 0.0;
    std::size_t users_evaluated = 0;
    std::size_t users_skipped = 0;
};

// Top-k candidates for one user: every item the user did not consume outside
// the evaluated split, scored by inner product, sorted descending with ties
// broken by ascending item index.
std::vector<std::uint32_t> rank_candidates(const Representations& repr,
                                           const InteractionGraph& graph, std::uint32_t user,
                                           Partition split, std::size_t k);

// Metric core over prepared rankings. Users with empty held-out sets are
// skipped and counted. DCG uses binary gains with the 1/log2(rank+1)
// discount; IDCG places min(k, |held-out|) hits at the top.
RankingResult metrics_at_k(const std::vector<std::vector<std::uint32_t>>& ranked,
                           const std::vector<std::vector<std::uint32_t>>& held_out,
                           std::size_t k);

// Ranks every user against the chosen split and aggregates.
RankingResult evaluate_split(const Representations& repr, const InteractionGraph& graph,
                             Partition split, std::size_t k);

std::string metrics_json(const RankingResult& r);

}  // namespace grcn
