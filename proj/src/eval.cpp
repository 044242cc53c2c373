#include "grcn/eval.hpp"

#include <algorithm>
#include <cmath>

#include "grcn/errors.hpp"
#include "grcn/gcn.hpp"
#include "grcn/kernels.hpp"

#include "json.hpp"

namespace grcn {

std::vector<std::uint32_t> rank_candidates(const Representations& repr,
                                           const InteractionGraph& graph, std::uint32_t user,
                                           Partition split, std::size_t k) {
    // Candidates: items never consumed anywhere, plus the held-out items of
    // the evaluated split. Train items (and the other held-out partition)
    // never enter the ranking.
    std::vector<std::pair<double, std::uint32_t>> scored;
    scored.reserve(graph.num_items());
    for (std::uint32_t i = 0; i < graph.num_items(); ++i) {
        scored.emplace_back(score_rows(repr.users, user, repr.items, i), i);
    }
    std::vector<std::pair<double, std::uint32_t>> candidates;
    candidates.reserve(scored.size());
    std::vector<bool> blocked(graph.num_items(), false);
    for (std::uint32_t item : graph.user_items(user)) blocked[item] = true;
    for (std::uint32_t item : graph.user_items_in(user, split)) blocked[item] = false;
    for (auto& [s, i] : scored) {
        if (!blocked[i]) candidates.emplace_back(s, i);
    }
    auto better = [](const std::pair<double, std::uint32_t>& a,
                     const std::pair<double, std::uint32_t>& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    };
    std::size_t take = std::min(k, candidates.size());
    std::partial_sort(candidates.begin(), candidates.begin() + take, candidates.end(), better);
    std::vector<std::uint32_t> out;
    out.reserve(take);
    for (std::size_t r = 0; r < take; ++r) out.push_back(candidates[r].second);
    return out;
}

RankingResult metrics_at_k(const std::vector<std::vector<std::uint32_t>>& ranked,
                           const std::vector<std::vector<std::uint32_t>>& held_out,
                           std::size_t k) {
    if (k == 0) throw ValidationError("metrics_at_k: k must be positive");
    if (ranked.size() != held_out.size()) {
        throw ValidationError("metrics_at_k: ranked/held-out list counts differ");
    }
    RankingResult result;
    result.k = k;
    double sp = 0.0, sr = 0.0, sn = 0.0;
    for (std::size_t u = 0; u < ranked.size(); ++u) {
        const auto& held = held_out[u];
        if (held.empty()) {
            result.users_skipped += 1;
            continue;
        }
        std::size_t hits = 0;
        double dcg = 0.0;
        std::size_t depth = std::min(k, ranked[u].size());
        for (std::size_t r = 0; r < depth; ++r) {
            if (std::binary_search(held.begin(), held.end(), ranked[u][r])) {
                hits += 1;
                dcg += 1.0 / std::log2(static_cast<double>(r + 2));
            }
        }
        double idcg = 0.0;
        std::size_t ideal = std::min(k, held.size());
        for (std::size_t r = 0; r < ideal; ++r) {
            idcg += 1.0 / std::log2(static_cast<double>(r + 2));
        }
        sp += static_cast<double>(hits) / static_cast<double>(k);
        sr += static_cast<double>(hits) / static_cast<double>(held.size());
        sn += dcg / idcg;
        result.users_evaluated += 1;
    }
    if (result.users_evaluated > 0) {
        double n = static_cast<double>(result.users_evaluated);
        result.precision = sp / n;
        result.recall = sr / n;
        result.ndcg = sn / n;
    }
    return result;
}

RankingResult evaluate_split(const Representations& repr, const InteractionGraph& graph,
                             Partition split, std::size_t k) {
    std::size_t n = graph.num_users();
    std::vector<std::vector<std::uint32_t>> ranked(n), held(n);
    const int nt = kernels::effective_threads();
#pragma omp parallel for num_threads(nt) schedule(dynamic) if (n > 8)
    for (long long u = 0; u < static_cast<long long>(n); ++u) {
        auto uu = static_cast<std::uint32_t>(u);
        held[u] = graph.user_items_in(uu, split);
        if (!held[u].empty()) {
            ranked[u] = rank_candidates(repr, graph, uu, split, k);
        }
    }
    return metrics_at_k(ranked, held, k);
}

std::string metrics_json(const RankingResult& r) {
    nlohmann::ordered_json j;
    j["k"] = r.k;
    j["precision"] = r.precision;
    j["recall"] = r.recall;
    j["ndcg"] = r.ndcg;
    j["users_evaluated"] = r.users_evaluated;
    j["users_skipped"] = r.users_skipped;
    return j.dump(2) + "\n";
}

}  // namespace grcn
