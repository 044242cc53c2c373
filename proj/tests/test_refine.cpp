#include <cmath>

#include "doctest.h"
#include "grcn/errors.hpp"
#include "grcn/refine.hpp"
#include "oracles.hpp"

using namespace grcn;

namespace {

// Minimal CSR: edges given per user over `num_items` items, all train.
TrainCsr tiny_csr(std::size_t num_users, std::size_t num_items,
                  const std::vector<std::vector<std::uint32_t>>& items_per_user) {
    std::vector<Edge> edges;
    for (std::uint32_t u = 0; u < items_per_user.size(); ++u) {
        for (std::uint32_t i : items_per_user[u]) edges.push_back({u, i});
    }
    auto g = InteractionGraph::build(static_cast<std::uint32_t>(num_users),
                                     static_cast<std::uint32_t>(num_items), edges);
    return build_train_csr(g);
}

BoundModalityParams bind_modal(Tape& tape, std::size_t num_users, std::size_t num_items,
                               std::size_t proj_dim, std::size_t feat_dim, Rng& rng) {
    BoundModalityParams b;
    Tensor w({proj_dim, feat_dim});
    for (std::size_t i = 0; i < w.numel(); ++i) w[i] = rng.uniform(-0.5, 0.5);
    Tensor seed({num_users, proj_dim});
    for (std::size_t i = 0; i < seed.numel(); ++i) seed[i] = rng.uniform(-0.5, 0.5);
    b.proj_weight = tape.leaf(w, true);
    b.proj_bias = tape.leaf(Tensor({proj_dim}), true);
    b.routing_seed = tape.leaf(seed, true);
    b.user_rho = tape.leaf(Tensor::full({num_users}, 1.0), true);
    b.item_rho = tape.leaf(Tensor::full({num_items}, 1.0), true);
    return b;
}

}  // namespace

TEST_CASE("project_items identity and bias-only cases") {
    Tape tape;
    BoundModalityParams p;
    p.proj_weight = tape.constant(Tensor::matrix(2, 2, {1, 0, 0, 1}));
    p.proj_bias = tape.constant(Tensor({2}));
    Var feats = tape.constant(Tensor::matrix(3, 2, {0.5, 1.0, 2.0, 0.0, 0.25, 0.75}));
    Tensor out = tape.value(project_items(tape, feats, p, 0.1));
    CHECK(out.values() == std::vector<double>{0.5, 1.0, 2.0, 0.0, 0.25, 0.75});

    BoundModalityParams pb;
    pb.proj_weight = tape.constant(Tensor({2, 2}));
    pb.proj_bias = tape.constant(Tensor::vector({1.0, -1.0}));
    Tensor outb = tape.value(project_items(tape, feats, pb, 0.1));
    for (std::size_t r = 0; r < 3; ++r) {
        CHECK(outb.at(r, 0) == doctest::Approx(1.0));
        CHECK(outb.at(r, 1) == doctest::Approx(-0.1));
    }
}

TEST_CASE("projection gradient wrt weights matches finite differences") {
    Rng rng(41);
    Tensor w({3, 4}), feats({5, 4});
    for (std::size_t i = 0; i < w.numel(); ++i) w[i] = rng.uniform(-1, 1);
    for (std::size_t i = 0; i < feats.numel(); ++i) feats[i] = rng.uniform(-1, 1);
    Tensor bias({3});

    auto build = [&](Tape& t, Var wv, Var bv) {
        BoundModalityParams p;
        p.proj_weight = wv;
        p.proj_bias = bv;
        Var f = t.constant(feats);
        Var proj = project_items(t, f, p, 0.01);
        return t.sum(t.mul(proj, proj));
    };
    Tape tape;
    Var wv = tape.leaf(w, true), bv = tape.leaf(bias, true);
    tape.backward(build(tape, wv, bv));
    auto eval = [&]() {
        Tape t2;
        return t2.value(build(t2, t2.leaf(w, true), t2.leaf(bias, true)))[0];
    };
    CHECK(oracles::gradient_rel_error(tape.grad(wv), oracles::finite_diff_gradient(eval, w)) <
          1e-4);
    CHECK(oracles::gradient_rel_error(tape.grad(bv), oracles::finite_diff_gradient(eval, bias)) <
          1e-4);
}

TEST_CASE("routing fixed point: single neighbor equal to the seed") {
    Tape tape;
    Tensor u0 = Tensor::vector({0.6, 0.8});  // unit norm
    Var projected = tape.constant(Tensor::matrix(1, 2, {0.6, 0.8}));
    Var seed = tape.constant(u0);
    Var routed = route_preference(tape, projected, seed, {0}, 1);
    CHECK(tape.value(routed)[0] == doctest::Approx(0.6).epsilon(1e-12));
    CHECK(tape.value(routed)[1] == doctest::Approx(0.8).epsilon(1e-12));
}

TEST_CASE("routing stays on the bisector of symmetric neighbors") {
    double s = 1.0 / std::sqrt(2.0);
    Tape tape;
    Var projected = tape.constant(Tensor::matrix(2, 2, {s, s, s, -s}));
    Var seed = tape.constant(Tensor::vector({1.0, 0.0}));
    for (std::size_t iters : {1u, 2u, 5u}) {
        Var routed = route_preference(tape, projected, seed, {0, 1}, iters);
        CHECK(std::abs(tape.value(routed)[1]) < 1e-12);
        CHECK(tape.value(routed)[0] == doctest::Approx(1.0));
    }
}

TEST_CASE("routing approaches a planted prototype") {
    Rng rng(57);
    std::size_t dim = 8;
    Tensor prototype({dim});
    for (std::size_t d = 0; d < dim; ++d) prototype[d] = rng.uniform(-1, 1);
    double pn = prototype.norm2();
    for (std::size_t d = 0; d < dim; ++d) prototype[d] /= pn;

    Tensor neighbors({5, dim});
    for (std::size_t n = 0; n < 5; ++n) {
        for (std::size_t d = 0; d < dim; ++d) {
            neighbors.at(n, d) = prototype[d] + rng.normal(0.0, 0.1);
        }
    }
    Tensor seed({dim});
    for (std::size_t d = 0; d < dim; ++d) seed[d] = rng.uniform(-1, 1);

    Tape tape;
    Var routed = route_preference(tape, tape.constant(neighbors), tape.constant(seed),
                                  {0, 1, 2, 3, 4}, 3);
    auto cosine = [&](const Tensor& a) {
        double num = 0.0, an = 0.0;
        for (std::size_t d = 0; d < dim; ++d) {
            num += a[d] * prototype[d];
            an += a[d] * a[d];
        }
        return num / std::sqrt(an);
    };
    CHECK(cosine(tape.value(routed)) > cosine(seed));
}

TEST_CASE("routing T=0 returns the normalized seed and rejects empty neighborhoods") {
    Tape tape;
    Var projected = tape.constant(Tensor::matrix(1, 2, {1.0, 0.0}));
    Var seed = tape.constant(Tensor::vector({3.0, 4.0}));
    Var routed = route_preference(tape, projected, seed, {0}, 0);
    CHECK(tape.value(routed)[0] == doctest::Approx(0.6));
    CHECK(tape.value(routed)[1] == doctest::Approx(0.8));
    CHECK_THROWS_AS(route_preference(tape, projected, seed, {}, 3), DomainError);
}

TEST_CASE("vectorized routing matches the per-user operation bit for bit") {
    Rng rng(61);
    std::size_t num_users = 4, num_items = 6, proj_dim = 5;
    TrainCsr csr = tiny_csr(num_users, num_items, {{0, 1, 2}, {2, 3}, {4}, {1, 5}});
    Tensor projected({num_items, proj_dim});
    for (std::size_t i = 0; i < projected.numel(); ++i) projected[i] = rng.uniform(-1, 1);
    Tensor seeds({num_users, proj_dim});
    for (std::size_t i = 0; i < seeds.numel(); ++i) seeds[i] = rng.uniform(-1, 1);

    for (std::size_t iters : {0u, 1u, 3u}) {
        Tape tape;
        Var pv = tape.constant(projected);
        Var all = route_all_users(tape, pv, tape.constant(seeds), csr, iters);
        for (std::uint32_t u = 0; u < num_users; ++u) {
            std::vector<std::uint32_t> neigh(
                csr.edge_item.begin() + csr.user_offsets[u],
                csr.edge_item.begin() + csr.user_offsets[u + 1]);
            Var seed_row = tape.row(tape.constant(seeds), u);
            Var single = route_preference(tape, pv, seed_row, neigh, iters);
            const Tensor& av = tape.value(all);
            const Tensor& sv = tape.value(single);
            for (std::size_t d = 0; d < proj_dim; ++d) {
                CHECK(av.at(u, d) == sv[d]);
            }
        }
    }
}

TEST_CASE("cold users keep their normalized seed under vectorized routing") {
    TrainCsr csr = tiny_csr(3, 4, {{0, 1}, {}, {2}});
    Tape tape;
    Tensor seeds = Tensor::matrix(3, 2, {1, 0, 3, 4, 0, 2});
    Tensor projected = Tensor::matrix(4, 2, {0.5, 0.5, 0.1, 0.9, 0.7, 0.2, 0.3, 0.3});
    Var routed = route_all_users(tape, tape.constant(projected), tape.constant(seeds), csr, 2);
    CHECK(tape.value(routed).at(1, 0) == doctest::Approx(0.6));
    CHECK(tape.value(routed).at(1, 1) == doctest::Approx(0.8));
}

TEST_CASE("routed preferences have unit norm for any iteration count") {
    Rng rng(67);
    TrainCsr csr = tiny_csr(3, 5, {{0, 1, 2}, {3}, {2, 4}});
    Tensor projected({5, 4}), seeds({3, 4});
    for (std::size_t i = 0; i < projected.numel(); ++i) projected[i] = rng.uniform(-2, 2);
    for (std::size_t i = 0; i < seeds.numel(); ++i) seeds[i] = rng.uniform(-2, 2);
    for (std::size_t iters : {0u, 1u, 2u, 4u}) {
        Tape tape;
        Tensor routed =
            tape.value(route_all_users(tape, tape.constant(projected), tape.constant(seeds),
                                       csr, iters));
        for (std::size_t u = 0; u < 3; ++u) {
            double norm = 0.0;
            for (std::size_t d = 0; d < 4; ++d) norm += routed.at(u, d) * routed.at(u, d);
            CHECK(std::sqrt(norm) == doctest::Approx(1.0).epsilon(1e-10));
        }
    }
}

TEST_CASE("affinity scores: degree-1 and symmetric neighborhoods") {
    Tape tape;
    TrainCsr single = tiny_csr(1, 1, {{0}});
    Var routed = tape.constant(Tensor::matrix(1, 2, {1.0, 0.0}));
    Var proj = tape.constant(Tensor::matrix(1, 2, {0.3, 0.4}));
    AffinityScores s = affinity_scores(tape, routed, proj, single);
    CHECK(tape.value(s.user_from_item)[0] == doctest::Approx(1.0));
    CHECK(tape.value(s.item_from_user)[0] == doctest::Approx(1.0));

    TrainCsr two = tiny_csr(1, 2, {{0, 1}});
    Var proj_equal = tape.constant(Tensor::matrix(2, 2, {0.5, 0.1, 0.5, 0.1}));
    AffinityScores s2 = affinity_scores(tape, routed, proj_equal, two);
    CHECK(tape.value(s2.user_from_item)[0] == doctest::Approx(0.5));
    CHECK(tape.value(s2.user_from_item)[1] == doctest::Approx(0.5));
}

TEST_CASE("affinity scores reproduce the closed-form exp ratio") {
    // logits (ln 3, 0) for one user's two neighbors -> (0.75, 0.25)
    Tape tape;
    TrainCsr csr = tiny_csr(1, 2, {{0, 1}});
    Var routed = tape.constant(Tensor::matrix(1, 1, {1.0}));
    Var proj = tape.constant(Tensor::matrix(2, 1, {std::log(3.0), 0.0}));
    AffinityScores s = affinity_scores(tape, routed, proj, csr);
    CHECK(tape.value(s.user_from_item)[0] == doctest::Approx(0.75).epsilon(1e-12));
    CHECK(tape.value(s.user_from_item)[1] == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("affinity neighborhoods sum to one in both directions") {
    Rng rng(71);
    TrainCsr csr = tiny_csr(4, 6, {{0, 1, 2}, {1, 3, 4}, {0, 5}, {2, 3, 4, 5}});
    Tensor routed({4, 3}), proj({6, 3});
    for (std::size_t i = 0; i < routed.numel(); ++i) routed[i] = rng.uniform(-3, 3);
    for (std::size_t i = 0; i < proj.numel(); ++i) proj[i] = rng.uniform(-3, 3);
    Tape tape;
    AffinityScores s =
        affinity_scores(tape, tape.constant(routed), tape.constant(proj), csr);
    const Tensor& su = tape.value(s.user_from_item);
    for (std::size_t u = 0; u < 4; ++u) {
        double sum = 0.0;
        for (std::size_t e = csr.user_offsets[u]; e < csr.user_offsets[u + 1]; ++e) sum += su[e];
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-10));
        for (std::size_t e = csr.user_offsets[u]; e < csr.user_offsets[u + 1]; ++e) {
            CHECK(su[e] > 0.0);
            CHECK(su[e] <= 1.0);
        }
    }
    const Tensor& si = tape.value(s.item_from_user);
    for (std::size_t i = 0; i < 6; ++i) {
        if (csr.item_degree(static_cast<std::uint32_t>(i)) == 0) continue;
        double sum = 0.0;
        for (std::size_t e = csr.item_offsets[i]; e < csr.item_offsets[i + 1]; ++e) sum += si[e];
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-10));
    }
}

TEST_CASE("fuse_scores base_max reduces per the closed forms") {
    TrainCsr csr = tiny_csr(1, 1, {{0}});
    auto fabricate = [&](Tape& tape, double value) {
        AffinityScores s;
        s.user_from_item = tape.constant(Tensor::vector({value}));
        s.item_from_user = tape.constant(Tensor::vector({value}));
        return s;
    };
    auto rho_params = [&](Tape& tape, double rho) {
        BoundModalityParams p;
        p.user_rho = tape.constant(Tensor::vector({rho}));
        p.item_rho = tape.constant(Tensor::vector({rho}));
        return p;
    };

    {
        Tape tape;
        std::vector<AffinityScores> s{fabricate(tape, 0.2), fabricate(tape, 0.5),
                                      fabricate(tape, 0.3)};
        std::vector<BoundModalityParams> p{rho_params(tape, 1.0), rho_params(tape, 1.0),
                                           rho_params(tape, 1.0)};
        FusedWeights w = fuse_scores(tape, s, p, csr, FusionMode::base_max);
        CHECK(tape.value(w.user_from_item)[0] == doctest::Approx(0.5));
    }
    {
        Tape tape;
        std::vector<AffinityScores> s{fabricate(tape, 0.9), fabricate(tape, 0.4),
                                      fabricate(tape, 0.1)};
        std::vector<BoundModalityParams> p{rho_params(tape, 0.5), rho_params(tape, 1.0),
                                           rho_params(tape, 1.0)};
        FusedWeights w = fuse_scores(tape, s, p, csr, FusionMode::base_max);
        CHECK(tape.value(w.user_from_item)[0] == doctest::Approx(0.45));
    }
    {
        // single modality: base_max -> rho * sbar, max/mean -> sbar
        Tape tape;
        std::vector<AffinityScores> s{fabricate(tape, 0.7)};
        std::vector<BoundModalityParams> p{rho_params(tape, 0.6)};
        CHECK(tape.value(fuse_scores(tape, s, p, csr, FusionMode::base_max).user_from_item)[0] ==
              doctest::Approx(0.42));
        CHECK(tape.value(fuse_scores(tape, s, p, csr, FusionMode::max).user_from_item)[0] ==
              doctest::Approx(0.7));
        CHECK(tape.value(fuse_scores(tape, s, p, csr, FusionMode::mean).user_from_item)[0] ==
              doctest::Approx(0.7));
    }
    {
        Tape tape;
        CHECK_THROWS_AS(fuse_scores(tape, {}, {}, csr, FusionMode::base_max), ValidationError);
    }
}

TEST_CASE("max and mean fusion are invariant to modality order") {
    Rng rng(73);
    TrainCsr csr = tiny_csr(2, 3, {{0, 1}, {2}});
    auto scores_from = [&](Tape& tape, const std::vector<double>& vu,
                           const std::vector<double>& vi) {
        AffinityScores s;
        s.user_from_item = tape.constant(Tensor::vector(std::vector<double>(vu)));
        s.item_from_user = tape.constant(Tensor::vector(std::vector<double>(vi)));
        return s;
    };
    std::vector<double> a{0.1, 0.9, 0.4}, b{0.5, 0.2, 0.6}, ai{0.3, 0.7, 0.2},
        bi{0.8, 0.1, 0.5};
    for (FusionMode mode : {FusionMode::max, FusionMode::mean}) {
        Tape tape;
        std::vector<BoundModalityParams> dummy(2);
        auto w_ab = fuse_scores(tape, {scores_from(tape, a, ai), scores_from(tape, b, bi)},
                                dummy, csr, mode);
        auto w_ba = fuse_scores(tape, {scores_from(tape, b, bi), scores_from(tape, a, ai)},
                                dummy, csr, mode);
        CHECK(tape.value(w_ab.user_from_item).values() ==
              tape.value(w_ba.user_from_item).values());
        CHECK(tape.value(w_ab.item_from_user).values() ==
              tape.value(w_ba.item_from_user).values());
    }
}

TEST_CASE("hard fusion zeroes weights at or below the neighborhood mean") {
    TrainCsr csr = tiny_csr(1, 3, {{0, 1, 2}});
    Tape tape;
    AffinityScores s;
    s.user_from_item = tape.constant(Tensor::vector({0.6, 0.3, 0.1}));
    s.item_from_user = tape.constant(Tensor::vector({1.0, 1.0, 1.0}));
    std::vector<BoundModalityParams> p(1);
    p[0].user_rho = tape.constant(Tensor::vector({1.0}));
    p[0].item_rho = tape.constant(Tensor::full({3}, 1.0));
    FusedWeights w = fuse_scores(tape, {s}, p, csr, FusionMode::hard);
    const Tensor& wu = tape.value(w.user_from_item);
    // neighborhood mean 1/3: only 0.6 survives, shifted by the threshold
    CHECK(wu[0] == doctest::Approx(0.6 - 1.0 / 3.0));
    CHECK(wu[1] == 0.0);
    CHECK(wu[2] == 0.0);
}
