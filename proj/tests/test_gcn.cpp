#include <cmath>

#include "doctest.h"
#include "grcn/errors.hpp"
#include "grcn/gcn.hpp"
#include "oracles.hpp"

using namespace grcn;

namespace {

TrainCsr csr_from(std::size_t num_users, std::size_t num_items,
                  const std::vector<Edge>& edges) {
    auto g = InteractionGraph::build(static_cast<std::uint32_t>(num_users),
                                     static_cast<std::uint32_t>(num_items), edges);
    return build_train_csr(g);
}

Var const_weights(Tape& tape, std::size_t n, double v) {
    return tape.constant(Tensor::full({n}, v));
}

}  // namespace

TEST_CASE("propagate with unit weights sums neighbor embeddings") {
    TrainCsr csr = csr_from(1, 2, {{0, 0}, {0, 1}});
    Tape tape;
    Var e0u = tape.constant(Tensor::matrix(1, 2, {9.0, 9.0}));
    Var e0i = tape.constant(Tensor::matrix(2, 2, {1.0, 2.0, 10.0, 20.0}));
    auto layers = propagate(tape, csr, const_weights(tape, 2, 1.0), const_weights(tape, 2, 1.0),
                            e0u, e0i, 1);
    const Tensor& e1u = tape.value(layers[1].first);
    CHECK(e1u.at(0, 0) == 11.0);
    CHECK(e1u.at(0, 1) == 22.0);
}

TEST_CASE("propagate with zero weights annihilates every layer above zero") {
    TrainCsr csr = csr_from(2, 2, {{0, 0}, {0, 1}, {1, 0}});
    Tape tape;
    Var e0u = tape.constant(Tensor::full({2, 3}, 5.0));
    Var e0i = tape.constant(Tensor::full({2, 3}, 7.0));
    auto layers = propagate(tape, csr, const_weights(tape, 3, 0.0), const_weights(tape, 3, 0.0),
                            e0u, e0i, 3);
    for (std::size_t l = 1; l <= 3; ++l) {
        for (double v : tape.value(layers[l].first).values()) CHECK(v == 0.0);
        for (double v : tape.value(layers[l].second).values()) CHECK(v == 0.0);
    }
}

TEST_CASE("two-hop propagation over a path matches the hand expansion") {
    // users u=0 and v=1 both connect to item 0
    TrainCsr csr = csr_from(2, 1, {{0, 0}, {1, 0}});
    Tape tape;
    Var e0u = tape.constant(Tensor::matrix(2, 1, {3.0, 11.0}));
    Var e0i = tape.constant(Tensor::matrix(1, 1, {100.0}));
    auto layers = propagate(tape, csr, const_weights(tape, 2, 1.0), const_weights(tape, 2, 1.0),
                            e0u, e0i, 2);
    // e1_i = e0_u + e0_v = 14; e2_u = e1_i = e0_v + e0_u
    CHECK(tape.value(layers[2].first).at(0, 0) == 14.0);
    CHECK(tape.value(layers[2].first).at(1, 0) == 14.0);
}

TEST_CASE("propagate is linear in the embeddings") {
    Rng rng(83);
    TrainCsr csr = csr_from(3, 4, {{0, 0}, {0, 2}, {1, 1}, {1, 3}, {2, 0}, {2, 3}});
    Tensor eu({3, 4}), ei({4, 4}), w({6});
    for (std::size_t i = 0; i < eu.numel(); ++i) eu[i] = rng.uniform(-1, 1);
    for (std::size_t i = 0; i < ei.numel(); ++i) ei[i] = rng.uniform(-1, 1);
    for (std::size_t i = 0; i < w.numel(); ++i) w[i] = rng.uniform(0, 1);
    Tensor eu2 = eu, ei2 = ei;
    const double alpha = 3.25;
    for (std::size_t i = 0; i < eu2.numel(); ++i) eu2[i] *= alpha;
    for (std::size_t i = 0; i < ei2.numel(); ++i) ei2[i] *= alpha;

    Tape tape;
    auto l1 = propagate(tape, csr, tape.constant(w), tape.constant(w), tape.constant(eu),
                        tape.constant(ei), 2);
    auto l2 = propagate(tape, csr, tape.constant(w), tape.constant(w), tape.constant(eu2),
                        tape.constant(ei2), 2);
    const Tensor& a = tape.value(l1[2].first);
    const Tensor& b = tape.value(l2[2].first);
    for (std::size_t i = 0; i < a.numel(); ++i) {
        CHECK(b[i] == doctest::Approx(alpha * a[i]).epsilon(1e-10));
    }
}

TEST_CASE("layer-l embeddings depend only on the l-hop ball") {
    // user 0 - item 0 - user 1 - item 1; item 1 is 3 hops from user 0
    TrainCsr csr = csr_from(2, 2, {{0, 0}, {1, 0}, {1, 1}});
    Tape tape;
    Tensor eu = Tensor::matrix(2, 1, {1.0, 2.0});
    Tensor ei = Tensor::matrix(2, 1, {4.0, 8.0});
    Tensor ei_zeroed = ei;
    ei_zeroed.at(1, 0) = 0.0;  // outside the 2-hop ball of user 0

    auto run = [&](const Tensor& items) {
        Tape t;
        auto layers = propagate(t, csr, const_weights(t, 3, 1.0), const_weights(t, 3, 1.0),
                                t.constant(eu), t.constant(items), 2);
        return t.value(layers[2].first).at(0, 0);
    };
    CHECK(run(ei) == run(ei_zeroed));
}

TEST_CASE("propagate matches the dense brute-force oracle on random graphs") {
    Rng rng(89);
    for (int rep = 0; rep < 10; ++rep) {
        std::size_t nu = 2 + rng.uniform_int(8), ni = 2 + rng.uniform_int(8);
        std::size_t dim = 1 + rng.uniform_int(4);
        std::vector<Edge> edges;
        for (std::uint32_t u = 0; u < nu; ++u) {
            for (std::uint32_t i = 0; i < ni; ++i) {
                if (rng.uniform() < 0.4) edges.push_back({u, i});
            }
        }
        if (edges.empty()) edges.push_back({0, 0});
        TrainCsr csr = csr_from(nu, ni, edges);

        Tensor eu({nu, dim}), ei({ni, dim});
        for (std::size_t i = 0; i < eu.numel(); ++i) eu[i] = rng.uniform(-1, 1);
        for (std::size_t i = 0; i < ei.numel(); ++i) ei[i] = rng.uniform(-1, 1);

        oracles::DensePropagation oracle;
        oracle.num_users = nu;
        oracle.num_items = ni;
        oracle.dim = dim;
        oracle.wu.assign(nu, std::vector<double>(ni, 0.0));
        oracle.wi.assign(ni, std::vector<double>(nu, 0.0));
        for (const Edge& e : edges) {
            oracle.wu[e.user][e.item] = 1.0;
            oracle.wi[e.item][e.user] = 1.0;
        }
        std::size_t layers = 1 + rng.uniform_int(3);
        auto [ou, oi] = oracle.run(eu.values(), ei.values(), layers);

        Tape tape;
        auto got = propagate(tape, csr, const_weights(tape, csr.num_edges, 1.0),
                             const_weights(tape, csr.num_edges, 1.0), tape.constant(eu),
                             tape.constant(ei), layers);
        const Tensor& gu = tape.value(got[layers].first);
        const Tensor& gi = tape.value(got[layers].second);
        for (std::size_t i = 0; i < gu.numel(); ++i) {
            CHECK(gu[i] == doctest::Approx(ou[i]).epsilon(1e-10));
        }
        for (std::size_t i = 0; i < gi.numel(); ++i) {
            CHECK(gi[i] == doctest::Approx(oi[i]).epsilon(1e-10));
        }
    }
}

TEST_CASE("propagate rejects weight vectors that do not cover the edges") {
    TrainCsr csr = csr_from(2, 2, {{0, 0}, {0, 1}, {1, 1}});
    Tape tape;
    Var e0u = tape.constant(Tensor({2, 2}));
    Var e0i = tape.constant(Tensor({2, 2}));
    try {
        propagate(tape, csr, const_weights(tape, 2, 1.0), const_weights(tape, 3, 1.0), e0u,
                  e0i, 1);
        FAIL("expected ValidationError");
    } catch (const ValidationError& e) {
        CHECK(std::string(e.what()).find("(1,1)") != std::string::npos);
    }
}

TEST_CASE("combine_layers sums across layers") {
    Tape tape;
    Var a = tape.constant(Tensor::matrix(2, 2, {1, 2, 3, 4}));
    Var zero = tape.constant(Tensor({2, 2}));
    CHECK(tape.value(combine_layers(tape, {a})).values() == std::vector<double>{1, 2, 3, 4});
    CHECK(tape.value(combine_layers(tape, {a, zero})).values() ==
          std::vector<double>{1, 2, 3, 4});

    Rng rng(97);
    Tensor x({2, 2}), y({2, 2}), z({2, 2});
    for (std::size_t i = 0; i < 4; ++i) {
        x[i] = rng.uniform(-1, 1);
        y[i] = rng.uniform(-1, 1);
        z[i] = rng.uniform(-1, 1);
    }
    Tensor s = tape.value(
        combine_layers(tape, {tape.constant(x), tape.constant(y), tape.constant(z)}));
    for (std::size_t i = 0; i < 4; ++i) {
        CHECK(s[i] == doctest::Approx(x[i] + y[i] + z[i]).epsilon(1e-12));
    }
}

TEST_CASE("assemble_representation widths per variant") {
    Tape tape;
    std::size_t d = 64, dp = 64;
    Var e = tape.constant(Tensor({3, d}));
    std::vector<Var> parts3{tape.constant(Tensor({3, dp})), tape.constant(Tensor({3, dp})),
                            tape.constant(Tensor({3, dp}))};
    std::vector<Modality> order3{Modality::visual, Modality::acoustic, Modality::textual};

    CHECK(tape.value(assemble_representation(tape, e, parts3, order3, order3, true)).cols() ==
          d);
    CHECK(tape.value(assemble_representation(tape, e, parts3, order3, order3, false)).cols() ==
          256);

    std::vector<Var> parts1{tape.constant(Tensor({3, dp}))};
    std::vector<Modality> order1{Modality::visual};
    CHECK(tape.value(assemble_representation(tape, e, parts1, order1, order1, false)).cols() ==
          d + dp);

    std::vector<Modality> wrong{Modality::acoustic};
    CHECK_THROWS_AS(assemble_representation(tape, e, parts1, wrong, order1, false),
                    ValidationError);
}

TEST_CASE("score is the inner product and is symmetric") {
    Tape tape;
    Var a = tape.constant(Tensor::vector({1.0, 0.0}));
    Var b = tape.constant(Tensor::vector({0.0, 1.0}));
    CHECK(tape.value(score(tape, a, b))[0] == 0.0);

    Var u = tape.constant(Tensor::vector({0.6, 0.8}));
    CHECK(tape.value(score(tape, u, u))[0] == doctest::Approx(1.0));

    Var x = tape.constant(Tensor::vector({1.0, 2.0}));
    Var y = tape.constant(Tensor::vector({3.0, -1.0}));
    CHECK(tape.value(score(tape, x, y))[0] == doctest::Approx(1.0));
    CHECK(tape.value(score(tape, y, x))[0] == tape.value(score(tape, x, y))[0]);

    Var bad = tape.constant(Tensor::vector({1.0, 2.0, 3.0}));
    CHECK_THROWS_AS(score(tape, x, bad), ShapeError);
}

TEST_CASE("uniform baseline weights are inverse degrees") {
    TrainCsr csr = csr_from(2, 3, {{0, 0}, {0, 1}, {1, 0}});
    auto [wu, wi] = uniform_edge_weights(csr);
    CHECK(wu[0] == doctest::Approx(0.5));  // user 0 degree 2
    CHECK(wu[1] == doctest::Approx(0.5));
    CHECK(wu[2] == doctest::Approx(1.0));  // user 1 degree 1
    CHECK(wi[0] == doctest::Approx(0.5));  // item 0 degree 2
}
