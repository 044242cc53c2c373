// Benchmark of the OpenMP kernels against their serial references.
// Usage: grcn_bench [threads]; GRCN_THREADS also applies.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <vector>

#include "grcn/kernels.hpp"
#include "grcn/rng.hpp"

using namespace grcn;
using clock_type = std::chrono::steady_clock;

namespace {

double time_of(const std::function<void()>& fn, int reps) {
    fn();  // warm up
    auto t0 = clock_type::now();
    for (int r = 0; r < reps; ++r) fn();
    auto t1 = clock_type::now();
    return std::chrono::duration<double>(t1 - t0).count() / reps;
}

void report(const char* name, double serial, double parallel) {
    std::printf("%-24s serial %9.3f ms   parallel %9.3f ms   speedup %5.2fx\n", name,
                serial * 1e3, parallel * 1e3, serial / parallel);
}

}  // namespace

int main(int argc, char** argv) {
    if (argc > 1) kernels::set_thread_cap(std::atoi(argv[1]));
    std::printf("threads: %d\n", kernels::effective_threads());

    Rng rng(42);
    auto fill = [&](std::vector<double>& v) {
        for (double& x : v) x = rng.uniform(-1.0, 1.0);
    };

    {
        std::size_t r = 384, k = 384, c = 384;
        std::vector<double> a(r * k), b(k * c), out(r * c);
        fill(a);
        fill(b);
        double ts = time_of([&] { kernels::ref::matmul(a.data(), b.data(), out.data(), r, k, c); }, 3);
        double tp = time_of([&] { kernels::matmul(a.data(), b.data(), out.data(), r, k, c); }, 3);
        report("matmul 384^3", ts, tp);
    }
    {
        std::size_t rows = 4096, d = 128, edges = 400000;
        std::vector<double> a(rows * d), b(rows * d), out(edges);
        fill(a);
        fill(b);
        std::vector<std::uint32_t> ia(edges), ib(edges);
        for (std::size_t e = 0; e < edges; ++e) {
            ia[e] = static_cast<std::uint32_t>(rng.uniform_int(rows));
            ib[e] = static_cast<std::uint32_t>(rng.uniform_int(rows));
        }
        double ts = time_of(
            [&] { kernels::ref::edge_dot(a.data(), b.data(), ia.data(), ib.data(), out.data(), edges, d); },
            3);
        double tp = time_of(
            [&] { kernels::edge_dot(a.data(), b.data(), ia.data(), ib.data(), out.data(), edges, d); },
            3);
        report("edge_dot 400k x 128", ts, tp);
    }
    {
        std::size_t segs = 4096, per = 64, edges = segs * per, rows = 4096, d = 64;
        std::vector<std::size_t> offsets(segs + 1);
        for (std::size_t s = 0; s <= segs; ++s) offsets[s] = s * per;
        std::vector<double> x(edges), sm(edges), w(edges), agg(segs * d), rowsv(rows * d);
        fill(x);
        fill(w);
        fill(rowsv);
        std::vector<std::uint32_t> ridx(edges);
        for (auto& v : ridx) v = static_cast<std::uint32_t>(rng.uniform_int(rows));

        double ts = time_of(
            [&] { kernels::ref::segment_softmax(x.data(), offsets.data(), segs, sm.data()); }, 5);
        double tp = time_of(
            [&] { kernels::segment_softmax(x.data(), offsets.data(), segs, sm.data()); }, 5);
        report("segment_softmax 256k", ts, tp);

        ts = time_of(
            [&] {
                kernels::ref::segment_weighted_rows(rowsv.data(), w.data(), ridx.data(),
                                                    offsets.data(), segs, d, agg.data());
            },
            3);
        tp = time_of(
            [&] {
                kernels::segment_weighted_rows(rowsv.data(), w.data(), ridx.data(),
                                               offsets.data(), segs, d, agg.data());
            },
            3);
        report("weighted rows 256k x 64", ts, tp);
    }
    return 0;
}
