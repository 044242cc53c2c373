#include "grcn/kernels.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>

#if defined(_OPENMP)
#include <omp.h>
#endif

namespace grcn::kernels {

namespace {

std::atomic<int> g_thread_override{-1};

int env_thread_cap() {
    static int cap = [] {
        if (const char* s = std::getenv("GRCN_THREADS")) {
            int v = std::atoi(s);
            if (v > 0) return v;
        }
        return 0;
    }();
    return cap;
}

}  // namespace

int effective_threads() {
#if defined(_OPENMP)
    int cap = g_thread_override.load();
    if (cap < 0) cap = env_thread_cap();
    int base = omp_get_max_threads();
    if (cap > 0 && cap < base) return cap;
    return base;
#else
    return 1;
#endif
}

void set_thread_cap(int cap) { g_thread_override.store(cap < 0 ? -1 : cap); }

namespace ref {

void matmul(const double* a, const double* b, double* out,
            std::size_t r, std::size_t k, std::size_t c) {
    for (std::size_t i = 0; i < r; ++i) {
        for (std::size_t j = 0; j < c; ++j) {
            double acc = 0.0;
            for (std::size_t t = 0; t < k; ++t) acc += a[i * k + t] * b[t * c + j];
            out[i * c + j] = acc;
        }
    }
}

void matmul_nt(const double* a, const double* b, double* out,
               std::size_t r, std::size_t k, std::size_t c) {
    for (std::size_t i = 0; i < r; ++i) {
        for (std::size_t j = 0; j < c; ++j) {
            double acc = 0.0;
            for (std::size_t t = 0; t < k; ++t) acc += a[i * k + t] * b[j * k + t];
            out[i * c + j] = acc;
        }
    }
}

void matmul_tn(const double* a, const double* b, double* out,
               std::size_t r, std::size_t k, std::size_t c) {
    for (std::size_t i = 0; i < r; ++i) {
        for (std::size_t j = 0; j < c; ++j) {
            double acc = 0.0;
            for (std::size_t t = 0; t < k; ++t) acc += a[t * r + i] * b[t * c + j];
            out[i * c + j] = acc;
        }
    }
}

void edge_dot(const double* a, const double* b,
              const std::uint32_t* ia, const std::uint32_t* ib,
              double* out, std::size_t count, std::size_t d) {
    for (std::size_t e = 0; e < count; ++e) {
        const double* ra = a + static_cast<std::size_t>(ia[e]) * d;
        const double* rb = b + static_cast<std::size_t>(ib[e]) * d;
        double acc = 0.0;
        for (std::size_t t = 0; t < d; ++t) acc += ra[t] * rb[t];
        out[e] = acc;
    }
}

void segment_softmax(const double* x, const std::size_t* offsets,
                     std::size_t num_segments, double* out) {
    for (std::size_t s = 0; s < num_segments; ++s) {
        std::size_t lo = offsets[s], hi = offsets[s + 1];
        if (hi == lo) continue;
        double mx = x[lo];
        for (std::size_t e = lo + 1; e < hi; ++e) mx = std::max(mx, x[e]);
        double sum = 0.0;
        for (std::size_t e = lo; e < hi; ++e) {
            out[e] = std::exp(x[e] - mx);
            sum += out[e];
        }
        for (std::size_t e = lo; e < hi; ++e) out[e] /= sum;
    }
}

void segment_weighted_rows(const double* rows, const double* w,
                           const std::uint32_t* row_idx, const std::size_t* offsets,
                           std::size_t num_segments, std::size_t d, double* out) {
    for (std::size_t s = 0; s < num_segments; ++s) {
        double* dst = out + s * d;
        for (std::size_t t = 0; t < d; ++t) dst[t] = 0.0;
        for (std::size_t e = offsets[s]; e < offsets[s + 1]; ++e) {
            const double* src = rows + static_cast<std::size_t>(row_idx[e]) * d;
            double we = w[e];
            for (std::size_t t = 0; t < d; ++t) dst[t] += we * src[t];
        }
    }
}

}  // namespace ref

void matmul(const double* a, const double* b, double* out,
            std::size_t r, std::size_t k, std::size_t c) {
    const int nt = effective_threads();
#pragma omp parallel for num_threads(nt) schedule(static) if (r > 1 && r * k * c > 16384)
    for (long long i = 0; i < static_cast<long long>(r); ++i) {
        for (std::size_t j = 0; j < c; ++j) {
            double acc = 0.0;
            for (std::size_t t = 0; t < k; ++t) acc += a[i * k + t] * b[t * c + j];
            out[i * c + j] = acc;
        }
    }
}

void matmul_nt(const double* a, const double* b, double* out,
               std::size_t r, std::size_t k, std::size_t c) {
    const int nt = effective_threads();
#pragma omp parallel for num_threads(nt) schedule(static) if (r > 1 && r * k * c > 16384)
    for (long long i = 0; i < static_cast<long long>(r); ++i) {
        for (std::size_t j = 0; j < c; ++j) {
            double acc = 0.0;
            for (std::size_t t = 0; t < k; ++t) acc += a[i * k + t] * b[j * k + t];
            out[i * c + j] = acc;
        }
    }
}

void matmul_tn(const double* a, const double* b, double* out,
               std::size_t r, std::size_t k, std::size_t c) {
    const int nt = effective_threads();
#pragma omp parallel for num_threads(nt) schedule(static) if (r > 1 && r * k * c > 16384)
    for (long long i = 0; i < static_cast<long long>(r); ++i) {
        for (std::size_t j = 0; j < c; ++j) {
            double acc = 0.0;
            for (std::size_t t = 0; t < k; ++t) acc += a[t * r + i] * b[t * c + j];
            out[i * c + j] = acc;
        }
    }
}

void edge_dot(const double* a, const double* b,
              const std::uint32_t* ia, const std::uint32_t* ib,
              double* out, std::size_t count, std::size_t d) {
    const int nt = effective_threads();
#pragma omp parallel for num_threads(nt) schedule(static) if (count* d > 16384)
    for (long long e = 0; e < static_cast<long long>(count); ++e) {
        const double* ra = a + static_cast<std::size_t>(ia[e]) * d;
        const double* rb = b + static_cast<std::size_t>(ib[e]) * d;
        double acc = 0.0;
        for (std::size_t t = 0; t < d; ++t) acc += ra[t] * rb[t];
        out[e] = acc;
    }
}

void segment_softmax(const double* x, const std::size_t* offsets,
                     std::size_t num_segments, double* out) {
    const int nt = effective_threads();
#pragma omp parallel for num_threads(nt) schedule(static) if (num_segments > 64)
    for (long long s = 0; s < static_cast<long long>(num_segments); ++s) {
        std::size_t lo = offsets[s], hi = offsets[s + 1];
        if (hi == lo) continue;
        double mx = x[lo];
        for (std::size_t e = lo + 1; e < hi; ++e) mx = std::max(mx, x[e]);
        double sum = 0.0;
        for (std::size_t e = lo; e < hi; ++e) {
            out[e] = std::exp(x[e] - mx);
            sum += out[e];
        }
        for (std::size_t e = lo; e < hi; ++e) out[e] /= sum;
    }
}

void segment_weighted_rows(const double* rows, const double* w,
                           const std::uint32_t* row_idx, const std::size_t* offsets,
                           std::size_t num_segments, std::size_t d, double* out) {
    const int nt = effective_threads();
#pragma omp parallel for num_threads(nt) schedule(static) if (num_segments > 16)
    for (long long s = 0; s < static_cast<long long>(num_segments); ++s) {
        double* dst = out + s * d;
        for (std::size_t t = 0; t < d; ++t) dst[t] = 0.0;
        for (std::size_t e = offsets[s]; e < offsets[s + 1]; ++e) {
            const double* src = rows + static_cast<std::size_t>(row_idx[e]) * d;
            double we = w[e];
            for (std::size_t t = 0; t < d; ++t) dst[t] += we * src[t];
        }
    }
}

}  // namespace grcn::kernels
