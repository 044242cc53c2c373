#pragma once

#include <cstddef>
#include <cstdint>

namespace grcn::kernels {

// Effective thread count: GRCN_THREADS caps it when set, otherwise the
// OpenMP default. Returns 1 when built without OpenMP.
int effective_threads();

// Override the GRCN_THREADS cap programmatically (bench/tests). 0 lifts the
// cap; a negative value restores the environment-derived one.
void set_thread_cap(int cap);

// OpenMP-parallel kernels. Each output element is produced by exactly one
// thread with a fixed-order inner loop, so results are bit-identical to the
// serial references below regardless of thread count.

// out[r x c] = a[r x k] * b[k x c]
void matmul(const double* a, const double* b, double* out,
            std::size_t r, std::size_t k, std::size_t c);

// out[r x c] = a[r x k] * b[c x k]^T
void matmul_nt(const double* a, const double* b, double* out,
               std::size_t r, std::size_t k, std::size_t c);

// out[r x c] = a[k x r]^T * b[k x c]
void matmul_tn(const double* a, const double* b, double* out,
               std::size_t r, std::size_t k, std::size_t c);

// out[e] = dot(a[ia[e]], b[ib[e]]) over rows of dimension d
void edge_dot(const double* a, const double* b,
              const std::uint32_t* ia, const std::uint32_t* ib,
              double* out, std::size_t count, std::size_t d);

// Softmax within each [offsets[s], offsets[s+1]) range, max-subtracted.
// Empty segments are allowed and produce no output elements.
void segment_softmax(const double* x, const std::size_t* offsets,
                     std::size_t num_segments, double* out);

// out[s] = sum_{e in segment s} w[e] * rows[row_idx[e]], rows of dimension d
void segment_weighted_rows(const double* rows, const double* w,
                           const std::uint32_t* row_idx, const std::size_t* offsets,
                           std::size_t num_segments, std::size_t d, double* out);

// Serial reference implementations, kept for testing and benchmarking.
namespace ref {

void matmul(const double* a, const double* b, double* out,
            std::size_t r, std::size_t k, std::size_t c);
void matmul_nt(const double* a, const double* b, double* out,
               std::size_t r, std::size_t k, std::size_t c);
void matmul_tn(const double* a, const double* b, double* out,
               std::size_t r, std::size_t k, std::size_t c);
void edge_dot(const double* a, const double* b,
              const std::uint32_t* ia, const std::uint32_t* ib,
              double* out, std::size_t count, std::size_t d);
void segment_softmax(const double* x, const std::size_t* offsets,
                     std::size_t num_segments, double* out);
void segment_weighted_rows(const double* rows, const double* w,
                           const std::uint32_t* row_idx, const std::size_t* offsets,
                           std::size_t num_segments, std::size_t d, double* out);

}  // namespace ref

}  // namespace grcn::kernels
