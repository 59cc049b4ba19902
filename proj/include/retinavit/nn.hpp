#pragma once

#include <cstdint>

#include "retinavit/mat.hpp"

namespace retinavit {

// Dense kernels. Weight matrices are out_dim x in_dim; activations are
// tokens x features. Backward kernels accumulate into the gradient
// arguments so per-batch sums fall out of repeated calls.

// y = x * w^T + b
void linear_forward(const Mat& x, const Mat& w, const Mat& b, Mat& y);

// dx = dy * w ; dw += dy^T * x ; db += column sums of dy. dx may be null.
void linear_backward(const Mat& x, const Mat& w, const Mat& dy,
                     Mat* dx, Mat& dw, Mat& db);

constexpr double kLayerNormEps = 1e-6;

// Per-row layer norm; mean/rstd are 1 x rows caches for backward.
void layernorm_forward(const Mat& x, const Mat& scale, const Mat& shift,
                       Mat& y, Mat& mean, Mat& rstd);
void layernorm_backward(const Mat& x, const Mat& scale, const Mat& mean,
                        const Mat& rstd, const Mat& dy,
                        Mat& dx, Mat& dscale, Mat& dshift);

// Row-wise softmax with max subtraction, in place.
void softmax_rows(Mat& s);

// Exact GELU (erf form) and its derivative.
void gelu_forward(const Mat& x, Mat& y);
void gelu_backward(const Mat& x, const Mat& dy, Mat& dx);

// Deterministic 64-bit generator for parameter init and shuffling.
// splitmix64 seeded stream; normal variates via Box-Muller.
struct Rng {
    uint64_t state;
    explicit Rng(uint64_t seed) : state(seed) {}
    uint64_t next_u64();
    double next_unit();           // [0, 1)
    double next_normal();         // standard normal
    int next_int(int n);          // [0, n)

  private:
    bool have_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace retinavit
