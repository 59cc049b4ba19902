#include "retinavit/nn.hpp"

#include <algorithm>
#include <cmath>

namespace retinavit {

void linear_forward(const Mat& x, const Mat& w, const Mat& b, Mat& y) {
    const int n = x.rows, in = x.cols, out = w.rows;
    assert(w.cols == in && b.cols == out);
    if (y.rows != n || y.cols != out) y = Mat(n, out);
    // Row-axpy over a transposed weight copy: the inner loop is a
    // contiguous multiply-add stream, which vectorises without relaxing
    // IEEE semantics (a plain dot product would be a serial reduction).
    Mat wt(in, out);
    for (int o = 0; o < out; ++o) {
        const double* __restrict__ wo = w.row(o);
        for (int k = 0; k < in; ++k) wt(k, o) = wo[k];
    }
    for (int i = 0; i < n; ++i) {
        const double* __restrict__ xi = x.row(i);
        double* __restrict__ yi = y.row(i);
        for (int o = 0; o < out; ++o) yi[o] = b.a[static_cast<size_t>(o)];
        for (int k = 0; k < in; ++k) {
            const double v = xi[k];
            const double* __restrict__ wk = wt.row(k);
            for (int o = 0; o < out; ++o) yi[o] += v * wk[o];
        }
    }
}

void linear_backward(const Mat& x, const Mat& w, const Mat& dy,
                     Mat* dx, Mat& dw, Mat& db) {
    const int n = x.rows, in = x.cols, out = w.rows;
    assert(dy.rows == n && dy.cols == out);
    assert(dw.rows == out && dw.cols == in && db.cols == out);
    if (dx != nullptr) {
        if (dx->rows != n || dx->cols != in) *dx = Mat(n, in);
        dx->zero();
        for (int i = 0; i < n; ++i) {
            const double* __restrict__ dyi = dy.row(i);
            double* __restrict__ dxi = dx->row(i);
            for (int o = 0; o < out; ++o) {
                const double g = dyi[o];
                const double* __restrict__ wo = w.row(o);
                for (int k = 0; k < in; ++k) dxi[k] += g * wo[k];
            }
        }
    }
    for (int i = 0; i < n; ++i) {
        const double* __restrict__ dyi = dy.row(i);
        const double* __restrict__ xi = x.row(i);
        for (int o = 0; o < out; ++o) {
            const double g = dyi[o];
            db.a[static_cast<size_t>(o)] += g;
            double* __restrict__ dwo = dw.row(o);
            for (int k = 0; k < in; ++k) dwo[k] += g * xi[k];
        }
    }
}

void layernorm_forward(const Mat& x, const Mat& scale, const Mat& shift,
                       Mat& y, Mat& mean, Mat& rstd) {
    const int n = x.rows, d = x.cols;
    if (y.rows != n || y.cols != d) y = Mat(n, d);
    if (mean.cols != n) mean = Mat(1, n);
    if (rstd.cols != n) rstd = Mat(1, n);
    for (int i = 0; i < n; ++i) {
        const double* __restrict__ xi = x.row(i);
        double mu = 0.0;
        for (int k = 0; k < d; ++k) mu += xi[k];
        mu /= d;
        double var = 0.0;
        for (int k = 0; k < d; ++k) {
            const double c = xi[k] - mu;
            var += c * c;
        }
        var /= d;
        const double rs = 1.0 / std::sqrt(var + kLayerNormEps);
        mean.a[static_cast<size_t>(i)] = mu;
        rstd.a[static_cast<size_t>(i)] = rs;
        double* __restrict__ yi = y.row(i);
        for (int k = 0; k < d; ++k) {
            yi[k] = (xi[k] - mu) * rs * scale.a[static_cast<size_t>(k)] +
                    shift.a[static_cast<size_t>(k)];
        }
    }
}

void layernorm_backward(const Mat& x, const Mat& scale, const Mat& mean,
                        const Mat& rstd, const Mat& dy,
                        Mat& dx, Mat& dscale, Mat& dshift) {
    const int n = x.rows, d = x.cols;
    if (dx.rows != n || dx.cols != d) dx = Mat(n, d);
    for (int i = 0; i < n; ++i) {
        const double* __restrict__ xi = x.row(i);
        const double* __restrict__ dyi = dy.row(i);
        double* __restrict__ dxi = dx.row(i);
        const double mu = mean.a[static_cast<size_t>(i)];
        const double rs = rstd.a[static_cast<size_t>(i)];
        // dxhat = dy * scale; dx = rs*(dxhat - mean(dxhat) - xhat*mean(dxhat*xhat))
        double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
        for (int k = 0; k < d; ++k) {
            const double xhat = (xi[k] - mu) * rs;
            const double dxhat = dyi[k] * scale.a[static_cast<size_t>(k)];
            sum_dxhat += dxhat;
            sum_dxhat_xhat += dxhat * xhat;
            dscale.a[static_cast<size_t>(k)] += dyi[k] * xhat;
            dshift.a[static_cast<size_t>(k)] += dyi[k];
        }
        const double m1 = sum_dxhat / d;
        const double m2 = sum_dxhat_xhat / d;
        for (int k = 0; k < d; ++k) {
            const double xhat = (xi[k] - mu) * rs;
            const double dxhat = dyi[k] * scale.a[static_cast<size_t>(k)];
            dxi[k] = rs * (dxhat - m1 - xhat * m2);
        }
    }
}

void softmax_rows(Mat& s) {
    const int n = s.rows, d = s.cols;
    for (int i = 0; i < n; ++i) {
        double* __restrict__ si = s.row(i);
        double mx = si[0];
        for (int k = 1; k < d; ++k) mx = std::max(mx, si[k]);
        double sum = 0.0;
        for (int k = 0; k < d; ++k) {
            si[k] = std::exp(si[k] - mx);
            sum += si[k];
        }
        const double inv = 1.0 / sum;
        for (int k = 0; k < d; ++k) si[k] *= inv;
    }
}

namespace {
constexpr double kInvSqrt2 = 0.7071067811865475244;
constexpr double kInvSqrt2Pi = 0.3989422804014326779;
}  // namespace

void gelu_forward(const Mat& x, Mat& y) {
    if (!y.same_shape(x)) y = Mat(x.rows, x.cols);
    for (size_t i = 0; i < x.a.size(); ++i) {
        const double v = x.a[i];
        y.a[i] = 0.5 * v * (1.0 + std::erf(v * kInvSqrt2));
    }
}

void gelu_backward(const Mat& x, const Mat& dy, Mat& dx) {
    if (!dx.same_shape(x)) dx = Mat(x.rows, x.cols);
    for (size_t i = 0; i < x.a.size(); ++i) {
        const double v = x.a[i];
        const double cdf = 0.5 * (1.0 + std::erf(v * kInvSqrt2));
        const double pdf = kInvSqrt2Pi * std::exp(-0.5 * v * v);
        dx.a[i] = dy.a[i] * (cdf + v * pdf);
    }
}

uint64_t Rng::next_u64() {
    // splitmix64
    state += 0x9E3779B97F4A7C15ull;
    uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

double Rng::next_unit() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::next_normal() {
    if (have_spare_) {
        have_spare_ = false;
        return spare_;
    }
    double u, v, s;
    do {
        u = 2.0 * next_unit() - 1.0;
        v = 2.0 * next_unit() - 1.0;
        s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double f = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * f;
    have_spare_ = true;
    return u * f;
}

int Rng::next_int(int n) {
    return static_cast<int>(next_u64() % static_cast<uint64_t>(n));
}

}  // namespace retinavit
