#pragma once

#include <cassert>
#include <cstddef>
#include <vector>

namespace retinavit {

// Dense row-major matrix of doubles. Vectors are stored as 1 x n.
struct Mat {
    int rows = 0;
    int cols = 0;
    std::vector<double> a;

    Mat() = default;
    Mat(int r, int c) : rows(r), cols(c), a(static_cast<size_t>(r) * c, 0.0) {}

    double& operator()(int r, int c) {
        assert(r >= 0 && r < rows && c >= 0 && c < cols);
        return a[static_cast<size_t>(r) * cols + c];
    }
    double operator()(int r, int c) const {
        assert(r >= 0 && r < rows && c >= 0 && c < cols);
        return a[static_cast<size_t>(r) * cols + c];
    }

    double* row(int r) { return a.data() + static_cast<size_t>(r) * cols; }
    const double* row(int r) const { return a.data() + static_cast<size_t>(r) * cols; }

    size_t size() const { return a.size(); }
    void zero() { std::fill(a.begin(), a.end(), 0.0); }

    bool same_shape(const Mat& o) const { return rows == o.rows && cols == o.cols; }
};

bool all_finite(const Mat& m);

}  // namespace retinavit
