#pragma once

#include <cstdint>
#include <vector>

namespace slrkit {

/// Dense 2-D row-major tensor of doubles. Model math runs in 64-bit;
/// persisted formats (checkpoints, pose data) are 32-bit.
struct Tensor {
    int64_t rows = 0;
    int64_t cols = 0;
    std::vector<double> v;

    Tensor() = default;
    Tensor(int64_t r, int64_t c) : rows(r), cols(c), v(static_cast<size_t>(r * c), 0.0) {}

    static Tensor zeros(int64_t r, int64_t c) { return Tensor(r, c); }
    static Tensor full(int64_t r, int64_t c, double value) {
        Tensor t(r, c);
        std::fill(t.v.begin(), t.v.end(), value);
        return t;
    }
    static Tensor scalar(double value) {
        Tensor t(1, 1);
        t.v[0] = value;
        return t;
    }

    int64_t numel() const { return rows * cols; }
    double& at(int64_t r, int64_t c) { return v[static_cast<size_t>(r * cols + c)]; }
    double at(int64_t r, int64_t c) const { return v[static_cast<size_t>(r * cols + c)]; }
    bool same_shape(const Tensor& o) const { return rows == o.rows && cols == o.cols; }
    void zero() { std::fill(v.begin(), v.end(), 0.0); }
};

}  // namespace slrkit
