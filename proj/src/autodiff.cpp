#include "slrkit/autodiff.hpp"

#include "slrkit/common.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <memory>
#include <cmath>

namespace slrkit::nn {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<Mat>;
using CMatMap = Eigen::Map<const Mat>;

namespace {
MatMap emap(Tensor& t) { return MatMap(t.v.data(), t.rows, t.cols); }
CMatMap emap(const Tensor& t) { return CMatMap(t.v.data(), t.rows, t.cols); }
}  // namespace

Var Tape::push(Tensor value, bool needs, std::function<void(Tape&, Var)> back) {
    Node node;
    node.owned = std::move(value);
    node.requires_grad = needs;
    if (needs) node.back = std::move(back);
    nodes_.push_back(std::move(node));
    return Var{static_cast<int32_t>(nodes_.size() - 1)};
}

Var Tape::param(const Tensor* value, Tensor* grad_sink) {
    Node node;
    node.borrowed = value;
    node.grad_sink = grad_sink;
    node.requires_grad = grad_enabled_ && grad_sink != nullptr;
    nodes_.push_back(std::move(node));
    return Var{static_cast<int32_t>(nodes_.size() - 1)};
}

Var Tape::constant(Tensor value) { return push(std::move(value), false, nullptr); }

const Tensor& Tape::val(Var x) const {
    const Node& node = nodes_[static_cast<size_t>(x.id)];
    return node.borrowed ? *node.borrowed : node.owned;
}

const Tensor& Tape::grad(Var x) const {
    const Node& node = nodes_[static_cast<size_t>(x.id)];
    if (!node.grad_present) throw Error("autodiff: gradient not present for node");
    return node.gradbuf;
}

void Tape::accumulate(Var x, const Tensor& g) {
    Node& node = nodes_[static_cast<size_t>(x.id)];
    if (!node.requires_grad) return;
    if (!node.grad_present) {
        const Tensor& value = node.borrowed ? *node.borrowed : node.owned;
        node.gradbuf = Tensor::zeros(value.rows, value.cols);
        node.grad_present = true;
    }
    emap(node.gradbuf) += emap(g);
}

void Tape::backward(Var loss, double seed) {
    if (!grad_enabled_) throw Error("autodiff: backward on an inference-only tape");
    const Tensor& lv = val(loss);
    if (lv.numel() != 1) throw InvalidArgument("autodiff: backward requires a scalar loss");
    accumulate(loss, Tensor::scalar(seed));
    for (int32_t i = loss.id; i >= 0; --i) {
        Node& node = nodes_[static_cast<size_t>(i)];
        if (node.grad_present && node.back) node.back(*this, Var{i});
    }
    for (auto& node : nodes_) {
        if (node.grad_sink && node.grad_present) emap(*node.grad_sink) += emap(node.gradbuf);
    }
}

// ---------------------------------------------------------------------------
// elementwise / shape
// ---------------------------------------------------------------------------

Var Tape::add(Var a, Var b) {
    const Tensor &A = val(a), &B = val(b);
    if (!A.same_shape(B)) throw InvalidArgument("add: shape mismatch");
    Tensor out(A.rows, A.cols);
    emap(out) = emap(A) + emap(B);
    bool req = grad_enabled_ && (needs_grad(a) || needs_grad(b));
    return push(std::move(out), req, [a, b](Tape& t, Var self) {
        t.add_grad(a, t.grad(self));
        t.add_grad(b, t.grad(self));
    });
}

Var Tape::sub(Var a, Var b) {
    const Tensor &A = val(a), &B = val(b);
    if (!A.same_shape(B)) throw InvalidArgument("sub: shape mismatch");
    Tensor out(A.rows, A.cols);
    emap(out) = emap(A) - emap(B);
    bool req = grad_enabled_ && (needs_grad(a) || needs_grad(b));
    return push(std::move(out), req, [a, b](Tape& t, Var self) {
        t.add_grad(a, t.grad(self));
        Tensor gb = t.grad(self);
        emap(gb) = -emap(gb);
        t.add_grad(b, gb);
    });
}

Var Tape::mul(Var a, Var b) {
    const Tensor &A = val(a), &B = val(b);
    if (!A.same_shape(B)) throw InvalidArgument("mul: shape mismatch");
    Tensor out(A.rows, A.cols);
    emap(out) = emap(A).cwiseProduct(emap(B));
    bool req = grad_enabled_ && (needs_grad(a) || needs_grad(b));
    return push(std::move(out), req, [a, b](Tape& t, Var self) {
        const Tensor& g = t.grad(self);
        Tensor ga(g.rows, g.cols), gb(g.rows, g.cols);
        emap(ga) = emap(g).cwiseProduct(emap(t.val(b)));
        emap(gb) = emap(g).cwiseProduct(emap(t.val(a)));
        t.add_grad(a, ga);
        t.add_grad(b, gb);
    });
}

Var Tape::add_rowvec(Var a, Var row) {
    const Tensor &A = val(a), &R = val(row);
    if (R.rows != 1 || R.cols != A.cols) throw InvalidArgument("add_rowvec: shape mismatch");
    Tensor out(A.rows, A.cols);
    emap(out) = emap(A).rowwise() + emap(R).row(0);
    bool req = grad_enabled_ && (needs_grad(a) || needs_grad(row));
    return push(std::move(out), req, [a, row](Tape& t, Var self) {
        const Tensor& g = t.grad(self);
        t.add_grad(a, g);
        Tensor gr(1, g.cols);
        emap(gr).row(0) = emap(g).colwise().sum();
        t.add_grad(row, gr);
    });
}

Var Tape::scale(Var a, double c) {
    const Tensor& A = val(a);
    Tensor out(A.rows, A.cols);
    emap(out) = emap(A) * c;
    bool req = grad_enabled_ && needs_grad(a);
    return push(std::move(out), req, [a, c](Tape& t, Var self) {
        Tensor g = t.grad(self);
        emap(g) *= c;
        t.add_grad(a, g);
    });
}

Var Tape::mul_const(Var a, const Tensor& c) {
    const Tensor& A = val(a);
    if (!A.same_shape(c)) throw InvalidArgument("mul_const: shape mismatch");
    Tensor out(A.rows, A.cols);
    emap(out) = emap(A).cwiseProduct(emap(c));
    bool req = grad_enabled_ && needs_grad(a);
    return push(std::move(out), req, [a, c](Tape& t, Var self) {
        Tensor g = t.grad(self);
        emap(g) = emap(g).cwiseProduct(emap(c));
        t.add_grad(a, g);
    });
}

Var Tape::scale_rows_const(Var a, std::vector<double> row_factors) {
    const Tensor& A = val(a);
    if (static_cast<int64_t>(row_factors.size()) != A.rows)
        throw InvalidArgument("scale_rows_const: factor count mismatch");
    Tensor out(A.rows, A.cols);
    for (int64_t r = 0; r < A.rows; ++r)
        for (int64_t c = 0; c < A.cols; ++c) out.at(r, c) = A.at(r, c) * row_factors[static_cast<size_t>(r)];
    bool req = grad_enabled_ && needs_grad(a);
    return push(std::move(out), req, [a, f = std::move(row_factors)](Tape& t, Var self) {
        Tensor g = t.grad(self);
        for (int64_t r = 0; r < g.rows; ++r)
            for (int64_t c = 0; c < g.cols; ++c) g.at(r, c) *= f[static_cast<size_t>(r)];
        t.add_grad(a, g);
    });
}

Var Tape::broadcast_row(Var row, int64_t n) {
    const Tensor& R = val(row);
    if (R.rows != 1) throw InvalidArgument("broadcast_row: input must be [1,C]");
    Tensor out(n, R.cols);
    for (int64_t r = 0; r < n; ++r)
        for (int64_t c = 0; c < R.cols; ++c) out.at(r, c) = R.at(0, c);
    bool req = grad_enabled_ && needs_grad(row);
    return push(std::move(out), req, [row](Tape& t, Var self) {
        const Tensor& g = t.grad(self);
        Tensor gr(1, g.cols);
        emap(gr).row(0) = emap(g).colwise().sum();
        t.add_grad(row, gr);
    });
}

Var Tape::transpose(Var a) {
    const Tensor& A = val(a);
    Tensor out(A.cols, A.rows);
    emap(out) = emap(A).transpose();
    bool req = grad_enabled_ && needs_grad(a);
    return push(std::move(out), req, [a](Tape& t, Var self) {
        const Tensor& g = t.grad(self);
        Tensor ga(g.cols, g.rows);
        emap(ga) = emap(g).transpose();
        t.add_grad(a, ga);
    });
}

Var Tape::concat_rows(const std::vector<Var>& parts) {
    if (parts.empty()) throw InvalidArgument("concat_rows: no parts");
    int64_t cols = val(parts[0]).cols, rows = 0;
    for (Var p : parts) {
        if (val(p).cols != cols) throw InvalidArgument("concat_rows: column mismatch");
        rows += val(p).rows;
    }
    Tensor out(rows, cols);
    std::vector<int64_t> offsets;
    int64_t r = 0;
    for (Var p : parts) {
        offsets.push_back(r);
        const Tensor& P = val(p);
        std::copy(P.v.begin(), P.v.end(), out.v.begin() + r * cols);
        r += P.rows;
    }
    bool req = false;
    for (Var p : parts) req = req || needs_grad(p);
    req = req && grad_enabled_;
    return push(std::move(out), req, [parts, offsets](Tape& t, Var self) {
        const Tensor& g = t.grad(self);
        for (size_t i = 0; i < parts.size(); ++i) {
            const Tensor& P = t.val(parts[i]);
            Tensor gp(P.rows, P.cols);
            std::copy(g.v.begin() + offsets[i] * g.cols,
                      g.v.begin() + (offsets[i] + P.rows) * g.cols, gp.v.begin());
            t.add_grad(parts[i], gp);
        }
    });
}

Var Tape::concat_cols(Var a, Var b) {
    const Tensor &A = val(a), &B = val(b);
    if (A.rows != B.rows) throw InvalidArgument("concat_cols: row mismatch");
    Tensor out(A.rows, A.cols + B.cols);
    emap(out).leftCols(A.cols) = emap(A);
    emap(out).rightCols(B.cols) = emap(B);
    bool req = grad_enabled_ && (needs_grad(a) || needs_grad(b));
    int64_t acols = A.cols, bcols = B.cols;
    return push(std::move(out), req, [a, b, acols, bcols](Tape& t, Var self) {
        const Tensor& g = t.grad(self);
        Tensor ga(g.rows, acols), gb(g.rows, bcols);
        emap(ga) = emap(g).leftCols(acols);
        emap(gb) = emap(g).rightCols(bcols);
        t.add_grad(a, ga);
        t.add_grad(b, gb);
    });
}

Var Tape::slice_rows(Var a, int64_t r0, int64_t r1) {
    const Tensor& A = val(a);
    if (r0 < 0 || r1 > A.rows || r0 >= r1) throw InvalidArgument("slice_rows: bad range");
    Tensor out(r1 - r0, A.cols);
    emap(out) = emap(A).middleRows(r0, r1 - r0);
    bool req = grad_enabled_ && needs_grad(a);
    return push(std::move(out), req, [a, r0](Tape& t, Var self) {
        const Tensor& g = t.grad(self);
        const Tensor& A2 = t.val(a);
        Tensor ga = Tensor::zeros(A2.rows, A2.cols);
        emap(ga).middleRows(r0, g.rows) = emap(g);
        t.add_grad(a, ga);
    });
}

Var Tape::slice_cols(Var a, int64_t c0, int64_t c1) {
    const Tensor& A = val(a);
    if (c0 < 0 || c1 > A.cols || c0 >= c1) throw InvalidArgument("slice_cols: bad range");
    Tensor out(A.rows, c1 - c0);
    emap(out) = emap(A).middleCols(c0, c1 - c0);
    bool req = grad_enabled_ && needs_grad(a);
    return push(std::move(out), req, [a, c0](Tape& t, Var self) {
        const Tensor& g = t.grad(self);
        const Tensor& A2 = t.val(a);
        Tensor ga = Tensor::zeros(A2.rows, A2.cols);
        emap(ga).middleCols(c0, g.cols) = emap(g);
        t.add_grad(a, ga);
    });
}

Var Tape::reverse_rows(Var a) {
    const Tensor& A = val(a);
    Tensor out(A.rows, A.cols);
    for (int64_t r = 0; r < A.rows; ++r)
        std::copy(A.v.begin() + (A.rows - 1 - r) * A.cols, A.v.begin() + (A.rows - r) * A.cols,
                  out.v.begin() + r * A.cols);
    bool req = grad_enabled_ && needs_grad(a);
    return push(std::move(out), req, [a](Tape& t, Var self) {
        const Tensor& g = t.grad(self);
        Tensor ga(g.rows, g.cols);
        for (int64_t r = 0; r < g.rows; ++r)
            std::copy(g.v.begin() + (g.rows - 1 - r) * g.cols, g.v.begin() + (g.rows - r) * g.cols,
                      ga.v.begin() + r * g.cols);
        t.add_grad(a, ga);
    });
}

// ---------------------------------------------------------------------------
// dense algebra
// ---------------------------------------------------------------------------

Var Tape::matmul(Var a, Var b) {
    const Tensor &A = val(a), &B = val(b);
    if (A.cols != B.rows) throw InvalidArgument("matmul: inner dimension mismatch");
    Tensor out(A.rows, B.cols);
    emap(out).noalias() = emap(A) * emap(B);
    bool req = grad_enabled_ && (needs_grad(a) || needs_grad(b));
    return push(std::move(out), req, [a, b](Tape& t, Var self) {
        const Tensor& g = t.grad(self);
        const Tensor &A2 = t.val(a), &B2 = t.val(b);
        if (t.needs_grad(a)) {
            Tensor ga(A2.rows, A2.cols);
            emap(ga).noalias() = emap(g) * emap(B2).transpose();
            t.add_grad(a, ga);
        }
        if (t.needs_grad(b)) {
            Tensor gb(B2.rows, B2.cols);
            emap(gb).noalias() = emap(A2).transpose() * emap(g);
            t.add_grad(b, gb);
        }
    });
}

// ---------------------------------------------------------------------------
// nonlinearities
// ---------------------------------------------------------------------------

Var Tape::tanh_(Var a) {
    const Tensor& A = val(a);
    Tensor out(A.rows, A.cols);
    emap(out) = emap(A).array().tanh().matrix();
    bool req = grad_enabled_ && needs_grad(a);
    return push(std::move(out), req, [a](Tape& t, Var self) {
        const Tensor &g = t.grad(self), &y = t.val(self);
        Tensor ga(g.rows, g.cols);
        emap(ga) = emap(g).cwiseProduct((1.0 - emap(y).array().square()).matrix());
        t.add_grad(a, ga);
    });
}

Var Tape::sigmoid_(Var a) {
    const Tensor& A = val(a);
    Tensor out(A.rows, A.cols);
    emap(out) = (1.0 / (1.0 + (-emap(A).array()).exp())).matrix();
    bool req = grad_enabled_ && needs_grad(a);
    return push(std::move(out), req, [a](Tape& t, Var self) {
        const Tensor &g = t.grad(self), &y = t.val(self);
        Tensor ga(g.rows, g.cols);
        emap(ga) = emap(g).cwiseProduct((emap(y).array() * (1.0 - emap(y).array())).matrix());
        t.add_grad(a, ga);
    });
}

Var Tape::relu_(Var a) {
    const Tensor& A = val(a);
    Tensor out(A.rows, A.cols);
    emap(out) = emap(A).cwiseMax(0.0);
    bool req = grad_enabled_ && needs_grad(a);
    return push(std::move(out), req, [a](Tape& t, Var self) {
        const Tensor &g = t.grad(self), &y = t.val(self);
        Tensor ga(g.rows, g.cols);
        emap(ga) = emap(g).cwiseProduct((emap(y).array() > 0.0).cast<double>().matrix());
        t.add_grad(a, ga);
    });
}

// ---------------------------------------------------------------------------
// reductions / normalizers
// ---------------------------------------------------------------------------

Var Tape::sum_all(Var a) {
    const Tensor& A = val(a);
    double s = 0.0;
    for (double x : A.v) s += x;
    bool req = grad_enabled_ && needs_grad(a);
    return push(Tensor::scalar(s), req, [a](Tape& t, Var self) {
        double g = t.grad(self).v[0];
        const Tensor& A2 = t.val(a);
        t.add_grad(a, Tensor::full(A2.rows, A2.cols, g));
    });
}

Var Tape::mean_all(Var a) {
    const Tensor& A = val(a);
    double s = 0.0;
    for (double x : A.v) s += x;
    double n = static_cast<double>(A.numel());
    bool req = grad_enabled_ && needs_grad(a);
    return push(Tensor::scalar(s / n), req, [a, n](Tape& t, Var self) {
        double g = t.grad(self).v[0] / n;
        const Tensor& A2 = t.val(a);
        t.add_grad(a, Tensor::full(A2.rows, A2.cols, g));
    });
}

Var Tape::mean_rows(Var a) {
    const Tensor& A = val(a);
    Tensor out(1, A.cols);
    emap(out).row(0) = emap(A).colwise().mean();
    bool req = grad_enabled_ && needs_grad(a);
    return push(std::move(out), req, [a](Tape& t, Var self) {
        const Tensor& g = t.grad(self);
        const Tensor& A2 = t.val(a);
        Tensor ga(A2.rows, A2.cols);
        emap(ga) = emap(g).row(0).replicate(A2.rows, 1) / static_cast<double>(A2.rows);
        t.add_grad(a, ga);
    });
}

Var Tape::softmax_rows(Var a) {
    const Tensor& A = val(a);
    Tensor out(A.rows, A.cols);
    for (int64_t r = 0; r < A.rows; ++r) {
        double mx = -std::numeric_limits<double>::infinity();
        for (int64_t c = 0; c < A.cols; ++c) mx = std::max(mx, A.at(r, c));
        double denom = 0.0;
        for (int64_t c = 0; c < A.cols; ++c) denom += std::exp(A.at(r, c) - mx);
        for (int64_t c = 0; c < A.cols; ++c) out.at(r, c) = std::exp(A.at(r, c) - mx) / denom;
    }
    bool req = grad_enabled_ && needs_grad(a);
    return push(std::move(out), req, [a](Tape& t, Var self) {
        const Tensor &g = t.grad(self), &y = t.val(self);
        Tensor ga(g.rows, g.cols);
        for (int64_t r = 0; r < g.rows; ++r) {
            double dot = 0.0;
            for (int64_t c = 0; c < g.cols; ++c) dot += g.at(r, c) * y.at(r, c);
            for (int64_t c = 0; c < g.cols; ++c) ga.at(r, c) = y.at(r, c) * (g.at(r, c) - dot);
        }
        t.add_grad(a, ga);
    });
}

Var Tape::l2_normalize_rows(Var a, double eps) {
    const Tensor& A = val(a);
    Tensor out(A.rows, A.cols);
    std::vector<double> norms(static_cast<size_t>(A.rows));
    for (int64_t r = 0; r < A.rows; ++r) {
        double s = 0.0;
        for (int64_t c = 0; c < A.cols; ++c) s += A.at(r, c) * A.at(r, c);
        double n = std::sqrt(s + eps);
        norms[static_cast<size_t>(r)] = n;
        for (int64_t c = 0; c < A.cols; ++c) out.at(r, c) = A.at(r, c) / n;
    }
    bool req = grad_enabled_ && needs_grad(a);
    return push(std::move(out), req, [a, norms = std::move(norms)](Tape& t, Var self) {
        const Tensor &g = t.grad(self), &y = t.val(self);
        Tensor ga(g.rows, g.cols);
        for (int64_t r = 0; r < g.rows; ++r) {
            double dot = 0.0;
            for (int64_t c = 0; c < g.cols; ++c) dot += g.at(r, c) * y.at(r, c);
            for (int64_t c = 0; c < g.cols; ++c)
                ga.at(r, c) = (g.at(r, c) - y.at(r, c) * dot) / norms[static_cast<size_t>(r)];
        }
        t.add_grad(a, ga);
    });
}

namespace {
// shared core for row-wise / column-wise affine normalization
struct NormStats {
    std::vector<double> xhat;      // same layout as input
    std::vector<double> inv_sigma; // one per normalized slice
};
}  // namespace

Var Tape::layer_norm_rows(Var a, Var gain, Var bias, double eps) {
    const Tensor &A = val(a), &G = val(gain), &B = val(bias);
    if (G.rows != 1 || G.cols != A.cols || B.rows != 1 || B.cols != A.cols)
        throw InvalidArgument("layer_norm_rows: gain/bias must be [1,C]");
    Tensor out(A.rows, A.cols);
    auto stats = std::make_shared<NormStats>();
    stats->xhat.resize(static_cast<size_t>(A.numel()));
    stats->inv_sigma.resize(static_cast<size_t>(A.rows));
    for (int64_t r = 0; r < A.rows; ++r) {
        double mu = 0.0;
        for (int64_t c = 0; c < A.cols; ++c) mu += A.at(r, c);
        mu /= static_cast<double>(A.cols);
        double var = 0.0;
        for (int64_t c = 0; c < A.cols; ++c) var += (A.at(r, c) - mu) * (A.at(r, c) - mu);
        var /= static_cast<double>(A.cols);
        double inv = 1.0 / std::sqrt(var + eps);
        stats->inv_sigma[static_cast<size_t>(r)] = inv;
        for (int64_t c = 0; c < A.cols; ++c) {
            double xh = (A.at(r, c) - mu) * inv;
            stats->xhat[static_cast<size_t>(r * A.cols + c)] = xh;
            out.at(r, c) = G.at(0, c) * xh + B.at(0, c);
        }
    }
    bool req = grad_enabled_ && (needs_grad(a) || needs_grad(gain) || needs_grad(bias));
    return push(std::move(out), req, [a, gain, bias, stats](Tape& t, Var self) {
        const Tensor& g = t.grad(self);
        const Tensor& G2 = t.val(gain);
        int64_t R = g.rows, C = g.cols;
        Tensor ga(R, C), gg(1, C), gb(1, C);
        for (int64_t r = 0; r < R; ++r) {
            double mean_dxh = 0.0, mean_dxh_xh = 0.0;
            for (int64_t c = 0; c < C; ++c) {
                double xh = stats->xhat[static_cast<size_t>(r * C + c)];
                double dxh = g.at(r, c) * G2.at(0, c);
                mean_dxh += dxh;
                mean_dxh_xh += dxh * xh;
                gg.at(0, c) += g.at(r, c) * xh;
                gb.at(0, c) += g.at(r, c);
            }
            mean_dxh /= static_cast<double>(C);
            mean_dxh_xh /= static_cast<double>(C);
            double inv = stats->inv_sigma[static_cast<size_t>(r)];
            for (int64_t c = 0; c < C; ++c) {
                double xh = stats->xhat[static_cast<size_t>(r * C + c)];
                double dxh = g.at(r, c) * G2.at(0, c);
                ga.at(r, c) = inv * (dxh - mean_dxh - xh * mean_dxh_xh);
            }
        }
        t.add_grad(a, ga);
        t.add_grad(gain, gg);
        t.add_grad(bias, gb);
    });
}

Var Tape::instance_norm_cols(Var a, Var gain, Var bias, double eps) {
    const Tensor &A = val(a), &G = val(gain), &B = val(bias);
    if (G.rows != 1 || G.cols != A.cols || B.rows != 1 || B.cols != A.cols)
        throw InvalidArgument("instance_norm_cols: gain/bias must be [1,C]");
    Tensor out(A.rows, A.cols);
    auto stats = std::make_shared<NormStats>();
    stats->xhat.resize(static_cast<size_t>(A.numel()));
    stats->inv_sigma.resize(static_cast<size_t>(A.cols));
    double n = static_cast<double>(A.rows);
    for (int64_t c = 0; c < A.cols; ++c) {
        double mu = 0.0;
        for (int64_t r = 0; r < A.rows; ++r) mu += A.at(r, c);
        mu /= n;
        double var = 0.0;
        for (int64_t r = 0; r < A.rows; ++r) var += (A.at(r, c) - mu) * (A.at(r, c) - mu);
        var /= n;
        double inv = 1.0 / std::sqrt(var + eps);
        stats->inv_sigma[static_cast<size_t>(c)] = inv;
        for (int64_t r = 0; r < A.rows; ++r) {
            double xh = (A.at(r, c) - mu) * inv;
            stats->xhat[static_cast<size_t>(r * A.cols + c)] = xh;
            out.at(r, c) = G.at(0, c) * xh + B.at(0, c);
        }
    }
    bool req = grad_enabled_ && (needs_grad(a) || needs_grad(gain) || needs_grad(bias));
    return push(std::move(out), req, [a, gain, bias, stats](Tape& t, Var self) {
        const Tensor& g = t.grad(self);
        const Tensor& G2 = t.val(gain);
        int64_t R = g.rows, C = g.cols;
        double n2 = static_cast<double>(R);
        Tensor ga(R, C), gg(1, C), gb(1, C);
        for (int64_t c = 0; c < C; ++c) {
            double mean_dxh = 0.0, mean_dxh_xh = 0.0;
            for (int64_t r = 0; r < R; ++r) {
                double xh = stats->xhat[static_cast<size_t>(r * C + c)];
                double dxh = g.at(r, c) * G2.at(0, c);
                mean_dxh += dxh;
                mean_dxh_xh += dxh * xh;
                gg.at(0, c) += g.at(r, c) * xh;
                gb.at(0, c) += g.at(r, c);
            }
            mean_dxh /= n2;
            mean_dxh_xh /= n2;
            double inv = stats->inv_sigma[static_cast<size_t>(c)];
            for (int64_t r = 0; r < R; ++r) {
                double xh = stats->xhat[static_cast<size_t>(r * C + c)];
                double dxh = g.at(r, c) * G2.at(0, c);
                ga.at(r, c) = inv * (dxh - mean_dxh - xh * mean_dxh_xh);
            }
        }
        t.add_grad(a, ga);
        t.add_grad(gain, gg);
        t.add_grad(bias, gb);
    });
}

// ---------------------------------------------------------------------------
// fused losses
// ---------------------------------------------------------------------------

Var Tape::cross_entropy_row(Var a, int64_t label) {
    const Tensor& A = val(a);
    if (A.rows != 1) throw InvalidArgument("cross_entropy_row: logits must be [1,C]");
    if (label < 0 || label >= A.cols)
        throw InvalidArgument("cross_entropy_row: label " + std::to_string(label) +
                              " out of range for " + std::to_string(A.cols) + " classes");
    double mx = -std::numeric_limits<double>::infinity();
    for (int64_t c = 0; c < A.cols; ++c) mx = std::max(mx, A.at(0, c));
    double denom = 0.0;
    for (int64_t c = 0; c < A.cols; ++c) denom += std::exp(A.at(0, c) - mx);
    double loss = std::log(denom) - (A.at(0, label) - mx);
    bool req = grad_enabled_ && needs_grad(a);
    return push(Tensor::scalar(loss), req, [a, label](Tape& t, Var self) {
        double g = t.grad(self).v[0];
        const Tensor& A2 = t.val(a);
        double mx2 = -std::numeric_limits<double>::infinity();
        for (int64_t c = 0; c < A2.cols; ++c) mx2 = std::max(mx2, A2.at(0, c));
        double denom2 = 0.0;
        for (int64_t c = 0; c < A2.cols; ++c) denom2 += std::exp(A2.at(0, c) - mx2);
        Tensor ga(1, A2.cols);
        for (int64_t c = 0; c < A2.cols; ++c) {
            double p = std::exp(A2.at(0, c) - mx2) / denom2;
            ga.at(0, c) = g * (p - (c == label ? 1.0 : 0.0));
        }
        t.add_grad(a, ga);
    });
}

Var Tape::mse_masked_rows(Var pred, const Tensor& target, const std::vector<uint8_t>& row_mask) {
    const Tensor& P = val(pred);
    if (!P.same_shape(target)) throw InvalidArgument("mse_masked_rows: shape mismatch");
    if (static_cast<int64_t>(row_mask.size()) != P.rows)
        throw InvalidArgument("mse_masked_rows: mask length mismatch");
    int64_t masked = 0;
    for (uint8_t m : row_mask) masked += m ? 1 : 0;
    if (masked == 0) throw InvalidArgument("mse_masked_rows: no masked rows");
    double denom = static_cast<double>(masked * P.cols);
    double loss = 0.0;
    for (int64_t r = 0; r < P.rows; ++r) {
        if (!row_mask[static_cast<size_t>(r)]) continue;
        for (int64_t c = 0; c < P.cols; ++c) {
            double d = P.at(r, c) - target.at(r, c);
            loss += d * d;
        }
    }
    loss /= denom;
    bool req = grad_enabled_ && needs_grad(pred);
    return push(Tensor::scalar(loss), req,
                [pred, target, row_mask, denom](Tape& t, Var self) {
                    double g = t.grad(self).v[0];
                    const Tensor& P2 = t.val(pred);
                    Tensor gp = Tensor::zeros(P2.rows, P2.cols);
                    for (int64_t r = 0; r < P2.rows; ++r) {
                        if (!row_mask[static_cast<size_t>(r)]) continue;
                        for (int64_t c = 0; c < P2.cols; ++c)
                            gp.at(r, c) = g * 2.0 * (P2.at(r, c) - target.at(r, c)) / denom;
                    }
                    t.add_grad(pred, gp);
                });
}

Var Tape::grouped_cross_entropy_masked(Var logits, const std::vector<int>& labels,
                                       const std::vector<uint8_t>& row_mask, int64_t groups,
                                       int64_t classes) {
    const Tensor& L = val(logits);
    if (L.cols != groups * classes)
        throw InvalidArgument("grouped_cross_entropy_masked: column count mismatch");
    if (static_cast<int64_t>(labels.size()) != L.rows * groups)
        throw InvalidArgument("grouped_cross_entropy_masked: label count mismatch");
    if (static_cast<int64_t>(row_mask.size()) != L.rows)
        throw InvalidArgument("grouped_cross_entropy_masked: mask length mismatch");
    int64_t masked = 0;
    for (uint8_t m : row_mask) masked += m ? 1 : 0;
    if (masked == 0) throw InvalidArgument("grouped_cross_entropy_masked: no masked rows");
    double denom = static_cast<double>(masked * groups);
    double loss = 0.0;
    for (int64_t r = 0; r < L.rows; ++r) {
        if (!row_mask[static_cast<size_t>(r)]) continue;
        for (int64_t gi = 0; gi < groups; ++gi) {
            int lab = labels[static_cast<size_t>(r * groups + gi)];
            double mx = -std::numeric_limits<double>::infinity();
            for (int64_t c = 0; c < classes; ++c) mx = std::max(mx, L.at(r, gi * classes + c));
            double dsum = 0.0;
            for (int64_t c = 0; c < classes; ++c) dsum += std::exp(L.at(r, gi * classes + c) - mx);
            loss += std::log(dsum) - (L.at(r, gi * classes + lab) - mx);
        }
    }
    loss /= denom;
    bool req = grad_enabled_ && needs_grad(logits);
    return push(Tensor::scalar(loss), req,
                [logits, labels, row_mask, groups, classes, denom](Tape& t, Var self) {
                    double g = t.grad(self).v[0];
                    const Tensor& L2 = t.val(logits);
                    Tensor gl = Tensor::zeros(L2.rows, L2.cols);
                    for (int64_t r = 0; r < L2.rows; ++r) {
                        if (!row_mask[static_cast<size_t>(r)]) continue;
                        for (int64_t gi = 0; gi < groups; ++gi) {
                            int lab = labels[static_cast<size_t>(r * groups + gi)];
                            double mx = -std::numeric_limits<double>::infinity();
                            for (int64_t c = 0; c < classes; ++c)
                                mx = std::max(mx, L2.at(r, gi * classes + c));
                            double dsum = 0.0;
                            for (int64_t c = 0; c < classes; ++c)
                                dsum += std::exp(L2.at(r, gi * classes + c) - mx);
                            for (int64_t c = 0; c < classes; ++c) {
                                double p = std::exp(L2.at(r, gi * classes + c) - mx) / dsum;
                                gl.at(r, gi * classes + c) =
                                    g * (p - (c == lab ? 1.0 : 0.0)) / denom;
                            }
                        }
                    }
                    t.add_grad(logits, gl);
                });
}

// ---------------------------------------------------------------------------
// structured ops for ST-GCN
// ---------------------------------------------------------------------------

Var Tape::graph_mix(Var x, Var m, int64_t frames, int64_t nodes) {
    const Tensor &X = val(x), &M = val(m);
    if (X.rows != frames * nodes) throw InvalidArgument("graph_mix: row count mismatch");
    if (M.rows != nodes || M.cols != nodes) throw InvalidArgument("graph_mix: mixer must be [K,K]");
    Tensor out(X.rows, X.cols);
    for (int64_t t = 0; t < frames; ++t)
        emap(out).middleRows(t * nodes, nodes).noalias() =
            emap(M) * emap(X).middleRows(t * nodes, nodes);
    bool req = grad_enabled_ && (needs_grad(x) || needs_grad(m));
    return push(std::move(out), req, [x, m, frames, nodes](Tape& t, Var self) {
        const Tensor& g = t.grad(self);
        const Tensor &X2 = t.val(x), &M2 = t.val(m);
        if (t.needs_grad(x)) {
            Tensor gx(X2.rows, X2.cols);
            for (int64_t f = 0; f < frames; ++f)
                emap(gx).middleRows(f * nodes, nodes).noalias() =
                    emap(M2).transpose() * emap(g).middleRows(f * nodes, nodes);
            t.add_grad(x, gx);
        }
        if (t.needs_grad(m)) {
            Tensor gm = Tensor::zeros(nodes, nodes);
            for (int64_t f = 0; f < frames; ++f)
                emap(gm).noalias() += emap(g).middleRows(f * nodes, nodes) *
                                      emap(X2).middleRows(f * nodes, nodes).transpose();
            t.add_grad(m, gm);
        }
    });
}

Var Tape::temporal_conv(Var x, Var w, Var bias, int64_t frames, int64_t nodes, int64_t ktime,
                        int64_t stride) {
    const Tensor &X = val(x), &W = val(w);
    if (ktime < 1 || ktime % 2 == 0) throw InvalidArgument("temporal_conv: kernel must be odd");
    if (stride < 1) throw InvalidArgument("temporal_conv: stride must be >= 1");
    if (X.rows != frames * nodes) throw InvalidArgument("temporal_conv: row count mismatch");
    if (W.rows % ktime != 0) throw InvalidArgument("temporal_conv: weight rows not divisible by kernel");
    int64_t cin = W.rows / ktime;
    if (X.cols != cin) throw InvalidArgument("temporal_conv: input channel mismatch");
    int64_t cout = W.cols;
    int64_t pad = (ktime - 1) / 2;
    int64_t frames_out = (frames + 2 * pad - ktime) / stride + 1;
    if (frames_out < 1) throw InvalidArgument("temporal_conv: no output frames");

    Tensor out = Tensor::zeros(frames_out * nodes, cout);
    for (int64_t u = 0; u < ktime; ++u) {
        auto Wu = emap(W).middleRows(u * cin, cin);
        if (stride == 1) {
            int64_t t0 = std::max<int64_t>(0, pad - u);
            int64_t t1 = std::min<int64_t>(frames_out - 1, frames - 1 - u + pad);
            if (t0 > t1) continue;
            int64_t tin0 = t0 + u - pad;
            int64_t span = (t1 - t0 + 1) * nodes;
            emap(out).middleRows(t0 * nodes, span).noalias() +=
                emap(X).middleRows(tin0 * nodes, span) * Wu;
        } else {
            for (int64_t to = 0; to < frames_out; ++to) {
                int64_t ti = to * stride + u - pad;
                if (ti < 0 || ti >= frames) continue;
                emap(out).middleRows(to * nodes, nodes).noalias() +=
                    emap(X).middleRows(ti * nodes, nodes) * Wu;
            }
        }
    }
    if (bias.ok()) {
        const Tensor& B = val(bias);
        if (B.rows != 1 || B.cols != cout) throw InvalidArgument("temporal_conv: bad bias shape");
        emap(out).rowwise() += emap(B).row(0);
    }
    bool req = grad_enabled_ && (needs_grad(x) || needs_grad(w) || (bias.ok() && needs_grad(bias)));
    return push(std::move(out), req,
                [x, w, bias, frames, nodes, ktime, stride, cin, cout, pad,
                 frames_out](Tape& t, Var self) {
                    const Tensor& g = t.grad(self);
                    const Tensor &X2 = t.val(x), &W2 = t.val(w);
                    Tensor gx = Tensor::zeros(X2.rows, X2.cols);
                    Tensor gw = Tensor::zeros(W2.rows, W2.cols);
                    for (int64_t u = 0; u < ktime; ++u) {
                        auto Wu = emap(W2).middleRows(u * cin, cin);
                        auto gWu = emap(gw).middleRows(u * cin, cin);
                        if (stride == 1) {
                            int64_t t0 = std::max<int64_t>(0, pad - u);
                            int64_t t1 = std::min<int64_t>(frames_out - 1, frames - 1 - u + pad);
                            if (t0 > t1) continue;
                            int64_t tin0 = t0 + u - pad;
                            int64_t span = (t1 - t0 + 1) * nodes;
                            emap(gx).middleRows(tin0 * nodes, span).noalias() +=
                                emap(g).middleRows(t0 * nodes, span) * Wu.transpose();
                            gWu.noalias() += emap(X2).middleRows(tin0 * nodes, span).transpose() *
                                             emap(g).middleRows(t0 * nodes, span);
                        } else {
                            for (int64_t to = 0; to < frames_out; ++to) {
                                int64_t ti = to * stride + u - pad;
                                if (ti < 0 || ti >= frames) continue;
                                emap(gx).middleRows(ti * nodes, nodes).noalias() +=
                                    emap(g).middleRows(to * nodes, nodes) * Wu.transpose();
                                gWu.noalias() +=
                                    emap(X2).middleRows(ti * nodes, nodes).transpose() *
                                    emap(g).middleRows(to * nodes, nodes);
                            }
                        }
                    }
                    if (t.needs_grad(x)) t.add_grad(x, gx);
                    if (t.needs_grad(w)) t.add_grad(w, gw);
                    if (bias.ok() && t.needs_grad(bias)) {
                        Tensor gb(1, cout);
                        emap(gb).row(0) = emap(g).colwise().sum();
                        t.add_grad(bias, gb);
                    }
                });
}

}  // namespace slrkit::nn
