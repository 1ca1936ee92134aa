#pragma once

#include "slrkit/tensor.hpp"

#include <cstdint>
#include <functional>
#include <vector>

namespace slrkit::nn {

struct Var {
    int32_t id = -1;
    bool ok() const { return id >= 0; }
};

/// Reverse-mode tape. Ops append nodes whose backward closures accumulate
/// into parent gradients; node creation order is the topological order, so
/// backward() is a single reverse sweep. A tape built with
/// grad_enabled=false records values only (inference mode). Single
/// threaded by design.
class Tape {
  public:
    explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}

    bool grad_enabled() const { return grad_enabled_; }

    // ---- leaves ----
    /// Borrows a parameter tensor; after backward() its gradient is
    /// accumulated (+=) into *grad_sink when one is given.
    Var param(const Tensor* value, Tensor* grad_sink);
    /// Owning constant (no gradient).
    Var constant(Tensor value);

    const Tensor& val(Var x) const;
    const Tensor& grad(Var x) const;

    // ---- elementwise / shape ----
    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var mul(Var a, Var b);
    Var add_rowvec(Var a, Var row);       // row [1,C] broadcast over rows of a
    Var scale(Var a, double c);
    Var mul_const(Var a, const Tensor& c);            // y = a .* c
    Var scale_rows_const(Var a, std::vector<double> row_factors);
    Var broadcast_row(Var row, int64_t n);            // [1,C] -> [n,C]
    Var transpose(Var a);
    Var concat_rows(const std::vector<Var>& parts);
    Var concat_cols(Var a, Var b);
    Var slice_rows(Var a, int64_t r0, int64_t r1);
    Var slice_cols(Var a, int64_t c0, int64_t c1);
    Var reverse_rows(Var a);

    // ---- dense algebra ----
    Var matmul(Var a, Var b);

    // ---- nonlinearities ----
    Var tanh_(Var a);
    Var sigmoid_(Var a);
    Var relu_(Var a);

    // ---- reductions / normalizers ----
    Var sum_all(Var a);
    Var mean_all(Var a);
    Var mean_rows(Var a);                 // [N,C] -> [1,C]
    Var softmax_rows(Var a);
    Var l2_normalize_rows(Var a, double eps = 1e-12);
    Var layer_norm_rows(Var a, Var gain, Var bias, double eps = 1e-5);
    /// Per-channel (column) normalization over all rows of one sample.
    Var instance_norm_cols(Var a, Var gain, Var bias, double eps = 1e-5);

    // ---- fused losses ----
    /// -log softmax(row)[label] with max-subtraction; a is [1,C].
    Var cross_entropy_row(Var a, int64_t label);
    /// Mean squared error over masked rows only (row_mask 0/1 per row).
    Var mse_masked_rows(Var pred, const Tensor& target, const std::vector<uint8_t>& row_mask);
    /// Grouped softmax cross-entropy: logits [N, groups*classes], labels
    /// [N*groups]; averaged over masked rows x groups.
    Var grouped_cross_entropy_masked(Var logits, const std::vector<int>& labels,
                                     const std::vector<uint8_t>& row_mask, int64_t groups,
                                     int64_t classes);

    // ---- structured ops for ST-GCN ----
    /// x [T*K, C], m [K,K]: per-frame y_t = m * x_t.
    Var graph_mix(Var x, Var m, int64_t frames, int64_t nodes);
    /// 1-D temporal convolution over frames with K node rows per frame.
    /// w is [ktime*Cin, Cout] (tap-major), bias [1,Cout] optional.
    Var temporal_conv(Var x, Var w, Var bias, int64_t frames, int64_t nodes, int64_t ktime,
                      int64_t stride);

    /// Runs the reverse sweep from a scalar loss node, seeding with
    /// `seed`; gradients land in the param grad sinks (accumulating).
    void backward(Var loss, double seed = 1.0);

    size_t node_count() const { return nodes_.size(); }

  private:
    struct Node {
        Tensor owned;
        const Tensor* borrowed = nullptr;  // set for param leaves only
        Tensor gradbuf;
        bool grad_present = false;
        bool requires_grad = false;
        Tensor* grad_sink = nullptr;
        std::function<void(Tape&, Var)> back;  // invoked with this node's own id
    };

    std::vector<Node> nodes_;
    bool grad_enabled_ = true;

    Var push(Tensor value, bool needs, std::function<void(Tape&, Var)> back);
    bool needs_grad(Var a) const { return nodes_[static_cast<size_t>(a.id)].requires_grad; }
    void accumulate(Var x, const Tensor& g);

  public:
    /// Accumulates `g` into the gradient of `x` (used by op closures).
    void add_grad(Var x, const Tensor& g) { accumulate(x, g); }
};

}  // namespace slrkit::nn
