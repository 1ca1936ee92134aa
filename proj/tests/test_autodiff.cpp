#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "slrkit/autodiff.hpp"
#include "slrkit/common.hpp"
#include "slrkit/random.hpp"

#include <cmath>
#include <functional>

using namespace slrkit;
using nn::Tape;
using nn::Var;

namespace {

Tensor random_tensor(RandomSource& rng, int64_t r, int64_t c, double lo = -1.0, double hi = 1.0) {
    Tensor t(r, c);
    for (auto& x : t.v) x = rng.uniform_real(lo, hi);
    return t;
}

// Central finite differences of a scalar-valued graph w.r.t. one input
// tensor; builder(tape, inputs...) reconstructs the graph from values.
void check_gradients(std::vector<Tensor> inputs,
                     const std::function<Var(Tape&, std::vector<Var>&)>& builder,
                     double eps = 1e-5, double tol = 1e-6) {
    std::vector<Tensor> grads;
    for (const auto& t : inputs) grads.emplace_back(Tensor::zeros(t.rows, t.cols));
    {
        Tape tape(true);
        std::vector<Var> vars;
        for (size_t i = 0; i < inputs.size(); ++i) vars.push_back(tape.param(&inputs[i], &grads[i]));
        Var loss = builder(tape, vars);
        tape.backward(loss);
    }
    auto eval = [&]() {
        Tape tape(false);
        std::vector<Var> vars;
        for (auto& t : inputs) vars.push_back(tape.param(&t, nullptr));
        Var loss = builder(tape, vars);
        return tape.val(loss).v[0];
    };
    for (size_t i = 0; i < inputs.size(); ++i) {
        for (size_t j = 0; j < inputs[i].v.size(); ++j) {
            double save = inputs[i].v[j];
            inputs[i].v[j] = save + eps;
            double up = eval();
            inputs[i].v[j] = save - eps;
            double down = eval();
            inputs[i].v[j] = save;
            double fd = (up - down) / (2.0 * eps);
            double an = grads[i].v[j];
            double denom = std::max({std::abs(fd), std::abs(an), 1e-6});
            CHECK(std::abs(fd - an) / denom < tol);
        }
    }
}

}  // namespace

TEST_CASE("loss = sum of a single weight has gradient exactly one") {
    Tensor w = Tensor::scalar(3.0);
    Tensor g = Tensor::zeros(1, 1);
    Tape tape(true);
    Var wv = tape.param(&w, &g);
    tape.backward(tape.sum_all(wv));
    CHECK(g.v[0] == 1.0);
}

TEST_CASE("a tensor the loss does not touch gets exactly zero gradient") {
    Tensor w = Tensor::scalar(3.0), unused = Tensor::scalar(5.0);
    Tensor gw = Tensor::zeros(1, 1), gu = Tensor::zeros(1, 1);
    Tape tape(true);
    Var wv = tape.param(&w, &gw);
    tape.param(&unused, &gu);
    tape.backward(tape.sum_all(tape.mul(wv, wv)));
    CHECK(gw.v[0] == 6.0);
    CHECK(gu.v[0] == 0.0);
}

TEST_CASE("backward on an inference tape is rejected") {
    Tensor w = Tensor::scalar(1.0);
    Tape tape(false);
    Var wv = tape.param(&w, nullptr);
    Var s = tape.sum_all(wv);
    CHECK_THROWS_AS(tape.backward(s), Error);
}

TEST_CASE("matmul/add/bias chain matches finite differences") {
    RandomSource rng(1);
    check_gradients(
        {random_tensor(rng, 3, 4), random_tensor(rng, 4, 2), random_tensor(rng, 1, 2)},
        [](Tape& t, std::vector<Var>& v) {
            return t.sum_all(t.tanh_(t.add_rowvec(t.matmul(v[0], v[1]), v[2])));
        });
}

TEST_CASE("elementwise ops match finite differences") {
    RandomSource rng(2);
    check_gradients({random_tensor(rng, 2, 3), random_tensor(rng, 2, 3)},
                    [](Tape& t, std::vector<Var>& v) {
                        Var m = t.mul(t.sigmoid_(v[0]), t.tanh_(v[1]));
                        return t.sum_all(t.sub(m, t.scale(v[0], 0.3)));
                    });
    check_gradients({random_tensor(rng, 3, 3)}, [](Tape& t, std::vector<Var>& v) {
        return t.mean_all(t.relu_(v[0]));
    });
}

TEST_CASE("shape ops route gradients correctly") {
    RandomSource rng(3);
    check_gradients({random_tensor(rng, 4, 3), random_tensor(rng, 2, 3)},
                    [](Tape& t, std::vector<Var>& v) {
                        Var cat = t.concat_rows({v[0], v[1]});
                        Var left = t.slice_rows(cat, 1, 5);
                        Var rev = t.reverse_rows(left);
                        return t.sum_all(t.mul(rev, rev));
                    });
    check_gradients({random_tensor(rng, 3, 2), random_tensor(rng, 3, 4)},
                    [](Tape& t, std::vector<Var>& v) {
                        Var cat = t.concat_cols(v[0], v[1]);
                        Var cols = t.slice_cols(cat, 1, 5);
                        return t.sum_all(t.mul(t.transpose(cols), t.transpose(cols)));
                    });
    check_gradients({random_tensor(rng, 1, 5)}, [](Tape& t, std::vector<Var>& v) {
        Var b = t.broadcast_row(v[0], 4);
        return t.sum_all(t.mul(b, b));
    });
}

TEST_CASE("softmax rows sum to one and gradient matches finite differences") {
    RandomSource rng(4);
    Tensor x = random_tensor(rng, 3, 5, -2.0, 2.0);
    {
        Tape tape(false);
        Var s = tape.softmax_rows(tape.constant(x));
        for (int64_t r = 0; r < 3; ++r) {
            double sum = 0.0;
            for (int64_t c = 0; c < 5; ++c) sum += tape.val(s).at(r, c);
            CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
        }
    }
    check_gradients({x, random_tensor(rng, 3, 5)}, [](Tape& t, std::vector<Var>& v) {
        return t.sum_all(t.mul(t.softmax_rows(v[0]), v[1]));
    });
}

TEST_CASE("normalizers match finite differences") {
    RandomSource rng(5);
    check_gradients(
        {random_tensor(rng, 4, 6), random_tensor(rng, 1, 6, 0.5, 1.5), random_tensor(rng, 1, 6)},
        [](Tape& t, std::vector<Var>& v) {
            return t.sum_all(t.tanh_(t.layer_norm_rows(v[0], v[1], v[2])));
        },
        1e-5, 1e-5);
    check_gradients(
        {random_tensor(rng, 6, 4), random_tensor(rng, 1, 4, 0.5, 1.5), random_tensor(rng, 1, 4)},
        [](Tape& t, std::vector<Var>& v) {
            return t.sum_all(t.tanh_(t.instance_norm_cols(v[0], v[1], v[2])));
        },
        1e-5, 1e-5);
    check_gradients({random_tensor(rng, 3, 4)}, [](Tape& t, std::vector<Var>& v) {
        return t.sum_all(t.l2_normalize_rows(v[0]));
    });
}

TEST_CASE("cross_entropy_row equals the closed form and differentiates") {
    Tensor logits(1, 2);
    logits.at(0, 0) = 10.0;
    logits.at(0, 1) = -10.0;
    Tape tape(false);
    Var ce = tape.cross_entropy_row(tape.constant(logits), 0);
    CHECK(tape.val(ce).v[0] == doctest::Approx(2.061153622438558e-9).epsilon(1e-6));

    RandomSource rng(6);
    check_gradients({random_tensor(rng, 1, 7, -2.0, 2.0)}, [](Tape& t, std::vector<Var>& v) {
        return t.cross_entropy_row(v[0], 3);
    });

    Tensor bad(1, 3);
    Tape t2(false);
    Var b = t2.constant(bad);
    CHECK_THROWS_AS(t2.cross_entropy_row(b, 3), InvalidArgument);
}

TEST_CASE("fused masked losses match finite differences") {
    RandomSource rng(7);
    Tensor target = random_tensor(rng, 5, 4);
    std::vector<uint8_t> mask = {1, 0, 1, 1, 0};
    check_gradients({random_tensor(rng, 5, 4)}, [&](Tape& t, std::vector<Var>& v) {
        return t.mse_masked_rows(v[0], target, mask);
    });
    std::vector<int> labels(5 * 3);
    for (auto& l : labels) l = static_cast<int>(rng.uniform_int(0, 4));
    check_gradients({random_tensor(rng, 5, 15)}, [&](Tape& t, std::vector<Var>& v) {
        return t.grouped_cross_entropy_masked(v[0], labels, mask, 3, 5);
    });
}

TEST_CASE("graph_mix and temporal_conv match finite differences") {
    RandomSource rng(8);
    // 3 frames x 4 nodes x 2 channels
    check_gradients({random_tensor(rng, 12, 2), random_tensor(rng, 4, 4)},
                    [](Tape& t, std::vector<Var>& v) {
                        return t.sum_all(t.tanh_(t.graph_mix(v[0], v[1], 3, 4)));
                    });
    // kernel 3, stride 1
    check_gradients(
        {random_tensor(rng, 15, 2), random_tensor(rng, 6, 3), random_tensor(rng, 1, 3)},
        [](Tape& t, std::vector<Var>& v) {
            return t.sum_all(t.tanh_(t.temporal_conv(v[0], v[1], v[2], 5, 3, 3, 1)));
        });
    // kernel 3, stride 2
    check_gradients(
        {random_tensor(rng, 21, 2), random_tensor(rng, 6, 3), random_tensor(rng, 1, 3)},
        [](Tape& t, std::vector<Var>& v) {
            return t.sum_all(t.tanh_(t.temporal_conv(v[0], v[1], v[2], 7, 3, 3, 2)));
        });
    // kernel 1 residual projection with stride 2
    check_gradients({random_tensor(rng, 12, 2), random_tensor(rng, 2, 5)},
                    [](Tape& t, std::vector<Var>& v) {
                        return t.sum_all(t.temporal_conv(v[0], v[1], Var{}, 4, 3, 1, 2));
                    });
}

TEST_CASE("temporal_conv output frame count follows the stride arithmetic") {
    RandomSource rng(9);
    Tensor x = random_tensor(rng, 10 * 3, 2);
    Tensor w = random_tensor(rng, 9 * 2, 4);
    Tape tape(false);
    Var y = tape.temporal_conv(tape.constant(x), tape.constant(w), Var{}, 10, 3, 9, 2);
    CHECK(tape.val(y).rows == 5 * 3);  // (10 + 8 - 9)/2 + 1 = 5
    CHECK(tape.val(y).cols == 4);
}

TEST_CASE("mul_const and scale_rows_const route gradients through constants") {
    RandomSource rng(10);
    Tensor c = random_tensor(rng, 3, 3);
    check_gradients({random_tensor(rng, 3, 3)}, [&](Tape& t, std::vector<Var>& v) {
        return t.sum_all(t.mul_const(v[0], c));
    });
    std::vector<double> factors = {0.5, 0.0, 2.0};
    check_gradients({random_tensor(rng, 3, 4)}, [&](Tape& t, std::vector<Var>& v) {
        return t.sum_all(t.tanh_(t.scale_rows_const(v[0], factors)));
    });
}

TEST_CASE("gradients accumulate across two backward passes") {
    Tensor w = Tensor::scalar(2.0);
    Tensor g = Tensor::zeros(1, 1);
    for (int pass = 0; pass < 2; ++pass) {
        Tape tape(true);
        Var wv = tape.param(&w, &g);
        tape.backward(tape.sum_all(wv), 0.5);
    }
    CHECK(g.v[0] == 1.0);
}
