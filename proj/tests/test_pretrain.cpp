#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "slrkit/common.hpp"
#include "slrkit/pretrain.hpp"

#include "test_support.hpp"

#include <cmath>
#include <deque>

using namespace slrkit;
using testsupport::MiniCorpus;
using testsupport::MiniUnlabeled;

namespace {

SkeletonGraph chain_graph(int64_t n) {
    std::vector<std::pair<int64_t, int64_t>> edges;
    for (int64_t i = 0; i + 1 < n; ++i) edges.emplace_back(i, i + 1);
    return make_skeleton_graph(n, edges);
}

DpcConfig tiny_dpc() {
    DpcConfig cfg;
    cfg.window_len = 8;
    cfg.input_windows = 2;
    cfg.predict_windows = 2;
    cfg.gru_hidden = 16;
    cfg.encoder = {{8, 16}, {1, 1}, 3};
    cfg.clip_min = 32;
    cfg.clip_max = 48;
    cfg.batch_size = 4;
    cfg.steps = 4;
    return cfg;
}

}  // namespace

TEST_CASE("partition_windows follows the floor rule and keeps order") {
    PoseSequence p = PoseSequence::zeros(70, 3);
    for (int64_t f = 0; f < 70; ++f) p.at(f, 0, 0) = static_cast<float>(f);
    WindowBatch w = partition_windows(p, 10);
    REQUIRE(w.size() == 7);
    for (size_t i = 0; i < w.size(); ++i) {
        CHECK(w[i].frames == 10);
        CHECK(w[i].at(0, 0, 0) == static_cast<float>(10 * i));
    }
    // concatenating the windows reproduces the first floor(F/L)*L frames
    PoseSequence q = PoseSequence::zeros(69, 3);
    for (int64_t f = 0; f < 69; ++f) q.at(f, 0, 0) = static_cast<float>(f * 2);
    WindowBatch wq = partition_windows(q, 10);
    REQUIRE(wq.size() == 6);
    int64_t covered = 0;
    for (const auto& win : wq)
        for (int64_t f = 0; f < win.frames; ++f, ++covered)
            CHECK(win.at(f, 0, 0) == q.at(covered, 0, 0));
    CHECK(covered == 60);

    CHECK_THROWS_AS(partition_windows(PoseSequence::zeros(5, 3), 10), InvalidArgument);
}

TEST_CASE("infonce_loss reproduces the hand-computed softmax example") {
    std::vector<std::vector<double>> zhat = {{1.0, 0.0}};
    std::vector<std::vector<double>> z = {{1.0, 0.0}};
    std::vector<std::vector<double>> neg = {{0.0, 1.0}};
    double loss = infonce_loss(zhat, z, neg);
    CHECK(std::abs(loss - 0.31326168751822286) < 1e-4);  // -log(e/(e+1))
}

TEST_CASE("infonce_loss degenerate cases") {
    std::vector<std::vector<double>> zhat = {{0.3, -0.2, 0.9}};
    std::vector<std::vector<double>> z = zhat;
    CHECK(infonce_loss(zhat, z, {}) == 0.0);  // single positive, no negatives

    // negatives identical to the positive -> uniform softmax of N+1 entries
    std::vector<std::vector<double>> same(5, z[0]);
    CHECK(infonce_loss(zhat, z, same) == doctest::Approx(std::log(6.0)).epsilon(1e-12));

    std::vector<std::vector<double>> bad = {{1.0, 2.0}};
    CHECK_THROWS_AS(infonce_loss(zhat, z, bad), InvalidArgument);
}

TEST_CASE("infonce_loss matches a brute-force 64-bit oracle on 1000 random instances") {
    RandomSource rng(12);
    for (int trial = 0; trial < 1000; ++trial) {
        int64_t dim = rng.uniform_int(1, 8);
        int64_t positives = rng.uniform_int(1, 4);
        int64_t negatives = rng.uniform_int(0, 16);
        auto vec = [&]() {
            std::vector<double> v(static_cast<size_t>(dim));
            for (auto& x : v) x = rng.uniform_real(-2.0, 2.0);
            return v;
        };
        std::vector<std::vector<double>> zhat, z, neg;
        for (int64_t i = 0; i < positives; ++i) {
            zhat.push_back(vec());
            z.push_back(vec());
        }
        for (int64_t i = 0; i < negatives; ++i) neg.push_back(vec());

        // oracle: plain exponentials, no max subtraction
        double expected = 0.0;
        for (int64_t i = 0; i < positives; ++i) {
            auto dot = [&](const std::vector<double>& b) {
                double s = 0.0;
                for (int64_t d = 0; d < dim; ++d) s += zhat[i][d] * b[d];
                return s;
            };
            double denom = std::exp(dot(z[i]));
            for (const auto& n : neg) denom += std::exp(dot(n));
            expected += -std::log(std::exp(dot(z[i])) / denom);
        }
        double got = infonce_loss(zhat, z, neg);
        double rel = std::abs(got - expected) / std::max(1e-30, std::abs(expected));
        if (expected < 1e-12) {
            CHECK(std::abs(got - expected) < 1e-9);
        } else {
            CHECK(rel < 1e-6);
        }
    }
}

TEST_CASE("memory bank behaves exactly like a reference FIFO over 10^4 ops") {
    MemoryBank bank(37);
    std::deque<std::vector<double>> reference;
    RandomSource rng(3);
    for (int op = 0; op < 10000; ++op) {
        std::vector<double> e = {rng.uniform01(), static_cast<double>(op)};
        bank.enqueue(e);
        reference.push_back(e);
        if (reference.size() > 37) reference.pop_front();
        REQUIRE(bank.size() == static_cast<int64_t>(reference.size()));
        if (op % 97 == 0) {
            auto it = bank.entries().begin();
            for (const auto& want : reference) CHECK(*it++ == want);
        }
    }
    CHECK(bank.size() == 37);
    CHECK_THROWS_AS(MemoryBank(0), InvalidArgument);
}

TEST_CASE("direction labels follow the screen-space quadrant convention") {
    PoseSequence p = PoseSequence::zeros(6, 1);
    // frame deltas: (1,-1) Q1, (-1,-1) Q2, (-1,1) Q3, (1,1) Q4, (0,0) static
    double xs[] = {0, 1, 0, -1, 0, 0};
    double ys[] = {0, -1, -2, -1, 0, 0};
    for (int64_t f = 0; f < 6; ++f) {
        p.at(f, 0, 0) = static_cast<float>(xs[f]);
        p.at(f, 0, 1) = static_cast<float>(ys[f]);
    }
    auto labels = direction_labels(p, 1e-3);
    CHECK(labels[0] == static_cast<int>(DirectionLabel::Static));  // first frame
    CHECK(labels[1] == static_cast<int>(DirectionLabel::Q1));
    CHECK(labels[2] == static_cast<int>(DirectionLabel::Q2));
    CHECK(labels[3] == static_cast<int>(DirectionLabel::Q3));
    CHECK(labels[4] == static_cast<int>(DirectionLabel::Q4));
    CHECK(labels[5] == static_cast<int>(DirectionLabel::Static));

    CHECK_THROWS_AS(direction_labels(PoseSequence::zeros(1, 2), 1e-3), InvalidArgument);
}

TEST_CASE("non-static direction labels are invariant under uniform scaling") {
    RandomSource rng(9);
    double delta = 1e-3;
    for (int trial = 0; trial < 200; ++trial) {
        PoseSequence p = PoseSequence::zeros(8, 3);
        for (auto& x : p.data) x = static_cast<float>(rng.uniform_real(-1.0, 1.0));
        double a = rng.uniform_real(0.5, 4.0);
        PoseSequence q = p;
        for (auto& x : q.data) x = static_cast<float>(x * a);
        auto lp = direction_labels(p, delta);
        auto lq = direction_labels(q, delta);
        // compare only where both sides clear the static threshold
        for (int64_t f = 1; f < 8; ++f)
            for (int64_t k = 0; k < 3; ++k) {
                double vx = static_cast<double>(p.at(f, k, 0)) - p.at(f - 1, k, 0);
                double vy = static_cast<double>(p.at(f, k, 1)) - p.at(f - 1, k, 1);
                double norm = std::hypot(vx, vy);
                if (norm > delta / std::min(a, 1.0) && norm * a > delta) {
                    size_t i = static_cast<size_t>(f * 3 + k);
                    CHECK(lp[i] == lq[i]);
                }
            }
    }
}

TEST_CASE("draw_frame_mask hits the exact masked-frame budget") {
    RandomSource rng(4);
    for (double ratio : {0.2, 0.3, 0.4}) {
        MaskConfig cfg;
        cfg.mask_ratio = ratio;
        auto mask = draw_frame_mask(100, cfg, rng);
        int64_t count = 0;
        for (uint8_t m : mask) count += m;
        CHECK(count == static_cast<int64_t>(std::llround(100 * ratio)));
    }
    MaskConfig spans;
    spans.mask_ratio = 0.4;
    spans.contiguous_spans = true;
    auto mask = draw_frame_mask(100, spans, rng);
    int64_t count = 0;
    for (uint8_t m : mask) count += m;
    CHECK(count == 40);

    MaskConfig bad;
    bad.mask_ratio = 1.5;
    CHECK_THROWS_AS(bad.check(), InvalidArgument);
}

TEST_CASE("dpc_forward emits the configured number of embeddings") {
    DpcConfig cfg = tiny_dpc();
    SkeletonGraph graph = chain_graph(5);
    ParameterSet params;
    {
        MiniUnlabeled mini("dpc_fwd", 3, 40, 48, 5, 2, 5);
        auto result = dpc_pretrain(*mini.corpus, cfg, graph, KeypointSelection{}, {1e-3}, 7);
        params = std::move(result.encoder);
    }
    PoseSequence clip = PoseSequence::zeros(40, 5);
    WindowBatch windows = partition_windows(clip, cfg.window_len);
    DpcForwardResult out = dpc_forward(params, cfg, graph, windows);
    REQUIRE(out.predicted.size() == 2);
    REQUIRE(out.actual.size() == 2);
    for (const auto& v : out.predicted) CHECK(v.size() == 16);  // embedding_dim
    for (const auto& v : out.actual) CHECK(v.size() == 16);

    DpcConfig one = cfg;
    one.predict_windows = 1;
    // reuse the same encoder tensors; the rollout only reads them
    DpcForwardResult single = dpc_forward(params, one, graph, windows);
    CHECK(single.predicted.size() == 1);

    WindowBatch too_few(windows.begin(), windows.begin() + 3);
    CHECK_THROWS_AS(dpc_forward(params, cfg, graph, too_few), InvalidArgument);
}

TEST_CASE("dpc_pretrain starts near log(B*P) and is seed-reproducible") {
    MiniUnlabeled mini("dpc_repro", 6, 40, 48, 5, 2, 6);
    DpcConfig cfg = tiny_dpc();
    SkeletonGraph graph = chain_graph(5);
    auto a = dpc_pretrain(*mini.corpus, cfg, graph, KeypointSelection{}, {1e-3}, 11);
    auto b = dpc_pretrain(*mini.corpus, cfg, graph, KeypointSelection{}, {1e-3}, 11);
    REQUIRE(a.loss_history.size() == cfg.steps);
    CHECK(a.loss_history == b.loss_history);  // identical loss curves
    double expected = std::log(static_cast<double>(cfg.batch_size * cfg.predict_windows));
    CHECK(a.loss_history.front().second == doctest::Approx(expected).epsilon(0.2));
}

TEST_CASE("trained DPC scores ordered futures better than shuffled futures") {
    MiniUnlabeled mini("dpc_order", 24, 40, 48, 5, 3, 21);
    DpcConfig cfg = tiny_dpc();
    cfg.batch_size = 8;
    cfg.steps = 120;
    SkeletonGraph graph = chain_graph(5);
    auto result = dpc_pretrain(*mini.corpus, cfg, graph, KeypointSelection{}, {1e-3}, 3);

    RandomSource rng(4);
    std::vector<WindowBatch> eval_batch;
    for (int i = 0; i < 12; ++i)
        eval_batch.push_back(
            partition_windows(sample_pretraining_clip(*mini.corpus, rng, 32, 48), cfg.window_len));
    double ordered = dpc_eval_loss(result.encoder, cfg, graph, eval_batch, false, 0);
    double shuffled = dpc_eval_loss(result.encoder, cfg, graph, eval_batch, true, 99);
    CHECK(ordered < shuffled);
}

TEST_CASE("moco keeps the bank FIFO and a frozen encoder at momentum 1") {
    MiniUnlabeled mini("moco", 6, 40, 48, 5, 2, 8);
    SkeletonGraph graph = chain_graph(5);
    KeypointSelection sel;
    sel.indices = {0, 1, 2, 3, 4};
    sel.shoulder_left = 0;
    sel.shoulder_right = 1;

    MocoConfig cfg;
    cfg.encoder = {{8, 16}, {1, 1}, 3};
    cfg.clip_min = 32;
    cfg.clip_max = 48;
    cfg.batch_size = 3;
    cfg.steps = 3;
    cfg.bank_capacity = 5;
    cfg.momentum = 1.0;  // momentum encoder frozen at initialization
    cfg.temperature = 0.07;

    MemoryBank bank(cfg.bank_capacity);
    auto result = moco_pretrain(*mini.corpus, cfg, graph, sel, bank, {1e-3}, 13);
    CHECK(bank.size() == 5);  // 9 keys through a capacity-5 FIFO
    REQUIRE(result.loss_history.size() == 3);
    // no augmentations -> identical views; first step has an empty bank, so
    // the only candidate is the positive and the loss is exactly zero
    CHECK(result.loss_history.front().second == doctest::Approx(0.0).epsilon(1e-12));

    MemoryBank small(2);
    CHECK_THROWS_AS(moco_pretrain(*mini.corpus, cfg, graph, sel, small, {1e-3}, 13),
                    InvalidArgument);
}

TEST_CASE("masked pretraining drives the regression loss down on constant clips") {
    testsupport::TempDir dir("masked_const");
    std::vector<std::pair<PoseSequence, SampleMeta>> samples;
    RandomSource rng(5);
    for (int i = 0; i < 4; ++i) {
        PoseSequence p = PoseSequence::zeros(48, 5);
        for (int64_t f = 0; f < 48; ++f)
            for (int64_t k = 0; k < 5; ++k) {
                p.at(f, k, 0) = 0.1f * static_cast<float>(k);
                p.at(f, k, 1) = -0.2f * static_cast<float>(k);
            }
        SampleMeta meta;
        meta.id = "const" + std::to_string(i);
        samples.emplace_back(std::move(p), meta);
    }
    PackOptions opt;
    opt.corpus_id = "const";
    std::string dest = (dir.path / "c.h5").string();
    pack(samples, dest, opt);
    auto corpus = Corpus::open(dest);

    MaskedPretrainConfig cfg;
    cfg.encoder = {2, 2, 16, 8, 32, 64};
    cfg.input_keypoints = 5;
    cfg.clip_min = 32;
    cfg.clip_max = 48;
    cfg.batch_size = 4;
    cfg.steps = 60;
    auto result = masked_pretrain(*corpus, cfg, KeypointSelection{}, {1e-3}, 31);
    REQUIRE(result.loss_history.size() == 60);
    CHECK(result.loss_history.back().second < result.loss_history.front().second);
    CHECK(result.loss_history.back().second < 0.02);
    CHECK(result.encoder.has("mask.vec"));
    CHECK(result.encoder.arch_id == "transformer");
}

TEST_CASE("transplant copies encoder tensors and keeps the head fresh") {
    MiniUnlabeled mini("transplant", 4, 40, 48, 5, 2, 9);
    DpcConfig cfg = tiny_dpc();
    SkeletonGraph graph = chain_graph(5);
    auto pre = dpc_pretrain(*mini.corpus, cfg, graph, KeypointSelection{}, {1e-3}, 17);

    ModelConfig target;
    target.variant = "stgcn";
    target.num_classes = 4;
    target.input_keypoints = 5;
    target.stgcn = cfg.encoder;
    ParameterSet planted = transplant_encoder(pre.encoder, target, 99);
    for (const auto& [name, t] : planted.values) {
        if (name.rfind("block", 0) == 0) {
            CHECK(t.v == pre.encoder.value(name).v);  // encoder copied verbatim
        }
    }
    CHECK(planted.has("head.w"));
    CHECK_FALSE(pre.encoder.has("head.w"));

    // evaluating right after a transplant works (head is random)
    Tensor logits = forward_logits(planted, target, PoseSequence::zeros(12, 5), &graph);
    CHECK(logits.cols == 4);

    ModelConfig wrong = target;
    wrong.variant = "lstm";
    wrong.input_keypoints = 5;
    CHECK_THROWS_AS(transplant_encoder(pre.encoder, wrong, 1), InvalidArgument);

    // depth mismatch is fatal without the override flag
    ModelConfig deeper = target;
    deeper.stgcn.channels = {8, 16, 32};
    deeper.stgcn.strides = {1, 1, 1};
    CHECK_THROWS_AS(transplant_encoder(pre.encoder, deeper, 1), InvalidArgument);
    CHECK_NOTHROW(transplant_encoder(pre.encoder, deeper, 1, true));
}
