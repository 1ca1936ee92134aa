#include "slrkit/pretrain.hpp"

#include "slrkit/common.hpp"

#include <algorithm>
#include <cmath>

namespace slrkit {

using nn::Tape;
using nn::Var;

WindowBatch partition_windows(const PoseSequence& pose, int64_t window_len) {
    if (window_len < 1) throw InvalidArgument("partition_windows: window_len must be >= 1");
    if (pose.frames < window_len)
        throw InvalidArgument("partition_windows: clip has " + std::to_string(pose.frames) +
                              " frames, need at least " + std::to_string(window_len));
    int64_t count = pose.frames / window_len;
    WindowBatch windows;
    windows.reserve(static_cast<size_t>(count));
    for (int64_t w = 0; w < count; ++w) {
        PoseSequence win;
        win.frames = window_len;
        win.keypoints = pose.keypoints;
        win.dims = pose.dims;
        win.fps = pose.fps;
        int64_t f0 = w * window_len;
        win.data.assign(pose.data.begin() + f0 * pose.keypoints * pose.dims,
                        pose.data.begin() + (f0 + window_len) * pose.keypoints * pose.dims);
        win.valid.assign(pose.valid.begin() + f0 * pose.keypoints,
                         pose.valid.begin() + (f0 + window_len) * pose.keypoints);
        windows.push_back(std::move(win));
    }
    return windows;
}

double infonce_loss(const std::vector<std::vector<double>>& predicted,
                    const std::vector<std::vector<double>>& actual,
                    const std::vector<std::vector<double>>& negatives) {
    if (predicted.size() != actual.size())
        throw InvalidArgument("infonce_loss: predicted/actual length mismatch");
    if (predicted.empty()) throw InvalidArgument("infonce_loss: no positives");
    size_t dim = predicted.front().size();
    auto check_dim = [&](const std::vector<double>& v) {
        if (v.size() != dim) throw InvalidArgument("infonce_loss: embedding dimension mismatch");
    };
    auto dot = [](const std::vector<double>& a, const std::vector<double>& b) {
        double s = 0.0;
        for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
        return s;
    };
    double total = 0.0;
    for (size_t i = 0; i < predicted.size(); ++i) {
        check_dim(predicted[i]);
        check_dim(actual[i]);
        double pos = dot(predicted[i], actual[i]);
        std::vector<double> scores{pos};
        for (const auto& n : negatives) {
            check_dim(n);
            scores.push_back(dot(predicted[i], n));
        }
        double mx = *std::max_element(scores.begin(), scores.end());
        double denom = 0.0;
        for (double s : scores) denom += std::exp(s - mx);
        total += std::log(denom) - (pos - mx);
    }
    return total;
}

MemoryBank::MemoryBank(int64_t capacity) : capacity_(capacity) {
    if (capacity < 1) throw InvalidArgument("MemoryBank: capacity must be >= 1");
}

void MemoryBank::enqueue(std::vector<double> embedding) {
    if (static_cast<int64_t>(entries_.size()) == capacity_) entries_.pop_front();
    entries_.push_back(std::move(embedding));
}

void DpcConfig::check() const {
    if (window_len < 1) throw InvalidArgument("dpc: window_len must be >= 1");
    if (input_windows < 1 || predict_windows < 1)
        throw InvalidArgument("dpc: window counts must be >= 1");
    if (gru_hidden < 1) throw InvalidArgument("dpc: gru_hidden must be >= 1");
    if (clip_min < 1 || clip_min > clip_max)
        throw InvalidArgument("dpc: require 1 <= clip_min <= clip_max");
    if (clip_max < frames_needed())
        throw InvalidArgument("dpc: clip_max shorter than the " +
                              std::to_string(frames_needed()) + " frames the window layout needs");
    if (batch_size < 2) throw InvalidArgument("dpc: batch_size must be >= 2");
    if (encoder.channels.empty()) throw InvalidArgument("dpc: encoder needs >= 1 block");
}

namespace {

Var gru_cell(Tape& t, Var x, Var h, Var w_x, Var w_h, Var b, int64_t H) {
    Var gx = t.add(t.matmul(x, w_x), b);  // [1,3H]
    Var gh = t.matmul(h, w_h);
    Var r = t.sigmoid_(t.add(t.slice_cols(gx, 0, H), t.slice_cols(gh, 0, H)));
    Var u = t.sigmoid_(t.add(t.slice_cols(gx, H, 2 * H), t.slice_cols(gh, H, 2 * H)));
    Var n = t.tanh_(t.add(t.slice_cols(gx, 2 * H, 3 * H),
                          t.mul(r, t.slice_cols(gh, 2 * H, 3 * H))));
    Var one = t.constant(Tensor::full(1, H, 1.0));
    return t.add(t.mul(t.sub(one, u), n), t.mul(u, h));
}

// Embeds every window and rolls the GRU out over the futures. Returns the
// predicted and actual embedding rows as tape vars.
struct DpcRollout {
    std::vector<Var> predicted;
    std::vector<Var> actual;
};

DpcRollout dpc_rollout(Tape& t, ParamBinder& bind, const DpcConfig& cfg,
                       const SkeletonGraph& graph, const WindowBatch& windows) {
    int64_t need = cfg.input_windows + cfg.predict_windows;
    if (static_cast<int64_t>(windows.size()) < need)
        throw InvalidArgument("dpc_forward: " + std::to_string(windows.size()) +
                              " windows but the configuration needs " + std::to_string(need));
    int64_t H = cfg.gru_hidden;
    std::vector<Var> embeddings;
    for (int64_t w = 0; w < need; ++w)
        embeddings.push_back(stgcn_embed(t, bind, cfg.encoder, windows[static_cast<size_t>(w)], graph));

    Var w_x = bind("gru.w_x"), w_h = bind("gru.w_h"), b = bind("gru.b");
    Var h = t.constant(Tensor::zeros(1, H));
    for (int64_t i = 0; i < cfg.input_windows; ++i)
        h = gru_cell(t, embeddings[static_cast<size_t>(i)], h, w_x, w_h, b, H);

    DpcRollout out;
    for (int64_t p = 0; p < cfg.predict_windows; ++p) {
        Var zhat = t.add(t.matmul(h, bind("phi.w")), bind("phi.b"));
        out.predicted.push_back(zhat);
        out.actual.push_back(embeddings[static_cast<size_t>(cfg.input_windows + p)]);
        if (p + 1 < cfg.predict_windows) h = gru_cell(t, zhat, h, w_x, w_h, b, H);
    }
    return out;
}

std::vector<double> row_values(const Tape& t, Var v) { return t.val(v).v; }

ParameterSet init_dpc_parameters(const DpcConfig& cfg, int keypoints, int dims, uint64_t seed) {
    ParameterSet ps = init_stgcn_encoder(cfg.encoder, keypoints, dims, seed);
    int64_t E = cfg.embedding_dim();
    int64_t H = cfg.gru_hidden;
    auto matrix = [&](const std::string& name, int64_t rows, int64_t cols) {
        RandomSource rng(derive_seed(seed, "init:" + name));
        double bound = 1.0 / std::sqrt(static_cast<double>(rows));
        Tensor t(rows, cols);
        for (double& x : t.v) x = rng.uniform_real(-bound, bound);
        ps.add(name, std::move(t));
    };
    matrix("gru.w_x", E, 3 * H);
    matrix("gru.w_h", H, 3 * H);
    ps.add("gru.b", Tensor::zeros(1, 3 * H));
    matrix("phi.w", H, E);
    ps.add("phi.b", Tensor::zeros(1, E));
    return ps;
}

PoseSequence apply_clip_transforms(const std::vector<TransformStep>& steps,
                                   const PoseSequence& pose, const KeypointSelection& sel,
                                   uint64_t seed) {
    if (steps.empty()) return pose;
    RandomSource rng(seed);
    return compose(steps, pose, sel, rng);
}

}  // namespace

DpcForwardResult dpc_forward(const ParameterSet& params, const DpcConfig& config,
                             const SkeletonGraph& graph, const WindowBatch& windows) {
    config.check();
    Tape tape(false);
    ParamBinder bind(tape, const_cast<ParameterSet&>(params), false);
    DpcRollout roll = dpc_rollout(tape, bind, config, graph, windows);
    DpcForwardResult out;
    for (Var v : roll.predicted) out.predicted.push_back(row_values(tape, v));
    for (Var v : roll.actual) out.actual.push_back(row_values(tape, v));
    return out;
}

PretrainResult dpc_pretrain(const Corpus& corpus, const DpcConfig& config,
                            const SkeletonGraph& graph, const KeypointSelection& sel,
                            const AdamConfig& optimizer, uint64_t seed) {
    config.check();
    ParameterSet params = init_dpc_parameters(config, static_cast<int>(graph.node_count), 2,
                                              derive_seed(seed, "dpc-init"));
    Adam adam(optimizer);
    RandomSource clip_rng(derive_seed(seed, "dpc-clips"));
    int64_t min_len = std::max(config.clip_min, config.frames_needed());
    PretrainResult result;
    int64_t P = config.predict_windows;

    for (int64_t step = 0; step < config.steps; ++step) {
        Tape tape(true);
        ParamBinder bind(tape, params, true);
        std::vector<Var> zhat_rows, z_rows;
        for (int64_t b = 0; b < config.batch_size; ++b) {
            PoseSequence clip = sample_pretraining_clip(corpus, clip_rng, min_len, config.clip_max);
            clip = apply_clip_transforms(config.transforms, clip, sel,
                                         derive_seed(seed, "dpc-norm:" + std::to_string(step) +
                                                               ":" + std::to_string(b)));
            WindowBatch windows = partition_windows(clip, config.window_len);
            DpcRollout roll = dpc_rollout(tape, bind, config, graph, windows);
            for (Var v : roll.predicted) zhat_rows.push_back(v);
            for (Var v : roll.actual) z_rows.push_back(v);
        }
        // scores[i][j] = zhat_i . z_j; every actual embedding in the batch
        // is the positive for its own prediction and a negative for the rest
        Var zhat = tape.concat_rows(zhat_rows);
        Var z = tape.concat_rows(z_rows);
        Var scores = tape.matmul(zhat, tape.transpose(z));
        int64_t n = config.batch_size * P;
        std::vector<Var> losses;
        for (int64_t i = 0; i < n; ++i)
            losses.push_back(tape.cross_entropy_row(tape.slice_rows(scores, i, i + 1), i));
        Var loss = losses.front();
        for (size_t i = 1; i < losses.size(); ++i) loss = tape.add(loss, losses[i]);
        loss = tape.scale(loss, 1.0 / static_cast<double>(n));
        double loss_value = tape.val(loss).v[0];
        if (!std::isfinite(loss_value))
            throw Error("dpc_pretrain: non-finite loss at step " + std::to_string(step));
        params.zero_grads();
        tape.backward(loss);
        params.grads_filled = true;
        adam.step(params);
        result.loss_history.emplace_back(step, loss_value);
    }
    result.encoder = std::move(params);
    return result;
}

double dpc_eval_loss(const ParameterSet& params, const DpcConfig& config,
                     const SkeletonGraph& graph, const std::vector<WindowBatch>& batch,
                     bool shuffle_futures, uint64_t shuffle_seed) {
    if (batch.empty()) throw InvalidArgument("dpc_eval_loss: empty batch");
    RandomSource rng(shuffle_seed);
    std::vector<std::vector<double>> zhat_all, z_all;
    for (const auto& windows : batch) {
        DpcForwardResult r = dpc_forward(params, config, graph, windows);
        if (shuffle_futures) {
            // cyclic shift guarantees every future lands on a wrong slot
            int64_t P = static_cast<int64_t>(r.actual.size());
            int64_t shift = P > 1 ? rng.uniform_int(1, P - 1) : 0;
            std::rotate(r.actual.begin(), r.actual.begin() + shift, r.actual.end());
        }
        for (auto& v : r.predicted) zhat_all.push_back(std::move(v));
        for (auto& v : r.actual) z_all.push_back(std::move(v));
    }
    double total = 0.0;
    size_t n = zhat_all.size();
    for (size_t i = 0; i < n; ++i) {
        std::vector<double> scores;
        scores.reserve(n);
        double pos = 0.0;
        for (size_t j = 0; j < n; ++j) {
            double s = 0.0;
            for (size_t d = 0; d < zhat_all[i].size(); ++d) s += zhat_all[i][d] * z_all[j][d];
            scores.push_back(s);
            if (j == i) pos = s;
        }
        double mx = *std::max_element(scores.begin(), scores.end());
        double denom = 0.0;
        for (double s : scores) denom += std::exp(s - mx);
        total += std::log(denom) - (pos - mx);
    }
    return total / static_cast<double>(n);
}

// ---------------------------------------------------------------------------
// contrastive (MoCo-style)
// ---------------------------------------------------------------------------

void MocoConfig::check() const {
    if (bank_capacity < 1) throw InvalidArgument("moco: bank capacity must be >= 1");
    if (momentum < 0.0 || momentum > 1.0) throw InvalidArgument("moco: momentum must be in [0,1]");
    if (!(temperature > 0.0)) throw InvalidArgument("moco: temperature must be > 0");
    if (batch_size < 1) throw InvalidArgument("moco: batch_size must be >= 1");
    if (clip_min < 1 || clip_min > clip_max)
        throw InvalidArgument("moco: require 1 <= clip_min <= clip_max");
}

PretrainResult moco_pretrain(const Corpus& corpus, const MocoConfig& config,
                             const SkeletonGraph& graph, const KeypointSelection& sel,
                             MemoryBank& bank, const AdamConfig& optimizer, uint64_t seed) {
    config.check();
    if (bank.capacity() < config.batch_size)
        throw InvalidArgument("moco_pretrain: bank capacity " + std::to_string(bank.capacity()) +
                              " below batch size " + std::to_string(config.batch_size));
    ParameterSet online = init_stgcn_encoder(config.encoder, static_cast<int>(graph.node_count), 2,
                                             derive_seed(seed, "moco-init"));
    ParameterSet momentum_enc = online;  // starts as a copy
    Adam adam(optimizer);
    RandomSource clip_rng(derive_seed(seed, "moco-clips"));
    PretrainResult result;

    for (int64_t step = 0; step < config.steps; ++step) {
        // momentum update before the keys are computed
        for (auto& [name, value] : momentum_enc.values) {
            const Tensor& src = online.value(name);
            for (size_t i = 0; i < value.v.size(); ++i)
                value.v[i] = config.momentum * value.v[i] + (1.0 - config.momentum) * src.v[i];
        }

        Tape tape(true);
        ParamBinder bind_q(tape, online, true);
        std::vector<Var> losses;
        std::vector<std::vector<double>> new_keys;
        for (int64_t b = 0; b < config.batch_size; ++b) {
            PoseSequence clip = sample_pretraining_clip(corpus, clip_rng, config.clip_min,
                                                        config.clip_max);
            std::string tag = std::to_string(step) + ":" + std::to_string(b);
            clip = apply_clip_transforms(config.transforms, clip, sel,
                                         derive_seed(seed, "moco-norm:" + tag));
            PoseSequence view_q = apply_clip_transforms(config.augmentations, clip, sel,
                                                        derive_seed(seed, "moco-q:" + tag));
            PoseSequence view_k = apply_clip_transforms(config.augmentations, clip, sel,
                                                        derive_seed(seed, "moco-k:" + tag));
            Var q = tape.l2_normalize_rows(stgcn_embed(tape, bind_q, config.encoder, view_q, graph));

            Tape ktape(false);
            ParamBinder bind_k(ktape, momentum_enc, false);
            Var kvar = ktape.l2_normalize_rows(
                stgcn_embed(ktape, bind_k, config.encoder, view_k, graph));
            std::vector<double> key = ktape.val(kvar).v;

            Tensor key_row(1, static_cast<int64_t>(key.size()));
            key_row.v = key;
            Var s_pos = tape.matmul(q, tape.transpose(tape.constant(std::move(key_row))));
            Var row = s_pos;
            if (bank.size() > 0) {
                Tensor negs(bank.size(), static_cast<int64_t>(key.size()));
                int64_t r = 0;
                for (const auto& e : bank.entries()) {
                    std::copy(e.begin(), e.end(), negs.v.begin() + r * negs.cols);
                    ++r;
                }
                Var s_neg = tape.matmul(q, tape.transpose(tape.constant(std::move(negs))));
                row = tape.concat_cols(s_pos, s_neg);
            }
            row = tape.scale(row, 1.0 / config.temperature);
            losses.push_back(tape.cross_entropy_row(row, 0));
            new_keys.push_back(std::move(key));
        }
        Var loss = losses.front();
        for (size_t i = 1; i < losses.size(); ++i) loss = tape.add(loss, losses[i]);
        loss = tape.scale(loss, 1.0 / static_cast<double>(losses.size()));
        double loss_value = tape.val(loss).v[0];
        if (!std::isfinite(loss_value))
            throw Error("moco_pretrain: non-finite loss at step " + std::to_string(step));
        online.zero_grads();
        tape.backward(loss);
        online.grads_filled = true;
        adam.step(online);
        for (auto& key : new_keys) bank.enqueue(std::move(key));
        result.loss_history.emplace_back(step, loss_value);
    }
    result.encoder = std::move(online);
    return result;
}

// ---------------------------------------------------------------------------
// masked pretraining
// ---------------------------------------------------------------------------

void MaskConfig::check() const {
    if (!(mask_ratio > 0.0) || !(mask_ratio < 1.0))
        throw InvalidArgument("mask: ratio must be in (0,1)");
    if (contiguous_spans && (span_min < 1 || span_min > span_max))
        throw InvalidArgument("mask: require 1 <= span_min <= span_max");
}

void MaskedPretrainConfig::check() const {
    mask.check();
    if (clip_min < 1 || clip_min > clip_max)
        throw InvalidArgument("masked: require 1 <= clip_min <= clip_max");
    if (clip_max > encoder.max_seq - 1)
        throw InvalidArgument("masked: clips longer than the encoder max_seq-1");
    if (batch_size < 1) throw InvalidArgument("masked: batch_size must be >= 1");
}

std::vector<uint8_t> draw_frame_mask(int64_t frames, const MaskConfig& config, RandomSource& rng) {
    int64_t target = std::max<int64_t>(
        1, static_cast<int64_t>(std::llround(static_cast<double>(frames) * config.mask_ratio)));
    target = std::min(target, frames);
    std::vector<uint8_t> mask(static_cast<size_t>(frames), 0);
    if (!config.contiguous_spans) {
        std::vector<int64_t> idx(static_cast<size_t>(frames));
        for (int64_t i = 0; i < frames; ++i) idx[static_cast<size_t>(i)] = i;
        for (int64_t i = 0; i < target; ++i) {
            int64_t j = rng.uniform_int(i, frames - 1);
            std::swap(idx[static_cast<size_t>(i)], idx[static_cast<size_t>(j)]);
            mask[static_cast<size_t>(idx[static_cast<size_t>(i)])] = 1;
        }
        return mask;
    }
    int64_t masked = 0;
    int64_t guard = 0;
    while (masked < target && guard++ < 64 * frames) {
        int64_t len = rng.uniform_int(config.span_min, config.span_max);
        int64_t start = rng.uniform_int(0, frames - 1);
        for (int64_t f = start; f < std::min(frames, start + len) && masked < target; ++f) {
            if (!mask[static_cast<size_t>(f)]) {
                mask[static_cast<size_t>(f)] = 1;
                ++masked;
            }
        }
    }
    for (int64_t f = 0; masked < target && f < frames; ++f) {  // guard fallback
        if (!mask[static_cast<size_t>(f)]) {
            mask[static_cast<size_t>(f)] = 1;
            ++masked;
        }
    }
    return mask;
}

std::vector<int> direction_labels(const PoseSequence& pose, double delta) {
    if (pose.frames < 2) throw InvalidArgument("direction_labels: need at least 2 frames");
    std::vector<int> labels(static_cast<size_t>(pose.frames * pose.keypoints),
                            static_cast<int>(DirectionLabel::Static));
    for (int64_t f = 1; f < pose.frames; ++f) {
        for (int64_t k = 0; k < pose.keypoints; ++k) {
            double vx = static_cast<double>(pose.at(f, k, 0)) - pose.at(f - 1, k, 0);
            double vy = static_cast<double>(pose.at(f, k, 1)) - pose.at(f - 1, k, 1);
            DirectionLabel label;
            if (std::hypot(vx, vy) <= delta) {
                label = DirectionLabel::Static;
            } else if (vx > 0.0 && vy <= 0.0) {
                label = DirectionLabel::Q1;  // right-up on screen
            } else if (vx <= 0.0 && vy < 0.0) {
                label = DirectionLabel::Q2;  // left-up
            } else if (vx < 0.0 && vy >= 0.0) {
                label = DirectionLabel::Q3;  // left-down
            } else {
                label = DirectionLabel::Q4;  // right-down
            }
            labels[static_cast<size_t>(f * pose.keypoints + k)] = static_cast<int>(label);
        }
    }
    return labels;
}

PretrainResult masked_pretrain(const Corpus& corpus, const MaskedPretrainConfig& config,
                               const KeypointSelection& sel, const AdamConfig& optimizer,
                               uint64_t seed) {
    config.check();
    int64_t iw = static_cast<int64_t>(config.input_keypoints) * config.input_dims;
    int64_t K = config.input_keypoints;
    ParameterSet params = init_transformer_encoder(config.encoder, static_cast<int>(iw),
                                                   derive_seed(seed, "masked-init"));
    {
        auto matrix = [&](const std::string& name, int64_t rows, int64_t cols) {
            RandomSource rng(derive_seed(seed, "init:" + name));
            double bound = 1.0 / std::sqrt(static_cast<double>(rows));
            Tensor t(rows, cols);
            for (double& x : t.v) x = rng.uniform_real(-bound, bound);
            params.add(name, std::move(t));
        };
        matrix("mask.vec", 1, iw);
        matrix("reg.w", config.encoder.hidden, iw);
        params.add("reg.b", Tensor::zeros(1, iw));
        if (config.mask.direction_loss) {
            matrix("dir.w", config.encoder.hidden, K * 5);
            params.add("dir.b", Tensor::zeros(1, K * 5));
        }
    }
    Adam adam(optimizer);
    RandomSource clip_rng(derive_seed(seed, "masked-clips"));
    PretrainResult result;

    for (int64_t step = 0; step < config.steps; ++step) {
        Tape tape(true);
        ParamBinder bind(tape, params, true);
        std::vector<Var> losses;
        for (int64_t b = 0; b < config.batch_size; ++b) {
            PoseSequence clip = sample_pretraining_clip(corpus, clip_rng, config.clip_min,
                                                        config.clip_max);
            clip = apply_clip_transforms(config.transforms, clip, sel,
                                         derive_seed(seed, "masked-norm:" + std::to_string(step) +
                                                               ":" + std::to_string(b)));
            RandomSource mask_rng(derive_seed(seed, "mask:" + std::to_string(step) + ":" +
                                                        std::to_string(b)));
            std::vector<uint8_t> mask = draw_frame_mask(clip.frames, config.mask, mask_rng);

            Tensor target = flatten_pose(clip);
            Tensor kept = target;
            std::vector<double> mask_col(static_cast<size_t>(clip.frames), 0.0);
            for (int64_t f = 0; f < clip.frames; ++f) {
                if (mask[static_cast<size_t>(f)]) {
                    mask_col[static_cast<size_t>(f)] = 1.0;
                    for (int64_t c = 0; c < kept.cols; ++c) kept.at(f, c) = 0.0;
                }
            }
            // masked rows carry the learned mask vector instead of zeros
            Var mask_rows = tape.scale_rows_const(
                tape.broadcast_row(bind("mask.vec"), clip.frames), mask_col);
            Var input = tape.add(tape.constant(std::move(kept)), mask_rows);
            Var encoded = transformer_encode(tape, bind, config.encoder, input, false);
            Var pred = tape.add_rowvec(tape.matmul(encoded, bind("reg.w")), bind("reg.b"));
            Var loss = tape.mse_masked_rows(pred, target, mask);
            if (config.mask.direction_loss) {
                std::vector<int> labels = direction_labels(clip, config.static_threshold);
                Var dir_logits =
                    tape.add_rowvec(tape.matmul(encoded, bind("dir.w")), bind("dir.b"));
                loss = tape.add(loss, tape.grouped_cross_entropy_masked(dir_logits, labels, mask,
                                                                        K, 5));
            }
            losses.push_back(loss);
        }
        Var loss = losses.front();
        for (size_t i = 1; i < losses.size(); ++i) loss = tape.add(loss, losses[i]);
        loss = tape.scale(loss, 1.0 / static_cast<double>(losses.size()));
        double loss_value = tape.val(loss).v[0];
        if (!std::isfinite(loss_value))
            throw Error("masked_pretrain: non-finite loss at step " + std::to_string(step));
        params.zero_grads();
        tape.backward(loss);
        params.grads_filled = true;
        adam.step(params);
        result.loss_history.emplace_back(step, loss_value);
    }
    result.encoder = std::move(params);
    return result;
}

ParameterSet transplant_encoder(const ParameterSet& pretrained, const ModelConfig& target,
                                uint64_t head_seed, bool allow_mismatch) {
    target.check();
    if (pretrained.arch_id != target.variant)
        throw InvalidArgument("transplant_encoder: pretrained family '" + pretrained.arch_id +
                              "' does not match target '" + target.variant + "'");
    ParameterSet fresh = init_parameters(target, head_seed);
    auto prefixes = encoder_prefixes(target.variant);
    auto is_encoder_tensor = [&](const std::string& name) {
        for (const auto& p : prefixes)
            if (name.rfind(p, 0) == 0) return true;
        return false;
    };
    for (auto& [name, value] : fresh.values) {
        if (!is_encoder_tensor(name)) continue;  // classifier head stays fresh
        if (!pretrained.has(name)) {
            if (allow_mismatch) continue;
            throw InvalidArgument("transplant_encoder: pretrained set lacks tensor '" + name +
                                  "' (pass the override flag to skip)");
        }
        const Tensor& src = pretrained.value(name);
        if (!value.same_shape(src)) {
            if (allow_mismatch) continue;
            throw InvalidArgument("transplant_encoder: shape mismatch on '" + name + "'");
        }
        value = src;
    }
    return fresh;
}

}  // namespace slrkit
