#include "slrkit/train.hpp"

#include "slrkit/common.hpp"
#include "slrkit/pretrain.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <set>
#include <thread>

namespace slrkit {

void Adam::step(ParameterSet& params) {
    if (!params.grads_filled) throw Error("adam_step: gradients are empty (no backward recorded)");
    ++t_;
    double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (auto& [name, value] : params.values) {
        const Tensor& g = params.grad(name);
        Tensor& m = m_[name];
        Tensor& v = v_[name];
        if (m.numel() == 0) {
            m = Tensor::zeros(value.rows, value.cols);
            v = Tensor::zeros(value.rows, value.cols);
        }
        for (size_t i = 0; i < value.v.size(); ++i) {
            double gi = g.v[i];
            m.v[i] = cfg_.beta1 * m.v[i] + (1.0 - cfg_.beta1) * gi;
            v.v[i] = cfg_.beta2 * v.v[i] + (1.0 - cfg_.beta2) * gi * gi;
            double mhat = m.v[i] / bc1;
            double vhat = v.v[i] / bc2;
            value.v[i] -= cfg_.learning_rate * mhat / (std::sqrt(vhat) + cfg_.epsilon);
        }
    }
    params.zero_grads();
}

double cross_entropy(const Tensor& logits, int64_t label) {
    if (logits.rows != 1) throw InvalidArgument("cross_entropy: logits must be [1,C]");
    if (label < 0 || label >= logits.cols)
        throw InvalidArgument("cross_entropy: label " + std::to_string(label) +
                              " out of range for " + std::to_string(logits.cols) + " classes");
    double mx = -std::numeric_limits<double>::infinity();
    for (int64_t c = 0; c < logits.cols; ++c) mx = std::max(mx, logits.at(0, c));
    double denom = 0.0;
    for (int64_t c = 0; c < logits.cols; ++c) denom += std::exp(logits.at(0, c) - mx);
    return std::log(denom) - (logits.at(0, label) - mx);
}

void TrainConfig::check() const {
    if (batch_size < 1) throw InvalidArgument("train: batch_size must be >= 1");
    if (!(learning_rate > 0.0)) throw InvalidArgument("train: learning_rate must be > 0");
    if (max_epochs < 0) throw InvalidArgument("train: max_epochs must be >= 0");
    if (beta1 <= 0.0 || beta1 >= 1.0 || beta2 <= 0.0 || beta2 >= 1.0)
        throw InvalidArgument("train: betas must be in (0,1)");
    if (patience < 1) throw InvalidArgument("train: patience must be >= 1");
    model.check();
    check_pipeline(train_transforms, false);
    check_pipeline(eval_transforms, true);
}

int64_t argmax_lowest_index(const Tensor& logits) {
    int64_t best = 0;
    for (int64_t c = 1; c < logits.cols; ++c)
        if (logits.at(0, c) > logits.at(0, best)) best = c;  // ties keep the lowest index
    return best;
}

int64_t prediction_rank(const Tensor& logits, int64_t label) {
    int64_t rank = 0;
    double ls = logits.at(0, label);
    for (int64_t c = 0; c < logits.cols; ++c) {
        if (c == label) continue;
        double s = logits.at(0, c);
        if (s > ls || (s == ls && c < label)) ++rank;
    }
    return rank;
}

int worker_threads() {
    const char* env = std::getenv("SLRKIT_THREADS");
    if (!env) return 1;
    int n = std::atoi(env);
    return n < 1 ? 1 : n;
}

namespace {

struct CachedSample {
    std::string id;
    PoseSequence pose;
    int64_t label;
};

std::vector<CachedSample> load_ids(const Corpus& corpus, const std::vector<std::string>& ids) {
    std::vector<CachedSample> out;
    out.reserve(ids.size());
    for (const auto& id : ids) {
        LabeledSample s = corpus.get(id);
        out.push_back({id, std::move(s.pose), s.label});
    }
    return out;
}

// Deterministic parallel map: results land in index order regardless of
// scheduling, and every task owns its derived rng.
template <typename Fn>
void parallel_for(int64_t n, Fn&& fn) {
    int threads = std::min<int64_t>(worker_threads(), n);
    if (threads <= 1) {
        for (int64_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    std::atomic<int64_t> next{0};
    for (int t = 0; t < threads; ++t)
        pool.emplace_back([&] {
            for (int64_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) fn(i);
        });
    for (auto& th : pool) th.join();
}

}  // namespace

Metrics evaluate(const ParameterSet& params, const ModelConfig& model, const Corpus& corpus,
                 const std::vector<std::string>& ids,
                 const std::vector<TransformStep>& eval_transforms, const KeypointSelection& sel,
                 const SkeletonGraph* graph, const std::vector<int64_t>& topk) {
    if (ids.empty()) throw InvalidArgument("evaluate: empty split");
    check_pipeline(eval_transforms, true);
    int64_t C = model.num_classes;
    std::vector<int64_t> correct_at_rank(static_cast<size_t>(C), 0);
    std::vector<int64_t> class_total(static_cast<size_t>(C), 0), class_hit(static_cast<size_t>(C), 0);
    double loss_sum = 0.0;
    // container reads stay serial (the HDF5 library is not thread-safe);
    // transforms and forwards fan out
    std::vector<PoseSequence> poses(ids.size());
    for (size_t i = 0; i < ids.size(); ++i) poses[i] = corpus.get(ids[i]).pose;
    std::vector<Tensor> logits_all(ids.size());
    parallel_for(static_cast<int64_t>(ids.size()), [&](int64_t i) {
        PoseSequence pose = std::move(poses[static_cast<size_t>(i)]);
        if (!eval_transforms.empty()) {
            RandomSource rng(0);  // pipeline is validated deterministic
            pose = compose(eval_transforms, pose, sel, rng);
        }
        logits_all[static_cast<size_t>(i)] = forward_logits(params, model, pose, graph);
    });
    for (size_t i = 0; i < ids.size(); ++i) {
        int64_t label = corpus.record(ids[i]).label.value_or(-1);
        if (label < 0 || label >= C)
            throw InvalidArgument("evaluate: sample '" + ids[i] + "' has no usable label");
        const Tensor& logits = logits_all[i];
        loss_sum += cross_entropy(logits, label);
        int64_t rank = prediction_rank(logits, label);
        if (rank < C) ++correct_at_rank[static_cast<size_t>(rank)];
        ++class_total[static_cast<size_t>(label)];
        if (rank == 0) ++class_hit[static_cast<size_t>(label)];
    }
    Metrics m;
    m.loss = loss_sum / static_cast<double>(ids.size());
    std::vector<int64_t> cumulative(static_cast<size_t>(C), 0);
    int64_t acc = 0;
    for (int64_t r = 0; r < C; ++r) {
        acc += correct_at_rank[static_cast<size_t>(r)];
        cumulative[static_cast<size_t>(r)] = acc;
    }
    auto top_at = [&](int64_t k) {
        k = std::min<int64_t>(k, C);
        return static_cast<double>(cumulative[static_cast<size_t>(k - 1)]) /
               static_cast<double>(ids.size());
    };
    m.top1 = top_at(1);
    for (int64_t k : topk) {
        if (k < 1 || k > C)
            throw InvalidArgument("evaluate: top-k with k=" + std::to_string(k) +
                                  " outside [1, num_classes]");
        m.topk[k] = top_at(k);
    }
    m.per_class.resize(static_cast<size_t>(C), 0.0);
    for (int64_t c = 0; c < C; ++c)
        if (class_total[static_cast<size_t>(c)] > 0)
            m.per_class[static_cast<size_t>(c)] =
                static_cast<double>(class_hit[static_cast<size_t>(c)]) /
                static_cast<double>(class_total[static_cast<size_t>(c)]);
    return m;
}

Metrics evaluate_split(const ParameterSet& params, const ModelConfig& model, const Corpus& corpus,
                       const std::string& split,
                       const std::vector<TransformStep>& eval_transforms,
                       const KeypointSelection& sel, const SkeletonGraph* graph,
                       const std::vector<int64_t>& topk) {
    return evaluate(params, model, corpus, corpus.split(split), eval_transforms, sel, graph, topk);
}

TrainResult train_classifier(const TrainConfig& config, const Corpus& corpus,
                             const std::string& train_split, const std::string& val_split,
                             const KeypointSelection& sel, const SkeletonGraph* graph,
                             const ParameterSet* initial,
                             const std::vector<std::string>* train_ids_override) {
    config.check();
    const auto& manifest = corpus.manifest();
    if (manifest.labeled() &&
        static_cast<int64_t>(manifest.vocabulary.size()) != config.model.num_classes)
        throw InvalidArgument("train: num_classes (" + std::to_string(config.model.num_classes) +
                              ") does not match vocabulary size (" +
                              std::to_string(manifest.vocabulary.size()) + ")");

    std::vector<std::string> train_ids =
        train_ids_override ? *train_ids_override : corpus.split(train_split);
    const std::vector<std::string>& val_ids = corpus.split(val_split);
    if (val_ids.empty()) throw InvalidArgument("train: validation split is empty");
    if (train_ids.empty()) throw InvalidArgument("train: train split is empty");
    {
        std::set<std::string> train_set(corpus.split(train_split).begin(),
                                        corpus.split(train_split).end());
        for (const auto& id : train_ids)
            if (!train_set.count(id))
                throw InvalidArgument("train: override id '" + id + "' not in split '" +
                                      train_split + "'");
        for (const auto& id : val_ids)
            if (train_set.count(id))
                throw InvalidArgument("train: splits overlap on sample '" + id + "'");
    }

    ParameterSet params = init_parameters(config.model, derive_seed(config.seed, "init"));
    if (initial)
        params = transplant_encoder(*initial, config.model, derive_seed(config.seed, "init"),
                                    config.init_allow_mismatch);

    TrainResult result;
    if (config.max_epochs == 0) {
        result.best_val = evaluate(params, config.model, corpus, val_ids, config.eval_transforms,
                                   sel, graph, config.topk);
        result.best_params = std::move(params);
        return result;
    }

    std::vector<CachedSample> train_data = load_ids(corpus, train_ids);
    Adam adam({config.learning_rate, config.beta1, config.beta2, config.epsilon});
    double best_top1 = -1.0;
    int64_t epochs_since_best = 0;
    auto run_start = std::chrono::steady_clock::now();

    for (int64_t epoch = 0; epoch < config.max_epochs; ++epoch) {
        // seeded shuffle
        RandomSource shuffle_rng(derive_seed(config.seed, "shuffle:" + std::to_string(epoch)));
        std::vector<size_t> order(train_data.size());
        for (size_t i = 0; i < order.size(); ++i) order[i] = i;
        for (size_t i = order.size(); i > 1; --i) {
            size_t j = static_cast<size_t>(shuffle_rng.uniform_int(0, static_cast<int64_t>(i) - 1));
            std::swap(order[i - 1], order[j]);
        }

        double loss_sum = 0.0;
        int64_t seen = 0;
        for (size_t b0 = 0; b0 < order.size(); b0 += static_cast<size_t>(config.batch_size)) {
            size_t b1 = std::min(order.size(), b0 + static_cast<size_t>(config.batch_size));
            int64_t bn = static_cast<int64_t>(b1 - b0);
            std::vector<PoseSequence> batch(static_cast<size_t>(bn));
            parallel_for(bn, [&](int64_t i) {
                const CachedSample& s = train_data[order[b0 + static_cast<size_t>(i)]];
                RandomSource rng(derive_seed(config.seed, "transform:" + s.id + ":" +
                                                              std::to_string(epoch)));
                batch[static_cast<size_t>(i)] =
                    config.train_transforms.empty()
                        ? s.pose
                        : compose(config.train_transforms, s.pose, sel, rng);
            });
            params.zero_grads();
            double batch_loss = 0.0;
            for (int64_t i = 0; i < bn; ++i) {
                const CachedSample& s = train_data[order[b0 + static_cast<size_t>(i)]];
                ModelSession session(params, config.model, graph);
                session.forward(batch[static_cast<size_t>(i)]);
                batch_loss += session.backward(s.label, 1.0 / static_cast<double>(bn));
            }
            batch_loss /= static_cast<double>(bn);
            if (!std::isfinite(batch_loss))
                throw Error("train: non-finite loss at epoch " + std::to_string(epoch) +
                            " (diverged; lower the learning rate)");
            adam.step(params);
            loss_sum += batch_loss * static_cast<double>(bn);
            seen += bn;
        }

        Metrics val = evaluate(params, config.model, corpus, val_ids, config.eval_transforms, sel,
                               graph, config.topk);
        EpochRecord rec;
        rec.epoch = epoch;
        rec.train_loss = loss_sum / static_cast<double>(seen);
        rec.val_top1 = val.top1;
        rec.val_topk = val.topk;
        rec.wall_time_s =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - run_start).count();
        result.history.push_back(rec);

        if (val.top1 > best_top1) {
            best_top1 = val.top1;
            result.best_params = params;  // copy of the current best
            result.best_val = val;
            epochs_since_best = 0;
        } else {
            ++epochs_since_best;
            if (epochs_since_best >= config.patience) break;
        }
    }
    return result;
}

void write_history_jsonl(const std::vector<EpochRecord>& history, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw IoError("cannot write metrics " + path);
    for (const auto& rec : history) {
        nlohmann::json obj;
        obj["epoch"] = rec.epoch;
        obj["train_loss"] = rec.train_loss;
        obj["val_top1"] = rec.val_top1;
        nlohmann::json topk = nlohmann::json::object();
        for (const auto& [k, acc] : rec.val_topk) topk[std::to_string(k)] = acc;
        obj["val_topk"] = std::move(topk);
        obj["wall_time_s"] = rec.wall_time_s;
        f << obj.dump() << "\n";
    }
}

}  // namespace slrkit
