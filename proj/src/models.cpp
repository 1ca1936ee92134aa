#include "slrkit/models.hpp"

#include "slrkit/common.hpp"
#include "slrkit/hash.hpp"
#include "slrkit/random.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace slrkit {

using nn::Tape;
using nn::Var;

// ---------------------------------------------------------------------------
// configuration
// ---------------------------------------------------------------------------

void ModelConfig::check() const {
    if (variant != "lstm" && variant != "transformer" && variant != "stgcn")
        throw InvalidArgument("model: unknown variant '" + variant + "'");
    if (num_classes < 2) throw InvalidArgument("model: num_classes must be >= 2");
    if (input_keypoints < 1 || input_dims < 1)
        throw InvalidArgument("model: input dimensions must be positive");
    if (variant == "lstm") {
        if (lstm.layers < 1 || lstm.hidden < 1 || lstm.attention_dim < 1)
            throw InvalidArgument("model: lstm hyperparameters must be positive");
    } else if (variant == "transformer") {
        const auto& t = transformer;
        if (t.layers < 1 || t.heads < 1 || t.hidden < 1 || t.head_dim < 1 || t.ffn < 1 ||
            t.max_seq < 2)
            throw InvalidArgument("model: transformer hyperparameters must be positive");
    } else {
        if (stgcn.channels.empty()) throw InvalidArgument("model: stgcn needs >= 1 block");
        if (stgcn.strides.size() != stgcn.channels.size())
            throw InvalidArgument("model: stgcn strides must match channels");
        for (int c : stgcn.channels)
            if (c < 1) throw InvalidArgument("model: stgcn channels must be positive");
        for (int s : stgcn.strides)
            if (s < 1) throw InvalidArgument("model: stgcn strides must be positive");
        if (stgcn.temporal_kernel < 1 || stgcn.temporal_kernel % 2 == 0)
            throw InvalidArgument("model: stgcn temporal kernel must be odd");
    }
}

std::string ModelConfig::canonical_string() const {
    std::ostringstream os;
    os << "variant=" << variant << ";classes=" << num_classes << ";k=" << input_keypoints
       << ";d=" << input_dims << ";";
    if (variant == "lstm") {
        os << "layers=" << lstm.layers << ";hidden=" << lstm.hidden
           << ";bi=" << (lstm.bidirectional ? 1 : 0) << ";attn=" << lstm.attention_dim;
    } else if (variant == "transformer") {
        os << "layers=" << transformer.layers << ";heads=" << transformer.heads
           << ";hidden=" << transformer.hidden << ";head_dim=" << transformer.head_dim
           << ";ffn=" << transformer.ffn << ";max_seq=" << transformer.max_seq;
    } else {
        os << "channels=";
        for (int c : stgcn.channels) os << c << ",";
        os << ";strides=";
        for (int s : stgcn.strides) os << s << ",";
        os << ";kt=" << stgcn.temporal_kernel;
    }
    return os.str();
}

std::string ModelConfig::config_hash() const { return sha256_hex(canonical_string()); }

// ---------------------------------------------------------------------------
// parameter set
// ---------------------------------------------------------------------------

Tensor& ParameterSet::value(const std::string& name) {
    auto it = values.find(name);
    if (it == values.end()) throw NotFound("parameter '" + name + "' not found");
    return it->second;
}

const Tensor& ParameterSet::value(const std::string& name) const {
    auto it = values.find(name);
    if (it == values.end()) throw NotFound("parameter '" + name + "' not found");
    return it->second;
}

Tensor& ParameterSet::grad(const std::string& name) {
    auto it = grads.find(name);
    if (it == grads.end()) throw NotFound("gradient slot '" + name + "' not found");
    return it->second;
}

void ParameterSet::add(const std::string& name, Tensor t) {
    if (values.count(name)) throw InvalidArgument("duplicate parameter '" + name + "'");
    grads[name] = Tensor::zeros(t.rows, t.cols);
    values[name] = std::move(t);
}

void ParameterSet::zero_grads() {
    for (auto& [name, g] : grads) g.zero();
    grads_filled = false;
}

int64_t ParameterSet::param_count() const {
    int64_t n = 0;
    for (const auto& [name, t] : values) n += t.numel();
    return n;
}

namespace {

Tensor uniform_fan_in(int64_t rows, int64_t cols, RandomSource& rng) {
    double bound = 1.0 / std::sqrt(static_cast<double>(rows));
    Tensor t(rows, cols);
    for (double& x : t.v) x = rng.uniform_real(-bound, bound);
    return t;
}

struct Initializer {
    ParameterSet& ps;
    uint64_t seed;
    void matrix(const std::string& name, int64_t rows, int64_t cols) {
        RandomSource rng(derive_seed(seed, "init:" + name));
        ps.add(name, uniform_fan_in(rows, cols, rng));
    }
    void zeros(const std::string& name, int64_t rows, int64_t cols) {
        ps.add(name, Tensor::zeros(rows, cols));
    }
    void ones(const std::string& name, int64_t rows, int64_t cols) {
        ps.add(name, Tensor::full(rows, cols, 1.0));
    }
};

// Adds the ST-GCN trunk tensors; returns the final channel count.
int64_t add_stgcn_trunk(Initializer& init, const StgcnConfig& s, int64_t K, int64_t cin) {
    for (size_t b = 0; b < s.channels.size(); ++b) {
        std::string base = "block" + std::to_string(b) + ".";
        int64_t cout = s.channels[b];
        init.ones(base + "edge", K, K);
        init.matrix(base + "gcn.w", cin, cout);
        init.zeros(base + "gcn.b", 1, cout);
        init.ones(base + "norm1.g", 1, cout);
        init.zeros(base + "norm1.b", 1, cout);
        init.matrix(base + "tcn.w", static_cast<int64_t>(s.temporal_kernel) * cout, cout);
        init.zeros(base + "tcn.b", 1, cout);
        init.ones(base + "norm2.g", 1, cout);
        init.zeros(base + "norm2.b", 1, cout);
        if (cin != cout || s.strides[b] != 1) {
            init.matrix(base + "res.w", cin, cout);
            init.ones(base + "res.norm.g", 1, cout);
            init.zeros(base + "res.norm.b", 1, cout);
        }
        cin = cout;
    }
    return cin;
}

void add_transformer_trunk(Initializer& init, const TransformerConfig& t, int64_t iw) {
    int64_t dm = t.hidden, proj = static_cast<int64_t>(t.heads) * t.head_dim;
    init.matrix("embed.w", iw, dm);
    init.zeros("embed.b", 1, dm);
    init.matrix("pos", t.max_seq, dm);
    for (int l = 0; l < t.layers; ++l) {
        std::string base = "layer" + std::to_string(l) + ".";
        init.ones(base + "ln1.g", 1, dm);
        init.zeros(base + "ln1.b", 1, dm);
        init.matrix(base + "attn.wq", dm, proj);
        init.matrix(base + "attn.wk", dm, proj);
        init.matrix(base + "attn.wv", dm, proj);
        init.zeros(base + "attn.bq", 1, proj);
        init.zeros(base + "attn.bk", 1, proj);
        init.zeros(base + "attn.bv", 1, proj);
        init.matrix(base + "attn.wo", proj, dm);
        init.zeros(base + "attn.bo", 1, dm);
        init.ones(base + "ln2.g", 1, dm);
        init.zeros(base + "ln2.b", 1, dm);
        init.matrix(base + "ffn.w1", dm, t.ffn);
        init.zeros(base + "ffn.b1", 1, t.ffn);
        init.matrix(base + "ffn.w2", t.ffn, dm);
        init.zeros(base + "ffn.b2", 1, dm);
    }
    init.ones("ln_f.g", 1, dm);
    init.zeros("ln_f.b", 1, dm);
}

}  // namespace

ParameterSet init_parameters(const ModelConfig& config, uint64_t seed) {
    config.check();
    ParameterSet ps;
    ps.arch_id = config.variant;
    ps.config_hash = config.config_hash();
    Initializer init{ps, seed};
    int64_t iw = config.input_width();

    if (config.variant == "lstm") {
        int64_t H = config.lstm.hidden;
        int64_t width = config.lstm.bidirectional ? 2 * H : H;
        std::vector<std::string> dirs = {"fw"};
        if (config.lstm.bidirectional) dirs.push_back("bw");
        for (int l = 0; l < config.lstm.layers; ++l) {
            int64_t in = (l == 0) ? iw : width;
            for (const auto& dir : dirs) {
                std::string base = "lstm.l" + std::to_string(l) + "." + dir + ".";
                init.matrix(base + "w_x", in, 4 * H);
                init.matrix(base + "w_h", H, 4 * H);
                init.zeros(base + "b", 1, 4 * H);
            }
        }
        init.matrix("attn.w", width, config.lstm.attention_dim);
        init.matrix("attn.v", config.lstm.attention_dim, 1);
        init.matrix("head.w", width, config.num_classes);
        init.zeros("head.b", 1, config.num_classes);
    } else if (config.variant == "transformer") {
        add_transformer_trunk(init, config.transformer, iw);
        init.matrix("cls", 1, config.transformer.hidden);
        init.matrix("head.w", config.transformer.hidden, config.num_classes);
        init.zeros("head.b", 1, config.num_classes);
    } else {
        int64_t last =
            add_stgcn_trunk(init, config.stgcn, config.input_keypoints, config.input_dims);
        init.matrix("head.w", last, config.num_classes);
        init.zeros("head.b", 1, config.num_classes);
    }
    return ps;
}

ParameterSet init_stgcn_encoder(const StgcnConfig& cfg, int keypoints, int dims, uint64_t seed) {
    ParameterSet ps;
    ps.arch_id = "stgcn";
    ModelConfig probe;
    probe.variant = "stgcn";
    probe.num_classes = 2;
    probe.input_keypoints = keypoints;
    probe.input_dims = dims;
    probe.stgcn = cfg;
    probe.check();
    ps.config_hash = sha256_hex("encoder;" + probe.canonical_string());
    Initializer init{ps, seed};
    add_stgcn_trunk(init, cfg, keypoints, dims);
    return ps;
}

ParameterSet init_transformer_encoder(const TransformerConfig& cfg, int input_width,
                                      uint64_t seed) {
    ParameterSet ps;
    ps.arch_id = "transformer";
    ModelConfig probe;
    probe.variant = "transformer";
    probe.num_classes = 2;
    probe.input_keypoints = input_width / 2;
    probe.input_dims = 2;
    probe.transformer = cfg;
    probe.check();
    ps.config_hash = sha256_hex("encoder;" + probe.canonical_string());
    Initializer init{ps, seed};
    add_transformer_trunk(init, cfg, input_width);
    return ps;
}

// ---------------------------------------------------------------------------
// forwards
// ---------------------------------------------------------------------------

Tensor flatten_pose(const PoseSequence& pose) {
    Tensor x(pose.frames, pose.keypoints * pose.dims);
    for (int64_t f = 0; f < pose.frames; ++f)
        for (int64_t k = 0; k < pose.keypoints; ++k)
            for (int64_t d = 0; d < pose.dims; ++d)
                x.at(f, k * pose.dims + d) = pose.at(f, k, d);
    return x;
}

Var ParamBinder::operator()(const std::string& name) {
    auto it = bound_.find(name);
    if (it != bound_.end()) return it->second;
    Tensor* sink = train_ ? &params_.grad(name) : nullptr;
    Var v = tape_.param(&params_.value(name), sink);
    bound_[name] = v;
    return v;
}

namespace {

// One LSTM direction over precomputed input projections [F, 4H]; emits
// the per-frame hidden states in processing order.
Var lstm_direction(Tape& t, Var xproj, Var w_h, Var b, int64_t H, bool backward_dir) {
    int64_t F = t.val(xproj).rows;
    Var h = t.constant(Tensor::zeros(1, H));
    Var c = t.constant(Tensor::zeros(1, H));
    std::vector<Var> hs;
    hs.reserve(static_cast<size_t>(F));
    for (int64_t step = 0; step < F; ++step) {
        int64_t row = backward_dir ? F - 1 - step : step;
        Var gates = t.add(t.add(t.slice_rows(xproj, row, row + 1), t.matmul(h, w_h)), b);
        Var i = t.sigmoid_(t.slice_cols(gates, 0, H));
        Var f = t.sigmoid_(t.slice_cols(gates, H, 2 * H));
        Var g = t.tanh_(t.slice_cols(gates, 2 * H, 3 * H));
        Var o = t.sigmoid_(t.slice_cols(gates, 3 * H, 4 * H));
        c = t.add(t.mul(f, c), t.mul(i, g));
        h = t.mul(o, t.tanh_(c));
        hs.push_back(h);
    }
    Var seq = t.concat_rows(hs);
    return backward_dir ? t.reverse_rows(seq) : seq;
}

Var concat_cols_fold(Tape& t, const std::vector<Var>& parts) {
    Var acc = parts.front();
    for (size_t i = 1; i < parts.size(); ++i) acc = t.concat_cols(acc, parts[i]);
    return acc;
}

}  // namespace

namespace {

struct LstmPooled {
    Var alpha;    // [1, F]
    Var context;  // [1, width]
};

LstmPooled lstm_trunk(Tape& t, ParamBinder& bind, const ModelConfig& cfg,
                      const PoseSequence& pose) {
    if (pose.frames < 1) throw InvalidArgument("lstm_forward: empty sequence");
    int64_t H = cfg.lstm.hidden;
    Var x = t.constant(flatten_pose(pose));
    for (int l = 0; l < cfg.lstm.layers; ++l) {
        std::string base = "lstm.l" + std::to_string(l) + ".";
        Var fw = lstm_direction(t, t.matmul(x, bind(base + "fw.w_x")), bind(base + "fw.w_h"),
                                bind(base + "fw.b"), H, false);
        if (cfg.lstm.bidirectional) {
            Var bw = lstm_direction(t, t.matmul(x, bind(base + "bw.w_x")), bind(base + "bw.w_h"),
                                    bind(base + "bw.b"), H, true);
            x = t.concat_cols(fw, bw);
        } else {
            x = fw;
        }
    }
    // temporal attention pooling: alpha = softmax_t(v' tanh(W h_t))
    Var scores = t.matmul(t.tanh_(t.matmul(x, bind("attn.w"))), bind("attn.v"));  // [F,1]
    LstmPooled out;
    out.alpha = t.softmax_rows(t.transpose(scores));  // [1,F]
    out.context = t.matmul(out.alpha, x);
    return out;
}

}  // namespace

Var lstm_logits(Tape& t, ParamBinder& bind, const ModelConfig& cfg, const PoseSequence& pose) {
    LstmPooled pooled = lstm_trunk(t, bind, cfg, pose);
    return t.add(t.matmul(pooled.context, bind("head.w")), bind("head.b"));
}

Tensor lstm_attention_weights(const ParameterSet& params, const ModelConfig& cfg,
                              const PoseSequence& pose) {
    Tape tape(false);
    ParamBinder bind(tape, const_cast<ParameterSet&>(params), false);
    LstmPooled pooled = lstm_trunk(tape, bind, cfg, pose);
    return tape.val(pooled.alpha);
}

Var transformer_encode(Tape& t, ParamBinder& bind, const TransformerConfig& cfg, Var input_rows,
                       bool prepend_cls) {
    int64_t T = t.val(input_rows).rows;
    if (T > cfg.max_seq - 1)
        throw InvalidArgument("transformer_encode: input longer than max_seq-1");
    Var x = t.add_rowvec(t.matmul(input_rows, bind("embed.w")), bind("embed.b"));
    if (prepend_cls) {
        x = t.concat_rows({bind("cls"), x});
        x = t.add(x, t.slice_rows(bind("pos"), 0, T + 1));
    } else {
        // content positions match the classifier layout (row 0 is CLS)
        x = t.add(x, t.slice_rows(bind("pos"), 1, T + 1));
    }
    int64_t hd = cfg.head_dim;
    double inv_sqrt_hd = 1.0 / std::sqrt(static_cast<double>(hd));
    for (int l = 0; l < cfg.layers; ++l) {
        std::string base = "layer" + std::to_string(l) + ".";
        Var n1 = t.layer_norm_rows(x, bind(base + "ln1.g"), bind(base + "ln1.b"));
        Var q = t.add_rowvec(t.matmul(n1, bind(base + "attn.wq")), bind(base + "attn.bq"));
        Var k = t.add_rowvec(t.matmul(n1, bind(base + "attn.wk")), bind(base + "attn.bk"));
        Var v = t.add_rowvec(t.matmul(n1, bind(base + "attn.wv")), bind(base + "attn.bv"));
        std::vector<Var> heads;
        for (int h = 0; h < cfg.heads; ++h) {
            Var qh = t.slice_cols(q, h * hd, (h + 1) * hd);
            Var kh = t.slice_cols(k, h * hd, (h + 1) * hd);
            Var vh = t.slice_cols(v, h * hd, (h + 1) * hd);
            Var attn = t.softmax_rows(t.scale(t.matmul(qh, t.transpose(kh)), inv_sqrt_hd));
            heads.push_back(t.matmul(attn, vh));
        }
        Var ctx = concat_cols_fold(t, heads);
        x = t.add(x, t.add_rowvec(t.matmul(ctx, bind(base + "attn.wo")), bind(base + "attn.bo")));
        Var n2 = t.layer_norm_rows(x, bind(base + "ln2.g"), bind(base + "ln2.b"));
        Var h1 = t.relu_(t.add_rowvec(t.matmul(n2, bind(base + "ffn.w1")), bind(base + "ffn.b1")));
        x = t.add(x, t.add_rowvec(t.matmul(h1, bind(base + "ffn.w2")), bind(base + "ffn.b2")));
    }
    return t.layer_norm_rows(x, bind("ln_f.g"), bind("ln_f.b"));
}

Var transformer_logits(Tape& t, ParamBinder& bind, const ModelConfig& cfg,
                       const PoseSequence& pose) {
    if (pose.frames < 1) throw InvalidArgument("transformer_forward: empty sequence");
    Tensor flat = flatten_pose(pose);
    int64_t T = std::min<int64_t>(flat.rows, cfg.transformer.max_seq - 1);
    if (T < flat.rows) {  // truncate to the first max_seq-1 frames
        Tensor trimmed(T, flat.cols);
        std::copy(flat.v.begin(), flat.v.begin() + T * flat.cols, trimmed.v.begin());
        flat = std::move(trimmed);
    }
    Var encoded = transformer_encode(t, bind, cfg.transformer, t.constant(std::move(flat)), true);
    Var cls = t.slice_rows(encoded, 0, 1);
    return t.add(t.matmul(cls, bind("head.w")), bind("head.b"));
}

Var stgcn_embed(Tape& t, ParamBinder& bind, const StgcnConfig& cfg, const PoseSequence& pose,
                const SkeletonGraph& graph) {
    if (pose.keypoints != graph.node_count)
        throw InvalidArgument("stgcn_forward: pose has " + std::to_string(pose.keypoints) +
                              " keypoints but graph has " + std::to_string(graph.node_count) +
                              " nodes");
    int64_t K = graph.node_count;
    int64_t T = pose.frames;
    Tensor x0(T * K, pose.dims);
    for (int64_t f = 0; f < T; ++f)
        for (int64_t k = 0; k < K; ++k)
            for (int64_t d = 0; d < pose.dims; ++d) x0.at(f * K + k, d) = pose.at(f, k, d);
    Tensor adj(K, K);
    adj.v = graph.adjacency_normalized;
    Var x = t.constant(std::move(x0));
    for (size_t b = 0; b < cfg.channels.size(); ++b) {
        std::string base = "block" + std::to_string(b) + ".";
        int64_t stride = cfg.strides[b];
        int64_t cin = t.val(x).cols;
        int64_t cout = cfg.channels[b];
        Var mixer = t.mul_const(bind(base + "edge"), adj);
        Var s = t.graph_mix(x, mixer, T, K);
        Var y = t.add_rowvec(t.matmul(s, bind(base + "gcn.w")), bind(base + "gcn.b"));
        y = t.relu_(t.instance_norm_cols(y, bind(base + "norm1.g"), bind(base + "norm1.b")));
        Var z = t.temporal_conv(y, bind(base + "tcn.w"), bind(base + "tcn.b"), T, K,
                                cfg.temporal_kernel, stride);
        z = t.instance_norm_cols(z, bind(base + "norm2.g"), bind(base + "norm2.b"));
        Var res;
        if (cin == cout && stride == 1) {
            res = x;
        } else {
            Var r = t.temporal_conv(x, bind(base + "res.w"), Var{}, T, K, 1, stride);
            res = t.instance_norm_cols(r, bind(base + "res.norm.g"), bind(base + "res.norm.b"));
        }
        x = t.relu_(t.add(z, res));
        T = (T - 1) / stride + 1;
    }
    return t.mean_rows(x);  // average pool across frames and nodes
}

Var stgcn_logits(Tape& t, ParamBinder& bind, const ModelConfig& cfg, const PoseSequence& pose,
                 const SkeletonGraph& graph) {
    Var pooled = stgcn_embed(t, bind, cfg.stgcn, pose, graph);
    return t.add(t.matmul(pooled, bind("head.w")), bind("head.b"));
}

Var model_logits(Tape& t, ParamBinder& bind, const ModelConfig& cfg, const PoseSequence& pose,
                 const SkeletonGraph* graph) {
    if (pose.frames < 1) throw InvalidArgument("forward: empty sequence");
    if (cfg.variant == "lstm") return lstm_logits(t, bind, cfg, pose);
    if (cfg.variant == "transformer") return transformer_logits(t, bind, cfg, pose);
    if (cfg.variant == "stgcn") {
        if (!graph) throw InvalidArgument("stgcn_forward: skeleton graph required");
        return stgcn_logits(t, bind, cfg, pose, *graph);
    }
    throw InvalidArgument("forward: unknown variant '" + cfg.variant + "'");
}

Tensor forward_logits(const ParameterSet& params, const ModelConfig& cfg, const PoseSequence& pose,
                      const SkeletonGraph* graph) {
    Tape tape(false);
    // inference never touches gradients; the const_cast is confined here
    ParamBinder bind(tape, const_cast<ParameterSet&>(params), false);
    Var logits = model_logits(tape, bind, cfg, pose, graph);
    return tape.val(logits);
}

const Tensor& ModelSession::forward(const PoseSequence& pose) {
    tape_.emplace(true);
    binder_.emplace(*tape_, params_, true);
    logits_ = model_logits(*tape_, *binder_, cfg_, pose, graph_);
    logits_values_ = tape_->val(logits_);
    return logits_values_;
}

double ModelSession::backward(int64_t label, double scale) {
    if (!tape_.has_value()) throw Error("backward without a recorded forward");
    Var loss = tape_->cross_entropy_row(logits_, label);
    double value = tape_->val(loss).v[0];
    tape_->backward(loss, scale);
    params_.grads_filled = true;
    tape_.reset();
    binder_.reset();
    return value;
}

// ---------------------------------------------------------------------------
// checkpoints
// ---------------------------------------------------------------------------

namespace {
constexpr char kMagic[4] = {'S', 'L', 'R', 'K'};

void write_string(std::ofstream& f, const std::string& s) {
    uint32_t len = static_cast<uint32_t>(s.size());
    f.write(reinterpret_cast<const char*>(&len), 4);
    f.write(s.data(), len);
}

std::string read_string(std::ifstream& f) {
    uint32_t len = 0;
    f.read(reinterpret_cast<char*>(&len), 4);
    std::string s(len, '\0');
    f.read(s.data(), len);
    return s;
}
}  // namespace

void save_checkpoint(const ParameterSet& params, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot write checkpoint " + path);
    f.write(kMagic, 4);
    uint32_t version = 1;
    f.write(reinterpret_cast<const char*>(&version), 4);
    write_string(f, params.arch_id);
    write_string(f, params.config_hash);
    uint64_t count = params.values.size();
    f.write(reinterpret_cast<const char*>(&count), 8);
    for (const auto& [name, tensor] : params.values) {
        write_string(f, name);
        uint64_t rows = static_cast<uint64_t>(tensor.rows), cols = static_cast<uint64_t>(tensor.cols);
        f.write(reinterpret_cast<const char*>(&rows), 8);
        f.write(reinterpret_cast<const char*>(&cols), 8);
        std::vector<float> data(tensor.v.size());
        for (size_t i = 0; i < data.size(); ++i) data[i] = static_cast<float>(tensor.v[i]);
        f.write(reinterpret_cast<const char*>(data.data()),
                static_cast<std::streamsize>(data.size() * sizeof(float)));
    }
    if (!f) throw IoError("short write on checkpoint " + path);
}

ParameterSet load_checkpoint(const std::string& path, const std::string& expected_config_hash,
                             bool allow_hash_mismatch) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open checkpoint " + path);
    char magic[4];
    f.read(magic, 4);
    uint32_t version = 0;
    f.read(reinterpret_cast<char*>(&version), 4);
    if (std::memcmp(magic, kMagic, 4) != 0 || version != 1)
        throw IoError("bad checkpoint header in " + path);
    ParameterSet ps;
    ps.arch_id = read_string(f);
    ps.config_hash = read_string(f);
    if (!expected_config_hash.empty() && ps.config_hash != expected_config_hash &&
        !allow_hash_mismatch)
        throw InvalidArgument("checkpoint " + path +
                              " config hash mismatch (pass the override flag to load anyway)");
    uint64_t count = 0;
    f.read(reinterpret_cast<char*>(&count), 8);
    for (uint64_t i = 0; i < count; ++i) {
        std::string name = read_string(f);
        uint64_t rows = 0, cols = 0;
        f.read(reinterpret_cast<char*>(&rows), 8);
        f.read(reinterpret_cast<char*>(&cols), 8);
        Tensor tensor(static_cast<int64_t>(rows), static_cast<int64_t>(cols));
        std::vector<float> data(tensor.v.size());
        f.read(reinterpret_cast<char*>(data.data()),
               static_cast<std::streamsize>(data.size() * sizeof(float)));
        for (size_t j = 0; j < data.size(); ++j) tensor.v[j] = static_cast<double>(data[j]);
        ps.add(name, std::move(tensor));
    }
    if (!f) throw IoError("truncated checkpoint " + path);
    return ps;
}

std::vector<std::string> encoder_prefixes(const std::string& arch_id) {
    if (arch_id == "lstm") return {"lstm."};
    if (arch_id == "transformer") return {"embed.", "pos", "layer", "ln_f."};
    if (arch_id == "stgcn") return {"block"};
    throw InvalidArgument("unknown architecture id '" + arch_id + "'");
}

}  // namespace slrkit
