#include "hdawf/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

#include "hdawf/kernels.hpp"
#include "hdawf/rng.hpp"

namespace hdawf {

namespace k = kernels;

ModelConfig ModelConfig::standard(std::size_t input_len, std::size_t num_classes) {
    ModelConfig c;
    c.input_len = input_len;
    c.num_classes = num_classes;
    c.blocks = {
        {32, 3, 1, 1, Pool::max2, true},
        {64, 3, 2, 1, Pool::max2, true},
        {64, 3, 4, 1, Pool::none, true},
        {128, 3, 8, 1, Pool::none, true},
    };
    c.fc = {128};
    return c;
}

std::size_t ModelConfig::length_before(std::size_t block) const {
    std::size_t len = input_len;
    for (std::size_t i = 0; i < block && i < blocks.size(); ++i) {
        len = (len - 1) / blocks[i].stride + 1;
        if (blocks[i].pool == Pool::max2) len /= 2;
    }
    return len;
}

void ModelConfig::validate() const {
    if (input_len == 0) throw ModelError("model.input_len must be positive");
    if (num_classes < 2) throw ModelError("model.num_classes must be >= 2");
    if (blocks.empty()) throw ModelError("model needs at least one conv block");
    std::size_t len = input_len;
    for (std::size_t i = 0; i < blocks.size(); ++i) {
        const auto& b = blocks[i];
        const std::string where = "conv block " + std::to_string(i + 1) + ": ";
        if (b.out_channels == 0) throw ModelError(where + "zero channels");
        if (b.kernel == 0 || b.kernel % 2 == 0) throw ModelError(where + "kernel size must be odd");
        if (b.dilation == 0) throw ModelError(where + "dilation must be >= 1");
        if (b.stride == 0) throw ModelError(where + "stride must be >= 1");
        len = (len - 1) / b.stride + 1;
        if (b.pool == Pool::max2) len /= 2;
        if (len == 0) throw ModelError(where + "sequence length shrinks to zero");
    }
    for (std::size_t w : fc) {
        if (w == 0) throw ModelError("model.fc widths must be positive");
    }
}

namespace {

template <typename T, typename F>
std::string join(const std::vector<T>& v, F f) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) s += ',';
        s += f(v[i]);
    }
    return s;
}

std::vector<std::size_t> parse_counts(const std::string& key, const std::string& v) {
    std::vector<std::size_t> out;
    for (const auto& item : split_list(v)) out.push_back(parse_count(key, item));
    return out;
}

}  // namespace

KeyValues ModelConfig::to_kv() const {
    KeyValues kv;
    auto num = [](std::size_t x) { return std::to_string(x); };
    kv["model.input_len"] = num(input_len);
    kv["model.num_classes"] = num(num_classes);
    std::vector<std::size_t> ch, ks, dil, st;
    std::vector<std::string> pools, causal;
    for (const auto& b : blocks) {
        ch.push_back(b.out_channels);
        ks.push_back(b.kernel);
        dil.push_back(b.dilation);
        st.push_back(b.stride);
        pools.push_back(b.pool == Pool::max2 ? "max2" : "none");
        causal.push_back(b.causal ? "true" : "false");
    }
    kv["model.channels"] = join(ch, num);
    kv["model.kernels"] = join(ks, num);
    kv["model.dilations"] = join(dil, num);
    kv["model.strides"] = join(st, num);
    kv["model.pools"] = join(pools, [](const std::string& s) { return s; });
    kv["model.causal"] = join(causal, [](const std::string& s) { return s; });
    kv["model.fc"] = join(fc, num);
    return kv;
}

ModelConfig ModelConfig::from_kv(const KeyValues& kv) {
    auto get = [&](const std::string& key) -> const std::string& {
        auto it = kv.find(key);
        if (it == kv.end()) throw ModelError("missing model key '" + key + "'");
        return it->second;
    };
    ModelConfig c;
    c.input_len = parse_count("model.input_len", get("model.input_len"));
    c.num_classes = parse_count("model.num_classes", get("model.num_classes"));
    const auto ch = parse_counts("model.channels", get("model.channels"));
    auto per_block = [&](const std::string& key) {
        auto it = kv.find(key);
        return it == kv.end() ? std::vector<std::string>{} : split_list(it->second);
    };
    const auto ks = per_block("model.kernels");
    const auto dil = per_block("model.dilations");
    const auto st = per_block("model.strides");
    const auto pools = per_block("model.pools");
    const auto causal = per_block("model.causal");
    auto check_len = [&](const std::vector<std::string>& v, const char* key) {
        if (!v.empty() && v.size() != ch.size() && v.size() != 1) {
            throw ModelError(std::string(key) + ": expected " + std::to_string(ch.size()) +
                             " entries (one per block) or a single shared value");
        }
    };
    check_len(ks, "model.kernels");
    check_len(dil, "model.dilations");
    check_len(st, "model.strides");
    check_len(pools, "model.pools");
    check_len(causal, "model.causal");
    auto at = [](const std::vector<std::string>& v, std::size_t i) -> const std::string& {
        return v.size() == 1 ? v[0] : v[i];
    };
    for (std::size_t i = 0; i < ch.size(); ++i) {
        ConvBlock b;
        b.out_channels = ch[i];
        if (!ks.empty()) b.kernel = parse_count("model.kernels", at(ks, i));
        if (!dil.empty()) b.dilation = parse_count("model.dilations", at(dil, i));
        if (!st.empty()) b.stride = parse_count("model.strides", at(st, i));
        if (!pools.empty()) {
            const auto& p = at(pools, i);
            if (p == "max2") b.pool = Pool::max2;
            else if (p == "none") b.pool = Pool::none;
            else throw ModelError("model.pools: unknown pool '" + p + "'");
        }
        if (!causal.empty()) b.causal = parse_bool("model.causal", at(causal, i));
        c.blocks.push_back(b);
    }
    if (auto it = kv.find("model.fc"); it != kv.end()) c.fc = parse_counts("model.fc", it->second);
    c.validate();
    return c;
}

Tensor::Tensor(std::vector<std::size_t> s) : shape(std::move(s)) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    data.assign(n, 0.0);
}

std::size_t ModelParams::parameter_count() const {
    std::size_t n = 0;
    for (const auto& t : tensors) n += t.size();
    return n;
}

std::string tensor_name(const ModelConfig& cfg, std::size_t i) {
    const std::size_t layer = i / 2;
    const char* kind = i % 2 == 0 ? ".weight" : ".bias";
    if (layer < cfg.blocks.size()) return "conv" + std::to_string(layer + 1) + kind;
    return "fc" + std::to_string(layer - cfg.blocks.size() + 1) + kind;
}

namespace {

struct DenseShape {
    std::size_t in, out;
};

struct Plan {
    std::vector<k::ConvGeom> conv;
    std::vector<bool> pooled;
    std::size_t feat_channels = 0;
    std::size_t feat_len = 0;
    std::vector<DenseShape> dense;
};

Plan make_plan(const ModelConfig& cfg) {
    Plan p;
    std::size_t len = cfg.input_len;
    std::size_t ch = 1;
    for (const auto& b : cfg.blocks) {
        p.conv.push_back(k::make_conv_geom(ch, b.out_channels, b.kernel, b.dilation, b.stride,
                                           b.causal, len));
        len = p.conv.back().out_len;
        p.pooled.push_back(b.pool == Pool::max2);
        if (b.pool == Pool::max2) len /= 2;
        ch = b.out_channels;
    }
    p.feat_channels = ch;
    p.feat_len = len;
    std::size_t in = ch;
    for (std::size_t w : cfg.fc) {
        p.dense.push_back({in, w});
        in = w;
    }
    p.dense.push_back({in, cfg.num_classes});
    return p;
}

std::vector<Tensor> zero_like(const ModelConfig& cfg) {
    const Plan p = make_plan(cfg);
    std::vector<Tensor> t;
    for (const auto& g : p.conv) {
        t.emplace_back(std::vector<std::size_t>{g.out_channels, g.in_channels, g.kernel});
        t.emplace_back(std::vector<std::size_t>{g.out_channels});
    }
    for (const auto& d : p.dense) {
        t.emplace_back(std::vector<std::size_t>{d.out, d.in});
        t.emplace_back(std::vector<std::size_t>{d.out});
    }
    return t;
}

void check_shapes(const ModelParams& params) {
    const auto expect = zero_like(params.config);
    if (expect.size() != params.tensors.size()) {
        throw ModelError("parameter tensor count does not match model config");
    }
    for (std::size_t i = 0; i < expect.size(); ++i) {
        if (expect[i].shape != params.tensors[i].shape ||
            params.tensors[i].data.size() != expect[i].data.size()) {
            throw ModelError("tensor " + tensor_name(params.config, i) + " has the wrong shape");
        }
    }
}

struct Cache {
    std::vector<std::vector<double>> conv_act;  // post-ReLU conv outputs
    std::vector<std::vector<double>> pooled;
    std::vector<std::vector<std::size_t>> argmax;
    std::vector<double> feat;
    std::vector<std::vector<double>> dense_out;  // post-ReLU hidden, raw logits last
    std::vector<double> probs;
};

std::span<const double> block_input(const Plan& p, const Cache& c, const Signal& x, std::size_t i) {
    if (i == 0) return x;
    return p.pooled[i - 1] ? std::span<const double>(c.pooled[i - 1])
                           : std::span<const double>(c.conv_act[i - 1]);
}

void forward_sample(const Plan& p, const ModelParams& params, const Signal& x, Cache& c) {
    const auto& T = params.tensors;
    const std::size_t nb = p.conv.size();
    c.conv_act.resize(nb);
    c.pooled.resize(nb);
    c.argmax.resize(nb);
    for (std::size_t i = 0; i < nb; ++i) {
        const auto& g = p.conv[i];
        c.conv_act[i].resize(g.out_channels * g.out_len);
        k::conv1d_forward(g, block_input(p, c, x, i), T[2 * i].data, T[2 * i + 1].data, c.conv_act[i]);
        k::relu_inplace(c.conv_act[i]);
        if (p.pooled[i]) {
            const std::size_t n = g.out_channels * (g.out_len / 2);
            c.pooled[i].resize(n);
            c.argmax[i].resize(n);
            k::maxpool2_forward(g.out_channels, g.out_len, c.conv_act[i], c.pooled[i], c.argmax[i]);
        }
    }
    const auto last = p.pooled[nb - 1] ? std::span<const double>(c.pooled[nb - 1])
                                       : std::span<const double>(c.conv_act[nb - 1]);
    c.feat.resize(p.feat_channels);
    k::global_avg_pool_forward(p.feat_channels, p.feat_len, last, c.feat);

    c.dense_out.resize(p.dense.size());
    std::span<const double> in = c.feat;
    for (std::size_t j = 0; j < p.dense.size(); ++j) {
        const std::size_t ti = 2 * (nb + j);
        c.dense_out[j].resize(p.dense[j].out);
        k::dense_forward(p.dense[j].in, p.dense[j].out, in, T[ti].data, T[ti + 1].data, c.dense_out[j]);
        if (j + 1 < p.dense.size()) k::relu_inplace(c.dense_out[j]);
        in = c.dense_out[j];
    }
    c.probs.resize(p.dense.back().out);
    k::softmax(c.dense_out.back(), c.probs);
}

// Accumulates this sample's gradient into grads.
void backward_sample(const Plan& p, const ModelParams& params, const Signal& x, const Cache& c,
                     std::vector<double> g, std::vector<Tensor>& grads) {
    const auto& T = params.tensors;
    const std::size_t nb = p.conv.size();
    for (std::size_t jj = p.dense.size(); jj-- > 0;) {
        const std::size_t ti = 2 * (nb + jj);
        std::span<const double> in = jj == 0 ? std::span<const double>(c.feat)
                                             : std::span<const double>(c.dense_out[jj - 1]);
        std::vector<double> gin(p.dense[jj].in);
        k::dense_backward(p.dense[jj].in, p.dense[jj].out, in, T[ti].data, g, gin, grads[ti].data,
                          grads[ti + 1].data);
        if (jj > 0) k::relu_backward(c.dense_out[jj - 1], gin);
        g = std::move(gin);
    }
    std::vector<double> gblock(p.feat_channels * p.feat_len);
    k::global_avg_pool_backward(p.feat_channels, p.feat_len, g, gblock);

    for (std::size_t i = nb; i-- > 0;) {
        const auto& geom = p.conv[i];
        std::vector<double> gact;
        if (p.pooled[i]) {
            gact.resize(geom.out_channels * geom.out_len);
            k::maxpool2_backward(geom.out_channels, geom.out_len, gblock, c.argmax[i], gact);
        } else {
            gact = std::move(gblock);
        }
        k::relu_backward(c.conv_act[i], gact);
        std::vector<double> gin;
        if (i > 0) gin.resize(geom.in_channels * geom.in_len);
        k::conv1d_backward(geom, block_input(p, c, x, i), T[2 * i].data, gact, gin,
                           grads[2 * i].data, grads[2 * i + 1].data);
        gblock = std::move(gin);
    }
}

void check_batch(const ModelParams& params, const std::vector<Signal>& batch) {
    for (std::size_t i = 0; i < batch.size(); ++i) {
        if (batch[i].size() != params.config.input_len) {
            throw ModelError("sample " + std::to_string(i) + " has length " +
                             std::to_string(batch[i].size()) + ", model expects " +
                             std::to_string(params.config.input_len));
        }
    }
}

}  // namespace

ModelParams init_params(const ModelConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    ModelParams mp;
    mp.config = cfg;
    mp.init_seed = seed;
    mp.tensors = zero_like(cfg);
    Rng rng = make_rng(derive_seed(seed, Stream::init));
    const std::size_t n_layers = mp.tensors.size() / 2;
    for (std::size_t layer = 0; layer < n_layers; ++layer) {
        Tensor& w = mp.tensors[2 * layer];
        std::size_t fan_in = 1;
        for (std::size_t d = 1; d < w.shape.size(); ++d) fan_in *= w.shape[d];
        // He-uniform for ReLU layers, LeCun-uniform for the output layer.
        const bool output = layer + 1 == n_layers;
        const double bound = std::sqrt((output ? 3.0 : 6.0) / static_cast<double>(fan_in));
        for (double& v : w.data) v = (2.0 * uniform_real(rng) - 1.0) * bound;
    }
    return mp;
}

ForwardResult forward(const ModelParams& params, const std::vector<Signal>& batch, Exec exec) {
    check_shapes(params);
    check_batch(params, batch);
    const Plan p = make_plan(params.config);
    ForwardResult r;
    r.probs.resize(batch.size());
    r.features.resize(batch.size());
    const auto n = static_cast<std::ptrdiff_t>(batch.size());
    if (exec == Exec::parallel) {
#pragma omp parallel
        {
            Cache c;
#pragma omp for schedule(static)
            for (std::ptrdiff_t i = 0; i < n; ++i) {
                forward_sample(p, params, batch[i], c);
                r.probs[i] = c.probs;
                r.features[i] = c.feat;
            }
        }
    } else {
        Cache c;
        for (std::ptrdiff_t i = 0; i < n; ++i) {
            forward_sample(p, params, batch[i], c);
            r.probs[i] = c.probs;
            r.features[i] = c.feat;
        }
    }
    return r;
}

double cross_entropy(const std::vector<SoftLabel>& probs, const std::vector<SoftLabel>& targets) {
    if (probs.size() != targets.size()) throw ModelError("cross_entropy: batch sizes differ");
    if (probs.empty()) throw ModelError("cross_entropy: empty batch");
    double total = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        if (probs[i].size() != targets[i].size()) {
            throw ModelError("cross_entropy: sample " + std::to_string(i) + " dimension mismatch");
        }
        double s = 0.0;
        for (std::size_t j = 0; j < probs[i].size(); ++j) {
            if (targets[i][j] != 0.0) s -= targets[i][j] * std::log(std::max(probs[i][j], kLogFloor));
        }
        total += s;
    }
    return total / static_cast<double>(probs.size());
}

LossAndGrad backward(const ModelParams& params, const std::vector<Signal>& batch,
                     const std::vector<SoftLabel>& targets, Exec exec) {
    check_shapes(params);
    check_batch(params, batch);
    if (batch.size() != targets.size()) throw ModelError("backward: batch and target sizes differ");
    if (batch.empty()) throw ModelError("backward: empty batch");
    const std::size_t K = params.config.num_classes;
    for (std::size_t i = 0; i < targets.size(); ++i) {
        if (targets[i].size() != K) {
            throw ModelError("target " + std::to_string(i) + " has dimension " +
                             std::to_string(targets[i].size()) + ", model has " + std::to_string(K));
        }
    }

    const Plan p = make_plan(params.config);
    const std::size_t B = batch.size();
    const double inv_b = 1.0 / static_cast<double>(B);
    std::vector<SoftLabel> probs(B);

    // d(mean CE)/d(logits) for one sample; targets need not be one-hot.
    auto logit_grad = [&](const Cache& c, std::size_t i) {
        double tsum = 0.0;
        for (double t : targets[i]) tsum += t;
        std::vector<double> g(K);
        for (std::size_t j = 0; j < K; ++j) g[j] = (c.probs[j] * tsum - targets[i][j]) * inv_b;
        return g;
    };

    LossAndGrad out;
    out.grads = zero_like(params.config);
    if (exec == Exec::parallel) {
        std::vector<std::vector<Tensor>> per_sample(B);
        const auto n = static_cast<std::ptrdiff_t>(B);
#pragma omp parallel
        {
            Cache c;
#pragma omp for schedule(static)
            for (std::ptrdiff_t i = 0; i < n; ++i) {
                forward_sample(p, params, batch[i], c);
                probs[i] = c.probs;
                per_sample[i] = zero_like(params.config);
                backward_sample(p, params, batch[i], c, logit_grad(c, i), per_sample[i]);
            }
        }
        for (std::size_t i = 0; i < B; ++i) {
            for (std::size_t t = 0; t < out.grads.size(); ++t) {
                auto& dst = out.grads[t].data;
                const auto& src = per_sample[i][t].data;
                for (std::size_t e = 0; e < dst.size(); ++e) dst[e] += src[e];
            }
        }
    } else {
        Cache c;
        for (std::size_t i = 0; i < B; ++i) {
            forward_sample(p, params, batch[i], c);
            probs[i] = c.probs;
            backward_sample(p, params, batch[i], c, logit_grad(c, i), out.grads);
        }
    }

    for (std::size_t t = 0; t < out.grads.size(); ++t) {
        for (double v : out.grads[t].data) {
            if (!std::isfinite(v)) {
                throw ModelError("non-finite gradient in " + tensor_name(params.config, t));
            }
        }
    }
    out.loss = cross_entropy(probs, targets);
    return out;
}

Prediction argmax(const SoftLabel& probs) {
    Prediction p;
    for (std::size_t j = 0; j < probs.size(); ++j) {
        if (probs[j] > probs[p.cls]) p.cls = j;
    }
    p.confidence = probs.empty() ? 0.0 : probs[p.cls];
    return p;
}

std::vector<Prediction> predict(const ModelParams& params, const std::vector<Signal>& traces,
                                Exec exec, std::size_t chunk) {
    std::vector<Prediction> out;
    out.reserve(traces.size());
    chunk = std::max<std::size_t>(chunk, 1);
    for (std::size_t s = 0; s < traces.size(); s += chunk) {
        const std::size_t e = std::min(traces.size(), s + chunk);
        std::vector<Signal> part(traces.begin() + static_cast<std::ptrdiff_t>(s),
                                 traces.begin() + static_cast<std::ptrdiff_t>(e));
        for (const auto& pr : forward(params, part, exec).probs) out.push_back(argmax(pr));
    }
    return out;
}

std::vector<Prediction> predict(const ModelParams& params, const Dataset& d, Exec exec) {
    std::vector<Signal> xs;
    xs.reserve(d.size());
    for (const auto& r : d.records) xs.push_back(to_signal(r.trace));
    return predict(params, xs, exec);
}

namespace {

void put_u32(std::string& s, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& s, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

class Reader {
public:
    explicit Reader(const std::string& b) : bytes_(b) {}

    std::uint64_t u(int n) {
        need(static_cast<std::size_t>(n));
        std::uint64_t v = 0;
        for (int i = 0; i < n; ++i) {
            v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
        }
        pos_ += static_cast<std::size_t>(n);
        return v;
    }
    std::string str(std::size_t n) {
        need(n);
        std::string s = bytes_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    bool done() const { return pos_ == bytes_.size(); }

private:
    void need(std::size_t n) const {
        if (bytes_.size() - pos_ < n) throw ModelError("checkpoint truncated");
    }
    const std::string& bytes_;
    std::size_t pos_ = 0;
};

}  // namespace

std::string serialize_checkpoint(const ModelParams& params) {
    check_shapes(params);
    std::string out = "TFWF";
    put_u32(out, kCheckpointVersion);
    KeyValues kv = params.config.to_kv();
    kv["model.init_seed"] = std::to_string(params.init_seed);
    const std::string text = format_key_values(kv);
    put_u64(out, text.size());
    out += text;
    put_u64(out, params.tensors.size());
    for (const auto& t : params.tensors) {
        put_u64(out, t.shape.size());
        for (std::size_t d : t.shape) put_u64(out, d);
        for (double v : t.data) put_u64(out, std::bit_cast<std::uint64_t>(v));
    }
    return out;
}

ModelParams deserialize_checkpoint(const std::string& bytes) {
    Reader r(bytes);
    if (r.str(4) != "TFWF") throw ModelError("not a checkpoint (bad magic)");
    const auto version = static_cast<std::uint32_t>(r.u(4));
    if (version != kCheckpointVersion) {
        throw ModelError("unsupported checkpoint version " + std::to_string(version));
    }
    const auto text_len = r.u(8);
    KeyValues kv = parse_key_values(r.str(text_len), "checkpoint");
    ModelParams mp;
    if (auto it = kv.find("model.init_seed"); it != kv.end()) {
        mp.init_seed = std::stoull(it->second);
        kv.erase(it);
    }
    mp.config = ModelConfig::from_kv(kv);
    const auto count = r.u(8);
    if (count > 4096) throw ModelError("checkpoint tensor count implausible");
    for (std::uint64_t i = 0; i < count; ++i) {
        const auto rank = r.u(8);
        if (rank > 8) throw ModelError("checkpoint tensor rank implausible");
        std::vector<std::size_t> shape;
        for (std::uint64_t d = 0; d < rank; ++d) shape.push_back(r.u(8));
        Tensor t(shape);
        for (double& v : t.data) v = std::bit_cast<double>(r.u(8));
        mp.tensors.push_back(std::move(t));
    }
    if (!r.done()) throw ModelError("trailing bytes after checkpoint");
    check_shapes(mp);
    return mp;
}

void save_checkpoint(const ModelParams& params, const std::filesystem::path& path) {
    const std::string bytes = serialize_checkpoint(params);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ModelError("cannot write " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw ModelError("write failed: " + path.string());
}

ModelParams load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ModelError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return deserialize_checkpoint(ss.str());
}

}  // namespace hdawf
