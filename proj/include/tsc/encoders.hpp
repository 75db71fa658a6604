#pragma once

#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "tsc/checkpoint.hpp"
#include "tsc/ops.hpp"

namespace tsc {

// ---------------------------------------------------------------------------
// Layer building blocks
// ---------------------------------------------------------------------------

namespace layers {

// Kaiming-uniform bound for relu fan-in.
inline double kaiming_bound(int64_t fan_in) { return std::sqrt(6.0 / static_cast<double>(fan_in)); }

template <typename S>
struct Linear {
    Tensor<S> w, b;  // w is [in, out]

    Linear() = default;
    Linear(int64_t in, int64_t out, Rng& rng) {
        const double bound = kaiming_bound(in);
        w = Tensor<S>::uniform({in, out}, rng, -bound, bound);
        b = Tensor<S>::zeros({out});
        w.set_requires_grad(true);
        b.set_requires_grad(true);
    }

    Tensor<S> forward(const Tensor<S>& x) const { return add_lastdim_bias(matmul(x, w), b); }

    // [B,L,in] -> [B,L,out]
    Tensor<S> forward3(const Tensor<S>& x) const {
        const int64_t bs = x.dim(0), l = x.dim(1);
        Tensor<S> flat = reshape(x, {bs * l, x.dim(2)});
        return reshape(forward(flat), {bs, l, w.dim(1)});
    }

    void collect(const std::string& prefix, std::vector<NamedParam<S>>& out) const {
        out.push_back({prefix + ".w", w});
        out.push_back({prefix + ".b", b});
    }
};

template <typename S>
struct Conv1d {
    Tensor<S> w, b;  // w is [out, in, k]
    Padding padding = Padding::Same;

    Conv1d() = default;
    Conv1d(int64_t in, int64_t out, int64_t k, Rng& rng, Padding pad = Padding::Same)
        : padding(pad) {
        const double bound = kaiming_bound(in * k);
        w = Tensor<S>::uniform({out, in, k}, rng, -bound, bound);
        b = Tensor<S>::zeros({out});
        w.set_requires_grad(true);
        b.set_requires_grad(true);
    }

    Tensor<S> forward(const Tensor<S>& x) const { return conv1d(x, w, b, padding); }

    void collect(const std::string& prefix, std::vector<NamedParam<S>>& out) const {
        out.push_back({prefix + ".w", w});
        out.push_back({prefix + ".b", b});
    }
};

template <typename S>
struct BatchNorm1d {
    Tensor<S> gamma, beta;
    Tensor<S> running_mean, running_var;

    BatchNorm1d() = default;
    explicit BatchNorm1d(int64_t c)
        : gamma({c}, S(1)),
          beta(Tensor<S>::zeros({c})),
          running_mean(Tensor<S>::zeros({c})),
          running_var({c}, S(1)) {
        gamma.set_requires_grad(true);
        beta.set_requires_grad(true);
    }

    Tensor<S> forward(const Tensor<S>& x, bool training) {
        return batchnorm1d(x, gamma, beta, running_mean, running_var, training);
    }

    void collect(const std::string& prefix, std::vector<NamedParam<S>>& out) const {
        out.push_back({prefix + ".gamma", gamma});
        out.push_back({prefix + ".beta", beta});
    }
};

template <typename S>
struct LayerNorm {
    Tensor<S> gamma, beta;

    LayerNorm() = default;
    explicit LayerNorm(int64_t c) : gamma({c}, S(1)), beta(Tensor<S>::zeros({c})) {
        gamma.set_requires_grad(true);
        beta.set_requires_grad(true);
    }

    Tensor<S> forward(const Tensor<S>& x) const { return layernorm(x, gamma, beta); }

    void collect(const std::string& prefix, std::vector<NamedParam<S>>& out) const {
        out.push_back({prefix + ".gamma", gamma});
        out.push_back({prefix + ".beta", beta});
    }
};

// Sinusoidal position table [len, width], the classic interleaved layout.
template <typename S>
Tensor<S> sinusoidal_positions(int64_t len, int64_t width) {
    Tensor<S> pos({len, width});
    for (int64_t i = 0; i < len; ++i)
        for (int64_t j = 0; j < width; ++j) {
            const double angle =
                static_cast<double>(i) /
                std::pow(10000.0, static_cast<double>(2 * (j / 2)) / static_cast<double>(width));
            pos.data()[static_cast<size_t>(i * width + j)] =
                static_cast<S>(j % 2 == 0 ? std::sin(angle) : std::cos(angle));
        }
    return pos;
}

}  // namespace layers

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

struct EncoderConfig {
    std::string family = "inception";  // mlp | cnn | resnet | inception | transformer
    int64_t hidden_width = 128;        // h, the latent token width

    // mlp
    std::vector<int64_t> mlp_widths = {500, 500};

    // cnn / resnet (per block channels and kernel sizes)
    std::vector<int64_t> conv_channels = {128, 256, 128};
    std::vector<int64_t> conv_kernels = {8, 5, 3};

    // inception
    int64_t n_kernels = 3;            // parallel conv branches
    int64_t kernel_size = 8;          // K; branch i uses kernel K*i
    int64_t depth = 6;                // inception blocks
    int64_t bottleneck_channels = 32; // also the per-branch channel count

    // transformer
    int64_t tf_layers = 2;
    int64_t tf_heads = 4;
    int64_t patch_len = 8;
};

inline void validate(const EncoderConfig& cfg) {
    auto fail = [](const std::string& msg) { throw ConfigError("encoder config: " + msg); };
    if (cfg.family != "mlp" && cfg.family != "cnn" && cfg.family != "resnet" &&
        cfg.family != "inception" && cfg.family != "transformer")
        fail("unknown family '" + cfg.family + "'");
    if (cfg.hidden_width <= 0) fail("hidden_width must be > 0");
    if (cfg.family == "mlp") {
        if (cfg.mlp_widths.empty()) fail("mlp_widths must be non-empty");
        for (int64_t w : cfg.mlp_widths)
            if (w <= 0) fail("mlp_widths entries must be > 0");
    }
    if (cfg.family == "cnn" || cfg.family == "resnet") {
        if (cfg.conv_channels.empty() || cfg.conv_channels.size() != cfg.conv_kernels.size())
            fail("conv_channels and conv_kernels must be non-empty and equal-length");
        for (int64_t c : cfg.conv_channels)
            if (c <= 0) fail("conv_channels entries must be > 0");
        for (int64_t k : cfg.conv_kernels)
            if (k <= 0) fail("conv_kernels entries must be > 0");
    }
    if (cfg.family == "inception") {
        if (cfg.n_kernels < 1 || cfg.n_kernels > 8) fail("n_kernels must be in [1, 8]");
        if (cfg.kernel_size < 2) fail("kernel_size must be >= 2");
        if (cfg.depth < 1) fail("depth must be >= 1");
        if (cfg.bottleneck_channels < 1) fail("bottleneck_channels must be >= 1");
    }
    if (cfg.family == "transformer") {
        if (cfg.tf_heads < 1) fail("tf_heads must be >= 1");
        if (cfg.hidden_width % cfg.tf_heads != 0)
            fail("hidden_width " + std::to_string(cfg.hidden_width) + " not divisible by tf_heads " +
                 std::to_string(cfg.tf_heads));
        if (cfg.tf_layers < 1) fail("tf_layers must be >= 1");
        if (cfg.patch_len < 1) fail("patch_len must be >= 1");
    }
}

// ---------------------------------------------------------------------------
// Encoder interface
// ---------------------------------------------------------------------------

// Maps a batch of series [B,T,d] to latent tokens [B,L,h]. `training` toggles
// batchnorm statistics; architectures are dropout-free so eval is
// deterministic.
template <typename S>
class Encoder {
public:
    virtual ~Encoder() = default;
    virtual Tensor<S> encode(const Tensor<S>& x, bool training) = 0;
    virtual int64_t latent_tokens() const = 0;
    virtual void collect_params(std::vector<NamedParam<S>>& out) const = 0;

    const EncoderConfig& config() const { return cfg_; }
    int64_t series_length() const { return t_; }
    int64_t channels() const { return d_; }

    std::vector<Tensor<S>> trainable_params() const {
        std::vector<NamedParam<S>> named;
        collect_params(named);
        std::vector<Tensor<S>> out;
        out.reserve(named.size());
        for (auto& p : named) out.push_back(p.tensor);
        return out;
    }

    int64_t param_count() const {
        std::vector<NamedParam<S>> named;
        collect_params(named);
        int64_t n = 0;
        for (const auto& p : named) n += p.tensor.numel();
        return n;
    }

protected:
    Encoder(EncoderConfig cfg, int64_t t, int64_t d) : cfg_(std::move(cfg)), t_(t), d_(d) {}

    void check_input(const Tensor<S>& x) const {
        if (x.rank() != 3 || x.dim(1) != t_ || x.dim(2) != d_)
            throw ShapeError("encoder built for [B, " + std::to_string(t_) + ", " +
                             std::to_string(d_) + "], got " + shape_str(x.shape()));
    }

    EncoderConfig cfg_;
    int64_t t_, d_;
};

// ---------------------------------------------------------------------------
// MLP: flatten, dense stack, one latent token
// ---------------------------------------------------------------------------

template <typename S>
class MlpEncoder final : public Encoder<S> {
public:
    MlpEncoder(const EncoderConfig& cfg, int64_t t, int64_t d, Rng& rng)
        : Encoder<S>(cfg, t, d) {
        int64_t in = t * d;
        for (int64_t w : cfg.mlp_widths) {
            fcs_.emplace_back(in, w, rng);
            in = w;
        }
        out_ = layers::Linear<S>(in, cfg.hidden_width, rng);
    }

    Tensor<S> encode(const Tensor<S>& x, bool) override {
        this->check_input(x);
        const int64_t bs = x.dim(0);
        Tensor<S> h = reshape(x, {bs, this->t_ * this->d_});
        for (const auto& fc : fcs_) h = relu(fc.forward(h));
        h = out_.forward(h);
        return reshape(h, {bs, 1, this->cfg_.hidden_width});
    }

    int64_t latent_tokens() const override { return 1; }

    void collect_params(std::vector<NamedParam<S>>& out) const override {
        for (size_t i = 0; i < fcs_.size(); ++i) fcs_[i].collect("mlp.fc" + std::to_string(i), out);
        out_.collect("mlp.out", out);
    }

private:
    std::vector<layers::Linear<S>> fcs_;
    layers::Linear<S> out_;
};

// ---------------------------------------------------------------------------
// CNN: FCN-style conv blocks, per-step projection, L = T
// ---------------------------------------------------------------------------

template <typename S>
class CnnEncoder final : public Encoder<S> {
public:
    CnnEncoder(const EncoderConfig& cfg, int64_t t, int64_t d, Rng& rng) : Encoder<S>(cfg, t, d) {
        int64_t in = d;
        for (size_t i = 0; i < cfg.conv_channels.size(); ++i) {
            convs_.emplace_back(in, cfg.conv_channels[i], cfg.conv_kernels[i], rng);
            bns_.emplace_back(cfg.conv_channels[i]);
            in = cfg.conv_channels[i];
        }
        proj_ = layers::Conv1d<S>(in, cfg.hidden_width, 1, rng);
    }

    Tensor<S> encode(const Tensor<S>& x, bool training) override {
        this->check_input(x);
        Tensor<S> h = transpose12(x);  // [B,d,T]
        for (size_t i = 0; i < convs_.size(); ++i)
            h = relu(bns_[i].forward(convs_[i].forward(h), training));
        return transpose12(proj_.forward(h));  // [B,T,h]
    }

    int64_t latent_tokens() const override { return this->t_; }

    void collect_params(std::vector<NamedParam<S>>& out) const override {
        for (size_t i = 0; i < convs_.size(); ++i) {
            convs_[i].collect("cnn.block" + std::to_string(i) + ".conv", out);
            bns_[i].collect("cnn.block" + std::to_string(i) + ".bn", out);
        }
        proj_.collect("cnn.proj", out);
    }

private:
    std::vector<layers::Conv1d<S>> convs_;
    std::vector<layers::BatchNorm1d<S>> bns_;
    layers::Conv1d<S> proj_;
};

// ---------------------------------------------------------------------------
// ResNet: residual conv blocks, L = T
// ---------------------------------------------------------------------------

template <typename S>
class ResNetEncoder final : public Encoder<S> {
public:
    ResNetEncoder(const EncoderConfig& cfg, int64_t t, int64_t d, Rng& rng)
        : Encoder<S>(cfg, t, d) {
        int64_t in = d;
        for (int64_t width : cfg.conv_channels) {
            Block blk;
            int64_t c = in;
            for (int64_t k : cfg.conv_kernels) {
                blk.convs.emplace_back(c, width, k, rng);
                blk.bns.emplace_back(width);
                c = width;
            }
            blk.projected = in != width;
            if (blk.projected) {
                blk.short_conv = layers::Conv1d<S>(in, width, 1, rng);
                blk.short_bn = layers::BatchNorm1d<S>(width);
            }
            blocks_.push_back(std::move(blk));
            in = width;
        }
        proj_ = layers::Conv1d<S>(in, cfg.hidden_width, 1, rng);
    }

    Tensor<S> encode(const Tensor<S>& x, bool training) override {
        this->check_input(x);
        Tensor<S> h = transpose12(x);
        for (auto& blk : blocks_) {
            Tensor<S> y = h;
            for (size_t i = 0; i < blk.convs.size(); ++i) {
                y = blk.bns[i].forward(blk.convs[i].forward(y), training);
                if (i + 1 < blk.convs.size()) y = relu(y);
            }
            Tensor<S> shortcut =
                blk.projected ? blk.short_bn.forward(blk.short_conv.forward(h), training) : h;
            h = relu(add(y, shortcut));
        }
        return transpose12(proj_.forward(h));
    }

    int64_t latent_tokens() const override { return this->t_; }

    void collect_params(std::vector<NamedParam<S>>& out) const override {
        for (size_t b = 0; b < blocks_.size(); ++b) {
            const std::string p = "resnet.block" + std::to_string(b);
            for (size_t i = 0; i < blocks_[b].convs.size(); ++i) {
                blocks_[b].convs[i].collect(p + ".conv" + std::to_string(i), out);
                blocks_[b].bns[i].collect(p + ".bn" + std::to_string(i), out);
            }
            if (blocks_[b].projected) {
                blocks_[b].short_conv.collect(p + ".short.conv", out);
                blocks_[b].short_bn.collect(p + ".short.bn", out);
            }
        }
        proj_.collect("resnet.proj", out);
    }

private:
    struct Block {
        std::vector<layers::Conv1d<S>> convs;
        std::vector<layers::BatchNorm1d<S>> bns;
        bool projected = false;
        layers::Conv1d<S> short_conv;
        layers::BatchNorm1d<S> short_bn;
    };
    std::vector<Block> blocks_;
    layers::Conv1d<S> proj_;
};

// ---------------------------------------------------------------------------
// Inception: parallel branches with kernel sizes K, 2K, ..., N*K plus a
// maxpool branch, bottlenecked inputs, residual shortcut every second block
// ---------------------------------------------------------------------------

template <typename S>
class InceptionEncoder final : public Encoder<S> {
public:
    InceptionEncoder(const EncoderConfig& cfg, int64_t t, int64_t d, Rng& rng)
        : Encoder<S>(cfg, t, d) {
        const int64_t width = cfg.bottleneck_channels;
        const int64_t out_ch = (cfg.n_kernels + 1) * width;
        int64_t in = d;
        int64_t res_in = d;
        for (int64_t b = 0; b < cfg.depth; ++b) {
            Block blk;
            blk.bottleneck = layers::Conv1d<S>(in, width, 1, rng);
            for (int64_t i = 1; i <= cfg.n_kernels; ++i)
                blk.branches.emplace_back(width, width, cfg.kernel_size * i, rng);
            blk.pool_conv = layers::Conv1d<S>(in, width, 1, rng);
            blk.bn = layers::BatchNorm1d<S>(out_ch);
            if (b % 2 == 1) {
                blk.residual = true;
                blk.short_conv = layers::Conv1d<S>(res_in, out_ch, 1, rng);
                blk.short_bn = layers::BatchNorm1d<S>(out_ch);
                res_in = out_ch;
            }
            blocks_.push_back(std::move(blk));
            in = out_ch;
        }
        proj_ = layers::Conv1d<S>(in, cfg.hidden_width, 1, rng);
    }

    Tensor<S> encode(const Tensor<S>& x, bool training) override {
        this->check_input(x);
        Tensor<S> h = transpose12(x);
        Tensor<S> res = h;
        for (auto& blk : blocks_) {
            Tensor<S> bott = blk.bottleneck.forward(h);
            std::vector<Tensor<S>> parts;
            for (const auto& br : blk.branches) parts.push_back(br.forward(bott));
            parts.push_back(blk.pool_conv.forward(maxpool1d(h, 3)));
            Tensor<S> y = relu(blk.bn.forward(concat_axis1(parts), training));
            if (blk.residual) {
                Tensor<S> shortcut = blk.short_bn.forward(blk.short_conv.forward(res), training);
                y = relu(add(y, shortcut));
                res = y;
            }
            h = y;
        }
        return transpose12(proj_.forward(h));
    }

    int64_t latent_tokens() const override { return this->t_; }

    void collect_params(std::vector<NamedParam<S>>& out) const override {
        for (size_t b = 0; b < blocks_.size(); ++b) {
            const std::string p = "inception.block" + std::to_string(b);
            blocks_[b].bottleneck.collect(p + ".bottleneck", out);
            for (size_t i = 0; i < blocks_[b].branches.size(); ++i)
                blocks_[b].branches[i].collect(p + ".branch" + std::to_string(i), out);
            blocks_[b].pool_conv.collect(p + ".pool_conv", out);
            blocks_[b].bn.collect(p + ".bn", out);
            if (blocks_[b].residual) {
                blocks_[b].short_conv.collect(p + ".short.conv", out);
                blocks_[b].short_bn.collect(p + ".short.bn", out);
            }
        }
        proj_.collect("inception.proj", out);
    }

    // Branch kernel sizes of one block, for inspection.
    std::vector<int64_t> branch_kernel_sizes() const {
        std::vector<int64_t> out;
        for (const auto& br : blocks_.front().branches) out.push_back(br.w.dim(2));
        return out;
    }

private:
    struct Block {
        layers::Conv1d<S> bottleneck;
        std::vector<layers::Conv1d<S>> branches;
        layers::Conv1d<S> pool_conv;
        layers::BatchNorm1d<S> bn;
        bool residual = false;
        layers::Conv1d<S> short_conv;
        layers::BatchNorm1d<S> short_bn;
    };
    std::vector<Block> blocks_;
    layers::Conv1d<S> proj_;
};

// ---------------------------------------------------------------------------
// Transformer: patch embedding, sinusoidal positions, pre-norm encoder
// layers (bidirectional attention), L = ceil(T / patch_len)
// ---------------------------------------------------------------------------

template <typename S>
class TransformerEncoder final : public Encoder<S> {
public:
    TransformerEncoder(const EncoderConfig& cfg, int64_t t, int64_t d, Rng& rng)
        : Encoder<S>(cfg, t, d), l_((t + cfg.patch_len - 1) / cfg.patch_len) {
        const int64_t h = cfg.hidden_width;
        embed_ = layers::Linear<S>(cfg.patch_len * d, h, rng);
        pos_ = layers::sinusoidal_positions<S>(l_, h);
        for (int64_t i = 0; i < cfg.tf_layers; ++i) {
            Layer ly;
            ly.ln1 = layers::LayerNorm<S>(h);
            ly.wq = layers::Linear<S>(h, h, rng);
            ly.wk = layers::Linear<S>(h, h, rng);
            ly.wv = layers::Linear<S>(h, h, rng);
            ly.wo = layers::Linear<S>(h, h, rng);
            ly.ln2 = layers::LayerNorm<S>(h);
            ly.ff1 = layers::Linear<S>(h, 4 * h, rng);
            ly.ff2 = layers::Linear<S>(4 * h, h, rng);
            layers_.push_back(std::move(ly));
        }
        final_ln_ = layers::LayerNorm<S>(h);
    }

    Tensor<S> encode(const Tensor<S>& x, bool) override {
        this->check_input(x);
        const int64_t bs = x.dim(0);
        Tensor<S> h = embed_.forward3(patchify(x, this->cfg_.patch_len));
        h = add(h, expand_batch(pos_, bs));
        for (const auto& ly : layers_) {
            Tensor<S> n = ly.ln1.forward(h);
            Tensor<S> att = attention(split_heads(ly.wq.forward3(n), this->cfg_.tf_heads),
                                      split_heads(ly.wk.forward3(n), this->cfg_.tf_heads),
                                      split_heads(ly.wv.forward3(n), this->cfg_.tf_heads),
                                      /*causal=*/false);
            h = add(h, ly.wo.forward3(merge_heads(att)));
            Tensor<S> m = ly.ln2.forward(h);
            h = add(h, ly.ff2.forward3(gelu(ly.ff1.forward3(m))));
        }
        return final_ln_.forward(h);
    }

    int64_t latent_tokens() const override { return l_; }

    void collect_params(std::vector<NamedParam<S>>& out) const override {
        embed_.collect("transformer.embed", out);
        for (size_t i = 0; i < layers_.size(); ++i) {
            const std::string p = "transformer.layer" + std::to_string(i);
            layers_[i].ln1.collect(p + ".ln1", out);
            layers_[i].wq.collect(p + ".wq", out);
            layers_[i].wk.collect(p + ".wk", out);
            layers_[i].wv.collect(p + ".wv", out);
            layers_[i].wo.collect(p + ".wo", out);
            layers_[i].ln2.collect(p + ".ln2", out);
            layers_[i].ff1.collect(p + ".ff1", out);
            layers_[i].ff2.collect(p + ".ff2", out);
        }
        final_ln_.collect("transformer.final_ln", out);
    }

private:
    struct Layer {
        layers::LayerNorm<S> ln1, ln2;
        layers::Linear<S> wq, wk, wv, wo;
        layers::Linear<S> ff1, ff2;
    };
    int64_t l_;
    layers::Linear<S> embed_;
    Tensor<S> pos_;
    std::vector<Layer> layers_;
    layers::LayerNorm<S> final_ln_;
};

// ---------------------------------------------------------------------------
// Factory and the plain prediction head
// ---------------------------------------------------------------------------

template <typename S>
std::unique_ptr<Encoder<S>> build_encoder(const EncoderConfig& cfg, int64_t t, int64_t d,
                                          uint64_t seed) {
    validate(cfg);
    if (t <= 0 || d <= 0)
        throw ConfigError("encoder config: series length and channels must be positive");
    Rng rng(seed);
    if (cfg.family == "mlp") return std::make_unique<MlpEncoder<S>>(cfg, t, d, rng);
    if (cfg.family == "cnn") return std::make_unique<CnnEncoder<S>>(cfg, t, d, rng);
    if (cfg.family == "resnet") return std::make_unique<ResNetEncoder<S>>(cfg, t, d, rng);
    if (cfg.family == "inception") return std::make_unique<InceptionEncoder<S>>(cfg, t, d, rng);
    return std::make_unique<TransformerEncoder<S>>(cfg, t, d, rng);
}

template <typename S>
struct LinearHead {
    layers::Linear<S> fc;

    LinearHead() = default;
    LinearHead(int64_t h, int64_t classes, Rng& rng) : fc(h, classes, rng) {}

    void collect(std::vector<NamedParam<S>>& out) const { fc.collect("head", out); }
};

// Mean-pool latent tokens and apply the linear head: [B,L,h] -> [B,C].
template <typename S>
Tensor<S> pool_and_classify(const Tensor<S>& enc_out, const LinearHead<S>& head) {
    return head.fc.forward(mean_tokens(enc_out));
}

}  // namespace tsc
