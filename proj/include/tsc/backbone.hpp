#pragma once

#include <memory>
#include <string>
#include <vector>

#include "tsc/encoders.hpp"

namespace tsc {

struct BackboneConfig {
    int64_t layers = 4;
    int64_t hidden = 128;      // h, must equal the encoder's hidden_width
    int64_t heads = 4;
    int64_t ff_width = 0;      // 0 means 4*hidden
    int64_t s_max = 256;       // maximum context length
    int64_t prompt_tokens = 8; // P
    uint64_t seed = 0;

    int64_t ff() const { return ff_width > 0 ? ff_width : 4 * hidden; }
};

inline void validate(const BackboneConfig& cfg) {
    auto fail = [](const std::string& msg) { throw ConfigError("backbone config: " + msg); };
    if (cfg.hidden <= 0) fail("hidden must be > 0");
    if (cfg.heads <= 0) fail("heads must be > 0");
    if (cfg.hidden % cfg.heads != 0)
        fail("hidden " + std::to_string(cfg.hidden) + " not divisible by heads " +
             std::to_string(cfg.heads));
    if (cfg.layers <= 0) fail("layers must be > 0");
    if (cfg.prompt_tokens <= 0) fail("prompt_tokens must be > 0");
    if (cfg.s_max < cfg.prompt_tokens + 2)
        fail("s_max must fit the prompt, at least one latent token and the readout position");
}

// Causal pre-norm decoder stack standing in for a pretrained LLM. Every
// parameter is created with requires_grad == false and never registered with
// an optimizer; gradients still flow through the frozen weights into
// whatever produced the input sequence.
template <typename S>
class FrozenBackbone {
public:
    explicit FrozenBackbone(const BackboneConfig& cfg) : cfg_(cfg) {
        validate(cfg);
        Rng rng(cfg.seed);
        const int64_t h = cfg.hidden, ff = cfg.ff();
        auto weight = [&rng](std::vector<int64_t> shape) {
            return Tensor<S>::normal(std::move(shape), rng, 0.0, 0.02);
        };
        pos_embed_ = weight({cfg.s_max, h});
        for (int64_t i = 0; i < cfg.layers; ++i) {
            Layer ly;
            ly.ln1_g = Tensor<S>({h}, S(1));
            ly.ln1_b = Tensor<S>::zeros({h});
            ly.wq = weight({h, h});
            ly.bq = Tensor<S>::zeros({h});
            ly.wk = weight({h, h});
            ly.bk = Tensor<S>::zeros({h});
            ly.wv = weight({h, h});
            ly.bv = Tensor<S>::zeros({h});
            ly.wo = weight({h, h});
            ly.bo = Tensor<S>::zeros({h});
            ly.ln2_g = Tensor<S>({h}, S(1));
            ly.ln2_b = Tensor<S>::zeros({h});
            ly.w1 = weight({h, ff});
            ly.b1 = Tensor<S>::zeros({ff});
            ly.w2 = weight({ff, h});
            ly.b2 = Tensor<S>::zeros({h});
            layers_.push_back(std::move(ly));
        }
        final_ln_g_ = Tensor<S>({h}, S(1));
        final_ln_b_ = Tensor<S>::zeros({h});
        prompt_embed_ = weight({cfg.prompt_tokens, h});
        padding_embed_ = weight({1, h});
    }

    // [B,L,h] -> [B,P+L+1,h]: prompt rows, latent tokens, one readout
    // position holding the padding embedding.
    Tensor<S> assemble(const Tensor<S>& z) const {
        if (z.rank() != 3 || z.dim(2) != cfg_.hidden)
            throw ShapeError("assemble: expected [B,L," + std::to_string(cfg_.hidden) +
                             "], got " + shape_str(z.shape()));
        const int64_t l = z.dim(1);
        if (cfg_.prompt_tokens + l + 1 > cfg_.s_max)
            throw ConfigError("context overflow: P=" + std::to_string(cfg_.prompt_tokens) +
                              " plus L=" + std::to_string(l) +
                              " plus the readout position exceeds S_max=" +
                              std::to_string(cfg_.s_max));
        const int64_t bs = z.dim(0);
        return concat_axis1<S>(
            {expand_batch(prompt_embed_, bs), z, expand_batch(padding_embed_, bs)});
    }

    // [B,S,h] -> [B,S,h] final hidden states.
    Tensor<S> forward(const Tensor<S>& zhat) const {
        if (zhat.rank() != 3 || zhat.dim(2) != cfg_.hidden || zhat.dim(1) > cfg_.s_max)
            throw ShapeError("backbone forward: bad input shape " + shape_str(zhat.shape()));
        const int64_t bs = zhat.dim(0), s = zhat.dim(1);
        Tensor<S> x = add(zhat, expand_batch(pos_rows(s), bs));
        for (const auto& ly : layers_) {
            Tensor<S> n = layernorm(x, ly.ln1_g, ly.ln1_b);
            Tensor<S> q = split_heads(linear3(n, ly.wq, ly.bq), cfg_.heads);
            Tensor<S> k = split_heads(linear3(n, ly.wk, ly.bk), cfg_.heads);
            Tensor<S> v = split_heads(linear3(n, ly.wv, ly.bv), cfg_.heads);
            Tensor<S> att = merge_heads(attention(q, k, v, /*causal=*/true));
            x = add(x, linear3(att, ly.wo, ly.bo));
            Tensor<S> m = layernorm(x, ly.ln2_g, ly.ln2_b);
            x = add(x, linear3(gelu(linear3(m, ly.w1, ly.b1)), ly.w2, ly.b2));
        }
        return layernorm(x, final_ln_g_, final_ln_b_);
    }

    // Hidden state at the readout (final) position: [B,S,h] -> [B,h].
    Tensor<S> readout(const Tensor<S>& hidden) const {
        return slice_token(hidden, hidden.dim(1) - 1);
    }

    // Order-stable FNV-1a over all parameters as little-endian float32.
    uint64_t checksum() const {
        uint64_t h = 0xcbf29ce484222325ull;
        std::vector<NamedParam<S>> params = named_params();
        for (const auto& p : params)
            for (S v : p.tensor.data()) {
                const float f = static_cast<float>(v);
                uint32_t bits;
                std::memcpy(&bits, &f, 4);
                unsigned char buf[4] = {static_cast<unsigned char>(bits & 0xff),
                                        static_cast<unsigned char>((bits >> 8) & 0xff),
                                        static_cast<unsigned char>((bits >> 16) & 0xff),
                                        static_cast<unsigned char>((bits >> 24) & 0xff)};
                h = fnv1a64(buf, 4, h);
            }
        return h;
    }

    std::vector<NamedParam<S>> named_params() const {
        std::vector<NamedParam<S>> out;
        out.push_back({"backbone.pos_embed", pos_embed_});
        for (size_t i = 0; i < layers_.size(); ++i) {
            const std::string p = "backbone.layer" + std::to_string(i);
            const Layer& ly = layers_[i];
            out.push_back({p + ".ln1.gamma", ly.ln1_g});
            out.push_back({p + ".ln1.beta", ly.ln1_b});
            out.push_back({p + ".wq.w", ly.wq});
            out.push_back({p + ".wq.b", ly.bq});
            out.push_back({p + ".wk.w", ly.wk});
            out.push_back({p + ".wk.b", ly.bk});
            out.push_back({p + ".wv.w", ly.wv});
            out.push_back({p + ".wv.b", ly.bv});
            out.push_back({p + ".wo.w", ly.wo});
            out.push_back({p + ".wo.b", ly.bo});
            out.push_back({p + ".ln2.gamma", ly.ln2_g});
            out.push_back({p + ".ln2.beta", ly.ln2_b});
            out.push_back({p + ".ff1.w", ly.w1});
            out.push_back({p + ".ff1.b", ly.b1});
            out.push_back({p + ".ff2.w", ly.w2});
            out.push_back({p + ".ff2.b", ly.b2});
        }
        out.push_back({"backbone.final_ln.gamma", final_ln_g_});
        out.push_back({"backbone.final_ln.beta", final_ln_b_});
        out.push_back({"backbone.prompt_embed", prompt_embed_});
        out.push_back({"backbone.padding_embed", padding_embed_});
        return out;
    }

    // Weight import from a checkpoint (names and shapes must match).
    void load(const std::vector<NamedParam<S>>& loaded) {
        std::vector<NamedParam<S>> params = named_params();
        restore_params(params, loaded);
    }

    const BackboneConfig& config() const { return cfg_; }
    int64_t hidden() const { return cfg_.hidden; }
    int64_t prompt_tokens() const { return cfg_.prompt_tokens; }

private:
    struct Layer {
        Tensor<S> ln1_g, ln1_b;
        Tensor<S> wq, bq, wk, bk, wv, bv, wo, bo;
        Tensor<S> ln2_g, ln2_b;
        Tensor<S> w1, b1, w2, b2;
    };

    static Tensor<S> linear3(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& b) {
        const int64_t bs = x.dim(0), l = x.dim(1);
        Tensor<S> flat = reshape(x, {bs * l, x.dim(2)});
        return reshape(add_lastdim_bias(matmul(flat, w), b), {bs, l, w.dim(1)});
    }

    // First s rows of the position table; no grad needed, the table is frozen.
    Tensor<S> pos_rows(int64_t s) const {
        Tensor<S> out({s, cfg_.hidden});
        std::memcpy(out.data().data(), pos_embed_.data().data(),
                    static_cast<size_t>(s * cfg_.hidden) * sizeof(S));
        return out;
    }

    BackboneConfig cfg_;
    Tensor<S> pos_embed_;
    std::vector<Layer> layers_;
    Tensor<S> final_ln_g_, final_ln_b_;
    Tensor<S> prompt_embed_, padding_embed_;
};

// ---------------------------------------------------------------------------
// Classifier models
// ---------------------------------------------------------------------------

template <typename S>
class ClassifierModel {
public:
    virtual ~ClassifierModel() = default;
    virtual Tensor<S> logits(const Tensor<S>& x, bool training) = 0;
    virtual std::vector<Tensor<S>> trainable_params() const = 0;
    virtual void collect_params(std::vector<NamedParam<S>>& out) const = 0;
    virtual int64_t num_classes() const = 0;
};

// Encoder followed by mean pooling and the linear prediction head.
template <typename S>
class PlainModel final : public ClassifierModel<S> {
public:
    PlainModel(const EncoderConfig& cfg, int64_t t, int64_t d, int64_t classes, uint64_t seed)
        : encoder_(build_encoder<S>(cfg, t, d, seed)), classes_(classes) {
        Rng rng(fnv1a64("head", 4, seed));
        head_ = LinearHead<S>(cfg.hidden_width, classes, rng);
    }

    Tensor<S> logits(const Tensor<S>& x, bool training) override {
        return pool_and_classify(encoder_->encode(x, training), head_);
    }

    std::vector<Tensor<S>> trainable_params() const override {
        std::vector<Tensor<S>> out = encoder_->trainable_params();
        out.push_back(head_.fc.w);
        out.push_back(head_.fc.b);
        return out;
    }

    void collect_params(std::vector<NamedParam<S>>& out) const override {
        encoder_->collect_params(out);
        head_.collect(out);
    }

    int64_t num_classes() const override { return classes_; }
    Encoder<S>& encoder() { return *encoder_; }

private:
    std::unique_ptr<Encoder<S>> encoder_;
    LinearHead<S> head_;
    int64_t classes_;
};

// Encoder latents pass through the frozen backbone; the head reads the final
// position. Trainable set is exactly the encoder plus the head.
template <typename S>
class HybridModel final : public ClassifierModel<S> {
public:
    HybridModel(const EncoderConfig& cfg, std::shared_ptr<const FrozenBackbone<S>> backbone,
                int64_t t, int64_t d, int64_t classes, uint64_t seed)
        : backbone_(std::move(backbone)),
          encoder_(build_encoder<S>(cfg, t, d, seed)),
          classes_(classes) {
        if (cfg.hidden_width != backbone_->hidden())
            throw ConfigError("hybrid model: encoder hidden_width " +
                              std::to_string(cfg.hidden_width) + " != backbone hidden " +
                              std::to_string(backbone_->hidden()));
        Rng rng(fnv1a64("head", 4, seed));
        head_ = LinearHead<S>(backbone_->hidden(), classes, rng);
    }

    Tensor<S> logits(const Tensor<S>& x, bool training) override {
        Tensor<S> z = encoder_->encode(x, training);
        Tensor<S> hidden = backbone_->forward(backbone_->assemble(z));
        return head_.fc.forward(backbone_->readout(hidden));
    }

    std::vector<Tensor<S>> trainable_params() const override {
        std::vector<Tensor<S>> out = encoder_->trainable_params();
        out.push_back(head_.fc.w);
        out.push_back(head_.fc.b);
        return out;
    }

    void collect_params(std::vector<NamedParam<S>>& out) const override {
        encoder_->collect_params(out);
        head_.collect(out);
    }

    int64_t num_classes() const override { return classes_; }
    Encoder<S>& encoder() { return *encoder_; }
    const FrozenBackbone<S>& backbone() const { return *backbone_; }

private:
    std::shared_ptr<const FrozenBackbone<S>> backbone_;
    std::unique_ptr<Encoder<S>> encoder_;
    LinearHead<S> head_;
    int64_t classes_;
};

}  // namespace tsc
