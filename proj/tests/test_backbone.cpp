#include <doctest.h>

#include "testutil.hpp"
#include "tsc/adam.hpp"
#include "tsc/backbone.hpp"

#include <filesystem>

using namespace tsc;

namespace {

BackboneConfig tiny_backbone(uint64_t seed = 3) {
    BackboneConfig cfg;
    cfg.layers = 1;
    cfg.hidden = 16;
    cfg.heads = 4;
    cfg.s_max = 32;
    cfg.prompt_tokens = 8;
    cfg.seed = seed;
    return cfg;
}

EncoderConfig tiny_mlp() {
    EncoderConfig cfg;
    cfg.family = "mlp";
    cfg.hidden_width = 16;
    cfg.mlp_widths = {6};
    return cfg;
}

}  // namespace

TEST_CASE("construction is seed-deterministic and frozen") {
    FrozenBackbone<float> a(tiny_backbone(9));
    FrozenBackbone<float> b(tiny_backbone(9));
    FrozenBackbone<float> c(tiny_backbone(10));
    CHECK(a.checksum() == b.checksum());
    CHECK(a.checksum() != c.checksum());

    for (const auto& p : a.named_params()) {
        CAPTURE(p.name);
        CHECK_FALSE(p.tensor.requires_grad());
    }
}

TEST_CASE("forward is bitwise stable across calls") {
    FrozenBackbone<float> bb(tiny_backbone());
    Rng rng(5);
    Tensor<float> z = Tensor<float>::uniform({2, 4, 16}, rng, -1, 1);
    Tensor<float> h1 = bb.forward(bb.assemble(z));
    Tensor<float> h2 = bb.forward(bb.assemble(z));
    CHECK(h1.data() == h2.data());
    CHECK(h1.all_finite());
}

TEST_CASE("assemble layout: prompt, latents, readout") {
    BackboneConfig cfg = tiny_backbone();
    cfg.s_max = 64;
    FrozenBackbone<double> bb(cfg);
    Rng rng(6);
    Tensor<double> z = Tensor<double>::uniform({2, 16, 16}, rng, -1, 1);
    Tensor<double> zhat = bb.assemble(z);
    CHECK(zhat.shape() == std::vector<int64_t>{2, 25, 16});  // P=8, L=16 -> S=25

    Tensor<double> z2 = Tensor<double>(z.shape(), z.data());
    for (auto& v : z2.data()) v += 0.5;
    Tensor<double> zhat2 = bb.assemble(z2);
    for (int64_t b = 0; b < 2; ++b)
        for (int64_t s = 0; s < 25; ++s) {
            bool differs = false;
            for (int64_t e = 0; e < 16; ++e)
                if (zhat.at({b, s, e}) != zhat2.at({b, s, e})) differs = true;
            CHECK(differs == (s >= 8 && s <= 23));
        }
}

TEST_CASE("context overflow names the sizes") {
    BackboneConfig cfg = tiny_backbone();
    cfg.s_max = 12;  // P=8 + L + 1 <= 12 means L <= 3
    FrozenBackbone<float> bb(cfg);
    Tensor<float> ok({1, 3, 16});
    CHECK(bb.assemble(ok).dim(1) == 12);
    Tensor<float> over({1, 4, 16});
    CHECK_THROWS_WITH_AS(bb.assemble(over), doctest::Contains("S_max=12"), ConfigError);
    CHECK_THROWS_AS(bb.assemble(Tensor<float>({1, 3, 8})), ShapeError);
}

TEST_CASE("invalid backbone configs are rejected") {
    BackboneConfig cfg = tiny_backbone();
    cfg.hidden = 18;  // not divisible by 4 heads
    CHECK_THROWS_AS(FrozenBackbone<float>{cfg}, ConfigError);
    cfg = tiny_backbone();
    cfg.layers = 0;
    CHECK_THROWS_AS(FrozenBackbone<float>{cfg}, ConfigError);
    cfg = tiny_backbone();
    cfg.s_max = 9;  // cannot fit prompt + one latent + readout
    CHECK_THROWS_AS(FrozenBackbone<float>{cfg}, ConfigError);
}

TEST_CASE("readout depends only on the final position") {
    FrozenBackbone<double> bb(tiny_backbone());
    Rng rng(8);
    Tensor<double> z = Tensor<double>::uniform({2, 5, 16}, rng, -1, 1);
    Tensor<double> hidden = bb.forward(bb.assemble(z));
    Tensor<double> r1 = bb.readout(hidden);

    Tensor<double> mangled(hidden.shape(), hidden.data());
    const int64_t s = hidden.dim(1);
    for (int64_t b = 0; b < 2; ++b)
        for (int64_t p = 0; p < s - 1; ++p)
            for (int64_t e = 0; e < 16; ++e) mangled.at({b, p, e}) = -99.0;
    Tensor<double> r2 = bb.readout(mangled);
    CHECK(r1.data() == r2.data());
}

TEST_CASE("hybrid model trains the encoder through the frozen stack") {
    auto bb = std::make_shared<const FrozenBackbone<float>>(tiny_backbone());
    HybridModel<float> model(tiny_mlp(), bb, /*t=*/8, /*d=*/1, /*classes=*/3, /*seed=*/4);

    Rng rng(9);
    Tensor<float> x = Tensor<float>::uniform({2, 8, 1}, rng, -1, 1);
    Tensor<float> logits = model.logits(x, true);
    CHECK(logits.shape() == std::vector<int64_t>{2, 3});

    // different series -> different logits
    Tensor<float> x2 = Tensor<float>::uniform({2, 8, 1}, rng, -1, 1);
    CHECK(model.logits(x2, true).data() != logits.data());

    const uint64_t before = bb->checksum();
    {
        GradientTape<float> tape;
        Tensor<float> loss = softmax_cross_entropy(model.logits(x, true), {0, 2});
        tape.backward(loss);
    }
    bool any_nonzero = false;
    for (const auto& p : model.trainable_params()) {
        CHECK(p.has_grad());
        for (float g : p.grad())
            if (g != 0.0f) any_nonzero = true;
    }
    CHECK(any_nonzero);
    for (const auto& p : bb->named_params()) CHECK_FALSE(p.tensor.has_grad());
    CHECK(bb->checksum() == before);

    // optimizer step moves encoder weights, backbone stays frozen
    Adam<float> opt(model.trainable_params(), 1e-2);
    std::vector<float> w0 = model.trainable_params()[0].data();
    opt.step();
    CHECK(model.trainable_params()[0].data() != w0);
    CHECK(bb->checksum() == before);
}

TEST_CASE("hidden width mismatch is rejected") {
    auto bb = std::make_shared<const FrozenBackbone<float>>(tiny_backbone());
    EncoderConfig enc = tiny_mlp();
    enc.hidden_width = 32;
    CHECK_THROWS_AS(HybridModel<float>(enc, bb, 8, 1, 2, 0), ConfigError);
}

TEST_CASE("end-to-end gradients match finite differences") {
    auto bb = std::make_shared<const FrozenBackbone<double>>(tiny_backbone(12));
    HybridModel<double> model(tiny_mlp(), bb, 8, 1, 3, 31);
    Rng rng(14);
    Tensor<double> x = Tensor<double>::uniform({2, 8, 1}, rng, -1, 1);
    const std::vector<int64_t> labels{0, 2};

    auto gc = testutil::finite_diff(model.trainable_params(), [&] {
        return softmax_cross_entropy(model.logits(x, true), labels);
    });
    CHECK(gc.checked > 200);
    CHECK(gc.max_rel_err < 1e-3);
}

TEST_CASE("weight import reproduces the source checksum") {
    FrozenBackbone<float> src(tiny_backbone(77));
    FrozenBackbone<float> dst(tiny_backbone(78));
    REQUIRE(src.checksum() != dst.checksum());

    namespace fs = std::filesystem;
    const std::string path = (fs::temp_directory_path() / "tsc_backbone_ckpt.bin").string();
    save_checkpoint(path, src.named_params());
    dst.load(load_checkpoint<float>(path));
    CHECK(dst.checksum() == src.checksum());

    Rng rng(5);
    Tensor<float> z = Tensor<float>::uniform({1, 3, 16}, rng, -1, 1);
    CHECK(src.forward(src.assemble(z)).data() == dst.forward(dst.assemble(z)).data());
    fs::remove(path);
}
