#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <random>

#include "posal/models.hpp"

using namespace posal;
using namespace posal::models;
using nn::Tensor;

namespace {

Tensor random_tensor(int c, int h, int w, nn::Rng& rng) {
    std::uniform_real_distribution<float> u(0.f, 1.f);
    Tensor t(c, h, w);
    for (auto& v : t.v) v = u(rng);
    return t;
}

// Finite-difference check of a Conv2D layer through a scalar sum objective.
void check_conv_grads(int in_ch, int out_ch, int k, int stride, int dilation) {
    nn::Rng rng(99);
    nn::Conv2D conv("t", in_ch, out_ch, k, stride, dilation, nn::Init::HeNormal, rng);
    Tensor x = random_tensor(in_ch, 7, 6, rng);
    Tensor y = conv.forward(x);
    // Objective: sum of outputs weighted by fixed coefficients.
    Tensor w = random_tensor(y.c, y.h, y.w, rng);
    auto objective = [&](const Tensor& input) {
        nn::Conv2D probe = conv;  // copy shares weights by value
        Tensor out = probe.forward(input);
        double s = 0;
        for (size_t i = 0; i < out.v.size(); ++i) s += static_cast<double>(out.v[i]) * w.v[i];
        return s;
    };
    Tensor dx = conv.backward(w);
    const double h = 1e-3;
    std::mt19937_64 pick(5);
    for (int trial = 0; trial < 12; ++trial) {
        size_t i = pick() % x.v.size();
        Tensor xp = x, xm = x;
        xp.v[i] += static_cast<float>(h);
        xm.v[i] -= static_cast<float>(h);
        double fd = (objective(xp) - objective(xm)) / (2 * h);
        CHECK(dx.v[i] == doctest::Approx(fd).epsilon(5e-2));
    }
}

}  // namespace

TEST_CASE("conv2d input gradients match finite differences") {
    check_conv_grads(2, 3, 3, 1, 1);
    check_conv_grads(3, 2, 4, 2, 1);
    check_conv_grads(2, 2, 3, 1, 2);
}

TEST_CASE("extractor spec has 19 convs ending in a 1x1 single-channel head") {
    for (Scale s : {Scale::Paper, Scale::Desk}) {
        auto spec = build_extractor(s);
        CHECK(spec.conv_count() == 19);
        const auto& last = spec.layers.back();
        CHECK(last.kind == "conv");
        CHECK(last.kernel == 1);
        CHECK(last.out_ch == 1);
        CHECK(last.activation == "sigmoid");
    }
    CHECK(build_extractor(Scale::Paper).input_h == 640);
    CHECK(build_extractor(Scale::Desk).input_h == 160);
}

TEST_CASE("desk extractor forward maps 160x160x3 to 160x160x1 in [0,1]") {
    nn::Rng rng(1);
    UNetExtractor net(build_extractor(Scale::Desk), rng);
    Tensor x = random_tensor(3, 160, 160, rng);
    Tensor y = net.forward(x);
    CHECK(y.c == 1);
    CHECK(y.h == 160);
    CHECK(y.w == 160);
    for (float v : y.v) {
        CHECK(v >= 0.f);
        CHECK(v <= 1.f);
    }
}

TEST_CASE("segmenter spec: downsample 8, output contract") {
    auto paper = build_segmenter(Scale::Paper);
    CHECK(segmenter_backbone_downsample(paper) == 8);
    CHECK(paper.input_h == 512);
    auto desk = build_segmenter(Scale::Desk);
    CHECK(segmenter_backbone_downsample(desk) == 8);
    CHECK(desk.input_h == 128);
}

TEST_CASE("desk segmenter forward: 128x128x3 -> 128x128x2 in [0,1]") {
    nn::Rng rng(2);
    Segmenter net(build_segmenter(Scale::Desk), rng);
    Tensor x(3, 128, 128, 0.f);
    Tensor y = net.forward(x);
    CHECK(y.c == 2);
    CHECK(y.h == 128);
    CHECK(y.w == 128);
    for (float v : y.v) {
        CHECK(v >= 0.f);
        CHECK(v <= 1.f);
    }
}

TEST_CASE("discriminator spec: 5 convs, k4 s2, channel ladder, sigmoid tail") {
    auto spec = build_discriminator(Scale::Paper);
    REQUIRE(spec.layers.size() == 5);
    std::vector<int> want{64, 128, 256, 512, 1};
    for (size_t i = 0; i < 5; ++i) {
        CHECK(spec.layers[i].kind == "conv");
        CHECK(spec.layers[i].kernel == 4);
        CHECK(spec.layers[i].stride == 2);
        CHECK(spec.layers[i].out_ch == want[i]);
        CHECK(spec.layers[i].activation == (i == 4 ? "sigmoid" : "lrelu0.2"));
    }
    auto [oh, ow] = spec.output_size();
    CHECK(oh == 16);
    CHECK(ow == 16);
    auto desk = build_discriminator(Scale::Desk);
    auto [dh, dw] = desk.output_size();
    CHECK(dh == 4);
    CHECK(dw == 4);
}

TEST_CASE("discriminator receptive field is 94x94 at paper scale") {
    auto spec = build_discriminator(Scale::Paper);
    auto rf = receptive_field_box(spec, 8, 8);
    CHECK(rf[1] - rf[0] + 1 == 94);
    CHECK(rf[3] - rf[2] + 1 == 94);
}

TEST_CASE("zero-weight discriminator outputs 0.5 everywhere") {
    nn::Rng rng(3);
    PatchDiscriminator net(build_discriminator(Scale::Desk), rng);
    for (auto& p : net.params()) std::fill(p.value->begin(), p.value->end(), 0.f);
    Tensor x = random_tensor(2, 128, 128, rng);
    Tensor y = net.forward(x);
    CHECK(y.c == 1);
    CHECK(y.h == 4);
    CHECK(y.w == 4);
    for (float v : y.v) CHECK(v == 0.5f);
}

TEST_CASE("forward is deterministic") {
    nn::Rng rng(4);
    PatchDiscriminator net(build_discriminator(Scale::Desk), rng);
    Tensor x = random_tensor(2, 128, 128, rng);
    Tensor a = net.forward(x);
    Tensor b = net.forward(x);
    CHECK(a.v == b.v);
}

TEST_CASE("desk segmenter parameter count is under 5% of paper scale") {
    nn::Rng rng(5);
    Segmenter desk(build_segmenter(Scale::Desk), rng);
    Segmenter paper(build_segmenter(Scale::Paper), rng);
    double ratio = static_cast<double>(desk.param_count()) / paper.param_count();
    CHECK(ratio < 0.05);
}

TEST_CASE("paper segmenter backbone is materially smaller than an Xception-style reference") {
    // Table-derived proxy: the backbone swap targets a parameter ratio well
    // under 0.2 (5.8M vs 41.3M in the reference comparison).
    nn::Rng rng(6);
    Segmenter paper(build_segmenter(Scale::Paper), rng);
    const double xception_style_params = 41.3e6;
    CHECK(static_cast<double>(paper.param_count()) / xception_style_params < 0.2);
}

TEST_CASE("checkpoint round-trip is bitwise exact") {
    nn::Rng rng(7);
    PatchDiscriminator net(build_discriminator(Scale::Desk), rng);
    net.training_step = 1234;
    Tensor x = random_tensor(2, 128, 128, rng);
    Tensor before = net.forward(x);
    std::string path = "ckpt_roundtrip_test.bin";
    save_checkpoint(net, path);
    auto loaded = load_checkpoint(path);
    std::remove(path.c_str());
    CHECK(loaded->training_step == 1234);
    Tensor after = loaded->forward(x);
    CHECK(before.v == after.v);
}

TEST_CASE("receptive-field locality: outside pixels cannot change an interior cell") {
    nn::Rng rng(8);
    auto spec = build_discriminator(Scale::Desk);
    PatchDiscriminator net(spec, rng);
    Tensor x = random_tensor(2, 128, 128, rng);
    Tensor base = net.forward(x);
    auto rf = receptive_field_box(spec, 2, 2);
    // Perturb a pixel just outside the field in each direction.
    std::vector<std::pair<int, int>> probes = {
        {rf[0] - 1, (rf[2] + rf[3]) / 2}, {rf[1] + 1, (rf[2] + rf[3]) / 2},
        {(rf[0] + rf[1]) / 2, rf[2] - 1}, {(rf[0] + rf[1]) / 2, rf[3] + 1}};
    for (auto [r, c] : probes) {
        if (r < 0 || r >= 128 || c < 0 || c >= 128) continue;
        Tensor probe = x;
        probe.at(1, r, c) += 10.f;
        Tensor y = net.forward(probe);
        CHECK(y.at(0, 2, 2) == base.at(0, 2, 2));
    }
}

TEST_CASE("adam and sgd descend a quadratic") {
    std::vector<float> w{5.f}, g{0.f};
    std::vector<nn::ParamRef> refs{{"w", &w, &g}};
    Adam adam(refs);
    for (int i = 0; i < 200; ++i) {
        g[0] = 2.f * w[0];
        adam.step(0.1);
    }
    CHECK(std::abs(w[0]) < 1.0f);

    w[0] = 5.f;
    SGD sgd(refs);
    for (int i = 0; i < 100; ++i) {
        g[0] = 2.f * w[0];
        sgd.step(0.1);
    }
    CHECK(std::abs(w[0]) < 1e-3f);
}
