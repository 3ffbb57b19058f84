#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "posal/core.hpp"

using namespace posal;

namespace {

Grid<int> uniform_grid(int h, int w, int value) { return Grid<int>(h, w, value); }

ProbabilityMaps random_maps(int h, int w, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    ProbabilityMaps m{RealGrid(h, w), RealGrid(h, w)};
    for (size_t i = 0; i < m.disc.size(); ++i) {
        m.disc.data()[i] = u(rng);
        m.cup.data()[i] = u(rng);
    }
    return m;
}

ImageSample make_image(int h, int w, float fill = 0.5f) {
    ImageSample s;
    s.id = "img";
    for (int ch = 0; ch < 3; ++ch) s.pixels.emplace_back(h, w, fill);
    s.original_size = {h, w};
    return s;
}

}  // namespace

TEST_CASE("decode_mask handles uniform levels") {
    MaskEncoding enc;
    auto bg = decode_mask(uniform_grid(4, 4, enc.background), enc);
    for (size_t i = 0; i < bg.disc.size(); ++i) {
        CHECK(bg.disc.data()[i] == 0);
        CHECK(bg.cup.data()[i] == 0);
    }
    auto cup = decode_mask(uniform_grid(4, 4, enc.cup), enc);
    for (size_t i = 0; i < cup.disc.size(); ++i) {
        CHECK(cup.disc.data()[i] == 1);
        CHECK(cup.cup.data()[i] == 1);
    }
}

TEST_CASE("decode_mask on 3x3 ring-and-center") {
    MaskEncoding enc;
    Grid<int> img(3, 3, enc.disc_ring);
    img(1, 1) = enc.cup;
    auto m = decode_mask(img, enc);
    int cup_count = 0, disc_count = 0;
    for (size_t i = 0; i < m.cup.size(); ++i) {
        cup_count += m.cup.data()[i];
        disc_count += m.disc.data()[i];
    }
    CHECK(cup_count == 1);
    CHECK(disc_count == 9);
    m.validate();
}

TEST_CASE("decode_mask rejects unknown pixel value") {
    MaskEncoding enc;
    Grid<int> img(2, 2, enc.background);
    img(0, 1) = 7;
    CHECK_THROWS_AS(decode_mask(img, enc), DataError);
}

TEST_CASE("decode/encode round-trip on random valid masks") {
    std::mt19937_64 rng(11);
    MaskEncoding enc;
    MaskEncoding alt{0, 1, 2};
    for (int it = 0; it < 30; ++it) {
        int h = 1 + static_cast<int>(rng() % 12), w = 1 + static_cast<int>(rng() % 12);
        LabelMasks m{MaskGrid(h, w, 0), MaskGrid(h, w, 0)};
        for (int r = 0; r < h; ++r) {
            for (int c = 0; c < w; ++c) {
                int v = static_cast<int>(rng() % 3);
                m.disc(r, c) = v > 0;
                m.cup(r, c) = v > 1;
            }
        }
        for (const auto& e : {enc, alt}) {
            auto rt = decode_mask(encode_mask(m, e), e);
            CHECK(rt.disc == m.disc);
            CHECK(rt.cup == m.cup);
        }
    }
}

TEST_CASE("binarize basics") {
    ProbabilityMaps m{RealGrid(2, 2, 0.9), RealGrid(2, 2, 0.9)};
    auto lm = binarize(m, 0.5);
    for (size_t i = 0; i < lm.disc.size(); ++i) {
        CHECK(lm.disc.data()[i] == 1);
        CHECK(lm.cup.data()[i] == 1);
    }
}

TEST_CASE("binarize containment repair forces cup under weak disc") {
    ProbabilityMaps m{RealGrid(2, 2, 0.4), RealGrid(2, 2, 0.9)};
    auto lm = binarize(m, 0.5);
    for (size_t i = 0; i < lm.disc.size(); ++i) {
        CHECK(lm.disc.data()[i] == 0);
        CHECK(lm.cup.data()[i] == 0);
    }
}

TEST_CASE("binarize elementwise example") {
    ProbabilityMaps m{RealGrid(2, 2), RealGrid(2, 2, 0.7)};
    m.disc(0, 0) = 0.6;
    m.disc(0, 1) = 0.4;
    m.disc(1, 0) = 0.5;
    m.disc(1, 1) = 0.49;
    auto lm = binarize(m, 0.5);
    CHECK(lm.disc(0, 0) == 1);
    CHECK(lm.disc(0, 1) == 0);
    CHECK(lm.disc(1, 0) == 1);
    CHECK(lm.disc(1, 1) == 0);
    CHECK(lm.cup(0, 0) == 1);
    CHECK(lm.cup(0, 1) == 0);
    CHECK(lm.cup(1, 0) == 1);
    CHECK(lm.cup(1, 1) == 0);
}

TEST_CASE("binarize always satisfies containment (property)") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> thr(0.05, 0.95);
    for (int it = 0; it < 100; ++it) {
        auto m = random_maps(5, 7, rng);
        auto lm = binarize(m, thr(rng));
        CHECK_NOTHROW(lm.validate());
    }
}

TEST_CASE("crop centered window") {
    auto img = make_image(1024, 1024);
    auto box = make_roi_box(512, 512, 512, 1024, 1024);
    CHECK(box.top == 256);
    CHECK(box.left == 256);
    auto c = crop(img, box);
    CHECK(c.rows() == 512);
    CHECK(c.cols() == 512);
}

TEST_CASE("crop clamps near-border centers") {
    auto box = make_roi_box(10, 10, 512, 1024, 1024);
    CHECK(box.top == 0);
    CHECK(box.left == 0);
    CHECK(box.side == 512);
}

TEST_CASE("crop rejects images smaller than the window") {
    CHECK_THROWS_AS(make_roi_box(128, 128, 512, 256, 256), DataError);
}

TEST_CASE("crop/uncrop round-trip restores box region") {
    std::mt19937_64 rng(5);
    auto maps = random_maps(64, 64, rng);
    auto box = make_roi_box(30, 40, 16, 64, 64);
    ProbabilityMaps roi{RealGrid(16, 16), RealGrid(16, 16)};
    for (int r = 0; r < 16; ++r) {
        for (int c = 0; c < 16; ++c) {
            roi.disc(r, c) = maps.disc(box.top + r, box.left + c);
            roi.cup(r, c) = maps.cup(box.top + r, box.left + c);
        }
    }
    auto canvas = uncrop(roi, box, {64, 64});
    for (int r = 0; r < 64; ++r) {
        for (int c = 0; c < 64; ++c) {
            bool inside = r >= box.top && r < box.bottom() && c >= box.left && c < box.right();
            if (inside) CHECK(canvas.disc(r, c) == maps.disc(r, c));
            else CHECK(canvas.disc(r, c) == 0.0);
        }
    }
}

TEST_CASE("uncrop places an impulse at the box corner") {
    ProbabilityMaps roi{RealGrid(16, 16, 0.0), RealGrid(16, 16, 0.0)};
    roi.disc(0, 0) = 1.0;
    ROIBox box;
    box.top = 256;
    box.left = 256;
    box.side = 16;
    auto canvas = uncrop(roi, box, {512, 512});
    CHECK(canvas.disc(256, 256) == 1.0);
    double total = 0;
    for (size_t i = 0; i < canvas.disc.size(); ++i) total += canvas.disc.data()[i];
    CHECK(total == 1.0);
}

TEST_CASE("crop carries labels identically") {
    auto img = make_image(64, 64);
    LabelMasks lm{MaskGrid(64, 64, 0), MaskGrid(64, 64, 0)};
    lm.disc(30, 30) = 1;
    img.labels = lm;
    auto box = make_roi_box(30, 30, 16, 64, 64);
    auto c = crop(img, box);
    REQUIRE(c.labels.has_value());
    CHECK(c.labels->disc(30 - box.top, 30 - box.left) == 1);
}

TEST_CASE("LabelMasks validation rejects containment violation") {
    LabelMasks lm{MaskGrid(2, 2, 0), MaskGrid(2, 2, 0)};
    lm.cup(0, 0) = 1;
    CHECK_THROWS_AS(lm.validate(), DataError);
}
