#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "posal/data.hpp"
#include "posal/roi.hpp"

using namespace posal;

namespace {

struct Fixture {
    data::SynthResult bench;
    std::unique_ptr<models::Network> extractor;
};

// One shared training run; locate_disc/extract_roi are read-only on it.
Fixture& fixture() {
    static Fixture f = [] {
        data::SynthConfig cfg;
        cfg.seed = 42;
        Fixture out;
        out.bench = data::generate_synthetic(cfg, 70, 1);
        std::vector<ImageSample> train(out.bench.source.begin(), out.bench.source.begin() + 40);
        roi::ExtractorConfig ecfg;
        ecfg.epochs = 12;
        ecfg.seed = 1;
        auto result = roi::train_extractor(train, ecfg, models::Scale::Desk);
        out.extractor = std::move(result.model);
        return out;
    }();
    return f;
}

std::array<int, 4> disc_bbox(const MaskGrid& m) {
    int r0 = m.rows(), r1 = -1, c0 = m.cols(), c1 = -1;
    for (int r = 0; r < m.rows(); ++r)
        for (int c = 0; c < m.cols(); ++c)
            if (m(r, c)) {
                r0 = std::min(r0, r);
                r1 = std::max(r1, r);
                c0 = std::min(c0, c);
                c1 = std::max(c1, c);
            }
    return {r0, r1, c0, c1};
}

}  // namespace

TEST_CASE("default_roi_side per scale") {
    CHECK(roi::default_roi_side(models::Scale::Paper) == 512);
    CHECK(roi::default_roi_side(models::Scale::Desk) == 128);
}

TEST_CASE("train_extractor: input validation and epoch accounting") {
    roi::ExtractorConfig cfg;
    CHECK_THROWS_AS(roi::train_extractor({}, cfg, models::Scale::Desk), DataError);

    data::SynthConfig scfg;
    auto r = data::generate_synthetic(scfg, 2, 1);
    auto unlabeled = r.source;
    for (auto& s : unlabeled) s.labels.reset();
    CHECK_THROWS_AS(roi::train_extractor(unlabeled, cfg, models::Scale::Desk), DataError);

    cfg.epochs = 0;
    auto result = roi::train_extractor(r.source, cfg, models::Scale::Desk);
    CHECK(result.epoch_losses.empty());
    CHECK(result.model->training_step == 0);
}

TEST_CASE("train_extractor: dice loss decreases over training") {
    auto& f = fixture();
    (void)f;
    data::SynthConfig cfg;
    cfg.seed = 50;
    auto r = data::generate_synthetic(cfg, 24, 1);
    roi::ExtractorConfig ecfg;
    ecfg.epochs = 3;
    ecfg.seed = 2;
    auto result = roi::train_extractor(r.source, ecfg, models::Scale::Desk);
    REQUIRE(result.epoch_losses.size() == 3);
    CHECK(result.epoch_losses.back() < result.epoch_losses.front());
}

TEST_CASE("locate_disc: centroid close to the generator's ground truth") {
    auto& f = fixture();
    int hits = 0, total = 0;
    for (size_t i = 40; i < f.bench.source.size(); ++i) {
        const auto& s = f.bench.source[i];
        const auto& truth = f.bench.source_truth[i];
        ROIBox box = roi::locate_disc(*f.extractor, s, 128);
        double dr = box.center_row - truth.center_row;
        double dc = box.center_col - truth.center_col;
        double diameter = 2.0 * truth.disc_vsemi;
        if (std::hypot(dr, dc) <= 0.25 * diameter) ++hits;
        ++total;
    }
    CHECK(hits >= total * 9 / 10);
}

TEST_CASE("locate_disc: deterministic") {
    auto& f = fixture();
    const auto& s = f.bench.source[45];
    ROIBox a = roi::locate_disc(*f.extractor, s, 128);
    ROIBox b = roi::locate_disc(*f.extractor, s, 128);
    CHECK(a.top == b.top);
    CHECK(a.left == b.left);
    CHECK(a.center_row == b.center_row);
    CHECK(a.center_col == b.center_col);
}

TEST_CASE("locate_disc: translation consistency") {
    auto& f = fixture();
    const auto& s = f.bench.source[44];
    ROIBox base = roi::locate_disc(*f.extractor, s, 128);
    const int dr = 5, dc = -4;
    ImageSample moved = s;
    const int n = s.rows();
    for (int ch = 0; ch < 3; ++ch)
        for (int r = 0; r < n; ++r)
            for (int c = 0; c < n; ++c)
                moved.pixels[ch]((r + dr + n) % n, (c + dc + n) % n) = s.pixels[ch](r, c);
    ROIBox shifted = roi::locate_disc(*f.extractor, moved, 128);
    CHECK(std::abs(shifted.center_row - (base.center_row + dr)) <= 2.0);
    CHECK(std::abs(shifted.center_col - (base.center_col + dc)) <= 2.0);
}

TEST_CASE("locate_disc: empty prediction falls back to the image center") {
    nn::Rng rng(0);
    models::UNetExtractor blind(models::build_extractor(models::Scale::Desk), rng);
    for (auto& p : blind.params()) {
        std::fill(p.value->begin(), p.value->end(), 0.0f);
        if (p.name == "head.bias") std::fill(p.value->begin(), p.value->end(), -10.0f);
    }
    data::SynthConfig cfg;
    auto r = data::generate_synthetic(cfg, 1, 1);
    ROIBox box = roi::locate_disc(blind, r.source[0], 128);
    CHECK(box.fallback_used);
    CHECK(box.center_row == doctest::Approx(r.source[0].rows() / 2.0));
    CHECK(box.center_col == doctest::Approx(r.source[0].cols() / 2.0));
}

TEST_CASE("extract_roi: crop covers the disc and carries labels") {
    auto& f = fixture();
    int covered = 0, total = 0;
    for (size_t i = 40; i < f.bench.source.size(); ++i) {
        const auto& s = f.bench.source[i];
        auto [cropped, box] = roi::extract_roi(*f.extractor, s, 128);
        CHECK(cropped.rows() == 128);
        CHECK(cropped.cols() == 128);
        REQUIRE(cropped.labels.has_value());
        auto [r0, r1, c0, c1] = disc_bbox(s.labels->disc);
        bool inside = r0 >= box.top && r1 < box.bottom() && c0 >= box.left && c1 < box.right();
        covered += inside;
        ++total;
        if (inside) {
            // Cropped label mass matches the original disc mass.
            long orig = 0, crop_mass = 0;
            for (size_t k = 0; k < s.labels->disc.size(); ++k) orig += s.labels->disc.data()[k];
            for (size_t k = 0; k < cropped.labels->disc.size(); ++k)
                crop_mass += cropped.labels->disc.data()[k];
            CHECK(crop_mass == orig);
        }
    }
    CHECK(covered >= total * 9 / 10);
}

TEST_CASE("roi box clamps near the border") {
    ROIBox b = make_roi_box(3.0, 157.0, 128, 160, 160);
    CHECK(b.top == 0);
    CHECK(b.left == 160 - 128);
    CHECK(b.side == 128);
    CHECK_THROWS_AS(make_roi_box(10, 10, 128, 100, 160), DataError);
}

TEST_CASE("roi manifest round-trips") {
    namespace fs = std::filesystem;
    auto path = (fs::temp_directory_path() / "posal-roi-manifest.json").string();
    std::vector<std::pair<std::string, ROIBox>> boxes{
        {"a", {10, 20, 128, 74.5, 84.0, false}}, {"b", {0, 0, 128, 3.0, 2.0, true}}};
    roi::write_roi_manifest(path, boxes);
    auto back = roi::read_roi_manifest(path);
    REQUIRE(back.size() == 2);
    CHECK(back[0].first == "a");
    CHECK(back[0].second.top == 10);
    CHECK(back[0].second.center_row == doctest::Approx(74.5));
    CHECK(back[1].second.fallback_used);
    fs::remove(path);
}
