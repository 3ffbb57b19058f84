// Acceptance gate: one pass/fail line per criterion, nonzero exit on any failure.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <vector>

#include "posal/adapt.hpp"
#include "posal/data.hpp"
#include "posal/losses.hpp"
#include "posal/metrics.hpp"
#include "posal/models.hpp"
#include "posal/roi.hpp"

using namespace posal;

namespace {

// Desk-scale training budgets, sized for a single CPU core.
constexpr int kAdaptSeeds = 5;
constexpr int kAdaptPretrainEpochs = 10;
constexpr int kAdaptAdversarialEpochs = 16;
// Half adversarial weight and a faster discriminator keep the alignment
// signal informative without destabilizing the well-fit disc channel.
constexpr double kAdaptAdvWeight = 0.5;
constexpr double kAdaptDiscLr = 5e-2;
constexpr int kAblationSeeds = 3;
constexpr int kAblationTrainImages = 48;
constexpr int kAblationValImages = 16;
// The ablation shares a dice-only warm-up, then fine-tunes each arm. The
// smoothness term is an unnormalized pixel-pair sum, so its weight is
// rescaled for 128x128 inputs; full weight drowns the O(1/area) dice
// gradients and collapses predictions to constants.
constexpr int kAblationWarmEpochs = 8;
constexpr int kAblationFineEpochs = 4;
constexpr double kAblationFineLr = 2e-4;
constexpr double kAblationSmoothWeight = 5e-5;
constexpr int kRoiTrainImages = 48;
constexpr int kRoiTrainEpochs = 14;

int failures = 0;

void report(int n, const char* name, bool ok, const std::string& detail) {
    std::printf("[%s] criterion %d: %s%s%s\n", ok ? "PASS" : "FAIL", n, name,
                detail.empty() ? "" : " — ", detail.c_str());
    std::fflush(stdout);
    if (!ok) ++failures;
}

double now_s() {
    using clock = std::chrono::steady_clock;
    static const auto t0 = clock::now();
    return std::chrono::duration<double>(clock::now() - t0).count();
}

// ---------------------------------------------------------------- oracles

double fd_rel_error(const std::function<double(RealGrid&)>& f, RealGrid& p,
                    const RealGrid& analytic) {
    const double h = 1e-5;
    double worst = 0;
    for (int r = 0; r < p.rows(); ++r)
        for (int c = 0; c < p.cols(); ++c) {
            double keep = p(r, c);
            p(r, c) = keep + h;
            double up = f(p);
            p(r, c) = keep - h;
            double dn = f(p);
            p(r, c) = keep;
            double fd = (up - dn) / (2 * h);
            double denom = std::max({std::abs(fd), std::abs(analytic(r, c)), 1e-3});
            worst = std::max(worst, std::abs(fd - analytic(r, c)) / denom);
        }
    return worst;
}

double smoothness_bruteforce(const RealGrid& p, const MaskGrid& y) {
    double total = 0;
    const int dr[4] = {-1, 1, 0, 0}, dc[4] = {0, 0, -1, 1};
    for (int r = 0; r < p.rows(); ++r)
        for (int c = 0; c < p.cols(); ++c)
            for (int k = 0; k < 4; ++k) {
                int nr = r + dr[k], nc = c + dc[k];
                if (nr < 0 || nr >= p.rows() || nc < 0 || nc >= p.cols()) continue;
                if (y(r, c) != y(nr, nc)) continue;
                total += y(r, c) * std::abs(p(r, c) - p(nr, nc));
            }
    return total;
}

// --------------------------------------------------------- shared fixtures

struct Bench {
    std::vector<ImageSample> source_train;   // 200, ROI-sized 128
    std::vector<ImageSample> target_train;   // 100, unlabeled
    std::vector<ImageSample> target_test;    // 100, labeled (evaluation only)
};

std::vector<ImageSample> center_rois(std::vector<ImageSample>& pool, size_t from, size_t n) {
    std::vector<ImageSample> out;
    for (size_t i = from; i < from + n; ++i) {
        auto& s = pool[i];
        ROIBox box = make_roi_box(s.rows() / 2.0, s.cols() / 2.0, 128, s.rows(), s.cols());
        out.push_back(crop(s, box));
    }
    return out;
}

Bench make_bench(uint64_t seed) {
    data::SynthConfig cfg;
    cfg.seed = seed;
    // Strong appearance shift so the source-only baseline has real headroom
    // on the target domain (the stock shift barely moves desk-scale dice).
    cfg.target_shift = {{0.55, 1.35, 1.5}, {0.18, -0.05, -0.12}, 1.6, 0.05, 2.5};
    auto r = data::generate_synthetic(cfg, 200, 200);
    Bench b;
    b.source_train = center_rois(r.source, 0, 200);
    b.target_train = center_rois(r.target, 0, 100);
    for (auto& t : b.target_train) t.labels.reset();
    b.target_test = center_rois(r.target, 100, 100);
    return b;
}

struct EvalTriple {
    double dice_cup = 0, dice_disc = 0, delta = 0;
};

EvalTriple evaluate(models::Network& seg, const std::vector<ImageSample>& test) {
    EvalTriple out;
    for (const auto& s : test) {
        LabelMasks pred = metrics::postprocess(binarize(adapt::predict(seg, s)));
        out.dice_disc += metrics::dice_coefficient(pred.disc, s.labels->disc);
        out.dice_cup += metrics::dice_coefficient(pred.cup, s.labels->cup);
        double cdr_p = 0;
        try {
            cdr_p = metrics::vertical_cdr(pred);
        } catch (const DataError&) {
            cdr_p = 0;
        }
        out.delta += std::abs(cdr_p - metrics::vertical_cdr(*s.labels));
    }
    double n = static_cast<double>(test.size());
    out.dice_cup /= n;
    out.dice_disc /= n;
    out.delta /= n;
    return out;
}

// -------------------------------------------------------------- criteria

void criterion_1() {
    double t0 = now_s();
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> up(0.02, 0.98);
    std::bernoulli_distribution bit(0.5);
    double worst = 0;
    const double h = 1e-5;
    for (int t = 0; t < 20; ++t) {
        int n = 2 + static_cast<int>(rng() % 7);  // up to 8x8
        RealGrid p(n, n);
        MaskGrid y(n, n, 0);
        for (size_t i = 0; i < p.size(); ++i) p.data()[i] = up(rng);
        for (size_t i = 0; i < y.size(); ++i) y.data()[i] = bit(rng) ? 1 : 0;
        y.data()[0] = 1;  // never all-empty

        for (double eps : {0.0, 1.0}) {
            RealGrid g = losses::dice_loss_grad(p, y, eps);
            RealGrid probe = p;
            worst = std::max(
                worst, fd_rel_error([&](RealGrid& q) { return losses::dice_loss(q, y, eps); },
                                    probe, g));
        }
        // Keep the smoothness surface away from its |.| kinks.
        bool kinked = false;
        for (int r = 0; r < n && !kinked; ++r)
            for (int c = 0; c < n && !kinked; ++c) {
                if (r + 1 < n && std::abs(p(r, c) - p(r + 1, c)) < 10 * h) kinked = true;
                if (c + 1 < n && std::abs(p(r, c) - p(r, c + 1)) < 10 * h) kinked = true;
            }
        if (!kinked) {
            RealGrid g = losses::smoothness_loss_grad(p, y);
            RealGrid probe = p;
            worst = std::max(
                worst, fd_rel_error([&](RealGrid& q) { return losses::smoothness_loss(q, y); },
                                    probe, g));
        }
    }
    double dt = now_s() - t0;
    char detail[128];
    std::snprintf(detail, sizeof detail, "max relative error %.2e in %.1fs", worst, dt);
    report(1, "analytic gradients match central finite differences", worst < 1e-4 && dt < 10.0,
           detail);
}

void criterion_2() {
    double t0 = now_s();
    std::mt19937_64 rng(2025);
    std::uniform_real_distribution<double> up(0.0, 1.0);
    bool ok = true;
    for (int t = 0; t < 50; ++t) {
        RealGrid p(16, 16);
        MaskGrid y(16, 16, 0);
        for (size_t i = 0; i < p.size(); ++i) p.data()[i] = up(rng);
        for (size_t i = 0; i < y.size(); ++i) y.data()[i] = rng() % 2;
        if (losses::smoothness_loss(p, y) != smoothness_bruteforce(p, y)) ok = false;

        MaskGrid a(16, 16, 0), b(16, 16, 0);
        for (size_t i = 0; i < a.size(); ++i) a.data()[i] = rng() % 2;
        for (size_t i = 0; i < b.size(); ++i) b.data()[i] = rng() % 2;
        long tp = 0, fp = 0, fn = 0;
        for (size_t i = 0; i < a.size(); ++i) {
            tp += a.data()[i] && b.data()[i];
            fp += a.data()[i] && !b.data()[i];
            fn += !a.data()[i] && b.data()[i];
        }
        double oracle = tp + fp + fn == 0 ? 1.0 : 2.0 * tp / double(2 * tp + fp + fn);
        if (std::abs(metrics::dice_coefficient(a, b) - oracle) > 1e-12) ok = false;
    }
    double dt = now_s() - t0;
    report(2, "smoothness and dice match brute-force oracles", ok && dt < 5.0,
           "50 instances each");
}

void criterion_3() {
    double t0 = now_s();
    auto paper_d = models::build_discriminator(models::Scale::Paper);
    auto [oh, ow] = paper_d.output_size();
    bool shape_ok = oh == 16 && ow == 16;

    auto box = models::receptive_field_box(paper_d, 8, 8);
    bool rf_ok = (box[1] - box[0] + 1) == 94 && (box[3] - box[2] + 1) == 94;

    bool down_ok = models::segmenter_backbone_downsample(
                       models::build_segmenter(models::Scale::Paper)) == 8 &&
                   models::segmenter_backbone_downsample(
                       models::build_segmenter(models::Scale::Desk)) == 8;

    // Locality probe on the desk discriminator (same 4x4/stride-2 geometry).
    nn::Rng rng(8);
    auto desk_spec = models::build_discriminator(models::Scale::Desk);
    models::PatchDiscriminator d(desk_spec, rng);
    nn::Tensor x(2, 128, 128);
    std::mt19937_64 xr(9);
    std::uniform_real_distribution<float> uf(0.0f, 1.0f);
    for (auto& v : x.v) v = uf(xr);
    nn::Tensor y0 = d.forward(x);
    auto cell_box = models::receptive_field_box(desk_spec, 3, 3);
    bool local_ok = true;
    // Perturb a pixel strictly outside the cell's receptive field.
    int pr = std::max(0, cell_box[0] - 3), pc = std::max(0, cell_box[2] - 3);
    if (pr < cell_box[0] || pc < cell_box[2]) {
        nn::Tensor x2 = x;
        x2.at(0, pr, pc) += 0.5f;
        x2.at(1, pr, pc) -= 0.5f;
        nn::Tensor y1 = d.forward(x2);
        if (y1.at(0, 3, 3) != y0.at(0, 3, 3)) local_ok = false;
        // Perturbing inside the field must register.
        nn::Tensor x3 = x;
        int ir = (cell_box[0] + cell_box[1]) / 2, ic = (cell_box[2] + cell_box[3]) / 2;
        x3.at(0, ir, ic) += 0.5f;
        nn::Tensor y2 = d.forward(x3);
        if (y2.at(0, 3, 3) == y0.at(0, 3, 3)) local_ok = false;
    } else {
        local_ok = false;
    }
    double dt = now_s() - t0;
    char detail[160];
    std::snprintf(detail, sizeof detail,
                  "paper output %dx%d, field %dx%d, downsample 8: %s (%.1fs)", oh, ow,
                  box[1] - box[0] + 1, box[3] - box[2] + 1, down_ok ? "yes" : "no", dt);
    report(3, "discriminator and backbone arithmetic", shape_ok && rf_ok && down_ok && local_ok && dt < 30.0,
           detail);
}

void criterion_4() {
    double t0 = now_s();
    const std::vector<metrics::TeamMetrics> table{
        {"CUHKMED", 0.8826, 0.9602, 0.0450},  {"Masker", 0.8837, 0.9464, 0.0414},
        {"BUCT", 0.8728, 0.9525, 0.0456},     {"NKSG", 0.8643, 0.9488, 0.0465},
        {"VRT", 0.8600, 0.9532, 0.0525},      {"AIML", 0.8519, 0.9505, 0.0469},
        {"Mammoth", 0.8667, 0.9361, 0.0526},  {"SMILEDeepDR", 0.8367, 0.9386, 0.0488},
        {"NIGHTOwl", 0.8257, 0.9487, 0.0563}, {"SDSAIRC", 0.8315, 0.9436, 0.0674},
        {"Cvblab", 0.7728, 0.9077, 0.0798},   {"Winter_Fell", 0.6861, 0.8772, 0.1536}};
    const std::vector<std::pair<std::string, double>> expected{
        {"CUHKMED", 1.75}, {"Masker", 2.50},      {"BUCT", 3.00},    {"NKSG", 4.60},
        {"VRT", 5.40},     {"AIML", 5.45},        {"Mammoth", 7.10},  {"SMILEDeepDR", 7.45},
        {"NIGHTOwl", 8.60}, {"SDSAIRC", 9.15},    {"Cvblab", 11.00},  {"Winter_Fell", 12.00}};
    auto ranked = metrics::challenge_score(table);
    bool ok = ranked.size() == expected.size();
    for (size_t i = 0; ok && i < ranked.size(); ++i)
        ok = ranked[i].team == expected[i].first &&
             std::abs(ranked[i].score - expected[i].second) < 1e-9;
    double dt = now_s() - t0;
    report(4, "published leaderboard scores and ordering reproduced", ok && dt < 1.0,
           "12 teams");
}

void criterion_5() {
    double t0 = now_s();
    int wins = 0;
    std::string detail;
    // One fixed benchmark dataset; the five seeds vary initialization and
    // data order for both training phases.
    Bench bench = make_bench(1004);
    for (int seed = 0; seed < kAdaptSeeds; ++seed) {
        adapt::TrainConfig pre = adapt::TrainConfig::pretrain_desk_defaults();
        pre.epochs = kAdaptPretrainEpochs;
        pre.seed = 100 + seed;
        pre.val_fraction = 0;
        pre.augmentation = adapt::AugmentConfig::off();
        auto base = adapt::pretrain_segmenter(bench.source_train, pre, models::Scale::Desk);
        EvalTriple before = evaluate(*base.model, bench.target_test);

        adapt::TrainConfig adv = adapt::TrainConfig::adversarial_desk_defaults();
        adv.epochs = kAdaptAdversarialEpochs;
        adv.seed = 200 + seed;
        adv.augmentation = adapt::AugmentConfig::off();
        adv.adv_weight = kAdaptAdvWeight;
        adv.lr_discriminator = kAdaptDiscLr;
        nn::Rng drng(300 + seed);
        auto disc = std::make_unique<models::PatchDiscriminator>(
            models::build_discriminator(models::Scale::Desk), drng);
        auto adapted = adapt::adversarial_train(std::move(base.model), std::move(disc),
                                                bench.source_train, bench.target_train, adv);
        EvalTriple after = evaluate(*adapted.segmenter, bench.target_test);

        bool win = after.dice_cup >= before.dice_cup + 0.01 &&
                   after.dice_disc >= before.dice_disc + 0.01 && after.delta <= before.delta;
        wins += win;
        char buf[160];
        std::snprintf(buf, sizeof buf, "%sseed %d: cup %+.3f disc %+.3f delta %+.3f%s",
                      seed ? "; " : "", seed, after.dice_cup - before.dice_cup,
                      after.dice_disc - before.dice_disc, after.delta - before.delta,
                      win ? "" : " (miss)");
        detail += buf;
        std::printf("  criterion 5 %s\n", buf);
        std::fflush(stdout);
    }
    double dt = now_s() - t0;
    char buf[64];
    std::snprintf(buf, sizeof buf, "%d/%d seeds improved in %.0fs", wins, kAdaptSeeds, dt);
    report(5, "adversarial adaptation beats the pretrain-only baseline", wins >= 4 && dt < 1800.0,
           buf);
}

void criterion_6() {
    double t0 = now_s();
    int wins = 0;
    for (int seed = 0; seed < kAblationSeeds; ++seed) {
        data::SynthConfig cfg;
        cfg.seed = 3000 + seed;
        auto r = data::generate_synthetic(cfg, kAblationTrainImages + kAblationValImages, 1);
        auto train = center_rois(r.source, 0, kAblationTrainImages);
        auto val = center_rois(r.source, kAblationTrainImages, kAblationValImages);

        auto run = [&](bool with_smooth) {
            adapt::TrainConfig wc = adapt::TrainConfig::pretrain_desk_defaults();
            wc.epochs = kAblationWarmEpochs;
            wc.seed = 400 + seed;
            wc.val_fraction = 0;
            wc.augmentation = adapt::AugmentConfig::off();
            wc.weights.lambda_smooth = 0.0;
            auto warm = adapt::pretrain_segmenter(train, wc, models::Scale::Desk);
            adapt::TrainConfig tc = wc;
            tc.epochs = kAblationFineEpochs;
            tc.seed = 500 + seed;
            tc.lr_segmenter = kAblationFineLr;
            tc.weights.lambda_smooth = with_smooth ? kAblationSmoothWeight : 0.0;
            auto res =
                adapt::pretrain_segmenter(train, tc, models::Scale::Desk, std::move(warm.model));
            double dice_cup = adapt::mean_dice(*res.model, val).cup;
            double smooth = 0;
            for (const auto& s : val) {
                ProbabilityMaps m = adapt::predict(*res.model, s);
                smooth += losses::smoothness_loss(m.disc, s.labels->disc) +
                          losses::smoothness_loss(m.cup, s.labels->cup);
            }
            return std::pair{dice_cup, smooth / static_cast<double>(val.size())};
        };
        auto [morph_dice, morph_smooth] = run(true);
        auto [plain_dice, plain_smooth] = run(false);
        bool win = morph_dice >= plain_dice - 0.005 && morph_smooth < plain_smooth;
        wins += win;
        std::printf("  criterion 6 seed %d: dice %.3f vs %.3f, smooth %.2f vs %.2f%s\n", seed,
                    morph_dice, plain_dice, morph_smooth, plain_smooth, win ? "" : " (miss)");
        std::fflush(stdout);
    }
    double dt = now_s() - t0;
    char buf[64];
    std::snprintf(buf, sizeof buf, "%d/%d seeds in %.0fs", wins, kAblationSeeds, dt);
    report(6, "morphology-aware loss matches dice-only and smooths predictions",
           wins == kAblationSeeds && dt < 900.0, buf);
}

void criterion_7() {
    double t0 = now_s();
    data::SynthConfig cfg;
    cfg.seed = 4000;
    auto r = data::generate_synthetic(cfg, kRoiTrainImages + 100, 1);
    std::vector<ImageSample> train(r.source.begin(), r.source.begin() + kRoiTrainImages);
    roi::ExtractorConfig ecfg;
    ecfg.epochs = kRoiTrainEpochs;
    ecfg.seed = 12;
    auto trained = roi::train_extractor(train, ecfg, models::Scale::Desk);

    int covered = 0;
    for (size_t i = kRoiTrainImages; i < r.source.size(); ++i) {
        const auto& s = r.source[i];
        ROIBox box = roi::locate_disc(*trained.model, s, 128);
        int r0 = s.rows(), r1 = -1, c0 = s.cols(), c1 = -1;
        for (int rr = 0; rr < s.rows(); ++rr)
            for (int cc = 0; cc < s.cols(); ++cc)
                if (s.labels->disc(rr, cc)) {
                    r0 = std::min(r0, rr);
                    r1 = std::max(r1, rr);
                    c0 = std::min(c0, cc);
                    c1 = std::max(c1, cc);
                }
        if (r0 >= box.top && r1 < box.bottom() && c0 >= box.left && c1 < box.right()) ++covered;
    }
    double dt = now_s() - t0;
    char buf[64];
    std::snprintf(buf, sizeof buf, "%d/100 covered in %.0fs", covered, dt);
    report(7, "trained extractor ROIs contain the full disc", covered >= 95 && dt < 600.0, buf);
}

void criterion_8() {
    double t0 = now_s();
    std::mt19937_64 rng(5000);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    bool ok = true;

    for (int t = 0; t < 100; ++t) {  // postprocess idempotence
        MaskGrid disc(14, 14, 0), cup(14, 14, 0);
        for (size_t i = 0; i < disc.size(); ++i) disc.data()[i] = u(rng) < 0.45;
        for (size_t i = 0; i < cup.size(); ++i) cup.data()[i] = u(rng) < 0.3;
        LabelMasks once = metrics::postprocess({disc, cup});
        LabelMasks twice = metrics::postprocess(once);
        if (!(once.disc == twice.disc) || !(once.cup == twice.cup)) ok = false;
        try {
            once.validate();
        } catch (const Error&) {
            ok = false;
        }
    }

    for (int t = 0; t < 100; ++t) {  // CDR flip/translation invariance
        const int n = 32;
        MaskGrid disc(n, n, 0), cup(n, n, 0);
        int cr = 10 + static_cast<int>(rng() % 10), cc = 10 + static_cast<int>(rng() % 10);
        int dv = 4 + static_cast<int>(rng() % 6), dh = 4 + static_cast<int>(rng() % 6);
        for (int r = 0; r < n; ++r)
            for (int c = 0; c < n; ++c) {
                double a = double(r - cr) / dv, b = double(c - cc) / dh;
                if (a * a + b * b <= 1.0) disc(r, c) = 1;
                if (a * a + b * b <= 0.25) cup(r, c) = 1;
            }
        double base = metrics::vertical_cdr({disc, cup});
        MaskGrid fd(n, n, 0), fc(n, n, 0), td(n, n, 0), tc(n, n, 0);
        int shift = static_cast<int>(rng() % 5) - 2;
        for (int r = 0; r < n; ++r)
            for (int c = 0; c < n; ++c) {
                fd(r, n - 1 - c) = disc(r, c);
                fc(r, n - 1 - c) = cup(r, c);
                int mc = ((c + shift) % n + n) % n;
                td(r, mc) = disc(r, c);
                tc(r, mc) = cup(r, c);
            }
        if (metrics::vertical_cdr({fd, fc}) != base) ok = false;
        if (metrics::vertical_cdr({td, tc}) != base) ok = false;
    }

    for (int t = 0; t < 100; ++t) {  // AUC monotone invariance
        std::vector<double> scores(40);
        std::vector<uint8_t> labels(40);
        for (int i = 0; i < 40; ++i) {
            scores[i] = u(rng);
            labels[i] = rng() % 2;
        }
        labels[0] = 1;
        labels[1] = 0;
        auto base = metrics::screening_auc(scores, labels);
        auto warped = scores;
        for (auto& s : warped) s = std::exp(2.0 * s) + 5.0;
        if (std::abs(metrics::screening_auc(warped, labels).auc - base.auc) > 1e-12) ok = false;
    }

    for (int t = 0; t < 100; ++t) {  // binarize containment
        RealGrid pd(9, 9), pc(9, 9);
        for (size_t i = 0; i < pd.size(); ++i) pd.data()[i] = u(rng);
        for (size_t i = 0; i < pc.size(); ++i) pc.data()[i] = u(rng);
        LabelMasks lm = binarize({pd, pc}, u(rng));
        try {
            lm.validate();
        } catch (const Error&) {
            ok = false;
        }
    }
    double dt = now_s() - t0;
    report(8, "metric invariants hold on randomized suites", ok && dt < 30.0,
           "100 cases per property");
}

}  // namespace

int main() {
    criterion_1();
    criterion_2();
    criterion_3();
    criterion_4();
    criterion_8();
    criterion_7();
    criterion_6();
    criterion_5();
    if (failures == 0) {
        std::printf("acceptance: all criteria passed\n");
        return 0;
    }
    std::printf("acceptance: %d criteria FAILED\n", failures);
    return 1;
}
