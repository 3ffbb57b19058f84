#include "posal/losses.hpp"

#include <algorithm>
#include <cmath>

namespace posal::losses {

namespace {

void check_pair(const RealGrid& p, const MaskGrid& y) {
    if (p.rows() != y.rows() || p.cols() != y.cols())
        throw ShapeMismatch("loss: prediction/label shape mismatch");
    for (size_t i = 0; i < y.size(); ++i)
        if (y.data()[i] > 1) throw DataError("loss: non-binary ground truth");
}

struct DiceSums {
    double inter = 0;  // sum p*y
    double p2 = 0;
    double y2 = 0;
};

DiceSums dice_sums(const RealGrid& p, const MaskGrid& y) {
    DiceSums s;
    for (size_t i = 0; i < p.size(); ++i) {
        double pi = p.data()[i];
        double yi = y.data()[i];
        s.inter += pi * yi;
        s.p2 += pi * pi;
        s.y2 += yi;  // y binary: y^2 == y
    }
    return s;
}

double clamp_score(double v) { return std::clamp(v, kLogClamp, 1.0 - kLogClamp); }

}  // namespace

double dice_loss(const RealGrid& p, const MaskGrid& y, double eps) {
    check_pair(p, y);
    DiceSums s = dice_sums(p, y);
    double den = s.p2 + s.y2 + eps;
    if (den == 0.0) return 0.0;  // p == 0 and y == 0, perfect by convention
    return 1.0 - (2.0 * s.inter + eps) / den;
}

RealGrid dice_loss_grad(const RealGrid& p, const MaskGrid& y, double eps) {
    check_pair(p, y);
    DiceSums s = dice_sums(p, y);
    double num = 2.0 * s.inter + eps;
    double den = s.p2 + s.y2 + eps;
    RealGrid g(p.rows(), p.cols(), 0.0);
    if (den == 0.0) return g;
    for (size_t i = 0; i < p.size(); ++i)
        g.data()[i] = -(2.0 * y.data()[i] * den - num * 2.0 * p.data()[i]) / (den * den);
    return g;
}

double smoothness_loss(const RealGrid& p, const MaskGrid& y) {
    check_pair(p, y);
    const int h = p.rows(), w = p.cols();
    const int dr[4] = {-1, 1, 0, 0};
    const int dc[4] = {0, 0, -1, 1};
    double total = 0;
    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) {
            if (y(r, c) == 0) continue;
            for (int k = 0; k < 4; ++k) {
                int nr = r + dr[k], nc = c + dc[k];
                if (nr < 0 || nr >= h || nc < 0 || nc >= w) continue;
                if (y(nr, nc) != y(r, c)) continue;
                total += std::abs(p(r, c) - p(nr, nc));
            }
        }
    }
    return total;
}

RealGrid smoothness_loss_grad(const RealGrid& p, const MaskGrid& y) {
    check_pair(p, y);
    const int h = p.rows(), w = p.cols();
    const int dr[4] = {-1, 1, 0, 0};
    const int dc[4] = {0, 0, -1, 1};
    RealGrid g(h, w, 0.0);
    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) {
            if (y(r, c) == 0) continue;
            for (int k = 0; k < 4; ++k) {
                int nr = r + dr[k], nc = c + dc[k];
                if (nr < 0 || nr >= h || nc < 0 || nc >= w) continue;
                if (y(nr, nc) != y(r, c)) continue;
                double d = p(r, c) - p(nr, nc);
                double s = d > 0 ? 1.0 : (d < 0 ? -1.0 : 0.0);
                g(r, c) += s;
                g(nr, nc) -= s;
            }
        }
    }
    return g;
}

SegLossParts seg_loss_parts(const ProbabilityMaps& pred, const LabelMasks& labels,
                            double dice_eps) {
    SegLossParts parts;
    parts.dice_disc = dice_loss(pred.disc, labels.disc, dice_eps);
    parts.dice_cup = dice_loss(pred.cup, labels.cup, dice_eps);
    parts.smooth_disc = smoothness_loss(pred.disc, labels.disc);
    parts.smooth_cup = smoothness_loss(pred.cup, labels.cup);
    return parts;
}

double seg_loss(const ProbabilityMaps& pred, const LabelMasks& labels, const LossWeights& w,
                double dice_eps) {
    SegLossParts parts = seg_loss_parts(pred, labels, dice_eps);
    return w.lambda_disc_dice * parts.dice_disc + w.lambda_cup_dice * parts.dice_cup +
           w.lambda_smooth * (parts.smooth_disc + parts.smooth_cup);
}

ProbabilityMaps seg_loss_grad(const ProbabilityMaps& pred, const LabelMasks& labels,
                              const LossWeights& w, double dice_eps) {
    RealGrid gd = dice_loss_grad(pred.disc, labels.disc, dice_eps);
    RealGrid gc = dice_loss_grad(pred.cup, labels.cup, dice_eps);
    RealGrid sd = smoothness_loss_grad(pred.disc, labels.disc);
    RealGrid sc = smoothness_loss_grad(pred.cup, labels.cup);
    ProbabilityMaps out{RealGrid(gd.rows(), gd.cols(), 0.0), RealGrid(gc.rows(), gc.cols(), 0.0)};
    for (size_t i = 0; i < gd.size(); ++i) {
        out.disc.data()[i] = w.lambda_disc_dice * gd.data()[i] + w.lambda_smooth * sd.data()[i];
        out.cup.data()[i] = w.lambda_cup_dice * gc.data()[i] + w.lambda_smooth * sc.data()[i];
    }
    return out;
}

double discriminator_source_term(const PatchScoreGrid& src_scores) {
    double total = 0;
    for (size_t i = 0; i < src_scores.scores.size(); ++i)
        total -= std::log(clamp_score(src_scores.scores.data()[i]));
    return total;
}

double discriminator_target_term(const PatchScoreGrid& tgt_scores) {
    double total = 0;
    for (size_t i = 0; i < tgt_scores.scores.size(); ++i)
        total -= std::log(1.0 - clamp_score(tgt_scores.scores.data()[i]));
    return total;
}

double discriminator_loss(const PatchScoreGrid& src_scores, const PatchScoreGrid& tgt_scores) {
    if (!src_scores.scores.same_shape(tgt_scores.scores))
        throw ShapeMismatch("discriminator_loss: grid shape mismatch");
    return discriminator_source_term(src_scores) + discriminator_target_term(tgt_scores);
}

RealGrid discriminator_source_term_grad(const PatchScoreGrid& src_scores) {
    const RealGrid& s = src_scores.scores;
    RealGrid g(s.rows(), s.cols(), 0.0);
    for (size_t i = 0; i < s.size(); ++i) g.data()[i] = -1.0 / clamp_score(s.data()[i]);
    return g;
}

RealGrid discriminator_target_term_grad(const PatchScoreGrid& tgt_scores) {
    const RealGrid& s = tgt_scores.scores;
    RealGrid g(s.rows(), s.cols(), 0.0);
    for (size_t i = 0; i < s.size(); ++i) g.data()[i] = 1.0 / (1.0 - clamp_score(s.data()[i]));
    return g;
}

double adversarial_loss(const PatchScoreGrid& tgt_scores) {
    return discriminator_source_term(tgt_scores);
}

RealGrid adversarial_loss_grad(const PatchScoreGrid& tgt_scores) {
    return discriminator_source_term_grad(tgt_scores);
}

double cross_entropy_loss(const RealGrid& p, const MaskGrid& y) {
    check_pair(p, y);
    double total = 0;
    for (size_t i = 0; i < p.size(); ++i) {
        double pi = clamp_score(p.data()[i]);
        total -= y.data()[i] ? std::log(pi) : std::log(1.0 - pi);
    }
    return total / static_cast<double>(p.size());
}

RealGrid cross_entropy_loss_grad(const RealGrid& p, const MaskGrid& y) {
    check_pair(p, y);
    RealGrid g(p.rows(), p.cols(), 0.0);
    double n = static_cast<double>(p.size());
    for (size_t i = 0; i < p.size(); ++i) {
        double pi = clamp_score(p.data()[i]);
        g.data()[i] = (y.data()[i] ? -1.0 / pi : 1.0 / (1.0 - pi)) / n;
    }
    return g;
}

}  // namespace posal::losses
