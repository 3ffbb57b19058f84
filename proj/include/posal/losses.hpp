#pragma once

#include "posal/core.hpp"

namespace posal::losses {

struct LossWeights {
    double lambda_disc_dice = 0.4;
    double lambda_cup_dice = 0.6;
    double lambda_smooth = 1.0;
};

// m x n sigmoid scores from the patch discriminator.
struct PatchScoreGrid {
    RealGrid scores;
};

inline constexpr double kLogClamp = 1e-7;

// Soft dice loss: 1 - (2*sum(p*y) + eps) / (sum(p^2) + sum(y^2) + eps).
// eps = 0 gives the exact textbook form; the p==0, y==0 denominator-zero
// case returns 0.
double dice_loss(const RealGrid& p, const MaskGrid& y, double eps = 1.0);

// d(dice_loss)/dp, elementwise.
RealGrid dice_loss_grad(const RealGrid& p, const MaskGrid& y, double eps = 1.0);

// Pairwise smoothness penalty over the four-connected neighborhood:
// sum_i sum_{j in N(i)} [y_i == y_j] * y_i * |p_i - p_j|, directed pairs.
double smoothness_loss(const RealGrid& p, const MaskGrid& y);

// Subgradient with sign(0) := 0.
RealGrid smoothness_loss_grad(const RealGrid& p, const MaskGrid& y);

// Morphology-aware segmentation loss:
// l1*DL(p_d,y_d) + l2*DL(p_c,y_c) + l3*[SL(p_d,y_d) + SL(p_c,y_c)].
double seg_loss(const ProbabilityMaps& pred, const LabelMasks& labels, const LossWeights& w,
                double dice_eps = 1.0);

struct SegLossParts {
    double dice_disc = 0;
    double dice_cup = 0;
    double smooth_disc = 0;
    double smooth_cup = 0;
};
SegLossParts seg_loss_parts(const ProbabilityMaps& pred, const LabelMasks& labels,
                            double dice_eps = 1.0);

// Gradients of seg_loss w.r.t. both probability channels.
ProbabilityMaps seg_loss_grad(const ProbabilityMaps& pred, const LabelMasks& labels,
                              const LossWeights& w, double dice_eps = 1.0);

// Discriminator objective, z=1 source / z=0 target, summed over the grid.
// Scores are clamped to [kLogClamp, 1-kLogClamp] before the log.
double discriminator_loss(const PatchScoreGrid& src_scores, const PatchScoreGrid& tgt_scores);
double discriminator_source_term(const PatchScoreGrid& src_scores);
double discriminator_target_term(const PatchScoreGrid& tgt_scores);

// Gradients of the two discriminator terms w.r.t. the scores.
RealGrid discriminator_source_term_grad(const PatchScoreGrid& src_scores);
RealGrid discriminator_target_term_grad(const PatchScoreGrid& tgt_scores);

// Segmentation network's incentive on target predictions: -sum log(score).
double adversarial_loss(const PatchScoreGrid& tgt_scores);
RealGrid adversarial_loss_grad(const PatchScoreGrid& tgt_scores);

// Pixelwise binary cross-entropy, baseline for loss-ablation comparisons.
double cross_entropy_loss(const RealGrid& p, const MaskGrid& y);
RealGrid cross_entropy_loss_grad(const RealGrid& p, const MaskGrid& y);

}  // namespace posal::losses
