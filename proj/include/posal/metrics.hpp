#pragma once

#include <string>
#include <vector>

#include "posal/core.hpp"

namespace posal::metrics {

struct EvalRecord {
    std::string id;
    double dice_cup = 0;
    double dice_disc = 0;
    double cdr_pred = 0;
    double cdr_gt = 0;
    double delta = 0;  // |cdr_pred - cdr_gt|
};

struct EvalSummary {
    double mean_dice_cup = 0;
    double mean_dice_disc = 0;
    double mean_delta = 0;
    size_t count = 0;
};

struct RankEntry {
    std::string team;
    int rank_cup = 0;
    int rank_disc = 0;
    int rank_delta = 0;
    double score = 0;  // 0.35*R_cup + 0.25*R_disc + 0.4*R_delta
};

struct TeamMetrics {
    std::string team;
    double dice_cup = 0;
    double dice_disc = 0;
    double delta = 0;
};

// Morphological hole filling on both channels, containment re-asserted.
LabelMasks postprocess(const LabelMasks& masks);

// 2*TP / (2*TP + FP + FN); both-empty convention 1.0.
double dice_coefficient(const MaskGrid& pred, const MaskGrid& gt);

// Vertical cup-to-disc ratio from tight vertical bounding extents.
// Empty cup gives 0; empty disc throws DataError.
double vertical_cdr(const LabelMasks& masks);

std::pair<std::vector<EvalRecord>, EvalSummary> evaluate_dataset(
    const std::vector<std::pair<std::string, LabelMasks>>& preds,
    const std::vector<std::pair<std::string, LabelMasks>>& gts);

struct RocPoint {
    double fpr = 0, tpr = 0, threshold = 0;
};

struct RocResult {
    std::vector<RocPoint> curve;
    double auc = 0;
    bool degenerate_scores = false;  // constant scores, AUC 0.5 by convention
};

// ROC/AUC of min-max-normalized CDR scores against glaucoma labels.
RocResult screening_auc(const std::vector<double>& cdr_values,
                        const std::vector<uint8_t>& glaucoma_labels);

// Ranks each metric column (competition ranking, ties share the minimum
// rank) and sorts by the weighted rank score, ascending.
std::vector<RankEntry> challenge_score(const std::vector<TeamMetrics>& table);

void write_eval_csv(const std::string& path, const std::vector<EvalRecord>& records);
void write_roc_csv(const std::string& path, const RocResult& roc);
std::vector<TeamMetrics> read_team_metrics_csv(const std::string& path);
void write_rank_csv(const std::string& path, const std::vector<RankEntry>& entries);

}  // namespace posal::metrics
