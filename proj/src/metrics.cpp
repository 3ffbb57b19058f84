#include "posal/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

namespace posal::metrics {

namespace {

// Fills interior holes: anything not reachable from the border through
// background is foreground.
MaskGrid fill_holes(const MaskGrid& mask) {
    int h = mask.rows(), w = mask.cols();
    Grid<uint8_t> outside(h, w, 0);
    std::vector<std::pair<int, int>> stack;
    auto push = [&](int r, int c) {
        if (r < 0 || r >= h || c < 0 || c >= w) return;
        if (outside(r, c) || mask(r, c)) return;
        outside(r, c) = 1;
        stack.emplace_back(r, c);
    };
    for (int r = 0; r < h; ++r) {
        push(r, 0);
        push(r, w - 1);
    }
    for (int c = 0; c < w; ++c) {
        push(0, c);
        push(h - 1, c);
    }
    while (!stack.empty()) {
        auto [r, c] = stack.back();
        stack.pop_back();
        push(r - 1, c);
        push(r + 1, c);
        push(r, c - 1);
        push(r, c + 1);
    }
    MaskGrid out(h, w, 0);
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) out(r, c) = outside(r, c) ? 0 : 1;
    return out;
}

}  // namespace

LabelMasks postprocess(const LabelMasks& masks) {
    LabelMasks out{fill_holes(masks.disc), fill_holes(masks.cup)};
    for (int r = 0; r < out.disc.rows(); ++r)
        for (int c = 0; c < out.disc.cols(); ++c)
            out.cup(r, c) = static_cast<uint8_t>(out.cup(r, c) & out.disc(r, c));
    return out;
}

double dice_coefficient(const MaskGrid& pred, const MaskGrid& gt) {
    if (!pred.same_shape(gt)) throw ShapeMismatch("dice_coefficient: shape mismatch");
    long tp = 0, fp = 0, fn = 0;
    for (size_t i = 0; i < pred.size(); ++i) {
        bool p = pred.data()[i] != 0, g = gt.data()[i] != 0;
        tp += p && g;
        fp += p && !g;
        fn += !p && g;
    }
    if (tp + fp + fn == 0) return 1.0;  // both empty
    return 2.0 * tp / static_cast<double>(2 * tp + fp + fn);
}

namespace {

// Tight vertical extent in pixels (inclusive), 0 when empty.
int vertical_extent(const MaskGrid& mask) {
    int lo = -1, hi = -1;
    for (int r = 0; r < mask.rows(); ++r) {
        for (int c = 0; c < mask.cols(); ++c) {
            if (mask(r, c)) {
                if (lo < 0) lo = r;
                hi = r;
                break;
            }
        }
    }
    return lo < 0 ? 0 : hi - lo + 1;
}

}  // namespace

double vertical_cdr(const LabelMasks& masks) {
    int vd = vertical_extent(masks.disc);
    if (vd == 0) throw DataError("vertical_cdr: empty disc mask");
    int vc = vertical_extent(masks.cup);
    return static_cast<double>(vc) / vd;
}

std::pair<std::vector<EvalRecord>, EvalSummary> evaluate_dataset(
    const std::vector<std::pair<std::string, LabelMasks>>& preds,
    const std::vector<std::pair<std::string, LabelMasks>>& gts) {
    std::map<std::string, const LabelMasks*> gt_by_id;
    for (const auto& [id, m] : gts) gt_by_id[id] = &m;
    if (preds.size() != gts.size())
        throw DataError("evaluate_dataset: prediction/ground-truth count mismatch");
    std::vector<EvalRecord> records;
    EvalSummary summary;
    for (const auto& [id, pred] : preds) {
        auto it = gt_by_id.find(id);
        if (it == gt_by_id.end()) throw DataError("evaluate_dataset: no ground truth for " + id);
        const LabelMasks& gt = *it->second;
        EvalRecord rec;
        rec.id = id;
        rec.dice_disc = dice_coefficient(pred.disc, gt.disc);
        rec.dice_cup = dice_coefficient(pred.cup, gt.cup);
        rec.cdr_pred = vertical_extent(pred.disc) == 0 ? 0.0 : vertical_cdr(pred);
        rec.cdr_gt = vertical_cdr(gt);
        rec.delta = std::abs(rec.cdr_pred - rec.cdr_gt);
        summary.mean_dice_cup += rec.dice_cup;
        summary.mean_dice_disc += rec.dice_disc;
        summary.mean_delta += rec.delta;
        records.push_back(std::move(rec));
    }
    summary.count = records.size();
    if (summary.count > 0) {
        summary.mean_dice_cup /= static_cast<double>(summary.count);
        summary.mean_dice_disc /= static_cast<double>(summary.count);
        summary.mean_delta /= static_cast<double>(summary.count);
    }
    return {std::move(records), summary};
}

RocResult screening_auc(const std::vector<double>& cdr_values,
                        const std::vector<uint8_t>& glaucoma_labels) {
    if (cdr_values.size() != glaucoma_labels.size())
        throw ShapeMismatch("screening_auc: size mismatch");
    long pos = 0, neg = 0;
    for (auto l : glaucoma_labels) (l ? pos : neg)++;
    if (pos == 0 || neg == 0)
        throw DataError("screening_auc: need at least one positive and one negative label");

    double lo = *std::min_element(cdr_values.begin(), cdr_values.end());
    double hi = *std::max_element(cdr_values.begin(), cdr_values.end());
    RocResult out;
    if (hi == lo) {
        out.degenerate_scores = true;
        out.auc = 0.5;
        out.curve = {{0, 0, hi}, {1, 1, lo}};
        return out;
    }
    std::vector<double> scores(cdr_values.size());
    for (size_t i = 0; i < scores.size(); ++i) scores[i] = (cdr_values[i] - lo) / (hi - lo);

    std::vector<size_t> order(scores.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](size_t a, size_t b) { return scores[a] > scores[b]; });

    out.curve.push_back({0, 0, 1.0});
    long tp = 0, fp = 0;
    for (size_t k = 0; k < order.size();) {
        double threshold = scores[order[k]];
        while (k < order.size() && scores[order[k]] == threshold) {
            (glaucoma_labels[order[k]] ? tp : fp)++;
            ++k;
        }
        out.curve.push_back({static_cast<double>(fp) / neg, static_cast<double>(tp) / pos,
                             threshold});
    }
    for (size_t i = 1; i < out.curve.size(); ++i) {
        const auto& a = out.curve[i - 1];
        const auto& b = out.curve[i];
        out.auc += (b.fpr - a.fpr) * (a.tpr + b.tpr) / 2.0;
    }
    return out;
}

namespace {

// Competition ranking: 1 + number of strictly better entries.
std::vector<int> rank_column(const std::vector<double>& values, bool higher_is_better) {
    std::vector<int> ranks(values.size(), 1);
    for (size_t i = 0; i < values.size(); ++i)
        for (size_t j = 0; j < values.size(); ++j) {
            bool better = higher_is_better ? values[j] > values[i] : values[j] < values[i];
            if (better) ++ranks[i];
        }
    return ranks;
}

}  // namespace

std::vector<RankEntry> challenge_score(const std::vector<TeamMetrics>& table) {
    if (table.empty()) throw DataError("challenge_score: empty table");
    std::vector<double> cup, disc, delta;
    for (const auto& t : table) {
        cup.push_back(t.dice_cup);
        disc.push_back(t.dice_disc);
        delta.push_back(t.delta);
    }
    auto r_cup = rank_column(cup, true);
    auto r_disc = rank_column(disc, true);
    auto r_delta = rank_column(delta, false);
    std::vector<RankEntry> out;
    for (size_t i = 0; i < table.size(); ++i) {
        RankEntry e;
        e.team = table[i].team;
        e.rank_cup = r_cup[i];
        e.rank_disc = r_disc[i];
        e.rank_delta = r_delta[i];
        e.score = 0.35 * e.rank_cup + 0.25 * e.rank_disc + 0.4 * e.rank_delta;
        out.push_back(std::move(e));
    }
    std::stable_sort(out.begin(), out.end(),
                     [](const RankEntry& a, const RankEntry& b) { return a.score < b.score; });
    return out;
}

void write_eval_csv(const std::string& path, const std::vector<EvalRecord>& records) {
    std::ofstream os(path);
    if (!os) throw DataError("write_eval_csv: cannot write " + path);
    os << "id,dice_cup,dice_disc,cdr_pred,cdr_gt,delta\n";
    for (const auto& r : records)
        os << r.id << "," << r.dice_cup << "," << r.dice_disc << "," << r.cdr_pred << ","
           << r.cdr_gt << "," << r.delta << "\n";
}

void write_roc_csv(const std::string& path, const RocResult& roc) {
    std::ofstream os(path);
    if (!os) throw DataError("write_roc_csv: cannot write " + path);
    os << "fpr,tpr,threshold\n";
    for (const auto& p : roc.curve) os << p.fpr << "," << p.tpr << "," << p.threshold << "\n";
    os << "# auc," << roc.auc << "\n";
}

std::vector<TeamMetrics> read_team_metrics_csv(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw DataError("read_team_metrics_csv: cannot open " + path);
    std::string line;
    std::getline(is, line);  // header: team,dice_cup,dice_disc,delta
    std::vector<TeamMetrics> out;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        TeamMetrics t;
        std::string field;
        std::getline(ss, t.team, ',');
        std::getline(ss, field, ',');
        t.dice_cup = std::stod(field);
        std::getline(ss, field, ',');
        t.dice_disc = std::stod(field);
        std::getline(ss, field, ',');
        t.delta = std::stod(field);
        out.push_back(std::move(t));
    }
    if (out.empty()) throw DataError("read_team_metrics_csv: no rows in " + path);
    return out;
}

void write_rank_csv(const std::string& path, const std::vector<RankEntry>& entries) {
    std::ofstream os(path);
    if (!os) throw DataError("write_rank_csv: cannot write " + path);
    os << "team,rank_cup,rank_disc,rank_delta,score\n";
    for (const auto& e : entries)
        os << e.team << "," << e.rank_cup << "," << e.rank_disc << "," << e.rank_delta << ","
           << e.score << "\n";
}

}  // namespace posal::metrics
