#include "posal/adapt.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include "posal/convert.hpp"

namespace posal::adapt {

using models::Network;
using models::Scale;
using nn::Tensor;

double lr_at(int64_t step, int64_t total_steps, double lr0, const LrSchedule& sched,
             int64_t steps_per_epoch) {
    switch (sched.kind) {
        case LrSchedule::Kind::Const: return lr0;
        case LrSchedule::Kind::Poly: {
            double frac = total_steps > 0 ? static_cast<double>(step) / total_steps : 0.0;
            frac = std::clamp(frac, 0.0, 1.0);
            return lr0 * std::pow(1.0 - frac, sched.power);
        }
        case LrSchedule::Kind::Step: {
            int64_t epoch = steps_per_epoch > 0 ? step / steps_per_epoch : 0;
            int64_t drops = sched.step_interval > 0 ? epoch / sched.step_interval : 0;
            return lr0 * std::pow(sched.step_factor, static_cast<double>(drops));
        }
    }
    return lr0;
}

AugmentConfig AugmentConfig::off() {
    AugmentConfig c;
    c.scale = c.rotate = c.hflip = c.vflip = c.elastic = c.contrast = c.noise = c.erase = false;
    return c;
}

namespace {

struct DisplacementField {
    int grid = 0;
    std::vector<double> dr, dc;  // (grid+1)^2 control points

    std::pair<double, double> at(double r, double c, int h, int w) const {
        if (grid == 0) return {0, 0};
        double gr = r / (h - 1) * grid, gc = c / (w - 1) * grid;
        int r0 = std::clamp(static_cast<int>(gr), 0, grid - 1);
        int c0 = std::clamp(static_cast<int>(gc), 0, grid - 1);
        double fr = gr - r0, fc = gc - c0;
        auto lerp = [&](const std::vector<double>& f) {
            int n = grid + 1;
            double a = f[r0 * n + c0], b = f[r0 * n + c0 + 1];
            double d = f[(r0 + 1) * n + c0], e = f[(r0 + 1) * n + c0 + 1];
            return (a * (1 - fc) + b * fc) * (1 - fr) + (d * (1 - fc) + e * fc) * fr;
        };
        return {lerp(dr), lerp(dc)};
    }
};

float sample_bilinear(const Grid<float>& g, double r, double c) {
    r = std::clamp(r, 0.0, static_cast<double>(g.rows() - 1));
    c = std::clamp(c, 0.0, static_cast<double>(g.cols() - 1));
    int r0 = static_cast<int>(r), c0 = static_cast<int>(c);
    int r1 = std::min(r0 + 1, g.rows() - 1), c1 = std::min(c0 + 1, g.cols() - 1);
    double fr = r - r0, fc = c - c0;
    double top = g(r0, c0) * (1 - fc) + g(r0, c1) * fc;
    double bot = g(r1, c0) * (1 - fc) + g(r1, c1) * fc;
    return static_cast<float>(top * (1 - fr) + bot * fr);
}

uint8_t sample_nearest(const MaskGrid& g, double r, double c) {
    int ir = std::clamp(static_cast<int>(std::lround(r)), 0, g.rows() - 1);
    int ic = std::clamp(static_cast<int>(std::lround(c)), 0, g.cols() - 1);
    return g(ir, ic);
}

}  // namespace

ImageSample augment(const ImageSample& sample, const AugmentConfig& cfg, nn::Rng& rng) {
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    const int h = sample.rows(), w = sample.cols();
    ImageSample out = sample;

    if (cfg.any_geometric()) {
        double scale = cfg.scale ? cfg.scale_min + (cfg.scale_max - cfg.scale_min) * u01(rng) : 1.0;
        double theta =
            cfg.rotate ? (2 * u01(rng) - 1) * cfg.rotate_max_deg * M_PI / 180.0 : 0.0;
        bool hflip = cfg.hflip && u01(rng) < 0.5;
        bool vflip = cfg.vflip && u01(rng) < 0.5;
        DisplacementField field;
        if (cfg.elastic) {
            field.grid = cfg.elastic_grid;
            int n = (field.grid + 1) * (field.grid + 1);
            std::normal_distribution<double> disp(0.0, cfg.elastic_sigma_px);
            field.dr.resize(n);
            field.dc.resize(n);
            for (int i = 0; i < n; ++i) field.dr[i] = disp(rng);
            for (int i = 0; i < n; ++i) field.dc[i] = disp(rng);
        }

        // Inverse map: output pixel -> source coordinates.
        double cr = (h - 1) / 2.0, cc = (w - 1) / 2.0;
        double inv_scale = 1.0 / scale;
        double cos_t = std::cos(-theta), sin_t = std::sin(-theta);
        auto src_of = [&](int r, int c) {
            double rr = r, rc = c;
            if (hflip) rc = w - 1 - rc;
            if (vflip) rr = h - 1 - rr;
            auto [er, ec] = field.at(rr, rc, h, w);
            double dr = rr - cr + er, dc = rc - cc + ec;
            double sr = (cos_t * dr - sin_t * dc) * inv_scale + cr;
            double sc = (sin_t * dr + cos_t * dc) * inv_scale + cc;
            return std::pair<double, double>{sr, sc};
        };

        for (int ch = 0; ch < static_cast<int>(sample.pixels.size()); ++ch) {
            Grid<float> g(h, w);
            for (int r = 0; r < h; ++r)
                for (int c = 0; c < w; ++c) {
                    auto [sr, sc] = src_of(r, c);
                    g(r, c) = sample_bilinear(sample.pixels[ch], sr, sc);
                }
            out.pixels[ch] = std::move(g);
        }
        if (sample.labels) {
            LabelMasks lm{MaskGrid(h, w, 0), MaskGrid(h, w, 0)};
            for (int r = 0; r < h; ++r)
                for (int c = 0; c < w; ++c) {
                    auto [sr, sc] = src_of(r, c);
                    lm.disc(r, c) = sample_nearest(sample.labels->disc, sr, sc);
                    lm.cup(r, c) = sample_nearest(sample.labels->cup, sr, sc);
                }
            out.labels = std::move(lm);
        }
    }

    if (cfg.contrast) {
        double f = cfg.contrast_min + (cfg.contrast_max - cfg.contrast_min) * u01(rng);
        for (auto& ch : out.pixels)
            for (size_t i = 0; i < ch.size(); ++i)
                ch.data()[i] = static_cast<float>(
                    std::clamp((ch.data()[i] - 0.5) * f + 0.5, 0.0, 1.0));
    }
    if (cfg.noise) {
        std::normal_distribution<double> n(0.0, cfg.noise_std);
        for (auto& ch : out.pixels)
            for (size_t i = 0; i < ch.size(); ++i)
                ch.data()[i] = static_cast<float>(std::clamp(ch.data()[i] + n(rng), 0.0, 1.0));
    }
    if (cfg.erase && u01(rng) < 0.5) {
        int eh = std::max(1, static_cast<int>(h * cfg.erase_fraction * u01(rng)));
        int ew = std::max(1, static_cast<int>(w * cfg.erase_fraction * u01(rng)));
        int r0 = static_cast<int>(u01(rng) * (h - eh));
        int c0 = static_cast<int>(u01(rng) * (w - ew));
        for (auto& ch : out.pixels)
            for (int r = r0; r < r0 + eh; ++r)
                for (int c = c0; c < c0 + ew; ++c)
                    ch(r, c) = static_cast<float>(u01(rng));
    }
    return out;
}

// ------------------------------------------------------------ TrainConfig

namespace {

nlohmann::json schedule_to_json(const LrSchedule& s) {
    std::string kind = s.kind == LrSchedule::Kind::Poly ? "poly"
                       : s.kind == LrSchedule::Kind::Step ? "step"
                                                          : "const";
    return {{"kind", kind},
            {"power", s.power},
            {"step_interval", s.step_interval},
            {"step_factor", s.step_factor}};
}

LrSchedule schedule_from_json(const nlohmann::json& j) {
    LrSchedule s;
    std::string kind = j.value("kind", "poly");
    if (kind == "poly") s.kind = LrSchedule::Kind::Poly;
    else if (kind == "step") s.kind = LrSchedule::Kind::Step;
    else if (kind == "const") s.kind = LrSchedule::Kind::Const;
    else throw ConfigError("unknown lr schedule kind: " + kind);
    s.power = j.value("power", 0.9);
    s.step_interval = j.value("step_interval", 100);
    s.step_factor = j.value("step_factor", 0.2);
    return s;
}

}  // namespace

TrainConfig TrainConfig::pretrain_desk_defaults() {
    TrainConfig c;
    c.phase = Phase::Pretrain;
    c.epochs = 40;
    c.batch_size = 8;
    c.lr_segmenter = 1e-3;
    c.sched_segmenter.kind = LrSchedule::Kind::Step;
    c.sched_segmenter.step_interval = 20;  // desk analog of the 100-epoch drop
    c.sched_segmenter.step_factor = 0.2;
    // The smoothness term is an unnormalized pixel-pair sum; at full weight
    // its O(1) per-pixel gradients drown the O(1/area) dice gradients on
    // 128x128 inputs and training collapses to constant maps. Rescale it.
    c.weights.lambda_smooth = 5e-5;
    return c;
}

TrainConfig TrainConfig::adversarial_desk_defaults() {
    TrainConfig c;
    c.phase = Phase::Adversarial;
    c.epochs = 30;
    c.batch_size = 8;
    c.lr_segmenter = 2.5e-4;  // desk-scale analog of 2.5e-5; polynomially decayed
    c.lr_discriminator = 1e-4;
    c.sched_segmenter.kind = LrSchedule::Kind::Poly;
    c.sched_discriminator.kind = LrSchedule::Kind::Poly;
    c.weights.lambda_smooth = 5e-5;  // see pretrain_desk_defaults
    return c;
}

TrainConfig TrainConfig::load(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("config: cannot open " + path);
    nlohmann::json j;
    try {
        is >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config: parse error in " + path + ": " + e.what());
    }
    std::string phase = j.value("phase", "pretrain");
    TrainConfig c = phase == "adversarial" ? adversarial_desk_defaults()
                                           : pretrain_desk_defaults();
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.lr_segmenter = j.value("lr_segmenter", c.lr_segmenter);
    c.lr_discriminator = j.value("lr_discriminator", c.lr_discriminator);
    if (j.contains("sched_segmenter")) c.sched_segmenter = schedule_from_json(j["sched_segmenter"]);
    if (j.contains("sched_discriminator"))
        c.sched_discriminator = schedule_from_json(j["sched_discriminator"]);
    if (j.contains("loss_weights")) {
        c.weights.lambda_disc_dice = j["loss_weights"].value("disc_dice", c.weights.lambda_disc_dice);
        c.weights.lambda_cup_dice = j["loss_weights"].value("cup_dice", c.weights.lambda_cup_dice);
        c.weights.lambda_smooth = j["loss_weights"].value("smooth", c.weights.lambda_smooth);
    }
    c.dice_eps = j.value("dice_eps", c.dice_eps);
    c.adv_weight = j.value("adv_weight", c.adv_weight);
    c.seed = j.value("seed", c.seed);
    c.val_fraction = j.value("val_fraction", c.val_fraction);
    if (c.epochs < 0 || c.batch_size < 1 || c.lr_segmenter <= 0 || c.lr_discriminator <= 0)
        throw ConfigError("config: invalid training parameters in " + path);
    if (j.contains("augmentation")) {
        const auto& a = j["augmentation"];
        AugmentConfig& g = c.augmentation;
        g.scale = a.value("scale", g.scale);
        g.rotate = a.value("rotate", g.rotate);
        g.hflip = a.value("hflip", g.hflip);
        g.vflip = a.value("vflip", g.vflip);
        g.elastic = a.value("elastic", g.elastic);
        g.contrast = a.value("contrast", g.contrast);
        g.noise = a.value("noise", g.noise);
        g.erase = a.value("erase", g.erase);
    }
    return c;
}

void TrainConfig::save(const std::string& path) const {
    nlohmann::json j{
        {"phase", phase == Phase::Pretrain ? "pretrain" : "adversarial"},
        {"epochs", epochs},
        {"batch_size", batch_size},
        {"lr_segmenter", lr_segmenter},
        {"lr_discriminator", lr_discriminator},
        {"sched_segmenter", schedule_to_json(sched_segmenter)},
        {"sched_discriminator", schedule_to_json(sched_discriminator)},
        {"loss_weights",
         {{"disc_dice", weights.lambda_disc_dice},
          {"cup_dice", weights.lambda_cup_dice},
          {"smooth", weights.lambda_smooth}}},
        {"dice_eps", dice_eps},
        {"adv_weight", adv_weight},
        {"seed", seed},
        {"val_fraction", val_fraction}};
    std::ofstream os(path);
    if (!os) throw ConfigError("config: cannot write " + path);
    os << j.dump(2) << "\n";
}

void append_log_jsonl(const std::string& path, const std::vector<TrainLogRecord>& records) {
    std::ofstream os(path, std::ios::app);
    if (!os) throw DataError("training log: cannot open " + path);
    for (const auto& r : records) {
        nlohmann::json j{{"step", r.step},          {"epoch", r.epoch},
                         {"phase", r.phase},        {"seg_loss", r.seg_loss},
                         {"adv_loss", r.adv_loss},  {"disc_loss", r.disc_loss},
                         {"lr_segmenter", r.lr_segmenter},
                         {"lr_discriminator", r.lr_discriminator},
                         {"disc_accuracy", r.disc_accuracy}};
        os << j.dump() << "\n";
    }
}

// --------------------------------------------------------------- training

namespace {

// Copy of all parameter values, for best-checkpoint snapshots.
std::vector<std::vector<float>> snapshot_params(Network& net) {
    std::vector<std::vector<float>> out;
    for (auto& p : net.params()) out.push_back(*p.value);
    return out;
}

void restore_params(Network& net, const std::vector<std::vector<float>>& snap) {
    auto params = net.params();
    for (size_t i = 0; i < params.size(); ++i) *params[i].value = snap[i];
}

double eval_seg_loss(Network& net, const std::vector<const ImageSample*>& samples,
                     const TrainConfig& cfg) {
    double total = 0;
    for (const auto* s : samples) {
        Tensor y = net.forward(image_tensor(*s));
        total += losses::seg_loss(maps_from_tensor(y), *s->labels, cfg.weights, cfg.dice_eps);
    }
    return samples.empty() ? 0.0 : total / static_cast<double>(samples.size());
}

}  // namespace

PretrainResult pretrain_segmenter(const std::vector<ImageSample>& source, const TrainConfig& cfg,
                                  Scale scale, std::unique_ptr<Network> init) {
    if (source.empty()) throw DataError("pretrain_segmenter: empty dataset");
    for (const auto& s : source)
        if (!s.labels) throw DataError("pretrain_segmenter: sample " + s.id + " has no labels");

    nn::Rng rng(cfg.seed);
    std::unique_ptr<Network> net =
        init ? std::move(init)
             : std::make_unique<models::Segmenter>(models::build_segmenter(scale), rng);
    models::Adam opt(net->params());

    // Deterministic train/val split.
    std::vector<const ImageSample*> train, val;
    int stride = cfg.val_fraction > 0 ? std::max(2, static_cast<int>(1.0 / cfg.val_fraction)) : 0;
    for (size_t i = 0; i < source.size(); ++i) {
        if (stride > 0 && i % stride == stride - 1 && source.size() > 4) val.push_back(&source[i]);
        else train.push_back(&source[i]);
    }

    PretrainResult result;
    auto best = snapshot_params(*net);
    result.best_val_loss = val.empty() ? 1e30 : eval_seg_loss(*net, val, cfg);

    std::vector<size_t> order(train.size());
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 shuffle_rng(cfg.seed + 31);
    nn::Rng aug_rng(cfg.seed + 47);
    int64_t steps_per_epoch =
        static_cast<int64_t>((train.size() + cfg.batch_size - 1) / cfg.batch_size);
    int64_t step = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        double epoch_seg = 0;
        size_t seen = 0;
        for (size_t start = 0; start < order.size(); start += cfg.batch_size) {
            size_t end = std::min(order.size(), start + cfg.batch_size);
            net->zero_grads();
            for (size_t k = start; k < end; ++k) {
                ImageSample aug = augment(*train[order[k]], cfg.augmentation, aug_rng);
                Tensor y = net->forward(image_tensor(aug));
                ProbabilityMaps maps = maps_from_tensor(y);
                epoch_seg += losses::seg_loss(maps, *aug.labels, cfg.weights, cfg.dice_eps);
                ProbabilityMaps g =
                    losses::seg_loss_grad(maps, *aug.labels, cfg.weights, cfg.dice_eps);
                net->backward(tensor_from_maps_grad(g));
            }
            double lr = lr_at(step, steps_per_epoch * cfg.epochs, cfg.lr_segmenter,
                              cfg.sched_segmenter, steps_per_epoch);
            opt.step(lr, 1.0 / static_cast<double>(end - start));
            ++step;
            net->training_step = step;
            seen += end - start;
        }
        TrainLogRecord rec;
        rec.step = step;
        rec.epoch = epoch;
        rec.phase = "pretrain";
        rec.seg_loss = seen ? epoch_seg / static_cast<double>(seen) : 0.0;
        rec.lr_segmenter = lr_at(step, steps_per_epoch * cfg.epochs, cfg.lr_segmenter,
                                 cfg.sched_segmenter, steps_per_epoch);
        result.log.push_back(rec);
        if (!val.empty()) {
            double vloss = eval_seg_loss(*net, val, cfg);
            if (vloss < result.best_val_loss) {
                result.best_val_loss = vloss;
                best = snapshot_params(*net);
            }
        }
    }
    if (!val.empty() && cfg.epochs > 0) restore_params(*net, best);
    if (val.empty()) result.best_val_loss = result.log.empty() ? 0.0 : result.log.back().seg_loss;
    result.model = std::move(net);
    return result;
}

AdversarialResult adversarial_train(std::unique_ptr<Network> segmenter,
                                    std::unique_ptr<Network> discriminator,
                                    const std::vector<ImageSample>& source,
                                    const std::vector<ImageSample>& target,
                                    const TrainConfig& cfg) {
    if (source.empty() || target.empty())
        throw DataError("adversarial_train: both domains need samples");
    for (const auto& s : source)
        if (!s.labels) throw DataError("adversarial_train: source sample " + s.id + " unlabeled");

    models::Adam opt_s(segmenter->params());
    models::SGD opt_d(discriminator->params());

    std::vector<size_t> src_order(source.size()), tgt_order(target.size());
    std::iota(src_order.begin(), src_order.end(), 0);
    std::iota(tgt_order.begin(), tgt_order.end(), 0);
    std::mt19937_64 shuffle_rng(cfg.seed + 101);
    nn::Rng aug_rng(cfg.seed + 103);

    int64_t steps_per_epoch =
        static_cast<int64_t>((source.size() + cfg.batch_size - 1) / cfg.batch_size);
    int64_t total_steps = steps_per_epoch * cfg.epochs;
    int64_t step = 0;
    size_t tgt_cursor = 0;

    AdversarialResult result;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(src_order.begin(), src_order.end(), shuffle_rng);
        std::shuffle(tgt_order.begin(), tgt_order.end(), shuffle_rng);
        double ep_seg = 0, ep_adv = 0, ep_dloss = 0;
        double d_correct = 0, d_total = 0;
        size_t n_src = 0, n_tgt = 0, n_dbatch = 0;
        for (size_t start = 0; start < src_order.size(); start += cfg.batch_size) {
            size_t end = std::min(src_order.size(), start + cfg.batch_size);
            double lr_s = lr_at(step, total_steps, cfg.lr_segmenter, cfg.sched_segmenter,
                                steps_per_epoch);
            double lr_d = lr_at(step, total_steps, cfg.lr_discriminator,
                                cfg.sched_discriminator, steps_per_epoch);

            // (a) source batch: supervised seg_loss step on S.
            std::vector<Tensor> src_preds;
            segmenter->zero_grads();
            for (size_t k = start; k < end; ++k) {
                ImageSample aug = augment(source[src_order[k]], cfg.augmentation, aug_rng);
                Tensor y = segmenter->forward(image_tensor(aug));
                ProbabilityMaps maps = maps_from_tensor(y);
                ep_seg += losses::seg_loss(maps, *aug.labels, cfg.weights, cfg.dice_eps);
                ProbabilityMaps g =
                    losses::seg_loss_grad(maps, *aug.labels, cfg.weights, cfg.dice_eps);
                segmenter->backward(tensor_from_maps_grad(g));
                src_preds.push_back(std::move(y));
                ++n_src;
            }
            opt_s.step(lr_s, 1.0 / static_cast<double>(end - start));

            // (b) target batch: adversarial step on S, discriminator frozen.
            size_t tgt_batch = end - start;
            std::vector<Tensor> tgt_preds;
            segmenter->zero_grads();
            for (size_t k = 0; k < tgt_batch; ++k) {
                const ImageSample& ts = target[tgt_order[tgt_cursor % target.size()]];
                ++tgt_cursor;
                ImageSample aug = augment(ts, cfg.augmentation, aug_rng);
                Tensor y = segmenter->forward(image_tensor(aug));
                if (cfg.adv_weight > 0) {
                    Tensor scores = discriminator->forward(y);
                    losses::PatchScoreGrid grid{tensor_channel(scores, 0)};
                    ep_adv += cfg.adv_weight * losses::adversarial_loss(grid);
                    RealGrid gs = losses::adversarial_loss_grad(grid);
                    for (size_t i = 0; i < gs.size(); ++i) gs.data()[i] *= cfg.adv_weight;
                    Tensor gin = discriminator->backward(tensor_from_grid(gs));
                    segmenter->backward(gin);
                }
                tgt_preds.push_back(std::move(y));
                ++n_tgt;
            }
            if (cfg.adv_weight > 0)
                opt_s.step(lr_s, 1.0 / static_cast<double>(tgt_batch));

            // (c) discriminator step on detached predictions, z=1 source, z=0 target.
            // Zeroing here discards the gradients leaked into D during (b).
            discriminator->zero_grads();
            double batch_dloss = 0;
            for (const Tensor& y : src_preds) {
                Tensor scores = discriminator->forward(y);
                losses::PatchScoreGrid grid{tensor_channel(scores, 0)};
                batch_dloss += losses::discriminator_source_term(grid);
                discriminator->backward(
                    tensor_from_grid(losses::discriminator_source_term_grad(grid)));
                for (size_t i = 0; i < grid.scores.size(); ++i) {
                    d_correct += grid.scores.data()[i] > 0.5 ? 1 : 0;
                    d_total += 1;
                }
            }
            for (const Tensor& y : tgt_preds) {
                Tensor scores = discriminator->forward(y);
                losses::PatchScoreGrid grid{tensor_channel(scores, 0)};
                batch_dloss += losses::discriminator_target_term(grid);
                discriminator->backward(
                    tensor_from_grid(losses::discriminator_target_term_grad(grid)));
                for (size_t i = 0; i < grid.scores.size(); ++i) {
                    d_correct += grid.scores.data()[i] < 0.5 ? 1 : 0;
                    d_total += 1;
                }
            }
            opt_d.step(lr_d, 1.0 / static_cast<double>(src_preds.size() + tgt_preds.size()));
            ep_dloss += batch_dloss / static_cast<double>(src_preds.size() + tgt_preds.size());
            ++n_dbatch;

            ++step;
            segmenter->training_step = step;
            discriminator->training_step = step;
        }
        TrainLogRecord rec;
        rec.step = step;
        rec.epoch = epoch;
        rec.phase = "adversarial";
        rec.seg_loss = n_src ? ep_seg / static_cast<double>(n_src) : 0.0;
        rec.adv_loss = n_tgt ? ep_adv / static_cast<double>(n_tgt) : 0.0;
        rec.disc_loss = n_dbatch ? ep_dloss / static_cast<double>(n_dbatch) : 0.0;
        rec.lr_segmenter = lr_at(step, total_steps, cfg.lr_segmenter, cfg.sched_segmenter,
                                 steps_per_epoch);
        rec.lr_discriminator = lr_at(step, total_steps, cfg.lr_discriminator,
                                     cfg.sched_discriminator, steps_per_epoch);
        rec.disc_accuracy = d_total > 0 ? d_correct / d_total : 0.0;
        result.log.push_back(rec);
    }
    result.segmenter = std::move(segmenter);
    result.discriminator = std::move(discriminator);
    return result;
}

ProbabilityMaps predict(Network& segmenter, const ImageSample& sample) {
    Tensor x = image_tensor(sample);
    const int in = segmenter.spec().input_h;
    if (x.h != in || x.w != in) x = nn::bilinear_resize(x, in, in);
    Tensor y = segmenter.forward(x);
    if (y.h != sample.rows() || y.w != sample.cols())
        y = nn::bilinear_resize(y, sample.rows(), sample.cols());
    ProbabilityMaps maps = maps_from_tensor(y);
    maps.validate();
    return maps;
}

DiceEval mean_dice(Network& segmenter, const std::vector<ImageSample>& samples,
                   double threshold) {
    DiceEval out;
    size_t n = 0;
    for (const auto& s : samples) {
        if (!s.labels) continue;
        LabelMasks pred = binarize(predict(segmenter, s), threshold);
        auto dice = [](const MaskGrid& a, const MaskGrid& b) {
            long tp = 0, fp = 0, fn = 0;
            for (size_t i = 0; i < a.size(); ++i) {
                bool p = a.data()[i], g = b.data()[i];
                tp += p && g;
                fp += p && !g;
                fn += !p && g;
            }
            return tp + fp + fn == 0 ? 1.0 : 2.0 * tp / static_cast<double>(2 * tp + fp + fn);
        };
        out.disc += dice(pred.disc, s.labels->disc);
        out.cup += dice(pred.cup, s.labels->cup);
        ++n;
    }
    if (n > 0) {
        out.disc /= static_cast<double>(n);
        out.cup /= static_cast<double>(n);
    }
    return out;
}

}  // namespace posal::adapt
