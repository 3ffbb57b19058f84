#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "posal/adapt.hpp"
#include "posal/data.hpp"
#include "posal/image_io.hpp"
#include "posal/metrics.hpp"
#include "posal/models.hpp"
#include "posal/roi.hpp"

namespace fs = std::filesystem;
using namespace posal;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitInternal = 4;

data::SynthConfig load_synth_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("synth config: cannot open " + path);
    nlohmann::json j;
    try {
        is >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("synth config: parse error: ") + e.what());
    }
    data::SynthConfig cfg;
    cfg.image_size = j.value("image_size", cfg.image_size);
    cfg.disc_radius_min = j.value("disc_radius_min", cfg.disc_radius_min);
    cfg.disc_radius_max = j.value("disc_radius_max", cfg.disc_radius_max);
    cfg.cdr_min = j.value("cdr_min", cfg.cdr_min);
    cfg.cdr_max = j.value("cdr_max", cfg.cdr_max);
    cfg.glaucoma_threshold = j.value("glaucoma_threshold", cfg.glaucoma_threshold);
    cfg.seed = j.value("seed", cfg.seed);
    if (cfg.image_size < 16) throw ConfigError("synth config: image_size too small");
    return cfg;
}

std::vector<ImageSample> load_manifest_samples(const std::string& manifest_path) {
    auto manifest = data::DatasetManifest::load(manifest_path);
    return data::load_dataset(manifest);
}

// Predicted masks written by `predict`: <id>.pgm files under a directory.
std::vector<std::pair<std::string, LabelMasks>> load_pred_masks(const std::string& dir,
                                                                const MaskEncoding& enc) {
    if (!fs::is_directory(dir)) throw DataError("prediction directory missing: " + dir);
    std::vector<std::pair<std::string, LabelMasks>> out;
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.path().extension() == ".pgm") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    for (const auto& p : files)
        out.push_back({p.stem().string(), decode_mask(io::read_pgm(p.string()), enc)});
    if (out.empty()) throw DataError("no .pgm predictions under " + dir);
    return out;
}

void draw_contour(std::vector<Grid<float>>& rgb, const MaskGrid& mask, float r, float g,
                  float b) {
    const int h = mask.rows(), w = mask.cols();
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j) {
            if (!mask(i, j)) continue;
            bool edge = i == 0 || j == 0 || i == h - 1 || j == w - 1 || !mask(i - 1, j) ||
                        !mask(i + 1, j) || !mask(i, j - 1) || !mask(i, j + 1);
            if (!edge) continue;
            rgb[0](i, j) = r;
            rgb[1](i, j) = g;
            rgb[2](i, j) = b;
        }
}

void write_roc_plot(const std::string& path, const metrics::RocResult& roc) {
    const int n = 256;
    std::vector<Grid<float>> rgb(3, Grid<float>(n, n, 1.0f));
    for (int i = 0; i < n; ++i) {  // axes
        rgb[0](n - 1, i) = rgb[1](n - 1, i) = rgb[2](n - 1, i) = 0.0f;
        rgb[0](i, 0) = rgb[1](i, 0) = rgb[2](i, 0) = 0.0f;
        rgb[0](i, n - 1 - i) = 0.75f;  // chance diagonal
        rgb[1](i, n - 1 - i) = 0.75f;
        rgb[2](i, n - 1 - i) = 0.75f;
    }
    auto plot = [&](double fpr, double tpr) {
        int c = std::clamp(static_cast<int>(fpr * (n - 1)), 0, n - 1);
        int r = std::clamp(static_cast<int>((1.0 - tpr) * (n - 1)), 0, n - 1);
        rgb[0](r, c) = 0.85f;
        rgb[1](r, c) = 0.1f;
        rgb[2](r, c) = 0.1f;
    };
    for (size_t k = 0; k + 1 < roc.curve.size(); ++k) {
        const auto& a = roc.curve[k];
        const auto& b = roc.curve[k + 1];
        for (int t = 0; t <= 64; ++t) {
            double f = t / 64.0;
            plot(a.fpr + (b.fpr - a.fpr) * f, a.tpr + (b.tpr - a.tpr) * f);
        }
    }
    io::write_ppm(path, rgb);
}

int run_synth(const std::string& config_path, const std::string& out, int n_source,
              int n_target, int64_t seed) {
    data::SynthConfig cfg;
    if (!config_path.empty()) cfg = load_synth_config(config_path);
    if (seed >= 0) cfg.seed = static_cast<uint64_t>(seed);
    if (n_source < 1 || n_target < 1)
        throw ConfigError("synth: --n-source and --n-target must be >= 1");
    auto result = data::generate_synthetic(cfg, n_source, n_target);
    fs::create_directories(out);
    data::save_dataset((fs::path(out) / "source").string(), result.source, MaskEncoding{},
                       "synth-source", DomainTag::Source);
    data::save_dataset((fs::path(out) / "target").string(), result.target, MaskEncoding{},
                       "synth-target", DomainTag::Target);
    data::save_registry((fs::path(out) / "source_registry.csv").string(), result.source_truth);
    data::save_registry((fs::path(out) / "target_registry.csv").string(), result.target_truth);
    std::cout << "synth: wrote " << n_source << " source + " << n_target << " target samples to "
              << out << "\n";
    return kExitOk;
}

int run_train_extractor(const std::string& manifest, const std::string& ckpt_out, int epochs,
                        int64_t seed, const std::string& scale_name) {
    auto samples = load_manifest_samples(manifest);
    roi::ExtractorConfig cfg;
    if (epochs > 0) cfg.epochs = epochs;
    if (seed >= 0) cfg.seed = static_cast<uint64_t>(seed);
    auto result = roi::train_extractor(samples, cfg, models::scale_from_string(scale_name));
    models::save_checkpoint(*result.model, ckpt_out);
    std::cout << "train-extractor: final dice loss " << result.epoch_losses.back() << ", wrote "
              << ckpt_out << "\n";
    return kExitOk;
}

int run_pretrain(const std::string& manifest, const std::string& config_path,
                 const std::string& ckpt_out, const std::string& log_path, int epochs,
                 int64_t seed, const std::string& scale_name) {
    auto samples = load_manifest_samples(manifest);
    adapt::TrainConfig cfg = config_path.empty() ? adapt::TrainConfig::pretrain_desk_defaults()
                                                 : adapt::TrainConfig::load(config_path);
    cfg.phase = adapt::Phase::Pretrain;
    if (epochs > 0) cfg.epochs = epochs;
    if (seed >= 0) cfg.seed = static_cast<uint64_t>(seed);
    auto result =
        adapt::pretrain_segmenter(samples, cfg, models::scale_from_string(scale_name));
    models::save_checkpoint(*result.model, ckpt_out);
    if (!log_path.empty()) adapt::append_log_jsonl(log_path, result.log);
    std::cout << "pretrain: best validation loss " << result.best_val_loss << ", wrote "
              << ckpt_out << "\n";
    return kExitOk;
}

int run_adapt(const std::string& src_manifest, const std::string& tgt_manifest,
              const std::string& config_path, const std::string& init_ckpt,
              const std::string& ckpt_out, const std::string& disc_ckpt_out,
              const std::string& log_path, int epochs, int64_t seed,
              const std::string& scale_name, bool ignore_target_labels, bool resume) {
    if (init_ckpt.empty() || !fs::exists(init_ckpt))
        throw ConfigError("adapt: --init-checkpoint with a pretrained segmenter is required");
    auto tgt_mani = data::DatasetManifest::load(tgt_manifest);
    if (tgt_mani.with_labels && !ignore_target_labels)
        throw ConfigError(
            "adapt: target manifest declares labels; adaptation is unsupervised. "
            "Pass --ignore-target-labels to drop them.");
    tgt_mani.with_labels = false;
    auto source = load_manifest_samples(src_manifest);
    auto target = data::load_dataset(tgt_mani);

    adapt::TrainConfig cfg = config_path.empty()
                                 ? adapt::TrainConfig::adversarial_desk_defaults()
                                 : adapt::TrainConfig::load(config_path);
    cfg.phase = adapt::Phase::Adversarial;
    if (epochs > 0) cfg.epochs = epochs;
    if (seed >= 0) cfg.seed = static_cast<uint64_t>(seed);

    auto segmenter = models::load_checkpoint(init_ckpt);
    if (segmenter->spec().kind != models::ModelKind::Segmenter)
        throw ConfigError("adapt: --init-checkpoint is not a segmenter checkpoint");
    if (!resume) segmenter->training_step = 0;
    nn::Rng rng(cfg.seed + 7);
    auto scale = models::scale_from_string(scale_name);
    auto discriminator = std::make_unique<models::PatchDiscriminator>(
        models::build_discriminator(scale), rng);
    auto result = adapt::adversarial_train(std::move(segmenter), std::move(discriminator),
                                           source, target, cfg);
    models::save_checkpoint(*result.segmenter, ckpt_out);
    if (!disc_ckpt_out.empty()) models::save_checkpoint(*result.discriminator, disc_ckpt_out);
    if (!log_path.empty()) adapt::append_log_jsonl(log_path, result.log);
    std::cout << "adapt: " << result.log.size() << " epochs, final seg loss "
              << (result.log.empty() ? 0.0 : result.log.back().seg_loss) << ", wrote "
              << ckpt_out << "\n";
    return kExitOk;
}

int run_predict(const std::string& ckpt, const std::string& manifest, const std::string& out) {
    auto net = models::load_checkpoint(ckpt);
    if (net->spec().kind != models::ModelKind::Segmenter)
        throw ConfigError("predict: checkpoint is not a segmenter");
    auto mani = data::DatasetManifest::load(manifest);
    auto samples = data::load_dataset(mani);
    fs::create_directories(out);
    for (const auto& s : samples) {
        LabelMasks pred = metrics::postprocess(binarize(adapt::predict(*net, s)));
        io::write_pgm((fs::path(out) / (s.id + ".pgm")).string(),
                      encode_mask(pred, mani.encoding));
    }
    std::cout << "predict: wrote " << samples.size() << " masks to " << out << "\n";
    return kExitOk;
}

int run_evaluate(const std::string& pred_dir, const std::string& gt_manifest,
                 const std::string& out) {
    auto mani = data::DatasetManifest::load(gt_manifest);
    auto gts = data::load_dataset(mani);
    std::vector<std::pair<std::string, LabelMasks>> gt_pairs;
    for (const auto& s : gts) {
        if (!s.labels) throw DataError("evaluate: sample " + s.id + " has no labels");
        gt_pairs.push_back({s.id, *s.labels});
    }
    auto preds = load_pred_masks(pred_dir, mani.encoding);
    auto [records, summary] = metrics::evaluate_dataset(preds, gt_pairs);
    fs::create_directories(out);
    metrics::write_eval_csv((fs::path(out) / "eval.csv").string(), records);
    nlohmann::json j{{"mean_dice_cup", summary.mean_dice_cup},
                     {"mean_dice_disc", summary.mean_dice_disc},
                     {"mean_delta", summary.mean_delta},
                     {"count", summary.count}};
    std::ofstream os(fs::path(out) / "summary.json");
    os << j.dump(2) << "\n";
    std::cout << "evaluate: dice cup " << summary.mean_dice_cup << ", dice disc "
              << summary.mean_dice_disc << ", delta " << summary.mean_delta << " over "
              << summary.count << " images\n";
    return kExitOk;
}

int run_report(const std::string& pred_dir, const std::string& gt_manifest,
               const std::string& registry_path, const std::string& out, int overlays) {
    auto mani = data::DatasetManifest::load(gt_manifest);
    auto gts = data::load_dataset(mani);
    auto preds = load_pred_masks(pred_dir, mani.encoding);
    if (gts.empty() || preds.empty()) throw DataError("report: empty record set");
    fs::create_directories(out);

    // CDR-based screening ROC against the registry's glaucoma bits.
    auto registry = data::load_registry(registry_path);
    std::vector<double> scores;
    std::vector<uint8_t> labels;
    for (const auto& rec : registry) {
        auto it = std::find_if(preds.begin(), preds.end(),
                               [&](const auto& p) { return p.first == rec.id; });
        if (it == preds.end()) continue;
        double cdr;
        try {
            cdr = metrics::vertical_cdr(it->second);
        } catch (const DataError&) {
            cdr = 0.0;
        }
        scores.push_back(cdr);
        labels.push_back(rec.glaucoma ? 1 : 0);
    }
    if (scores.empty()) throw DataError("report: no prediction ids match the registry");
    auto roc = metrics::screening_auc(scores, labels);
    metrics::write_roc_csv((fs::path(out) / "roc.csv").string(), roc);
    write_roc_plot((fs::path(out) / "roc.ppm").string(), roc);

    int written = 0;
    for (const auto& s : gts) {
        if (written >= overlays) break;
        auto it = std::find_if(preds.begin(), preds.end(),
                               [&](const auto& p) { return p.first == s.id; });
        if (it == preds.end()) continue;
        std::vector<Grid<float>> rgb = s.pixels;
        draw_contour(rgb, it->second.disc, 0.0f, 0.9f, 0.0f);
        draw_contour(rgb, it->second.cup, 0.0f, 0.2f, 0.95f);
        io::write_ppm((fs::path(out) / ("overlay_" + s.id + ".ppm")).string(), rgb);
        ++written;
    }
    std::cout << "report: AUC " << roc.auc << ", " << written << " overlays, wrote " << out
              << "\n";
    return kExitOk;
}

int run_rank(const std::string& metrics_csv, const std::string& out) {
    auto table = metrics::read_team_metrics_csv(metrics_csv);
    auto ranked = metrics::challenge_score(table);
    metrics::write_rank_csv(out, ranked);
    for (const auto& e : ranked)
        std::cout << e.team << " " << e.score << "\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Patch-based output-space adversarial segmentation pipeline"};
    app.require_subcommand(1);

    std::string config, out, manifest, src_manifest, tgt_manifest;
    std::string ckpt, ckpt_out, disc_ckpt_out, init_ckpt, log_path, registry, metrics_csv;
    std::string pred_dir, scale_name = "desk";
    int n_source = 0, n_target = 0, epochs = 0, overlays = 4;
    int64_t seed = -1;
    bool ignore_target_labels = false, resume = false;

    auto* synth = app.add_subcommand("synth", "Generate the two-domain synthetic dataset");
    synth->add_option("--config", config);
    synth->add_option("--out", out)->required();
    synth->add_option("--n-source", n_source)->required();
    synth->add_option("--n-target", n_target)->required();
    synth->add_option("--seed", seed)->envname("POSAL_SEED");

    auto* trext = app.add_subcommand("train-extractor", "Train the ROI localization network");
    trext->add_option("--source-manifest", src_manifest)->required();
    trext->add_option("--checkpoint-out", ckpt_out)->required();
    trext->add_option("--epochs", epochs);
    trext->add_option("--seed", seed)->envname("POSAL_SEED");
    trext->add_option("--scale", scale_name)->check(CLI::IsMember({"paper", "desk"}));

    auto* pre = app.add_subcommand("pretrain", "Supervised segmenter training on source ROIs");
    pre->add_option("--source-manifest", src_manifest)->required();
    pre->add_option("--config", config);
    pre->add_option("--checkpoint-out", ckpt_out)->required();
    pre->add_option("--log", log_path);
    pre->add_option("--epochs", epochs);
    pre->add_option("--seed", seed)->envname("POSAL_SEED");
    pre->add_option("--scale", scale_name)->check(CLI::IsMember({"paper", "desk"}));

    auto* adp = app.add_subcommand("adapt", "Adversarial adaptation to the unlabeled target");
    adp->add_option("--source-manifest", src_manifest)->required();
    adp->add_option("--target-manifest", tgt_manifest)->required();
    adp->add_option("--config", config);
    adp->add_option("--init-checkpoint", init_ckpt)->required();
    adp->add_option("--checkpoint-out", ckpt_out)->required();
    adp->add_option("--disc-checkpoint-out", disc_ckpt_out);
    adp->add_option("--log", log_path);
    adp->add_option("--epochs", epochs);
    adp->add_option("--seed", seed)->envname("POSAL_SEED");
    adp->add_option("--scale", scale_name)->check(CLI::IsMember({"paper", "desk"}));
    adp->add_flag("--ignore-target-labels", ignore_target_labels);
    adp->add_flag("--resume", resume);

    auto* prd = app.add_subcommand("predict", "Write predicted masks for a dataset");
    prd->add_option("--checkpoint", ckpt)->required();
    prd->add_option("--manifest", manifest)->required();
    prd->add_option("--out", out)->required();

    auto* ev = app.add_subcommand("evaluate", "Score predictions against labeled data");
    ev->add_option("--pred-dir", pred_dir)->required();
    ev->add_option("--gt-manifest", manifest)->required();
    ev->add_option("--out", out)->required();

    auto* rep = app.add_subcommand("report", "Emit ROC plot and contour overlays");
    rep->add_option("--pred-dir", pred_dir)->required();
    rep->add_option("--gt-manifest", manifest)->required();
    rep->add_option("--registry", registry)->required();
    rep->add_option("--out", out)->required();
    rep->add_option("--overlays", overlays);

    auto* rnk = app.add_subcommand("rank", "Weighted-rank leaderboard from a team-metric CSV");
    rnk->add_option("--metrics-csv", metrics_csv)->required();
    rnk->add_option("--out", out)->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? kExitOk : kExitConfig;
    }

    try {
        if (synth->parsed()) return run_synth(config, out, n_source, n_target, seed);
        if (trext->parsed())
            return run_train_extractor(src_manifest, ckpt_out, epochs, seed, scale_name);
        if (pre->parsed())
            return run_pretrain(src_manifest, config, ckpt_out, log_path, epochs, seed,
                                scale_name);
        if (adp->parsed())
            return run_adapt(src_manifest, tgt_manifest, config, init_ckpt, ckpt_out,
                             disc_ckpt_out, log_path, epochs, seed, scale_name,
                             ignore_target_labels, resume);
        if (prd->parsed()) return run_predict(ckpt, manifest, out);
        if (ev->parsed()) return run_evaluate(pred_dir, manifest, out);
        if (rep->parsed()) return run_report(pred_dir, manifest, registry, out, overlays);
        if (rnk->parsed()) return run_rank(metrics_csv, out);
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const DataError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    } catch (const Error& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return kExitInternal;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return kExitInternal;
    }
    return kExitInternal;
}
