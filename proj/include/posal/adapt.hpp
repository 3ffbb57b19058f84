#pragma once

#include <memory>
#include <string>
#include <vector>

#include "posal/core.hpp"
#include "posal/losses.hpp"
#include "posal/models.hpp"

namespace posal::adapt {

enum class Phase { Pretrain, Adversarial };

struct LrSchedule {
    enum class Kind { Poly, Step, Const };
    Kind kind = Kind::Poly;
    double power = 0.9;       // poly
    int64_t step_interval = 100;  // step decay, in epochs
    double step_factor = 0.2;
};

// Learning rate at a given optimizer step. Poly: lr0*(1 - step/total)^power.
double lr_at(int64_t step, int64_t total_steps, double lr0, const LrSchedule& sched,
             int64_t steps_per_epoch = 1);

struct AugmentConfig {
    bool scale = true;
    double scale_min = 0.9, scale_max = 1.1;
    bool rotate = true;
    double rotate_max_deg = 15.0;
    bool hflip = true;
    bool vflip = true;
    bool elastic = true;
    int elastic_grid = 8;
    double elastic_sigma_px = 4.0;
    bool contrast = true;
    double contrast_min = 0.85, contrast_max = 1.2;
    bool noise = true;
    double noise_std = 0.02;
    bool erase = true;
    double erase_fraction = 0.15;

    static AugmentConfig off();
    bool any_geometric() const { return scale || rotate || hflip || vflip || elastic; }
};

// Geometric transforms hit image and labels identically (nearest-neighbor
// for masks); photometric ones hit the image only.
ImageSample augment(const ImageSample& sample, const AugmentConfig& cfg, nn::Rng& rng);

struct TrainConfig {
    Phase phase = Phase::Pretrain;
    int epochs = 40;
    int batch_size = 8;
    double lr_segmenter = 1e-3;
    double lr_discriminator = 1e-5;
    LrSchedule sched_segmenter;
    LrSchedule sched_discriminator;
    losses::LossWeights weights;
    double dice_eps = 1.0;
    double adv_weight = 1.0;
    uint64_t seed = 0;
    AugmentConfig augmentation;
    double val_fraction = 0.1;

    static TrainConfig pretrain_desk_defaults();
    static TrainConfig adversarial_desk_defaults();
    static TrainConfig load(const std::string& path);
    void save(const std::string& path) const;
};

struct TrainLogRecord {
    int64_t step = 0;
    int epoch = 0;
    std::string phase;
    double seg_loss = 0;
    double adv_loss = 0;
    double disc_loss = 0;
    double lr_segmenter = 0;
    double lr_discriminator = 0;
    double disc_accuracy = 0;
};

void append_log_jsonl(const std::string& path, const std::vector<TrainLogRecord>& records);

struct PretrainResult {
    std::unique_ptr<models::Network> model;  // best-validation checkpoint
    std::vector<TrainLogRecord> log;
    double best_val_loss = 0;
};

// Supervised pretraining of the segmenter on labeled source ROIs.
PretrainResult pretrain_segmenter(const std::vector<ImageSample>& source,
                                  const TrainConfig& cfg, models::Scale scale,
                                  std::unique_ptr<models::Network> init = nullptr);

struct AdversarialResult {
    std::unique_ptr<models::Network> segmenter;
    std::unique_ptr<models::Network> discriminator;
    std::vector<TrainLogRecord> log;
};

// Alternating min-max training: per iteration, a seg_loss step on a source
// batch, an adversarial step on a target batch (discriminator frozen), and
// a discriminator step on detached predictions.
AdversarialResult adversarial_train(std::unique_ptr<models::Network> segmenter,
                                    std::unique_ptr<models::Network> discriminator,
                                    const std::vector<ImageSample>& source,
                                    const std::vector<ImageSample>& target,
                                    const TrainConfig& cfg);

// Forward pass producing probability maps for one ROI-sized sample.
ProbabilityMaps predict(models::Network& segmenter, const ImageSample& sample);

// Mean dice scores of thresholded predictions against labels.
struct DiceEval {
    double disc = 0, cup = 0;
};
DiceEval mean_dice(models::Network& segmenter, const std::vector<ImageSample>& samples,
                   double threshold = 0.5);

}  // namespace posal::adapt
