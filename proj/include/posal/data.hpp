#pragma once

#include <array>
#include <string>
#include <vector>

#include "posal/core.hpp"

namespace posal::data {

struct DatasetManifest {
    std::string name;
    std::string root;           // directory holding image_dir/mask_dir
    std::string split = "train";
    std::string image_dir = "images";
    std::string mask_dir = "masks";
    MaskEncoding encoding;
    DomainTag domain = DomainTag::Source;
    bool with_labels = true;
    bool skip_invalid = false;  // report-and-skip instead of failing on a bad mask

    static DatasetManifest load(const std::string& path);
    void save(const std::string& path) const;
};

// Loads image/mask pairs (stem pairing), sorted by id. Throws DataError on
// an empty dataset, a missing mask, or an encoding violation.
std::vector<ImageSample> load_dataset(const DatasetManifest& manifest);

// Writes samples as PPM images (and PGM masks when labels are present) under
// root/image_dir and root/mask_dir, plus a manifest.json.
void save_dataset(const std::string& root, const std::vector<ImageSample>& samples,
                  const MaskEncoding& encoding, const std::string& name,
                  DomainTag domain);

// Appearance-shift knobs applied to target-domain images only.
struct DomainShift {
    std::array<double, 3> color_gain{1.0, 1.0, 1.0};
    std::array<double, 3> color_bias{0.0, 0.0, 0.0};
    double gamma = 1.0;
    double noise_amp = 0.0;
    double clutter_density = 1.0;  // multiplier on vessel stroke count
};

struct SynthConfig {
    int image_size = 160;
    double disc_radius_min = 0.17;  // vertical semi-axis, fraction of image size
    double disc_radius_max = 0.23;
    double cdr_min = 0.35;
    double cdr_max = 0.85;
    double glaucoma_threshold = 0.6;
    DomainShift target_shift{{0.85, 1.05, 1.15}, {0.06, 0.0, -0.04}, 1.25, 0.02, 1.5};
    uint64_t seed = 1;
};

struct SynthRecord {
    std::string id;
    double center_row = 0, center_col = 0;
    double disc_vsemi = 0, disc_hsemi = 0;
    double cdr = 0;
    bool glaucoma = false;
};

struct SynthResult {
    std::vector<ImageSample> source;
    std::vector<ImageSample> target;
    std::vector<SynthRecord> source_truth;
    std::vector<SynthRecord> target_truth;
};

// Two-domain synthetic fundus-like dataset; identical geometry distribution
// across domains, appearance shift on the target side.
SynthResult generate_synthetic(const SynthConfig& cfg, int n_source, int n_target);

void save_registry(const std::string& path, const std::vector<SynthRecord>& records);
std::vector<SynthRecord> load_registry(const std::string& path);

}  // namespace posal::data
