#pragma once

#include <memory>
#include <string>
#include <vector>

#include "posal/core.hpp"
#include "posal/models.hpp"

namespace posal::roi {

struct ExtractorConfig {
    int epochs = 6;
    int batch_size = 8;
    double lr = 1e-3;
    uint64_t seed = 0;
};

struct ExtractorResult {
    std::unique_ptr<models::Network> model;
    std::vector<double> epoch_losses;  // mean training dice loss per epoch
};

// Trains the U-Net extractor with dice loss on the disc channel.
// Every sample must carry a disc label.
ExtractorResult train_extractor(const std::vector<ImageSample>& source,
                                const ExtractorConfig& cfg, models::Scale scale);

int default_roi_side(models::Scale scale);  // 512 paper, 128 desk

// Resizes to the extractor input, predicts, binarizes at 0.5, takes the
// largest connected component's centroid (mapped back to original
// coordinates). An empty prediction falls back to the image center with
// the warning flag set.
ROIBox locate_disc(models::Network& extractor, const ImageSample& image, int roi_side);

std::pair<ImageSample, ROIBox> extract_roi(models::Network& extractor, const ImageSample& image,
                                           int roi_side);

void write_roi_manifest(const std::string& path,
                        const std::vector<std::pair<std::string, ROIBox>>& boxes);
std::vector<std::pair<std::string, ROIBox>> read_roi_manifest(const std::string& path);

}  // namespace posal::roi
