#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace posal {

// Error taxonomy shared by all modules. Exit-code mapping lives in the CLI.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};
struct ShapeMismatch : Error {
    using Error::Error;
};
struct DataError : Error {
    using Error::Error;
};
struct ConfigError : Error {
    using Error::Error;
};

// Planar row-major grid, index (r, c).
template <typename T>
class Grid {
public:
    Grid() = default;
    Grid(int rows, int cols, T fill = T{})
        : rows_(rows), cols_(cols), data_(static_cast<size_t>(rows) * cols, fill) {
        if (rows < 1 || cols < 1) throw ShapeMismatch("Grid: non-positive shape");
    }

    int rows() const { return rows_; }
    int cols() const { return cols_; }
    size_t size() const { return data_.size(); }

    T& operator()(int r, int c) { return data_[static_cast<size_t>(r) * cols_ + c]; }
    const T& operator()(int r, int c) const { return data_[static_cast<size_t>(r) * cols_ + c]; }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }

    bool same_shape(const Grid& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

    bool operator==(const Grid& o) const {
        return rows_ == o.rows_ && cols_ == o.cols_ && data_ == o.data_;
    }

private:
    int rows_ = 0;
    int cols_ = 0;
    std::vector<T> data_;
};

using MaskGrid = Grid<uint8_t>;
using RealGrid = Grid<double>;

enum class DomainTag { Source, Target };

// Binary ground-truth masks with the cup-inside-disc containment invariant.
struct LabelMasks {
    MaskGrid disc;
    MaskGrid cup;

    // Throws DataError if cup is not contained in disc or values are non-binary.
    void validate() const;
};

// Independent per-pixel sigmoid outputs for disc and cup, each in [0,1].
struct ProbabilityMaps {
    RealGrid disc;
    RealGrid cup;

    void validate() const;
};

struct ImageSample {
    std::string id;
    // Planar CHW, 3 channels, intensities in [0,1].
    std::vector<Grid<float>> pixels;
    std::optional<LabelMasks> labels;
    DomainTag domain = DomainTag::Source;
    std::pair<int, int> original_size{0, 0};

    int rows() const { return pixels.empty() ? 0 : pixels[0].rows(); }
    int cols() const { return pixels.empty() ? 0 : pixels[0].cols(); }
};

// Axis-aligned square ROI in original-image coordinates.
struct ROIBox {
    int top = 0;
    int left = 0;
    int side = 0;
    // Center the box was requested at, before clamping.
    double center_row = 0;
    double center_col = 0;
    bool fallback_used = false;

    int bottom() const { return top + side; }   // exclusive
    int right() const { return left + side; }   // exclusive
};

// Grayscale level assignment for challenge-style mask files.
struct MaskEncoding {
    int background = 255;
    int disc_ring = 128;
    int cup = 0;
};

// Decodes a grayscale mask image into binary disc/cup masks.
// Containment holds by construction: disc := cup ∪ disc-ring.
LabelMasks decode_mask(const Grid<int>& image, const MaskEncoding& enc);

// Inverse of decode_mask for any valid LabelMasks.
Grid<int> encode_mask(const LabelMasks& masks, const MaskEncoding& enc);

// Thresholds each channel at `threshold` (mask = 1 where p >= t), then
// repairs containment with cup := cup AND disc.
LabelMasks binarize(const ProbabilityMaps& maps, double threshold = 0.5);

// Builds a side x side box centered at (center_row, center_col), clamped
// into the image bounds. Throws DataError if the image is smaller than side.
ROIBox make_roi_box(double center_row, double center_col, int side, int image_rows,
                    int image_cols, bool fallback = false);

// Crops the image (and labels, when present) to the box window.
ImageSample crop(const ImageSample& image, const ROIBox& box);

// Places ROI-sized probability maps back onto an original-size canvas,
// zero outside the box.
ProbabilityMaps uncrop(const ProbabilityMaps& maps, const ROIBox& box,
                       std::pair<int, int> original_size);

}  // namespace posal
