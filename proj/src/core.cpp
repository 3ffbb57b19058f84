#include "posal/core.hpp"

#include <algorithm>
#include <cmath>

namespace posal {

void LabelMasks::validate() const {
    if (!disc.same_shape(cup)) throw ShapeMismatch("LabelMasks: disc/cup shape mismatch");
    for (int r = 0; r < disc.rows(); ++r) {
        for (int c = 0; c < disc.cols(); ++c) {
            uint8_t d = disc(r, c), u = cup(r, c);
            if (d > 1 || u > 1) throw DataError("LabelMasks: non-binary value");
            if (u == 1 && d == 0)
                throw DataError("LabelMasks: containment violation at (" + std::to_string(r) +
                                "," + std::to_string(c) + ")");
        }
    }
}

void ProbabilityMaps::validate() const {
    if (!disc.same_shape(cup)) throw ShapeMismatch("ProbabilityMaps: shape mismatch");
    auto check = [](const RealGrid& g, const char* name) {
        for (size_t i = 0; i < g.size(); ++i) {
            double v = g.data()[i];
            if (!(v >= 0.0 && v <= 1.0))
                throw DataError(std::string("ProbabilityMaps: ") + name + " value out of [0,1]");
        }
    };
    check(disc, "disc");
    check(cup, "cup");
}

LabelMasks decode_mask(const Grid<int>& image, const MaskEncoding& enc) {
    LabelMasks out{MaskGrid(image.rows(), image.cols(), 0), MaskGrid(image.rows(), image.cols(), 0)};
    for (int r = 0; r < image.rows(); ++r) {
        for (int c = 0; c < image.cols(); ++c) {
            int v = image(r, c);
            if (v == enc.cup) {
                out.cup(r, c) = 1;
                out.disc(r, c) = 1;
            } else if (v == enc.disc_ring) {
                out.disc(r, c) = 1;
            } else if (v != enc.background) {
                throw DataError("decode_mask: unknown pixel value " + std::to_string(v) +
                                " at (" + std::to_string(r) + "," + std::to_string(c) + ")");
            }
        }
    }
    return out;
}

Grid<int> encode_mask(const LabelMasks& masks, const MaskEncoding& enc) {
    masks.validate();
    Grid<int> out(masks.disc.rows(), masks.disc.cols(), enc.background);
    for (int r = 0; r < out.rows(); ++r) {
        for (int c = 0; c < out.cols(); ++c) {
            if (masks.cup(r, c)) out(r, c) = enc.cup;
            else if (masks.disc(r, c)) out(r, c) = enc.disc_ring;
        }
    }
    return out;
}

LabelMasks binarize(const ProbabilityMaps& maps, double threshold) {
    if (!(threshold > 0.0 && threshold < 1.0)) throw ConfigError("binarize: threshold not in (0,1)");
    if (!maps.disc.same_shape(maps.cup)) throw ShapeMismatch("binarize: shape mismatch");
    int h = maps.disc.rows(), w = maps.disc.cols();
    LabelMasks out{MaskGrid(h, w, 0), MaskGrid(h, w, 0)};
    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) {
            uint8_t d = maps.disc(r, c) >= threshold ? 1 : 0;
            uint8_t u = maps.cup(r, c) >= threshold ? 1 : 0;
            out.disc(r, c) = d;
            out.cup(r, c) = static_cast<uint8_t>(u & d);
        }
    }
    return out;
}

ROIBox make_roi_box(double center_row, double center_col, int side, int image_rows,
                    int image_cols, bool fallback) {
    if (side <= 0) throw ConfigError("make_roi_box: side must be positive");
    if (image_rows < side || image_cols < side)
        throw DataError("make_roi_box: image smaller than ROI side");
    ROIBox box;
    box.side = side;
    box.center_row = center_row;
    box.center_col = center_col;
    box.fallback_used = fallback;
    int top = static_cast<int>(std::lround(center_row)) - side / 2;
    int left = static_cast<int>(std::lround(center_col)) - side / 2;
    box.top = std::clamp(top, 0, image_rows - side);
    box.left = std::clamp(left, 0, image_cols - side);
    return box;
}

ImageSample crop(const ImageSample& image, const ROIBox& box) {
    if (box.side <= 0 || box.top < 0 || box.left < 0 || box.bottom() > image.rows() ||
        box.right() > image.cols())
        throw DataError("crop: box out of bounds");
    ImageSample out;
    out.id = image.id;
    out.domain = image.domain;
    out.original_size = {image.rows(), image.cols()};
    for (const auto& ch : image.pixels) {
        Grid<float> g(box.side, box.side);
        for (int r = 0; r < box.side; ++r)
            for (int c = 0; c < box.side; ++c) g(r, c) = ch(box.top + r, box.left + c);
        out.pixels.push_back(std::move(g));
    }
    if (image.labels) {
        LabelMasks lm{MaskGrid(box.side, box.side), MaskGrid(box.side, box.side)};
        for (int r = 0; r < box.side; ++r) {
            for (int c = 0; c < box.side; ++c) {
                lm.disc(r, c) = image.labels->disc(box.top + r, box.left + c);
                lm.cup(r, c) = image.labels->cup(box.top + r, box.left + c);
            }
        }
        out.labels = std::move(lm);
    }
    return out;
}

ProbabilityMaps uncrop(const ProbabilityMaps& maps, const ROIBox& box,
                       std::pair<int, int> original_size) {
    if (maps.disc.rows() != box.side || maps.disc.cols() != box.side ||
        !maps.disc.same_shape(maps.cup))
        throw ShapeMismatch("uncrop: maps do not match box side");
    auto [h, w] = original_size;
    if (box.bottom() > h || box.right() > w) throw ShapeMismatch("uncrop: box exceeds canvas");
    ProbabilityMaps out{RealGrid(h, w, 0.0), RealGrid(h, w, 0.0)};
    for (int r = 0; r < box.side; ++r) {
        for (int c = 0; c < box.side; ++c) {
            out.disc(box.top + r, box.left + c) = maps.disc(r, c);
            out.cup(box.top + r, box.left + c) = maps.cup(r, c);
        }
    }
    return out;
}

}  // namespace posal
