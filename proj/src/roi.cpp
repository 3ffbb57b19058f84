#include "posal/roi.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <fstream>
#include <numeric>
#include <random>

#include "posal/convert.hpp"
#include "posal/losses.hpp"

namespace posal::roi {

using models::Network;
using models::Scale;
using nn::Tensor;

int default_roi_side(Scale scale) { return scale == Scale::Paper ? 512 : 128; }

ExtractorResult train_extractor(const std::vector<ImageSample>& source,
                                const ExtractorConfig& cfg, Scale scale) {
    if (source.empty()) throw DataError("train_extractor: empty dataset");
    for (const auto& s : source)
        if (!s.labels) throw DataError("train_extractor: sample " + s.id + " has no labels");

    nn::Rng rng(cfg.seed);
    auto spec = models::build_extractor(scale);
    auto net = std::make_unique<models::UNetExtractor>(spec, rng);
    models::Adam opt(net->params());

    const int in = spec.input_h;
    // Pre-resize once; the extractor always sees its fixed input size.
    std::vector<Tensor> inputs;
    std::vector<MaskGrid> disc_labels;
    for (const auto& s : source) {
        Tensor t = image_tensor(s);
        if (t.h != in || t.w != in) t = nn::bilinear_resize(t, in, in);
        inputs.push_back(std::move(t));
        if (s.rows() == in && s.cols() == in) {
            disc_labels.push_back(s.labels->disc);
        } else {
            // Nearest-neighbor resample of the mask.
            MaskGrid m(in, in, 0);
            for (int r = 0; r < in; ++r)
                for (int c = 0; c < in; ++c) {
                    int sr = std::min(s.rows() - 1, r * s.rows() / in);
                    int sc = std::min(s.cols() - 1, c * s.cols() / in);
                    m(r, c) = s.labels->disc(sr, sc);
                }
            disc_labels.push_back(std::move(m));
        }
    }

    ExtractorResult result;
    std::vector<size_t> order(inputs.size());
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 shuffle_rng(cfg.seed + 17);
    int64_t total_steps =
        static_cast<int64_t>(cfg.epochs) *
        static_cast<int64_t>((inputs.size() + cfg.batch_size - 1) / cfg.batch_size);
    int64_t step = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        double epoch_loss = 0;
        size_t seen = 0;
        for (size_t start = 0; start < order.size(); start += cfg.batch_size) {
            size_t end = std::min(order.size(), start + cfg.batch_size);
            net->zero_grads();
            for (size_t k = start; k < end; ++k) {
                const Tensor& x = inputs[order[k]];
                Tensor y = net->forward(x);
                RealGrid p = tensor_channel(y, 0);
                const MaskGrid& gt = disc_labels[order[k]];
                epoch_loss += losses::dice_loss(p, gt);
                Tensor grad = tensor_from_grid(losses::dice_loss_grad(p, gt));
                net->backward(grad);
            }
            seen += end - start;
            opt.step(cfg.lr, 1.0 / static_cast<double>(end - start));
            ++step;
            net->training_step = step;
        }
        (void)total_steps;
        result.epoch_losses.push_back(epoch_loss / static_cast<double>(seen));
    }
    result.model = std::move(net);
    return result;
}

ROIBox locate_disc(Network& extractor, const ImageSample& image, int roi_side) {
    const int in = extractor.spec().input_h;
    Tensor t = image_tensor(image);
    const int h0 = image.rows(), w0 = image.cols();
    if (t.h != in || t.w != in) t = nn::bilinear_resize(t, in, in);
    Tensor y = extractor.forward(t);

    // Largest 4-connected component of the thresholded prediction.
    MaskGrid mask(in, in, 0);
    for (int r = 0; r < in; ++r)
        for (int c = 0; c < in; ++c) mask(r, c) = y.at(0, r, c) >= 0.5f ? 1 : 0;

    Grid<int> comp(in, in, 0);
    int best_size = 0;
    double best_r = 0, best_c = 0;
    int next_label = 0;
    std::vector<std::pair<int, int>> stack;
    for (int r = 0; r < in; ++r) {
        for (int c = 0; c < in; ++c) {
            if (!mask(r, c) || comp(r, c)) continue;
            ++next_label;
            stack.push_back({r, c});
            comp(r, c) = next_label;
            int size = 0;
            double sum_r = 0, sum_c = 0;
            while (!stack.empty()) {
                auto [cr, cc] = stack.back();
                stack.pop_back();
                ++size;
                sum_r += cr;
                sum_c += cc;
                const int dr[4] = {-1, 1, 0, 0}, dc[4] = {0, 0, -1, 1};
                for (int k = 0; k < 4; ++k) {
                    int nr = cr + dr[k], nc = cc + dc[k];
                    if (nr < 0 || nr >= in || nc < 0 || nc >= in) continue;
                    if (!mask(nr, nc) || comp(nr, nc)) continue;
                    comp(nr, nc) = next_label;
                    stack.push_back({nr, nc});
                }
            }
            if (size > best_size) {
                best_size = size;
                best_r = sum_r / size;
                best_c = sum_c / size;
            }
        }
    }

    if (best_size == 0) {
        return make_roi_box(h0 / 2.0, w0 / 2.0, roi_side, h0, w0, /*fallback=*/true);
    }
    double center_r = best_r * h0 / in;
    double center_c = best_c * w0 / in;
    return make_roi_box(center_r, center_c, roi_side, h0, w0);
}

std::pair<ImageSample, ROIBox> extract_roi(Network& extractor, const ImageSample& image,
                                           int roi_side) {
    ROIBox box = locate_disc(extractor, image, roi_side);
    return {crop(image, box), box};
}

void write_roi_manifest(const std::string& path,
                        const std::vector<std::pair<std::string, ROIBox>>& boxes) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& [id, b] : boxes)
        arr.push_back({{"id", id},
                       {"top", b.top},
                       {"left", b.left},
                       {"side", b.side},
                       {"center_row", b.center_row},
                       {"center_col", b.center_col},
                       {"warning", b.fallback_used}});
    std::ofstream os(path);
    if (!os) throw DataError("write_roi_manifest: cannot write " + path);
    os << arr.dump(2) << "\n";
}

std::vector<std::pair<std::string, ROIBox>> read_roi_manifest(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw DataError("read_roi_manifest: cannot open " + path);
    nlohmann::json arr;
    is >> arr;
    std::vector<std::pair<std::string, ROIBox>> out;
    for (const auto& j : arr) {
        ROIBox b;
        b.top = j.at("top");
        b.left = j.at("left");
        b.side = j.at("side");
        b.center_row = j.at("center_row");
        b.center_col = j.at("center_col");
        b.fallback_used = j.at("warning");
        out.push_back({j.at("id"), b});
    }
    return out;
}

}  // namespace posal::roi
