#pragma once

#include "posal/core.hpp"
#include "posal/nn.hpp"

namespace posal {

inline nn::Tensor image_tensor(const ImageSample& s) {
    nn::Tensor t(static_cast<int>(s.pixels.size()), s.rows(), s.cols());
    size_t off = 0;
    for (const auto& ch : s.pixels) {
        for (size_t i = 0; i < ch.size(); ++i) t.v[off + i] = ch.data()[i];
        off += ch.size();
    }
    return t;
}

inline RealGrid tensor_channel(const nn::Tensor& t, int ch) {
    RealGrid g(t.h, t.w);
    const float* src = &t.v[static_cast<size_t>(ch) * t.h * t.w];
    for (size_t i = 0; i < g.size(); ++i) g.data()[i] = src[i];
    return g;
}

inline ProbabilityMaps maps_from_tensor(const nn::Tensor& t) {
    if (t.c != 2) throw ShapeMismatch("maps_from_tensor: expected 2 channels");
    return {tensor_channel(t, 0), tensor_channel(t, 1)};
}

inline nn::Tensor tensor_from_maps_grad(const ProbabilityMaps& g) {
    nn::Tensor t(2, g.disc.rows(), g.disc.cols());
    for (size_t i = 0; i < g.disc.size(); ++i) {
        t.v[i] = static_cast<float>(g.disc.data()[i]);
        t.v[g.disc.size() + i] = static_cast<float>(g.cup.data()[i]);
    }
    return t;
}

inline nn::Tensor tensor_from_grid(const RealGrid& g) {
    nn::Tensor t(1, g.rows(), g.cols());
    for (size_t i = 0; i < g.size(); ++i) t.v[i] = static_cast<float>(g.data()[i]);
    return t;
}

inline nn::Tensor probs_tensor(const ProbabilityMaps& m) {
    nn::Tensor t(2, m.disc.rows(), m.disc.cols());
    for (size_t i = 0; i < m.disc.size(); ++i) {
        t.v[i] = static_cast<float>(m.disc.data()[i]);
        t.v[m.disc.size() + i] = static_cast<float>(m.cup.data()[i]);
    }
    return t;
}

}  // namespace posal
