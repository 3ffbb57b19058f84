#pragma once

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "posal/core.hpp"

namespace posal::nn {

// Planar CHW float tensor for one sample.
struct Tensor {
    int c = 0, h = 0, w = 0;
    std::vector<float> v;

    Tensor() = default;
    Tensor(int c_, int h_, int w_, float fill = 0.f)
        : c(c_), h(h_), w(w_), v(static_cast<size_t>(c_) * h_ * w_, fill) {}

    float& at(int ch, int r, int col) { return v[(static_cast<size_t>(ch) * h + r) * w + col]; }
    float at(int ch, int r, int col) const { return v[(static_cast<size_t>(ch) * h + r) * w + col]; }
    size_t size() const { return v.size(); }
    bool same_shape(const Tensor& o) const { return c == o.c && h == o.h && w == o.w; }
};

struct ParamRef {
    std::string name;
    std::vector<float>* value;
    std::vector<float>* grad;
};

using Rng = std::mt19937_64;

// Normal(0, std) truncated at +-2 std, the usual GAN discriminator init.
float truncated_normal(Rng& rng, float stddev);

class Layer {
public:
    virtual ~Layer() = default;
    virtual Tensor forward(const Tensor& x) = 0;
    virtual Tensor backward(const Tensor& grad_out) = 0;
    virtual void collect_params(std::vector<ParamRef>& out) { (void)out; }
};

enum class Init { HeNormal, TruncatedNormal002 };

// 2D convolution, SAME padding, optional stride and dilation.
// Output spatial size is ceil(in / stride).
class Conv2D : public Layer {
public:
    Conv2D(std::string name, int in_ch, int out_ch, int kernel, int stride, int dilation,
           Init init, Rng& rng);

    Tensor forward(const Tensor& x) override;
    Tensor backward(const Tensor& grad_out) override;
    void collect_params(std::vector<ParamRef>& out) override;

    int in_channels() const { return in_ch_; }
    int out_channels() const { return out_ch_; }
    int kernel() const { return kernel_; }
    int stride() const { return stride_; }
    int dilation() const { return dilation_; }

private:
    std::string name_;
    int in_ch_, out_ch_, kernel_, stride_, dilation_;
    std::vector<float> weight_, bias_;        // weight: [out_ch][in_ch*k*k]
    std::vector<float> weight_grad_, bias_grad_;
    Tensor input_;
    std::vector<float> col_;                  // im2col buffer from forward
    int out_h_ = 0, out_w_ = 0, pad_top_ = 0, pad_left_ = 0;
};

// Per-channel 3x3 convolution, SAME padding.
class DepthwiseConv2D : public Layer {
public:
    DepthwiseConv2D(std::string name, int channels, int stride, Init init, Rng& rng);

    Tensor forward(const Tensor& x) override;
    Tensor backward(const Tensor& grad_out) override;
    void collect_params(std::vector<ParamRef>& out) override;

private:
    std::string name_;
    int channels_, stride_;
    std::vector<float> weight_, bias_;  // weight: [ch][9]
    std::vector<float> weight_grad_, bias_grad_;
    Tensor input_;
    int out_h_ = 0, out_w_ = 0, pad_top_ = 0, pad_left_ = 0;
};

class ReLU6 : public Layer {
public:
    Tensor forward(const Tensor& x) override;
    Tensor backward(const Tensor& grad_out) override;

private:
    Tensor input_;
};

class ReLU : public Layer {
public:
    Tensor forward(const Tensor& x) override;
    Tensor backward(const Tensor& grad_out) override;

private:
    Tensor input_;
};

class LeakyReLU : public Layer {
public:
    explicit LeakyReLU(float alpha) : alpha_(alpha) {}
    Tensor forward(const Tensor& x) override;
    Tensor backward(const Tensor& grad_out) override;

private:
    float alpha_;
    Tensor input_;
};

class Sigmoid : public Layer {
public:
    Tensor forward(const Tensor& x) override;
    Tensor backward(const Tensor& grad_out) override;

private:
    Tensor output_;
};

class MaxPool2 : public Layer {
public:
    Tensor forward(const Tensor& x) override;
    Tensor backward(const Tensor& grad_out) override;

private:
    int in_h_ = 0, in_w_ = 0, ch_ = 0;
    std::vector<int> argmax_;
};

// Bilinear resize to (out_h, out_w), half-pixel centers.
class BilinearResize : public Layer {
public:
    BilinearResize(int out_h, int out_w) : out_h_(out_h), out_w_(out_w) {}
    Tensor forward(const Tensor& x) override;
    Tensor backward(const Tensor& grad_out) override;

private:
    int out_h_, out_w_;
    int in_h_ = 0, in_w_ = 0, ch_ = 0;
};

// Free-function bilinear resize used outside the autodiff path.
Tensor bilinear_resize(const Tensor& x, int out_h, int out_w);

// Pads/crops nothing; channel-wise global average pooling to 1x1.
class GlobalAvgPool : public Layer {
public:
    Tensor forward(const Tensor& x) override;
    Tensor backward(const Tensor& grad_out) override;

private:
    int in_h_ = 0, in_w_ = 0, ch_ = 0;
};

// SAME-padding shape arithmetic shared by layers and spec-level checks.
inline int same_out_size(int in, int stride) { return (in + stride - 1) / stride; }
int same_pad_before(int in, int kernel, int stride, int dilation);

}  // namespace posal::nn
