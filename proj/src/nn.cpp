#include "posal/nn.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>

namespace posal::nn {

using MatMap = Eigen::Map<Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using ConstMatMap =
    Eigen::Map<const Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

float truncated_normal(Rng& rng, float stddev) {
    std::normal_distribution<float> dist(0.f, stddev);
    for (;;) {
        float v = dist(rng);
        if (std::abs(v) <= 2.f * stddev) return v;
    }
}

int same_pad_before(int in, int kernel, int stride, int dilation) {
    int eff_k = (kernel - 1) * dilation + 1;
    int out = same_out_size(in, stride);
    int pad_total = std::max((out - 1) * stride + eff_k - in, 0);
    return pad_total / 2;
}

// ---------------------------------------------------------------- Conv2D

Conv2D::Conv2D(std::string name, int in_ch, int out_ch, int kernel, int stride, int dilation,
               Init init, Rng& rng)
    : name_(std::move(name)),
      in_ch_(in_ch),
      out_ch_(out_ch),
      kernel_(kernel),
      stride_(stride),
      dilation_(dilation) {
    size_t n = static_cast<size_t>(out_ch) * in_ch * kernel * kernel;
    weight_.resize(n);
    bias_.assign(out_ch, 0.f);
    weight_grad_.assign(n, 0.f);
    bias_grad_.assign(out_ch, 0.f);
    if (init == Init::HeNormal) {
        float stddev = std::sqrt(2.f / (static_cast<float>(in_ch) * kernel * kernel));
        std::normal_distribution<float> dist(0.f, stddev);
        for (auto& w : weight_) w = dist(rng);
    } else {
        for (auto& w : weight_) w = truncated_normal(rng, 0.02f);
    }
}

Tensor Conv2D::forward(const Tensor& x) {
    if (x.c != in_ch_) throw ShapeMismatch("Conv2D " + name_ + ": channel mismatch");
    input_ = x;
    out_h_ = same_out_size(x.h, stride_);
    out_w_ = same_out_size(x.w, stride_);
    pad_top_ = same_pad_before(x.h, kernel_, stride_, dilation_);
    pad_left_ = same_pad_before(x.w, kernel_, stride_, dilation_);

    const int K = in_ch_ * kernel_ * kernel_;
    const int N = out_h_ * out_w_;
    col_.assign(static_cast<size_t>(K) * N, 0.f);
    // col is K x N, row index = (ch*k + kr)*k + kc
    for (int ch = 0; ch < in_ch_; ++ch) {
        const float* src = &x.v[static_cast<size_t>(ch) * x.h * x.w];
        for (int kr = 0; kr < kernel_; ++kr) {
            for (int kc = 0; kc < kernel_; ++kc) {
                float* dst = &col_[(static_cast<size_t>(ch) * kernel_ * kernel_ +
                                    static_cast<size_t>(kr) * kernel_ + kc) *
                                   N];
                for (int orow = 0; orow < out_h_; ++orow) {
                    int ir = orow * stride_ - pad_top_ + kr * dilation_;
                    if (ir < 0 || ir >= x.h) continue;
                    for (int ocol = 0; ocol < out_w_; ++ocol) {
                        int ic = ocol * stride_ - pad_left_ + kc * dilation_;
                        if (ic < 0 || ic >= x.w) continue;
                        dst[orow * out_w_ + ocol] = src[ir * x.w + ic];
                    }
                }
            }
        }
    }

    Tensor out(out_ch_, out_h_, out_w_);
    ConstMatMap W(weight_.data(), out_ch_, K);
    ConstMatMap C(col_.data(), K, N);
    MatMap Y(out.v.data(), out_ch_, N);
    Y.noalias() = W * C;
    for (int oc = 0; oc < out_ch_; ++oc) Y.row(oc).array() += bias_[oc];
    return out;
}

Tensor Conv2D::backward(const Tensor& grad_out) {
    const int K = in_ch_ * kernel_ * kernel_;
    const int N = out_h_ * out_w_;
    if (grad_out.c != out_ch_ || grad_out.h != out_h_ || grad_out.w != out_w_)
        throw ShapeMismatch("Conv2D " + name_ + ": backward shape mismatch");

    ConstMatMap dY(grad_out.v.data(), out_ch_, N);
    ConstMatMap C(col_.data(), K, N);
    MatMap dW(weight_grad_.data(), out_ch_, K);
    dW.noalias() += dY * C.transpose();
    // Scalar accumulation: Eigen's vectorized sum peels by pointer alignment,
    // which would make results depend on heap addresses.
    for (int oc = 0; oc < out_ch_; ++oc) {
        float acc = 0.f;
        const float* row = &grad_out.v[static_cast<size_t>(oc) * N];
        for (int i = 0; i < N; ++i) acc += row[i];
        bias_grad_[oc] += acc;
    }

    std::vector<float> dcol(static_cast<size_t>(K) * N);
    MatMap dC(dcol.data(), K, N);
    ConstMatMap W(weight_.data(), out_ch_, K);
    dC.noalias() = W.transpose() * dY;

    Tensor dx(in_ch_, input_.h, input_.w);
    for (int ch = 0; ch < in_ch_; ++ch) {
        float* dst = &dx.v[static_cast<size_t>(ch) * input_.h * input_.w];
        for (int kr = 0; kr < kernel_; ++kr) {
            for (int kc = 0; kc < kernel_; ++kc) {
                const float* src = &dcol[(static_cast<size_t>(ch) * kernel_ * kernel_ +
                                          static_cast<size_t>(kr) * kernel_ + kc) *
                                         N];
                for (int orow = 0; orow < out_h_; ++orow) {
                    int ir = orow * stride_ - pad_top_ + kr * dilation_;
                    if (ir < 0 || ir >= input_.h) continue;
                    for (int ocol = 0; ocol < out_w_; ++ocol) {
                        int ic = ocol * stride_ - pad_left_ + kc * dilation_;
                        if (ic < 0 || ic >= input_.w) continue;
                        dst[ir * input_.w + ic] += src[orow * out_w_ + ocol];
                    }
                }
            }
        }
    }
    return dx;
}

void Conv2D::collect_params(std::vector<ParamRef>& out) {
    out.push_back({name_ + ".weight", &weight_, &weight_grad_});
    out.push_back({name_ + ".bias", &bias_, &bias_grad_});
}

// ------------------------------------------------------- DepthwiseConv2D

DepthwiseConv2D::DepthwiseConv2D(std::string name, int channels, int stride, Init init, Rng& rng)
    : name_(std::move(name)), channels_(channels), stride_(stride) {
    weight_.resize(static_cast<size_t>(channels) * 9);
    bias_.assign(channels, 0.f);
    weight_grad_.assign(weight_.size(), 0.f);
    bias_grad_.assign(channels, 0.f);
    if (init == Init::HeNormal) {
        float stddev = std::sqrt(2.f / 9.f);
        std::normal_distribution<float> dist(0.f, stddev);
        for (auto& w : weight_) w = dist(rng);
    } else {
        for (auto& w : weight_) w = truncated_normal(rng, 0.02f);
    }
}

Tensor DepthwiseConv2D::forward(const Tensor& x) {
    if (x.c != channels_) throw ShapeMismatch("DepthwiseConv2D " + name_ + ": channel mismatch");
    input_ = x;
    out_h_ = same_out_size(x.h, stride_);
    out_w_ = same_out_size(x.w, stride_);
    pad_top_ = same_pad_before(x.h, 3, stride_, 1);
    pad_left_ = same_pad_before(x.w, 3, stride_, 1);

    Tensor out(channels_, out_h_, out_w_);
    for (int ch = 0; ch < channels_; ++ch) {
        const float* src = &x.v[static_cast<size_t>(ch) * x.h * x.w];
        const float* w = &weight_[static_cast<size_t>(ch) * 9];
        float* dst = &out.v[static_cast<size_t>(ch) * out_h_ * out_w_];
        for (int orow = 0; orow < out_h_; ++orow) {
            for (int ocol = 0; ocol < out_w_; ++ocol) {
                float acc = bias_[ch];
                for (int kr = 0; kr < 3; ++kr) {
                    int ir = orow * stride_ - pad_top_ + kr;
                    if (ir < 0 || ir >= x.h) continue;
                    for (int kc = 0; kc < 3; ++kc) {
                        int ic = ocol * stride_ - pad_left_ + kc;
                        if (ic < 0 || ic >= x.w) continue;
                        acc += w[kr * 3 + kc] * src[ir * x.w + ic];
                    }
                }
                dst[orow * out_w_ + ocol] = acc;
            }
        }
    }
    return out;
}

Tensor DepthwiseConv2D::backward(const Tensor& grad_out) {
    Tensor dx(channels_, input_.h, input_.w);
    for (int ch = 0; ch < channels_; ++ch) {
        const float* src = &input_.v[static_cast<size_t>(ch) * input_.h * input_.w];
        const float* g = &grad_out.v[static_cast<size_t>(ch) * out_h_ * out_w_];
        const float* w = &weight_[static_cast<size_t>(ch) * 9];
        float* dw = &weight_grad_[static_cast<size_t>(ch) * 9];
        float* dsrc = &dx.v[static_cast<size_t>(ch) * input_.h * input_.w];
        for (int orow = 0; orow < out_h_; ++orow) {
            for (int ocol = 0; ocol < out_w_; ++ocol) {
                float go = g[orow * out_w_ + ocol];
                bias_grad_[ch] += go;
                for (int kr = 0; kr < 3; ++kr) {
                    int ir = orow * stride_ - pad_top_ + kr;
                    if (ir < 0 || ir >= input_.h) continue;
                    for (int kc = 0; kc < 3; ++kc) {
                        int ic = ocol * stride_ - pad_left_ + kc;
                        if (ic < 0 || ic >= input_.w) continue;
                        dw[kr * 3 + kc] += go * src[ir * input_.w + ic];
                        dsrc[ir * input_.w + ic] += go * w[kr * 3 + kc];
                    }
                }
            }
        }
    }
    return dx;
}

void DepthwiseConv2D::collect_params(std::vector<ParamRef>& out) {
    out.push_back({name_ + ".weight", &weight_, &weight_grad_});
    out.push_back({name_ + ".bias", &bias_, &bias_grad_});
}

// ------------------------------------------------------------ activations

Tensor ReLU6::forward(const Tensor& x) {
    input_ = x;
    Tensor out = x;
    for (auto& v : out.v) v = std::clamp(v, 0.f, 6.f);
    return out;
}

Tensor ReLU6::backward(const Tensor& grad_out) {
    Tensor dx = grad_out;
    for (size_t i = 0; i < dx.v.size(); ++i)
        if (input_.v[i] <= 0.f || input_.v[i] >= 6.f) dx.v[i] = 0.f;
    return dx;
}

Tensor ReLU::forward(const Tensor& x) {
    input_ = x;
    Tensor out = x;
    for (auto& v : out.v) v = std::max(v, 0.f);
    return out;
}

Tensor ReLU::backward(const Tensor& grad_out) {
    Tensor dx = grad_out;
    for (size_t i = 0; i < dx.v.size(); ++i)
        if (input_.v[i] <= 0.f) dx.v[i] = 0.f;
    return dx;
}

Tensor LeakyReLU::forward(const Tensor& x) {
    input_ = x;
    Tensor out = x;
    for (auto& v : out.v)
        if (v < 0.f) v *= alpha_;
    return out;
}

Tensor LeakyReLU::backward(const Tensor& grad_out) {
    Tensor dx = grad_out;
    for (size_t i = 0; i < dx.v.size(); ++i)
        if (input_.v[i] < 0.f) dx.v[i] *= alpha_;
    return dx;
}

Tensor Sigmoid::forward(const Tensor& x) {
    Tensor out = x;
    for (auto& v : out.v) v = 1.f / (1.f + std::exp(-v));
    output_ = out;
    return out;
}

Tensor Sigmoid::backward(const Tensor& grad_out) {
    Tensor dx = grad_out;
    for (size_t i = 0; i < dx.v.size(); ++i) {
        float s = output_.v[i];
        dx.v[i] *= s * (1.f - s);
    }
    return dx;
}

// ---------------------------------------------------------------- pooling

Tensor MaxPool2::forward(const Tensor& x) {
    in_h_ = x.h;
    in_w_ = x.w;
    ch_ = x.c;
    int oh = x.h / 2, ow = x.w / 2;
    Tensor out(x.c, oh, ow);
    argmax_.assign(out.size(), 0);
    for (int ch = 0; ch < x.c; ++ch) {
        for (int r = 0; r < oh; ++r) {
            for (int c = 0; c < ow; ++c) {
                float best = -1e30f;
                int best_idx = 0;
                for (int dr = 0; dr < 2; ++dr) {
                    for (int dc = 0; dc < 2; ++dc) {
                        int idx = (ch * x.h + 2 * r + dr) * x.w + 2 * c + dc;
                        if (x.v[idx] > best) {
                            best = x.v[idx];
                            best_idx = idx;
                        }
                    }
                }
                out.at(ch, r, c) = best;
                argmax_[(static_cast<size_t>(ch) * oh + r) * ow + c] = best_idx;
            }
        }
    }
    return out;
}

Tensor MaxPool2::backward(const Tensor& grad_out) {
    Tensor dx(ch_, in_h_, in_w_);
    for (size_t i = 0; i < grad_out.v.size(); ++i) dx.v[argmax_[i]] += grad_out.v[i];
    return dx;
}

Tensor GlobalAvgPool::forward(const Tensor& x) {
    in_h_ = x.h;
    in_w_ = x.w;
    ch_ = x.c;
    Tensor out(x.c, 1, 1);
    float inv = 1.f / static_cast<float>(x.h * x.w);
    for (int ch = 0; ch < x.c; ++ch) {
        float acc = 0;
        const float* src = &x.v[static_cast<size_t>(ch) * x.h * x.w];
        for (int i = 0; i < x.h * x.w; ++i) acc += src[i];
        out.v[ch] = acc * inv;
    }
    return out;
}

Tensor GlobalAvgPool::backward(const Tensor& grad_out) {
    Tensor dx(ch_, in_h_, in_w_);
    float inv = 1.f / static_cast<float>(in_h_ * in_w_);
    for (int ch = 0; ch < ch_; ++ch) {
        float g = grad_out.v[ch] * inv;
        float* dst = &dx.v[static_cast<size_t>(ch) * in_h_ * in_w_];
        for (int i = 0; i < in_h_ * in_w_; ++i) dst[i] = g;
    }
    return dx;
}

// ------------------------------------------------------------- resampling

namespace {

struct LerpAxis {
    std::vector<int> i0, i1;
    std::vector<float> w1;  // weight of i1; weight of i0 is 1-w1
};

LerpAxis make_axis(int out, int in) {
    LerpAxis ax;
    ax.i0.resize(out);
    ax.i1.resize(out);
    ax.w1.resize(out);
    float scale = static_cast<float>(in) / out;
    for (int o = 0; o < out; ++o) {
        float pos = (o + 0.5f) * scale - 0.5f;
        float fl = std::floor(pos);
        int i0 = static_cast<int>(fl);
        ax.w1[o] = pos - fl;
        ax.i0[o] = std::clamp(i0, 0, in - 1);
        ax.i1[o] = std::clamp(i0 + 1, 0, in - 1);
    }
    return ax;
}

}  // namespace

Tensor bilinear_resize(const Tensor& x, int out_h, int out_w) {
    LerpAxis ry = make_axis(out_h, x.h), rx = make_axis(out_w, x.w);
    Tensor out(x.c, out_h, out_w);
    for (int ch = 0; ch < x.c; ++ch) {
        const float* src = &x.v[static_cast<size_t>(ch) * x.h * x.w];
        float* dst = &out.v[static_cast<size_t>(ch) * out_h * out_w];
        for (int r = 0; r < out_h; ++r) {
            for (int c = 0; c < out_w; ++c) {
                float a = src[ry.i0[r] * x.w + rx.i0[c]];
                float b = src[ry.i0[r] * x.w + rx.i1[c]];
                float d = src[ry.i1[r] * x.w + rx.i0[c]];
                float e = src[ry.i1[r] * x.w + rx.i1[c]];
                float top = a + (b - a) * rx.w1[c];
                float bot = d + (e - d) * rx.w1[c];
                dst[r * out_w + c] = top + (bot - top) * ry.w1[r];
            }
        }
    }
    return out;
}

Tensor BilinearResize::forward(const Tensor& x) {
    in_h_ = x.h;
    in_w_ = x.w;
    ch_ = x.c;
    return bilinear_resize(x, out_h_, out_w_);
}

Tensor BilinearResize::backward(const Tensor& grad_out) {
    LerpAxis ry = make_axis(out_h_, in_h_), rx = make_axis(out_w_, in_w_);
    Tensor dx(ch_, in_h_, in_w_);
    for (int ch = 0; ch < ch_; ++ch) {
        const float* g = &grad_out.v[static_cast<size_t>(ch) * out_h_ * out_w_];
        float* dst = &dx.v[static_cast<size_t>(ch) * in_h_ * in_w_];
        for (int r = 0; r < out_h_; ++r) {
            for (int c = 0; c < out_w_; ++c) {
                float go = g[r * out_w_ + c];
                float wy = ry.w1[r], wx = rx.w1[c];
                dst[ry.i0[r] * in_w_ + rx.i0[c]] += go * (1 - wy) * (1 - wx);
                dst[ry.i0[r] * in_w_ + rx.i1[c]] += go * (1 - wy) * wx;
                dst[ry.i1[r] * in_w_ + rx.i0[c]] += go * wy * (1 - wx);
                dst[ry.i1[r] * in_w_ + rx.i1[c]] += go * wy * wx;
            }
        }
    }
    return dx;
}

}  // namespace posal::nn
