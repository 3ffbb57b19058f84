#pragma once

#include <array>
#include <memory>
#include <string>
#include <vector>

#include "posal/nn.hpp"

namespace posal::models {

using nn::Rng;
using nn::Tensor;

enum class ModelKind { Extractor, Segmenter, Discriminator };
enum class Scale { Paper, Desk };

std::string to_string(ModelKind k);
std::string to_string(Scale s);
ModelKind model_kind_from_string(const std::string& s);
Scale scale_from_string(const std::string& s);

// One entry per learnable or structural layer, for shape/count checks.
struct LayerDesc {
    std::string kind;  // "conv", "dwconv", "pool", "upsample"
    int kernel = 0;
    int stride = 1;
    int dilation = 1;
    int out_ch = 0;
    std::string activation;  // "relu", "relu6", "lrelu0.2", "sigmoid", "linear"
};

struct ModelSpec {
    ModelKind kind = ModelKind::Segmenter;
    Scale scale = Scale::Desk;
    double width_multiplier = 1.0;
    int input_h = 0, input_w = 0, input_ch = 0;
    std::vector<LayerDesc> layers;

    int conv_count() const;
    // Output spatial size of a stack of SAME-padded strided layers.
    std::pair<int, int> output_size() const;
};

ModelSpec build_extractor(Scale scale);
ModelSpec build_segmenter(Scale scale);
ModelSpec build_discriminator(Scale scale);

// Total downsampling factor of the segmenter backbone (stem + stages).
int segmenter_backbone_downsample(const ModelSpec& spec);

// Inclusive input-pixel interval [r0, r1] x [c0, c1] feeding one output cell
// of a plain conv stack (the discriminator). Unclipped, may extend past the
// image border.
std::array<int, 4> receptive_field_box(const ModelSpec& spec, int cell_r, int cell_c);

class Network {
public:
    virtual ~Network() = default;
    const ModelSpec& spec() const { return spec_; }

    virtual Tensor forward(const Tensor& x) = 0;
    // Gradient w.r.t. the input; accumulates parameter gradients.
    virtual Tensor backward(const Tensor& grad_out) = 0;

    std::vector<nn::ParamRef> params();
    void zero_grads();
    size_t param_count();

    int64_t training_step = 0;

protected:
    explicit Network(ModelSpec spec) : spec_(std::move(spec)) {}
    virtual void collect(std::vector<nn::ParamRef>& out) = 0;
    ModelSpec spec_;
};

// U-Net with 4 down/up levels, two 3x3 convs per level, bilinear upsampling,
// final 1x1 conv to one sigmoid channel. 19 convolutions total.
class UNetExtractor : public Network {
public:
    UNetExtractor(ModelSpec spec, Rng& rng);
    Tensor forward(const Tensor& x) override;
    Tensor backward(const Tensor& grad_out) override;

protected:
    void collect(std::vector<nn::ParamRef>& out) override;

private:
    struct Block {
        std::unique_ptr<nn::Conv2D> conv_a, conv_b;
        nn::ReLU relu_a, relu_b;
        Tensor run(const Tensor& x);
        Tensor run_back(const Tensor& g);
        void collect(std::vector<nn::ParamRef>& out);
    };
    static constexpr int kLevels = 4;
    std::array<Block, kLevels> enc_;
    std::array<nn::MaxPool2, kLevels> pool_;
    Block bottleneck_;
    std::array<Block, kLevels> dec_;
    std::array<std::unique_ptr<nn::BilinearResize>, kLevels> up_;
    std::array<int, kLevels> skip_ch_{};
    std::unique_ptr<nn::Conv2D> head_;
    nn::Sigmoid out_act_;
    std::array<Tensor, kLevels> skips_;
};

// DeepLabv3+-style segmenter on a MobileNetV2-flavored backbone.
// Output: 2 sigmoid channels (disc, cup) at input resolution.
class Segmenter : public Network {
public:
    Segmenter(ModelSpec spec, Rng& rng);
    Tensor forward(const Tensor& x) override;
    Tensor backward(const Tensor& grad_out) override;

protected:
    void collect(std::vector<nn::ParamRef>& out) override;

private:
    struct InvResBlock {
        std::unique_ptr<nn::Conv2D> expand;  // null when expansion factor is 1
        nn::ReLU6 expand_act;
        std::unique_ptr<nn::DepthwiseConv2D> dw;
        nn::ReLU6 dw_act;
        std::unique_ptr<nn::Conv2D> project;
        bool residual = false;
        Tensor input;
        Tensor run(const Tensor& x);
        Tensor run_back(const Tensor& g);
        void collect(std::vector<nn::ParamRef>& out);
    };
    struct AsppBranch {
        std::unique_ptr<nn::Conv2D> conv;
        nn::ReLU act;
        bool pooled = false;
        nn::GlobalAvgPool pool;
        std::unique_ptr<nn::BilinearResize> broadcast;
    };

    std::unique_ptr<nn::Conv2D> stem_;
    nn::ReLU6 stem_act_;
    std::vector<InvResBlock> blocks_;
    int low_level_block_ = 0;  // blocks_ index after which the 1/4-res tap is taken

    std::vector<AsppBranch> aspp_;
    std::unique_ptr<nn::Conv2D> aspp_merge_;
    nn::ReLU aspp_merge_act_;

    std::unique_ptr<nn::BilinearResize> dec_up_;
    std::unique_ptr<nn::Conv2D> low_reduce_;
    nn::ReLU low_reduce_act_;
    std::unique_ptr<nn::Conv2D> dec_conv_;
    nn::ReLU dec_act_;
    std::unique_ptr<nn::Conv2D> head_;
    std::unique_ptr<nn::BilinearResize> head_up_;
    nn::Sigmoid out_act_;

    Tensor low_level_;
    std::vector<int> aspp_branch_ch_;
};

// Five 4x4 stride-2 convs; LeakyReLU(0.2) between, sigmoid at the end.
class PatchDiscriminator : public Network {
public:
    PatchDiscriminator(ModelSpec spec, Rng& rng);
    Tensor forward(const Tensor& x) override;
    Tensor backward(const Tensor& grad_out) override;

protected:
    void collect(std::vector<nn::ParamRef>& out) override;

private:
    std::vector<std::unique_ptr<nn::Conv2D>> convs_;
    std::vector<nn::LeakyReLU> acts_;
    nn::Sigmoid out_act_;
};

std::unique_ptr<Network> make_network(const ModelSpec& spec, Rng& rng);

// Versioned binary checkpoint: JSON descriptor header + named float arrays.
void save_checkpoint(Network& net, const std::string& path);
std::unique_ptr<Network> load_checkpoint(const std::string& path);

class Adam {
public:
    explicit Adam(std::vector<nn::ParamRef> params, double beta1 = 0.9, double beta2 = 0.999,
                  double eps = 1e-8);
    void step(double lr, double grad_scale = 1.0);

private:
    std::vector<nn::ParamRef> params_;
    double beta1_, beta2_, eps_;
    int64_t t_ = 0;
    std::vector<std::vector<float>> m_, v_;
};

class SGD {
public:
    explicit SGD(std::vector<nn::ParamRef> params) : params_(std::move(params)) {}
    void step(double lr, double grad_scale = 1.0);

private:
    std::vector<nn::ParamRef> params_;
};

}  // namespace posal::models
