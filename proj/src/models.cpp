#include "posal/models.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <cstring>
#include <fstream>

namespace posal::models {

using nn::Init;

std::string to_string(ModelKind k) {
    switch (k) {
        case ModelKind::Extractor: return "extractor";
        case ModelKind::Segmenter: return "segmenter";
        case ModelKind::Discriminator: return "discriminator";
    }
    return "?";
}

std::string to_string(Scale s) { return s == Scale::Paper ? "paper" : "desk"; }

ModelKind model_kind_from_string(const std::string& s) {
    if (s == "extractor") return ModelKind::Extractor;
    if (s == "segmenter") return ModelKind::Segmenter;
    if (s == "discriminator") return ModelKind::Discriminator;
    throw ConfigError("unknown model kind: " + s);
}

Scale scale_from_string(const std::string& s) {
    if (s == "paper") return Scale::Paper;
    if (s == "desk") return Scale::Desk;
    throw ConfigError("unknown scale: " + s);
}

int ModelSpec::conv_count() const {
    int n = 0;
    for (const auto& l : layers)
        if (l.kind.ends_with("conv")) ++n;
    return n;
}

std::pair<int, int> ModelSpec::output_size() const {
    int h = input_h, w = input_w;
    for (const auto& l : layers) {
        if (l.kind.ends_with("conv")) {
            h = nn::same_out_size(h, l.stride);
            w = nn::same_out_size(w, l.stride);
        } else if (l.kind == "pool") {
            h /= 2;
            w /= 2;
        }
    }
    return {h, w};
}

namespace {

int scaled(int ch, double w) { return std::max(1, static_cast<int>(std::lround(ch * w))); }

struct SegmenterLayout {
    int stem_ch;
    // Per stage: expansion factor, output channels, repeats, first-block stride.
    std::array<int, 7> expand{1, 6, 6, 6, 6, 6, 6};
    std::array<int, 7> out_ch;
    std::array<int, 7> repeats;
    std::array<int, 7> stride{1, 2, 2, 1, 1, 1, 1};
    int low_level_stage = 1;  // output of this stage is the 1/4-res tap
    int aspp_ch;
    int low_reduce_ch;
    int dec_ch;
    std::array<int, 4> aspp_dilations{1, 6, 12, 18};
};

SegmenterLayout segmenter_layout(Scale scale) {
    SegmenterLayout lay;
    double w = scale == Scale::Paper ? 1.0 : 0.25;
    const std::array<int, 7> base_ch{16, 24, 32, 64, 96, 160, 320};
    for (int i = 0; i < 7; ++i) lay.out_ch[i] = scaled(base_ch[i], w);
    if (scale == Scale::Paper) lay.repeats = {1, 2, 3, 4, 3, 3, 1};
    else lay.repeats = {1, 1, 1, 1, 1, 1, 1};
    lay.stem_ch = scaled(32, w);
    lay.aspp_ch = scaled(256, w);
    lay.low_reduce_ch = scaled(48, w);
    // Desk decoder is trimmed a little harder so the whole desk model stays
    // under 5% of the paper-scale parameter count.
    lay.dec_ch = scale == Scale::Paper ? 256 : scaled(192, w);
    return lay;
}

}  // namespace

ModelSpec build_extractor(Scale scale) {
    ModelSpec spec;
    spec.kind = ModelKind::Extractor;
    spec.scale = scale;
    spec.width_multiplier = scale == Scale::Paper ? 1.0 : 0.125;
    spec.input_h = spec.input_w = scale == Scale::Paper ? 640 : 160;
    spec.input_ch = 3;
    int base = scaled(32, spec.width_multiplier);
    auto conv = [&](int out_ch, int k) {
        spec.layers.push_back({"conv", k, 1, 1, out_ch, "relu"});
    };
    for (int l = 0; l < 4; ++l) {
        conv(base << l, 3);
        conv(base << l, 3);
        spec.layers.push_back({"pool", 2, 2, 1, 0, ""});
    }
    conv(base << 4, 3);
    conv(base << 4, 3);
    for (int l = 3; l >= 0; --l) {
        spec.layers.push_back({"upsample", 0, 1, 1, 0, ""});
        conv(base << l, 3);
        conv(base << l, 3);
    }
    spec.layers.push_back({"conv", 1, 1, 1, 1, "sigmoid"});
    return spec;
}

ModelSpec build_segmenter(Scale scale) {
    ModelSpec spec;
    spec.kind = ModelKind::Segmenter;
    spec.scale = scale;
    spec.width_multiplier = scale == Scale::Paper ? 1.0 : 0.25;
    spec.input_h = spec.input_w = scale == Scale::Paper ? 512 : 128;
    spec.input_ch = 3;
    SegmenterLayout lay = segmenter_layout(scale);
    spec.layers.push_back({"conv", 3, 2, 1, lay.stem_ch, "relu6"});
    for (int s = 0; s < 7; ++s) {
        for (int r = 0; r < lay.repeats[s]; ++r) {
            int stride = r == 0 ? lay.stride[s] : 1;
            if (lay.expand[s] != 1) spec.layers.push_back({"conv", 1, 1, 1, 0, "relu6"});
            spec.layers.push_back({"dwconv", 3, stride, 1, 0, "relu6"});
            spec.layers.push_back({"conv", 1, 1, 1, lay.out_ch[s], "linear"});
        }
    }
    for (int d : lay.aspp_dilations)
        spec.layers.push_back({"aspp-conv", d == 1 ? 1 : 3, 1, d, lay.aspp_ch, "relu"});
    spec.layers.push_back({"aspp-conv", 1, 1, 1, lay.aspp_ch, "relu"});  // image pooling
    spec.layers.push_back({"aspp-conv", 1, 1, 1, lay.aspp_ch, "relu"});  // merge
    spec.layers.push_back({"decoder-conv", 1, 1, 1, lay.low_reduce_ch, "relu"});
    spec.layers.push_back({"decoder-conv", 3, 1, 1, lay.dec_ch, "relu"});
    spec.layers.push_back({"decoder-conv", 1, 1, 1, 2, "sigmoid"});
    return spec;
}

ModelSpec build_discriminator(Scale scale) {
    ModelSpec spec;
    spec.kind = ModelKind::Discriminator;
    spec.scale = scale;
    spec.width_multiplier = scale == Scale::Paper ? 1.0 : 0.25;
    spec.input_h = spec.input_w = scale == Scale::Paper ? 512 : 128;
    spec.input_ch = 2;
    const std::array<int, 4> base{64, 128, 256, 512};
    for (int i = 0; i < 4; ++i)
        spec.layers.push_back({"conv", 4, 2, 1, scaled(base[i], spec.width_multiplier), "lrelu0.2"});
    spec.layers.push_back({"conv", 4, 2, 1, 1, "sigmoid"});
    return spec;
}

int segmenter_backbone_downsample(const ModelSpec& spec) {
    int d = 1;
    for (const auto& l : spec.layers) {
        if (l.kind == "aspp-conv") break;
        if (l.kind.ends_with("conv")) d *= l.stride;
    }
    return d;
}

std::array<int, 4> receptive_field_box(const ModelSpec& spec, int cell_r, int cell_c) {
    // Record (stride, pad, effective kernel) per conv layer, front to back.
    struct L {
        int stride, pad_h, pad_w, eff_k;
    };
    std::vector<L> ls;
    int h = spec.input_h, w = spec.input_w;
    for (const auto& l : spec.layers) {
        if (!l.kind.ends_with("conv")) throw ConfigError("receptive_field_box: conv stack only");
        int eff_k = (l.kernel - 1) * l.dilation + 1;
        ls.push_back({l.stride, nn::same_pad_before(h, l.kernel, l.stride, l.dilation),
                      nn::same_pad_before(w, l.kernel, l.stride, l.dilation), eff_k});
        h = nn::same_out_size(h, l.stride);
        w = nn::same_out_size(w, l.stride);
    }
    int r0 = cell_r, r1 = cell_r, c0 = cell_c, c1 = cell_c;
    for (auto it = ls.rbegin(); it != ls.rend(); ++it) {
        r0 = r0 * it->stride - it->pad_h;
        r1 = r1 * it->stride - it->pad_h + it->eff_k - 1;
        c0 = c0 * it->stride - it->pad_w;
        c1 = c1 * it->stride - it->pad_w + it->eff_k - 1;
    }
    return {r0, r1, c0, c1};
}

// ---------------------------------------------------------------- Network

std::vector<nn::ParamRef> Network::params() {
    std::vector<nn::ParamRef> out;
    collect(out);
    return out;
}

void Network::zero_grads() {
    for (auto& p : params()) std::fill(p.grad->begin(), p.grad->end(), 0.f);
}

size_t Network::param_count() {
    size_t n = 0;
    for (auto& p : params()) n += p.value->size();
    return n;
}

namespace {

Tensor concat_ch(const Tensor& a, const Tensor& b) {
    if (a.h != b.h || a.w != b.w) throw ShapeMismatch("concat: spatial mismatch");
    Tensor out(a.c + b.c, a.h, a.w);
    std::memcpy(out.v.data(), a.v.data(), a.v.size() * sizeof(float));
    std::memcpy(out.v.data() + a.v.size(), b.v.data(), b.v.size() * sizeof(float));
    return out;
}

void split_ch(const Tensor& g, int ca, Tensor& ga, Tensor& gb) {
    ga = Tensor(ca, g.h, g.w);
    gb = Tensor(g.c - ca, g.h, g.w);
    std::memcpy(ga.v.data(), g.v.data(), ga.v.size() * sizeof(float));
    std::memcpy(gb.v.data(), g.v.data() + ga.v.size(), gb.v.size() * sizeof(float));
}

}  // namespace

// ----------------------------------------------------------- UNetExtractor

Tensor UNetExtractor::Block::run(const Tensor& x) {
    return relu_b.forward(conv_b->forward(relu_a.forward(conv_a->forward(x))));
}

Tensor UNetExtractor::Block::run_back(const Tensor& g) {
    return conv_a->backward(relu_a.backward(conv_b->backward(relu_b.backward(g))));
}

void UNetExtractor::Block::collect(std::vector<nn::ParamRef>& out) {
    conv_a->collect_params(out);
    conv_b->collect_params(out);
}

UNetExtractor::UNetExtractor(ModelSpec spec, Rng& rng) : Network(std::move(spec)) {
    int base = scaled(32, spec_.width_multiplier);
    int in_ch = spec_.input_ch;
    for (int l = 0; l < kLevels; ++l) {
        int out_ch = base << l;
        enc_[l].conv_a = std::make_unique<nn::Conv2D>("enc" + std::to_string(l) + "a", in_ch,
                                                      out_ch, 3, 1, 1, Init::HeNormal, rng);
        enc_[l].conv_b = std::make_unique<nn::Conv2D>("enc" + std::to_string(l) + "b", out_ch,
                                                      out_ch, 3, 1, 1, Init::HeNormal, rng);
        skip_ch_[l] = out_ch;
        in_ch = out_ch;
    }
    int bott_ch = base << kLevels;
    bottleneck_.conv_a =
        std::make_unique<nn::Conv2D>("botta", in_ch, bott_ch, 3, 1, 1, Init::HeNormal, rng);
    bottleneck_.conv_b =
        std::make_unique<nn::Conv2D>("bottb", bott_ch, bott_ch, 3, 1, 1, Init::HeNormal, rng);
    int cur = bott_ch;
    for (int l = kLevels - 1; l >= 0; --l) {
        int out_ch = skip_ch_[l];
        int size = spec_.input_h >> l;
        up_[l] = std::make_unique<nn::BilinearResize>(size, size);
        dec_[l].conv_a = std::make_unique<nn::Conv2D>("dec" + std::to_string(l) + "a",
                                                      cur + skip_ch_[l], out_ch, 3, 1, 1,
                                                      Init::HeNormal, rng);
        dec_[l].conv_b = std::make_unique<nn::Conv2D>("dec" + std::to_string(l) + "b", out_ch,
                                                      out_ch, 3, 1, 1, Init::HeNormal, rng);
        cur = out_ch;
    }
    head_ = std::make_unique<nn::Conv2D>("head", cur, 1, 1, 1, 1, Init::HeNormal, rng);
}

Tensor UNetExtractor::forward(const Tensor& x) {
    if (x.c != spec_.input_ch || x.h != spec_.input_h || x.w != spec_.input_w)
        throw ShapeMismatch("UNetExtractor: bad input shape");
    Tensor t = x;
    for (int l = 0; l < kLevels; ++l) {
        t = enc_[l].run(t);
        skips_[l] = t;
        t = pool_[l].forward(t);
    }
    t = bottleneck_.run(t);
    for (int l = kLevels - 1; l >= 0; --l) {
        t = up_[l]->forward(t);
        t = concat_ch(t, skips_[l]);
        t = dec_[l].run(t);
    }
    return out_act_.forward(head_->forward(t));
}

Tensor UNetExtractor::backward(const Tensor& grad_out) {
    Tensor g = head_->backward(out_act_.backward(grad_out));
    std::array<Tensor, kLevels> skip_grads;
    for (int l = 0; l < kLevels; ++l) {
        g = dec_[l].run_back(g);
        Tensor gu, gs;
        split_ch(g, g.c - skip_ch_[l], gu, gs);
        skip_grads[l] = std::move(gs);
        g = up_[l]->backward(gu);
    }
    g = bottleneck_.run_back(g);
    for (int l = kLevels - 1; l >= 0; --l) {
        g = pool_[l].backward(g);
        for (size_t i = 0; i < g.v.size(); ++i) g.v[i] += skip_grads[l].v[i];
        g = enc_[l].run_back(g);
    }
    return g;
}

void UNetExtractor::collect(std::vector<nn::ParamRef>& out) {
    for (auto& b : enc_) b.collect(out);
    bottleneck_.collect(out);
    for (auto& b : dec_) b.collect(out);
    head_->collect_params(out);
}

// -------------------------------------------------------------- Segmenter

Tensor Segmenter::InvResBlock::run(const Tensor& x) {
    input = x;
    Tensor t = x;
    if (expand) t = expand_act.forward(expand->forward(t));
    t = dw_act.forward(dw->forward(t));
    t = project->forward(t);
    if (residual)
        for (size_t i = 0; i < t.v.size(); ++i) t.v[i] += x.v[i];
    return t;
}

Tensor Segmenter::InvResBlock::run_back(const Tensor& g) {
    Tensor t = project->backward(g);
    t = dw->backward(dw_act.backward(t));
    if (expand) t = expand->backward(expand_act.backward(t));
    if (residual)
        for (size_t i = 0; i < t.v.size(); ++i) t.v[i] += g.v[i];
    return t;
}

void Segmenter::InvResBlock::collect(std::vector<nn::ParamRef>& out) {
    if (expand) expand->collect_params(out);
    dw->collect_params(out);
    project->collect_params(out);
}

Segmenter::Segmenter(ModelSpec spec, Rng& rng) : Network(std::move(spec)) {
    SegmenterLayout lay = segmenter_layout(spec_.scale);
    stem_ = std::make_unique<nn::Conv2D>("stem", spec_.input_ch, lay.stem_ch, 3, 2, 1,
                                         Init::HeNormal, rng);
    int in_ch = lay.stem_ch;
    for (int s = 0; s < 7; ++s) {
        for (int r = 0; r < lay.repeats[s]; ++r) {
            InvResBlock blk;
            int stride = r == 0 ? lay.stride[s] : 1;
            int out_ch = lay.out_ch[s];
            std::string tag = "b" + std::to_string(s) + "_" + std::to_string(r);
            int mid = in_ch * lay.expand[s];
            if (lay.expand[s] != 1)
                blk.expand = std::make_unique<nn::Conv2D>(tag + ".expand", in_ch, mid, 1, 1, 1,
                                                          Init::HeNormal, rng);
            blk.dw = std::make_unique<nn::DepthwiseConv2D>(tag + ".dw", mid, stride,
                                                           Init::HeNormal, rng);
            blk.project = std::make_unique<nn::Conv2D>(tag + ".project", mid, out_ch, 1, 1, 1,
                                                       Init::HeNormal, rng);
            blk.residual = stride == 1 && in_ch == out_ch;
            blocks_.push_back(std::move(blk));
            in_ch = out_ch;
        }
        if (s == lay.low_level_stage)
            low_level_block_ = static_cast<int>(blocks_.size()) - 1;
    }

    int feat = spec_.input_h / 8;
    int backbone_ch = in_ch;
    for (size_t i = 0; i < lay.aspp_dilations.size(); ++i) {
        AsppBranch br;
        int d = lay.aspp_dilations[i];
        br.conv = std::make_unique<nn::Conv2D>("aspp" + std::to_string(i), backbone_ch,
                                               lay.aspp_ch, d == 1 ? 1 : 3, 1, d, Init::HeNormal,
                                               rng);
        aspp_.push_back(std::move(br));
        aspp_branch_ch_.push_back(lay.aspp_ch);
    }
    AsppBranch poolbr;
    poolbr.pooled = true;
    poolbr.conv = std::make_unique<nn::Conv2D>("aspp_pool", backbone_ch, lay.aspp_ch, 1, 1, 1,
                                               Init::HeNormal, rng);
    poolbr.broadcast = std::make_unique<nn::BilinearResize>(feat, feat);
    aspp_.push_back(std::move(poolbr));
    aspp_branch_ch_.push_back(lay.aspp_ch);

    int cat_ch = lay.aspp_ch * static_cast<int>(aspp_.size());
    aspp_merge_ = std::make_unique<nn::Conv2D>("aspp_merge", cat_ch, lay.aspp_ch, 1, 1, 1,
                                               Init::HeNormal, rng);

    int quarter = spec_.input_h / 4;
    dec_up_ = std::make_unique<nn::BilinearResize>(quarter, quarter);
    low_reduce_ = std::make_unique<nn::Conv2D>("low_reduce", lay.out_ch[lay.low_level_stage],
                                               lay.low_reduce_ch, 1, 1, 1, Init::HeNormal, rng);
    dec_conv_ = std::make_unique<nn::Conv2D>("dec_conv", lay.aspp_ch + lay.low_reduce_ch,
                                             lay.dec_ch, 3, 1, 1, Init::HeNormal, rng);
    head_ = std::make_unique<nn::Conv2D>("head", lay.dec_ch, 2, 1, 1, 1, Init::HeNormal, rng);
    head_up_ = std::make_unique<nn::BilinearResize>(spec_.input_h, spec_.input_w);
}

Tensor Segmenter::forward(const Tensor& x) {
    if (x.c != spec_.input_ch || x.h != spec_.input_h || x.w != spec_.input_w)
        throw ShapeMismatch("Segmenter: bad input shape");
    Tensor t = stem_act_.forward(stem_->forward(x));
    for (size_t i = 0; i < blocks_.size(); ++i) {
        t = blocks_[i].run(t);
        if (static_cast<int>(i) == low_level_block_) low_level_ = t;
    }
    // ASPP
    std::vector<Tensor> branch_outs;
    for (auto& br : aspp_) {
        if (br.pooled) {
            Tensor p = br.pool.forward(t);
            p = br.act.forward(br.conv->forward(p));
            branch_outs.push_back(br.broadcast->forward(p));
        } else {
            branch_outs.push_back(br.act.forward(br.conv->forward(t)));
        }
    }
    Tensor cat = branch_outs[0];
    for (size_t i = 1; i < branch_outs.size(); ++i) cat = concat_ch(cat, branch_outs[i]);
    Tensor y = aspp_merge_act_.forward(aspp_merge_->forward(cat));
    // Decoder
    Tensor u = dec_up_->forward(y);
    Tensor ll = low_reduce_act_.forward(low_reduce_->forward(low_level_));
    Tensor d = concat_ch(u, ll);
    d = dec_act_.forward(dec_conv_->forward(d));
    d = head_->forward(d);
    d = head_up_->forward(d);
    return out_act_.forward(d);
}

Tensor Segmenter::backward(const Tensor& grad_out) {
    Tensor g = out_act_.backward(grad_out);
    g = head_up_->backward(g);
    g = head_->backward(g);
    g = dec_conv_->backward(dec_act_.backward(g));
    Tensor gu, gll;
    split_ch(g, g.c - low_reduce_->out_channels(), gu, gll);
    Tensor low_grad = low_reduce_->backward(low_reduce_act_.backward(gll));
    Tensor gy = dec_up_->backward(gu);
    gy = aspp_merge_->backward(aspp_merge_act_.backward(gy));
    // Split the concat grad across branches and sum input contributions.
    Tensor gt;  // grad w.r.t. backbone output
    int offset = 0;
    for (size_t i = 0; i < aspp_.size(); ++i) {
        Tensor gb(aspp_branch_ch_[i], gy.h, gy.w);
        std::memcpy(gb.v.data(), gy.v.data() + static_cast<size_t>(offset) * gy.h * gy.w,
                    gb.v.size() * sizeof(float));
        offset += aspp_branch_ch_[i];
        Tensor gin;
        auto& br = aspp_[i];
        if (br.pooled) {
            Tensor gp = br.broadcast->backward(gb);
            gp = br.conv->backward(br.act.backward(gp));
            gin = br.pool.backward(gp);
        } else {
            gin = br.conv->backward(br.act.backward(gb));
        }
        if (gt.v.empty()) gt = std::move(gin);
        else
            for (size_t k = 0; k < gt.v.size(); ++k) gt.v[k] += gin.v[k];
    }
    for (int i = static_cast<int>(blocks_.size()) - 1; i >= 0; --i) {
        if (i == low_level_block_)
            for (size_t k = 0; k < gt.v.size(); ++k) gt.v[k] += low_grad.v[k];
        gt = blocks_[i].run_back(gt);
    }
    return stem_->backward(stem_act_.backward(gt));
}

void Segmenter::collect(std::vector<nn::ParamRef>& out) {
    stem_->collect_params(out);
    for (auto& b : blocks_) b.collect(out);
    for (auto& br : aspp_) br.conv->collect_params(out);
    aspp_merge_->collect_params(out);
    low_reduce_->collect_params(out);
    dec_conv_->collect_params(out);
    head_->collect_params(out);
}

// ------------------------------------------------------ PatchDiscriminator

PatchDiscriminator::PatchDiscriminator(ModelSpec spec, Rng& rng) : Network(std::move(spec)) {
    int in_ch = spec_.input_ch;
    for (size_t i = 0; i < spec_.layers.size(); ++i) {
        const auto& l = spec_.layers[i];
        convs_.push_back(std::make_unique<nn::Conv2D>("d_conv" + std::to_string(i), in_ch,
                                                      l.out_ch, l.kernel, l.stride, 1,
                                                      Init::TruncatedNormal002, rng));
        if (i + 1 < spec_.layers.size()) acts_.emplace_back(0.2f);
        in_ch = l.out_ch;
    }
}

Tensor PatchDiscriminator::forward(const Tensor& x) {
    if (x.c != spec_.input_ch) throw ShapeMismatch("PatchDiscriminator: bad input channels");
    Tensor t = x;
    for (size_t i = 0; i < convs_.size(); ++i) {
        t = convs_[i]->forward(t);
        if (i + 1 < convs_.size()) t = acts_[i].forward(t);
    }
    return out_act_.forward(t);
}

Tensor PatchDiscriminator::backward(const Tensor& grad_out) {
    Tensor g = out_act_.backward(grad_out);
    for (int i = static_cast<int>(convs_.size()) - 1; i >= 0; --i) {
        g = convs_[i]->backward(g);
        if (i > 0) g = acts_[i - 1].backward(g);
    }
    return g;
}

void PatchDiscriminator::collect(std::vector<nn::ParamRef>& out) {
    for (auto& c : convs_) c->collect_params(out);
}

std::unique_ptr<Network> make_network(const ModelSpec& spec, Rng& rng) {
    switch (spec.kind) {
        case ModelKind::Extractor: return std::make_unique<UNetExtractor>(spec, rng);
        case ModelKind::Segmenter: return std::make_unique<Segmenter>(spec, rng);
        case ModelKind::Discriminator: return std::make_unique<PatchDiscriminator>(spec, rng);
    }
    throw ConfigError("make_network: bad kind");
}

// -------------------------------------------------------------- checkpoint

namespace {
constexpr char kMagic[] = "POSALCKP";
constexpr uint32_t kVersion = 1;

template <typename T>
void write_pod(std::ostream& os, T v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

template <typename T>
T read_pod(std::istream& is) {
    T v;
    is.read(reinterpret_cast<char*>(&v), sizeof(v));
    if (!is) throw DataError("checkpoint: truncated file");
    return v;
}
}  // namespace

void save_checkpoint(Network& net, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("checkpoint: cannot open " + path + " for writing");
    os.write(kMagic, 8);
    write_pod(os, kVersion);
    nlohmann::json header{{"kind", to_string(net.spec().kind)},
                          {"scale", to_string(net.spec().scale)},
                          {"training_step", net.training_step}};
    std::string hs = header.dump();
    write_pod(os, static_cast<uint32_t>(hs.size()));
    os.write(hs.data(), static_cast<std::streamsize>(hs.size()));
    auto params = net.params();
    write_pod(os, static_cast<uint32_t>(params.size()));
    for (auto& p : params) {
        write_pod(os, static_cast<uint32_t>(p.name.size()));
        os.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
        write_pod(os, static_cast<uint64_t>(p.value->size()));
        os.write(reinterpret_cast<const char*>(p.value->data()),
                 static_cast<std::streamsize>(p.value->size() * sizeof(float)));
    }
    if (!os) throw DataError("checkpoint: write failed for " + path);
}

std::unique_ptr<Network> load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("checkpoint: cannot open " + path);
    char magic[8];
    is.read(magic, 8);
    if (!is || std::memcmp(magic, kMagic, 8) != 0)
        throw DataError("checkpoint: bad magic in " + path);
    uint32_t version = read_pod<uint32_t>(is);
    if (version != kVersion) throw DataError("checkpoint: unsupported version");
    uint32_t hlen = read_pod<uint32_t>(is);
    std::string hs(hlen, '\0');
    is.read(hs.data(), hlen);
    auto header = nlohmann::json::parse(hs);
    ModelKind kind = model_kind_from_string(header.at("kind"));
    Scale scale = scale_from_string(header.at("scale"));
    ModelSpec spec;
    switch (kind) {
        case ModelKind::Extractor: spec = build_extractor(scale); break;
        case ModelKind::Segmenter: spec = build_segmenter(scale); break;
        case ModelKind::Discriminator: spec = build_discriminator(scale); break;
    }
    Rng rng(0);
    auto net = make_network(spec, rng);
    net->training_step = header.at("training_step");
    auto params = net->params();
    uint32_t n = read_pod<uint32_t>(is);
    if (n != params.size()) throw DataError("checkpoint: parameter count mismatch");
    for (auto& p : params) {
        uint32_t nlen = read_pod<uint32_t>(is);
        std::string name(nlen, '\0');
        is.read(name.data(), nlen);
        if (name != p.name) throw DataError("checkpoint: parameter name mismatch: " + name);
        uint64_t count = read_pod<uint64_t>(is);
        if (count != p.value->size()) throw DataError("checkpoint: size mismatch for " + name);
        is.read(reinterpret_cast<char*>(p.value->data()),
                static_cast<std::streamsize>(count * sizeof(float)));
        if (!is) throw DataError("checkpoint: truncated parameter data");
    }
    return net;
}

// -------------------------------------------------------------- optimizers

Adam::Adam(std::vector<nn::ParamRef> params, double beta1, double beta2, double eps)
    : params_(std::move(params)), beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (auto& p : params_) {
        m_.emplace_back(p.value->size(), 0.f);
        v_.emplace_back(p.value->size(), 0.f);
    }
}

void Adam::step(double lr, double grad_scale) {
    ++t_;
    double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (size_t i = 0; i < params_.size(); ++i) {
        auto& val = *params_[i].value;
        auto& grad = *params_[i].grad;
        auto& m = m_[i];
        auto& v = v_[i];
        for (size_t k = 0; k < val.size(); ++k) {
            double g = grad[k] * grad_scale;
            m[k] = static_cast<float>(beta1_ * m[k] + (1.0 - beta1_) * g);
            v[k] = static_cast<float>(beta2_ * v[k] + (1.0 - beta2_) * g * g);
            double mhat = m[k] / bc1;
            double vhat = v[k] / bc2;
            val[k] -= static_cast<float>(lr * mhat / (std::sqrt(vhat) + eps_));
        }
    }
}

void SGD::step(double lr, double grad_scale) {
    for (auto& p : params_) {
        auto& val = *p.value;
        auto& grad = *p.grad;
        for (size_t k = 0; k < val.size(); ++k)
            val[k] -= static_cast<float>(lr * grad[k] * grad_scale);
    }
}

}  // namespace posal::models
