#pragma once

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "resmatch/core.hpp"
#include "resmatch/rng.hpp"
#include "resmatch/ssl.hpp"

namespace resmatch {

// Token -> index table. Index 0 is reserved for out-of-vocabulary tokens,
// so any expression can be embedded without error. Token order is
// lexicographic, which makes the table a pure function of the corpus.
class Vocabulary {
public:
    Vocabulary() { tokens_.push_back("<unk>"); }

    static Vocabulary build(const std::vector<Expression>& corpus) {
        std::set<std::string> uniq;
        for (const Expression& e : corpus)
            uniq.insert(e.tokens.begin(), e.tokens.end());
        Vocabulary v;
        for (const std::string& t : uniq) {
            v.index_[t] = static_cast<int>(v.tokens_.size());
            v.tokens_.push_back(t);
        }
        return v;
    }

    static Vocabulary from_tokens(const std::vector<std::string>& tokens) {
        // tokens as serialized: position 0 must be the unknown marker
        if (tokens.empty() || tokens[0] != "<unk>")
            throw DataError("vocabulary list must start with <unk>");
        Vocabulary v;
        for (std::size_t i = 1; i < tokens.size(); ++i) {
            v.index_[tokens[i]] = static_cast<int>(i);
            v.tokens_.push_back(tokens[i]);
        }
        return v;
    }

    int lookup(const std::string& token) const {
        auto it = index_.find(token);
        return it == index_.end() ? 0 : it->second;
    }

    int size() const { return static_cast<int>(tokens_.size()); }
    const std::vector<std::string>& tokens() const { return tokens_; }

    bool operator==(const Vocabulary& other) const {
        return tokens_ == other.tokens_;
    }

private:
    std::map<std::string, int> index_;
    std::vector<std::string> tokens_;
};

struct ModelConfig {
    // encoder channel widths (each stage halves the resolution)
    int enc1 = 12, enc2 = 16, enc3 = 24;
    // decoder channel widths (each stage doubles the resolution)
    int dec1 = 20, dec2 = 14, dec3 = 10;
    int text_dim = 24;          // must equal enc3 for the fusion inner product
    int parameter_cap = 500000;

    void validate() const {
        for (int c : {enc1, enc2, enc3, dec1, dec2, dec3, text_dim})
            if (c <= 0) throw ConfigError("model channel widths must be positive");
        if (text_dim != enc3)
            throw ConfigError("text embedding width must match the deepest encoder stage");
    }

    bool operator==(const ModelConfig& o) const {
        return enc1 == o.enc1 && enc2 == o.enc2 && enc3 == o.enc3 &&
               dec1 == o.dec1 && dec2 == o.dec2 && dec3 == o.dec3 &&
               text_dim == o.text_dim && parameter_cap == o.parameter_cap;
    }
};

enum class ModelMode { train, eval };

// Minimal adapter surface for plugging in an external backbone. The SSL
// losses only ever see PredictionMaps, so any implementation of this
// interface can drive them.
class ResModelInterface {
public:
    virtual ~ResModelInterface() = default;
    virtual PredictionMap forward(const Image& image,
                                  const Expression& expression) = 0;
    virtual std::size_t parameter_count() const = 0;
    virtual void set_mode(ModelMode mode) = 0;
    virtual ModelMode mode() const = 0;
};

namespace detail {

// Dense C x H x W activation block.
struct Tensor {
    int ch = 0, h = 0, w = 0;
    std::vector<double> v;

    static Tensor zeros(int c, int hh, int ww) {
        Tensor t;
        t.ch = c;
        t.h = hh;
        t.w = ww;
        t.v.assign(static_cast<std::size_t>(c) * hh * ww, 0.0);
        return t;
    }
    double* plane(int c) { return v.data() + static_cast<std::size_t>(c) * h * w; }
    const double* plane(int c) const {
        return v.data() + static_cast<std::size_t>(c) * h * w;
    }
};

struct ConvSpec {
    int in_ch = 0, out_ch = 0, kernel = 3, stride = 1, pad = 1;
    std::size_t w_off = 0, b_off = 0;

    std::size_t weight_count() const {
        return static_cast<std::size_t>(out_ch) * in_ch * kernel * kernel;
    }
    int out_size(int in) const {
        return (in + 2 * pad - kernel) / stride + 1;
    }
};

inline void conv_forward(const ConvSpec& s, const double* params,
                         const Tensor& in, Tensor& out) {
    const double* w = params + s.w_off;
    const double* b = params + s.b_off;
    for (int oc = 0; oc < s.out_ch; ++oc) {
        double* op = out.plane(oc);
        for (int oy = 0; oy < out.h; ++oy) {
            for (int ox = 0; ox < out.w; ++ox) {
                double acc = b[oc];
                for (int ic = 0; ic < s.in_ch; ++ic) {
                    const double* ip = in.plane(ic);
                    const double* wp =
                        w + ((static_cast<std::size_t>(oc) * s.in_ch + ic) *
                             s.kernel) * s.kernel;
                    for (int ky = 0; ky < s.kernel; ++ky) {
                        int iy = oy * s.stride + ky - s.pad;
                        if (iy < 0 || iy >= in.h) continue;
                        const double* row = ip + static_cast<std::size_t>(iy) * in.w;
                        const double* wrow = wp + static_cast<std::size_t>(ky) * s.kernel;
                        for (int kx = 0; kx < s.kernel; ++kx) {
                            int ix = ox * s.stride + kx - s.pad;
                            if (ix < 0 || ix >= in.w) continue;
                            acc += wrow[kx] * row[ix];
                        }
                    }
                }
                op[static_cast<std::size_t>(oy) * out.w + ox] = acc;
            }
        }
    }
}

// Accumulates dW/db into grad and writes dIn (when din != nullptr).
inline void conv_backward(const ConvSpec& s, const double* params,
                          const Tensor& in, const Tensor& dout, double* grad,
                          Tensor* din) {
    const double* w = params + s.w_off;
    double* dw = grad + s.w_off;
    double* db = grad + s.b_off;
    for (int oc = 0; oc < s.out_ch; ++oc) {
        const double* dop = dout.plane(oc);
        for (int oy = 0; oy < dout.h; ++oy) {
            for (int ox = 0; ox < dout.w; ++ox) {
                double g = dop[static_cast<std::size_t>(oy) * dout.w + ox];
                if (g == 0.0) continue;
                db[oc] += g;
                for (int ic = 0; ic < s.in_ch; ++ic) {
                    const double* ip = in.plane(ic);
                    double* dip = din ? din->plane(ic) : nullptr;
                    std::size_t base =
                        ((static_cast<std::size_t>(oc) * s.in_ch + ic) *
                         s.kernel) * s.kernel;
                    for (int ky = 0; ky < s.kernel; ++ky) {
                        int iy = oy * s.stride + ky - s.pad;
                        if (iy < 0 || iy >= in.h) continue;
                        const double* row = ip + static_cast<std::size_t>(iy) * in.w;
                        double* drow =
                            dip ? dip + static_cast<std::size_t>(iy) * in.w : nullptr;
                        for (int kx = 0; kx < s.kernel; ++kx) {
                            int ix = ox * s.stride + kx - s.pad;
                            if (ix < 0 || ix >= in.w) continue;
                            std::size_t wi = base + static_cast<std::size_t>(ky) * s.kernel + kx;
                            dw[wi] += g * row[ix];
                            if (drow) drow[ix] += w[wi] * g;
                        }
                    }
                }
            }
        }
    }
}

inline void relu_inplace(Tensor& t) {
    for (double& x : t.v)
        if (x < 0.0) x = 0.0;
}

// d(post)/d(pre) mask applied in place on dpost, using the pre-activation.
inline void relu_backward(const Tensor& pre, Tensor& dpost) {
    for (std::size_t i = 0; i < pre.v.size(); ++i)
        if (pre.v[i] <= 0.0) dpost.v[i] = 0.0;
}

inline int nearest_src(int dst, int dst_size, int src_size) {
    int s = static_cast<int>((static_cast<long long>(dst) * src_size) / dst_size);
    return std::min(s, src_size - 1);
}

inline Tensor upsample_nearest(const Tensor& in, int th, int tw) {
    Tensor out = Tensor::zeros(in.ch, th, tw);
    for (int c = 0; c < in.ch; ++c) {
        const double* ip = in.plane(c);
        double* op = out.plane(c);
        for (int y = 0; y < th; ++y) {
            int sy = nearest_src(y, th, in.h);
            for (int x = 0; x < tw; ++x)
                op[static_cast<std::size_t>(y) * tw + x] =
                    ip[static_cast<std::size_t>(sy) * in.w + nearest_src(x, tw, in.w)];
        }
    }
    return out;
}

inline Tensor upsample_nearest_backward(const Tensor& dout, int sh, int sw) {
    Tensor din = Tensor::zeros(dout.ch, sh, sw);
    for (int c = 0; c < dout.ch; ++c) {
        const double* dop = dout.plane(c);
        double* dip = din.plane(c);
        for (int y = 0; y < dout.h; ++y) {
            int sy = nearest_src(y, dout.h, sh);
            for (int x = 0; x < dout.w; ++x)
                dip[static_cast<std::size_t>(sy) * sw + nearest_src(x, dout.w, sw)] +=
                    dop[static_cast<std::size_t>(y) * dout.w + x];
        }
    }
    return din;
}

}  // namespace detail

// All intermediate activations of one forward pass, kept so the backward
// pass can run without recomputation. One cache per sample in a batch.
struct ForwardCache {
    std::vector<int> token_ids;
    std::vector<double> text;           // pooled text vector
    detail::Tensor input;               // image planes
    detail::Tensor pre1, post1;
    detail::Tensor pre2, post2;
    detail::Tensor pre3, post3;         // post3 feeds both fusion and decoder
    detail::Tensor fused;               // post3 + fusion channel
    detail::Tensor pre4, post4, up4;
    detail::Tensor pre5, post5, up5;
    detail::Tensor pre6, post6, up6;
    detail::Tensor logits;              // 2 x H x W
    PredictionMap probs;
};

// Small referring-segmentation network trained by explicit backprop:
// three strided conv stages, text pooled from learned token embeddings and
// fused as an inner-product channel at the bottleneck, three upsampling
// conv stages back to input resolution, per-pixel two-class softmax.
// Parameters live in one flat vector so the optimizer and checkpoints
// treat the model as a plain array of doubles.
class ToyResModel : public ResModelInterface {
public:
    ToyResModel(ModelConfig config, Vocabulary vocab, std::uint64_t init_seed)
        : config_(config), vocab_(std::move(vocab)) {
        config_.validate();
        layout();
        if (params_.size() > static_cast<std::size_t>(config_.parameter_cap))
            throw ConfigError("model has " + std::to_string(params_.size()) +
                              " parameters, above the cap of " +
                              std::to_string(config_.parameter_cap));
        init_params(init_seed);
    }

    PredictionMap forward(const Image& image,
                          const Expression& expression) override {
        ForwardCache cache;
        run_forward(image, expression, cache);
        return cache.probs;
    }

    PredictionMap forward_cached(const Image& image,
                                 const Expression& expression,
                                 ForwardCache& cache) const {
        run_forward(image, expression, cache);
        return cache.probs;
    }

    // Backpropagates d(loss)/d(probabilities) through the whole network,
    // accumulating parameter gradients into `grad` (same layout and length
    // as parameters()).
    void backward(const ForwardCache& cache, const PredictionGradient& dprob,
                  std::vector<double>& grad) const {
        if (grad.size() != params_.size())
            throw StructuralError("gradient buffer length mismatch");
        if (dprob.height != cache.probs.height ||
            dprob.width != cache.probs.width)
            throw StructuralError("probability gradient shape mismatch");
        const double* p = params_.data();
        double* g = grad.data();

        // softmax jacobian: dz_c = p_c * (dp_c - sum_k p_k dp_k)
        int H = cache.probs.height, W = cache.probs.width;
        detail::Tensor dlogits = detail::Tensor::zeros(2, H, W);
        for (std::size_t i = 0; i < cache.probs.pixel_count(); ++i) {
            double pf = cache.probs.fg[i], pb = cache.probs.bg[i];
            double gf = dprob.fg[i], gb = dprob.bg[i];
            double s = gf * pf + gb * pb;
            dlogits.v[i] = pf * (gf - s);
            dlogits.v[cache.probs.pixel_count() + i] = pb * (gb - s);
        }

        detail::Tensor dup6 = detail::Tensor::zeros(cache.up6.ch, cache.up6.h,
                                                    cache.up6.w);
        detail::conv_backward(head_, p, cache.up6, dlogits, g, &dup6);

        detail::Tensor dpost6 =
            detail::upsample_nearest_backward(dup6, cache.post6.h, cache.post6.w);
        detail::relu_backward(cache.pre6, dpost6);
        detail::Tensor dup5 = detail::Tensor::zeros(cache.up5.ch, cache.up5.h,
                                                    cache.up5.w);
        detail::conv_backward(dec3_, p, cache.up5, dpost6, g, &dup5);

        detail::Tensor dpost5 =
            detail::upsample_nearest_backward(dup5, cache.post5.h, cache.post5.w);
        detail::relu_backward(cache.pre5, dpost5);
        detail::Tensor dup4 = detail::Tensor::zeros(cache.up4.ch, cache.up4.h,
                                                    cache.up4.w);
        detail::conv_backward(dec2_, p, cache.up4, dpost5, g, &dup4);

        detail::Tensor dpost4 =
            detail::upsample_nearest_backward(dup4, cache.post4.h, cache.post4.w);
        detail::relu_backward(cache.pre4, dpost4);
        detail::Tensor dfused = detail::Tensor::zeros(
            cache.fused.ch, cache.fused.h, cache.fused.w);
        detail::conv_backward(dec1_, p, cache.fused, dpost4, g, &dfused);

        // split the fused gradient: channels [0, enc3) flow straight into
        // the encoder features, the last channel is the fusion map
        int C = config_.enc3;
        detail::Tensor dpost3 =
            detail::Tensor::zeros(C, cache.post3.h, cache.post3.w);
        std::copy(dfused.v.begin(),
                  dfused.v.begin() +
                      static_cast<std::ptrdiff_t>(dpost3.v.size()),
                  dpost3.v.begin());
        const double* dfuse_map = dfused.plane(C);
        std::size_t plane_n =
            static_cast<std::size_t>(cache.post3.h) * cache.post3.w;
        std::vector<double> dtext(static_cast<std::size_t>(config_.text_dim), 0.0);
        for (int c = 0; c < C; ++c) {
            double* dp3 = dpost3.plane(c);
            const double* f3 = cache.post3.plane(c);
            double t = cache.text[static_cast<std::size_t>(c)];
            double acc = 0.0;
            for (std::size_t i = 0; i < plane_n; ++i) {
                dp3[i] += dfuse_map[i] * t;
                acc += dfuse_map[i] * f3[i];
            }
            dtext[static_cast<std::size_t>(c)] = acc;
        }

        // embedding rows: text vector is the mean over token embeddings
        double inv_tok = 1.0 / static_cast<double>(cache.token_ids.size());
        for (int tok : cache.token_ids) {
            double* row = g + emb_off_ +
                          static_cast<std::size_t>(tok) * config_.text_dim;
            for (int c = 0; c < config_.text_dim; ++c)
                row[c] += dtext[static_cast<std::size_t>(c)] * inv_tok;
        }

        detail::relu_backward(cache.pre3, dpost3);
        detail::Tensor dpost2 = detail::Tensor::zeros(
            cache.post2.ch, cache.post2.h, cache.post2.w);
        detail::conv_backward(enc3_, p, cache.post2, dpost3, g, &dpost2);

        detail::relu_backward(cache.pre2, dpost2);
        detail::Tensor dpost1 = detail::Tensor::zeros(
            cache.post1.ch, cache.post1.h, cache.post1.w);
        detail::conv_backward(enc2_, p, cache.post1, dpost2, g, &dpost1);

        detail::relu_backward(cache.pre1, dpost1);
        detail::conv_backward(enc1_, p, cache.input, dpost1, g, nullptr);
    }

    std::vector<double>& parameters() { return params_; }
    const std::vector<double>& parameters() const { return params_; }
    std::size_t parameter_count() const override { return params_.size(); }
    const Vocabulary& vocabulary() const { return vocab_; }
    const ModelConfig& config() const { return config_; }

    void set_mode(ModelMode mode) override { mode_ = mode; }
    ModelMode mode() const override { return mode_; }

private:
    void layout() {
        std::size_t off = 0;
        auto add_conv = [&](int in_ch, int out_ch, int kernel, int stride,
                            int pad) {
            detail::ConvSpec s;
            s.in_ch = in_ch;
            s.out_ch = out_ch;
            s.kernel = kernel;
            s.stride = stride;
            s.pad = pad;
            s.w_off = off;
            off += s.weight_count();
            s.b_off = off;
            off += static_cast<std::size_t>(out_ch);
            return s;
        };
        enc1_ = add_conv(5, config_.enc1, 3, 2, 1);  // RGB + 2 coordinate ramps
        enc2_ = add_conv(config_.enc1, config_.enc2, 3, 2, 1);
        enc3_ = add_conv(config_.enc2, config_.enc3, 3, 2, 1);
        dec1_ = add_conv(config_.enc3 + 1, config_.dec1, 3, 1, 1);
        dec2_ = add_conv(config_.dec1, config_.dec2, 3, 1, 1);
        dec3_ = add_conv(config_.dec2, config_.dec3, 3, 1, 1);
        head_ = add_conv(config_.dec3, 2, 1, 1, 0);
        emb_off_ = off;
        off += static_cast<std::size_t>(vocab_.size()) * config_.text_dim;
        params_.assign(off, 0.0);
    }

    void init_params(std::uint64_t seed) {
        Rng rng = make_rng(seed, "model-init");
        auto he_fill = [&](const detail::ConvSpec& s) {
            double stddev =
                std::sqrt(2.0 / (static_cast<double>(s.in_ch) * s.kernel * s.kernel));
            std::normal_distribution<double> dist(0.0, stddev);
            for (std::size_t i = 0; i < s.weight_count(); ++i)
                params_[s.w_off + i] = dist(rng);
            // biases stay zero
        };
        for (const auto* s : {&enc1_, &enc2_, &enc3_, &dec1_, &dec2_, &dec3_, &head_})
            he_fill(*s);
        std::normal_distribution<double> emb_dist(0.0, 0.3);
        for (std::size_t i = emb_off_; i < params_.size(); ++i)
            params_[i] = emb_dist(rng);
    }

    void run_forward(const Image& image, const Expression& expression,
                     ForwardCache& cache) const {
        if (image.height <= 7 || image.width <= 7)
            throw StructuralError("input image too small for three 2x downsamplings");
        const double* p = params_.data();

        cache.token_ids.clear();
        for (const std::string& t : expression.tokens)
            cache.token_ids.push_back(vocab_.lookup(t));
        cache.text.assign(static_cast<std::size_t>(config_.text_dim), 0.0);
        for (int tok : cache.token_ids) {
            const double* row = p + emb_off_ +
                                static_cast<std::size_t>(tok) * config_.text_dim;
            for (int c = 0; c < config_.text_dim; ++c)
                cache.text[static_cast<std::size_t>(c)] += row[c];
        }
        double inv_tok = 1.0 / static_cast<double>(cache.token_ids.size());
        for (double& t : cache.text) t *= inv_tok;

        // Image planes plus two coordinate ramps in [-0.5, 0.5]; the ramps
        // give the otherwise translation-equivariant stack access to
        // absolute position, which positional expressions need.
        cache.input = detail::Tensor::zeros(5, image.height, image.width);
        std::copy(image.pixels.begin(), image.pixels.end(),
                  cache.input.v.begin());
        double* xr = cache.input.plane(3);
        double* yr = cache.input.plane(4);
        for (int y = 0; y < image.height; ++y) {
            double yv = image.height > 1
                            ? static_cast<double>(y) / (image.height - 1) - 0.5
                            : 0.0;
            for (int x = 0; x < image.width; ++x) {
                double xv = image.width > 1
                                ? static_cast<double>(x) / (image.width - 1) - 0.5
                                : 0.0;
                xr[static_cast<std::size_t>(y) * image.width + x] = xv;
                yr[static_cast<std::size_t>(y) * image.width + x] = yv;
            }
        }

        auto stage = [&](const detail::ConvSpec& s, const detail::Tensor& in,
                         detail::Tensor& pre, detail::Tensor& post) {
            pre = detail::Tensor::zeros(s.out_ch, s.out_size(in.h), s.out_size(in.w));
            detail::conv_forward(s, p, in, pre);
            post = pre;
            detail::relu_inplace(post);
        };
        stage(enc1_, cache.input, cache.pre1, cache.post1);
        stage(enc2_, cache.post1, cache.pre2, cache.post2);
        stage(enc3_, cache.post2, cache.pre3, cache.post3);

        // fusion channel: per-location inner product with the text vector
        int fh = cache.post3.h, fw = cache.post3.w;
        cache.fused = detail::Tensor::zeros(config_.enc3 + 1, fh, fw);
        std::copy(cache.post3.v.begin(), cache.post3.v.end(),
                  cache.fused.v.begin());
        double* fuse_map = cache.fused.plane(config_.enc3);
        std::size_t plane_n = static_cast<std::size_t>(fh) * fw;
        for (int c = 0; c < config_.enc3; ++c) {
            const double* f3 = cache.post3.plane(c);
            double t = cache.text[static_cast<std::size_t>(c)];
            for (std::size_t i = 0; i < plane_n; ++i) fuse_map[i] += f3[i] * t;
        }

        stage(dec1_, cache.fused, cache.pre4, cache.post4);
        cache.up4 = detail::upsample_nearest(cache.post4, cache.post2.h,
                                             cache.post2.w);
        stage(dec2_, cache.up4, cache.pre5, cache.post5);
        cache.up5 = detail::upsample_nearest(cache.post5, cache.post1.h,
                                             cache.post1.w);
        stage(dec3_, cache.up5, cache.pre6, cache.post6);
        cache.up6 =
            detail::upsample_nearest(cache.post6, image.height, image.width);

        cache.logits = detail::Tensor::zeros(2, image.height, image.width);
        detail::conv_forward(head_, p, cache.up6, cache.logits);

        cache.probs = PredictionMap::uniform(image.height, image.width, 0.5);
        std::size_t n = cache.probs.pixel_count();
        for (std::size_t i = 0; i < n; ++i) {
            double z0 = cache.logits.v[i], z1 = cache.logits.v[n + i];
            double m = std::max(z0, z1);
            double e0 = std::exp(z0 - m), e1 = std::exp(z1 - m);
            cache.probs.fg[i] = e0 / (e0 + e1);
            cache.probs.bg[i] = e1 / (e0 + e1);
        }
    }

    ModelConfig config_;
    Vocabulary vocab_;
    ModelMode mode_ = ModelMode::train;
    detail::ConvSpec enc1_, enc2_, enc3_, dec1_, dec2_, dec3_, head_;
    std::size_t emb_off_ = 0;
    std::vector<double> params_;
};

// Decoupled-weight-decay Adam. Moment buffers match the parameter layout;
// step() is the only mutating entry point so optimizer state serializes as
// two flat arrays plus the step counter.
struct AdamW {
    double lr = 1e-5;
    double beta1 = 0.9, beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
    std::vector<double> m, v;
    std::uint64_t t = 0;

    void step(std::vector<double>& params, const std::vector<double>& grad) {
        if (params.size() != grad.size())
            throw StructuralError("optimizer gradient length mismatch");
        if (m.empty()) {
            m.assign(params.size(), 0.0);
            v.assign(params.size(), 0.0);
        }
        if (m.size() != params.size())
            throw StructuralError("optimizer state length mismatch");
        ++t;
        double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
        double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
        for (std::size_t i = 0; i < params.size(); ++i) {
            m[i] = beta1 * m[i] + (1.0 - beta1) * grad[i];
            v[i] = beta2 * v[i] + (1.0 - beta2) * grad[i] * grad[i];
            double mhat = m[i] / bc1;
            double vhat = v[i] / bc2;
            params[i] -=
                lr * (mhat / (std::sqrt(vhat) + eps) + weight_decay * params[i]);
        }
    }
};

// Versioned binary snapshot of everything needed to resume training
// bit-exactly: parameters, optimizer moments, vocabulary, the structural
// model config, a hash of the run config, and the next epoch index.
struct Checkpoint {
    static constexpr char kMagic[9] = "RESMCKPT";
    static constexpr std::uint32_t kVersion = 1;

    std::uint64_t config_hash = 0;
    ModelConfig model_config;
    std::vector<std::string> vocab_tokens;
    std::vector<double> params;
    std::vector<double> adam_m, adam_v;
    std::uint64_t adam_t = 0;
    std::uint32_t next_epoch = 0;

    void save(const std::string& path) const {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        if (!out) throw DataError("cannot write checkpoint: " + path);
        out.write(kMagic, 8);
        write_u32(out, kVersion);
        write_u64(out, config_hash);
        for (int v : {model_config.enc1, model_config.enc2, model_config.enc3,
                      model_config.dec1, model_config.dec2, model_config.dec3,
                      model_config.text_dim, model_config.parameter_cap})
            write_u32(out, static_cast<std::uint32_t>(v));
        write_u32(out, static_cast<std::uint32_t>(vocab_tokens.size()));
        for (const std::string& t : vocab_tokens) {
            write_u32(out, static_cast<std::uint32_t>(t.size()));
            out.write(t.data(), static_cast<std::streamsize>(t.size()));
        }
        write_doubles(out, params);
        write_doubles(out, adam_m);
        write_doubles(out, adam_v);
        write_u64(out, adam_t);
        write_u32(out, next_epoch);
        if (!out) throw DataError("checkpoint write failed: " + path);
    }

    static Checkpoint load(const std::string& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw DataError("cannot open checkpoint: " + path);
        char magic[8];
        in.read(magic, 8);
        if (!in || std::memcmp(magic, kMagic, 8) != 0)
            throw DataError("not a checkpoint file: " + path);
        if (read_u32(in) != kVersion)
            throw DataError("unsupported checkpoint version in " + path);
        Checkpoint c;
        c.config_hash = read_u64(in);
        c.model_config.enc1 = static_cast<int>(read_u32(in));
        c.model_config.enc2 = static_cast<int>(read_u32(in));
        c.model_config.enc3 = static_cast<int>(read_u32(in));
        c.model_config.dec1 = static_cast<int>(read_u32(in));
        c.model_config.dec2 = static_cast<int>(read_u32(in));
        c.model_config.dec3 = static_cast<int>(read_u32(in));
        c.model_config.text_dim = static_cast<int>(read_u32(in));
        c.model_config.parameter_cap = static_cast<int>(read_u32(in));
        std::uint32_t vocab_n = read_u32(in);
        c.vocab_tokens.reserve(vocab_n);
        for (std::uint32_t i = 0; i < vocab_n; ++i) {
            std::uint32_t len = read_u32(in);
            std::string t(len, '\0');
            in.read(t.data(), static_cast<std::streamsize>(len));
            c.vocab_tokens.push_back(std::move(t));
        }
        c.params = read_doubles(in);
        c.adam_m = read_doubles(in);
        c.adam_v = read_doubles(in);
        c.adam_t = read_u64(in);
        c.next_epoch = read_u32(in);
        if (!in) throw DataError("truncated checkpoint: " + path);
        return c;
    }

private:
    static void write_u32(std::ostream& out, std::uint32_t v) {
        out.write(reinterpret_cast<const char*>(&v), sizeof v);
    }
    static void write_u64(std::ostream& out, std::uint64_t v) {
        out.write(reinterpret_cast<const char*>(&v), sizeof v);
    }
    static void write_doubles(std::ostream& out, const std::vector<double>& v) {
        write_u64(out, v.size());
        out.write(reinterpret_cast<const char*>(v.data()),
                  static_cast<std::streamsize>(v.size() * sizeof(double)));
    }
    static std::uint32_t read_u32(std::istream& in) {
        std::uint32_t v = 0;
        in.read(reinterpret_cast<char*>(&v), sizeof v);
        return v;
    }
    static std::uint64_t read_u64(std::istream& in) {
        std::uint64_t v = 0;
        in.read(reinterpret_cast<char*>(&v), sizeof v);
        return v;
    }
    static std::vector<double> read_doubles(std::istream& in) {
        std::uint64_t n = read_u64(in);
        std::vector<double> v(n);
        in.read(reinterpret_cast<char*>(v.data()),
                static_cast<std::streamsize>(n * sizeof(double)));
        return v;
    }
};

}  // namespace resmatch
