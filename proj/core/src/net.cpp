#include "sci/net.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "sci/errors.hpp"
#include "sci/rng.hpp"

namespace sci {

namespace {

constexpr double kNormScale = 127.5;

// Planar channel-major buffer: index (c*h + y)*w + x.
struct Volume {
    int ch = 0, h = 0, w = 0;
    std::vector<double> v;

    Volume() = default;
    Volume(int ch_, int h_, int w_)
        : ch(ch_), h(h_), w(w_),
          v(static_cast<std::size_t>(ch_) * h_ * w_, 0.0) {}

    double* plane(int c) { return v.data() + static_cast<std::size_t>(c) * h * w; }
    const double* plane(int c) const {
        return v.data() + static_cast<std::size_t>(c) * h * w;
    }
};

struct PadInfo {
    int top = 0, left = 0, out_h = 0, out_w = 0;
};

PadInfo conv_geometry(const LayerSpec& l, int in_h, int in_w) {
    PadInfo g;
    if (l.padding == Padding::same) {
        g.out_h = (in_h + l.stride - 1) / l.stride;
        g.out_w = (in_w + l.stride - 1) / l.stride;
        const int pad_h =
            std::max(0, (g.out_h - 1) * l.stride + l.kernel_h - in_h);
        const int pad_w =
            std::max(0, (g.out_w - 1) * l.stride + l.kernel_w - in_w);
        g.top = pad_h / 2;
        g.left = pad_w / 2;
    } else {
        g.out_h = (in_h - l.kernel_h) / l.stride + 1;
        g.out_w = (in_w - l.kernel_w) / l.stride + 1;
    }
    return g;
}

void fnv_update(std::uint64_t& h, std::uint64_t value) {
    for (int i = 0; i < 8; ++i) {
        h ^= (value >> (8 * i)) & 0xffu;
        h *= 0x100000001b3ULL;
    }
}

// Per-layer cache for backward passes.
struct Context {
    std::vector<Volume> inputs;             // input of each layer
    std::vector<std::vector<int>> argmax;   // maxpool: flat input index per output
    Volume output;
};

}  // namespace

LayerSpec LayerSpec::Conv(int kh, int kw, int in_c, int out_c, int stride,
                          Padding pad) {
    LayerSpec l;
    l.kind = Kind::conv;
    l.kernel_h = kh;
    l.kernel_w = kw;
    l.in_channels = in_c;
    l.out_channels = out_c;
    l.stride = stride;
    l.padding = pad;
    return l;
}
LayerSpec LayerSpec::Relu() {
    LayerSpec l;
    l.kind = Kind::relu;
    return l;
}
LayerSpec LayerSpec::MaxPool(int window, int stride) {
    LayerSpec l;
    l.kind = Kind::maxpool;
    l.pool = window;
    l.pool_stride = stride;
    return l;
}
LayerSpec LayerSpec::Flatten() {
    LayerSpec l;
    l.kind = Kind::flatten;
    return l;
}
LayerSpec LayerSpec::Dense(int in_w, int out_w) {
    LayerSpec l;
    l.kind = Kind::dense;
    l.in_width = in_w;
    l.out_width = out_w;
    return l;
}

bool NetworkWeights::finite() const {
    for (const ParamTensor& p : params)
        for (double x : p.v)
            if (!std::isfinite(x)) return false;
    return true;
}

std::string arch_string(const NetworkWeights& w) {
    std::ostringstream os;
    os << "in:" << w.input.h << "x" << w.input.w << "x" << w.input.c
       << ";classes:" << w.num_classes;
    for (const LayerSpec& l : w.layers) {
        switch (l.kind) {
            case LayerSpec::Kind::conv:
                os << ";conv:" << l.kernel_h << "x" << l.kernel_w << ","
                   << l.in_channels << ">" << l.out_channels << ",s" << l.stride
                   << (l.padding == Padding::same ? ",same" : ",valid");
                break;
            case LayerSpec::Kind::relu:
                os << ";relu";
                break;
            case LayerSpec::Kind::maxpool:
                os << ";maxpool:" << l.pool << ",s" << l.pool_stride;
                break;
            case LayerSpec::Kind::flatten:
                os << ";flatten";
                break;
            case LayerSpec::Kind::dense:
                os << ";dense:" << l.in_width << ">" << l.out_width;
                break;
        }
    }
    return os.str();
}

std::uint64_t arch_fingerprint(const NetworkWeights& w) {
    const std::string s = arch_string(w);
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

void require_fingerprint(const NetworkWeights& w, std::uint64_t expected) {
    if (arch_fingerprint(w) != expected)
        throw NumericalError("weights fingerprint mismatch: architecture differs");
}

std::pair<LogitVector, ImageTensor> Classifier::logits_and_input_gradient(
    const ImageTensor& img, int class_index) const {
    return {forward_logits(img), input_gradient(img, class_index)};
}

std::vector<LayerSpec> default_architecture(Shape3 input, int num_classes) {
    std::vector<LayerSpec> layers;
    layers.push_back(LayerSpec::Conv(3, 3, input.c, 16));
    layers.push_back(LayerSpec::Relu());
    layers.push_back(LayerSpec::MaxPool());
    layers.push_back(LayerSpec::Conv(3, 3, 16, 32));
    layers.push_back(LayerSpec::Relu());
    layers.push_back(LayerSpec::MaxPool());
    layers.push_back(LayerSpec::Flatten());
    const int flat = (input.h / 2 / 2) * (input.w / 2 / 2) * 32;
    layers.push_back(LayerSpec::Dense(flat, num_classes));
    return layers;
}

NetworkWeights make_weights(std::vector<LayerSpec> layers, Shape3 input,
                            int num_classes) {
    NetworkWeights w;
    w.layers = std::move(layers);
    w.input = input;
    w.num_classes = num_classes;
    for (const LayerSpec& l : w.layers) {
        if (l.kind == LayerSpec::Kind::conv) {
            ParamTensor kernel;
            kernel.dims = {l.out_channels, l.in_channels, l.kernel_h, l.kernel_w};
            kernel.v.assign(static_cast<std::size_t>(l.out_channels) *
                                l.in_channels * l.kernel_h * l.kernel_w,
                            0.0);
            ParamTensor bias;
            bias.dims = {l.out_channels};
            bias.v.assign(l.out_channels, 0.0);
            w.params.push_back(std::move(kernel));
            w.params.push_back(std::move(bias));
        } else if (l.kind == LayerSpec::Kind::dense) {
            ParamTensor mat;
            mat.dims = {l.out_width, l.in_width};
            mat.v.assign(static_cast<std::size_t>(l.out_width) * l.in_width, 0.0);
            ParamTensor bias;
            bias.dims = {l.out_width};
            bias.v.assign(l.out_width, 0.0);
            w.params.push_back(std::move(mat));
            w.params.push_back(std::move(bias));
        }
    }
    // Shape validation happens in the Network constructor.
    Network check{w};
    return w;
}

void he_init(NetworkWeights& w, std::uint64_t seed) {
    Rng rng(Rng::derive(seed, 0x48e5));
    std::size_t p = 0;
    for (const LayerSpec& l : w.layers) {
        if (l.kind == LayerSpec::Kind::conv) {
            const double fan_in =
                static_cast<double>(l.in_channels) * l.kernel_h * l.kernel_w;
            const double sd = std::sqrt(2.0 / fan_in);
            for (double& x : w.params[p].v) x = rng.normal(0.0, sd);
            p += 2;  // bias stays zero
        } else if (l.kind == LayerSpec::Kind::dense) {
            const double sd = std::sqrt(2.0 / static_cast<double>(l.in_width));
            for (double& x : w.params[p].v) x = rng.normal(0.0, sd);
            p += 2;
        }
    }
}

Network::Network(NetworkWeights w) : weights_(std::move(w)) {
    if (weights_.input.c != 1 && weights_.input.c != 3)
        throw std::invalid_argument("Network: input channels must be 1 or 3");
    if (weights_.num_classes < 2)
        throw std::invalid_argument("Network: need at least 2 classes");
    Shape3 s = weights_.input;
    bool flattened = false;
    int param = 0;
    for (const LayerSpec& l : weights_.layers) {
        param_index_.push_back(
            (l.kind == LayerSpec::Kind::conv || l.kind == LayerSpec::Kind::dense)
                ? param
                : -1);
        switch (l.kind) {
            case LayerSpec::Kind::conv: {
                if (flattened || l.in_channels != s.c)
                    throw std::invalid_argument("Network: conv shape mismatch");
                const PadInfo g = conv_geometry(l, s.h, s.w);
                if (g.out_h <= 0 || g.out_w <= 0)
                    throw std::invalid_argument("Network: conv output empty");
                s = {g.out_h, g.out_w, l.out_channels};
                param += 2;
                break;
            }
            case LayerSpec::Kind::relu:
                break;
            case LayerSpec::Kind::maxpool: {
                if (flattened)
                    throw std::invalid_argument("Network: pool after flatten");
                const int oh = (s.h - l.pool) / l.pool_stride + 1;
                const int ow = (s.w - l.pool) / l.pool_stride + 1;
                if (oh <= 0 || ow <= 0)
                    throw std::invalid_argument("Network: pool output empty");
                s = {oh, ow, s.c};
                break;
            }
            case LayerSpec::Kind::flatten:
                s = {1, 1, s.h * s.w * s.c};
                flattened = true;
                break;
            case LayerSpec::Kind::dense: {
                if (s.h * s.w * s.c != l.in_width)
                    throw std::invalid_argument("Network: dense width mismatch");
                s = {1, 1, l.out_width};
                flattened = true;
                param += 2;
                break;
            }
        }
        out_shapes_.push_back(s);
    }
    if (s.h * s.w * s.c != weights_.num_classes)
        throw std::invalid_argument(
            "Network: final layer width must equal num_classes");
    if (static_cast<std::size_t>(param) != weights_.params.size())
        throw std::invalid_argument("Network: parameter tensor count mismatch");
    fingerprint_ = arch_fingerprint(weights_);
}

// Forward/backward engine. Kept out of the Network interface so training can
// reuse it for parameter gradients.
struct NetBackprop {
    const Network& net;

    Volume to_volume(const ImageTensor& img) const {
        const Shape3 in = net.weights_.input;
        if (img.height() != in.h || img.width() != in.w ||
            img.channels() != in.c)
            throw std::invalid_argument("Network: input shape mismatch");
        Volume v(in.c, in.h, in.w);
        for (int c = 0; c < in.c; ++c) {
            double* plane = v.plane(c);
            for (int y = 0; y < in.h; ++y)
                for (int x = 0; x < in.w; ++x)
                    plane[y * in.w + x] =
                        (img.at(y, x, c) - kNormScale) / kNormScale;
        }
        return v;
    }

    void forward(const ImageTensor& img, Context& ctx,
                 std::uint64_t* branch_hash) const {
        Volume cur = to_volume(img);
        const auto& layers = net.weights_.layers;
        ctx.inputs.clear();
        ctx.argmax.assign(layers.size(), {});
        std::uint64_t hash = 0xcbf29ce484222325ULL;
        for (std::size_t li = 0; li < layers.size(); ++li) {
            ctx.inputs.push_back(cur);
            const LayerSpec& l = layers[li];
            switch (l.kind) {
                case LayerSpec::Kind::conv:
                    cur = conv_forward(l, net.param_index_[li], cur);
                    break;
                case LayerSpec::Kind::relu: {
                    for (double& x : cur.v) {
                        if (branch_hash) fnv_update(hash, x > 0.0 ? 1 : 0);
                        x = x > 0.0 ? x : 0.0;
                    }
                    break;
                }
                case LayerSpec::Kind::maxpool:
                    cur = pool_forward(l, cur, ctx.argmax[li], branch_hash, hash);
                    break;
                case LayerSpec::Kind::flatten:
                    cur = Volume{1, 1, cur.ch * cur.h * cur.w};
                    cur.v = ctx.inputs.back().v;
                    break;
                case LayerSpec::Kind::dense:
                    cur = dense_forward(l, net.param_index_[li], cur);
                    break;
            }
            if (!std::all_of(cur.v.begin(), cur.v.end(),
                             [](double x) { return std::isfinite(x); }))
                throw NumericalError("Network: non-finite activations");
        }
        if (branch_hash) *branch_hash = hash;
        ctx.output = std::move(cur);
    }

    Volume conv_forward(const LayerSpec& l, int pi, const Volume& in) const {
        const PadInfo g = conv_geometry(l, in.h, in.w);
        const ParamTensor& kernel = net.weights_.params[pi];
        const ParamTensor& bias = net.weights_.params[pi + 1];
        Volume out(l.out_channels, g.out_h, g.out_w);
        for (int oc = 0; oc < l.out_channels; ++oc) {
            double* op = out.plane(oc);
            const double b = bias.v[oc];
            for (int i = 0; i < g.out_h * g.out_w; ++i) op[i] = b;
            for (int ic = 0; ic < l.in_channels; ++ic) {
                const double* ip = in.plane(ic);
                for (int ky = 0; ky < l.kernel_h; ++ky) {
                    for (int kx = 0; kx < l.kernel_w; ++kx) {
                        const double kw = kernel.v[((static_cast<std::size_t>(oc) *
                                                         l.in_channels +
                                                     ic) *
                                                        l.kernel_h +
                                                    ky) *
                                                       l.kernel_w +
                                                   kx];
                        if (l.stride == 1) {
                            const int iy0 = ky - g.top, ix0 = kx - g.left;
                            const int oy_lo = std::max(0, -iy0);
                            const int oy_hi = std::min(g.out_h, in.h - iy0);
                            const int ox_lo = std::max(0, -ix0);
                            const int ox_hi = std::min(g.out_w, in.w - ix0);
                            for (int oy = oy_lo; oy < oy_hi; ++oy) {
                                double* orow = op + oy * g.out_w;
                                const double* irow =
                                    ip + (oy + iy0) * in.w + ix0;
                                for (int ox = ox_lo; ox < ox_hi; ++ox)
                                    orow[ox] += kw * irow[ox];
                            }
                        } else {
                            for (int oy = 0; oy < g.out_h; ++oy) {
                                const int iy = oy * l.stride + ky - g.top;
                                if (iy < 0 || iy >= in.h) continue;
                                for (int ox = 0; ox < g.out_w; ++ox) {
                                    const int ix = ox * l.stride + kx - g.left;
                                    if (ix < 0 || ix >= in.w) continue;
                                    op[oy * g.out_w + ox] +=
                                        kw * ip[iy * in.w + ix];
                                }
                            }
                        }
                    }
                }
            }
        }
        return out;
    }

    Volume pool_forward(const LayerSpec& l, const Volume& in,
                        std::vector<int>& argmax, std::uint64_t* branch_hash,
                        std::uint64_t& hash) const {
        const int oh = (in.h - l.pool) / l.pool_stride + 1;
        const int ow = (in.w - l.pool) / l.pool_stride + 1;
        Volume out(in.ch, oh, ow);
        argmax.resize(out.v.size());
        std::size_t oi = 0;
        for (int c = 0; c < in.ch; ++c) {
            const double* ip = in.plane(c);
            double* op = out.plane(c);
            for (int oy = 0; oy < oh; ++oy) {
                for (int ox = 0; ox < ow; ++ox) {
                    int best = -1;
                    double bv = -std::numeric_limits<double>::infinity();
                    for (int py = 0; py < l.pool; ++py) {
                        const int iy = oy * l.pool_stride + py;
                        for (int px = 0; px < l.pool; ++px) {
                            const int ix = ox * l.pool_stride + px;
                            const double x = ip[iy * in.w + ix];
                            if (x > bv) {  // strict: first row-major wins ties
                                bv = x;
                                best = iy * in.w + ix;
                            }
                        }
                    }
                    op[oy * ow + ox] = bv;
                    argmax[oi] = c * in.h * in.w + best;
                    if (branch_hash)
                        fnv_update(hash, static_cast<std::uint64_t>(best));
                    ++oi;
                }
            }
        }
        return out;
    }

    Volume dense_forward(const LayerSpec& l, int pi, const Volume& in) const {
        const ParamTensor& mat = net.weights_.params[pi];
        const ParamTensor& bias = net.weights_.params[pi + 1];
        Volume out(1, 1, l.out_width);
        for (int o = 0; o < l.out_width; ++o) {
            const double* row =
                mat.v.data() + static_cast<std::size_t>(o) * l.in_width;
            double acc = bias.v[o];
            for (int i = 0; i < l.in_width; ++i) acc += row[i] * in.v[i];
            out.v[o] = acc;
        }
        return out;
    }

    // Backward from dLogits. If param_grads is non-null, accumulates
    // per-parameter gradients into it (same layout as weights.params).
    Volume backward(const Context& ctx, std::vector<double> dlogits,
                    std::vector<ParamTensor>* param_grads) const {
        const auto& layers = net.weights_.layers;
        Volume grad{1, 1, static_cast<int>(dlogits.size())};
        grad.v = std::move(dlogits);
        for (int li = static_cast<int>(layers.size()) - 1; li >= 0; --li) {
            const LayerSpec& l = layers[li];
            const Volume& in = ctx.inputs[li];
            switch (l.kind) {
                case LayerSpec::Kind::conv:
                    grad = conv_backward(l, net.param_index_[li], in, grad,
                                         param_grads);
                    break;
                case LayerSpec::Kind::relu: {
                    Volume g(in.ch, in.h, in.w);
                    for (std::size_t i = 0; i < g.v.size(); ++i)
                        g.v[i] = in.v[i] > 0.0 ? grad.v[i] : 0.0;
                    grad = std::move(g);
                    break;
                }
                case LayerSpec::Kind::maxpool: {
                    Volume g(in.ch, in.h, in.w);
                    const std::vector<int>& am = ctx.argmax[li];
                    for (std::size_t i = 0; i < am.size(); ++i)
                        g.v[am[i]] += grad.v[i];
                    grad = std::move(g);
                    break;
                }
                case LayerSpec::Kind::flatten: {
                    Volume g(in.ch, in.h, in.w);
                    g.v = std::move(grad.v);
                    grad = std::move(g);
                    break;
                }
                case LayerSpec::Kind::dense:
                    grad = dense_backward(l, net.param_index_[li], in, grad,
                                          param_grads);
                    break;
            }
        }
        return grad;
    }

    Volume conv_backward(const LayerSpec& l, int pi, const Volume& in,
                         const Volume& dout,
                         std::vector<ParamTensor>* param_grads) const {
        const PadInfo g = conv_geometry(l, in.h, in.w);
        const ParamTensor& kernel = net.weights_.params[pi];
        Volume din(in.ch, in.h, in.w);
        for (int oc = 0; oc < l.out_channels; ++oc) {
            const double* dop = dout.plane(oc);
            if (param_grads) {
                double bsum = 0.0;
                for (int i = 0; i < g.out_h * g.out_w; ++i) bsum += dop[i];
                (*param_grads)[pi + 1].v[oc] += bsum;
            }
            for (int ic = 0; ic < l.in_channels; ++ic) {
                double* dip = din.plane(ic);
                const double* ip = in.plane(ic);
                for (int ky = 0; ky < l.kernel_h; ++ky) {
                    for (int kx = 0; kx < l.kernel_w; ++kx) {
                        const std::size_t widx =
                            ((static_cast<std::size_t>(oc) * l.in_channels + ic) *
                                 l.kernel_h +
                             ky) *
                                l.kernel_w +
                            kx;
                        const double kw = kernel.v[widx];
                        double wg = 0.0;
                        if (l.stride == 1) {
                            const int iy0 = ky - g.top, ix0 = kx - g.left;
                            const int oy_lo = std::max(0, -iy0);
                            const int oy_hi = std::min(g.out_h, in.h - iy0);
                            const int ox_lo = std::max(0, -ix0);
                            const int ox_hi = std::min(g.out_w, in.w - ix0);
                            for (int oy = oy_lo; oy < oy_hi; ++oy) {
                                const double* dorow = dop + oy * g.out_w;
                                double* dirow = dip + (oy + iy0) * in.w + ix0;
                                const double* irow =
                                    ip + (oy + iy0) * in.w + ix0;
                                if (param_grads) {
                                    for (int ox = ox_lo; ox < ox_hi; ++ox)
                                        wg += dorow[ox] * irow[ox];
                                }
                                for (int ox = ox_lo; ox < ox_hi; ++ox)
                                    dirow[ox] += kw * dorow[ox];
                            }
                        } else {
                            for (int oy = 0; oy < g.out_h; ++oy) {
                                const int iy = oy * l.stride + ky - g.top;
                                if (iy < 0 || iy >= in.h) continue;
                                for (int ox = 0; ox < g.out_w; ++ox) {
                                    const int ix = ox * l.stride + kx - g.left;
                                    if (ix < 0 || ix >= in.w) continue;
                                    const double d = dop[oy * g.out_w + ox];
                                    dip[iy * in.w + ix] += kw * d;
                                    if (param_grads) wg += d * ip[iy * in.w + ix];
                                }
                            }
                        }
                        if (param_grads) (*param_grads)[pi].v[widx] += wg;
                    }
                }
            }
        }
        return din;
    }

    Volume dense_backward(const LayerSpec& l, int pi, const Volume& in,
                          const Volume& dout,
                          std::vector<ParamTensor>* param_grads) const {
        const ParamTensor& mat = net.weights_.params[pi];
        Volume din(in.ch, in.h, in.w);
        for (int o = 0; o < l.out_width; ++o) {
            const double d = dout.v[o];
            const double* row =
                mat.v.data() + static_cast<std::size_t>(o) * l.in_width;
            for (int i = 0; i < l.in_width; ++i) din.v[i] += row[i] * d;
            if (param_grads) {
                double* wrow = (*param_grads)[pi].v.data() +
                               static_cast<std::size_t>(o) * l.in_width;
                for (int i = 0; i < l.in_width; ++i) wrow[i] += d * in.v[i];
                (*param_grads)[pi + 1].v[o] += d;
            }
        }
        return din;
    }

    ImageTensor input_grad_to_image(const Volume& g) const {
        const Shape3 in = net.weights_.input;
        ImageTensor img(in.h, in.w, in.c);
        for (int c = 0; c < in.c; ++c) {
            const double* plane = g.plane(c);
            for (int y = 0; y < in.h; ++y)
                for (int x = 0; x < in.w; ++x)
                    img.at(y, x, c) = plane[y * in.w + x] / kNormScale;
        }
        return img;
    }
};

LogitVector Network::forward_logits(const ImageTensor& img) const {
    Context ctx;
    NetBackprop{*this}.forward(img, ctx, nullptr);
    return LogitVector{std::move(ctx.output.v)};
}

Network::ForwardBranches Network::forward_with_branches(
    const ImageTensor& img) const {
    Context ctx;
    std::uint64_t hash = 0;
    NetBackprop{*this}.forward(img, ctx, &hash);
    return {LogitVector{std::move(ctx.output.v)}, hash};
}

ImageTensor Network::input_gradient(const ImageTensor& img,
                                    int class_index) const {
    return logits_and_input_gradient(img, class_index).second;
}

std::pair<LogitVector, ImageTensor> Network::logits_and_input_gradient(
    const ImageTensor& img, int class_index) const {
    if (class_index < 0 || class_index >= num_classes())
        throw std::invalid_argument("input_gradient: class index out of range");
    NetBackprop bp{*this};
    Context ctx;
    bp.forward(img, ctx, nullptr);
    std::vector<double> seed(num_classes(), 0.0);
    seed[class_index] = 1.0;
    const Volume g = bp.backward(ctx, std::move(seed), nullptr);
    return {LogitVector{std::move(ctx.output.v)}, bp.input_grad_to_image(g)};
}

NetworkWeights train_classifier(const LabeledDataset& train,
                                const TrainConfig& hp,
                                const LabeledDataset* held_out,
                                TrainReport* report) {
    if (train.size() == 0)
        throw std::invalid_argument("train_classifier: empty dataset");
    if (hp.epochs < 1 || hp.batch_size < 1)
        throw std::invalid_argument("train_classifier: bad hyperparameters");
    for (int label : train.labels)
        if (label < 0 || label >= train.num_classes)
            throw std::invalid_argument("train_classifier: label out of range");

    const ImageTensor& first = train.images.front();
    const Shape3 input{first.height(), first.width(), first.channels()};
    for (const ImageTensor& img : train.images)
        if (!img.same_shape(first))
            throw std::invalid_argument("train_classifier: shape mismatch");

    NetworkWeights w = make_weights(
        default_architecture(input, train.num_classes), input, train.num_classes);
    he_init(w, hp.seed);
    w.mean_image = dataset_mean(train.images);

    Network net(w);
    NetBackprop bp{net};
    std::vector<ParamTensor> grads = w.params;  // same shapes
    auto zero_grads = [&grads] {
        for (ParamTensor& g : grads) std::fill(g.v.begin(), g.v.end(), 0.0);
    };

    std::vector<int> order(train.size());
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle_rng(Rng::derive(hp.seed, 0x7a1e));

    if (report) report->epoch_losses.clear();
    for (int epoch = 0; epoch < hp.epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        double epoch_loss = 0.0;
        std::size_t seen = 0;
        for (std::size_t start = 0; start < order.size();
             start += hp.batch_size) {
            const std::size_t stop =
                std::min(order.size(), start + hp.batch_size);
            zero_grads();
            double batch_loss = 0.0;
            for (std::size_t s = start; s < stop; ++s) {
                const int idx = order[s];
                Context ctx;
                bp.forward(train.images[idx], ctx, nullptr);
                // softmax cross-entropy, max-subtracted
                std::vector<double>& logits = ctx.output.v;
                const double mx = *std::max_element(logits.begin(), logits.end());
                double z = 0.0;
                for (double l : logits) z += std::exp(l - mx);
                const int label = train.labels[idx];
                batch_loss += std::log(z) - (logits[label] - mx);
                std::vector<double> dlogits(logits.size());
                for (std::size_t k = 0; k < logits.size(); ++k)
                    dlogits[k] = std::exp(logits[k] - mx) / z;
                dlogits[label] -= 1.0;
                bp.backward(ctx, std::move(dlogits), &grads);
            }
            const double scale =
                hp.learning_rate / static_cast<double>(stop - start);
            if (!std::isfinite(batch_loss))
                throw NumericalError(
                    "train_classifier: loss diverged (non-finite) at epoch " +
                    std::to_string(epoch + 1));
            for (std::size_t p = 0; p < net.weights_.params.size(); ++p) {
                double* dst = net.weights_.params[p].v.data();
                const double* src = grads[p].v.data();
                for (std::size_t i = 0; i < net.weights_.params[p].v.size(); ++i)
                    dst[i] -= scale * src[i];
            }
            epoch_loss += batch_loss;
            seen += stop - start;
        }
        if (report)
            report->epoch_losses.push_back(epoch_loss /
                                           static_cast<double>(seen));
    }

    NetworkWeights out = net.weights();
    if (held_out && report) {
        Network final_net(out);
        report->test_accuracy = evaluate_accuracy(final_net, *held_out);
    }
    return out;
}

double evaluate_accuracy(const Network& net, const LabeledDataset& ds) {
    if (ds.size() == 0) return 0.0;
    std::size_t correct = 0;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const LogitVector logits = net.forward_logits(ds.images[i]);
        const auto it =
            std::max_element(logits.values.begin(), logits.values.end());
        if (static_cast<int>(it - logits.values.begin()) == ds.labels[i])
            ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(ds.size());
}

GradCheckResult gradient_check(const Network& net, const ImageTensor& img,
                               int class_index, double epsilon,
                               int min_samples, std::uint64_t seed) {
    if (epsilon <= 0.0)
        throw std::invalid_argument("gradient_check: epsilon must be > 0");
    const ImageTensor analytic = net.input_gradient(img, class_index);
    const std::uint64_t base_hash = net.forward_with_branches(img).branch_hash;

    std::vector<std::size_t> order(img.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(Rng::derive(seed, 0x6c3d));
    rng.shuffle(order);

    GradCheckResult res;
    ImageTensor probe = img;
    for (std::size_t idx : order) {
        if (res.checked >= min_samples) break;
        probe[idx] = img[idx] + epsilon;
        const auto fp = net.forward_with_branches(probe);
        probe[idx] = img[idx] - epsilon;
        const auto fm = net.forward_with_branches(probe);
        probe[idx] = img[idx];
        if (fp.branch_hash != base_hash || fm.branch_hash != base_hash) {
            ++res.excluded;  // straddles a relu/maxpool kink
            continue;
        }
        const double numeric =
            (fp.logits.values[class_index] - fm.logits.values[class_index]) /
            (2.0 * epsilon);
        const double a = analytic[idx];
        const double rel = std::abs(a - numeric) /
                           std::max({std::abs(a), std::abs(numeric), 1e-6});
        res.max_rel_error = std::max(res.max_rel_error, rel);
        ++res.checked;
    }
    return res;
}

// ---- serialization ----

namespace {

constexpr char kMagic[4] = {'S', 'C', 'I', 'W'};
constexpr std::uint32_t kVersion = 1;

struct ByteSink {
    std::vector<unsigned char> bytes;
    void u8(std::uint8_t v) { bytes.push_back(v); }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) bytes.push_back((v >> (8 * i)) & 0xffu);
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) bytes.push_back((v >> (8 * i)) & 0xffu);
    }
    void f64(double v) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, 8);
        u64(bits);
    }
    void i32(int v) { u32(static_cast<std::uint32_t>(v)); }
};

struct ByteSource {
    const std::vector<unsigned char>& bytes;
    std::size_t pos = 0;
    void need(std::size_t n) const {
        if (pos + n > bytes.size())
            throw IoError("weights file corrupt: truncated");
    }
    std::uint8_t u8() {
        need(1);
        return bytes[pos++];
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i)
            v |= std::uint32_t(bytes[pos++]) << (8 * i);
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i)
            v |= std::uint64_t(bytes[pos++]) << (8 * i);
        return v;
    }
    double f64() {
        const std::uint64_t bits = u64();
        double v;
        std::memcpy(&v, &bits, 8);
        return v;
    }
    int i32() { return static_cast<int>(u32()); }
};

std::uint64_t fnv_bytes(const unsigned char* data, std::size_t n) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (std::size_t i = 0; i < n; ++i) {
        h ^= data[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace

void save_weights(const NetworkWeights& w, const std::filesystem::path& path) {
    ByteSink sink;
    sink.bytes.insert(sink.bytes.end(), kMagic, kMagic + 4);
    sink.u32(kVersion);
    sink.u64(arch_fingerprint(w));
    sink.u32(static_cast<std::uint32_t>(w.num_classes));
    sink.i32(w.input.h);
    sink.i32(w.input.w);
    sink.i32(w.input.c);
    sink.u32(static_cast<std::uint32_t>(w.layers.size()));
    for (const LayerSpec& l : w.layers) {
        sink.u32(static_cast<std::uint32_t>(l.kind));
        sink.i32(l.kernel_h);
        sink.i32(l.kernel_w);
        sink.i32(l.in_channels);
        sink.i32(l.out_channels);
        sink.i32(l.stride);
        sink.u32(l.padding == Padding::same ? 1 : 0);
        sink.i32(l.pool);
        sink.i32(l.pool_stride);
        sink.i32(l.in_width);
        sink.i32(l.out_width);
    }
    sink.u32(static_cast<std::uint32_t>(w.params.size()));
    for (const ParamTensor& p : w.params) {
        sink.u32(static_cast<std::uint32_t>(p.dims.size()));
        for (int d : p.dims) sink.i32(d);
        sink.u64(p.v.size());
        for (double x : p.v) sink.f64(x);
    }
    sink.u8(w.mean_image.empty() ? 0 : 1);
    if (!w.mean_image.empty()) {
        sink.i32(w.mean_image.height());
        sink.i32(w.mean_image.width());
        sink.i32(w.mean_image.channels());
        for (double x : w.mean_image.values()) sink.f64(x);
    }
    sink.u64(fnv_bytes(sink.bytes.data(), sink.bytes.size()));

    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("save_weights: cannot open " + path.string());
    out.write(reinterpret_cast<const char*>(sink.bytes.data()),
              static_cast<std::streamsize>(sink.bytes.size()));
    if (!out) throw IoError("save_weights: write failed for " + path.string());
}

NetworkWeights load_weights(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("load_weights: cannot open " + path.string());
    std::vector<unsigned char> bytes{std::istreambuf_iterator<char>(in),
                                     std::istreambuf_iterator<char>()};
    if (bytes.size() < 24 || std::memcmp(bytes.data(), kMagic, 4) != 0)
        throw IoError("weights file corrupt: bad magic");
    const std::uint64_t stored_sum =
        ByteSource{bytes, bytes.size() - 8}.u64();
    if (fnv_bytes(bytes.data(), bytes.size() - 8) != stored_sum)
        throw IoError("weights file corrupt: checksum mismatch");

    ByteSource src{bytes, 4};
    if (src.u32() != kVersion)
        throw IoError("weights file: unsupported version");
    const std::uint64_t stored_fp = src.u64();
    NetworkWeights w;
    w.num_classes = static_cast<int>(src.u32());
    w.input.h = src.i32();
    w.input.w = src.i32();
    w.input.c = src.i32();
    const std::uint32_t layer_count = src.u32();
    for (std::uint32_t i = 0; i < layer_count; ++i) {
        LayerSpec l;
        l.kind = static_cast<LayerSpec::Kind>(src.u32());
        l.kernel_h = src.i32();
        l.kernel_w = src.i32();
        l.in_channels = src.i32();
        l.out_channels = src.i32();
        l.stride = src.i32();
        l.padding = src.u32() == 1 ? Padding::same : Padding::valid;
        l.pool = src.i32();
        l.pool_stride = src.i32();
        l.in_width = src.i32();
        l.out_width = src.i32();
        w.layers.push_back(l);
    }
    const std::uint32_t tensor_count = src.u32();
    for (std::uint32_t i = 0; i < tensor_count; ++i) {
        ParamTensor p;
        const std::uint32_t ndims = src.u32();
        for (std::uint32_t d = 0; d < ndims; ++d) p.dims.push_back(src.i32());
        const std::uint64_t count = src.u64();
        p.v.resize(count);
        for (std::uint64_t e = 0; e < count; ++e) p.v[e] = src.f64();
        w.params.push_back(std::move(p));
    }
    if (src.u8() == 1) {
        const int h = src.i32(), wd = src.i32(), c = src.i32();
        ImageTensor mean(h, wd, c);
        for (double& x : mean.values()) x = src.f64();
        w.mean_image = std::move(mean);
    }
    if (arch_fingerprint(w) != stored_fp)
        throw NumericalError(
            "weights fingerprint mismatch: stored fingerprint does not match "
            "the stored architecture");
    if (!w.finite())
        throw IoError("weights file corrupt: non-finite parameter values");
    return w;
}

}  // namespace sci
