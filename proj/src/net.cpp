#include "covdet/net.hpp"

#include <cmath>
#include <stdexcept>

#include "covdet/rng.hpp"

namespace covdet {

namespace {

[[noreturn]] void shape_error() { throw std::invalid_argument("architecture/shape error"); }

struct Dims {
    int h, w, c;
};

// Walks the shape arithmetic for one layer; throws on impossible shapes.
Dims layer_output_dims(const LayerSpec& l, Dims in) {
    switch (l.kind) {
        case LayerKind::Conv: {
            if (l.kh < 1 || l.kw < 1 || l.out_channels < 1 || l.stride < 1) shape_error();
            if (in.h < l.kh || in.w < l.kw) shape_error();
            return {(in.h - l.kh) / l.stride + 1, (in.w - l.kw) / l.stride + 1, l.out_channels};
        }
        case LayerKind::Relu:
        case LayerKind::Lrn:
            return in;
        case LayerKind::MaxPool2: {
            if (in.h < 2 || in.w < 2) shape_error();
            const int s = l.stride;
            return {(in.h - 2) / s + 1, (in.w - 2) / s + 1, in.c};
        }
    }
    shape_error();
}

}  // namespace

const char* head_name(Head h) { return h == Head::Translation ? "translation" : "rotation"; }

Head head_from_name(const std::string& name) {
    if (name == "translation") return Head::Translation;
    if (name == "rotation") return Head::Rotation;
    throw std::invalid_argument("unknown head: " + name);
}

NetworkSpec detnet_s() {
    NetworkSpec s;
    s.layers = {
        LayerSpec::conv(5, 5, 40),  LayerSpec::relu(), LayerSpec::maxpool2(),
        LayerSpec::conv(5, 5, 100), LayerSpec::relu(), LayerSpec::maxpool2(),
        LayerSpec::conv(4, 4, 300), LayerSpec::relu(),
        LayerSpec::conv(1, 1, 500), LayerSpec::relu(),
        LayerSpec::conv(1, 1, 500), LayerSpec::relu(),
        LayerSpec::conv(1, 1, 2),
    };
    return s;
}

NetworkSpec detnet_l() {
    NetworkSpec s;
    s.layers = {
        LayerSpec::conv(5, 5, 60),  LayerSpec::relu(), LayerSpec::maxpool2(),
        LayerSpec::conv(5, 5, 150), LayerSpec::relu(), LayerSpec::maxpool2(), LayerSpec::lrn(),
        LayerSpec::conv(4, 4, 450), LayerSpec::relu(),
        LayerSpec::conv(1, 1, 600), LayerSpec::relu(),
        LayerSpec::conv(1, 1, 600), LayerSpec::relu(),
        LayerSpec::conv(1, 1, 600), LayerSpec::relu(),
        LayerSpec::conv(1, 1, 2),
    };
    return s;
}

NetworkSpec detnet_micro() {
    NetworkSpec s;
    s.layers = {
        LayerSpec::conv(5, 5, 10), LayerSpec::relu(), LayerSpec::maxpool2(),
        LayerSpec::conv(5, 5, 20), LayerSpec::relu(), LayerSpec::maxpool2(),
        LayerSpec::conv(4, 4, 50), LayerSpec::relu(),
        LayerSpec::conv(1, 1, 80), LayerSpec::relu(),
        LayerSpec::conv(1, 1, 2),
    };
    return s;
}

NetworkSpec net_by_name(const std::string& name) {
    if (name == "detnet-s") return detnet_s();
    if (name == "detnet-l") return detnet_l();
    if (name == "micro") return detnet_micro();
    throw std::invalid_argument("unknown architecture: " + name);
}

int receptive_field(const NetworkSpec& spec) {
    // Invert the shape arithmetic from a 1x1 output.
    int side = 1;
    for (auto it = spec.layers.rbegin(); it != spec.layers.rend(); ++it) {
        switch (it->kind) {
            case LayerKind::Conv: side = (side - 1) * it->stride + it->kh; break;
            case LayerKind::MaxPool2: side = (side - 1) * it->stride + 2; break;
            default: break;
        }
    }
    return side;
}

void check_spec(const NetworkSpec& spec) {
    if (spec.input_side < 1 || spec.in_channels < 1 || spec.out_dim < 1 || spec.layers.empty())
        shape_error();
    Dims d{spec.input_side, spec.input_side, spec.in_channels};
    for (const auto& l : spec.layers) d = layer_output_dims(l, d);
    if (d.h != 1 || d.w != 1 || d.c != spec.out_dim) shape_error();
}

size_t Parameters::count() const {
    size_t n = 0;
    for (const auto& c : conv) n += c.w.size() + c.b.size();
    return n;
}

void Parameters::fill(double v) {
    for (auto& c : conv) {
        std::fill(c.w.begin(), c.w.end(), v);
        std::fill(c.b.begin(), c.b.end(), v);
    }
}

void Parameters::axpy(double a, const Parameters& other) {
    for (size_t i = 0; i < conv.size(); ++i) {
        for (size_t j = 0; j < conv[i].w.size(); ++j) conv[i].w[j] += a * other.conv[i].w[j];
        for (size_t j = 0; j < conv[i].b.size(); ++j) conv[i].b[j] += a * other.conv[i].b[j];
    }
}

bool Parameters::same_shape(const Parameters& other) const {
    if (conv.size() != other.conv.size()) return false;
    for (size_t i = 0; i < conv.size(); ++i)
        if (conv[i].w.size() != other.conv[i].w.size() ||
            conv[i].b.size() != other.conv[i].b.size())
            return false;
    return true;
}

bool Parameters::all_finite() const {
    for (const auto& c : conv) {
        for (double v : c.w)
            if (!std::isfinite(v)) return false;
        for (double v : c.b)
            if (!std::isfinite(v)) return false;
    }
    return true;
}

Parameters zeros_like(const Parameters& p) {
    Parameters z = p;
    z.fill(0.0);
    return z;
}

Parameters init_params(const NetworkSpec& spec, std::uint64_t seed) {
    check_spec(spec);
    Rng rng(seed);
    Parameters p;
    int in_ch = spec.in_channels;
    for (const auto& l : spec.layers) {
        if (l.kind != LayerKind::Conv) continue;
        ConvParams cp;
        cp.kh = l.kh;
        cp.kw = l.kw;
        cp.in_channels = in_ch;
        cp.out_channels = l.out_channels;
        cp.w.resize(static_cast<size_t>(l.kh) * l.kw * in_ch * l.out_channels);
        cp.b.assign(l.out_channels, 0.0);
        const double std_dev = std::sqrt(2.0 / (static_cast<double>(l.kh) * l.kw * in_ch));
        for (double& v : cp.w) v = std_dev * rng.normal();
        p.conv.push_back(std::move(cp));
        in_ch = l.out_channels;
    }
    return p;
}

std::uint64_t spec_fingerprint(const NetworkSpec& spec) {
    std::uint64_t h = 1469598103934665603ull;  // FNV-1a over the layer list
    const auto eat = [&](std::uint64_t v) {
        h ^= v;
        h *= 1099511628211ull;
    };
    eat(spec.input_side);
    eat(spec.in_channels);
    eat(spec.out_dim);
    for (const auto& l : spec.layers) {
        eat(static_cast<std::uint64_t>(l.kind) + 17);
        eat(l.kh);
        eat(l.kw);
        eat(l.out_channels);
        eat(l.stride);
    }
    return h;
}

Tensor forward(const NetworkSpec& spec, const Parameters& params, const Tensor& input,
               ForwardCache* cache) {
    if (input.c != spec.in_channels || input.n < 1) shape_error();
    const int rf = receptive_field(spec);
    if (input.h < rf || input.w < rf) shape_error();

    if (cache) {
        cache->inputs.clear();
        cache->argmax.assign(spec.layers.size(), {});
        cache->lrn_scale.assign(spec.layers.size(), Tensor{});
        cache->fingerprint = spec_fingerprint(spec);
    }

    Tensor cur = input;
    size_t conv_i = 0;
    for (size_t li = 0; li < spec.layers.size(); ++li) {
        const LayerSpec& l = spec.layers[li];
        if (cache) cache->inputs.push_back(cur);
        const Dims d = layer_output_dims(l, {cur.h, cur.w, cur.c});
        Tensor next(d.h, d.w, d.c, cur.n);
        switch (l.kind) {
            case LayerKind::Conv: {
                if (conv_i >= params.conv.size()) shape_error();
                const ConvParams& cp = params.conv[conv_i++];
                if (cp.kh != l.kh || cp.kw != l.kw || cp.in_channels != cur.c ||
                    cp.out_channels != l.out_channels)
                    shape_error();
                kernels::conv2d_forward(cur, cp.w, cp.b, l.kh, l.kw, l.out_channels, l.stride,
                                        next);
                break;
            }
            case LayerKind::Relu:
                kernels::relu_forward(cur, next);
                break;
            case LayerKind::MaxPool2:
                kernels::maxpool2_forward(cur, l.stride, next, cache ? &cache->argmax[li] : nullptr);
                break;
            case LayerKind::Lrn: {
                Tensor* sc = nullptr;
                if (cache) {
                    cache->lrn_scale[li] = Tensor(d.h, d.w, d.c, cur.n);
                    sc = &cache->lrn_scale[li];
                }
                kernels::lrn_forward(cur, next, sc);
                break;
            }
        }
        cur = std::move(next);
    }
    if (conv_i != params.conv.size()) shape_error();
    if (cache) cache->output = cur;
    return cur;
}

void backward(const NetworkSpec& spec, const Parameters& params, const ForwardCache& cache,
              const Tensor& grad_output, Parameters& grad, Tensor* grad_input) {
    if (cache.fingerprint != spec_fingerprint(spec) || cache.inputs.size() != spec.layers.size() ||
        !grad_output.same_shape(cache.output))
        throw std::runtime_error("invalid cache");

    grad = zeros_like(params);
    Tensor g = grad_output;
    int conv_i = static_cast<int>(params.conv.size());
    for (int li = static_cast<int>(spec.layers.size()) - 1; li >= 0; --li) {
        const LayerSpec& l = spec.layers[li];
        const Tensor& in = cache.inputs[li];
        Tensor gin(in.h, in.w, in.c, in.n);
        switch (l.kind) {
            case LayerKind::Conv: {
                --conv_i;
                const ConvParams& cp = params.conv[conv_i];
                kernels::conv2d_backward_params(in, g, l.kh, l.kw, l.out_channels, l.stride,
                                                grad.conv[conv_i].w, grad.conv[conv_i].b);
                kernels::conv2d_backward_input(g, cp.w, l.kh, l.kw, l.out_channels, l.stride, gin);
                break;
            }
            case LayerKind::Relu:
                kernels::relu_backward(in, g, gin);
                break;
            case LayerKind::MaxPool2:
                kernels::maxpool2_backward(in, g, cache.argmax[li], gin);
                break;
            case LayerKind::Lrn: {
                // reconstruct the layer output from input and cached scale
                Tensor out(g.h, g.w, g.c, g.n);
                const Tensor& sc = cache.lrn_scale[li];
                for (size_t i = 0; i < out.v.size(); ++i)
                    out.v[i] = in.v[i] * std::pow(sc.v[i], -0.75);
                kernels::lrn_backward(in, out, sc, g, gin);
                break;
            }
        }
        g = std::move(gin);
    }
    if (grad_input) *grad_input = std::move(g);
}

Transform2D output_to_transform(std::span<const double> raw, Head head) {
    if (raw.size() < 2) throw std::invalid_argument("architecture/shape error");
    if (head == Head::Translation) return Transform2D::translation(raw[0], raw[1]);
    const double n = std::hypot(raw[0], raw[1]);
    if (!(n > 1e-12)) throw std::runtime_error("degenerate orientation");
    const double c = raw[0] / n, s = raw[1] / n;
    return Transform2D::linear(c, -s, s, c);
}

void sgd_step(Parameters& params, const Parameters& grad, double lr, double momentum,
              SgdState& state) {
    if (!(lr > 0) || !params.same_shape(grad)) throw std::invalid_argument("bad sgd step");
    if (!state.initialized) {
        state.velocity = zeros_like(params);
        state.initialized = true;
    }
    for (size_t i = 0; i < params.conv.size(); ++i) {
        auto& v = state.velocity.conv[i];
        auto& p = params.conv[i];
        const auto& g = grad.conv[i];
        for (size_t j = 0; j < p.w.size(); ++j) {
            v.w[j] = momentum * v.w[j] - lr * g.w[j];
            p.w[j] += v.w[j];
        }
        for (size_t j = 0; j < p.b.size(); ++j) {
            v.b[j] = momentum * v.b[j] - lr * g.b[j];
            p.b[j] += v.b[j];
        }
    }
}

}  // namespace covdet
