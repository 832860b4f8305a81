#include "covdet/kernels.hpp"

#include <algorithm>
#include <cmath>

namespace covdet::kernels {

namespace {
// LRN constants (cross-channel normalisation).
constexpr int kLrnDepth = 5;
constexpr double kLrnAlpha = 1e-4 / kLrnDepth;
constexpr double kLrnBeta = 0.75;
constexpr double kLrnK = 2.0;
}  // namespace

void conv2d_forward(const Tensor& in, const std::vector<double>& w, const std::vector<double>& bias,
                    int kh, int kw, int out_channels, int stride, Tensor& out) {
    const int ic_n = in.c;
    const int oh = out.h, ow = out.w;
    const int iw = in.w;
#pragma omp parallel for collapse(2) schedule(static)
    for (int s = 0; s < in.n; ++s) {
        for (int oc = 0; oc < out_channels; ++oc) {
            double* op = out.plane(oc, s);
            std::fill(op, op + static_cast<size_t>(oh) * ow, bias[oc]);
            for (int ic = 0; ic < ic_n; ++ic) {
                const double* ip = in.plane(ic, s);
                for (int ky = 0; ky < kh; ++ky) {
                    for (int kx = 0; kx < kw; ++kx) {
                        const double wv =
                            w[(static_cast<size_t>(ky * kw + kx) * ic_n + ic) * out_channels + oc];
                        for (int y = 0; y < oh; ++y) {
                            const double* irow = ip + static_cast<size_t>(y * stride + ky) * iw + kx;
                            double* orow = op + static_cast<size_t>(y) * ow;
                            if (stride == 1) {
                                for (int x = 0; x < ow; ++x) orow[x] += wv * irow[x];
                            } else {
                                for (int x = 0; x < ow; ++x) orow[x] += wv * irow[x * stride];
                            }
                        }
                    }
                }
            }
        }
    }
}

void conv2d_backward_input(const Tensor& gout, const std::vector<double>& w, int kh, int kw,
                           int out_channels, int stride, Tensor& gin) {
    const int ic_n = gin.c;
    const int oh = gout.h, ow = gout.w;
    const int iw = gin.w;
#pragma omp parallel for collapse(2) schedule(static)
    for (int s = 0; s < gin.n; ++s) {
        for (int ic = 0; ic < ic_n; ++ic) {
            double* gp = gin.plane(ic, s);
            std::fill(gp, gp + static_cast<size_t>(gin.h) * iw, 0.0);
            for (int oc = 0; oc < out_channels; ++oc) {
                const double* op = gout.plane(oc, s);
                for (int ky = 0; ky < kh; ++ky) {
                    for (int kx = 0; kx < kw; ++kx) {
                        const double wv =
                            w[(static_cast<size_t>(ky * kw + kx) * ic_n + ic) * out_channels + oc];
                        for (int y = 0; y < oh; ++y) {
                            const double* grow = op + static_cast<size_t>(y) * ow;
                            double* irow = gp + static_cast<size_t>(y * stride + ky) * iw + kx;
                            if (stride == 1) {
                                for (int x = 0; x < ow; ++x) irow[x] += wv * grow[x];
                            } else {
                                for (int x = 0; x < ow; ++x) irow[x * stride] += wv * grow[x];
                            }
                        }
                    }
                }
            }
        }
    }
}

void conv2d_backward_params(const Tensor& in, const Tensor& gout, int kh, int kw, int out_channels,
                            int stride, std::vector<double>& gw, std::vector<double>& gbias) {
    const int ic_n = in.c;
    const int oh = gout.h, ow = gout.w;
    const int iw = in.w;
    gw.assign(static_cast<size_t>(kh) * kw * ic_n * out_channels, 0.0);
    gbias.assign(out_channels, 0.0);
#pragma omp parallel for schedule(static)
    for (int oc = 0; oc < out_channels; ++oc) {
        double bacc = 0.0;
        for (int s = 0; s < in.n; ++s) {
            const double* op = gout.plane(oc, s);
            for (size_t i = 0; i < static_cast<size_t>(oh) * ow; ++i) bacc += op[i];
            for (int ic = 0; ic < ic_n; ++ic) {
                const double* ip = in.plane(ic, s);
                for (int ky = 0; ky < kh; ++ky) {
                    for (int kx = 0; kx < kw; ++kx) {
                        double acc = 0.0;
                        for (int y = 0; y < oh; ++y) {
                            const double* irow = ip + static_cast<size_t>(y * stride + ky) * iw + kx;
                            const double* grow = op + static_cast<size_t>(y) * ow;
                            if (stride == 1) {
                                for (int x = 0; x < ow; ++x) acc += irow[x] * grow[x];
                            } else {
                                for (int x = 0; x < ow; ++x) acc += irow[x * stride] * grow[x];
                            }
                        }
                        gw[(static_cast<size_t>(ky * kw + kx) * ic_n + ic) * out_channels + oc] +=
                            acc;
                    }
                }
            }
        }
        gbias[oc] = bacc;
    }
}

void relu_forward(const Tensor& in, Tensor& out) {
    const size_t n = in.size();
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < static_cast<std::int64_t>(n); ++i)
        out.v[i] = in.v[i] > 0.0 ? in.v[i] : 0.0;
}

void relu_backward(const Tensor& in, const Tensor& gout, Tensor& gin) {
    const size_t n = in.size();
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < static_cast<std::int64_t>(n); ++i)
        gin.v[i] = in.v[i] > 0.0 ? gout.v[i] : 0.0;
}

namespace {

template <bool kRecordArgmax>
void maxpool2_impl(const Tensor& in, int stride, Tensor& out, std::vector<std::int32_t>* argmax) {
    const int oh = out.h, ow = out.w;
    const int iw = in.w;
#pragma omp parallel for collapse(2) schedule(static)
    for (int s = 0; s < in.n; ++s) {
        for (int ch = 0; ch < in.c; ++ch) {
            const double* ip = in.plane(ch, s);
            double* op = out.plane(ch, s);
            std::int32_t* ap =
                kRecordArgmax
                    ? argmax->data() + (static_cast<size_t>(s) * in.c + ch) * oh * ow
                    : nullptr;
            for (int y = 0; y < oh; ++y) {
                for (int x = 0; x < ow; ++x) {
                    const int iy = y * stride, ix = x * stride;
                    double best = ip[static_cast<size_t>(iy) * iw + ix];
                    int besti = iy * iw + ix;
                    // first-in-scan-order tie rule: strict > to replace
                    for (int dy = 0; dy < 2; ++dy) {
                        for (int dx = 0; dx < 2; ++dx) {
                            const int i = (iy + dy) * iw + (ix + dx);
                            if (ip[i] > best) {
                                best = ip[i];
                                besti = i;
                            }
                        }
                    }
                    op[static_cast<size_t>(y) * ow + x] = best;
                    if (kRecordArgmax) ap[static_cast<size_t>(y) * ow + x] = besti;
                }
            }
        }
    }
}

}  // namespace

void maxpool2_forward(const Tensor& in, int stride, Tensor& out,
                      std::vector<std::int32_t>* argmax) {
    if (argmax) {
        argmax->resize(static_cast<size_t>(out.h) * out.w * out.c * out.n);
        maxpool2_impl<true>(in, stride, out, argmax);
    } else {
        maxpool2_impl<false>(in, stride, out, nullptr);
    }
}

void maxpool2_backward(const Tensor& in, const Tensor& gout, const std::vector<std::int32_t>& argmax,
                       Tensor& gin) {
    std::fill(gin.v.begin(), gin.v.end(), 0.0);
    const int oh = gout.h, ow = gout.w;
#pragma omp parallel for collapse(2) schedule(static)
    for (int s = 0; s < in.n; ++s) {
        for (int ch = 0; ch < in.c; ++ch) {
            const double* op = gout.plane(ch, s);
            const std::int32_t* ap = argmax.data() + (static_cast<size_t>(s) * in.c + ch) * oh * ow;
            double* gp = gin.plane(ch, s);
            for (size_t i = 0; i < static_cast<size_t>(oh) * ow; ++i) gp[ap[i]] += op[i];
        }
    }
}

void lrn_forward(const Tensor& in, Tensor& out, Tensor* scale) {
    const int half = kLrnDepth / 2;
    const int C = in.c;
#pragma omp parallel for schedule(static)
    for (int s = 0; s < in.n; ++s) {
        for (int y = 0; y < in.h; ++y) {
            for (int x = 0; x < in.w; ++x) {
                for (int ch = 0; ch < C; ++ch) {
                    double acc = 0.0;
                    const int lo = std::max(0, ch - half), hi = std::min(C - 1, ch + half);
                    for (int j = lo; j <= hi; ++j) {
                        const double v = in.at(y, x, j, s);
                        acc += v * v;
                    }
                    const double sc = kLrnK + kLrnAlpha * acc;
                    if (scale) scale->at(y, x, ch, s) = sc;
                    out.at(y, x, ch, s) = in.at(y, x, ch, s) * std::pow(sc, -kLrnBeta);
                }
            }
        }
    }
}

void lrn_backward(const Tensor& in, const Tensor& out, const Tensor& scale, const Tensor& gout,
                  Tensor& gin) {
    const int half = kLrnDepth / 2;
    const int C = in.c;
#pragma omp parallel for schedule(static)
    for (int s = 0; s < in.n; ++s) {
        for (int y = 0; y < in.h; ++y) {
            for (int x = 0; x < in.w; ++x) {
                for (int ch = 0; ch < C; ++ch) {
                    const double sc = scale.at(y, x, ch, s);
                    double g = gout.at(y, x, ch, s) * std::pow(sc, -kLrnBeta);
                    // contributions of x_ch to the denominators of nearby channels
                    const int lo = std::max(0, ch - half), hi = std::min(C - 1, ch + half);
                    double cross = 0.0;
                    for (int j = lo; j <= hi; ++j) {
                        cross += gout.at(y, x, j, s) * out.at(y, x, j, s) / scale.at(y, x, j, s);
                    }
                    g -= 2.0 * kLrnAlpha * kLrnBeta * in.at(y, x, ch, s) * cross;
                    gin.at(y, x, ch, s) = g;
                }
            }
        }
    }
}

namespace serial {

void conv2d_forward(const Tensor& in, const std::vector<double>& w, const std::vector<double>& bias,
                    int kh, int kw, int out_channels, int stride, Tensor& out) {
    const int ic_n = in.c;
    for (int s = 0; s < in.n; ++s)
        for (int oc = 0; oc < out_channels; ++oc)
            for (int y = 0; y < out.h; ++y)
                for (int x = 0; x < out.w; ++x) {
                    double acc = bias[oc];
                    for (int ic = 0; ic < ic_n; ++ic)
                        for (int ky = 0; ky < kh; ++ky)
                            for (int kx = 0; kx < kw; ++kx)
                                acc += in.at(y * stride + ky, x * stride + kx, ic, s) *
                                       w[(static_cast<size_t>(ky * kw + kx) * ic_n + ic) *
                                             out_channels +
                                         oc];
                    out.at(y, x, oc, s) = acc;
                }
}

void conv2d_backward_input(const Tensor& gout, const std::vector<double>& w, int kh, int kw,
                           int out_channels, int stride, Tensor& gin) {
    const int ic_n = gin.c;
    std::fill(gin.v.begin(), gin.v.end(), 0.0);
    for (int s = 0; s < gin.n; ++s)
        for (int ic = 0; ic < ic_n; ++ic)
            for (int y = 0; y < gin.h; ++y)
                for (int x = 0; x < gin.w; ++x) {
                    double acc = 0.0;
                    for (int oc = 0; oc < out_channels; ++oc)
                        for (int ky = 0; ky < kh; ++ky)
                            for (int kx = 0; kx < kw; ++kx) {
                                const int ys = y - ky, xs = x - kx;
                                if (ys < 0 || xs < 0 || ys % stride || xs % stride) continue;
                                const int oy = ys / stride, ox = xs / stride;
                                if (oy >= gout.h || ox >= gout.w) continue;
                                acc += w[(static_cast<size_t>(ky * kw + kx) * ic_n + ic) *
                                             out_channels +
                                         oc] *
                                       gout.at(oy, ox, oc, s);
                            }
                    gin.at(y, x, ic, s) = acc;
                }
}

void conv2d_backward_params(const Tensor& in, const Tensor& gout, int kh, int kw, int out_channels,
                            int stride, std::vector<double>& gw, std::vector<double>& gbias) {
    const int ic_n = in.c;
    gw.assign(static_cast<size_t>(kh) * kw * ic_n * out_channels, 0.0);
    gbias.assign(out_channels, 0.0);
    for (int oc = 0; oc < out_channels; ++oc) {
        for (int ic = 0; ic < ic_n; ++ic)
            for (int ky = 0; ky < kh; ++ky)
                for (int kx = 0; kx < kw; ++kx) {
                    double acc = 0.0;
                    for (int s = 0; s < in.n; ++s)
                        for (int y = 0; y < gout.h; ++y)
                            for (int x = 0; x < gout.w; ++x)
                                acc += in.at(y * stride + ky, x * stride + kx, ic, s) *
                                       gout.at(y, x, oc, s);
                    gw[(static_cast<size_t>(ky * kw + kx) * ic_n + ic) * out_channels + oc] = acc;
                }
        double bacc = 0.0;
        for (int s = 0; s < in.n; ++s)
            for (int y = 0; y < gout.h; ++y)
                for (int x = 0; x < gout.w; ++x) bacc += gout.at(y, x, oc, s);
        gbias[oc] = bacc;
    }
}

void maxpool2_forward(const Tensor& in, int stride, Tensor& out,
                      std::vector<std::int32_t>* argmax) {
    if (argmax) argmax->resize(out.size());
    for (int s = 0; s < in.n; ++s)
        for (int ch = 0; ch < in.c; ++ch)
            for (int y = 0; y < out.h; ++y)
                for (int x = 0; x < out.w; ++x) {
                    double best = in.at(y * stride, x * stride, ch, s);
                    int besti = y * stride * in.w + x * stride;
                    for (int dy = 0; dy < 2; ++dy)
                        for (int dx = 0; dx < 2; ++dx) {
                            const double v = in.at(y * stride + dy, x * stride + dx, ch, s);
                            if (v > best) {
                                best = v;
                                besti = (y * stride + dy) * in.w + (x * stride + dx);
                            }
                        }
                    out.at(y, x, ch, s) = best;
                    if (argmax)
                        (*argmax)[((static_cast<size_t>(s) * in.c + ch) * out.h + y) * out.w + x] =
                            besti;
                }
}

}  // namespace serial

}  // namespace covdet::kernels
