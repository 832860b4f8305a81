#include "covdet/dense.hpp"

#include <cmath>
#include <stdexcept>

#include "covdet/imgops.hpp"
#include "covdet/kernels.hpp"

namespace covdet {

namespace {

DisplacementField make_field(const Model& model, const ImageBuffer& img, int rf) {
    DisplacementField f;
    f.width = img.width;
    f.height = img.height;
    f.head = model.head;
    f.a.assign(static_cast<size_t>(img.width) * img.height, 0.0);
    f.b.assign(static_cast<size_t>(img.width) * img.height, 0.0);
    f.valid.assign(static_cast<size_t>(img.width) * img.height, 0);
    f.margin = rf / 2;
    f.center_offset = (rf - 1) / 2.0 - f.margin;
    return f;
}

ImageBuffer preprocess(const Model& model, const ImageBuffer& img, int rf) {
    return model.normalize_input ? local_normalize(img, rf) : img;
}

void check_size(const ImageBuffer& img, int rf) {
    if (img.width < rf || img.height < rf)
        throw std::invalid_argument("image smaller than receptive field");
}

// One tensor of the phase decomposition: entry (y, x) corresponds to the
// receptive-field window starting at (ox + step*x, oy + step*y) in image
// coordinates.
struct Part {
    Tensor t;
    int oy = 0, ox = 0;
    int step = 1;
};

}  // namespace

DisplacementField dense_regress_naive(const Model& model, const ImageBuffer& img) {
    const int rf = receptive_field(model.spec);
    check_size(img, rf);
    const ImageBuffer src = preprocess(model, img, rf);
    DisplacementField field = make_field(model, img, rf);

    const int nx = img.width - rf + 1;  // windows per row
    for (int sy = 0; sy + rf <= img.height; ++sy) {
        Tensor batch(rf, rf, 1, nx);
        for (int sx = 0; sx < nx; ++sx) {
            double* p = batch.plane(0, sx);
            for (int y = 0; y < rf; ++y)
                for (int x = 0; x < rf; ++x)
                    p[static_cast<size_t>(y) * rf + x] = src.at(sx + x, sy + y);
        }
        const Tensor out = forward(model.spec, model.params, batch);
        for (int sx = 0; sx < nx; ++sx) {
            const size_t i = field.idx(sx + field.margin, sy + field.margin);
            field.a[i] = out.at(0, 0, 0, sx);
            field.b[i] = out.at(0, 0, 1, sx);
            field.valid[i] = 1;
        }
    }
    return field;
}

DisplacementField dense_regress(const Model& model, const ImageBuffer& img, int stride) {
    if (stride != 1 && stride != 2) throw std::invalid_argument("stride must be 1 or 2");
    const int rf = receptive_field(model.spec);
    check_size(img, rf);
    const ImageBuffer src = preprocess(model, img, rf);
    DisplacementField field = make_field(model, img, rf);

    std::vector<Part> parts(1);
    parts[0].t = Tensor(img.height, img.width, 1, 1);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) parts[0].t.at(y, x, 0, 0) = src.at(x, y);

    int natural_pools_left = stride == 2 ? 1 : 0;
    size_t conv_i = 0;
    for (const LayerSpec& l : model.spec.layers) {
        switch (l.kind) {
            case LayerKind::Conv: {
                const ConvParams& cp = model.params.conv[conv_i++];
                std::vector<Part> next;
                next.reserve(parts.size());
                for (Part& p : parts) {
                    const int oh = p.t.h - l.kh + 1, ow = p.t.w - l.kw + 1;
                    if (oh < 1 || ow < 1) continue;  // no window of this phase survives
                    Part q{Tensor(oh, ow, l.out_channels, 1), p.oy, p.ox, p.step};
                    kernels::conv2d_forward(p.t, cp.w, cp.b, l.kh, l.kw, l.out_channels, 1, q.t);
                    next.push_back(std::move(q));
                }
                parts = std::move(next);
                break;
            }
            case LayerKind::Relu:
                for (Part& p : parts) {
                    Tensor out(p.t.h, p.t.w, p.t.c, 1);
                    kernels::relu_forward(p.t, out);
                    p.t = std::move(out);
                }
                break;
            case LayerKind::Lrn:
                for (Part& p : parts) {
                    Tensor out(p.t.h, p.t.w, p.t.c, 1);
                    kernels::lrn_forward(p.t, out, nullptr);
                    p.t = std::move(out);
                }
                break;
            case LayerKind::MaxPool2: {
                std::vector<Part> next;
                if (natural_pools_left > 0) {
                    --natural_pools_left;
                    for (Part& p : parts) {
                        if (p.t.h < 2 || p.t.w < 2) continue;
                        Part q{Tensor((p.t.h - 2) / 2 + 1, (p.t.w - 2) / 2 + 1, p.t.c, 1), p.oy,
                               p.ox, p.step * 2};
                        kernels::maxpool2_forward(p.t, 2, q.t, nullptr);
                        next.push_back(std::move(q));
                    }
                } else {
                    for (Part& p : parts) {
                        if (p.t.h < 2 || p.t.w < 2) continue;
                        Tensor pooled(p.t.h - 1, p.t.w - 1, p.t.c, 1);
                        kernels::maxpool2_forward(p.t, 1, pooled, nullptr);
                        // four phase parts, each downsampled by two
                        for (int py = 0; py < 2; ++py) {
                            for (int px = 0; px < 2; ++px) {
                                const int h = (pooled.h - py + 1) / 2;
                                const int w = (pooled.w - px + 1) / 2;
                                if (h < 1 || w < 1) continue;
                                Part q{Tensor(h, w, pooled.c, 1), p.oy + p.step * py,
                                       p.ox + p.step * px, p.step * 2};
                                for (int c = 0; c < pooled.c; ++c) {
                                    const double* sp = pooled.plane(c, 0);
                                    double* dp = q.t.plane(c, 0);
                                    for (int y = 0; y < h; ++y)
                                        for (int x = 0; x < w; ++x)
                                            dp[static_cast<size_t>(y) * w + x] =
                                                sp[static_cast<size_t>(2 * y + py) * pooled.w +
                                                   (2 * x + px)];
                                }
                                next.push_back(std::move(q));
                            }
                        }
                    }
                }
                parts = std::move(next);
                break;
            }
        }
    }

    for (const Part& p : parts) {
        for (int y = 0; y < p.t.h; ++y) {
            for (int x = 0; x < p.t.w; ++x) {
                const int px = p.ox + p.step * x + field.margin;
                const int py = p.oy + p.step * y + field.margin;
                const size_t i = field.idx(px, py);
                field.a[i] = p.t.at(y, x, 0, 0);
                field.b[i] = p.t.at(y, x, 1, 0);
                field.valid[i] = 1;
            }
        }
    }
    return field;
}

}  // namespace covdet
