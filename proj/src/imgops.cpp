#include "covdet/imgops.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace covdet {

double bilinear_sample(const ImageBuffer& img, double x, double y) {
    const int x0 = static_cast<int>(std::floor(x));
    const int y0 = static_cast<int>(std::floor(y));
    const double fx = x - x0;
    const double fy = y - y0;
    const auto cx = [&](int v) { return std::clamp(v, 0, img.width - 1); };
    const auto cy = [&](int v) { return std::clamp(v, 0, img.height - 1); };
    const double v00 = img.at(cx(x0), cy(y0));
    const double v10 = img.at(cx(x0 + 1), cy(y0));
    const double v01 = img.at(cx(x0), cy(y0 + 1));
    const double v11 = img.at(cx(x0 + 1), cy(y0 + 1));
    return (1 - fy) * ((1 - fx) * v00 + fx * v10) + fy * ((1 - fx) * v01 + fx * v11);
}

namespace {

ImageBuffer warp_impl(const ImageBuffer& img, const Transform2D& g, const WarpConfig& cfg,
                      bool parallel) {
    if (cfg.out_width < 1 || cfg.out_height < 1)
        throw std::invalid_argument("warp output size must be positive");
    const Transform2D ginv = inverse(g);  // throws "non-invertible transform"
    ImageBuffer out(cfg.out_width, cfg.out_height);
    const double ocx = (cfg.out_width - 1) / 2.0;
    const double ocy = (cfg.out_height - 1) / 2.0;
    const double icx = (img.width - 1) / 2.0;
    const double icy = (img.height - 1) / 2.0;
#pragma omp parallel for schedule(static) if (parallel)
    for (int oy = 0; oy < cfg.out_height; ++oy) {
        for (int ox = 0; ox < cfg.out_width; ++ox) {
            const Vec2 src = ginv.apply({ox - ocx, oy - ocy});
            out.at(ox, oy) = bilinear_sample(img, src.x + icx, src.y + icy);
        }
    }
    return out;
}

ImageBuffer correlate_same(const ImageBuffer& img, const std::vector<double>& kernel, int radius,
                           bool parallel) {
    ImageBuffer out(img.width, img.height);
    const int k = 2 * radius + 1;
#pragma omp parallel for schedule(static) if (parallel)
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            double acc = 0.0;
            for (int ky = 0; ky < k; ++ky) {
                const int sy = std::clamp(y + ky - radius, 0, img.height - 1);
                for (int kx = 0; kx < k; ++kx) {
                    const int sx = std::clamp(x + kx - radius, 0, img.width - 1);
                    acc += kernel[static_cast<size_t>(ky) * k + kx] * img.at(sx, sy);
                }
            }
            out.at(x, y) = acc;
        }
    }
    return out;
}

}  // namespace

ImageBuffer warp(const ImageBuffer& img, const Transform2D& g, const WarpConfig& cfg) {
    return warp_impl(img, g, cfg, true);
}

ImageBuffer serial::warp(const ImageBuffer& img, const Transform2D& g, const WarpConfig& cfg) {
    return warp_impl(img, g, cfg, false);
}

ImageBuffer sample_patch(const ImageBuffer& src, Vec2 center, const Transform2D& rot, int side) {
    Transform2D lin = rot;
    lin.t1 = lin.t2 = 0.0;
    const Transform2D inv = inverse(lin);
    ImageBuffer out(side, side);
    const double c = (side - 1) / 2.0;
    for (int oy = 0; oy < side; ++oy) {
        for (int ox = 0; ox < side; ++ox) {
            const Vec2 s = inv.apply({ox - c, oy - c});
            out.at(ox, oy) = bilinear_sample(src, center.x + s.x, center.y + s.y);
        }
    }
    return out;
}

std::vector<double> log_kernel(double sigma, int& radius) {
    if (!(sigma > 0)) throw std::invalid_argument("sigma must be positive");
    radius = static_cast<int>(std::ceil(4.0 * sigma));
    const int k = 2 * radius + 1;
    std::vector<double> kernel(static_cast<size_t>(k) * k);
    const double s2 = sigma * sigma;
    double gauss_sum = 0.0;
    for (int y = -radius; y <= radius; ++y)
        for (int x = -radius; x <= radius; ++x)
            gauss_sum += std::exp(-(x * x + y * y) / (2.0 * s2));
    double mean = 0.0;
    for (int y = -radius; y <= radius; ++y) {
        for (int x = -radius; x <= radius; ++x) {
            const double r2 = x * x + y * y;
            const double g = std::exp(-r2 / (2.0 * s2)) / gauss_sum;
            const double v = g * (r2 - 2.0 * s2) / (s2 * s2);
            kernel[static_cast<size_t>(y + radius) * k + (x + radius)] = v;
            mean += v;
        }
    }
    mean /= kernel.size();
    for (double& v : kernel) v -= mean;  // exact zero response on constants
    return kernel;
}

ImageBuffer log_response(const ImageBuffer& img, double sigma) {
    int radius = 0;
    const std::vector<double> kernel = log_kernel(sigma, radius);
    return correlate_same(img, kernel, radius, true);
}

ImageBuffer serial::log_response(const ImageBuffer& img, double sigma) {
    int radius = 0;
    const std::vector<double> kernel = log_kernel(sigma, radius);
    return correlate_same(img, kernel, radius, false);
}

bool crop_is_informative(const ImageBuffer& crop, double sigma, double threshold) {
    const ImageBuffer resp = log_response(crop, sigma);
    double acc = 0.0;
    for (double v : resp.data) acc += std::fabs(v);
    return acc / resp.data.size() > threshold;
}

ImageBuffer gaussian_blur(const ImageBuffer& img, double sigma) {
    if (!(sigma > 0)) return img;
    const int radius = std::max(1, static_cast<int>(std::ceil(3.5 * sigma)));
    std::vector<double> w(2 * radius + 1);
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        w[i + radius] = std::exp(-(i * i) / (2.0 * sigma * sigma));
        sum += w[i + radius];
    }
    for (double& v : w) v /= sum;

    ImageBuffer tmp(img.width, img.height);
#pragma omp parallel for schedule(static)
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            double acc = 0.0;
            for (int i = -radius; i <= radius; ++i)
                acc += w[i + radius] * img.at(std::clamp(x + i, 0, img.width - 1), y);
            tmp.at(x, y) = acc;
        }
    }
    ImageBuffer out(img.width, img.height);
#pragma omp parallel for schedule(static)
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            double acc = 0.0;
            for (int i = -radius; i <= radius; ++i)
                acc += w[i + radius] * tmp.at(x, std::clamp(y + i, 0, img.height - 1));
            out.at(x, y) = acc;
        }
    }
    return out;
}

ImageBuffer local_normalize(const ImageBuffer& img, int window) {
    const int w = img.width, h = img.height;
    // Summed-area tables for sums and squared sums, (w+1) x (h+1).
    std::vector<double> sat(static_cast<size_t>(w + 1) * (h + 1), 0.0);
    std::vector<double> sat2(static_cast<size_t>(w + 1) * (h + 1), 0.0);
    for (int y = 0; y < h; ++y) {
        double row = 0.0, row2 = 0.0;
        for (int x = 0; x < w; ++x) {
            const double v = img.at(x, y);
            row += v;
            row2 += v * v;
            sat[static_cast<size_t>(y + 1) * (w + 1) + (x + 1)] =
                sat[static_cast<size_t>(y) * (w + 1) + (x + 1)] + row;
            sat2[static_cast<size_t>(y + 1) * (w + 1) + (x + 1)] =
                sat2[static_cast<size_t>(y) * (w + 1) + (x + 1)] + row2;
        }
    }
    const auto box = [&](const std::vector<double>& s, int x0, int y0, int x1, int y1) {
        // inclusive rectangle [x0,x1] x [y0,y1]
        return s[static_cast<size_t>(y1 + 1) * (w + 1) + (x1 + 1)] -
               s[static_cast<size_t>(y0) * (w + 1) + (x1 + 1)] -
               s[static_cast<size_t>(y1 + 1) * (w + 1) + x0] +
               s[static_cast<size_t>(y0) * (w + 1) + x0];
    };
    ImageBuffer out(w, h);
    const int lo = window / 2;
#pragma omp parallel for schedule(static)
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const int x0 = std::clamp(x - lo, 0, w - 1);
            const int y0 = std::clamp(y - lo, 0, h - 1);
            const int x1 = std::clamp(x - lo + window - 1, 0, w - 1);
            const int y1 = std::clamp(y - lo + window - 1, 0, h - 1);
            const double cnt = static_cast<double>(x1 - x0 + 1) * (y1 - y0 + 1);
            const double mean = box(sat, x0, y0, x1, y1) / cnt;
            const double var = std::max(0.0, box(sat2, x0, y0, x1, y1) / cnt - mean * mean);
            out.at(x, y) = var > 1e-12 ? (img.at(x, y) - mean) / std::sqrt(var) : 0.0;
        }
    }
    return out;
}

void patch_to_input(const ImageBuffer& patch, bool normalize, double* out) {
    const size_t n = patch.data.size();
    if (!normalize) {
        std::copy(patch.data.begin(), patch.data.end(), out);
        return;
    }
    double mean = 0.0;
    for (double v : patch.data) mean += v;
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (double v : patch.data) var += (v - mean) * (v - mean);
    var /= static_cast<double>(n);
    if (var > 1e-12) {
        const double inv = 1.0 / std::sqrt(var);
        for (size_t i = 0; i < n; ++i) out[i] = (patch.data[i] - mean) * inv;
    } else {
        std::fill(out, out + n, 0.0);
    }
}

}  // namespace covdet
