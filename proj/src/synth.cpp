#include "covdet/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "covdet/imgops.hpp"
#include "covdet/rng.hpp"

namespace covdet {

namespace {

constexpr double kTau = 6.283185307179586476925286766559;

struct Shape {
    bool is_disc = false;
    double cx = 0, cy = 0;
    double radius = 0;                     // disc radius / polygon max radius
    std::vector<Vec2> vertices;            // polygon only, in order
    double intensity = 0;
};

// even-odd ray casting; vertices form a simple polygon
bool inside_polygon(const std::vector<Vec2>& poly, double x, double y) {
    bool in = false;
    const size_t n = poly.size();
    for (size_t i = 0, j = n - 1; i < n; j = i++) {
        if ((poly[i].y > y) != (poly[j].y > y)) {
            const double xcross =
                poly[j].x + (y - poly[j].y) / (poly[i].y - poly[j].y) * (poly[i].x - poly[j].x);
            if (x < xcross) in = !in;
        }
    }
    return in;
}

double coverage(const Shape& s, int px, int py) {
    // 4x4 supersampling of the pixel square centred on (px, py)
    int hit = 0;
    for (int sy = 0; sy < 4; ++sy) {
        for (int sx = 0; sx < 4; ++sx) {
            const double x = px - 0.5 + (sx + 0.5) / 4.0;
            const double y = py - 0.5 + (sy + 0.5) / 4.0;
            if (s.is_disc) {
                const double dx = x - s.cx, dy = y - s.cy;
                if (dx * dx + dy * dy <= s.radius * s.radius) ++hit;
            } else if (inside_polygon(s.vertices, x, y)) {
                ++hit;
            }
        }
    }
    return hit / 16.0;
}

}  // namespace

namespace {

// bilinearly upsampled random grid ("value noise")
void add_value_noise(ImageBuffer& img, Rng& rng, int cell, double lo, double hi) {
    const int gw = img.width / cell + 2, gh = img.height / cell + 2;
    std::vector<double> grid(static_cast<size_t>(gw) * gh);
    for (double& v : grid) v = rng.uniform(lo, hi);
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            const double gx = static_cast<double>(x) / cell, gy = static_cast<double>(y) / cell;
            const int x0 = static_cast<int>(gx), y0 = static_cast<int>(gy);
            const double fx = gx - x0, fy = gy - y0;
            const double v00 = grid[static_cast<size_t>(y0) * gw + x0];
            const double v10 = grid[static_cast<size_t>(y0) * gw + x0 + 1];
            const double v01 = grid[static_cast<size_t>(y0 + 1) * gw + x0];
            const double v11 = grid[static_cast<size_t>(y0 + 1) * gw + x0 + 1];
            img.at(x, y) +=
                (1 - fy) * ((1 - fx) * v00 + fx * v10) + fy * ((1 - fx) * v01 + fx * v11);
        }
    }
}

}  // namespace

ImageBuffer synth_image(const SynthConfig& cfg, std::uint64_t image_seed,
                        std::vector<Anchor>* anchors) {
    Rng rng(image_seed);
    const int side = cfg.side;

    // smooth background: coarse value noise
    ImageBuffer img(side, side, 0.0);
    add_value_noise(img, rng, 24, 100.0, 160.0);

    std::vector<Shape> shapes;
    const int margin = 24;
    for (int k = 0; k < cfg.shapes; ++k) {
        Shape s;
        s.is_disc = rng.uniform() < 0.35;
        s.radius = s.is_disc ? rng.uniform(6.0, 16.0) : rng.uniform(10.0, 26.0);
        // keep shapes mostly disjoint so corners stay clean anchors
        for (int attempt = 0; attempt < 40; ++attempt) {
            s.cx = rng.uniform(margin, side - margin);
            s.cy = rng.uniform(margin, side - margin);
            bool ok = true;
            for (const Shape& o : shapes) {
                const double d = std::hypot(s.cx - o.cx, s.cy - o.cy);
                if (d < 0.9 * (s.radius + o.radius)) {
                    ok = false;
                    break;
                }
            }
            if (ok) break;
        }
        s.intensity = rng.uniform() < 0.5 ? rng.uniform(5.0, 55.0) : rng.uniform(205.0, 250.0);
        if (!s.is_disc) {
            const int nv = 3 + static_cast<int>(rng.uniform_int(4));
            const double rot = rng.uniform(0.0, kTau);
            const double ax = rng.uniform(0.7, 1.3), ay = rng.uniform(0.7, 1.3);
            for (int v = 0; v < nv; ++v) {
                const double ang = rot + kTau * (v + rng.uniform(-0.25, 0.25)) / nv;
                const double r = s.radius * rng.uniform(0.75, 1.0);
                s.vertices.push_back({s.cx + ax * r * std::cos(ang), s.cy + ay * r * std::sin(ang)});
            }
        }
        shapes.push_back(std::move(s));
    }

    for (const Shape& s : shapes) {
        const int x0 = std::max(0, static_cast<int>(std::floor(s.cx - 1.6 * s.radius)) - 2);
        const int x1 = std::min(side - 1, static_cast<int>(std::ceil(s.cx + 1.6 * s.radius)) + 2);
        const int y0 = std::max(0, static_cast<int>(std::floor(s.cy - 1.6 * s.radius)) - 2);
        const int y1 = std::min(side - 1, static_cast<int>(std::ceil(s.cy + 1.6 * s.radius)) + 2);
        for (int y = y0; y <= y1; ++y)
            for (int x = x0; x <= x1; ++x) {
                const double c = coverage(s, x, y);
                if (c > 0) img.at(x, y) = (1 - c) * img.at(x, y) + c * s.intensity;
            }
        if (anchors) {
            if (s.is_disc) {
                anchors->push_back({s.cx, s.cy, 'b'});
            } else {
                for (const Vec2& v : s.vertices)
                    if (v.x >= 0 && v.x < side && v.y >= 0 && v.y < side)
                        anchors->push_back({v.x, v.y, 'c'});
            }
        }
    }

    // fine-grain texture over everything, so crops carry LoG-scale contrast
    add_value_noise(img, rng, 6, -42.0, 42.0);
    img = gaussian_blur(img, 0.6);
    for (double& v : img.data) v = std::clamp(v, 0.0, 255.0);
    return img;
}

int synth_corpus(const SynthConfig& cfg, const std::string& out_dir) {
    namespace fs = std::filesystem;
    if (cfg.count > 0) fs::create_directories(out_dir);
    char name[64];
    for (int i = 0; i < cfg.count; ++i) {
        std::vector<Anchor> anchors;
        const ImageBuffer img = synth_image(cfg, mix_seed(cfg.seed, i), &anchors);
        std::snprintf(name, sizeof(name), "image_%04d.pgm", i);
        write_pgm(img, (fs::path(out_dir) / name).string());
        std::snprintf(name, sizeof(name), "image_%04d_anchors.csv", i);
        std::ofstream f(fs::path(out_dir) / name);
        f << "x,y,kind\n";
        char line[96];
        for (const Anchor& a : anchors) {
            std::snprintf(line, sizeof(line), "%.3f,%.3f,%c\n", a.x, a.y, a.kind);
            f << line;
        }
    }
    return cfg.count;
}

}  // namespace covdet
