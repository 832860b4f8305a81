#include "covdet/detect.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "covdet/image.hpp"

namespace covdet {

double VoteMap::total() const {
    double t = 0.0;
    for (double v : mass) t += v;
    return t;
}

VoteMap accumulate_votes(const DisplacementField& field) {
    if (field.head != Head::Translation)
        throw std::invalid_argument("translation-head field required");
    VoteMap votes(field.width, field.height);
    for (int y = 0; y < field.height; ++y) {
        for (int x = 0; x < field.width; ++x) {
            const size_t i = field.idx(x, y);
            if (!field.valid[i]) continue;
            const double tx = x + field.center_offset + field.a[i];
            const double ty = y + field.center_offset + field.b[i];
            // discard whole votes whose 4-bin support would leave the map
            if (!(tx >= 0.0 && tx <= field.width - 1.0 && ty >= 0.0 && ty <= field.height - 1.0))
                continue;
            const int x0 = static_cast<int>(std::floor(tx));
            const int y0 = static_cast<int>(std::floor(ty));
            const double fx = tx - x0, fy = ty - y0;
            const double w[4] = {(1 - fx) * (1 - fy), fx * (1 - fy), (1 - fx) * fy, fx * fy};
            const int bx[4] = {x0, x0 + 1, x0, x0 + 1};
            const int by[4] = {y0, y0, y0 + 1, y0 + 1};
            for (int k = 0; k < 4; ++k) {
                if (w[k] > 0.0) votes.at(bx[k], by[k]) += w[k];
            }
        }
    }
    return votes;
}

std::vector<Detection> nms(const VoteMap& votes, int radius, int max_detections, bool subpixel) {
    std::vector<Detection> out;
    if (radius < 1) throw std::invalid_argument("nms radius must be >= 1");
    if (max_detections <= 0) return out;
    for (int y = radius; y < votes.height - radius; ++y) {
        for (int x = radius; x < votes.width - radius; ++x) {
            const double v = votes.at(x, y);
            if (!(v > 0.0)) continue;
            bool peak = true;
            for (int ny = y - radius; ny <= y + radius && peak; ++ny) {
                for (int nx = x - radius; nx <= x + radius; ++nx) {
                    if (nx == x && ny == y) continue;
                    const double nv = votes.at(nx, ny);
                    const bool later = ny > y || (ny == y && nx > x);
                    if (later ? !(v > nv) : !(v >= nv)) {
                        peak = false;
                        break;
                    }
                }
            }
            if (!peak) continue;
            Detection d;
            d.confidence = v;
            if (subpixel) {
                double mx = 0.0, my = 0.0, m = 0.0;
                for (int ny = y - 1; ny <= y + 1; ++ny)
                    for (int nx = x - 1; nx <= x + 1; ++nx) {
                        const double nv = votes.at(nx, ny);
                        mx += nv * nx;
                        my += nv * ny;
                        m += nv;
                    }
                d.x = mx / m;
                d.y = my / m;
            } else {
                d.x = x;
                d.y = y;
            }
            out.push_back(d);
        }
    }
    std::sort(out.begin(), out.end(), [](const Detection& a, const Detection& b) {
        if (a.confidence != b.confidence) return a.confidence > b.confidence;
        if (a.y != b.y) return a.y < b.y;
        return a.x < b.x;
    });
    if (out.size() > static_cast<size_t>(max_detections)) out.resize(max_detections);
    return out;
}

std::vector<Detection> detect(const Model& model, const ImageBuffer& img, int stride,
                              int max_detections, int nms_radius, bool subpixel) {
    const DisplacementField field = dense_regress(model, img, stride);
    const VoteMap votes = accumulate_votes(field);
    return nms(votes, nms_radius, max_detections, subpixel);
}

void assign_orientations(const DisplacementField& rot_field, std::vector<Detection>& detections,
                         int radius) {
    if (rot_field.head != Head::Rotation)
        throw std::invalid_argument("rotation-head field required");
    for (Detection& d : detections) {
        const int cx = static_cast<int>(std::lround(d.x));
        const int cy = static_cast<int>(std::lround(d.y));
        double sc = 0.0, ss = 0.0;
        for (int y = std::max(0, cy - radius); y <= std::min(rot_field.height - 1, cy + radius);
             ++y) {
            for (int x = std::max(0, cx - radius); x <= std::min(rot_field.width - 1, cx + radius);
                 ++x) {
                const size_t i = rot_field.idx(x, y);
                if (!rot_field.valid[i]) continue;
                const double n = std::hypot(rot_field.a[i], rot_field.b[i]);
                if (!(n > 1e-12)) continue;
                sc += rot_field.a[i] / n;
                ss += rot_field.b[i] / n;
            }
        }
        if (std::hypot(sc, ss) > 1e-12) {
            d.has_angle = true;
            d.angle = std::atan2(ss, sc);
        }
    }
}

std::string detections_to_csv(const std::vector<Detection>& dets) {
    std::string out;
    char line[160];
    for (const Detection& d : dets) {
        if (d.has_angle)
            std::snprintf(line, sizeof(line), "%.6f,%.6f,%.6f,%.6f\n", d.x, d.y, d.confidence,
                          d.angle);
        else
            std::snprintf(line, sizeof(line), "%.6f,%.6f,%.6f\n", d.x, d.y, d.confidence);
        out += line;
    }
    return out;
}

void write_detections_csv(const std::vector<Detection>& dets, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open for writing: " + path);
    f << detections_to_csv(dets);
    if (!f) throw std::runtime_error("write failed: " + path);
}

void write_votes_pgm(const VoteMap& votes, const std::string& path) {
    ImageBuffer img(votes.width, votes.height);
    double peak = 0.0;
    for (double v : votes.mass) peak = std::max(peak, v);
    const double scale = peak > 0 ? 255.0 / peak : 0.0;
    for (size_t i = 0; i < votes.mass.size(); ++i) img.data[i] = votes.mass[i] * scale;
    write_pgm(img, path);
}

}  // namespace covdet
