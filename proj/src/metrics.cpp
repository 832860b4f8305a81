#include "covdet/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "covdet/imgops.hpp"

namespace covdet {

namespace {

constexpr double kPi = 3.14159265358979323846;

struct Candidate {
    double dist;
    int i, j;
};

// Greedy one-to-one assignment by ascending distance over the "within tol"
// candidate pairs; returns the number of matches.
int greedy_matches(const std::vector<Vec2>& mapped_a, const std::vector<bool>& visible_a,
                   const std::vector<Vec2>& b, double dist_tol) {
    std::vector<Candidate> cand;
    for (size_t i = 0; i < mapped_a.size(); ++i) {
        if (!visible_a[i]) continue;
        for (size_t j = 0; j < b.size(); ++j) {
            const double d = norm(mapped_a[i] - b[j]);
            if (d <= dist_tol) cand.push_back({d, static_cast<int>(i), static_cast<int>(j)});
        }
    }
    std::sort(cand.begin(), cand.end(), [](const Candidate& x, const Candidate& y) {
        if (x.dist != y.dist) return x.dist < y.dist;
        if (x.i != y.i) return x.i < y.i;
        return x.j < y.j;
    });
    std::vector<bool> used_a(mapped_a.size(), false), used_b(b.size(), false);
    int matches = 0;
    for (const Candidate& c : cand) {
        if (used_a[c.i] || used_b[c.j]) continue;
        used_a[c.i] = used_b[c.j] = true;
        ++matches;
    }
    return matches;
}

}  // namespace

double repeatability(const std::vector<Detection>& dets_a, const std::vector<Detection>& dets_b,
                     const Transform2D& h_ab, int b_width, int b_height, double dist_tol, int n) {
    const int kept_a = std::min<int>(n, static_cast<int>(dets_a.size()));
    const int kept_b = std::min<int>(n, static_cast<int>(dets_b.size()));
    if (kept_a == 0 || kept_b == 0) return 0.0;

    std::vector<Vec2> mapped(kept_a);
    std::vector<bool> visible(kept_a);
    for (int i = 0; i < kept_a; ++i) {
        mapped[i] = h_ab.apply({dets_a[i].x, dets_a[i].y});
        visible[i] = mapped[i].x >= 0 && mapped[i].x < b_width && mapped[i].y >= 0 &&
                     mapped[i].y < b_height;
    }
    std::vector<Vec2> pb(kept_b);
    for (int j = 0; j < kept_b; ++j) pb[j] = {dets_b[j].x, dets_b[j].y};

    const int matches = greedy_matches(mapped, visible, pb, dist_tol);
    return static_cast<double>(matches) / std::min(kept_a, kept_b);
}

PatchDescriptor patch_descriptor(const ImageBuffer& img, const Detection& det, int side) {
    PatchDescriptor d;
    const int cx = static_cast<int>(std::lround(det.x));
    const int cy = static_cast<int>(std::lround(det.y));
    const int x0 = cx - side / 2, y0 = cy - side / 2;
    if (x0 < 0 || y0 < 0 || x0 + side > img.width || y0 + side > img.height) {
        d.degenerate = true;
        return d;
    }
    // separable area-average from side x side to 8x8
    constexpr int kOut = 8;
    const double cell = static_cast<double>(side) / kOut;
    std::vector<double> w1d(static_cast<size_t>(kOut) * side, 0.0);
    for (int o = 0; o < kOut; ++o) {
        const double lo = o * cell, hi = (o + 1) * cell;
        for (int p = 0; p < side; ++p) {
            const double ov = std::min<double>(hi, p + 1) - std::max<double>(lo, p);
            if (ov > 0) w1d[static_cast<size_t>(o) * side + p] = ov / cell;
        }
    }
    std::vector<double> rows(static_cast<size_t>(kOut) * side, 0.0);  // 8 x side
    for (int oy = 0; oy < kOut; ++oy)
        for (int x = 0; x < side; ++x) {
            double acc = 0.0;
            for (int y = 0; y < side; ++y)
                acc += w1d[static_cast<size_t>(oy) * side + y] * img.at(x0 + x, y0 + y);
            rows[static_cast<size_t>(oy) * side + x] = acc;
        }
    for (int oy = 0; oy < kOut; ++oy)
        for (int ox = 0; ox < kOut; ++ox) {
            double acc = 0.0;
            for (int x = 0; x < side; ++x)
                acc += w1d[static_cast<size_t>(ox) * side + x] *
                       rows[static_cast<size_t>(oy) * side + x];
            d.v[static_cast<size_t>(oy) * kOut + ox] = acc;
        }
    double mean = 0.0;
    for (double v : d.v) mean += v;
    mean /= d.v.size();
    double nrm = 0.0;
    for (double& v : d.v) {
        v -= mean;
        nrm += v * v;
    }
    nrm = std::sqrt(nrm);
    if (nrm < 1e-9) {
        d.degenerate = true;
        std::fill(d.v.begin(), d.v.end(), 0.0);
        return d;
    }
    for (double& v : d.v) v /= nrm;
    return d;
}

double matching_score(const std::vector<Detection>& dets_a, const std::vector<Detection>& dets_b,
                      const ImageBuffer& img_a, const ImageBuffer& img_b, const Transform2D& h_ab,
                      double dist_tol, int n) {
    const int kept_a = std::min<int>(n, static_cast<int>(dets_a.size()));
    const int kept_b = std::min<int>(n, static_cast<int>(dets_b.size()));
    if (kept_a == 0 || kept_b == 0) return 0.0;

    std::vector<PatchDescriptor> da(kept_a), db(kept_b);
    for (int i = 0; i < kept_a; ++i) da[i] = patch_descriptor(img_a, dets_a[i]);
    for (int j = 0; j < kept_b; ++j) db[j] = patch_descriptor(img_b, dets_b[j]);

    const auto dist2 = [&](int i, int j) {
        double acc = 0.0;
        for (int k = 0; k < 64; ++k) {
            const double d = da[i].v[k] - db[j].v[k];
            acc += d * d;
        }
        return acc;
    };
    // nearest neighbours in both directions
    std::vector<int> nn_a(kept_a, -1), nn_b(kept_b, -1);
    for (int i = 0; i < kept_a; ++i) {
        if (da[i].degenerate) continue;
        double best = 0.0;
        for (int j = 0; j < kept_b; ++j) {
            if (db[j].degenerate) continue;
            const double d = dist2(i, j);
            if (nn_a[i] < 0 || d < best) {
                best = d;
                nn_a[i] = j;
            }
        }
    }
    for (int j = 0; j < kept_b; ++j) {
        if (db[j].degenerate) continue;
        double best = 0.0;
        for (int i = 0; i < kept_a; ++i) {
            if (da[i].degenerate) continue;
            const double d = dist2(i, j);
            if (nn_b[j] < 0 || d < best) {
                best = d;
                nn_b[j] = i;
            }
        }
    }
    int correct = 0;
    for (int i = 0; i < kept_a; ++i) {
        const int j = nn_a[i];
        if (j < 0 || nn_b[j] != i) continue;  // not mutual
        const Vec2 mapped = h_ab.apply({dets_a[i].x, dets_a[i].y});
        if (mapped.x < 0 || mapped.x >= img_b.width || mapped.y < 0 || mapped.y >= img_b.height)
            continue;
        if (norm(mapped - Vec2{dets_b[j].x, dets_b[j].y}) <= dist_tol) ++correct;
    }
    return static_cast<double>(correct) / std::min(kept_a, kept_b);
}

std::vector<RotationPair> make_rotation_pairs(const CropStore& store, double nuisance_max,
                                              int count, std::uint64_t seed) {
    if (store.empty()) throw std::invalid_argument("empty corpus");
    TrainConfig cfg;
    cfg.head = Head::Rotation;
    cfg.nuisance_translation_max = nuisance_max;
    Rng rng(seed);
    std::vector<RotationPair> pairs;
    pairs.reserve(count);
    for (int i = 0; i < count; ++i) {
        const auto& rec = store.crops[rng.uniform_int(store.size())];
        TripletSample t = sample_triplet(rec.crop, cfg, rng);
        pairs.push_back({std::move(t.x1), std::move(t.x2), t.g.angle()});
    }
    return pairs;
}

AngularErrorStats angular_error(const Model& model, const std::vector<RotationPair>& pairs,
                                RotationConvention convention) {
    if (model.head != Head::Rotation) throw std::invalid_argument("rotation-head model required");
    AngularErrorStats stats;
    std::vector<double> errs;
    errs.reserve(pairs.size());
    const int chunk = 256;
    for (size_t base = 0; base < pairs.size(); base += chunk) {
        const int b = static_cast<int>(std::min(pairs.size() - base, static_cast<size_t>(chunk)));
        Tensor x1(kPatchSide, kPatchSide, 1, b), x2(kPatchSide, kPatchSide, 1, b);
        for (int i = 0; i < b; ++i) {
            patch_to_input(pairs[base + i].x1, model.normalize_input, x1.plane(0, i));
            patch_to_input(pairs[base + i].x2, model.normalize_input, x2.plane(0, i));
        }
        const Tensor o1 = forward(model.spec, model.params, x1);
        const Tensor o2 = forward(model.spec, model.params, x2);
        for (int i = 0; i < b; ++i) {
            const double n1 = std::hypot(o1.at(0, 0, 0, i), o1.at(0, 0, 1, i));
            const double n2 = std::hypot(o2.at(0, 0, 0, i), o2.at(0, 0, 1, i));
            if (!(n1 > 1e-12) || !(n2 > 1e-12)) {
                ++stats.skipped;
                continue;
            }
            const double t1 = std::atan2(o1.at(0, 0, 1, i), o1.at(0, 0, 0, i));
            const double t2 = std::atan2(o2.at(0, 0, 1, i), o2.at(0, 0, 0, i));
            const double est = convention == RotationConvention::InverseComposition ? t1 - t2
                                                                                    : t2 - t1;
            double err = std::fabs(std::remainder(est - pairs[base + i].true_angle, 2.0 * kPi));
            errs.push_back(err * 180.0 / kPi);
        }
    }
    stats.evaluated = static_cast<int>(errs.size());
    if (errs.empty()) return stats;
    double sum = 0.0;
    for (double e : errs) sum += e;
    stats.mean_deg = sum / errs.size();
    std::sort(errs.begin(), errs.end());
    const size_t m = errs.size() / 2;
    stats.median_deg = errs.size() % 2 ? errs[m] : 0.5 * (errs[m - 1] + errs[m]);
    return stats;
}

std::vector<MetricCurve> build_curves(
    const std::vector<ImagePair>& pairs,
    const std::vector<std::pair<std::vector<Detection>, std::vector<Detection>>>& dets,
    const std::vector<int>& n_grid, double dist_tol, bool with_matching) {
    if (pairs.size() != dets.size()) throw std::invalid_argument("pairs/detections mismatch");
    if (n_grid.empty()) throw std::invalid_argument("empty n grid");
    // scene -> metric -> per-n accumulators
    std::map<std::string, std::map<std::string, std::vector<std::pair<double, int>>>> acc;
    for (size_t p = 0; p < pairs.size(); ++p) {
        for (size_t ni = 0; ni < n_grid.size(); ++ni) {
            const int n = n_grid[ni];
            const double rep =
                repeatability(dets[p].first, dets[p].second, pairs[p].h_ab, pairs[p].b.width,
                              pairs[p].b.height, dist_tol, n);
            auto& rep_acc = acc[pairs[p].scene]["repeatability"];
            rep_acc.resize(n_grid.size());
            rep_acc[ni].first += rep;
            rep_acc[ni].second += 1;
            if (with_matching) {
                const double ms =
                    matching_score(dets[p].first, dets[p].second, pairs[p].a, pairs[p].b,
                                   pairs[p].h_ab, dist_tol, n);
                auto& ms_acc = acc[pairs[p].scene]["matching_score"];
                ms_acc.resize(n_grid.size());
                ms_acc[ni].first += ms;
                ms_acc[ni].second += 1;
            }
        }
    }
    std::vector<MetricCurve> out;
    for (const auto& [scene, metrics] : acc) {
        for (const auto& [metric, points] : metrics) {
            MetricCurve c;
            c.scene = scene;
            c.metric = metric;
            for (size_t ni = 0; ni < n_grid.size(); ++ni)
                c.points.push_back({n_grid[ni], points[ni].first / points[ni].second});
            out.push_back(std::move(c));
        }
    }
    return out;
}

void write_curves_csv(const std::vector<MetricCurve>& curves, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open for writing: " + path);
    f << "scene,metric,n,score\n";
    char line[256];
    for (const auto& c : curves)
        for (const auto& p : c.points) {
            std::snprintf(line, sizeof(line), "%s,%s,%d,%.6f\n", c.scene.c_str(), c.metric.c_str(),
                          p.n, p.score);
            f << line;
        }
}

std::vector<ImagePair> read_pair_list(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open: " + path);
    const std::filesystem::path base = std::filesystem::path(path).parent_path();
    std::vector<ImagePair> pairs;
    std::string line;
    while (std::getline(f, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ss(line);
        std::string pa, pb;
        Transform2D t;
        if (!(ss >> pa >> pb >> t.m11 >> t.m12 >> t.m21 >> t.m22 >> t.t1 >> t.t2))
            throw std::runtime_error("malformed pair list line: " + line);
        ImagePair pair;
        const auto resolve = [&](const std::string& p) {
            const std::filesystem::path fp(p);
            return fp.is_absolute() ? fp.string() : (base / fp).string();
        };
        pair.a = read_pgm(resolve(pa));
        pair.b = read_pgm(resolve(pb));
        pair.h_ab = t;
        pair.scene = std::filesystem::path(pa).stem().string();
        pairs.push_back(std::move(pair));
    }
    return pairs;
}

void write_pair_list(const std::vector<ImagePair>& pairs, const std::vector<std::string>& a_paths,
                     const std::vector<std::string>& b_paths, const std::string& path) {
    if (pairs.size() != a_paths.size() || pairs.size() != b_paths.size())
        throw std::invalid_argument("pair list size mismatch");
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open for writing: " + path);
    for (size_t i = 0; i < pairs.size(); ++i) {
        const Transform2D& t = pairs[i].h_ab;
        f << a_paths[i] << " " << b_paths[i] << " " << to_text(t) << "\n";
    }
}

}  // namespace covdet
