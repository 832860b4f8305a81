#include "covdet/training.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "covdet/imgops.hpp"

namespace fs = std::filesystem;

namespace covdet {

namespace {

constexpr double kOverlapFloor = 0.27;
constexpr int kValPairs = 2000;
constexpr double kMomentum = 0.9;
constexpr int kPatience = 5;
constexpr int kMaxLrDrops = 2;
constexpr double kImproveThreshold = 1e-3;

// FNV-1a, used for the stable validation split.
std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

ImageBuffer copy_patch(const ImageBuffer& crop, int sx, int sy) {
    ImageBuffer p(kPatchSide, kPatchSide);
    for (int y = 0; y < kPatchSide; ++y)
        for (int x = 0; x < kPatchSide; ++x) p.at(x, y) = crop.at(sx + x, sy + y);
    return p;
}

void apply_jitter(ImageBuffer& img, const JitterConfig& cfg, Rng& rng) {
    if (!cfg.enabled) return;
    for (double& v : img.data) {
        const double m = rng.uniform(-cfg.multiplicative, cfg.multiplicative);
        const double a = rng.uniform(-cfg.additive, cfg.additive);
        v = std::clamp(v * (1.0 + m) + a, 0.0, 255.0);
    }
}

// Integer displacements whose 28x28 footprints overlap by at least the
// floor. The overlap fraction of axis-aligned equal squares displaced by
// (dx,dy) is (28-|dx|)(28-|dy|)/28^2.
const std::vector<std::pair<int, int>>& translation_displacements() {
    static const std::vector<std::pair<int, int>> set = [] {
        std::vector<std::pair<int, int>> out;
        const double need = kOverlapFloor * kPatchSide * kPatchSide;
        for (int dy = -kPatchSide; dy <= kPatchSide; ++dy)
            for (int dx = -kPatchSide; dx <= kPatchSide; ++dx)
                if ((kPatchSide - std::abs(dx)) * (kPatchSide - std::abs(dy)) >= need &&
                    std::abs(dx) < kPatchSide && std::abs(dy) < kPatchSide)
                    out.emplace_back(dx, dy);
        return out;
    }();
    return set;
}

// Integer displacements within Euclidean radius `r`.
std::vector<std::pair<int, int>> disc_displacements(double r) {
    std::vector<std::pair<int, int>> out;
    const int b = static_cast<int>(std::floor(r));
    for (int dy = -b; dy <= b; ++dy)
        for (int dx = -b; dx <= b; ++dx)
            if (dx * dx + dy * dy <= r * r) out.emplace_back(dx, dy);
    return out;
}

}  // namespace

std::string CropRecord::provenance() const {
    std::ostringstream os;
    os << source << ":" << cx << "," << cy;
    return os.str();
}

CropStore harvest_crops(const std::string& dir, int per_image, std::uint64_t seed, double sigma,
                        double threshold) {
    std::vector<std::string> files;
    if (fs::is_directory(dir)) {
        for (const auto& e : fs::directory_iterator(dir)) {
            if (e.is_regular_file() && e.path().extension() == ".pgm")
                files.push_back(e.path().string());
        }
    }
    std::sort(files.begin(), files.end());

    CropStore store;
    int usable = 0;
    for (size_t i = 0; i < files.size(); ++i) {
        ImageBuffer img;
        try {
            img = read_pgm(files[i]);
        } catch (const std::exception&) {
            continue;  // unreadable file, not fatal
        }
        if (img.width < kCropSide || img.height < kCropSide) continue;
        ++usable;
        Rng rng(mix_seed(seed, i));
        for (int k = 0; k < per_image; ++k) {
            const int x0 = static_cast<int>(rng.uniform_int(img.width - kCropSide + 1));
            const int y0 = static_cast<int>(rng.uniform_int(img.height - kCropSide + 1));
            ImageBuffer crop = extract_crop(
                img, {static_cast<double>(x0 + kCropSide / 2), static_cast<double>(y0 + kCropSide / 2)},
                kCropSide);
            if (crop_is_informative(crop, sigma, threshold)) {
                store.crops.push_back(
                    {std::move(crop), files[i], x0 + kCropSide / 2, y0 + kCropSide / 2});
            }
        }
    }
    if (usable == 0) throw std::runtime_error("empty corpus");
    return store;
}

void save_crop_store(const CropStore& store, const std::string& dir) {
    fs::create_directories(dir);
    std::ofstream index(fs::path(dir) / "index.csv");
    if (!index) throw std::runtime_error("cannot open for writing: " + dir + "/index.csv");
    index << "file,source,cx,cy\n";
    char name[32];
    for (size_t i = 0; i < store.crops.size(); ++i) {
        std::snprintf(name, sizeof(name), "crop_%06zu.pgm", i);
        write_pgm(store.crops[i].crop, (fs::path(dir) / name).string());
        index << name << "," << store.crops[i].source << "," << store.crops[i].cx << ","
              << store.crops[i].cy << "\n";
    }
}

CropStore load_crop_store(const std::string& dir) {
    std::ifstream index(fs::path(dir) / "index.csv");
    if (!index) throw std::runtime_error("cannot open: " + dir + "/index.csv");
    std::string line;
    std::getline(index, line);  // header
    CropStore store;
    while (std::getline(index, line)) {
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string file, source, cx, cy;
        if (!std::getline(ss, file, ',') || !std::getline(ss, source, ',') ||
            !std::getline(ss, cx, ',') || !std::getline(ss, cy))
            throw std::runtime_error("malformed crop index");
        CropRecord rec;
        rec.crop = read_pgm((fs::path(dir) / file).string());
        rec.source = source;
        rec.cx = std::stoi(cx);
        rec.cy = std::stoi(cy);
        if (rec.crop.width != kCropSide || rec.crop.height != kCropSide)
            throw std::runtime_error("crop store holds a non-57x57 image");
        store.crops.push_back(std::move(rec));
    }
    return store;
}

void split_validation(const CropStore& all, CropStore& train_out, CropStore& val_out,
                      int val_percent) {
    train_out.crops.clear();
    val_out.crops.clear();
    for (const auto& rec : all.crops) {
        if (fnv1a(rec.provenance()) % 100 < static_cast<std::uint64_t>(val_percent))
            val_out.crops.push_back(rec);
        else
            train_out.crops.push_back(rec);
    }
}

TrainConfig parse_train_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open config: " + path);
    TrainConfig cfg;
    std::string line;
    int lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        const size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const auto trim = [](std::string s) {
            const auto b = s.find_first_not_of(" \t\r");
            const auto e = s.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
        };
        line = trim(line);
        if (line.empty()) continue;
        const size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("malformed config line " + std::to_string(lineno));
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        try {
            if (key == "batch_size")
                cfg.batch_size = std::stoi(value);
            else if (key == "pairs_per_epoch")
                cfg.pairs_per_epoch = std::stoi(value);
            else if (key == "lr")
                cfg.lr = std::stod(value);
            else if (key == "lr_drop_factor")
                cfg.lr_drop_factor = std::stod(value);
            else if (key == "max_epochs")
                cfg.max_epochs = std::stoi(value);
            else if (key == "seed")
                cfg.seed = std::stoull(value);
            else if (key == "head")
                cfg.head = head_from_name(value);
            else if (key == "nuisance_translation_max")
                cfg.nuisance_translation_max = std::stod(value);
            else
                throw std::invalid_argument("unknown config key: " + key);
        } catch (const std::invalid_argument&) {
            throw;
        } catch (const std::exception&) {
            throw std::invalid_argument("bad value for config key: " + key);
        }
    }
    validate_config(cfg);
    return cfg;
}

void validate_config(const TrainConfig& cfg) {
    if (cfg.batch_size < 1 || cfg.pairs_per_epoch < 1 || !(cfg.lr > 0) ||
        !(cfg.lr_drop_factor > 1) || cfg.max_epochs < 0 || cfg.nuisance_translation_max < 0)
        throw std::invalid_argument("invalid training config");
}

ConstraintClass head_class(Head h) {
    return h == Head::Translation ? ConstraintClass::Point : ConstraintClass::Orientation;
}

TripletSample sample_triplet(const ImageBuffer& crop, const TrainConfig& cfg, Rng& rng) {
    if (crop.width != kCropSide || crop.height != kCropSide)
        throw std::invalid_argument("triplet crop must be 57x57");
    TripletSample t;
    if (cfg.head == Head::Translation) {
        const auto& disp = translation_displacements();
        const auto [dx, dy] = disp[rng.uniform_int(disp.size())];
        // patch starts must keep both footprints inside the crop
        const int max_start = kCropSide - kPatchSide;
        const int lox = std::max(0, -dx), hix = std::min(max_start, max_start - dx);
        const int loy = std::max(0, -dy), hiy = std::min(max_start, max_start - dy);
        const int s1x = lox + static_cast<int>(rng.uniform_int(hix - lox + 1));
        const int s1y = loy + static_cast<int>(rng.uniform_int(hiy - loy + 1));
        t.x1 = copy_patch(crop, s1x, s1y);
        t.x2 = copy_patch(crop, s1x + dx, s1y + dy);
        // x2(p) = crop(s2+p) = x1(p + d), i.e. x2 is x1 translated by -d.
        t.g = Transform2D::translation(-dx, -dy);
    } else {
        // Rotated resampling needs the patch's support disc (radius
        // 13.5*sqrt(2)) inside the crop, which keeps starts in [6, 23].
        const int lo = 6, hi = 23;
        const auto disp = disc_displacements(cfg.nuisance_translation_max);
        const auto [dx, dy] = disp[rng.uniform_int(disp.size())];
        const int lox = std::max(lo, lo - dx), hix = std::min(hi, hi - dx);
        const int loy = std::max(lo, lo - dy), hiy = std::min(hi, hi - dy);
        const int s1x = lox + static_cast<int>(rng.uniform_int(hix - lox + 1));
        const int s1y = loy + static_cast<int>(rng.uniform_int(hiy - loy + 1));
        const double theta = rng.uniform(0.0, 2.0 * 3.14159265358979323846);
        const Transform2D rot = Transform2D::rotation(theta);
        const double half = (kPatchSide - 1) / 2.0;
        const Vec2 c2{s1x + dx + half, s1y + dy + half};
        t.x1 = copy_patch(crop, s1x, s1y);
        t.x2 = sample_patch(crop, c2, rot, kPatchSide);
        // x2 = g x1 with g = (R, R*(c1 - c2)); the translation part is the
        // nuisance the orientation constraint ignores.
        t.g = rot;
        const Vec2 tt = rot.apply({static_cast<double>(-dx), static_cast<double>(-dy)});
        t.g.t1 = tt.x;
        t.g.t2 = tt.y;
    }
    apply_jitter(t.x2, cfg.jitter, rng);
    return t;
}

TripletSample sample_triplet(const ImageBuffer& crop, const TrainConfig& cfg, std::uint64_t seed) {
    Rng rng(seed);
    return sample_triplet(crop, cfg, rng);
}

CovLoss covariance_loss(ConstraintClass cls, std::span<const double> raw1,
                        std::span<const double> raw2, const Transform2D& g,
                        RotationConvention convention) {
    CovLoss out;
    if (cls == ConstraintClass::Point) {
        const Transform2D h1 = output_to_transform(raw1, Head::Translation);
        const Transform2D h2 = output_to_transform(raw2, Head::Translation);
        out.loss = constraint_residual(cls, h1, h2, g, convention);
        const double rx = raw2[0] - raw1[0] - g.t1;
        const double ry = raw2[1] - raw1[1] - g.t2;
        out.d_raw2 = {2 * rx, 2 * ry};
        out.d_raw1 = {-2 * rx, -2 * ry};
        return out;
    }
    if (cls == ConstraintClass::Orientation) {
        const double n1 = std::hypot(raw1[0], raw1[1]);
        const double n2 = std::hypot(raw2[0], raw2[1]);
        if (!(n1 > 1e-12) || !(n2 > 1e-12)) {
            out.degenerate = true;
            return out;
        }
        const Transform2D h1 = output_to_transform(raw1, Head::Rotation);
        const Transform2D h2 = output_to_transform(raw2, Head::Rotation);
        out.loss = constraint_residual(cls, h1, h2, g, convention);
        // loss = 4*(1 - cos(rel - theta_g)); d loss/d theta_i via the
        // normalisation: d theta/d a_u = -a_v/n^2, d theta/d a_v = a_u/n^2.
        const double t1 = std::atan2(raw1[1], raw1[0]);
        const double t2 = std::atan2(raw2[1], raw2[0]);
        const double rel = (convention == RotationConvention::InverseComposition) ? t1 - t2
                                                                                  : t2 - t1;
        double s = 4.0 * std::sin(rel - g.angle());
        if (convention != RotationConvention::InverseComposition) s = -s;
        // now s = d loss / d t1 and -s = d loss / d t2
        out.d_raw1 = {s * (-raw1[1]) / (n1 * n1), s * raw1[0] / (n1 * n1)};
        out.d_raw2 = {-s * (-raw2[1]) / (n2 * n2), -s * raw2[0] / (n2 * n2)};
        return out;
    }
    throw std::invalid_argument("unsupported head for covariance loss");
}

namespace {

// Packs triplet patches into siamese input tensors.
void fill_batch(const std::vector<const TripletSample*>& batch, bool normalize, Tensor& x1,
                Tensor& x2) {
    const int b = static_cast<int>(batch.size());
    x1 = Tensor(kPatchSide, kPatchSide, 1, b);
    x2 = Tensor(kPatchSide, kPatchSide, 1, b);
    for (int i = 0; i < b; ++i) {
        patch_to_input(batch[i]->x1, normalize, x1.plane(0, i));
        patch_to_input(batch[i]->x2, normalize, x2.plane(0, i));
    }
}

struct BatchLoss {
    double sum = 0.0;
    int valid = 0;
    int skipped = 0;
};

// Computes per-sample losses and writes the (mean-scaled) gradients into the
// head gradient tensors.
BatchLoss batch_loss_and_grads(const Tensor& out1, const Tensor& out2,
                               const std::vector<const TripletSample*>& batch, ConstraintClass cls,
                               Tensor* g1, Tensor* g2) {
    BatchLoss r;
    const int b = static_cast<int>(batch.size());
    std::vector<CovLoss> per(b);
    for (int i = 0; i < b; ++i) {
        const double raw1[2] = {out1.at(0, 0, 0, i), out1.at(0, 0, 1, i)};
        const double raw2[2] = {out2.at(0, 0, 0, i), out2.at(0, 0, 1, i)};
        per[i] = covariance_loss(cls, raw1, raw2, batch[i]->g);
        if (per[i].degenerate) {
            ++r.skipped;
        } else {
            r.sum += per[i].loss;
            ++r.valid;
        }
    }
    if (g1 && g2) {
        *g1 = Tensor(1, 1, 2, b);
        *g2 = Tensor(1, 1, 2, b);
        const double scale = r.valid > 0 ? 1.0 / r.valid : 0.0;
        for (int i = 0; i < b; ++i) {
            if (per[i].degenerate) continue;
            g1->at(0, 0, 0, i) = scale * per[i].d_raw1[0];
            g1->at(0, 0, 1, i) = scale * per[i].d_raw1[1];
            g2->at(0, 0, 0, i) = scale * per[i].d_raw2[0];
            g2->at(0, 0, 1, i) = scale * per[i].d_raw2[1];
        }
    }
    return r;
}

std::vector<TripletSample> make_triplets(const CropStore& store, const TrainConfig& cfg, int count,
                                         Rng& rng) {
    std::vector<TripletSample> out;
    out.reserve(count);
    for (int i = 0; i < count; ++i) {
        const auto& rec = store.crops[rng.uniform_int(store.size())];
        out.push_back(sample_triplet(rec.crop, cfg, rng));
    }
    return out;
}

}  // namespace

TrainResult train(const CropStore& train_store, const CropStore& val_store,
                  const NetworkSpec& spec, const TrainConfig& cfg, bool normalize_input,
                  const std::function<void(int, const EpochStats&)>& log) {
    if (train_store.empty() || val_store.empty()) throw std::invalid_argument("empty corpus");
    validate_config(cfg);
    check_spec(spec);
    if (receptive_field(spec) != kPatchSide || spec.out_dim != 2)
        throw std::invalid_argument("architecture/shape error");

    const ConstraintClass cls = head_class(cfg.head);

    TrainResult result;
    Parameters params = init_params(spec, mix_seed(cfg.seed, 0x1A17));
    result.params = params;

    Rng vrng(mix_seed(cfg.seed, 0x7A11));
    const std::vector<TripletSample> val_triplets =
        make_triplets(val_store, cfg, std::min<int>(kValPairs, cfg.pairs_per_epoch), vrng);

    SgdState state;
    double lr = cfg.lr;
    double best_val = std::numeric_limits<double>::infinity();
    int patience = 0, drops = 0;

    for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        Rng erng(mix_seed(cfg.seed, 0xE000 + epoch));
        EpochStats stats;
        stats.lr = lr;
        double loss_sum = 0.0;
        int loss_count = 0;

        int remaining = cfg.pairs_per_epoch;
        std::vector<const TripletSample*> batch_ptrs;
        while (remaining > 0) {
            const int b = std::min(remaining, cfg.batch_size);
            remaining -= b;
            std::vector<TripletSample> samples = make_triplets(train_store, cfg, b, erng);
            batch_ptrs.clear();
            for (const auto& s : samples) batch_ptrs.push_back(&s);

            Tensor x1, x2;
            fill_batch(batch_ptrs, normalize_input, x1, x2);
            ForwardCache c1, c2;
            forward(spec, params, x1, &c1);
            forward(spec, params, x2, &c2);
            Tensor g1, g2;
            const BatchLoss bl =
                batch_loss_and_grads(c1.output, c2.output, batch_ptrs, cls, &g1, &g2);
            stats.skipped += bl.skipped;
            loss_sum += bl.sum;
            loss_count += bl.valid;
            if (bl.valid == 0) continue;

            Parameters grad, grad2;
            backward(spec, params, c1, g1, grad);
            backward(spec, params, c2, g2, grad2);
            grad.axpy(1.0, grad2);
            sgd_step(params, grad, lr, kMomentum, state);
        }

        stats.train_loss = loss_count > 0 ? loss_sum / loss_count : 0.0;
        stats.val_loss = validate(params, spec, val_triplets, cls, normalize_input);
        result.history.push_back(stats);
        if (log) log(epoch, stats);

        if (!std::isfinite(stats.train_loss) || !std::isfinite(stats.val_loss) ||
            !params.all_finite()) {
            result.diverged = true;  // keep the last finite checkpoint
            return result;
        }

        if (stats.val_loss < best_val * (1.0 - kImproveThreshold)) {
            best_val = stats.val_loss;
            result.params = params;
            patience = 0;
        } else {
            ++patience;
        }
        if (patience >= kPatience) {
            ++drops;
            if (drops > kMaxLrDrops) break;  // early stop
            lr /= cfg.lr_drop_factor;
            patience = 0;
        }
    }
    if (!std::isfinite(best_val)) result.params = params;
    return result;
}

double validate(const Parameters& params, const NetworkSpec& spec,
                const std::vector<TripletSample>& triplets, ConstraintClass cls,
                bool normalize_input) {
    if (triplets.empty()) throw std::invalid_argument("empty validation set");
    double sum = 0.0;
    int valid = 0;
    const int chunk = 256;
    std::vector<const TripletSample*> batch;
    for (size_t i = 0; i < triplets.size(); i += chunk) {
        batch.clear();
        for (size_t j = i; j < std::min(triplets.size(), i + chunk); ++j)
            batch.push_back(&triplets[j]);
        Tensor x1, x2;
        fill_batch(batch, normalize_input, x1, x2);
        const Tensor out1 = forward(spec, params, x1);
        const Tensor out2 = forward(spec, params, x2);
        const BatchLoss bl = batch_loss_and_grads(out1, out2, batch, cls, nullptr, nullptr);
        sum += bl.sum;
        valid += bl.valid;
    }
    return valid > 0 ? sum / valid : 0.0;
}

}  // namespace covdet
