// covdet: train, run and evaluate covariant feature detectors.

#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "covdet/dense.hpp"
#include "covdet/detect.hpp"
#include "covdet/geometry.hpp"
#include "covdet/harris.hpp"
#include "covdet/imgops.hpp"
#include "covdet/metrics.hpp"
#include "covdet/model_io.hpp"
#include "covdet/synth.hpp"
#include "covdet/threads.hpp"
#include "covdet/training.hpp"

namespace fs = std::filesystem;
using namespace covdet;

namespace {

std::vector<int> parse_n_grid(const std::string& s) {
    std::vector<int> out;
    std::string cur;
    for (char c : s + ",") {
        if (c == ',') {
            if (!cur.empty()) out.push_back(std::stoi(cur));
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    if (out.empty()) throw std::invalid_argument("empty n grid");
    for (size_t i = 1; i < out.size(); ++i)
        if (out[i] <= out[i - 1]) throw std::invalid_argument("n grid must increase");
    return out;
}

int run_selfcheck() {
    int failures = 0;
    const auto report = [&](const char* name, bool ok) {
        std::printf("[%s] %s\n", ok ? "ok" : "FAIL", name);
        if (!ok) ++failures;
    };

    // group axioms on a sample of random elements
    {
        bool ok = true;
        const SampleBounds bounds;
        for (GroupId g : {GroupId::T2, GroupId::SO2, GroupId::SE2, GroupId::Dil2, GroupId::Sim2,
                          GroupId::UA2, GroupId::A2}) {
            Rng rng(7);
            for (int i = 0; i < 200 && ok; ++i) {
                const Transform2D a = random_element(g, bounds, rng);
                const Transform2D b = random_element(g, bounds, rng);
                ok = ok && is_member(compose(a, b), g, 1e-9);
                ok = ok && max_abs_diff(compose(a, inverse(a)), Transform2D::identity()) < 1e-9;
            }
        }
        report("group axioms", ok);
    }
    // decomposition residual identity on all constraint classes
    {
        bool ok = true;
        const SampleBounds bounds;
        for (ConstraintClass cls :
             {ConstraintClass::Point, ConstraintClass::RigidPoint, ConstraintClass::Blob,
              ConstraintClass::OrientedBlob, ConstraintClass::UprightAffine,
              ConstraintClass::FullAffine, ConstraintClass::Orientation}) {
            const DetectorSpec spec = detector_spec(cls);
            Rng rng(11);
            for (int i = 0; i < 200 && ok; ++i) {
                const Transform2D g = random_element(spec.g_group, bounds, rng);
                const Transform2D h1 = random_element(spec.h_group, bounds, rng);
                const auto [h2, q] = decompose(g, h1, spec);
                const Transform2D res =
                    compose(h2, compose(q, compose(inverse(h1), inverse(g))));
                ok = ok && max_abs_diff(res, Transform2D::identity()) < 1e-9;
            }
        }
        report("decomposition residual identity", ok);
    }
    // gradient check on a small conv stack
    {
        bool ok = true;
        NetworkSpec spec;
        spec.input_side = 10;
        spec.layers = {LayerSpec::conv(3, 3, 4), LayerSpec::relu(), LayerSpec::maxpool2(),
                       LayerSpec::conv(4, 4, 6), LayerSpec::relu(), LayerSpec::conv(1, 1, 2)};
        for (std::uint64_t seed = 1; seed <= 2 && ok; ++seed) {
            Parameters p = init_params(spec, seed);
            Rng rng(mix_seed(seed, 99));
            Tensor in(10, 10, 1, 2);
            for (double& v : in.v) v = rng.normal();
            ForwardCache cache;
            forward(spec, p, in, &cache);
            Tensor gout(1, 1, 2, 2);
            for (double& v : gout.v) v = rng.normal();
            Parameters grad;
            backward(spec, p, cache, gout, grad);
            // probe a few weights with central differences
            for (int probe = 0; probe < 20 && ok; ++probe) {
                const size_t li = rng.uniform_int(p.conv.size());
                const size_t wi = rng.uniform_int(p.conv[li].w.size());
                const double h = 1e-6;
                const double orig = p.conv[li].w[wi];
                const auto eval = [&](double v) {
                    p.conv[li].w[wi] = v;
                    const Tensor out = forward(spec, p, in);
                    double acc = 0.0;
                    for (size_t k = 0; k < out.v.size(); ++k) acc += out.v[k] * gout.v[k];
                    return acc;
                };
                const double num = (eval(orig + h) - eval(orig - h)) / (2 * h);
                p.conv[li].w[wi] = orig;
                const double ana = grad.conv[li].w[wi];
                ok = ok && std::fabs(num - ana) <= 1e-6 * std::max({1.0, std::fabs(num),
                                                                    std::fabs(ana)});
            }
        }
        report("gradient check", ok);
    }
    // dense split equivalence against the window-by-window oracle
    {
        Model m;
        m.spec = detnet_micro();
        m.head = Head::Translation;
        m.normalize_input = true;
        m.params = init_params(m.spec, 5);
        Rng rng(13);
        ImageBuffer img(40, 40);
        for (double& v : img.data) v = rng.uniform(0.0, 255.0);
        const DisplacementField fast = dense_regress(m, img, 1);
        const DisplacementField ref = dense_regress_naive(m, img);
        double worst = 0.0;
        bool mask_ok = true;
        for (size_t i = 0; i < fast.a.size(); ++i) {
            mask_ok = mask_ok && fast.valid[i] == ref.valid[i];
            if (fast.valid[i]) {
                worst = std::max(worst, std::fabs(fast.a[i] - ref.a[i]));
                worst = std::max(worst, std::fabs(fast.b[i] - ref.b[i]));
            }
        }
        report("dense evaluation equivalence", mask_ok && worst < 1e-5);
    }
    return failures == 0 ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"covariant feature detector toolkit"};
    app.require_subcommand(1);
    int threads = 0;
    app.add_option("--threads", threads, "cap worker threads (0 = default)");

    // ---- synth ----
    auto* synth = app.add_subcommand("synth", "generate a synthetic corpus");
    SynthConfig synth_cfg;
    std::string synth_out;
    synth->add_option("--out", synth_out, "output directory")->required();
    synth->add_option("--count", synth_cfg.count, "number of images");
    synth->add_option("--side", synth_cfg.side, "image side in pixels");
    synth->add_option("--shapes", synth_cfg.shapes, "shapes per image");
    synth->add_option("--seed", synth_cfg.seed, "random seed");

    // ---- harvest ----
    auto* harvest = app.add_subcommand("harvest", "harvest informative training crops");
    std::string harvest_images, harvest_out;
    int harvest_per_image = 20;
    std::uint64_t harvest_seed = 0;
    double harvest_sigma = 2.5, harvest_threshold = 1.5;
    harvest->add_option("--images", harvest_images, "directory of .pgm images")->required();
    harvest->add_option("--out", harvest_out, "output crop-store directory")->required();
    harvest->add_option("--per-image", harvest_per_image, "random crops per image");
    harvest->add_option("--seed", harvest_seed, "random seed");
    harvest->add_option("--sigma", harvest_sigma, "LoG sigma");
    harvest->add_option("--threshold", harvest_threshold, "mean |LoG| threshold");

    // ---- train ----
    auto* train_cmd = app.add_subcommand("train", "train a detector head");
    std::string train_crops, train_val_crops, train_out, train_config_path, train_arch = "micro";
    std::string train_head;
    TrainConfig tc;
    bool no_normalize = false;
    train_cmd->add_option("--crops", train_crops, "crop-store directory")->required();
    train_cmd->add_option("--val-crops", train_val_crops, "held-out crop store (default: 5% split)");
    train_cmd->add_option("--out", train_out, "output model path")->required();
    train_cmd->add_option("--config", train_config_path, "key=value training config");
    train_cmd->add_option("--arch", train_arch, "micro | detnet-s | detnet-l");
    auto* opt_head = train_cmd->add_option("--head", train_head, "translation | rotation");
    auto* opt_seed = train_cmd->add_option("--seed", tc.seed, "random seed");
    auto* opt_bs = train_cmd->add_option("--batch-size", tc.batch_size, "");
    auto* opt_ppe = train_cmd->add_option("--pairs-per-epoch", tc.pairs_per_epoch, "");
    auto* opt_lr = train_cmd->add_option("--lr", tc.lr, "");
    auto* opt_epochs = train_cmd->add_option("--max-epochs", tc.max_epochs, "");
    auto* opt_nuis = train_cmd->add_option("--nuisance", tc.nuisance_translation_max,
                                           "max nuisance translation, px");
    train_cmd->add_flag("--no-normalize", no_normalize, "disable per-patch input normalisation");

    // ---- detect ----
    auto* detect_cmd = app.add_subcommand("detect", "detect features in an image");
    std::string det_model, det_image, det_out, det_votes_out, det_rot_model;
    int det_stride = 1, det_max = 200, det_nms_radius = 2;
    bool det_no_subpixel = false;
    detect_cmd->add_option("--model", det_model, "translation-head model")->required();
    detect_cmd->add_option("--image", det_image, "input .pgm image")->required();
    detect_cmd->add_option("--out", det_out, "output detections CSV")->required();
    detect_cmd->add_option("--stride", det_stride, "dense evaluation stride (1 or 2)");
    detect_cmd->add_option("--max-detections", det_max, "maximum detections");
    detect_cmd->add_option("--nms-radius", det_nms_radius, "suppression radius, px");
    detect_cmd->add_option("--votes-out", det_votes_out, "dump the vote map as PGM");
    detect_cmd->add_option("--rot-model", det_rot_model,
                           "rotation-head model for per-detection orientation");
    detect_cmd->add_flag("--no-subpixel", det_no_subpixel, "bin detections at pixel resolution");

    // ---- eval-rep / eval-match ----
    std::string ev_pairs, ev_model, ev_out, ev_grid = "10,25,50,100";
    double ev_tol = 5.0;
    int ev_stride = 1, ev_max = 400;
    bool ev_harris = false;
    const auto add_eval_opts = [&](CLI::App* cmd) {
        cmd->add_option("--pairs", ev_pairs, "pair list file")->required();
        cmd->add_option("--model", ev_model, "translation-head model");
        cmd->add_flag("--harris", ev_harris, "use the Harris baseline instead of a model");
        cmd->add_option("--out", ev_out, "output curves CSV")->required();
        cmd->add_option("--n-grid", ev_grid, "comma-separated feature counts");
        cmd->add_option("--dist-tol", ev_tol, "correspondence distance, px");
        cmd->add_option("--stride", ev_stride, "dense evaluation stride");
        cmd->add_option("--max-detections", ev_max, "detections per image");
    };
    auto* eval_rep = app.add_subcommand("eval-rep", "repeatability curves on image pairs");
    add_eval_opts(eval_rep);
    auto* eval_match = app.add_subcommand("eval-match", "matching-score curves on image pairs");
    add_eval_opts(eval_match);

    // ---- eval-orient ----
    auto* eval_orient = app.add_subcommand("eval-orient", "orientation angular error");
    std::string or_model, or_crops, or_out;
    int or_count = 1000;
    double or_nuisance = 0.0;
    std::uint64_t or_seed = 0;
    eval_orient->add_option("--model", or_model, "rotation-head model")->required();
    eval_orient->add_option("--crops", or_crops, "held-out crop store")->required();
    eval_orient->add_option("--count", or_count, "number of evaluation pairs");
    eval_orient->add_option("--nuisance", or_nuisance, "max nuisance translation, px");
    eval_orient->add_option("--seed", or_seed, "random seed");
    eval_orient->add_option("--out", or_out, "optional CSV output");

    // ---- selfcheck ----
    app.add_subcommand("selfcheck", "run the built-in consistency checks");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_name() == "CallForHelp" || e.get_name() == "CallForAllHelp")
            return app.exit(e);
        app.exit(e);
        return 1;
    }

    set_thread_cap(threads);

    try {
        if (app.got_subcommand("synth")) {
            const int n = synth_corpus(synth_cfg, synth_out);
            std::printf("wrote %d images to %s (seed %llu)\n", n, synth_out.c_str(),
                        static_cast<unsigned long long>(synth_cfg.seed));
            return 0;
        }
        if (app.got_subcommand("harvest")) {
            const CropStore store = harvest_crops(harvest_images, harvest_per_image, harvest_seed,
                                                  harvest_sigma, harvest_threshold);
            save_crop_store(store, harvest_out);
            std::printf("kept %zu informative crops (seed %llu)\n", store.size(),
                        static_cast<unsigned long long>(harvest_seed));
            return 0;
        }
        if (app.got_subcommand("train")) {
            if (!train_config_path.empty()) {
                if (!fs::is_regular_file(train_config_path)) {
                    std::fprintf(stderr, "error: config not found: %s\n",
                                 train_config_path.c_str());
                    return 1;
                }
                const std::uint64_t cli_seed = tc.seed;
                const TrainConfig file_cfg = parse_train_config(train_config_path);
                tc = file_cfg;
                // flags win over the config file
                if (*opt_seed) tc.seed = cli_seed;
            }
            if (*opt_head) tc.head = head_from_name(train_head);
            if (*opt_bs || *opt_ppe || *opt_lr || *opt_epochs || *opt_nuis) {
                // values were already written into tc by CLI11
            }
            validate_config(tc);

            const NetworkSpec spec = net_by_name(train_arch);
            CropStore train_store, val_store;
            if (train_val_crops.empty()) {
                const CropStore all = load_crop_store(train_crops);
                split_validation(all, train_store, val_store);
            } else {
                train_store = load_crop_store(train_crops);
                val_store = load_crop_store(train_val_crops);
            }
            std::printf("config: arch=%s head=%s batch_size=%d pairs_per_epoch=%d lr=%g "
                        "lr_drop_factor=%g max_epochs=%d nuisance=%g seed=%llu\n",
                        train_arch.c_str(), head_name(tc.head), tc.batch_size, tc.pairs_per_epoch,
                        tc.lr, tc.lr_drop_factor, tc.max_epochs, tc.nuisance_translation_max,
                        static_cast<unsigned long long>(tc.seed));
            std::printf("crops: train=%zu val=%zu\n", train_store.size(), val_store.size());
            const double t0 = wall_time();
            const TrainResult result =
                train(train_store, val_store, spec, tc, !no_normalize,
                      [&](int epoch, const EpochStats& s) {
                          std::printf("epoch %3d  train %.6f  val %.6f  lr %g  skipped %d\n",
                                      epoch + 1, s.train_loss, s.val_loss, s.lr, s.skipped);
                          std::fflush(stdout);
                      });
            std::printf("training took %.1fs\n", wall_time() - t0);
            if (result.diverged) {
                std::fprintf(stderr, "error: divergence (non-finite loss); last finite "
                                     "checkpoint written\n");
            }
            Model model;
            model.spec = spec;
            model.head = tc.head;
            model.normalize_input = !no_normalize;
            model.params = result.params;
            nlohmann::json meta;
            meta["arch"] = train_arch;
            meta["epochs_run"] = result.history.size();
            meta["seed"] = tc.seed;
            if (!result.history.empty()) {
                meta["final_train_loss"] = result.history.back().train_loss;
                meta["final_val_loss"] = result.history.back().val_loss;
            }
            model.meta_json = meta.dump();
            save_model(model, train_out);
            std::printf("model written to %s\n", train_out.c_str());
            return result.diverged ? 2 : 0;
        }
        if (app.got_subcommand("detect")) {
            if (det_stride != 1 && det_stride != 2) {
                std::fprintf(stderr, "error: --stride must be 1 or 2\n");
                return 1;
            }
            const Model model = load_model(det_model);
            const ImageBuffer img = read_pgm(det_image);
            const DisplacementField field = dense_regress(model, img, det_stride);
            const VoteMap votes = accumulate_votes(field);
            std::vector<Detection> dets = nms(votes, det_nms_radius, det_max, !det_no_subpixel);
            if (!det_rot_model.empty()) {
                const Model rot = load_model(det_rot_model);
                assign_orientations(dense_regress(rot, img, det_stride), dets);
            }
            write_detections_csv(dets, det_out);
            if (!det_votes_out.empty()) write_votes_pgm(votes, det_votes_out);
            std::printf("%zu detections written to %s\n", dets.size(), det_out.c_str());
            return 0;
        }
        if (app.got_subcommand("eval-rep") || app.got_subcommand("eval-match")) {
            const bool with_matching = app.got_subcommand("eval-match");
            if (ev_model.empty() == !ev_harris) {
                std::fprintf(stderr, "error: pass exactly one of --model or --harris\n");
                return 1;
            }
            const std::vector<int> grid = parse_n_grid(ev_grid);
            const std::vector<ImagePair> pairs = read_pair_list(ev_pairs);
            Model model;
            if (!ev_harris) model = load_model(ev_model);
            std::vector<std::pair<std::vector<Detection>, std::vector<Detection>>> dets;
            for (const ImagePair& p : pairs) {
                if (ev_harris)
                    dets.emplace_back(harris_detect(p.a, 1.0, 2.0, 0.05, ev_max),
                                      harris_detect(p.b, 1.0, 2.0, 0.05, ev_max));
                else
                    dets.emplace_back(detect(model, p.a, ev_stride, ev_max),
                                      detect(model, p.b, ev_stride, ev_max));
            }
            const auto curves = build_curves(pairs, dets, grid, ev_tol, with_matching);
            write_curves_csv(curves, ev_out);
            std::printf("curves for %zu pairs written to %s\n", pairs.size(), ev_out.c_str());
            return 0;
        }
        if (app.got_subcommand("eval-orient")) {
            const Model model = load_model(or_model);
            const CropStore store = load_crop_store(or_crops);
            const auto pairs = make_rotation_pairs(store, or_nuisance, or_count, or_seed);
            const AngularErrorStats stats = angular_error(model, pairs);
            std::printf("angular error: mean %.2f deg, median %.2f deg (%d pairs, %d skipped)\n",
                        stats.mean_deg, stats.median_deg, stats.evaluated, stats.skipped);
            if (!or_out.empty()) {
                std::ofstream f(or_out);
                f << "mean_deg,median_deg,evaluated,skipped\n";
                f << stats.mean_deg << "," << stats.median_deg << "," << stats.evaluated << ","
                  << stats.skipped << "\n";
            }
            return 0;
        }
        if (app.got_subcommand("selfcheck")) {
            return run_selfcheck();
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 1;
}
