#pragma once

#include <array>
#include <string>
#include <vector>

#include "covdet/detect.hpp"
#include "covdet/training.hpp"

namespace covdet {

/// Two views of a scene with the ground-truth affine map from a-pixel
/// coordinates to b-pixel coordinates.
struct ImagePair {
    ImageBuffer a, b;
    Transform2D h_ab;
    std::string scene;
};

/// Fraction of the top-n detections with a geometric correspondent among
/// the other image's top-n under h_ab (greedy one-to-one assignment by
/// ascending distance; a detection only counts when its mapped position
/// falls inside b). Returns 0 for empty inputs.
double repeatability(const std::vector<Detection>& dets_a, const std::vector<Detection>& dets_b,
                     const Transform2D& h_ab, int b_width, int b_height, double dist_tol, int n);

/// Normalised-patch descriptor: a 41x41 region around the detection,
/// area-averaged to 8x8, zero-mean and unit-norm. Degenerate when the
/// region leaves the image or the patch is constant.
struct PatchDescriptor {
    std::array<double, 64> v{};
    bool degenerate = false;
};
PatchDescriptor patch_descriptor(const ImageBuffer& img, const Detection& det, int side = 41);

/// Fraction of top-n detections whose mutual-nearest descriptor match is
/// also geometrically correct under h_ab.
double matching_score(const std::vector<Detection>& dets_a, const std::vector<Detection>& dets_b,
                      const ImageBuffer& img_a, const ImageBuffer& img_b, const Transform2D& h_ab,
                      double dist_tol, int n);

/// A patch pair related by a known rotation, for orientation evaluation.
struct RotationPair {
    ImageBuffer x1, x2;
    double true_angle = 0.0;  // radians
};

/// Builds held-out rotation pairs with the training module's sampler.
std::vector<RotationPair> make_rotation_pairs(const CropStore& store, double nuisance_max,
                                              int count, std::uint64_t seed);

struct AngularErrorStats {
    double mean_deg = 0.0;
    double median_deg = 0.0;
    int evaluated = 0;
    int skipped = 0;  // degenerate orientation outputs
};

/// Wrapped absolute angular error, in [0, 180] degrees, between the relative
/// rotation estimated from the two regressed orientations (composed per
/// `convention`) and the true rotation.
AngularErrorStats angular_error(const Model& model, const std::vector<RotationPair>& pairs,
                                RotationConvention convention = RotationConvention::InverseComposition);

struct MetricPoint {
    int n = 0;
    double score = 0.0;
};
struct MetricCurve {
    std::string scene;
    std::string metric;  // "repeatability" or "matching_score"
    std::vector<MetricPoint> points;
};

/// Evaluates the metrics on each pair at every n in n_grid and averages per
/// scene. `dets` holds the (a, b) detections for each pair, same order as
/// `pairs`. Scores are reported as computed; nothing is sorted or clipped.
std::vector<MetricCurve> build_curves(const std::vector<ImagePair>& pairs,
                                      const std::vector<std::pair<std::vector<Detection>,
                                                                  std::vector<Detection>>>& dets,
                                      const std::vector<int>& n_grid, double dist_tol,
                                      bool with_matching);

void write_curves_csv(const std::vector<MetricCurve>& curves, const std::string& path);

/// Pair list file: one line per pair,
/// "imgA.pgm imgB.pgm m11 m12 m21 m22 t1 t2" (pixel coordinates).
std::vector<ImagePair> read_pair_list(const std::string& path);
void write_pair_list(const std::vector<ImagePair>& pairs, const std::vector<std::string>& a_paths,
                     const std::vector<std::string>& b_paths, const std::string& path);

}  // namespace covdet
