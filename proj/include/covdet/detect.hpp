#pragma once

#include <string>
#include <vector>

#include "covdet/dense.hpp"

namespace covdet {

/// Per-pixel vote accumulator; peaks become detections and mass becomes
/// confidence.
struct VoteMap {
    int width = 0, height = 0;
    std::vector<double> mass;

    VoteMap() = default;
    VoteMap(int w, int h) : width(w), height(h), mass(static_cast<size_t>(w) * h, 0.0) {}
    double& at(int x, int y) { return mass[static_cast<size_t>(y) * width + x]; }
    double at(int x, int y) const { return mass[static_cast<size_t>(y) * width + x]; }
    double total() const;
};

struct Detection {
    double x = 0.0, y = 0.0;
    double confidence = 0.0;
    bool has_angle = false;
    double angle = 0.0;  // radians
};

/// Each valid field pixel casts unit mass at window_centre + displacement,
/// split bilinearly over the four neighbouring bins; votes aiming outside
/// the image are discarded whole. Requires a translation-head field.
VoteMap accumulate_votes(const DisplacementField& field);

/// Local maxima of the vote map over a (2*radius+1)^2 neighbourhood, sorted
/// by descending confidence and truncated to max_detections. A pixel whose
/// neighbourhood leaves the map cannot be a peak; ties are broken by scan
/// order (a peak must beat all later neighbours strictly and all earlier
/// ones weakly). With `subpixel` set, positions are refined by the centroid
/// of the 3x3 neighbourhood mass.
std::vector<Detection> nms(const VoteMap& votes, int radius, int max_detections,
                           bool subpixel = true);

/// dense_regress -> accumulate_votes -> nms for a translation-head model.
std::vector<Detection> detect(const Model& model, const ImageBuffer& img, int stride,
                              int max_detections, int nms_radius = 2, bool subpixel = true);

/// Attaches orientations from a rotation-head field: the circular mean of
/// the valid field orientations within `radius` of each detection.
void assign_orientations(const DisplacementField& rot_field, std::vector<Detection>& detections,
                         int radius = 2);

/// CSV lines "x,y,confidence[,angle_radians]", descending confidence.
void write_detections_csv(const std::vector<Detection>& dets, const std::string& path);
std::string detections_to_csv(const std::vector<Detection>& dets);

/// Vote map rendered to an 8-bit PGM, normalised to the peak mass.
void write_votes_pgm(const VoteMap& votes, const std::string& path);

}  // namespace covdet
