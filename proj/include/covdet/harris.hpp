#pragma once

#include <vector>

#include "covdet/detect.hpp"

namespace covdet {

/// Reference corner baseline: cornerness det(S) - k*trace(S)^2 of the
/// Gaussian-smoothed structure tensor (derivative scale sigma_d, integration
/// scale sigma_i), followed by the same non-maxima suppression as the vote
/// maps (radius 2, centroid refinement). Returns at most max_detections,
/// strongest first.
std::vector<Detection> harris_detect(const ImageBuffer& img, double sigma_d, double sigma_i,
                                     double k, int max_detections);

}  // namespace covdet
