#pragma once

#include <cstdint>
#include <vector>

#include "covdet/image.hpp"
#include "covdet/model_io.hpp"

namespace covdet {

/// Per-pixel regressor output over a full image. Channels (a, b) hold the
/// raw 2-vector output: a displacement for translation heads, an
/// unnormalised orientation vector for rotation heads. Pixels whose
/// receptive-field window does not fit in the image are invalid. For the
/// even receptive fields used here the window centre sits at
/// pixel + center_offset (-0.5 per axis).
struct DisplacementField {
    int width = 0, height = 0;
    Head head = Head::Translation;
    std::vector<double> a, b;
    std::vector<std::uint8_t> valid;
    double center_offset = -0.5;
    int margin = 0;  // left/top band of invalid pixels (= receptive field / 2)

    size_t idx(int x, int y) const { return static_cast<size_t>(y) * width + x; }
    bool is_valid(int x, int y) const { return valid[idx(x, y)] != 0; }
};

/// Reference dense evaluation: runs the regressor window by window. Each
/// valid pixel p carries the output of the window whose centre is at
/// p + center_offset. With input normalisation enabled, windows are taken
/// from the locally normalised image (box-filter statistics), the same
/// preprocessing the fast path uses. Throws
/// std::invalid_argument("image smaller than receptive field").
DisplacementField dense_regress_naive(const Model& model, const ImageBuffer& img);

/// Fast dense evaluation. Every downsampling layer is computed at stride
/// one and split into four phase parts which the deeper layers process
/// independently, so early-layer work is shared across windows; stride 2
/// keeps the first downsampling natural and fills only even pixels.
DisplacementField dense_regress(const Model& model, const ImageBuffer& img, int stride = 1);

}  // namespace covdet
