#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "covdet/image.hpp"

namespace covdet {

/// Synthetic corpus: anti-aliased random polygons and discs over a smooth
/// textured background, with ground-truth corner/blob coordinates.
struct SynthConfig {
    int count = 10;         // images
    int side = 256;         // pixels
    int shapes = 14;        // per image
    std::uint64_t seed = 0;
};

struct Anchor {
    double x = 0.0, y = 0.0;
    char kind = 'c';  // 'c' polygon corner, 'b' blob centre
};

/// Renders one image deterministically from `image_seed`.
ImageBuffer synth_image(const SynthConfig& cfg, std::uint64_t image_seed,
                        std::vector<Anchor>* anchors = nullptr);

/// Writes image_%04d.pgm plus image_%04d_anchors.csv sidecars into out_dir;
/// returns the number of images written. Deterministic per seed.
int synth_corpus(const SynthConfig& cfg, const std::string& out_dir);

}  // namespace covdet
