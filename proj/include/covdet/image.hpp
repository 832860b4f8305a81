#pragma once

#include <string>
#include <vector>

#include "covdet/geometry.hpp"

namespace covdet {

/// Grayscale raster with real intensities in [0, 255], row-major.
struct ImageBuffer {
    int width = 0;
    int height = 0;
    std::vector<double> data;

    ImageBuffer() = default;
    ImageBuffer(int w, int h, double fill = 0.0)
        : width(w), height(h), data(static_cast<size_t>(w) * h, fill) {}

    double& at(int x, int y) { return data[static_cast<size_t>(y) * width + x]; }
    double at(int x, int y) const { return data[static_cast<size_t>(y) * width + x]; }
    bool in_bounds(int x, int y) const { return x >= 0 && x < width && y >= 0 && y < height; }
    bool empty() const { return data.empty(); }
};

/// Copies a size x size sub-image centred at `center` (integer placement;
/// for odd sizes the centre pixel is `center` rounded). Throws
/// std::out_of_range("crop outside image") when the rectangle does not fit.
ImageBuffer extract_crop(const ImageBuffer& img, Vec2 center, int size);

/// Binary 8-bit PGM (P5). Intensities are clamped to [0, 255] and rounded.
void write_pgm(const ImageBuffer& img, const std::string& path);

/// Reads binary PGM (P5); 8-bit natively, 16-bit samples are rescaled to
/// [0, 255]. Throws std::runtime_error on malformed files.
ImageBuffer read_pgm(const std::string& path);

}  // namespace covdet
