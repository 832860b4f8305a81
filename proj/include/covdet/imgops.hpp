#pragma once

#include <vector>

#include "covdet/image.hpp"

namespace covdet {

/// Output raster geometry for warping. Interpolation is bilinear and the
/// boundary rule is replicate-edge; both are fixed.
struct WarpConfig {
    int out_width = 0;
    int out_height = 0;
};

/// Bilinear sample with replicate-edge boundary.
double bilinear_sample(const ImageBuffer& img, double x, double y);

/// Applies g to the image: output(u,v) = input(g^-1(u,v)). Coordinates are
/// centred (origin at the image centre) so rotations and scalings act about
/// the centre. Throws std::domain_error("non-invertible transform") for a
/// singular g.
ImageBuffer warp(const ImageBuffer& img, const Transform2D& g, const WarpConfig& cfg);

/// Extracts a side x side patch around `center` (absolute pixel coordinates
/// in `src`), warped by the linear part of `rot` about the patch centre.
/// With rot = identity and `center` on the patch grid this is an exact copy.
ImageBuffer sample_patch(const ImageBuffer& src, Vec2 center, const Transform2D& rot, int side);

/// Laplacian-of-Gaussian kernel, truncated at 4*sigma and renormalised to
/// zero mean. Returns the (2r+1)^2 kernel row-major and sets `radius` to r.
std::vector<double> log_kernel(double sigma, int& radius);

/// Convolution of the image with the zero-mean LoG kernel, replicate-edge
/// boundary, same output size.
ImageBuffer log_response(const ImageBuffer& img, double sigma);

/// A crop is informative when the mean absolute LoG response exceeds the
/// threshold. Defaults follow the harvesting recipe (sigma 2.5, threshold
/// 1.5 on [0,255] intensities); uniform or very low contrast crops fail.
bool crop_is_informative(const ImageBuffer& crop, double sigma = 2.5, double threshold = 1.5);

/// Separable Gaussian smoothing, replicate-edge boundary.
ImageBuffer gaussian_blur(const ImageBuffer& img, double sigma);

/// Local mean/variance normalisation: each pixel is normalised by the
/// statistics of the window x window box whose start is at p - window/2
/// (clamped to the image). Windows with vanishing variance map to zero.
ImageBuffer local_normalize(const ImageBuffer& img, int window);

/// Copies a patch into a network input buffer, optionally normalising the
/// whole patch to zero mean / unit variance (constant patches become zero).
void patch_to_input(const ImageBuffer& patch, bool normalize, double* out);

namespace serial {
/// Reference implementations with plain loops, kept for testing the
/// parallel versions and for the kernel benchmark.
ImageBuffer warp(const ImageBuffer& img, const Transform2D& g, const WarpConfig& cfg);
ImageBuffer log_response(const ImageBuffer& img, double sigma);
}  // namespace serial

}  // namespace covdet
