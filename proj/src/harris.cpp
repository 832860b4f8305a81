#include "covdet/harris.hpp"

#include <cmath>
#include <stdexcept>

#include "covdet/imgops.hpp"

namespace covdet {

std::vector<Detection> harris_detect(const ImageBuffer& img, double sigma_d, double sigma_i,
                                     double k, int max_detections) {
    if (!(sigma_d > 0) || !(sigma_i > 0) || !(k > 0) || !(k < 0.25))
        throw std::invalid_argument("bad harris parameters");
    const ImageBuffer smooth = gaussian_blur(img, sigma_d);
    ImageBuffer ix(img.width, img.height), iy(img.width, img.height);
    const auto cx = [&](int v) { return std::clamp(v, 0, img.width - 1); };
    const auto cy = [&](int v) { return std::clamp(v, 0, img.height - 1); };
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) {
            ix.at(x, y) = 0.5 * (smooth.at(cx(x + 1), y) - smooth.at(cx(x - 1), y));
            iy.at(x, y) = 0.5 * (smooth.at(x, cy(y + 1)) - smooth.at(x, cy(y - 1)));
        }
    ImageBuffer xx(img.width, img.height), xy(img.width, img.height), yy(img.width, img.height);
    for (size_t i = 0; i < xx.data.size(); ++i) {
        xx.data[i] = ix.data[i] * ix.data[i];
        xy.data[i] = ix.data[i] * iy.data[i];
        yy.data[i] = iy.data[i] * iy.data[i];
    }
    const ImageBuffer jxx = gaussian_blur(xx, sigma_i);
    const ImageBuffer jxy = gaussian_blur(xy, sigma_i);
    const ImageBuffer jyy = gaussian_blur(yy, sigma_i);

    VoteMap response(img.width, img.height);
    for (size_t i = 0; i < response.mass.size(); ++i) {
        const double det = jxx.data[i] * jyy.data[i] - jxy.data[i] * jxy.data[i];
        const double tr = jxx.data[i] + jyy.data[i];
        response.mass[i] = std::max(0.0, det - k * tr * tr);
    }
    return nms(response, 2, max_detections);
}

}  // namespace covdet
