#pragma once

#include <cstddef>
#include <vector>

namespace covdet {

/// Dense 4-D array with shape (height, width, channels, batch). Layout is
/// planar: row-major within a channel, channels contiguous within a sample.
struct Tensor {
    int h = 0, w = 0, c = 0, n = 0;
    std::vector<double> v;

    Tensor() = default;
    Tensor(int h_, int w_, int c_, int n_, double fill = 0.0)
        : h(h_), w(w_), c(c_), n(n_), v(static_cast<size_t>(h_) * w_ * c_ * n_, fill) {}

    size_t size() const { return v.size(); }
    size_t idx(int y, int x, int ch, int s) const {
        return ((static_cast<size_t>(s) * c + ch) * h + y) * w + x;
    }
    double& at(int y, int x, int ch, int s) { return v[idx(y, x, ch, s)]; }
    double at(int y, int x, int ch, int s) const { return v[idx(y, x, ch, s)]; }

    double* plane(int ch, int s) { return v.data() + (static_cast<size_t>(s) * c + ch) * h * w; }
    const double* plane(int ch, int s) const {
        return v.data() + (static_cast<size_t>(s) * c + ch) * h * w;
    }

    bool same_shape(const Tensor& o) const {
        return h == o.h && w == o.w && c == o.c && n == o.n;
    }
};

}  // namespace covdet
