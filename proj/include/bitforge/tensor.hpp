#pragma once

#include <cassert>
#include <cstddef>
#include <vector>

namespace bitforge {

// Dense NCHW tensor of doubles. FC activations use c=features, h=w=1.
struct Tensor {
    int n = 0, c = 0, h = 0, w = 0;
    std::vector<double> v;

    Tensor() = default;
    Tensor(int n_, int c_, int h_, int w_)
        : n(n_), c(c_), h(h_), w(w_), v(static_cast<size_t>(n_) * c_ * h_ * w_, 0.0) {}

    size_t size() const { return v.size(); }
    int features() const { return c * h * w; }

    double& at(int i, int j, int y, int x) {
        return v[((static_cast<size_t>(i) * c + j) * h + y) * w + x];
    }
    double at(int i, int j, int y, int x) const {
        return v[((static_cast<size_t>(i) * c + j) * h + y) * w + x];
    }

    // Pointer to sample i's data (contiguous c*h*w block).
    double* sample(int i) { return v.data() + static_cast<size_t>(i) * features(); }
    const double* sample(int i) const { return v.data() + static_cast<size_t>(i) * features(); }

    // Copy of rows [lo, hi) along the batch dimension.
    Tensor slice(int lo, int hi) const {
        Tensor out(hi - lo, c, h, w);
        std::copy(v.begin() + static_cast<size_t>(lo) * features(),
                  v.begin() + static_cast<size_t>(hi) * features(), out.v.begin());
        return out;
    }
};

}  // namespace bitforge
