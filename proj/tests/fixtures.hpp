#pragma once

#include <random>
#include <vector>

#include "pairface/nn/patchgrid.hpp"
#include "pairface/tensor.hpp"

namespace fixtures {

using pairface::PatchGrid;
using pairface::Tensor;

inline Tensor random_image(std::mt19937_64& eng, int c, int h, int w, float lo = -1.0f,
                           float hi = 1.0f) {
    Tensor t({c, h, w});
    t.fill_uniform(eng, lo, hi);
    return t;
}

inline PatchGrid random_grid(std::mt19937_64& eng, int n, float lo = -4.0f, float hi = 4.0f) {
    PatchGrid g;
    g.logits = Tensor({n, n});
    g.logits.fill_uniform(eng, lo, hi);
    g.rf_size = 70;
    g.rf_stride = 8;
    return g;
}

inline PatchGrid const_grid(int n, float value) {
    PatchGrid g;
    g.logits = Tensor({n, n}, value);
    g.rf_size = 70;
    g.rf_stride = 8;
    return g;
}

// Smooth synthetic "face" image: soft ellipse plus horizontal shading, cheap
// for a tiny generator to overfit. side: -1 shades left, +1 shades right,
// 0 symmetric.
inline Tensor synthetic_face(int size, float side, float tone) {
    Tensor img({3, size, size});
    const float cx = size / 2.0f, cy = size / 2.0f;
    for (int y = 0; y < size; ++y) {
        for (int x = 0; x < size; ++x) {
            const float dx = (x - cx) / (0.38f * size);
            const float dy = (y - cy) / (0.46f * size);
            const float r = dx * dx + dy * dy;
            const float face = r < 1.0f ? 0.55f - 0.25f * r : -0.55f;
            const float shade = side * 0.3f * ((x - cx) / cx);
            for (int c = 0; c < 3; ++c)
                img.at(c, y, x) = std::clamp(face + shade + tone * 0.1f * (c - 1), -0.95f, 0.95f);
        }
    }
    return img;
}

}  // namespace fixtures
