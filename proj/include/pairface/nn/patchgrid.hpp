#pragma once

#include "pairface/tensor.hpp"

namespace pairface {

// Output of the patch discriminator: one raw (pre-sigmoid) logit per
// overlapping receptive-field patch of the input. 30x30 for 256x256 inputs
// with the default ladder.
struct PatchGrid {
    Tensor logits;      // rank 2, {rows, cols}
    int rf_size = 0;    // receptive field edge in input pixels
    int rf_stride = 0;  // input-pixel step between adjacent patches

    int rows() const { return logits.dim(0); }
    int cols() const { return logits.dim(1); }
    std::size_t patches() const { return logits.size(); }
};

}  // namespace pairface
