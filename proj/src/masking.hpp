#pragma once

#include "tensor.hpp"

namespace masklm {

// Controls how binary selection masks over frozen weights are initialized
// and thresholded. tau is one global threshold shared by every masked layer.
struct MaskingConfig {
    float tau = 0.5f;
    float init_sparsity = 0.05f;   // target fraction of zeros at initialization
    float init_halfwidth = 0.01f;  // spread of the shifted-uniform score init
    uint64_t seed = 0;

    void validate() const;
};

// Hard threshold with a straight-through gradient: forward emits 0/1 floats
// (1 where score >= tau), backward passes the incoming gradient to the
// scores unchanged.
Tensor ste_binarize(const Tensor& scores, float tau);

// Pure thresholding of a 2-D score tensor into packed bits. No gradients.
BitMatrix binarize(const Tensor& scores, float tau);

// Scores m = tau + halfwidth*(u - p) with u ~ Uniform[0,1), so each entry
// falls below tau with probability exactly p. Returned tensor is trainable.
Tensor init_scores(const Shape& shape, const MaskingConfig& cfg, Rng& rng);

// A frozen linear layer whose effective weight is W selected elementwise by
// the binarized scores. Only `scores` trains; W and bias stay fixed.
struct MaskedLinear {
    Tensor W;
    Tensor bias;  // undefined for bias-free layers
    Tensor scores;
    float tau = 0.5f;

    // handle to the W (.) M_bin tensor from the most recent masked_forward,
    // kept so tests and diagnostics can inspect its gradient after backward
    mutable Tensor last_masked_w;

    BitMatrix binary_mask() const { return binarize(scores, tau); }
};

MaskedLinear make_masked(const Tensor& W, const Tensor& bias, const MaskingConfig& cfg, Rng& rng);

// W (.) binarize(scores), differentiable towards the scores only.
Tensor masked_weight(const MaskedLinear& layer);

// x * (W (.) M_bin) + bias. The bias contributes no gradient of its own
// during mask training (it is frozen).
Tensor masked_forward(const MaskedLinear& layer, const Tensor& x);

double realized_sparsity(const MaskedLinear& layer);

// Materializes a masked weight outside any tape: bit set -> W entry, bit
// clear -> exactly +0.0f. Canonical path for evaluation and serialization.
Tensor apply_bitmask(const Tensor& W, const BitMatrix& mask);

}  // namespace masklm
