#include "masking.hpp"

namespace masklm {

void MaskingConfig::validate() const {
    if (!(init_sparsity >= 0.0f && init_sparsity <= 1.0f))
        fail(ErrKind::invalid_argument, "init_sparsity must lie in [0,1], got " + std::to_string(init_sparsity));
    if (!(init_halfwidth > 0.0f))
        fail(ErrKind::invalid_argument, "init_halfwidth must be positive, got " + std::to_string(init_halfwidth));
}

Tensor ste_binarize(const Tensor& scores, float tau) {
    bool rec = Tape::active() && scores.requires_grad();
    Tensor out(scores.shape(), 0.0f, rec);
    const auto& sd = scores.data();
    auto& od = out.data();
    for (size_t i = 0; i < od.size(); ++i) od[i] = sd[i] >= tau ? 1.0f : 0.0f;
    if (rec) {
        auto sn = scores.node, on = out.node;
        Tape::active()->record(out, [sn, on]() {
            auto& gs = sn->grad;
            if (gs.empty()) gs.assign(sn->data.size(), 0.0f);
            const auto& go = on->grad;
            for (size_t i = 0; i < gs.size(); ++i) gs[i] += go[i];
        });
    }
    return out;
}

BitMatrix binarize(const Tensor& scores, float tau) {
    if (scores.ndim() != 2)
        fail(ErrKind::invalid_argument, "binarize expects a 2-D score tensor, got " + shape_str(scores.shape()));
    BitMatrix m(scores.dim(0), scores.dim(1));
    const auto& sd = scores.data();
    for (int64_t r = 0; r < m.rows(); ++r)
        for (int64_t c = 0; c < m.cols(); ++c)
            if (sd[size_t(r * m.cols() + c)] >= tau) m.set(r, c, true);
    return m;
}

Tensor init_scores(const Shape& shape, const MaskingConfig& cfg, Rng& rng) {
    cfg.validate();
    Tensor scores(shape, 0.0f, true);
    auto& d = scores.data();
    for (auto& v : d) {
        float u = rng.next_float();
        v = cfg.tau + cfg.init_halfwidth * (u - cfg.init_sparsity);
    }
    return scores;
}

MaskedLinear make_masked(const Tensor& W, const Tensor& bias, const MaskingConfig& cfg, Rng& rng) {
    MaskedLinear layer;
    layer.W = W;
    layer.W.set_requires_grad(false);
    layer.bias = bias;
    if (layer.bias.defined()) layer.bias.set_requires_grad(false);
    layer.scores = init_scores(W.shape(), cfg, rng);
    layer.tau = cfg.tau;
    return layer;
}

Tensor masked_weight(const MaskedLinear& layer) {
    Tensor what = hadamard(layer.W, ste_binarize(layer.scores, layer.tau));
    layer.last_masked_w = what;
    return what;
}

Tensor masked_forward(const MaskedLinear& layer, const Tensor& x) {
    Tensor y = matmul(x, masked_weight(layer));
    if (layer.bias.defined()) y = add(y, layer.bias);
    return y;
}

double realized_sparsity(const MaskedLinear& layer) {
    BitMatrix m = layer.binary_mask();
    return double(m.count_zeros()) / double(m.rows() * m.cols());
}

Tensor apply_bitmask(const Tensor& W, const BitMatrix& mask) {
    if (W.ndim() != 2 || W.dim(0) != mask.rows() || W.dim(1) != mask.cols())
        fail(ErrKind::invalid_argument, "weight " + shape_str(W.shape()) + " does not match mask " +
                                            std::to_string(mask.rows()) + "x" + std::to_string(mask.cols()));
    Tensor out(W.shape(), 0.0f);
    const auto& wd = W.data();
    auto& od = out.data();
    for (int64_t r = 0; r < mask.rows(); ++r)
        for (int64_t c = 0; c < mask.cols(); ++c) {
            size_t i = size_t(r * mask.cols() + c);
            od[i] = mask.get(r, c) ? wd[i] : 0.0f;
        }
    return out;
}

}  // namespace masklm
