#include "tensor.hpp"

#include <algorithm>
#include <cmath>

namespace masklm {

int64_t numel(const Shape& s) {
    int64_t n = 1;
    for (int64_t d : s) n *= d;
    return n;
}

std::string shape_str(const Shape& s) {
    std::string out = "[";
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

// ---- Tensor ------------------------------------------------------------

Tensor::Tensor(Shape shape, float fill, bool requires_grad) {
    for (int64_t d : shape)
        if (d <= 0) fail(ErrKind::invalid_argument, "non-positive dimension in shape " + shape_str(shape));
    node = std::make_shared<TensorNode>();
    node->shape = std::move(shape);
    node->data.assign(size_t(numel(node->shape)), fill);
    node->requires_grad = requires_grad;
}

Tensor::Tensor(Shape shape, std::vector<float> values, bool requires_grad) {
    for (int64_t d : shape)
        if (d <= 0) fail(ErrKind::invalid_argument, "non-positive dimension in shape " + shape_str(shape));
    if (int64_t(values.size()) != numel(shape))
        fail(ErrKind::invalid_argument, "data length " + std::to_string(values.size()) +
                                            " does not match shape " + shape_str(shape));
    node = std::make_shared<TensorNode>();
    node->shape = std::move(shape);
    node->data = std::move(values);
    node->requires_grad = requires_grad;
}

Tensor Tensor::scalar(float v) { return Tensor(Shape{1}, std::vector<float>{v}); }

int64_t Tensor::dim(int i) const {
    int n = ndim();
    if (i < 0) i += n;
    if (i < 0 || i >= n) fail(ErrKind::invalid_argument, "dim index out of range");
    return node->shape[size_t(i)];
}

float Tensor::item() const {
    if (size() != 1) fail(ErrKind::invalid_argument, "item() on non-scalar tensor " + shape_str(shape()));
    return node->data[0];
}

std::vector<float>& Tensor::grad() {
    if (node->grad.empty()) node->grad.assign(node->data.size(), 0.0f);
    return node->grad;
}

void Tensor::zero_grad() {
    if (node && !node->grad.empty()) std::fill(node->grad.begin(), node->grad.end(), 0.0f);
}

Tensor Tensor::detached_copy() const {
    Tensor t;
    t.node = std::make_shared<TensorNode>();
    t.node->shape = node->shape;
    t.node->data = node->data;
    return t;
}

void assert_finite(const Tensor& t, std::string_view what) {
    for (float v : t.data())
        if (!std::isfinite(v))
            fail(ErrKind::internal, "non-finite value in " + std::string(what));
}

// ---- Tape --------------------------------------------------------------

namespace {
thread_local Tape* g_active_tape = nullptr;
}

Tape::Tape() {
    prev_ = g_active_tape;
    g_active_tape = this;
}

Tape::~Tape() { g_active_tape = prev_; }

Tape* Tape::active() { return g_active_tape; }

void Tape::record(const Tensor& out, std::function<void()> backward) {
    out.node->producer = this;
    entries_.push_back(Entry{out.node, std::move(backward)});
}

void Tape::backward(const Tensor& loss) {
    if (!loss.defined() || loss.size() != 1)
        fail(ErrKind::invalid_argument, "backward requires a scalar loss");
    if (loss.node->producer != this)
        fail(ErrKind::invalid_argument, "loss was not produced on this tape");
    for (auto& e : entries_) e.out->grad.assign(e.out->data.size(), 0.0f);
    loss.node->grad[0] = 1.0f;
    for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) it->fn();
}

// ---- op helpers --------------------------------------------------------

namespace {

bool tracing(std::initializer_list<const Tensor*> inputs) {
    if (!Tape::active()) return false;
    for (const Tensor* t : inputs)
        if ((*t).node->requires_grad) return true;
    return false;
}

std::vector<float>& grad_of(const std::shared_ptr<TensorNode>& n) {
    if (n->grad.empty()) n->grad.assign(n->data.size(), 0.0f);
    return n->grad;
}

// Right-aligned broadcast of two shapes; dims must match or be 1.
Shape broadcast_shape(const Shape& a, const Shape& b, const char* op) {
    size_t nd = std::max(a.size(), b.size());
    Shape out(nd);
    for (size_t i = 0; i < nd; ++i) {
        int64_t da = i < nd - a.size() ? 1 : a[i - (nd - a.size())];
        int64_t db = i < nd - b.size() ? 1 : b[i - (nd - b.size())];
        if (da != db && da != 1 && db != 1)
            fail(ErrKind::invalid_argument,
                 std::string(op) + ": shapes " + shape_str(a) + " and " + shape_str(b) + " do not broadcast");
        out[i] = std::max(da, db);
    }
    return out;
}

std::vector<int64_t> row_major_strides(const Shape& s) {
    std::vector<int64_t> st(s.size());
    int64_t acc = 1;
    for (size_t i = s.size(); i-- > 0;) {
        st[i] = acc;
        acc *= s[i];
    }
    return st;
}

// Strides of `in` viewed in the coordinate system of `out` (0 where broadcast).
std::vector<int64_t> broadcast_strides(const Shape& in, const Shape& out) {
    auto st = row_major_strides(in);
    std::vector<int64_t> r(out.size(), 0);
    size_t off = out.size() - in.size();
    for (size_t i = 0; i < in.size(); ++i) r[off + i] = in[i] == 1 ? 0 : st[i];
    return r;
}

// Walks every element of `out_shape` in ascending row-major order, calling
// fn(out_index, a_offset, b_offset).
template <typename Fn>
void broadcast_walk(const Shape& out_shape, const std::vector<int64_t>& sa, const std::vector<int64_t>& sb,
                    Fn&& fn) {
    size_t nd = out_shape.size();
    int64_t total = numel(out_shape);
    std::vector<int64_t> idx(nd, 0);
    int64_t ao = 0, bo = 0;
    for (int64_t o = 0; o < total; ++o) {
        fn(o, ao, bo);
        size_t d = nd;
        while (d-- > 0) {
            ++idx[d];
            ao += sa[d];
            bo += sb[d];
            if (idx[d] < out_shape[d]) break;
            ao -= sa[d] * out_shape[d];
            bo -= sb[d] * out_shape[d];
            idx[d] = 0;
        }
    }
}

// True when b's shape (with leading 1s stripped) equals the trailing dims of
// a's shape, i.e. b tiles contiguously over a's leading block.
bool suffix_broadcast(const Shape& a, const Shape& b) {
    size_t skip = 0;
    while (skip < b.size() && b[skip] == 1) ++skip;
    size_t nb = b.size() - skip;
    if (nb > a.size()) return false;
    for (size_t i = 0; i < nb; ++i)
        if (b[skip + i] != a[a.size() - nb + i]) return false;
    return true;
}

enum class BinOp { add, mul };

template <BinOp OP>
Tensor elementwise_binary(const Tensor& a, const Tensor& b, const char* name) {
    Shape os = broadcast_shape(a.shape(), b.shape(), name);
    bool rec = tracing({&a, &b});
    Tensor out(os, 0.0f, rec);

    const auto& ad = a.data();
    const auto& bd = b.data();
    auto& od = out.data();

    auto apply = [](float x, float y) { return OP == BinOp::add ? x + y : x * y; };

    if (a.shape() == b.shape()) {
        for (size_t i = 0; i < od.size(); ++i) od[i] = apply(ad[i], bd[i]);
    } else if (os == a.shape() && suffix_broadcast(a.shape(), b.shape())) {
        size_t inner = bd.size(), n = od.size();
        for (size_t base = 0; base < n; base += inner)
            for (size_t j = 0; j < inner; ++j) od[base + j] = apply(ad[base + j], bd[j]);
    } else {
        auto sa = broadcast_strides(a.shape(), os);
        auto sb = broadcast_strides(b.shape(), os);
        broadcast_walk(os, sa, sb,
                       [&](int64_t o, int64_t ao, int64_t bo) { od[size_t(o)] = apply(ad[size_t(ao)], bd[size_t(bo)]); });
    }

    if (rec) {
        auto an = a.node, bn = b.node, on = out.node;
        Shape osc = os;
        Tape::active()->record(out, [an, bn, on, osc]() {
            const auto& go = on->grad;
            bool need_a = an->requires_grad, need_b = bn->requires_grad;
            auto* ga = need_a ? &grad_of(an) : nullptr;
            auto* gb = need_b ? &grad_of(bn) : nullptr;
            const auto& ad = an->data;
            const auto& bd = bn->data;

            if (an->shape == bn->shape) {
                for (size_t i = 0; i < go.size(); ++i) {
                    if (OP == BinOp::add) {
                        if (need_a) (*ga)[i] += go[i];
                        if (need_b) (*gb)[i] += go[i];
                    } else {
                        if (need_a) (*ga)[i] += go[i] * bd[i];
                        if (need_b) (*gb)[i] += go[i] * ad[i];
                    }
                }
            } else if (osc == an->shape && suffix_broadcast(an->shape, bn->shape)) {
                size_t inner = bd.size(), n = go.size();
                for (size_t base = 0; base < n; base += inner)
                    for (size_t j = 0; j < inner; ++j) {
                        if (OP == BinOp::add) {
                            if (need_a) (*ga)[base + j] += go[base + j];
                            if (need_b) (*gb)[j] += go[base + j];
                        } else {
                            if (need_a) (*ga)[base + j] += go[base + j] * bd[j];
                            if (need_b) (*gb)[j] += go[base + j] * ad[base + j];
                        }
                    }
            } else {
                auto sa = broadcast_strides(an->shape, osc);
                auto sb = broadcast_strides(bn->shape, osc);
                broadcast_walk(osc, sa, sb, [&](int64_t o, int64_t ao, int64_t bo) {
                    if (OP == BinOp::add) {
                        if (need_a) (*ga)[size_t(ao)] += go[size_t(o)];
                        if (need_b) (*gb)[size_t(bo)] += go[size_t(o)];
                    } else {
                        if (need_a) (*ga)[size_t(ao)] += go[size_t(o)] * bd[size_t(bo)];
                        if (need_b) (*gb)[size_t(bo)] += go[size_t(o)] * ad[size_t(ao)];
                    }
                });
            }
        });
    }
    return out;
}

}  // namespace

// ---- matmul ------------------------------------------------------------

namespace {

// c[m,n] += a[m,k] * b[k,n]; each c element accumulates over kk in ascending
// order, so results are reduction-order deterministic.
void mm_kernel(const float* a, const float* b, float* c, int64_t m, int64_t k, int64_t n) {
    for (int64_t i = 0; i < m; ++i) {
        float* crow = c + i * n;
        const float* arow = a + i * k;
        for (int64_t kk = 0; kk < k; ++kk) {
            float aik = arow[kk];
            const float* brow = b + kk * n;
            for (int64_t j = 0; j < n; ++j) crow[j] += aik * brow[j];
        }
    }
}

// da[m,k] += dc[m,n] * b^T
void mm_grad_a(const float* dc, const float* b, float* da, int64_t m, int64_t k, int64_t n) {
    for (int64_t i = 0; i < m; ++i) {
        const float* dcrow = dc + i * n;
        float* darow = da + i * k;
        for (int64_t kk = 0; kk < k; ++kk) {
            const float* brow = b + kk * n;
            float acc = 0.0f;
            for (int64_t j = 0; j < n; ++j) acc += dcrow[j] * brow[j];
            darow[kk] += acc;
        }
    }
}

// db[k,n] += a^T * dc[m,n]
void mm_grad_b(const float* a, const float* dc, float* db, int64_t m, int64_t k, int64_t n) {
    for (int64_t i = 0; i < m; ++i) {
        const float* arow = a + i * k;
        const float* dcrow = dc + i * n;
        for (int64_t kk = 0; kk < k; ++kk) {
            float aik = arow[kk];
            float* dbrow = db + kk * n;
            for (int64_t j = 0; j < n; ++j) dbrow[j] += aik * dcrow[j];
        }
    }
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.ndim() < 2 || b.ndim() < 2)
        fail(ErrKind::invalid_argument, "matmul needs at least 2-D operands, got " + shape_str(a.shape()) +
                                            " and " + shape_str(b.shape()));
    int64_t m = a.dim(-2), ka = a.dim(-1);
    int64_t kb = b.dim(-2), n = b.dim(-1);
    if (ka != kb)
        fail(ErrKind::invalid_argument,
             "matmul inner dimensions disagree: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));

    Shape abatch(a.shape().begin(), a.shape().end() - 2);
    Shape bbatch(b.shape().begin(), b.shape().end() - 2);
    Shape batch = broadcast_shape(abatch, bbatch, "matmul");

    Shape os = batch;
    os.push_back(m);
    os.push_back(n);
    bool rec = tracing({&a, &b});
    Tensor out(os, 0.0f, rec);

    auto sa = broadcast_strides(abatch, batch);
    auto sb = broadcast_strides(bbatch, batch);
    // scale batch strides from "matrices" to "floats"
    std::vector<int64_t> fa(sa), fb(sb);
    for (auto& v : fa) v *= m * ka;
    for (auto& v : fb) v *= kb * n;

    const float* ad = a.data().data();
    const float* bd = b.data().data();
    float* od = out.data().data();

    if (batch.empty()) {
        mm_kernel(ad, bd, od, m, ka, n);
    } else {
        broadcast_walk(batch, fa, fb, [&](int64_t bi, int64_t ao, int64_t bo) {
            mm_kernel(ad + ao, bd + bo, od + bi * m * n, m, ka, n);
        });
    }

    if (rec) {
        auto an = a.node, bn = b.node, on = out.node;
        Tape::active()->record(out, [an, bn, on, batch, fa, fb, m, ka, n]() {
            const float* go = on->grad.data();
            const float* ad = an->data.data();
            const float* bd = bn->data.data();
            float* ga = an->requires_grad ? grad_of(an).data() : nullptr;
            float* gb = bn->requires_grad ? grad_of(bn).data() : nullptr;
            if (batch.empty()) {
                if (ga) mm_grad_a(go, bd, ga, m, ka, n);
                if (gb) mm_grad_b(ad, go, gb, m, ka, n);
            } else {
                broadcast_walk(batch, fa, fb, [&](int64_t bi, int64_t ao, int64_t bo) {
                    if (ga) mm_grad_a(go + bi * m * n, bd + bo, ga + ao, m, ka, n);
                    if (gb) mm_grad_b(ad + ao, go + bi * m * n, gb + bo, m, ka, n);
                });
            }
        });
    }
    return out;
}

// ---- elementwise -------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) { return elementwise_binary<BinOp::add>(a, b, "add"); }
Tensor hadamard(const Tensor& a, const Tensor& b) { return elementwise_binary<BinOp::mul>(a, b, "hadamard"); }

Tensor scale(const Tensor& x, float c) {
    bool rec = tracing({&x});
    Tensor out(x.shape(), 0.0f, rec);
    const auto& xd = x.data();
    auto& od = out.data();
    for (size_t i = 0; i < od.size(); ++i) od[i] = c * xd[i];
    if (rec) {
        auto xn = x.node, on = out.node;
        Tape::active()->record(out, [xn, on, c]() {
            auto& gx = grad_of(xn);
            const auto& go = on->grad;
            for (size_t i = 0; i < gx.size(); ++i) gx[i] += c * go[i];
        });
    }
    return out;
}

Tensor gelu(const Tensor& x) {
    bool rec = tracing({&x});
    Tensor out(x.shape(), 0.0f, rec);
    const auto& xd = x.data();
    auto& od = out.data();
    constexpr double inv_sqrt2 = 0.7071067811865476;
    for (size_t i = 0; i < od.size(); ++i) {
        double v = xd[i];
        od[i] = float(0.5 * v * (1.0 + std::erf(v * inv_sqrt2)));
    }
    if (rec) {
        auto xn = x.node, on = out.node;
        Tape::active()->record(out, [xn, on]() {
            auto& gx = grad_of(xn);
            const auto& go = on->grad;
            const auto& xd = xn->data;
            constexpr double inv_sqrt2 = 0.7071067811865476;
            constexpr double inv_sqrt2pi = 0.3989422804014327;
            for (size_t i = 0; i < gx.size(); ++i) {
                double v = xd[i];
                double cdf = 0.5 * (1.0 + std::erf(v * inv_sqrt2));
                double pdf = inv_sqrt2pi * std::exp(-0.5 * v * v);
                gx[i] += go[i] * float(cdf + v * pdf);
            }
        });
    }
    return out;
}

Tensor tanh(const Tensor& x) {
    bool rec = tracing({&x});
    Tensor out(x.shape(), 0.0f, rec);
    const auto& xd = x.data();
    auto& od = out.data();
    for (size_t i = 0; i < od.size(); ++i) od[i] = std::tanh(xd[i]);
    if (rec) {
        auto xn = x.node, on = out.node;
        Tape::active()->record(out, [xn, on]() {
            auto& gx = grad_of(xn);
            const auto& go = on->grad;
            const auto& yd = on->data;
            for (size_t i = 0; i < gx.size(); ++i) gx[i] += go[i] * (1.0f - yd[i] * yd[i]);
        });
    }
    return out;
}

// ---- softmax -----------------------------------------------------------

namespace {
struct AxisView {
    int64_t outer, len, inner;
};

AxisView axis_view(const Shape& s, int axis) {
    int nd = int(s.size());
    if (axis < 0) axis += nd;
    if (axis < 0 || axis >= nd) fail(ErrKind::invalid_argument, "axis out of range for shape " + shape_str(s));
    AxisView v{1, s[size_t(axis)], 1};
    for (int i = 0; i < axis; ++i) v.outer *= s[size_t(i)];
    for (int i = axis + 1; i < nd; ++i) v.inner *= s[size_t(i)];
    return v;
}
}  // namespace

Tensor softmax(const Tensor& x, int axis) {
    AxisView v = axis_view(x.shape(), axis);
    bool rec = tracing({&x});
    Tensor out(x.shape(), 0.0f, rec);
    const auto& xd = x.data();
    auto& od = out.data();

    for (int64_t ou = 0; ou < v.outer; ++ou)
        for (int64_t in = 0; in < v.inner; ++in) {
            int64_t base = ou * v.len * v.inner + in;
            float mx = xd[size_t(base)];
            for (int64_t t = 1; t < v.len; ++t) mx = std::max(mx, xd[size_t(base + t * v.inner)]);
            float s = 0.0f;
            for (int64_t t = 0; t < v.len; ++t) {
                float e = std::exp(xd[size_t(base + t * v.inner)] - mx);
                od[size_t(base + t * v.inner)] = e;
                s += e;
            }
            float inv = 1.0f / s;
            for (int64_t t = 0; t < v.len; ++t) od[size_t(base + t * v.inner)] *= inv;
        }

    if (rec) {
        auto xn = x.node, on = out.node;
        Tape::active()->record(out, [xn, on, v]() {
            auto& gx = grad_of(xn);
            const auto& go = on->grad;
            const auto& yd = on->data;
            for (int64_t ou = 0; ou < v.outer; ++ou)
                for (int64_t in = 0; in < v.inner; ++in) {
                    int64_t base = ou * v.len * v.inner + in;
                    double dot = 0.0;
                    for (int64_t t = 0; t < v.len; ++t) {
                        size_t i = size_t(base + t * v.inner);
                        dot += double(go[i]) * yd[i];
                    }
                    for (int64_t t = 0; t < v.len; ++t) {
                        size_t i = size_t(base + t * v.inner);
                        gx[i] += float(double(yd[i]) * (double(go[i]) - dot));
                    }
                }
        });
    }
    return out;
}

// ---- layer norm --------------------------------------------------------

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, float eps) {
    int64_t d = x.dim(-1);
    if (gain.size() != d || bias.size() != d)
        fail(ErrKind::invalid_argument, "layer_norm gain/bias must have " + std::to_string(d) + " entries");
    bool rec = tracing({&x, &gain, &bias});
    Tensor out(x.shape(), 0.0f, rec);
    int64_t rows = x.size() / d;
    const auto& xd = x.data();
    const auto& gd = gain.data();
    const auto& bd = bias.data();
    auto& od = out.data();

    for (int64_t r = 0; r < rows; ++r) {
        const float* xr = xd.data() + r * d;
        float* yr = od.data() + r * d;
        float mean = 0.0f;
        for (int64_t j = 0; j < d; ++j) mean += xr[j];
        mean /= float(d);
        float var = 0.0f;
        for (int64_t j = 0; j < d; ++j) {
            float c = xr[j] - mean;
            var += c * c;
        }
        var /= float(d);
        float inv = 1.0f / std::sqrt(var + eps);
        for (int64_t j = 0; j < d; ++j) yr[j] = (xr[j] - mean) * inv * gd[j] + bd[j];
    }

    if (rec) {
        auto xn = x.node, gn = gain.node, bn = bias.node, on = out.node;
        Tape::active()->record(out, [xn, gn, bn, on, d, eps]() {
            const auto& go = on->grad;
            const auto& xd = xn->data;
            const auto& gd = gn->data;
            int64_t rows = int64_t(xd.size()) / d;
            float* gx = xn->requires_grad ? grad_of(xn).data() : nullptr;
            float* gg = gn->requires_grad ? grad_of(gn).data() : nullptr;
            float* gb = bn->requires_grad ? grad_of(bn).data() : nullptr;
            // The x gradient subtracts three nearly equal terms; do the row
            // arithmetic in double so cancellation does not eat the result.
            std::vector<double> xhat(static_cast<size_t>(d));
            for (int64_t r = 0; r < rows; ++r) {
                const float* xr = xd.data() + r * d;
                const float* gor = go.data() + r * d;
                double mean = 0.0;
                for (int64_t j = 0; j < d; ++j) mean += xr[j];
                mean /= double(d);
                double var = 0.0;
                for (int64_t j = 0; j < d; ++j) {
                    double c = xr[j] - mean;
                    var += c * c;
                }
                var /= double(d);
                double inv = 1.0 / std::sqrt(var + double(eps));
                for (int64_t j = 0; j < d; ++j) xhat[size_t(j)] = (xr[j] - mean) * inv;
                if (gg)
                    for (int64_t j = 0; j < d; ++j) gg[j] += float(gor[j] * xhat[size_t(j)]);
                if (gb)
                    for (int64_t j = 0; j < d; ++j) gb[j] += gor[j];
                if (gx) {
                    double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
                    for (int64_t j = 0; j < d; ++j) {
                        double dxh = double(gor[j]) * gd[j];
                        mean_dxhat += dxh;
                        mean_dxhat_xhat += dxh * xhat[size_t(j)];
                    }
                    mean_dxhat /= double(d);
                    mean_dxhat_xhat /= double(d);
                    for (int64_t j = 0; j < d; ++j) {
                        double dxh = double(gor[j]) * gd[j];
                        gx[r * d + j] += float(inv * (dxh - mean_dxhat - xhat[size_t(j)] * mean_dxhat_xhat));
                    }
                }
            }
        });
    }
    return out;
}

// ---- embedding ---------------------------------------------------------

Tensor embedding_lookup(const Tensor& table, std::span<const int32_t> ids, const Shape& id_shape) {
    if (table.ndim() != 2) fail(ErrKind::invalid_argument, "embedding table must be 2-D");
    if (int64_t(ids.size()) != numel(id_shape))
        fail(ErrKind::invalid_argument, "id count does not match id shape " + shape_str(id_shape));
    int64_t vocab = table.dim(0), d = table.dim(1);
    for (size_t i = 0; i < ids.size(); ++i)
        if (ids[i] < 0 || ids[i] >= vocab)
            fail(ErrKind::invalid_argument, "embedding id " + std::to_string(ids[i]) + " at position " +
                                                std::to_string(i) + " outside vocabulary of size " +
                                                std::to_string(vocab));
    Shape os = id_shape;
    os.push_back(d);
    bool rec = tracing({&table});
    Tensor out(os, 0.0f, rec);
    const auto& td = table.data();
    auto& od = out.data();
    for (size_t i = 0; i < ids.size(); ++i)
        std::copy_n(td.data() + int64_t(ids[i]) * d, d, od.data() + int64_t(i) * d);

    if (rec) {
        auto tn = table.node, on = out.node;
        std::vector<int32_t> idv(ids.begin(), ids.end());
        Tape::active()->record(out, [tn, on, idv, d]() {
            auto& gt = grad_of(tn);
            const auto& go = on->grad;
            for (size_t i = 0; i < idv.size(); ++i) {
                float* dst = gt.data() + int64_t(idv[i]) * d;
                const float* src = go.data() + int64_t(i) * d;
                for (int64_t j = 0; j < d; ++j) dst[j] += src[j];
            }
        });
    }
    return out;
}

// ---- cross entropy -----------------------------------------------------

Tensor cross_entropy(const Tensor& logits, std::span<const int32_t> labels) {
    if (logits.ndim() != 2) fail(ErrKind::invalid_argument, "cross_entropy logits must be 2-D");
    int64_t rows = logits.dim(0), k = logits.dim(1);
    if (int64_t(labels.size()) != rows)
        fail(ErrKind::invalid_argument, "label count " + std::to_string(labels.size()) +
                                            " does not match logit rows " + std::to_string(rows));
    int64_t count = 0;
    for (int64_t r = 0; r < rows; ++r) {
        if (labels[size_t(r)] >= k)
            fail(ErrKind::invalid_argument, "label " + std::to_string(labels[size_t(r)]) + " at row " +
                                                std::to_string(r) + " outside [0," + std::to_string(k) + ")");
        if (labels[size_t(r)] >= 0) ++count;
    }
    if (count == 0) fail(ErrKind::invalid_argument, "cross_entropy: no labeled rows");

    bool rec = tracing({&logits});
    const auto& xd = logits.data();
    double total = 0.0;
    for (int64_t r = 0; r < rows; ++r) {
        int32_t y = labels[size_t(r)];
        if (y < 0) continue;
        const float* row = xd.data() + r * k;
        float mx = row[0];
        for (int64_t j = 1; j < k; ++j) mx = std::max(mx, row[j]);
        double s = 0.0;
        for (int64_t j = 0; j < k; ++j) s += std::exp(double(row[j]) - mx);
        total += (double(mx) + std::log(s)) - double(row[y]);
    }
    Tensor out = Tensor::scalar(float(total / double(count)));
    out.set_requires_grad(rec);

    if (rec) {
        auto xn = logits.node, on = out.node;
        std::vector<int32_t> lv(labels.begin(), labels.end());
        Tape::active()->record(out, [xn, on, lv, rows, k, count]() {
            auto& gx = grad_of(xn);
            float g = on->grad[0] / float(count);
            const auto& xd = xn->data;
            for (int64_t r = 0; r < rows; ++r) {
                int32_t y = lv[size_t(r)];
                if (y < 0) continue;
                const float* row = xd.data() + r * k;
                float mx = row[0];
                for (int64_t j = 1; j < k; ++j) mx = std::max(mx, row[j]);
                double s = 0.0;
                for (int64_t j = 0; j < k; ++j) s += std::exp(double(row[j]) - mx);
                for (int64_t j = 0; j < k; ++j) {
                    float p = float(std::exp(double(row[j]) - mx) / s);
                    gx[size_t(r * k + j)] += g * (p - (j == y ? 1.0f : 0.0f));
                }
            }
        });
    }
    return out;
}

// ---- shape ops ---------------------------------------------------------

Tensor reshape(const Tensor& x, Shape s) {
    if (numel(s) != x.size())
        fail(ErrKind::invalid_argument,
             "reshape " + shape_str(x.shape()) + " -> " + shape_str(s) + " changes element count");
    bool rec = tracing({&x});
    Tensor out(std::move(s), 0.0f, rec);
    out.data() = x.data();
    if (rec) {
        auto xn = x.node, on = out.node;
        Tape::active()->record(out, [xn, on]() {
            auto& gx = grad_of(xn);
            const auto& go = on->grad;
            for (size_t i = 0; i < gx.size(); ++i) gx[i] += go[i];
        });
    }
    return out;
}

namespace {
// Forward mapping for permute: out linear index -> in linear index.
std::vector<int64_t> permute_map(const Shape& in_shape, const std::vector<int>& axes) {
    size_t nd = in_shape.size();
    auto in_strides = row_major_strides(in_shape);
    Shape os(nd);
    std::vector<int64_t> src_stride(nd);
    for (size_t i = 0; i < nd; ++i) {
        os[i] = in_shape[size_t(axes[i])];
        src_stride[i] = in_strides[size_t(axes[i])];
    }
    std::vector<int64_t> map(size_t(numel(os)));
    std::vector<int64_t> idx(nd, 0);
    int64_t src = 0;
    for (size_t o = 0; o < map.size(); ++o) {
        map[o] = src;
        size_t d = nd;
        while (d-- > 0) {
            ++idx[d];
            src += src_stride[d];
            if (idx[d] < os[d]) break;
            src -= src_stride[d] * os[d];
            idx[d] = 0;
        }
    }
    return map;
}
}  // namespace

Tensor permute(const Tensor& x, const std::vector<int>& axes) {
    size_t nd = size_t(x.ndim());
    if (axes.size() != nd) fail(ErrKind::invalid_argument, "permute axes rank mismatch");
    std::vector<bool> seen(nd, false);
    for (int a : axes) {
        if (a < 0 || size_t(a) >= nd || seen[size_t(a)]) fail(ErrKind::invalid_argument, "invalid permutation");
        seen[size_t(a)] = true;
    }
    Shape os(nd);
    for (size_t i = 0; i < nd; ++i) os[i] = x.shape()[size_t(axes[i])];
    bool rec = tracing({&x});
    Tensor out(os, 0.0f, rec);
    auto map = permute_map(x.shape(), axes);
    const auto& xd = x.data();
    auto& od = out.data();
    for (size_t o = 0; o < map.size(); ++o) od[o] = xd[size_t(map[o])];
    if (rec) {
        auto xn = x.node, on = out.node;
        Tape::active()->record(out, [xn, on, map = std::move(map)]() {
            auto& gx = grad_of(xn);
            const auto& go = on->grad;
            for (size_t o = 0; o < map.size(); ++o) gx[size_t(map[o])] += go[o];
        });
    }
    return out;
}

Tensor transpose_last(const Tensor& x) {
    if (x.ndim() < 2) fail(ErrKind::invalid_argument, "transpose_last needs at least 2-D input");
    std::vector<int> axes(size_t(x.ndim()));
    for (size_t i = 0; i < axes.size(); ++i) axes[i] = int(i);
    std::swap(axes[axes.size() - 1], axes[axes.size() - 2]);
    return permute(x, axes);
}

Tensor take_position(const Tensor& x, int64_t pos) {
    if (x.ndim() != 3) fail(ErrKind::invalid_argument, "take_position expects [batch, positions, features]");
    int64_t b = x.dim(0), n = x.dim(1), d = x.dim(2);
    if (pos < 0 || pos >= n) fail(ErrKind::invalid_argument, "position out of range");
    bool rec = tracing({&x});
    Tensor out(Shape{b, d}, 0.0f, rec);
    const auto& xd = x.data();
    auto& od = out.data();
    for (int64_t i = 0; i < b; ++i)
        std::copy_n(xd.data() + (i * n + pos) * d, d, od.data() + i * d);
    if (rec) {
        auto xn = x.node, on = out.node;
        Tape::active()->record(out, [xn, on, b, n, d, pos]() {
            auto& gx = grad_of(xn);
            const auto& go = on->grad;
            for (int64_t i = 0; i < b; ++i) {
                float* dst = gx.data() + (i * n + pos) * d;
                const float* src = go.data() + i * d;
                for (int64_t j = 0; j < d; ++j) dst[j] += src[j];
            }
        });
    }
    return out;
}

Tensor sum(const Tensor& x) {
    bool rec = tracing({&x});
    float s = 0.0f;
    for (float v : x.data()) s += v;
    Tensor out = Tensor::scalar(s);
    out.set_requires_grad(rec);
    if (rec) {
        auto xn = x.node, on = out.node;
        Tape::active()->record(out, [xn, on]() {
            auto& gx = grad_of(xn);
            float g = on->grad[0];
            for (size_t i = 0; i < gx.size(); ++i) gx[i] += g;
        });
    }
    return out;
}

}  // namespace masklm
