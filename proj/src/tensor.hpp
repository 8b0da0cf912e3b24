#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "common.hpp"

namespace masklm {

using Shape = std::vector<int64_t>;

int64_t numel(const Shape& s);
std::string shape_str(const Shape& s);

struct TensorNode {
    Shape shape;
    std::vector<float> data;
    std::vector<float> grad;  // empty until first needed; same length as data afterwards
    bool requires_grad = false;
    const void* producer = nullptr;  // tape that recorded this node as an op output
};

// Dense row-major float32 tensor with reverse-mode autodiff. Copying a
// Tensor copies the handle, not the buffer.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, float fill = 0.0f, bool requires_grad = false);
    Tensor(Shape shape, std::vector<float> values, bool requires_grad = false);
    static Tensor scalar(float v);

    bool defined() const { return node != nullptr; }
    const Shape& shape() const { return node->shape; }
    int ndim() const { return int(node->shape.size()); }
    int64_t dim(int i) const;  // negative i counts from the back
    int64_t size() const { return int64_t(node->data.size()); }

    std::vector<float>& data() { return node->data; }
    const std::vector<float>& data() const { return node->data; }
    float item() const;

    bool requires_grad() const { return node->requires_grad; }
    void set_requires_grad(bool v) { node->requires_grad = v; }

    std::vector<float>& grad();  // allocates zeroed storage on first use
    bool has_grad() const { return node && !node->grad.empty(); }
    void zero_grad();

    Tensor detached_copy() const;

    std::shared_ptr<TensorNode> node;
};

// Execution tape. Constructing one makes it the active tape for the current
// thread (scopes nest); ops record backward closures onto it while active.
// With no active tape, ops run forward-only.
class Tape {
public:
    Tape();
    ~Tape();
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    static Tape* active();

    void record(const Tensor& out, std::function<void()> backward);

    // Seeds d(loss)/d(loss)=1 and replays the recorded closures in exact
    // reverse execution order. Leaf gradients accumulate across calls;
    // intermediate gradients are recomputed per call.
    void backward(const Tensor& loss);

    size_t entries() const { return entries_.size(); }

private:
    struct Entry {
        std::shared_ptr<TensorNode> out;
        std::function<void()> fn;
    };
    std::vector<Entry> entries_;
    Tape* prev_ = nullptr;
};

// ---- primitives -------------------------------------------------------

// Batched matrix product. Trailing two dims multiply; leading dims must be
// equal or 1 (broadcast).
Tensor matmul(const Tensor& a, const Tensor& b);

// Elementwise with right-aligned broadcasting (dims equal or 1).
Tensor add(const Tensor& a, const Tensor& b);
Tensor hadamard(const Tensor& a, const Tensor& b);

Tensor scale(const Tensor& x, float c);
Tensor gelu(const Tensor& x);
Tensor tanh(const Tensor& x);

Tensor softmax(const Tensor& x, int axis);
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, float eps = 1e-5f);

// Gathers rows of `table` (shape [V, d]); out shape = id_shape + [d].
// Backward scatter-adds into the table gradient.
Tensor embedding_lookup(const Tensor& table, std::span<const int32_t> ids, const Shape& id_shape);

// Mean negative log-softmax of the true class over rows whose label >= 0
// (label -1 = ignored). logits must be 2-D [rows, classes].
Tensor cross_entropy(const Tensor& logits, std::span<const int32_t> labels);

Tensor reshape(const Tensor& x, Shape s);
Tensor permute(const Tensor& x, const std::vector<int>& axes);
Tensor transpose_last(const Tensor& x);  // swaps the trailing two dims
Tensor take_position(const Tensor& x, int64_t pos);  // [B,N,d] -> [B,d]
Tensor sum(const Tensor& x);  // -> scalar

// Surfaces the NaN/Inf error state.
void assert_finite(const Tensor& t, std::string_view what);

}  // namespace masklm
