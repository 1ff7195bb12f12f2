#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace hyperchange {

// Thrown when an operation's preconditions are violated (shape mismatch,
// empty mask, non-scalar loss, ...).
class ContractViolation : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

// Thrown when a computation produces non-finite values.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// All tensors carry exactly four axes. Image data uses the layout
// [batch=1, height, width, channel]; conv kernels use [kh, kw, c_in, c_out].
using Shape = std::array<int, 4>;

inline int shape_numel(const Shape& s) { return s[0] * s[1] * s[2] * s[3]; }

struct TensorData {
    Shape shape{1, 1, 1, 1};
    std::vector<double> values;
    std::vector<double> grad;   // empty until needed
    bool requires_grad = false;
    std::vector<std::shared_ptr<TensorData>> parents;
    std::function<void(TensorData&)> backward_fn;   // empty for leaves

    void ensure_grad() {
        if (grad.size() != values.size()) grad.assign(values.size(), 0.0);
    }
};

// Value-semantic handle to a node of the differentiation graph.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::shared_ptr<TensorData> d) : d_(std::move(d)) {}

    static Tensor zeros(const Shape& s, bool requires_grad = false);
    static Tensor full(const Shape& s, double v, bool requires_grad = false);
    static Tensor from_values(const Shape& s, std::vector<double> v,
                              bool requires_grad = false);
    static Tensor scalar(double v);

    bool defined() const { return d_ != nullptr; }
    const Shape& shape() const { return d_->shape; }
    int numel() const { return static_cast<int>(d_->values.size()); }
    std::vector<double>& values() { return d_->values; }
    const std::vector<double>& values() const { return d_->values; }
    bool requires_grad() const { return d_->requires_grad; }
    void set_requires_grad(bool rg) { d_->requires_grad = rg; }

    std::vector<double>& grad() { d_->ensure_grad(); return d_->grad; }
    bool has_grad() const { return !d_->grad.empty(); }
    void zero_grad() { if (!d_->grad.empty()) d_->grad.assign(d_->grad.size(), 0.0); }

    double item() const;
    double at(int b, int h, int w, int c) const {
        const Shape& s = d_->shape;
        return d_->values[static_cast<size_t>(((b * s[1] + h) * s[2] + w) * s[3] + c)];
    }
    double& at(int b, int h, int w, int c) {
        const Shape& s = d_->shape;
        return d_->values[static_cast<size_t>(((b * s[1] + h) * s[2] + w) * s[3] + c)];
    }

    std::shared_ptr<TensorData> node() const { return d_; }

private:
    std::shared_ptr<TensorData> d_;
};

namespace detail {
// Builds an op node: requires_grad is inherited from the parents, and the
// backward rule is dropped entirely when no parent needs gradients.
Tensor make_op(const Shape& shape, std::vector<double> values,
               std::vector<std::shared_ptr<TensorData>> parents,
               std::function<void(TensorData&)> backward_fn);
}  // namespace detail

// ---- elementwise and reduction operations ------------------------------

enum class EwKind { Add, Mul };

// Broadcasting elementwise op. Each axis must match or be 1 on one side;
// gradients are summed over broadcast axes.
Tensor elementwise(const Tensor& a, const Tensor& b, EwKind kind);
inline Tensor add(const Tensor& a, const Tensor& b) { return elementwise(a, b, EwKind::Add); }
inline Tensor mul(const Tensor& a, const Tensor& b) { return elementwise(a, b, EwKind::Mul); }

Tensor scale(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);
Tensor sum(const Tensor& a);

enum class Activation { Relu, Sigmoid };
Tensor activation(const Tensor& a, Activation kind);
inline Tensor relu(const Tensor& a) { return activation(a, Activation::Relu); }
inline Tensor sigmoid(const Tensor& a) { return activation(a, Activation::Sigmoid); }

// Channels of a precede channels of b; spatial dims must agree.
Tensor concat_channels(const Tensor& a, const Tensor& b);

// Per-pixel cosine over the channel axis, [1,H,W,K] x2 -> [1,H,W,1].
// Norms are guarded by max(norm, eps).
Tensor cosine_channelwise(const Tensor& a, const Tensor& b, double eps = 1e-12);

// Forward identity, zero gradient to everything upstream.
Tensor stop_gradient(const Tensor& a);

// Mean of values over selected pixels; `selected` has H*W entries matching
// the [1,H,W,1] values tensor. Empty selection is a contract violation.
Tensor masked_mean(const Tensor& values, const std::vector<std::uint8_t>& selected);

// Reverse-mode pass from a scalar loss. Each recorded operation is visited
// exactly once, in reverse topological order; leaf grads accumulate.
void backward(const Tensor& loss);

// Throws NumericalError naming `context` if any value is NaN/Inf.
void check_finite(const Tensor& t, const std::string& context);

// Internal parallelism cap: min(HYPERCHANGE_THREADS, hardware), default 1.
int thread_count();
void parallel_for(int begin, int end, const std::function<void(int, int)>& body);

}  // namespace hyperchange
