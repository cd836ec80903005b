#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace seesaw {

using Shape = std::vector<std::size_t>;

/// Incompatible tensor shapes. The message names both offending shapes.
class DimensionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// NaN or Inf where finite values are required.
class NumericError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// A call that violates an API precondition (bad argument, wrong mode).
class UsageError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

std::string shape_str(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

struct Node;

struct TensorImpl {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;  // empty until a gradient flows in
    bool requires_grad = false;
    std::shared_ptr<Node> grad_fn;  // null for leaves and for constants
};

/// Dense row-major f64 tensor with value semantics over a shared buffer.
///
/// Copies share storage and autodiff identity. Values are treated as
/// immutable once created; the one exception is `mutable_data()` on
/// gradient leaves, which the optimizer uses to update parameters.
class Tensor {
public:
    Tensor() = default;
    Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double value, bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);

    bool defined() const { return impl_ != nullptr; }
    const Shape& shape() const;
    std::size_t rank() const { return shape().size(); }
    /// Size of dimension `axis`; negative axes count from the back.
    std::size_t dim(int axis) const;
    std::size_t numel() const;

    std::span<const double> data() const;
    std::span<double> mutable_data();
    double item() const;
    double at(std::initializer_list<std::size_t> index) const;

    bool requires_grad() const;
    bool is_leaf() const;
    bool has_grad() const;
    std::span<const double> grad() const;
    void zero_grad();

    /// Fresh tensor with the same values and no graph history.
    Tensor detach() const;

    TensorImpl* impl() const { return impl_.get(); }
    const std::shared_ptr<TensorImpl>& impl_ptr() const { return impl_; }

private:
    explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}
    friend Tensor make_result(Shape, std::vector<double>, std::vector<Tensor>,
                              std::function<void(const TensorImpl&)>, std::string_view);

    std::shared_ptr<TensorImpl> impl_;
};

/// One recorded operation. `backward` reads the output's value and gradient
/// and accumulates into the inputs' gradients.
struct Node {
    std::vector<Tensor> inputs;
    std::function<void(const TensorImpl& out)> backward;
    std::string_view op;
};

/// Builds the result of a differentiable op. The node is attached only when
/// some input participates in autodiff and grad mode is enabled.
Tensor make_result(Shape shape, std::vector<double> data, std::vector<Tensor> inputs,
                   std::function<void(const TensorImpl&)> backward, std::string_view op);

/// Gradient buffer of `t`, zero-initialized on first access.
std::vector<double>& grad_buffer(const Tensor& t);

/// Disables graph recording on this thread for its lifetime.
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

bool grad_enabled();

/// Topologically ordered record of the graph that produced a scalar loss.
///
/// Ids are positions in `tensors`; every entry's inputs have smaller ids
/// than its output.
class Tape {
public:
    struct Entry {
        std::size_t output;
        std::vector<std::size_t> inputs;
        std::string_view op;
    };

    static Tape record(const Tensor& loss);

    const std::vector<Entry>& entries() const { return entries_; }
    const std::vector<TensorImpl*>& tensors() const { return tensors_; }
    std::size_t leaf_count() const;

    /// Seeds d(loss)/d(loss) = 1 and propagates in reverse order.
    void run();

private:
    std::vector<TensorImpl*> tensors_;
    std::vector<Entry> entries_;
    std::vector<std::shared_ptr<TensorImpl>> keepalive_;
};

/// Reverse-mode pass from a one-element loss. Leaf gradients accumulate.
void backward(const Tensor& loss);

// ---------------------------------------------------------------------------
// Differentiable operations

/// Matrix product over the last two axes. Either operand may be 2-D and is
/// then broadcast over the other's leading axes; otherwise leading axes must
/// match exactly.
Tensor matmul(const Tensor& a, const Tensor& b);
/// Swaps the last two axes.
Tensor transpose(const Tensor& x);
Tensor permute(const Tensor& x, const std::vector<std::size_t>& order);
Tensor reshape(const Tensor& x, Shape shape);
/// Elements [start, start+length) along `axis`.
Tensor slice(const Tensor& x, std::size_t axis, std::size_t start, std::size_t length);
/// Concatenation along the last axis; leading axes must agree.
Tensor concat_features(const Tensor& a, const Tensor& b);

/// Elementwise ops. `b` may also have a shape that is a suffix of `a`'s,
/// in which case it is repeated over the leading axes.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double factor);
Tensor add_scalar(const Tensor& x, double value);
/// a[..., i] * r[...] with r shaped like a without its last axis.
Tensor mul_rows(const Tensor& a, const Tensor& r);
/// a[..., i] + r[...] with r shaped like a without its last axis.
Tensor add_rows(const Tensor& a, const Tensor& r);

Tensor abs(const Tensor& x);
Tensor square(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor relu(const Tensor& x);
/// tanh approximation: 0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3))).
Tensor gelu(const Tensor& x);

/// Softmax over the last axis, stabilized by subtracting the row maximum.
/// Throws NumericError on non-finite input.
Tensor softmax_rows(const Tensor& s);

inline constexpr double kLayerNormEps = 1e-5;
/// Normalizes the last axis to zero mean and unit (population) variance,
/// then applies gain and bias, both shaped [D].
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias);

/// Inverted dropout: in train mode each element is zeroed with probability
/// p and survivors are scaled by 1/(1-p). Identity when !train or p == 0.
Tensor dropout(const Tensor& x, double p, bool train, std::mt19937_64& rng);

/// Real-input DFT over the last axis: [..., L] -> [..., L/2+1, 2] holding
/// (re, im) pairs, X_k = sum_n x_n exp(-2 pi i k n / L). Unnormalized.
Tensor rdft(const Tensor& x);
/// Modulus over a trailing (re, im) axis of size 2. The subgradient at the
/// origin is taken as zero.
Tensor complex_abs(const Tensor& z);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
/// Mean over the last axis; output drops that axis.
Tensor mean_last(const Tensor& x);
/// Population variance over the last axis; output drops that axis.
Tensor variance_last(const Tensor& x);

}  // namespace seesaw
