#include "seesaw/tensor.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <sstream>
#include <unordered_map>

namespace seesaw {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

thread_local bool g_grad_enabled = true;

bool participates(const Tensor& t) {
    return t.defined() && (t.impl()->requires_grad || t.impl()->grad_fn != nullptr);
}

[[noreturn]] void dim_error(std::string_view op, const Shape& a, const Shape& b) {
    throw DimensionError(std::string(op) + ": incompatible shapes " + shape_str(a) + " and " +
                         shape_str(b));
}

bool is_suffix(const Shape& whole, const Shape& part) {
    if (part.size() > whole.size()) return false;
    return std::equal(part.rbegin(), part.rend(), whole.rbegin());
}

Shape drop_last(const Shape& s) { return Shape(s.begin(), s.end() - 1); }

void accumulate(const Tensor& t, std::span<const double> g) {
    if (!participates(t)) return;
    auto& buf = grad_buffer(t);
    for (std::size_t i = 0; i < g.size(); ++i) buf[i] += g[i];
}

template <typename Fwd, typename Bwd>
Tensor unary(const Tensor& x, std::string_view op, Fwd fwd, Bwd dydx) {
    const auto in = x.data();
    std::vector<double> out(in.size());
    for (std::size_t i = 0; i < in.size(); ++i) out[i] = fwd(in[i]);
    return make_result(x.shape(), std::move(out), {x},
                       [x, dydx](const TensorImpl& o) {
                           if (!participates(x)) return;
                           auto& gx = grad_buffer(x);
                           const auto xv = x.data();
                           for (std::size_t i = 0; i < gx.size(); ++i)
                               gx[i] += o.grad[i] * dydx(xv[i], o.data[i]);
                       },
                       op);
}

// Binary elementwise with suffix broadcasting of b.
template <typename Fwd, typename BwdA, typename BwdB>
Tensor binary(const Tensor& a, const Tensor& b, std::string_view op, Fwd fwd, BwdA da, BwdB db) {
    if (!is_suffix(a.shape(), b.shape())) dim_error(op, a.shape(), b.shape());
    const auto av = a.data();
    const auto bv = b.data();
    const std::size_t nb = bv.size();
    std::vector<double> out(av.size());
    for (std::size_t i = 0; i < av.size(); ++i) out[i] = fwd(av[i], bv[i % nb]);
    return make_result(a.shape(), std::move(out), {a, b},
                       [a, b, da, db](const TensorImpl& o) {
                           const auto av = a.data();
                           const auto bv = b.data();
                           const std::size_t nb = bv.size();
                           if (participates(a)) {
                               auto& ga = grad_buffer(a);
                               for (std::size_t i = 0; i < ga.size(); ++i)
                                   ga[i] += o.grad[i] * da(av[i], bv[i % nb]);
                           }
                           if (participates(b)) {
                               auto& gb = grad_buffer(b);
                               for (std::size_t i = 0; i < av.size(); ++i)
                                   gb[i % nb] += o.grad[i] * db(av[i], bv[i % nb]);
                           }
                       },
                       op);
}

std::size_t leading(const Shape& s, std::size_t keep) {
    std::size_t n = 1;
    for (std::size_t i = 0; i + keep < s.size(); ++i) n *= s[i];
    return n;
}

}  // namespace

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
    os << ']';
    return os.str();
}

std::size_t shape_numel(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

// ---------------------------------------------------------------------------
// Tensor

Tensor::Tensor(Shape shape, std::vector<double> data, bool requires_grad)
    : impl_(std::make_shared<TensorImpl>()) {
    if (shape_numel(shape) != data.size()) {
        throw DimensionError("tensor: shape " + shape_str(shape) + " does not hold " +
                             std::to_string(data.size()) + " values");
    }
    impl_->shape = std::move(shape);
    impl_->data = std::move(data);
    impl_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
    const std::size_t n = shape_numel(shape);
    return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) { return Tensor({}, {value}, requires_grad); }

const Shape& Tensor::shape() const { return impl_->shape; }

std::size_t Tensor::dim(int axis) const {
    const auto r = static_cast<int>(rank());
    const int a = axis < 0 ? axis + r : axis;
    if (a < 0 || a >= r) throw UsageError("tensor: axis " + std::to_string(axis) + " out of range for " + shape_str(shape()));
    return shape()[static_cast<std::size_t>(a)];
}

std::size_t Tensor::numel() const { return impl_->data.size(); }

std::span<const double> Tensor::data() const { return impl_->data; }

std::span<double> Tensor::mutable_data() {
    if (impl_->grad_fn) throw UsageError("tensor: only leaf tensors may be mutated");
    return impl_->data;
}

double Tensor::item() const {
    if (numel() != 1) throw UsageError("tensor: item() on tensor of shape " + shape_str(shape()));
    return impl_->data[0];
}

double Tensor::at(std::initializer_list<std::size_t> index) const {
    if (index.size() != rank()) throw UsageError("tensor: index rank mismatch for " + shape_str(shape()));
    std::size_t off = 0;
    std::size_t i = 0;
    for (std::size_t v : index) {
        if (v >= shape()[i]) throw UsageError("tensor: index out of range for " + shape_str(shape()));
        off = off * shape()[i] + v;
        ++i;
    }
    return impl_->data[off];
}

bool Tensor::requires_grad() const { return participates(*this); }
bool Tensor::is_leaf() const { return impl_->grad_fn == nullptr; }
bool Tensor::has_grad() const { return !impl_->grad.empty(); }
std::span<const double> Tensor::grad() const { return impl_->grad; }
void Tensor::zero_grad() { impl_->grad.clear(); }

Tensor Tensor::detach() const { return Tensor(shape(), impl_->data, false); }

Tensor make_result(Shape shape, std::vector<double> data, std::vector<Tensor> inputs,
                   std::function<void(const TensorImpl&)> backward, std::string_view op) {
    auto impl = std::make_shared<TensorImpl>();
    impl->shape = std::move(shape);
    impl->data = std::move(data);
    if (g_grad_enabled && std::any_of(inputs.begin(), inputs.end(), participates)) {
        auto node = std::make_shared<Node>();
        node->inputs = std::move(inputs);
        node->backward = std::move(backward);
        node->op = op;
        impl->grad_fn = std::move(node);
    }
    return Tensor(std::move(impl));
}

std::vector<double>& grad_buffer(const Tensor& t) {
    auto* impl = t.impl();
    if (impl->grad.empty()) impl->grad.assign(impl->data.size(), 0.0);
    return impl->grad;
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_enabled() { return g_grad_enabled; }

// ---------------------------------------------------------------------------
// Tape

Tape Tape::record(const Tensor& loss) {
    Tape tape;
    std::unordered_map<TensorImpl*, std::size_t> ids;
    // Iterative post-order DFS: a tensor gets its id after all its inputs.
    struct Frame {
        std::shared_ptr<TensorImpl> t;
        std::size_t next;
    };
    std::vector<Frame> stack;
    std::unordered_map<TensorImpl*, bool> visiting;
    stack.push_back({loss.impl_ptr(), 0});
    visiting[loss.impl()] = true;
    while (!stack.empty()) {
        auto& f = stack.back();
        const auto& node = f.t->grad_fn;
        if (node && f.next < node->inputs.size()) {
            const Tensor& in = node->inputs[f.next++];
            if (!participates(in) || visiting.count(in.impl())) continue;
            visiting[in.impl()] = true;
            stack.push_back({in.impl_ptr(), 0});
            continue;
        }
        const std::size_t id = tape.tensors_.size();
        ids[f.t.get()] = id;
        tape.tensors_.push_back(f.t.get());
        tape.keepalive_.push_back(f.t);
        if (node) {
            Entry e{id, {}, node->op};
            for (const auto& in : node->inputs)
                if (participates(in)) e.inputs.push_back(ids.at(in.impl()));
            tape.entries_.push_back(std::move(e));
        }
        stack.pop_back();
    }
    return tape;
}

std::size_t Tape::leaf_count() const {
    return static_cast<std::size_t>(std::count_if(tensors_.begin(), tensors_.end(),
                                                  [](const TensorImpl* t) { return !t->grad_fn; }));
}

void Tape::run() {
    for (auto* t : tensors_)
        if (t->grad_fn) t->grad.clear();
    auto* root = tensors_.back();
    root->grad.assign(root->data.size(), 1.0);
    for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
        TensorImpl* out = tensors_[it->output];
        if (out->grad.empty()) continue;
        out->grad_fn->backward(*out);
    }
    // Intermediate gradients are no longer needed.
    for (auto* t : tensors_)
        if (t->grad_fn) {
            t->grad.clear();
            t->grad.shrink_to_fit();
        }
}

void backward(const Tensor& loss) {
    if (!loss.defined() || loss.numel() != 1)
        throw UsageError("backward: loss must be a one-element tensor, got " +
                         (loss.defined() ? shape_str(loss.shape()) : std::string("undefined")));
    if (!participates(loss)) throw UsageError("backward: loss is not on the tape");
    Tape::record(loss).run();
}

// ---------------------------------------------------------------------------
// Shape ops

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() < 2 || b.rank() < 2) dim_error("matmul", a.shape(), b.shape());
    const std::size_t m = a.dim(-2), k = a.dim(-1), n = b.dim(-1);
    if (b.dim(-2) != k) dim_error("matmul", a.shape(), b.shape());
    const bool a_bcast = a.rank() == 2 && b.rank() > 2;
    const bool b_bcast = b.rank() == 2;
    if (!a_bcast && !b_bcast &&
        !std::equal(a.shape().begin(), a.shape().end() - 2, b.shape().begin(), b.shape().end() - 2))
        dim_error("matmul", a.shape(), b.shape());

    Shape out_shape = a_bcast ? b.shape() : a.shape();
    out_shape[out_shape.size() - 2] = m;
    out_shape.back() = n;
    std::vector<double> out(shape_numel(out_shape));

    const auto av = a.data();
    const auto bv = b.data();
    if (b_bcast) {
        const auto rows = static_cast<Eigen::Index>(leading(a.shape(), 1));
        MutMap(out.data(), rows, n).noalias() = ConstMap(av.data(), rows, k) * ConstMap(bv.data(), k, n);
    } else {
        const std::size_t batch = leading(out_shape, 2);
        for (std::size_t i = 0; i < batch; ++i) {
            const double* ap = a_bcast ? av.data() : av.data() + i * m * k;
            MutMap(out.data() + i * m * n, m, n).noalias() =
                ConstMap(ap, m, k) * ConstMap(bv.data() + i * k * n, k, n);
        }
    }

    return make_result(std::move(out_shape), std::move(out), {a, b},
                       [a, b, m, k, n, a_bcast, b_bcast](const TensorImpl& o) {
                           const auto av = a.data();
                           const auto bv = b.data();
                           const double* g = o.grad.data();
                           if (b_bcast) {
                               const auto rows = static_cast<Eigen::Index>(leading(a.shape(), 1));
                               ConstMap G(g, rows, n);
                               if (participates(a))
                                   MutMap(grad_buffer(a).data(), rows, k).noalias() +=
                                       G * ConstMap(bv.data(), k, n).transpose();
                               if (participates(b))
                                   MutMap(grad_buffer(b).data(), k, n).noalias() +=
                                       ConstMap(av.data(), rows, k).transpose() * G;
                               return;
                           }
                           const std::size_t batch = o.data.size() / (m * n);
                           for (std::size_t i = 0; i < batch; ++i) {
                               ConstMap G(g + i * m * n, m, n);
                               const std::size_t a_off = a_bcast ? 0 : i * m * k;
                               if (participates(a))
                                   MutMap(grad_buffer(a).data() + a_off, m, k).noalias() +=
                                       G * ConstMap(bv.data() + i * k * n, k, n).transpose();
                               if (participates(b))
                                   MutMap(grad_buffer(b).data() + i * k * n, k, n).noalias() +=
                                       ConstMap(av.data() + a_off, m, k).transpose() * G;
                           }
                       },
                       "matmul");
}

Tensor transpose(const Tensor& x) {
    if (x.rank() < 2) throw DimensionError("transpose: rank < 2 for " + shape_str(x.shape()));
    std::vector<std::size_t> order(x.rank());
    std::iota(order.begin(), order.end(), 0);
    std::swap(order[order.size() - 1], order[order.size() - 2]);
    return permute(x, order);
}

Tensor permute(const Tensor& x, const std::vector<std::size_t>& order) {
    const std::size_t r = x.rank();
    if (order.size() != r) throw DimensionError("permute: order size does not match " + shape_str(x.shape()));
    std::vector<bool> seen(r, false);
    for (auto o : order) {
        if (o >= r || seen[o]) throw UsageError("permute: invalid axis order");
        seen[o] = true;
    }
    const Shape& in_shape = x.shape();
    Shape out_shape(r);
    for (std::size_t i = 0; i < r; ++i) out_shape[i] = in_shape[order[i]];

    std::vector<std::size_t> in_strides(r, 1);
    for (std::size_t i = r; i-- > 1;) in_strides[i - 1] = in_strides[i] * in_shape[i];
    // When the last axis stays in place, whole rows move as contiguous runs.
    const std::size_t run = order.back() == r - 1 ? in_shape.back() : 1;
    const std::size_t outer_rank = run > 1 ? r - 1 : r;
    const std::size_t total = x.numel();
    const std::size_t runs = run ? total / run : 0;
    // Source offset of every destination run, shared by forward and backward.
    auto src = std::make_shared<std::vector<std::size_t>>(runs);
    std::vector<std::size_t> idx(outer_rank, 0);
    for (std::size_t flat = 0; flat < runs; ++flat) {
        std::size_t off = 0;
        for (std::size_t i = 0; i < outer_rank; ++i) off += idx[i] * in_strides[order[i]];
        (*src)[flat] = off;
        for (std::size_t i = outer_rank; i-- > 0;) {
            if (++idx[i] < out_shape[i]) break;
            idx[i] = 0;
        }
    }
    const auto xv = x.data();
    std::vector<double> out(total);
    for (std::size_t i = 0; i < runs; ++i) std::copy_n(xv.data() + (*src)[i], run, out.data() + i * run);
    return make_result(std::move(out_shape), std::move(out), {x},
                       [x, src, run](const TensorImpl& o) {
                           auto& gx = grad_buffer(x);
                           for (std::size_t i = 0; i < src->size(); ++i) {
                               double* g = gx.data() + (*src)[i];
                               const double* go = o.grad.data() + i * run;
                               for (std::size_t j = 0; j < run; ++j) g[j] += go[j];
                           }
                       },
                       "permute");
}

Tensor reshape(const Tensor& x, Shape shape) {
    if (shape_numel(shape) != x.numel()) dim_error("reshape", x.shape(), shape);
    std::vector<double> out(x.data().begin(), x.data().end());
    return make_result(std::move(shape), std::move(out), {x},
                       [x](const TensorImpl& o) { accumulate(x, o.grad); }, "reshape");
}

Tensor slice(const Tensor& x, std::size_t axis, std::size_t start, std::size_t length) {
    if (axis >= x.rank() || start + length > x.shape()[axis])
        throw DimensionError("slice: range [" + std::to_string(start) + ", " + std::to_string(start + length) +
                             ") on axis " + std::to_string(axis) + " of " + shape_str(x.shape()));
    Shape out_shape = x.shape();
    out_shape[axis] = length;
    const std::size_t outer = leading(x.shape(), x.rank() - axis);
    std::size_t inner = 1;
    for (std::size_t i = axis + 1; i < x.rank(); ++i) inner *= x.shape()[i];
    const std::size_t full = x.shape()[axis];
    const auto xv = x.data();
    std::vector<double> out(outer * length * inner);
    for (std::size_t o = 0; o < outer; ++o)
        std::copy_n(xv.begin() + static_cast<std::ptrdiff_t>((o * full + start) * inner), length * inner,
                    out.begin() + static_cast<std::ptrdiff_t>(o * length * inner));
    return make_result(std::move(out_shape), std::move(out), {x},
                       [x, outer, inner, full, start, length](const TensorImpl& o) {
                           auto& gx = grad_buffer(x);
                           for (std::size_t q = 0; q < outer; ++q)
                               for (std::size_t i = 0; i < length * inner; ++i)
                                   gx[(q * full + start) * inner + i] += o.grad[q * length * inner + i];
                       },
                       "slice");
}

Tensor concat_features(const Tensor& a, const Tensor& b) {
    if (a.rank() == 0 || a.rank() != b.rank() ||
        !std::equal(a.shape().begin(), a.shape().end() - 1, b.shape().begin()))
        dim_error("concat_features", a.shape(), b.shape());
    const std::size_t da = a.dim(-1), db = b.dim(-1);
    const std::size_t rows = leading(a.shape(), 1);
    Shape out_shape = a.shape();
    out_shape.back() = da + db;
    std::vector<double> out(rows * (da + db));
    const auto av = a.data();
    const auto bv = b.data();
    for (std::size_t r = 0; r < rows; ++r) {
        std::copy_n(av.begin() + static_cast<std::ptrdiff_t>(r * da), da,
                    out.begin() + static_cast<std::ptrdiff_t>(r * (da + db)));
        std::copy_n(bv.begin() + static_cast<std::ptrdiff_t>(r * db), db,
                    out.begin() + static_cast<std::ptrdiff_t>(r * (da + db) + da));
    }
    return make_result(std::move(out_shape), std::move(out), {a, b},
                       [a, b, rows, da, db](const TensorImpl& o) {
                           if (participates(a)) {
                               auto& ga = grad_buffer(a);
                               for (std::size_t r = 0; r < rows; ++r)
                                   for (std::size_t i = 0; i < da; ++i) ga[r * da + i] += o.grad[r * (da + db) + i];
                           }
                           if (participates(b)) {
                               auto& gb = grad_buffer(b);
                               for (std::size_t r = 0; r < rows; ++r)
                                   for (std::size_t i = 0; i < db; ++i)
                                       gb[r * db + i] += o.grad[r * (da + db) + da + i];
                           }
                       },
                       "concat_features");
}

// ---------------------------------------------------------------------------
// Elementwise

Tensor add(const Tensor& a, const Tensor& b) {
    return binary(
        a, b, "add", [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
        [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    return binary(
        a, b, "sub", [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
        [](double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    return binary(
        a, b, "mul", [](double x, double y) { return x * y; }, [](double, double y) { return y; },
        [](double x, double) { return x; });
}

Tensor scale(const Tensor& x, double factor) {
    return unary(
        x, "scale", [factor](double v) { return v * factor; }, [factor](double, double) { return factor; });
}

Tensor add_scalar(const Tensor& x, double value) {
    return unary(
        x, "add_scalar", [value](double v) { return v + value; }, [](double, double) { return 1.0; });
}

namespace {

void check_row_operand(std::string_view op, const Tensor& a, const Tensor& r) {
    if (a.rank() == 0 || r.shape() != drop_last(a.shape())) dim_error(op, a.shape(), r.shape());
}

}  // namespace

Tensor mul_rows(const Tensor& a, const Tensor& r) {
    check_row_operand("mul_rows", a, r);
    const std::size_t n = a.dim(-1);
    const auto av = a.data();
    const auto rv = r.data();
    std::vector<double> out(av.size());
    for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] * rv[i / n];
    return make_result(a.shape(), std::move(out), {a, r},
                       [a, r, n](const TensorImpl& o) {
                           const auto av = a.data();
                           const auto rv = r.data();
                           if (participates(a)) {
                               auto& ga = grad_buffer(a);
                               for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += o.grad[i] * rv[i / n];
                           }
                           if (participates(r)) {
                               auto& gr = grad_buffer(r);
                               for (std::size_t i = 0; i < av.size(); ++i) gr[i / n] += o.grad[i] * av[i];
                           }
                       },
                       "mul_rows");
}

Tensor add_rows(const Tensor& a, const Tensor& r) {
    check_row_operand("add_rows", a, r);
    const std::size_t n = a.dim(-1);
    const auto av = a.data();
    const auto rv = r.data();
    std::vector<double> out(av.size());
    for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] + rv[i / n];
    return make_result(a.shape(), std::move(out), {a, r},
                       [a, r, n](const TensorImpl& o) {
                           accumulate(a, o.grad);
                           if (participates(r)) {
                               auto& gr = grad_buffer(r);
                               for (std::size_t i = 0; i < o.grad.size(); ++i) gr[i / n] += o.grad[i];
                           }
                       },
                       "add_rows");
}

Tensor abs(const Tensor& x) {
    return unary(
        x, "abs", [](double v) { return std::abs(v); },
        [](double v, double) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
}

Tensor square(const Tensor& x) {
    return unary(
        x, "square", [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

Tensor sigmoid(const Tensor& x) {
    return unary(
        x, "sigmoid",
        [](double v) {
            if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
            const double e = std::exp(v);
            return e / (1.0 + e);
        },
        [](double, double y) { return y * (1.0 - y); });
}

Tensor relu(const Tensor& x) {
    return unary(
        x, "relu", [](double v) { return v > 0.0 ? v : 0.0; }, [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor gelu(const Tensor& x) {
    constexpr double c = 0.7978845608028654;  // sqrt(2/pi)
    constexpr double k = 0.044715;
    const auto in = x.data();
    auto th = std::make_shared<std::vector<double>>(in.size());
    std::vector<double> out(in.size());
    for (std::size_t i = 0; i < in.size(); ++i) {
        const double v = in[i];
        (*th)[i] = std::tanh(c * (v + k * v * v * v));
        out[i] = 0.5 * v * (1.0 + (*th)[i]);
    }
    return make_result(x.shape(), std::move(out), {x},
                       [x, th](const TensorImpl& o) {
                           if (!participates(x)) return;
                           auto& gx = grad_buffer(x);
                           const auto xv = x.data();
                           for (std::size_t i = 0; i < gx.size(); ++i) {
                               const double v = xv[i], t = (*th)[i];
                               gx[i] += o.grad[i] * (0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * c * (1.0 + 3.0 * k * v * v));
                           }
                       },
                       "gelu");
}

// ---------------------------------------------------------------------------
// Normalizing ops

Tensor softmax_rows(const Tensor& s) {
    if (s.rank() == 0) throw DimensionError("softmax_rows: scalar input");
    const std::size_t n = s.dim(-1);
    const std::size_t rows = leading(s.shape(), 1);
    const auto sv = s.data();
    std::vector<double> out(sv.size());
    for (std::size_t r = 0; r < rows; ++r) {
        const double* in = sv.data() + r * n;
        double* y = out.data() + r * n;
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < n; ++i) {
            if (!std::isfinite(in[i])) throw NumericError("softmax_rows: non-finite score in row " + std::to_string(r));
            mx = std::max(mx, in[i]);
        }
        double z = 0.0;
        for (std::size_t i = 0; i < n; ++i) z += (y[i] = std::exp(in[i] - mx));
        for (std::size_t i = 0; i < n; ++i) y[i] /= z;
    }
    return make_result(s.shape(), std::move(out), {s},
                       [s, n, rows](const TensorImpl& o) {
                           auto& gs = grad_buffer(s);
                           for (std::size_t r = 0; r < rows; ++r) {
                               const double* y = o.data.data() + r * n;
                               const double* g = o.grad.data() + r * n;
                               double dot = 0.0;
                               for (std::size_t i = 0; i < n; ++i) dot += g[i] * y[i];
                               for (std::size_t i = 0; i < n; ++i) gs[r * n + i] += y[i] * (g[i] - dot);
                           }
                       },
                       "softmax_rows");
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias) {
    if (x.rank() == 0) throw DimensionError("layer_norm: scalar input");
    const std::size_t d = x.dim(-1);
    if (gain.shape() != Shape{d}) dim_error("layer_norm", x.shape(), gain.shape());
    if (bias.shape() != Shape{d}) dim_error("layer_norm", x.shape(), bias.shape());
    const std::size_t rows = leading(x.shape(), 1);
    const auto xv = x.data();
    const auto gv = gain.data();
    const auto bv = bias.data();
    auto xhat = std::make_shared<std::vector<double>>(xv.size());
    auto inv_std = std::make_shared<std::vector<double>>(rows);
    std::vector<double> out(xv.size());
    for (std::size_t r = 0; r < rows; ++r) {
        const double* in = xv.data() + r * d;
        double mu = 0.0;
        for (std::size_t i = 0; i < d; ++i) mu += in[i];
        mu /= static_cast<double>(d);
        double var = 0.0;
        for (std::size_t i = 0; i < d; ++i) var += (in[i] - mu) * (in[i] - mu);
        var /= static_cast<double>(d);
        const double is = 1.0 / std::sqrt(var + kLayerNormEps);
        (*inv_std)[r] = is;
        for (std::size_t i = 0; i < d; ++i) {
            const double h = (in[i] - mu) * is;
            (*xhat)[r * d + i] = h;
            out[r * d + i] = gv[i] * h + bv[i];
        }
    }
    return make_result(x.shape(), std::move(out), {x, gain, bias},
                       [x, gain, bias, xhat, inv_std, d, rows](const TensorImpl& o) {
                           const auto gv = gain.data();
                           if (participates(gain)) {
                               auto& gg = grad_buffer(gain);
                               for (std::size_t i = 0; i < o.grad.size(); ++i) gg[i % d] += o.grad[i] * (*xhat)[i];
                           }
                           if (participates(bias)) {
                               auto& gb = grad_buffer(bias);
                               for (std::size_t i = 0; i < o.grad.size(); ++i) gb[i % d] += o.grad[i];
                           }
                           if (!participates(x)) return;
                           auto& gx = grad_buffer(x);
                           std::vector<double> dh(d);
                           for (std::size_t r = 0; r < rows; ++r) {
                               double m1 = 0.0, m2 = 0.0;
                               for (std::size_t i = 0; i < d; ++i) {
                                   dh[i] = o.grad[r * d + i] * gv[i];
                                   m1 += dh[i];
                                   m2 += dh[i] * (*xhat)[r * d + i];
                               }
                               m1 /= static_cast<double>(d);
                               m2 /= static_cast<double>(d);
                               for (std::size_t i = 0; i < d; ++i)
                                   gx[r * d + i] += (*inv_std)[r] * (dh[i] - m1 - (*xhat)[r * d + i] * m2);
                           }
                       },
                       "layer_norm");
}

Tensor dropout(const Tensor& x, double p, bool train, std::mt19937_64& rng) {
    if (p < 0.0 || p >= 1.0) throw UsageError("dropout: rate must lie in [0, 1), got " + std::to_string(p));
    if (!train || p == 0.0) return x;
    const double keep_scale = 1.0 / (1.0 - p);
    auto mask = std::make_shared<std::vector<double>>(x.numel());
    for (auto& m : *mask) {
        // 53 random bits -> uniform in [0, 1); avoids distribution-object differences across stdlibs.
        const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
        m = u < p ? 0.0 : keep_scale;
    }
    const auto xv = x.data();
    std::vector<double> out(xv.size());
    for (std::size_t i = 0; i < xv.size(); ++i) out[i] = xv[i] * (*mask)[i];
    return make_result(x.shape(), std::move(out), {x},
                       [x, mask](const TensorImpl& o) {
                           auto& gx = grad_buffer(x);
                           for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += o.grad[i] * (*mask)[i];
                       },
                       "dropout");
}

Tensor rdft(const Tensor& x) {
    if (x.rank() == 0 || x.dim(-1) == 0) throw UsageError("rdft: need a non-empty last axis");
    const std::size_t len = x.dim(-1);
    const std::size_t bins = len / 2 + 1;
    const std::size_t rows = leading(x.shape(), 1);
    auto cs = std::make_shared<std::vector<double>>(bins * len);
    auto sn = std::make_shared<std::vector<double>>(bins * len);
    for (std::size_t k = 0; k < bins; ++k)
        for (std::size_t t = 0; t < len; ++t) {
            // Reduce k*t mod len first so the angle stays in [0, 2 pi).
            const double ang = 2.0 * std::numbers::pi * static_cast<double>((k * t) % len) / static_cast<double>(len);
            (*cs)[k * len + t] = std::cos(ang);
            (*sn)[k * len + t] = std::sin(ang);
        }
    Shape out_shape = drop_last(x.shape());
    out_shape.push_back(bins);
    out_shape.push_back(2);
    const auto xv = x.data();
    std::vector<double> out(rows * bins * 2);
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t k = 0; k < bins; ++k) {
            double re = 0.0, im = 0.0;
            for (std::size_t t = 0; t < len; ++t) {
                re += xv[r * len + t] * (*cs)[k * len + t];
                im -= xv[r * len + t] * (*sn)[k * len + t];
            }
            out[(r * bins + k) * 2] = re;
            out[(r * bins + k) * 2 + 1] = im;
        }
    return make_result(std::move(out_shape), std::move(out), {x},
                       [x, cs, sn, len, bins, rows](const TensorImpl& o) {
                           auto& gx = grad_buffer(x);
                           for (std::size_t r = 0; r < rows; ++r)
                               for (std::size_t k = 0; k < bins; ++k) {
                                   const double gre = o.grad[(r * bins + k) * 2];
                                   const double gim = o.grad[(r * bins + k) * 2 + 1];
                                   for (std::size_t t = 0; t < len; ++t)
                                       gx[r * len + t] += gre * (*cs)[k * len + t] - gim * (*sn)[k * len + t];
                               }
                       },
                       "rdft");
}

Tensor complex_abs(const Tensor& z) {
    if (z.rank() == 0 || z.dim(-1) != 2) throw DimensionError("complex_abs: expected trailing axis of 2, got " + shape_str(z.shape()));
    const auto zv = z.data();
    const std::size_t n = zv.size() / 2;
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = std::hypot(zv[2 * i], zv[2 * i + 1]);
    return make_result(drop_last(z.shape()), std::move(out), {z},
                       [z, n](const TensorImpl& o) {
                           const auto zv = z.data();
                           auto& gz = grad_buffer(z);
                           for (std::size_t i = 0; i < n; ++i) {
                               if (o.data[i] == 0.0) continue;
                               gz[2 * i] += o.grad[i] * zv[2 * i] / o.data[i];
                               gz[2 * i + 1] += o.grad[i] * zv[2 * i + 1] / o.data[i];
                           }
                       },
                       "complex_abs");
}

// ---------------------------------------------------------------------------
// Reductions

Tensor sum(const Tensor& x) {
    const auto xv = x.data();
    const double s = std::accumulate(xv.begin(), xv.end(), 0.0);
    return make_result({}, {s}, {x},
                       [x](const TensorImpl& o) {
                           auto& gx = grad_buffer(x);
                           for (auto& g : gx) g += o.grad[0];
                       },
                       "sum");
}

Tensor mean(const Tensor& x) {
    if (x.numel() == 0) throw UsageError("mean: empty tensor");
    return scale(sum(x), 1.0 / static_cast<double>(x.numel()));
}

Tensor mean_last(const Tensor& x) {
    if (x.rank() == 0) throw DimensionError("mean_last: scalar input");
    const std::size_t n = x.dim(-1);
    const std::size_t rows = leading(x.shape(), 1);
    const auto xv = x.data();
    std::vector<double> out(rows, 0.0);
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t i = 0; i < n; ++i) out[r] += xv[r * n + i];
        out[r] /= static_cast<double>(n);
    }
    return make_result(drop_last(x.shape()), std::move(out), {x},
                       [x, n](const TensorImpl& o) {
                           auto& gx = grad_buffer(x);
                           for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += o.grad[i / n] / static_cast<double>(n);
                       },
                       "mean_last");
}

Tensor variance_last(const Tensor& x) {
    if (x.rank() == 0) throw DimensionError("variance_last: scalar input");
    const std::size_t n = x.dim(-1);
    const std::size_t rows = leading(x.shape(), 1);
    const auto xv = x.data();
    auto mu = std::make_shared<std::vector<double>>(rows, 0.0);
    std::vector<double> out(rows, 0.0);
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t i = 0; i < n; ++i) (*mu)[r] += xv[r * n + i];
        (*mu)[r] /= static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i) out[r] += (xv[r * n + i] - (*mu)[r]) * (xv[r * n + i] - (*mu)[r]);
        out[r] /= static_cast<double>(n);
    }
    return make_result(drop_last(x.shape()), std::move(out), {x},
                       [x, n, mu](const TensorImpl& o) {
                           const auto xv = x.data();
                           auto& gx = grad_buffer(x);
                           for (std::size_t i = 0; i < gx.size(); ++i)
                               gx[i] += o.grad[i / n] * 2.0 * (xv[i] - (*mu)[i / n]) / static_cast<double>(n);
                       },
                       "variance_last");
}

}  // namespace seesaw
