#pragma once

// Dense tensors with reverse-mode automatic differentiation over the fixed
// operator set used by the fusion/segmentation models and their losses.
// The engine is templated on the scalar type: float for training,
// double for gradient verification.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include "ssvif/errors.hpp"

namespace ssvif {

using Shape = std::vector<int>;

inline int64_t shape_numel(const Shape& s) {
    int64_t n = 1;
    for (int e : s) n *= e;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::string out = "[";
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

inline void check_shape_valid(const Shape& s) {
    for (int e : s) {
        if (e <= 0) throw ContractError("tensor: extents must be positive, got " + shape_str(s));
    }
}

namespace detail {
inline thread_local bool grad_mode_enabled = true;
}

/// RAII guard that disables graph construction (inference / validation).
class NoGradGuard {
public:
    NoGradGuard() : prev_(detail::grad_mode_enabled) { detail::grad_mode_enabled = false; }
    ~NoGradGuard() { detail::grad_mode_enabled = prev_; }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool prev_;
};

inline bool grad_mode() { return detail::grad_mode_enabled; }

template <class T>
struct AutogradNode {
    Shape shape;
    std::vector<T> value;
    std::vector<T> grad; // allocated iff requires_grad, same length as value
    bool requires_grad = false;
    std::vector<std::shared_ptr<AutogradNode>> parents;
    std::function<void()> backprop;

    int64_t numel() const { return int64_t(value.size()); }
    bool leaf() const { return parents.empty(); }
    void ensure_grad() {
        if (grad.size() != value.size()) grad.assign(value.size(), T(0));
    }
};

template <class T>
class TensorT {
public:
    using Node = AutogradNode<T>;

    TensorT() = default;
    explicit TensorT(std::shared_ptr<Node> n) : node_(std::move(n)) {}

    static TensorT zeros(Shape shape, bool requires_grad = false) {
        return filled(std::move(shape), T(0), requires_grad);
    }

    static TensorT filled(Shape shape, T v, bool requires_grad = false) {
        check_shape_valid(shape);
        auto n = std::make_shared<Node>();
        n->value.assign(size_t(shape_numel(shape)), v);
        n->shape = std::move(shape);
        n->requires_grad = requires_grad;
        return TensorT(std::move(n));
    }

    static TensorT from_vector(Shape shape, std::vector<T> data, bool requires_grad = false) {
        check_shape_valid(shape);
        if (int64_t(data.size()) != shape_numel(shape)) {
            throw DimensionError("tensor: data length " + std::to_string(data.size()) +
                                 " does not match shape " + shape_str(shape));
        }
        auto n = std::make_shared<Node>();
        n->shape = std::move(shape);
        n->value = std::move(data);
        n->requires_grad = requires_grad;
        return TensorT(std::move(n));
    }

    static TensorT scalar(T v) { return from_vector({1}, {v}); }

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    int rank() const { return int(node_->shape.size()); }
    int dim(int axis) const { return node_->shape[size_t(axis)]; }
    int64_t numel() const { return node_->numel(); }
    bool requires_grad() const { return node_->requires_grad; }

    const std::vector<T>& values() const { return node_->value; }
    /// Direct mutation is reserved for leaves (parameter updates, loaders).
    std::vector<T>& mutable_values() {
        if (!node_->leaf()) throw ContractError("tensor: only leaf tensors may be mutated");
        return node_->value;
    }

    const std::vector<T>& grad() const {
        if (!node_->requires_grad || node_->grad.size() != node_->value.size()) {
            throw ContractError("tensor: grad not available");
        }
        return node_->grad;
    }
    bool has_grad() const {
        return node_->requires_grad && node_->grad.size() == node_->value.size();
    }
    std::vector<T>& mutable_grad() {
        node_->ensure_grad();
        return node_->grad;
    }
    void zero_grad() {
        if (node_->requires_grad) node_->grad.assign(node_->value.size(), T(0));
    }

    T item() const {
        if (numel() != 1) throw ContractError("tensor: item() requires exactly one element");
        return node_->value[0];
    }

    T at(std::initializer_list<int> idx) const {
        if (int(idx.size()) != rank()) throw DimensionError("tensor: index rank mismatch");
        int64_t lin = 0;
        int axis = 0;
        for (int i : idx) {
            if (i < 0 || i >= node_->shape[size_t(axis)]) throw DimensionError("tensor: index out of range");
            lin = lin * node_->shape[size_t(axis)] + i;
            ++axis;
        }
        return node_->value[size_t(lin)];
    }

    /// Value copy detached from the graph.
    TensorT detach() const { return from_vector(node_->shape, node_->value, false); }

    std::shared_ptr<Node> node() const { return node_; }

private:
    std::shared_ptr<Node> node_;
};

using Tensor = TensorT<float>;
using TensorD = TensorT<double>;

template <class U, class T>
TensorT<U> tensor_cast(const TensorT<T>& t) {
    std::vector<U> out(t.values().begin(), t.values().end());
    return TensorT<U>::from_vector(t.shape(), std::move(out));
}

// ---------------------------------------------------------------------------
// graph helpers
// ---------------------------------------------------------------------------

namespace detail {

template <class T>
std::shared_ptr<AutogradNode<T>> make_node(Shape shape, std::vector<T> value,
                                           std::vector<std::shared_ptr<AutogradNode<T>>> parents) {
    auto n = std::make_shared<AutogradNode<T>>();
    n->shape = std::move(shape);
    n->value = std::move(value);
    if (grad_mode_enabled) {
        bool rg = false;
        for (const auto& p : parents) rg = rg || p->requires_grad;
        if (rg) {
            n->requires_grad = true;
            n->parents = std::move(parents);
        }
    }
    return n;
}

} // namespace detail

/// Reverse-mode backprop from a scalar. Repeated calls accumulate into leaf
/// grads; intermediate grads are reset on each call.
template <class T>
void backward(const TensorT<T>& loss) {
    if (!loss.defined() || loss.numel() != 1) {
        throw ContractError("backward: loss must be a defined scalar (one element)");
    }
    auto root = loss.node();
    if (!root->requires_grad) return;

    // Iterative DFS post-order over requires_grad ancestors.
    std::vector<AutogradNode<T>*> order;
    std::unordered_set<AutogradNode<T>*> visited;
    struct Frame {
        AutogradNode<T>* node;
        size_t next_parent;
    };
    std::vector<Frame> stack;
    stack.push_back({root.get(), 0});
    visited.insert(root.get());
    while (!stack.empty()) {
        Frame& f = stack.back();
        if (f.next_parent < f.node->parents.size()) {
            AutogradNode<T>* p = f.node->parents[f.next_parent++].get();
            if (p->requires_grad && !visited.count(p)) {
                visited.insert(p);
                stack.push_back({p, 0});
            }
        } else {
            order.push_back(f.node);
            stack.pop_back();
        }
    }

    for (auto* n : order) {
        if (!n->leaf()) {
            n->grad.assign(n->value.size(), T(0));
        } else {
            n->ensure_grad();
        }
    }
    root->grad[0] += T(1);

    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        if ((*it)->backprop) (*it)->backprop();
    }
}

// ---------------------------------------------------------------------------
// broadcasting (trailing-axis alignment; an axis must match or be 1)
// ---------------------------------------------------------------------------

namespace detail {

struct BroadcastPlan {
    Shape out_shape;
    std::vector<int64_t> stride_a; // per output axis, 0 where broadcast
    std::vector<int64_t> stride_b;
    int64_t out_numel = 0;
    bool same_shape = false;
};

inline BroadcastPlan make_broadcast_plan(const Shape& a, const Shape& b, const char* op) {
    BroadcastPlan plan;
    if (a == b) {
        plan.out_shape = a;
        plan.out_numel = shape_numel(a);
        plan.same_shape = true;
        return plan;
    }
    int ra = int(a.size()), rb = int(b.size());
    int rout = std::max(ra, rb);
    plan.out_shape.assign(size_t(rout), 1);
    for (int i = 0; i < rout; ++i) {
        int ea = i < rout - ra ? 1 : a[size_t(i - (rout - ra))];
        int eb = i < rout - rb ? 1 : b[size_t(i - (rout - rb))];
        if (ea != eb && ea != 1 && eb != 1) {
            throw DimensionError(std::string(op) + ": shapes " + shape_str(a) + " and " +
                                 shape_str(b) + " are not broadcast-compatible at axis " +
                                 std::to_string(i));
        }
        plan.out_shape[size_t(i)] = std::max(ea, eb);
    }
    auto strides_for = [&](const Shape& s, int r) {
        std::vector<int64_t> st(size_t(rout), 0);
        int64_t acc = 1;
        for (int i = r - 1; i >= 0; --i) {
            int out_axis = i + (rout - r);
            st[size_t(out_axis)] = (s[size_t(i)] == 1) ? 0 : acc;
            acc *= s[size_t(i)];
        }
        // broadcast axes of the shorter rank already have stride 0
        return st;
    };
    plan.stride_a = strides_for(a, ra);
    plan.stride_b = strides_for(b, rb);
    plan.out_numel = shape_numel(plan.out_shape);
    return plan;
}

/// Calls fn(out_index, a_index, b_index) for every output element.
template <class Fn>
void for_each_broadcast(const BroadcastPlan& plan, Fn&& fn) {
    if (plan.same_shape) {
        for (int64_t i = 0; i < plan.out_numel; ++i) fn(i, i, i);
        return;
    }
    int r = int(plan.out_shape.size());
    std::vector<int> counter(size_t(r), 0);
    int64_t ia = 0, ib = 0;
    for (int64_t io = 0; io < plan.out_numel; ++io) {
        fn(io, ia, ib);
        for (int axis = r - 1; axis >= 0; --axis) {
            ++counter[size_t(axis)];
            ia += plan.stride_a[size_t(axis)];
            ib += plan.stride_b[size_t(axis)];
            if (counter[size_t(axis)] < plan.out_shape[size_t(axis)]) break;
            counter[size_t(axis)] = 0;
            ia -= plan.stride_a[size_t(axis)] * plan.out_shape[size_t(axis)];
            ib -= plan.stride_b[size_t(axis)] * plan.out_shape[size_t(axis)];
        }
    }
}

// Shared implementation for binary elementwise ops. ForwardFn: T(T,T).
// BackFn: void(T go, T av, T bv, T* ga, T* gb) accumulating into non-null slots.
template <class T, class ForwardFn, class BackFn>
TensorT<T> binary_op(const TensorT<T>& a, const TensorT<T>& b, const char* name,
                     ForwardFn fwd, BackFn bwd) {
    auto plan = make_broadcast_plan(a.shape(), b.shape(), name);
    std::vector<T> out(size_t(plan.out_numel));
    const T* av = a.values().data();
    const T* bv = b.values().data();
    if (plan.same_shape) {
        for (int64_t i = 0; i < plan.out_numel; ++i) out[size_t(i)] = fwd(av[i], bv[i]);
    } else {
        for_each_broadcast(plan, [&](int64_t io, int64_t ia, int64_t ib) {
            out[size_t(io)] = fwd(av[ia], bv[ib]);
        });
    }
    auto node = make_node<T>(plan.out_shape, std::move(out), {a.node(), b.node()});
    if (node->requires_grad) {
        auto* self = node.get();
        auto* pa = a.node().get();
        auto* pb = b.node().get();
        node->backprop = [self, pa, pb, plan, bwd]() {
            bool ga = pa->requires_grad;
            bool gb = pb->requires_grad;
            if (ga) pa->ensure_grad();
            if (gb) pb->ensure_grad();
            const T* g = self->grad.data();
            const T* av = pa->value.data();
            const T* bv = pb->value.data();
            T* gad = ga ? pa->grad.data() : nullptr;
            T* gbd = gb ? pb->grad.data() : nullptr;
            for_each_broadcast(plan, [&](int64_t io, int64_t ia, int64_t ib) {
                bwd(g[io], av[ia], bv[ib], gad ? gad + ia : nullptr, gbd ? gbd + ib : nullptr);
            });
        };
    }
    return TensorT<T>(std::move(node));
}

// Unary elementwise. ForwardFn: T(T). DerivFn: T(T x, T y) giving dy/dx.
template <class T, class ForwardFn, class DerivFn>
TensorT<T> unary_op(const TensorT<T>& a, ForwardFn fwd, DerivFn deriv) {
    std::vector<T> out(a.values().size());
    const T* av = a.values().data();
    for (size_t i = 0; i < out.size(); ++i) out[i] = fwd(av[i]);
    auto node = make_node<T>(a.shape(), std::move(out), {a.node()});
    if (node->requires_grad) {
        auto* self = node.get();
        auto* pa = a.node().get();
        node->backprop = [self, pa, deriv]() {
            pa->ensure_grad();
            const T* g = self->grad.data();
            const T* x = pa->value.data();
            const T* y = self->value.data();
            T* ga = pa->grad.data();
            for (size_t i = 0; i < self->value.size(); ++i) ga[i] += g[i] * deriv(x[i], y[i]);
        };
    }
    return TensorT<T>(std::move(node));
}

} // namespace detail

// ---------------------------------------------------------------------------
// elementwise suite
// ---------------------------------------------------------------------------

template <class T>
TensorT<T> add(const TensorT<T>& a, const TensorT<T>& b) {
    return detail::binary_op<T>(
        a, b, "add", [](T x, T y) { return x + y; },
        [](T g, T, T, T* ga, T* gb) {
            if (ga) *ga += g;
            if (gb) *gb += g;
        });
}

template <class T>
TensorT<T> sub(const TensorT<T>& a, const TensorT<T>& b) {
    return detail::binary_op<T>(
        a, b, "sub", [](T x, T y) { return x - y; },
        [](T g, T, T, T* ga, T* gb) {
            if (ga) *ga += g;
            if (gb) *gb -= g;
        });
}

template <class T>
TensorT<T> mul(const TensorT<T>& a, const TensorT<T>& b) {
    return detail::binary_op<T>(
        a, b, "mul", [](T x, T y) { return x * y; },
        [](T g, T x, T y, T* ga, T* gb) {
            if (ga) *ga += g * y;
            if (gb) *gb += g * x;
        });
}

template <class T>
TensorT<T> div(const TensorT<T>& a, const TensorT<T>& b) {
    return detail::binary_op<T>(
        a, b, "div", [](T x, T y) { return x / y; },
        [](T g, T x, T y, T* ga, T* gb) {
            if (ga) *ga += g / y;
            if (gb) *gb -= g * x / (y * y);
        });
}

/// Elementwise max. At exact ties the gradient is routed to the first operand.
template <class T>
TensorT<T> maximum(const TensorT<T>& a, const TensorT<T>& b) {
    return detail::binary_op<T>(
        a, b, "maximum", [](T x, T y) { return x >= y ? x : y; },
        [](T g, T x, T y, T* ga, T* gb) {
            if (x >= y) {
                if (ga) *ga += g;
            } else {
                if (gb) *gb += g;
            }
        });
}

template <class T>
TensorT<T> scalar_mul(const TensorT<T>& a, double c) {
    const T cv = T(c);
    return detail::unary_op<T>(
        a, [cv](T x) { return cv * x; }, [cv](T, T) { return cv; });
}

template <class T>
TensorT<T> scalar_add(const TensorT<T>& a, double c) {
    const T cv = T(c);
    return detail::unary_op<T>(
        a, [cv](T x) { return x + cv; }, [](T, T) { return T(1); });
}

template <class T>
TensorT<T> relu(const TensorT<T>& a) {
    return detail::unary_op<T>(
        a, [](T x) { return x > T(0) ? x : T(0); },
        [](T x, T) { return x > T(0) ? T(1) : T(0); });
}

template <class T>
TensorT<T> sigmoid(const TensorT<T>& a) {
    return detail::unary_op<T>(
        a,
        [](T x) {
            // evaluate in the numerically safe branch
            if (x >= T(0)) {
                T e = std::exp(-x);
                return T(1) / (T(1) + e);
            }
            T e = std::exp(x);
            return e / (T(1) + e);
        },
        [](T, T y) { return y * (T(1) - y); });
}

template <class T>
TensorT<T> abs(const TensorT<T>& a) {
    return detail::unary_op<T>(
        a, [](T x) { return std::abs(x); },
        [](T x, T) { return x > T(0) ? T(1) : (x < T(0) ? T(-1) : T(0)); });
}

template <class T>
TensorT<T> exp(const TensorT<T>& a) {
    return detail::unary_op<T>(
        a, [](T x) { return std::exp(x); }, [](T, T y) { return y; });
}

/// log(x + eps); the offset keeps the op defined at x = 0.
template <class T>
TensorT<T> log_eps(const TensorT<T>& a, double eps = 1e-12) {
    const T ev = T(eps);
    return detail::unary_op<T>(
        a, [ev](T x) { return std::log(x + ev); },
        [ev](T x, T) { return T(1) / (x + ev); });
}

// ---------------------------------------------------------------------------
// reductions
// ---------------------------------------------------------------------------

template <class T>
TensorT<T> sum(const TensorT<T>& a) {
    T acc = T(0);
    for (T v : a.values()) acc += v;
    auto node = detail::make_node<T>({1}, {acc}, {a.node()});
    if (node->requires_grad) {
        auto* self = node.get();
        auto* pa = a.node().get();
        node->backprop = [self, pa]() {
            pa->ensure_grad();
            const T g = self->grad[0];
            T* ga = pa->grad.data();
            for (size_t i = 0; i < pa->value.size(); ++i) ga[i] += g;
        };
    }
    return TensorT<T>(std::move(node));
}

namespace detail {

struct AxesPlan {
    Shape out_shape;                 // {1} when everything is reduced
    std::vector<int64_t> out_index;  // not materialized; see strides below
    std::vector<int64_t> in_strides; // strides of input
    std::vector<int64_t> map_strides; // per input axis: stride into output (0 for reduced axes)
    int64_t out_numel = 1;
};

inline AxesPlan make_axes_plan(const Shape& shape, const std::vector<int>& axes, const char* op) {
    int r = int(shape.size());
    std::vector<bool> reduced(size_t(r), false);
    for (int ax : axes) {
        if (ax < 0 || ax >= r) {
            throw DimensionError(std::string(op) + ": axis " + std::to_string(ax) +
                                 " out of range for shape " + shape_str(shape));
        }
        if (reduced[size_t(ax)]) {
            throw DimensionError(std::string(op) + ": duplicate axis " + std::to_string(ax));
        }
        reduced[size_t(ax)] = true;
    }
    AxesPlan plan;
    for (int i = 0; i < r; ++i) {
        if (!reduced[size_t(i)]) plan.out_shape.push_back(shape[size_t(i)]);
    }
    if (plan.out_shape.empty()) plan.out_shape = {1};
    plan.out_numel = shape_numel(plan.out_shape);

    plan.map_strides.assign(size_t(r), 0);
    int64_t acc = 1;
    for (int i = r - 1; i >= 0; --i) {
        if (!reduced[size_t(i)]) {
            plan.map_strides[size_t(i)] = acc;
            acc *= shape[size_t(i)];
        }
    }
    return plan;
}

// Calls fn(input_linear_index, output_linear_index) over all input elements.
template <class Fn>
void for_each_axes(const Shape& shape, const AxesPlan& plan, Fn&& fn) {
    int r = int(shape.size());
    std::vector<int> counter(size_t(r), 0);
    int64_t n = shape_numel(shape);
    int64_t io = 0;
    for (int64_t ii = 0; ii < n; ++ii) {
        fn(ii, io);
        for (int axis = r - 1; axis >= 0; --axis) {
            ++counter[size_t(axis)];
            io += plan.map_strides[size_t(axis)];
            if (counter[size_t(axis)] < shape[size_t(axis)]) break;
            counter[size_t(axis)] = 0;
            io -= plan.map_strides[size_t(axis)] * shape[size_t(axis)];
        }
    }
}

} // namespace detail

/// Sum over the given axes; remaining axes keep their order (no kept dims).
template <class T>
TensorT<T> sum(const TensorT<T>& a, const std::vector<int>& axes) {
    if (axes.empty()) return sum(a);
    auto plan = detail::make_axes_plan(a.shape(), axes, "sum");
    std::vector<T> out(size_t(plan.out_numel), T(0));
    const T* av = a.values().data();
    detail::for_each_axes(a.shape(), plan, [&](int64_t ii, int64_t io) { out[size_t(io)] += av[ii]; });
    auto node = detail::make_node<T>(plan.out_shape, std::move(out), {a.node()});
    if (node->requires_grad) {
        auto* self = node.get();
        auto* pa = a.node().get();
        Shape in_shape = a.shape();
        node->backprop = [self, pa, plan, in_shape]() {
            pa->ensure_grad();
            const T* g = self->grad.data();
            T* ga = pa->grad.data();
            detail::for_each_axes(in_shape, plan, [&](int64_t ii, int64_t io) { ga[ii] += g[io]; });
        };
    }
    return TensorT<T>(std::move(node));
}

template <class T>
TensorT<T> mean(const TensorT<T>& a) {
    return scalar_mul(sum(a), 1.0 / double(a.numel()));
}

template <class T>
TensorT<T> l1_norm(const TensorT<T>& a) {
    return sum(abs(a));
}

template <class T>
TensorT<T> l1_norm(const TensorT<T>& a, const std::vector<int>& axes) {
    return sum(abs(a), axes);
}

template <class T>
TensorT<T> l2_norm_sq(const TensorT<T>& a) {
    return sum(mul(a, a));
}

template <class T>
TensorT<T> l2_norm_sq(const TensorT<T>& a, const std::vector<int>& axes) {
    return sum(mul(a, a), axes);
}

// ---------------------------------------------------------------------------
// softmax over the channel axis of [n,H,W]
// ---------------------------------------------------------------------------

template <class T>
TensorT<T> softmax_channel(const TensorT<T>& logits) {
    if (logits.rank() != 3) {
        throw DimensionError("softmax_channel: expected [n,H,W], got " + shape_str(logits.shape()));
    }
    const int n = logits.dim(0);
    if (n < 2) throw DimensionError("softmax_channel: need at least 2 channels");
    const int64_t hw = int64_t(logits.dim(1)) * logits.dim(2);
    std::vector<T> out(logits.values().size());
    const T* lv = logits.values().data();
    for (int64_t p = 0; p < hw; ++p) {
        T m = lv[p];
        for (int c = 1; c < n; ++c) m = std::max(m, lv[c * hw + p]);
        T z = T(0);
        for (int c = 0; c < n; ++c) {
            T e = std::exp(lv[c * hw + p] - m);
            out[size_t(c * hw + p)] = e;
            z += e;
        }
        for (int c = 0; c < n; ++c) out[size_t(c * hw + p)] /= z;
    }
    auto node = detail::make_node<T>(logits.shape(), std::move(out), {logits.node()});
    if (node->requires_grad) {
        auto* self = node.get();
        auto* pa = logits.node().get();
        node->backprop = [self, pa, n, hw]() {
            pa->ensure_grad();
            const T* g = self->grad.data();
            const T* y = self->value.data();
            T* ga = pa->grad.data();
            for (int64_t p = 0; p < hw; ++p) {
                T dot = T(0);
                for (int c = 0; c < n; ++c) dot += g[c * hw + p] * y[c * hw + p];
                for (int c = 0; c < n; ++c) {
                    ga[c * hw + p] += y[c * hw + p] * (g[c * hw + p] - dot);
                }
            }
        };
    }
    return TensorT<T>(std::move(node));
}

// ---------------------------------------------------------------------------
// 2D convolution (cross-correlation) over [C,H,W]
// ---------------------------------------------------------------------------

namespace detail {

inline int ceil_div_pos(int a, int s) { // s > 0
    return a >= 0 ? (a + s - 1) / s : -((-a) / s);
}

struct ConvDims {
    int cin, h, w, cout, kh, kw, stride, pad, hout, wout;
};

inline ConvDims conv_dims(const Shape& in, const Shape& wt, const Shape& bias, int stride, int pad) {
    if (in.size() != 3) throw DimensionError("conv2d: input must be [C,H,W], got " + shape_str(in));
    if (wt.size() != 4) {
        throw DimensionError("conv2d: weight must be [C_out,C_in,kh,kw], got " + shape_str(wt));
    }
    if (bias.size() != 1 || bias[0] != wt[0]) {
        throw DimensionError("conv2d: bias must be [C_out]=" + std::to_string(wt[0]) +
                             ", got " + shape_str(bias));
    }
    if (in[0] != wt[1]) {
        throw DimensionError("conv2d: input channels " + std::to_string(in[0]) +
                             " do not match weight C_in " + std::to_string(wt[1]));
    }
    if (wt[2] % 2 == 0 || wt[3] % 2 == 0) {
        throw ContractError("conv2d: kernel extents must be odd, got " + shape_str(wt));
    }
    if (stride != 1 && stride != 2) throw ContractError("conv2d: stride must be 1 or 2");
    if (pad < 0) throw ContractError("conv2d: padding must be >= 0");
    ConvDims d
        {in[0], in[1], in[2], wt[0], wt[2], wt[3], stride, pad, 0, 0};
    d.hout = (d.h + 2 * pad - d.kh) / stride + 1;
    d.wout = (d.w + 2 * pad - d.kw) / stride + 1;
    if (d.hout < 1 || d.wout < 1) {
        throw DimensionError("conv2d: kernel " + shape_str(wt) + " does not fit input " +
                             shape_str(in) + " with padding " + std::to_string(pad));
    }
    return d;
}

// Valid output range [lo, hi] for a kernel offset: 0 <= y*s + d < extent.
inline void conv_range(int d, int s, int extent, int out_extent, int& lo, int& hi) {
    lo = std::max(0, ceil_div_pos(-d, s));
    hi = std::min(out_extent - 1, (extent - 1 - d) / s); // d <= extent-1 here
    if (extent - 1 - d < 0) hi = -1;
}

// Accumulates one input plane correlated with a 3x3 kernel (stride 1) into an
// output plane. Interior pixels take a fused 9-tap pass; edges fall back to
// bounds-checked taps.
template <class T>
void conv3x3_s1_accum(int h, int w, const T* __restrict__ inp, const T* __restrict__ wp, int pad,
                      int hout, int wout, T* __restrict__ outp) {
    auto tap_scalar = [&](int y, int x) {
        T acc = T(0);
        for (int ky = 0; ky < 3; ++ky) {
            const int iy = y + ky - pad;
            if (iy < 0 || iy >= h) continue;
            for (int kx = 0; kx < 3; ++kx) {
                const int ix = x + kx - pad;
                if (ix < 0 || ix >= w) continue;
                acc += wp[ky * 3 + kx] * inp[int64_t(iy) * w + ix];
            }
        }
        outp[int64_t(y) * wout + x] += acc;
    };
    const int yi0 = pad, yi1 = hout - 1 - pad;
    const int xi0 = pad, xi1 = wout - 1 - pad;
    const T w00 = wp[0], w01 = wp[1], w02 = wp[2];
    const T w10 = wp[3], w11 = wp[4], w12 = wp[5];
    const T w20 = wp[6], w21 = wp[7], w22 = wp[8];
    for (int y = 0; y < hout; ++y) {
        if (y < yi0 || y > yi1) {
            for (int x = 0; x < wout; ++x) tap_scalar(y, x);
            continue;
        }
        for (int x = 0; x < xi0; ++x) tap_scalar(y, x);
        for (int x = xi1 + 1; x < wout; ++x) tap_scalar(y, x);
        const int nx = xi1 - xi0 + 1;
        if (nx <= 0) continue;
        const T* __restrict__ r0 = inp + int64_t(y - pad) * w + (xi0 - pad);
        const T* __restrict__ r1 = r0 + w;
        const T* __restrict__ r2 = r1 + w;
        T* __restrict__ orow = outp + int64_t(y) * wout + xi0;
        for (int x = 0; x < nx; ++x) {
            orow[x] += w00 * r0[x] + w01 * r0[x + 1] + w02 * r0[x + 2] + w10 * r1[x] +
                       w11 * r1[x + 1] + w12 * r1[x + 2] + w20 * r2[x] + w21 * r2[x + 1] +
                       w22 * r2[x + 2];
        }
    }
}

template <class T>
void conv_forward_generic(const ConvDims& d, const T* __restrict__ in, const T* __restrict__ wt,
                          T* __restrict__ out) {
    const int64_t in_plane = int64_t(d.h) * d.w;
    const int64_t out_plane = int64_t(d.hout) * d.wout;
    for (int co = 0; co < d.cout; ++co) {
        T* __restrict__ outp = out + co * out_plane;
        for (int ci = 0; ci < d.cin; ++ci) {
            const T* __restrict__ inp = in + ci * in_plane;
            const T* __restrict__ wp = wt + ((int64_t(co) * d.cin + ci) * d.kh) * d.kw;
            for (int ky = 0; ky < d.kh; ++ky) {
                const int dy = ky - d.pad;
                int y0, y1;
                conv_range(dy, d.stride, d.h, d.hout, y0, y1);
                for (int kx = 0; kx < d.kw; ++kx) {
                    const T wv = wp[ky * d.kw + kx];
                    const int dx = kx - d.pad;
                    int x0, x1;
                    conv_range(dx, d.stride, d.w, d.wout, x0, x1);
                    const int nx = x1 - x0 + 1;
                    if (nx <= 0) continue;
                    for (int y = y0; y <= y1; ++y) {
                        const T* __restrict__ irow =
                            inp + int64_t(y * d.stride + dy) * d.w + (x0 * d.stride + dx);
                        T* __restrict__ orow = outp + int64_t(y) * d.wout + x0;
                        if (d.stride == 1) {
                            for (int x = 0; x < nx; ++x) orow[x] += wv * irow[x];
                        } else {
                            for (int x = 0; x < nx; ++x) orow[x] += wv * irow[2 * x];
                        }
                    }
                }
            }
        }
    }
}

template <class T>
void conv_forward(const ConvDims& d, const T* __restrict__ in, const T* __restrict__ wt,
                  const T* __restrict__ bias, T* __restrict__ out) {
    const int64_t in_plane = int64_t(d.h) * d.w;
    const int64_t out_plane = int64_t(d.hout) * d.wout;
    for (int co = 0; co < d.cout; ++co) {
        T* outp = out + co * out_plane;
        std::fill(outp, outp + out_plane, bias[co]);
    }
    if (d.stride == 1 && d.kh == 3 && d.kw == 3) {
        for (int co = 0; co < d.cout; ++co) {
            T* __restrict__ outp = out + co * out_plane;
            for (int ci = 0; ci < d.cin; ++ci) {
                const T* __restrict__ wp = wt + ((int64_t(co) * d.cin + ci) * 3) * 3;
                conv3x3_s1_accum(d.h, d.w, in + ci * in_plane, wp, d.pad, d.hout, d.wout, outp);
            }
        }
        return;
    }
    conv_forward_generic(d, in, wt, out);
}

template <class T>
void conv_backward_input(const ConvDims& d, const T* __restrict__ gout, const T* __restrict__ wt,
                         T* __restrict__ gin) {
    const int64_t in_plane = int64_t(d.h) * d.w;
    const int64_t out_plane = int64_t(d.hout) * d.wout;
    if (d.stride == 1 && d.kh == 3 && d.kw == 3 && d.pad <= 2) {
        // The input gradient is the output gradient correlated with the
        // point-reflected kernel at complementary padding.
        for (int ci = 0; ci < d.cin; ++ci) {
            T* __restrict__ gip = gin + ci * in_plane;
            for (int co = 0; co < d.cout; ++co) {
                const T* __restrict__ wp = wt + ((int64_t(co) * d.cin + ci) * 3) * 3;
                T wflip[9];
                for (int i = 0; i < 9; ++i) wflip[i] = wp[8 - i];
                conv3x3_s1_accum(d.hout, d.wout, gout + co * out_plane, wflip, 2 - d.pad, d.h,
                                 d.w, gip);
            }
        }
        return;
    }
    for (int co = 0; co < d.cout; ++co) {
        const T* __restrict__ gop = gout + co * out_plane;
        for (int ci = 0; ci < d.cin; ++ci) {
            T* __restrict__ gip = gin + ci * in_plane;
            const T* __restrict__ wp = wt + ((int64_t(co) * d.cin + ci) * d.kh) * d.kw;
            for (int ky = 0; ky < d.kh; ++ky) {
                const int dy = ky - d.pad;
                int y0, y1;
                conv_range(dy, d.stride, d.h, d.hout, y0, y1);
                for (int kx = 0; kx < d.kw; ++kx) {
                    const T wv = wp[ky * d.kw + kx];
                    const int dx = kx - d.pad;
                    int x0, x1;
                    conv_range(dx, d.stride, d.w, d.wout, x0, x1);
                    const int nx = x1 - x0 + 1;
                    if (nx <= 0) continue;
                    for (int y = y0; y <= y1; ++y) {
                        T* __restrict__ girow =
                            gip + int64_t(y * d.stride + dy) * d.w + (x0 * d.stride + dx);
                        const T* __restrict__ gorow = gop + int64_t(y) * d.wout + x0;
                        if (d.stride == 1) {
                            for (int x = 0; x < nx; ++x) girow[x] += wv * gorow[x];
                        } else {
                            for (int x = 0; x < nx; ++x) girow[2 * x] += wv * gorow[x];
                        }
                    }
                }
            }
        }
    }
}

// Fixed-order lane reduction: deterministic for a given shape, and the
// independent lanes let the compiler vectorize what a strict serial
// accumulation would forbid.
template <class T>
T dot_lanes(const T* __restrict__ a, const T* __restrict__ b, int n) {
    constexpr int kLanes = 16;
    T acc[kLanes] = {};
    int x = 0;
    for (; x + kLanes <= n; x += kLanes) {
        for (int j = 0; j < kLanes; ++j) acc[j] += a[x + j] * b[x + j];
    }
    T tail = T(0);
    for (; x < n; ++x) tail += a[x] * b[x];
    T total = T(0);
    for (int j = 0; j < kLanes; ++j) total += acc[j];
    return total + tail;
}

template <class T>
T sum_lanes(const T* __restrict__ a, int64_t n) {
    constexpr int kLanes = 16;
    T acc[kLanes] = {};
    int64_t x = 0;
    for (; x + kLanes <= n; x += kLanes) {
        for (int j = 0; j < kLanes; ++j) acc[j] += a[x + j];
    }
    T tail = T(0);
    for (; x < n; ++x) tail += a[x];
    T total = T(0);
    for (int j = 0; j < kLanes; ++j) total += acc[j];
    return total + tail;
}

// All nine 3x3 weight-gradient dots for one (gout plane, input plane) pair.
// Rows where every kernel row is in bounds take one fused pass with nine
// lane-accumulator groups; boundary rows/columns are handled scalar. The
// reduction order is fixed, so results are deterministic.
template <class T>
void conv3x3_s1_wgrad(const ConvDims& d, const T* __restrict__ gop, const T* __restrict__ inp,
                      T* __restrict__ gwp) {
    constexpr int kLanes = 8;
    T lanes[9][kLanes] = {};
    T edge[9] = {};
    const int xi0 = d.pad, xi1 = d.wout - 1 - d.pad;
    const int yi0 = d.pad, yi1 = d.hout - 1 - d.pad;

    auto scalar_row = [&](int y, int ky) {
        const int dy = ky - d.pad;
        const int iy = y + dy;
        if (iy < 0 || iy >= d.h) return;
        const T* __restrict__ irow = inp + int64_t(iy) * d.w;
        const T* __restrict__ gorow = gop + int64_t(y) * d.wout;
        for (int kx = 0; kx < 3; ++kx) {
            const int dx = kx - d.pad;
            int x0, x1;
            conv_range(dx, 1, d.w, d.wout, x0, x1);
            T acc = T(0);
            for (int x = x0; x <= x1; ++x) acc += gorow[x] * irow[x + dx];
            edge[ky * 3 + kx] += acc;
        }
    };

    for (int y = 0; y < d.hout; ++y) {
        if (y < yi0 || y > yi1 || xi1 < xi0) {
            for (int ky = 0; ky < 3; ++ky) scalar_row(y, ky);
            continue;
        }
        const T* __restrict__ gorow = gop + int64_t(y) * d.wout;
        const T* __restrict__ r0 = inp + int64_t(y - d.pad) * d.w;
        const T* __restrict__ r1 = r0 + d.w;
        const T* __restrict__ r2 = r1 + d.w;
        // per-kx boundary columns of this row
        for (int kx = 0; kx < 3; ++kx) {
            const int dx = kx - d.pad;
            int x0, x1;
            conv_range(dx, 1, d.w, d.wout, x0, x1);
            for (int x = x0; x < xi0 && x <= x1; ++x) {
                edge[0 + kx] += gorow[x] * r0[x + dx];
                edge[3 + kx] += gorow[x] * r1[x + dx];
                edge[6 + kx] += gorow[x] * r2[x + dx];
            }
            for (int x = std::max(x0, xi1 + 1); x <= x1; ++x) {
                edge[0 + kx] += gorow[x] * r0[x + dx];
                edge[3 + kx] += gorow[x] * r1[x + dx];
                edge[6 + kx] += gorow[x] * r2[x + dx];
            }
        }
        const int n = xi1 - xi0 + 1;
        const T* __restrict__ g0 = gorow + xi0;
        const T* __restrict__ a = r0 + (xi0 - d.pad);
        const T* __restrict__ b = r1 + (xi0 - d.pad);
        const T* __restrict__ c = r2 + (xi0 - d.pad);
        int x = 0;
        for (; x + kLanes <= n; x += kLanes) {
            for (int j = 0; j < kLanes; ++j) {
                const T g = g0[x + j];
                lanes[0][j] += g * a[x + j];
                lanes[1][j] += g * a[x + j + 1];
                lanes[2][j] += g * a[x + j + 2];
                lanes[3][j] += g * b[x + j];
                lanes[4][j] += g * b[x + j + 1];
                lanes[5][j] += g * b[x + j + 2];
                lanes[6][j] += g * c[x + j];
                lanes[7][j] += g * c[x + j + 1];
                lanes[8][j] += g * c[x + j + 2];
            }
        }
        for (; x < n; ++x) {
            const T g = g0[x];
            edge[0] += g * a[x];
            edge[1] += g * a[x + 1];
            edge[2] += g * a[x + 2];
            edge[3] += g * b[x];
            edge[4] += g * b[x + 1];
            edge[5] += g * b[x + 2];
            edge[6] += g * c[x];
            edge[7] += g * c[x + 1];
            edge[8] += g * c[x + 2];
        }
    }
    for (int k = 0; k < 9; ++k) {
        T total = T(0);
        for (int j = 0; j < kLanes; ++j) total += lanes[k][j];
        gwp[k] += total + edge[k];
    }
}

template <class T>
void conv_backward_weight(const ConvDims& d, const T* __restrict__ gout, const T* __restrict__ in,
                          T* __restrict__ gw, T* __restrict__ gb) {
    const int64_t in_plane = int64_t(d.h) * d.w;
    const int64_t out_plane = int64_t(d.hout) * d.wout;
    const bool fast3x3 = d.stride == 1 && d.kh == 3 && d.kw == 3;
    for (int co = 0; co < d.cout; ++co) {
        const T* __restrict__ gop = gout + co * out_plane;
        gb[co] += sum_lanes(gop, out_plane);
        for (int ci = 0; ci < d.cin; ++ci) {
            const T* __restrict__ inp = in + ci * in_plane;
            T* __restrict__ gwp = gw + ((int64_t(co) * d.cin + ci) * d.kh) * d.kw;
            if (fast3x3) {
                conv3x3_s1_wgrad(d, gop, inp, gwp);
                continue;
            }
            for (int ky = 0; ky < d.kh; ++ky) {
                const int dy = ky - d.pad;
                int y0, y1;
                conv_range(dy, d.stride, d.h, d.hout, y0, y1);
                for (int kx = 0; kx < d.kw; ++kx) {
                    const int dx = kx - d.pad;
                    int x0, x1;
                    conv_range(dx, d.stride, d.w, d.wout, x0, x1);
                    const int nx = x1 - x0 + 1;
                    if (nx <= 0) continue;
                    T acc = T(0);
                    for (int y = y0; y <= y1; ++y) {
                        const T* __restrict__ irow =
                            inp + int64_t(y * d.stride + dy) * d.w + (x0 * d.stride + dx);
                        const T* __restrict__ gorow = gop + int64_t(y) * d.wout + x0;
                        if (d.stride == 1) {
                            acc += dot_lanes(gorow, irow, nx);
                        } else {
                            for (int x = 0; x < nx; ++x) acc += gorow[x] * irow[2 * x];
                        }
                    }
                    gwp[ky * d.kw + kx] += acc;
                }
            }
        }
    }
}

} // namespace detail

/// 2D cross-correlation with zero padding. input [C_in,H,W], weight
/// [C_out,C_in,kh,kw] (odd extents), bias [C_out], stride in {1,2}.
template <class T>
TensorT<T> conv2d(const TensorT<T>& input, const TensorT<T>& weight, const TensorT<T>& bias,
                  int stride = 1, int padding = 0) {
    auto d = detail::conv_dims(input.shape(), weight.shape(), bias.shape(), stride, padding);
    std::vector<T> out(size_t(int64_t(d.cout) * d.hout * d.wout));
    detail::conv_forward(d, input.values().data(), weight.values().data(), bias.values().data(),
                         out.data());
    auto node = detail::make_node<T>({d.cout, d.hout, d.wout}, std::move(out),
                                     {input.node(), weight.node(), bias.node()});
    if (node->requires_grad) {
        auto* self = node.get();
        auto* pin = input.node().get();
        auto* pw = weight.node().get();
        auto* pb = bias.node().get();
        node->backprop = [self, pin, pw, pb, d]() {
            const T* g = self->grad.data();
            if (pin->requires_grad) {
                pin->ensure_grad();
                detail::conv_backward_input(d, g, pw->value.data(), pin->grad.data());
            }
            if (pw->requires_grad || pb->requires_grad) {
                pw->ensure_grad();
                pb->ensure_grad();
                detail::conv_backward_weight(d, g, pin->value.data(), pw->grad.data(),
                                             pb->grad.data());
            }
        };
    }
    return TensorT<T>(std::move(node));
}

// ---------------------------------------------------------------------------
// resampling
// ---------------------------------------------------------------------------

template <class T>
TensorT<T> upsample_nearest2x(const TensorT<T>& t) {
    if (t.rank() != 3) throw DimensionError("upsample_nearest2x: expected [C,H,W]");
    const int c = t.dim(0), h = t.dim(1), w = t.dim(2);
    std::vector<T> out(size_t(int64_t(c) * 4 * h * w));
    const T* in = t.values().data();
    for (int ci = 0; ci < c; ++ci) {
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                T v = in[(int64_t(ci) * h + y) * w + x];
                int64_t base = (int64_t(ci) * 2 * h + 2 * y) * 2 * w + 2 * x;
                out[size_t(base)] = v;
                out[size_t(base + 1)] = v;
                out[size_t(base + 2 * w)] = v;
                out[size_t(base + 2 * w + 1)] = v;
            }
        }
    }
    auto node = detail::make_node<T>({c, 2 * h, 2 * w}, std::move(out), {t.node()});
    if (node->requires_grad) {
        auto* self = node.get();
        auto* pa = t.node().get();
        node->backprop = [self, pa, c, h, w]() {
            pa->ensure_grad();
            const T* g = self->grad.data();
            T* ga = pa->grad.data();
            for (int ci = 0; ci < c; ++ci) {
                for (int y = 0; y < h; ++y) {
                    for (int x = 0; x < w; ++x) {
                        int64_t base = (int64_t(ci) * 2 * h + 2 * y) * 2 * w + 2 * x;
                        ga[(int64_t(ci) * h + y) * w + x] +=
                            g[base] + g[base + 1] + g[base + 2 * w] + g[base + 2 * w + 1];
                    }
                }
            }
        };
    }
    return TensorT<T>(std::move(node));
}

template <class T>
TensorT<T> avgpool2x(const TensorT<T>& t) {
    if (t.rank() != 3) throw DimensionError("avgpool2x: expected [C,H,W]");
    const int c = t.dim(0), h = t.dim(1), w = t.dim(2);
    if (h % 2 != 0 || w % 2 != 0) {
        throw DimensionError("avgpool2x: spatial extents must be even, got " + shape_str(t.shape()));
    }
    const int ho = h / 2, wo = w / 2;
    std::vector<T> out(size_t(int64_t(c) * ho * wo));
    const T* in = t.values().data();
    for (int ci = 0; ci < c; ++ci) {
        for (int y = 0; y < ho; ++y) {
            for (int x = 0; x < wo; ++x) {
                int64_t base = (int64_t(ci) * h + 2 * y) * w + 2 * x;
                out[size_t((int64_t(ci) * ho + y) * wo + x)] =
                    (in[base] + in[base + 1] + in[base + w] + in[base + w + 1]) * T(0.25);
            }
        }
    }
    auto node = detail::make_node<T>({c, ho, wo}, std::move(out), {t.node()});
    if (node->requires_grad) {
        auto* self = node.get();
        auto* pa = t.node().get();
        node->backprop = [self, pa, c, h, w, ho, wo]() {
            pa->ensure_grad();
            const T* g = self->grad.data();
            T* ga = pa->grad.data();
            for (int ci = 0; ci < c; ++ci) {
                for (int y = 0; y < ho; ++y) {
                    for (int x = 0; x < wo; ++x) {
                        T gv = g[(int64_t(ci) * ho + y) * wo + x] * T(0.25);
                        int64_t base = (int64_t(ci) * h + 2 * y) * w + 2 * x;
                        ga[base] += gv;
                        ga[base + 1] += gv;
                        ga[base + w] += gv;
                        ga[base + w + 1] += gv;
                    }
                }
            }
        };
    }
    return TensorT<T>(std::move(node));
}

// ---------------------------------------------------------------------------
// Sobel gradient magnitude
// ---------------------------------------------------------------------------

/// sqrt(Gx^2 + Gy^2 + delta) with the fixed 3x3 Sobel kernels and replicate
/// (edge-clamp) padding; delta keeps the square root differentiable.
template <class T>
TensorT<T> sobel(const TensorT<T>& t, double delta = 1e-12) {
    if (t.rank() != 3 || t.dim(0) != 1) {
        throw DimensionError("sobel: expected single-channel [1,H,W], got " + shape_str(t.shape()));
    }
    static const int KX[3][3] = {{-1, 0, 1}, {-2, 0, 2}, {-1, 0, 1}};
    static const int KY[3][3] = {{-1, -2, -1}, {0, 0, 0}, {1, 2, 1}};
    const int h = t.dim(1), w = t.dim(2);
    const T* in = t.values().data();
    std::vector<T> gx(size_t(int64_t(h) * w), T(0));
    std::vector<T> gy(size_t(int64_t(h) * w), T(0));
    std::vector<T> out(size_t(int64_t(h) * w));
    auto clampi = [](int v, int hi) { return v < 0 ? 0 : (v > hi ? hi : v); };
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            T ax = T(0), ay = T(0);
            for (int dy = -1; dy <= 1; ++dy) {
                const int yy = clampi(y + dy, h - 1);
                for (int dx = -1; dx <= 1; ++dx) {
                    const int xx = clampi(x + dx, w - 1);
                    const T v = in[int64_t(yy) * w + xx];
                    ax += T(KX[dy + 1][dx + 1]) * v;
                    ay += T(KY[dy + 1][dx + 1]) * v;
                }
            }
            gx[size_t(int64_t(y) * w + x)] = ax;
            gy[size_t(int64_t(y) * w + x)] = ay;
            out[size_t(int64_t(y) * w + x)] = std::sqrt(ax * ax + ay * ay + T(delta));
        }
    }
    auto node = detail::make_node<T>(t.shape(), std::move(out), {t.node()});
    if (node->requires_grad) {
        auto* self = node.get();
        auto* pa = t.node().get();
        node->backprop = [self, pa, gx = std::move(gx), gy = std::move(gy), h, w]() {
            pa->ensure_grad();
            const T* g = self->grad.data();
            const T* y_ = self->value.data();
            T* ga = pa->grad.data();
            auto clampi = [](int v, int hi) { return v < 0 ? 0 : (v > hi ? hi : v); };
            for (int y = 0; y < h; ++y) {
                for (int x = 0; x < w; ++x) {
                    const size_t i = size_t(int64_t(y) * w + x);
                    const T scale = g[i] / y_[i];
                    const T cx = scale * gx[i];
                    const T cy = scale * gy[i];
                    for (int dy = -1; dy <= 1; ++dy) {
                        const int yy = clampi(y + dy, h - 1);
                        for (int dx = -1; dx <= 1; ++dx) {
                            const int xx = clampi(x + dx, w - 1);
                            ga[int64_t(yy) * w + xx] +=
                                cx * T(KX[dy + 1][dx + 1]) + cy * T(KY[dy + 1][dx + 1]);
                        }
                    }
                }
            }
        };
    }
    return TensorT<T>(std::move(node));
}

// ---------------------------------------------------------------------------
// channel concat / slice
// ---------------------------------------------------------------------------

template <class T>
TensorT<T> concat_channels(const TensorT<T>& a, const TensorT<T>& b) {
    if (a.rank() != 3 || b.rank() != 3 || a.dim(1) != b.dim(1) || a.dim(2) != b.dim(2)) {
        throw DimensionError("concat_channels: spatial dims must match, got " +
                             shape_str(a.shape()) + " and " + shape_str(b.shape()));
    }
    const int ca = a.dim(0), cb = b.dim(0), h = a.dim(1), w = a.dim(2);
    std::vector<T> out;
    out.reserve(a.values().size() + b.values().size());
    out.insert(out.end(), a.values().begin(), a.values().end());
    out.insert(out.end(), b.values().begin(), b.values().end());
    auto node = detail::make_node<T>({ca + cb, h, w}, std::move(out), {a.node(), b.node()});
    if (node->requires_grad) {
        auto* self = node.get();
        auto* pa = a.node().get();
        auto* pb = b.node().get();
        const size_t na = a.values().size();
        node->backprop = [self, pa, pb, na]() {
            const T* g = self->grad.data();
            if (pa->requires_grad) {
                pa->ensure_grad();
                T* ga = pa->grad.data();
                for (size_t i = 0; i < na; ++i) ga[i] += g[i];
            }
            if (pb->requires_grad) {
                pb->ensure_grad();
                T* gb = pb->grad.data();
                for (size_t i = 0; i < pb->value.size(); ++i) gb[i] += g[na + i];
            }
        };
    }
    return TensorT<T>(std::move(node));
}

template <class T>
TensorT<T> channel_slice(const TensorT<T>& t, int channel) {
    if (t.rank() != 3) throw DimensionError("channel_slice: expected [C,H,W]");
    if (channel < 0 || channel >= t.dim(0)) {
        throw DimensionError("channel_slice: channel " + std::to_string(channel) +
                             " out of range for " + shape_str(t.shape()));
    }
    const int h = t.dim(1), w = t.dim(2);
    const int64_t plane = int64_t(h) * w;
    std::vector<T> out(t.values().begin() + channel * plane,
                       t.values().begin() + (channel + 1) * plane);
    auto node = detail::make_node<T>({1, h, w}, std::move(out), {t.node()});
    if (node->requires_grad) {
        auto* self = node.get();
        auto* pa = t.node().get();
        node->backprop = [self, pa, channel, plane]() {
            pa->ensure_grad();
            const T* g = self->grad.data();
            T* ga = pa->grad.data() + channel * plane;
            for (int64_t i = 0; i < plane; ++i) ga[i] += g[i];
        };
    }
    return TensorT<T>(std::move(node));
}

// ---------------------------------------------------------------------------
// gather-style ops used by the segmentation losses
// ---------------------------------------------------------------------------

/// -norm * sum_x log(probs[cls(x)](x) + eps) over [n,H,W] probabilities and an
/// integer class map of length H*W. norm is 1/(H*W) or 1 (see losses).
template <class T>
TensorT<T> ce_gather_loss(const TensorT<T>& probs, const std::vector<int>& classes, double eps,
                          double norm) {
    if (probs.rank() != 3) throw DimensionError("ce_gather_loss: expected [n,H,W]");
    const int n = probs.dim(0);
    const int64_t hw = int64_t(probs.dim(1)) * probs.dim(2);
    if (int64_t(classes.size()) != hw) {
        throw DimensionError("ce_gather_loss: class map size mismatch");
    }
    const T* pv = probs.values().data();
    T acc = T(0);
    for (int64_t p = 0; p < hw; ++p) {
        const int c = classes[size_t(p)];
        if (c < 0 || c >= n) throw ContractError("ce_gather_loss: class index out of range");
        acc -= std::log(pv[int64_t(c) * hw + p] + T(eps));
    }
    acc *= T(norm);
    auto node = detail::make_node<T>({1}, {acc}, {probs.node()});
    if (node->requires_grad) {
        auto* self = node.get();
        auto* pa = probs.node().get();
        node->backprop = [self, pa, classes, eps, norm, hw]() {
            pa->ensure_grad();
            const T g = self->grad[0] * T(norm);
            const T* pv = pa->value.data();
            T* ga = pa->grad.data();
            for (int64_t p = 0; p < hw; ++p) {
                const int64_t i = int64_t(classes[size_t(p)]) * hw + p;
                ga[i] -= g / (pv[i] + T(eps));
            }
        };
    }
    return TensorT<T>(std::move(node));
}

/// Per-class sums of probs over the pixels labelled with that class:
/// out[c] = sum_x probs[c](x) * [cls(x) == c]. Used by the Dice loss.
template <class T>
TensorT<T> class_masked_sums(const TensorT<T>& probs, const std::vector<int>& classes) {
    if (probs.rank() != 3) throw DimensionError("class_masked_sums: expected [n,H,W]");
    const int n = probs.dim(0);
    const int64_t hw = int64_t(probs.dim(1)) * probs.dim(2);
    if (int64_t(classes.size()) != hw) {
        throw DimensionError("class_masked_sums: class map size mismatch");
    }
    const T* pv = probs.values().data();
    std::vector<T> out(size_t(n), T(0));
    for (int64_t p = 0; p < hw; ++p) {
        const int c = classes[size_t(p)];
        if (c < 0 || c >= n) throw ContractError("class_masked_sums: class index out of range");
        out[size_t(c)] += pv[int64_t(c) * hw + p];
    }
    auto node = detail::make_node<T>({n}, std::move(out), {probs.node()});
    if (node->requires_grad) {
        auto* self = node.get();
        auto* pa = probs.node().get();
        node->backprop = [self, pa, classes, hw]() {
            pa->ensure_grad();
            const T* g = self->grad.data();
            T* ga = pa->grad.data();
            for (int64_t p = 0; p < hw; ++p) {
                const int c = classes[size_t(p)];
                ga[int64_t(c) * hw + p] += g[c];
            }
        };
    }
    return TensorT<T>(std::move(node));
}

} // namespace ssvif
