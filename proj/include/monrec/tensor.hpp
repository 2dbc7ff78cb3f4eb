#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "monrec/common.hpp"

// Dense tensors plus a reverse-mode tape. The op set is deliberately small:
// what the selection MLP, the graph ranker and the paper losses need, each op
// with a hand-written adjoint. Values are double throughout so the 1e-4
// gradient-check tolerance has headroom.

namespace monrec::tensor {

struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double> data;

    Tensor() = default;
    Tensor(std::vector<std::size_t> s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {}

    static Tensor scalar(double v) { return Tensor({1}, {v}); }
    static Tensor vec(std::size_t n, double fill = 0.0) { return Tensor({n}, std::vector<double>(n, fill)); }
    static Tensor matrix(std::size_t r, std::size_t c, double fill = 0.0) {
        return Tensor({r, c}, std::vector<double>(r * c, fill));
    }

    std::size_t numel() const {
        std::size_t n = 1;
        for (std::size_t d : shape) n *= d;
        return shape.empty() ? 0 : n;
    }
    bool is_scalar() const { return numel() == 1; }
    std::size_t rows() const { return shape.empty() ? 0 : shape[0]; }
    std::size_t cols() const { return shape.size() < 2 ? 1 : shape[1]; }
    double& at(std::size_t i, std::size_t j) { return data[i * cols() + j]; }
    double at(std::size_t i, std::size_t j) const { return data[i * cols() + j]; }
    double item() const { return data.at(0); }
    bool same_shape(const Tensor& o) const { return shape == o.shape; }
};

struct Var {
    std::uint32_t id = UINT32_MAX;
    bool valid() const { return id != UINT32_MAX; }
};

class Tape;
using BackwardFn = std::function<void(Tape&)>;

/// Ordered op record; backward visits each exactly once, newest first.
struct OpRecord {
    const char* kind;
    std::vector<std::uint32_t> inputs;
    std::uint32_t output;
    BackwardFn backward;  // saved values live in the closure
};

class Tape {
public:
    /// When set, every op verifies its output is finite and throws
    /// NonFiniteError otherwise; training loops turn that into a
    /// divergence error.
    bool check_finite = true;

    Var leaf(Tensor value, bool requires_grad = false);
    Var constant(Tensor value) { return leaf(std::move(value), false); }

    // ---- differentiable op set ----
    Var matmul(Var a, Var b);                 // (m,k)x(k,n)
    Var add(Var a, Var b);                    // same shape, or b a scalar / row vector broadcast
    Var mul(Var a, Var b);                    // elementwise
    Var concat(Var a, Var b);                 // 1-D append / 2-D along columns
    Var mean(Var a, int axis);                // 2-D -> 1-D
    Var mean_all(Var a);                      // -> scalar
    Var sum_all(Var a);                       // -> scalar
    Var relu(Var a);
    Var sigmoid(Var a);
    Var softmax(Var a, int axis);             // rows of a 2-D (axis=1) or a 1-D vector
    Var l2norm(Var a);                        // -> scalar
    Var sqdist(Var a, Var b);                 // -> scalar, sum((a-b)^2)
    Var log(Var a);
    Var neg(Var a);
    Var scale(Var a, double s);

    // ---- infrastructure ops (batching plumbing, same adjoint discipline) ----
    Var gather_rows(Var a, std::vector<std::size_t> rows);
    Var clamp(Var a, double lo, double hi);   // pass-through gradient inside the window
    Var vstack(const std::vector<Var>& parts);  // 2-D row-wise stack, equal widths
    Var transpose(Var a);                       // 2-D
    Var flatten(Var a);                         // any shape -> 1-D

    /// Escape hatch for fused ops (the ranker's neighborhood attention).
    /// The backward closure must accumulate into grad_mut(inputs...).
    Var custom(const char* kind, std::vector<Var> inputs, Tensor value, BackwardFn backward);

    /// Reverse sweep from a scalar loss. Populates gradients for every
    /// tensor reachable from it; leaves created with requires_grad are the
    /// ones callers read back.
    void backward(Var loss);

    const Tensor& value(Var v) const { return values_.at(v.id); }
    const Tensor& grad(Var v) const;
    Tensor& grad_mut(Var v);
    /// Output gradient inside a backward closure; zero-filled on first touch.
    const Tensor& out_grad(std::uint32_t id) { return grad_mut(Var{id}); }
    bool requires_grad(Var v) const { return needs_grad_.at(v.id); }

    std::size_t num_records() const { return records_.size(); }
    /// Id the next pushed op will receive; custom-op builders capture it so
    /// their backward closure can read the output gradient.
    std::uint32_t next_id() const { return static_cast<std::uint32_t>(values_.size()); }
    void clear();

private:
    Var push(const char* kind, std::vector<Var> inputs, Tensor value, BackwardFn backward);
    void ensure_finite(const char* kind, const Tensor& t) const;

    std::vector<Tensor> values_;
    std::vector<Tensor> grads_;
    std::vector<bool> needs_grad_;
    std::vector<OpRecord> records_;
};

struct GradCheckOptions {
    double eps = 1e-5;
    std::size_t max_coords_per_param = 32;
    std::uint64_t seed = 1234;
    /// Coordinates to skip, e.g. inputs sitting exactly on the ReLU kink
    /// (subgradient there is 0 by convention and finite differences see the
    /// one-sided slope).
    std::function<bool(std::size_t param_index, std::size_t coord)> exclude;
};

/// Max over sampled coordinates of |autodiff - central difference| /
/// (|central difference| + 1e-8). `build` must construct a scalar loss from
/// fresh leaves on the given tape.
double grad_check(const std::function<Var(Tape&, const std::vector<Var>&)>& build,
                  const std::vector<Tensor>& params, GradCheckOptions opts = {});

}  // namespace monrec::tensor
