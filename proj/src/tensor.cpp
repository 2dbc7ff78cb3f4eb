#include "monrec/tensor.hpp"

#include <algorithm>
#include <cmath>

#include "monrec/kernels.hpp"

namespace monrec::tensor {

namespace {

double stable_sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

}  // namespace

void Tape::ensure_finite(const char* kind, const Tensor& t) const {
    if (!check_finite) return;
    for (double v : t.data)
        if (!std::isfinite(v)) throw NonFiniteError(std::string("non-finite value produced by op '") + kind + "'");
}

Var Tape::push(const char* kind, std::vector<Var> inputs, Tensor value, BackwardFn backward) {
    ensure_finite(kind, value);
    bool needs = false;
    std::vector<std::uint32_t> in_ids;
    in_ids.reserve(inputs.size());
    for (Var v : inputs) {
        in_ids.push_back(v.id);
        needs = needs || needs_grad_.at(v.id);
    }
    const std::uint32_t id = static_cast<std::uint32_t>(values_.size());
    values_.push_back(std::move(value));
    grads_.emplace_back();
    needs_grad_.push_back(needs);
    if (needs) records_.push_back(OpRecord{kind, std::move(in_ids), id, std::move(backward)});
    return Var{id};
}

Var Tape::leaf(Tensor value, bool requires_grad) {
    ensure_finite("leaf", value);
    const std::uint32_t id = static_cast<std::uint32_t>(values_.size());
    values_.push_back(std::move(value));
    grads_.emplace_back();
    needs_grad_.push_back(requires_grad);
    return Var{id};
}

const Tensor& Tape::grad(Var v) const {
    const Tensor& g = grads_.at(v.id);
    if (g.data.empty() && values_.at(v.id).numel() > 0)
        throw Error("gradient not populated; call backward() on a loss reaching this tensor");
    return g;
}

Tensor& Tape::grad_mut(Var v) {
    Tensor& g = grads_.at(v.id);
    if (g.data.empty()) {
        const Tensor& val = values_.at(v.id);
        g.shape = val.shape;
        g.data.assign(val.data.size(), 0.0);
    }
    return g;
}

void Tape::clear() {
    values_.clear();
    grads_.clear();
    needs_grad_.clear();
    records_.clear();
}

void Tape::backward(Var loss) {
    if (!value(loss).is_scalar()) throw Error("backward: loss must be a scalar tensor");
    grad_mut(loss).data[0] = 1.0;
    for (auto it = records_.rbegin(); it != records_.rend(); ++it) {
        if (grads_.at(it->output).data.empty()) continue;  // no gradient flowed here
        it->backward(*this);
    }
}

Var Tape::matmul(Var a, Var b) {
    const Tensor& ta = value(a);
    const Tensor& tb = value(b);
    if (ta.shape.size() != 2 || tb.shape.size() != 2 || ta.shape[1] != tb.shape[0])
        throw ShapeError("matmul: need (m,k)x(k,n), got mismatched shapes");
    const std::size_t m = ta.shape[0], k = ta.shape[1], n = tb.shape[1];
    Tensor out = Tensor::matrix(m, n);
    kernels::matmul_nn(ta.data.data(), tb.data.data(), out.data.data(), m, k, n);
    const std::uint32_t aid = a.id, bid = b.id, oid = static_cast<std::uint32_t>(values_.size());
    return push("matmul", {a, b}, std::move(out), [aid, bid, oid, m, k, n](Tape& t) {
        const Tensor& go = t.grads_.at(oid);
        const Tensor& va = t.values_.at(aid);
        const Tensor& vb = t.values_.at(bid);
        if (t.needs_grad_.at(aid)) {
            Tensor& ga = t.grad_mut(Var{aid});
            // dA = dC * B^T
            kernels::matmul_nt(go.data.data(), vb.data.data(), ga.data.data(), m, n, k, true);
        }
        if (t.needs_grad_.at(bid)) {
            Tensor& gb = t.grad_mut(Var{bid});
            // dB = A^T * dC
            kernels::matmul_tn(va.data.data(), go.data.data(), gb.data.data(), m, k, n, true);
        }
    });
}

Var Tape::add(Var a, Var b) {
    const Tensor& ta = value(a);
    const Tensor& tb = value(b);
    Tensor out = ta;
    enum class Mode { Same, Scalar, Row } mode;
    if (ta.same_shape(tb)) {
        mode = Mode::Same;
        for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += tb.data[i];
    } else if (tb.numel() == 1) {
        mode = Mode::Scalar;
        for (double& v : out.data) v += tb.data[0];
    } else if (ta.shape.size() == 2 && tb.numel() == ta.shape[1]) {
        mode = Mode::Row;
        const std::size_t m = ta.shape[0], n = ta.shape[1];
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) out.data[i * n + j] += tb.data[j];
    } else {
        throw ShapeError("add: shapes must match, or b must be a scalar or a row vector");
    }
    const std::uint32_t aid = a.id, bid = b.id, oid = static_cast<std::uint32_t>(values_.size());
    return push("add", {a, b}, std::move(out), [aid, bid, oid, mode](Tape& t) {
        const Tensor& go = t.grads_.at(oid);
        if (t.needs_grad_.at(aid)) {
            Tensor& ga = t.grad_mut(Var{aid});
            for (std::size_t i = 0; i < go.data.size(); ++i) ga.data[i] += go.data[i];
        }
        if (t.needs_grad_.at(bid)) {
            Tensor& gb = t.grad_mut(Var{bid});
            switch (mode) {
                case Mode::Same:
                    for (std::size_t i = 0; i < go.data.size(); ++i) gb.data[i] += go.data[i];
                    break;
                case Mode::Scalar:
                    for (double v : go.data) gb.data[0] += v;
                    break;
                case Mode::Row: {
                    const std::size_t n = gb.data.size();
                    const std::size_t m = go.data.size() / n;
                    for (std::size_t i = 0; i < m; ++i)
                        for (std::size_t j = 0; j < n; ++j) gb.data[j] += go.data[i * n + j];
                    break;
                }
            }
        }
    });
}

Var Tape::mul(Var a, Var b) {
    const Tensor& ta = value(a);
    const Tensor& tb = value(b);
    if (!ta.same_shape(tb)) throw ShapeError("mul: elementwise operands must share a shape");
    Tensor out = ta;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] *= tb.data[i];
    const std::uint32_t aid = a.id, bid = b.id, oid = static_cast<std::uint32_t>(values_.size());
    return push("mul", {a, b}, std::move(out), [aid, bid, oid](Tape& t) {
        const Tensor& go = t.grads_.at(oid);
        const Tensor& va = t.values_.at(aid);
        const Tensor& vb = t.values_.at(bid);
        if (t.needs_grad_.at(aid)) {
            Tensor& ga = t.grad_mut(Var{aid});
            for (std::size_t i = 0; i < go.data.size(); ++i) ga.data[i] += go.data[i] * vb.data[i];
        }
        if (t.needs_grad_.at(bid)) {
            Tensor& gb = t.grad_mut(Var{bid});
            for (std::size_t i = 0; i < go.data.size(); ++i) gb.data[i] += go.data[i] * va.data[i];
        }
    });
}

Var Tape::concat(Var a, Var b) {
    const Tensor& ta = value(a);
    const Tensor& tb = value(b);
    Tensor out;
    if (ta.shape.size() == 1 && tb.shape.size() == 1) {
        out = Tensor::vec(ta.shape[0] + tb.shape[0]);
        std::copy(ta.data.begin(), ta.data.end(), out.data.begin());
        std::copy(tb.data.begin(), tb.data.end(), out.data.begin() + static_cast<std::ptrdiff_t>(ta.shape[0]));
    } else if (ta.shape.size() == 2 && tb.shape.size() == 2 && ta.shape[0] == tb.shape[0]) {
        const std::size_t m = ta.shape[0], p = ta.shape[1], q = tb.shape[1];
        out = Tensor::matrix(m, p + q);
        for (std::size_t i = 0; i < m; ++i) {
            std::copy_n(ta.data.begin() + static_cast<std::ptrdiff_t>(i * p), p,
                        out.data.begin() + static_cast<std::ptrdiff_t>(i * (p + q)));
            std::copy_n(tb.data.begin() + static_cast<std::ptrdiff_t>(i * q), q,
                        out.data.begin() + static_cast<std::ptrdiff_t>(i * (p + q) + p));
        }
    } else {
        throw ShapeError("concat: 1-D append or 2-D column concat with equal row counts");
    }
    const std::uint32_t aid = a.id, bid = b.id, oid = static_cast<std::uint32_t>(values_.size());
    return push("concat", {a, b}, std::move(out), [aid, bid, oid](Tape& t) {
        const Tensor& go = t.grads_.at(oid);
        const Tensor& va = t.values_.at(aid);
        const Tensor& vb = t.values_.at(bid);
        if (va.shape.size() == 1) {
            const std::size_t p = va.shape[0];
            if (t.needs_grad_.at(aid)) {
                Tensor& ga = t.grad_mut(Var{aid});
                for (std::size_t i = 0; i < p; ++i) ga.data[i] += go.data[i];
            }
            if (t.needs_grad_.at(bid)) {
                Tensor& gb = t.grad_mut(Var{bid});
                for (std::size_t i = 0; i < vb.shape[0]; ++i) gb.data[i] += go.data[p + i];
            }
        } else {
            const std::size_t m = va.shape[0], p = va.shape[1], q = vb.shape[1];
            if (t.needs_grad_.at(aid)) {
                Tensor& ga = t.grad_mut(Var{aid});
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t j = 0; j < p; ++j) ga.data[i * p + j] += go.data[i * (p + q) + j];
            }
            if (t.needs_grad_.at(bid)) {
                Tensor& gb = t.grad_mut(Var{bid});
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t j = 0; j < q; ++j) gb.data[i * q + j] += go.data[i * (p + q) + p + j];
            }
        }
    });
}

Var Tape::mean(Var a, int axis) {
    const Tensor& ta = value(a);
    if (ta.shape.size() != 2 || (axis != 0 && axis != 1)) throw ShapeError("mean: expects a 2-D tensor and axis 0 or 1");
    const std::size_t m = ta.shape[0], n = ta.shape[1];
    Tensor out = Tensor::vec(axis == 0 ? n : m);
    if (axis == 0) {
        for (std::size_t j = 0; j < n; ++j) {
            double acc = 0.0;
            for (std::size_t i = 0; i < m; ++i) acc += ta.data[i * n + j];
            out.data[j] = acc / static_cast<double>(m);
        }
    } else {
        for (std::size_t i = 0; i < m; ++i) {
            double acc = 0.0;
            for (std::size_t j = 0; j < n; ++j) acc += ta.data[i * n + j];
            out.data[i] = acc / static_cast<double>(n);
        }
    }
    const std::uint32_t aid = a.id, oid = static_cast<std::uint32_t>(values_.size());
    return push("mean", {a}, std::move(out), [aid, oid, m, n, axis](Tape& t) {
        if (!t.needs_grad_.at(aid)) return;
        const Tensor& go = t.grads_.at(oid);
        Tensor& ga = t.grad_mut(Var{aid});
        if (axis == 0) {
            const double inv = 1.0 / static_cast<double>(m);
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j) ga.data[i * n + j] += go.data[j] * inv;
        } else {
            const double inv = 1.0 / static_cast<double>(n);
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j) ga.data[i * n + j] += go.data[i] * inv;
        }
    });
}

Var Tape::mean_all(Var a) {
    const Tensor& ta = value(a);
    const std::size_t n = ta.numel();
    if (n == 0) throw ShapeError("mean_all: empty tensor");
    double acc = 0.0;
    for (double v : ta.data) acc += v;
    Tensor out = Tensor::scalar(acc / static_cast<double>(n));
    const std::uint32_t aid = a.id, oid = static_cast<std::uint32_t>(values_.size());
    return push("mean_all", {a}, std::move(out), [aid, oid, n](Tape& t) {
        if (!t.needs_grad_.at(aid)) return;
        const double g = t.grads_.at(oid).data[0] / static_cast<double>(n);
        Tensor& ga = t.grad_mut(Var{aid});
        for (double& v : ga.data) v += g;
    });
}

Var Tape::sum_all(Var a) {
    const Tensor& ta = value(a);
    double acc = 0.0;
    for (double v : ta.data) acc += v;
    Tensor out = Tensor::scalar(acc);
    const std::uint32_t aid = a.id, oid = static_cast<std::uint32_t>(values_.size());
    return push("sum_all", {a}, std::move(out), [aid, oid](Tape& t) {
        if (!t.needs_grad_.at(aid)) return;
        const double g = t.grads_.at(oid).data[0];
        Tensor& ga = t.grad_mut(Var{aid});
        for (double& v : ga.data) v += g;
    });
}

Var Tape::relu(Var a) {
    Tensor out = value(a);
    for (double& v : out.data) v = v > 0.0 ? v : 0.0;  // subgradient at 0 is 0
    const std::uint32_t aid = a.id, oid = static_cast<std::uint32_t>(values_.size());
    return push("relu", {a}, std::move(out), [aid, oid](Tape& t) {
        if (!t.needs_grad_.at(aid)) return;
        const Tensor& go = t.grads_.at(oid);
        const Tensor& va = t.values_.at(aid);
        Tensor& ga = t.grad_mut(Var{aid});
        for (std::size_t i = 0; i < go.data.size(); ++i)
            if (va.data[i] > 0.0) ga.data[i] += go.data[i];
    });
}

Var Tape::sigmoid(Var a) {
    Tensor out = value(a);
    for (double& v : out.data) v = stable_sigmoid(v);
    const std::uint32_t aid = a.id, oid = static_cast<std::uint32_t>(values_.size());
    return push("sigmoid", {a}, std::move(out), [aid, oid](Tape& t) {
        if (!t.needs_grad_.at(aid)) return;
        const Tensor& go = t.grads_.at(oid);
        const Tensor& vo = t.values_.at(oid);
        Tensor& ga = t.grad_mut(Var{aid});
        for (std::size_t i = 0; i < go.data.size(); ++i) {
            const double s = vo.data[i];
            ga.data[i] += go.data[i] * s * (1.0 - s);
        }
    });
}

Var Tape::softmax(Var a, int axis) {
    const Tensor& ta = value(a);
    std::size_t m, n;
    if (ta.shape.size() == 1) {
        m = 1;
        n = ta.shape[0];
    } else if (ta.shape.size() == 2 && axis == 1) {
        m = ta.shape[0];
        n = ta.shape[1];
    } else {
        throw ShapeError("softmax: 1-D vector or 2-D with axis=1");
    }
    if (n == 0) throw ShapeError("softmax: empty axis");
    Tensor out = ta;
    for (std::size_t i = 0; i < m; ++i) {
        double* row = out.data.data() + i * n;
        const double mx = *std::max_element(row, row + n);
        double z = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            row[j] = std::exp(row[j] - mx);
            z += row[j];
        }
        for (std::size_t j = 0; j < n; ++j) row[j] /= z;
    }
    const std::uint32_t aid = a.id, oid = static_cast<std::uint32_t>(values_.size());
    return push("softmax", {a}, std::move(out), [aid, oid, m, n](Tape& t) {
        if (!t.needs_grad_.at(aid)) return;
        const Tensor& go = t.grads_.at(oid);
        const Tensor& s = t.values_.at(oid);
        Tensor& ga = t.grad_mut(Var{aid});
        for (std::size_t i = 0; i < m; ++i) {
            double dot = 0.0;
            for (std::size_t j = 0; j < n; ++j) dot += go.data[i * n + j] * s.data[i * n + j];
            for (std::size_t j = 0; j < n; ++j)
                ga.data[i * n + j] += s.data[i * n + j] * (go.data[i * n + j] - dot);
        }
    });
}

Var Tape::l2norm(Var a) {
    const Tensor& ta = value(a);
    double acc = 0.0;
    for (double v : ta.data) acc += v * v;
    const double norm = std::sqrt(acc);
    Tensor out = Tensor::scalar(norm);
    const std::uint32_t aid = a.id, oid = static_cast<std::uint32_t>(values_.size());
    return push("l2norm", {a}, std::move(out), [aid, oid, norm](Tape& t) {
        if (!t.needs_grad_.at(aid) || norm < 1e-12) return;  // subgradient 0 at the origin
        const double g = t.grads_.at(oid).data[0] / norm;
        const Tensor& va = t.values_.at(aid);
        Tensor& ga = t.grad_mut(Var{aid});
        for (std::size_t i = 0; i < va.data.size(); ++i) ga.data[i] += g * va.data[i];
    });
}

Var Tape::sqdist(Var a, Var b) {
    const Tensor& ta = value(a);
    const Tensor& tb = value(b);
    if (!ta.same_shape(tb)) throw ShapeError("sqdist: operands must share a shape");
    double acc = 0.0;
    for (std::size_t i = 0; i < ta.data.size(); ++i) {
        const double d = ta.data[i] - tb.data[i];
        acc += d * d;
    }
    Tensor out = Tensor::scalar(acc);
    const std::uint32_t aid = a.id, bid = b.id, oid = static_cast<std::uint32_t>(values_.size());
    return push("sqdist", {a, b}, std::move(out), [aid, bid, oid](Tape& t) {
        const double g = t.grads_.at(oid).data[0];
        const Tensor& va = t.values_.at(aid);
        const Tensor& vb = t.values_.at(bid);
        if (t.needs_grad_.at(aid)) {
            Tensor& ga = t.grad_mut(Var{aid});
            for (std::size_t i = 0; i < va.data.size(); ++i)
                ga.data[i] += 2.0 * g * (va.data[i] - vb.data[i]);
        }
        if (t.needs_grad_.at(bid)) {
            Tensor& gb = t.grad_mut(Var{bid});
            for (std::size_t i = 0; i < va.data.size(); ++i)
                gb.data[i] -= 2.0 * g * (va.data[i] - vb.data[i]);
        }
    });
}

Var Tape::log(Var a) {
    Tensor out = value(a);
    for (double& v : out.data) v = std::log(v);
    const std::uint32_t aid = a.id, oid = static_cast<std::uint32_t>(values_.size());
    return push("log", {a}, std::move(out), [aid, oid](Tape& t) {
        if (!t.needs_grad_.at(aid)) return;
        const Tensor& go = t.grads_.at(oid);
        const Tensor& va = t.values_.at(aid);
        Tensor& ga = t.grad_mut(Var{aid});
        for (std::size_t i = 0; i < go.data.size(); ++i) ga.data[i] += go.data[i] / va.data[i];
    });
}

Var Tape::neg(Var a) {
    Tensor out = value(a);
    for (double& v : out.data) v = -v;
    const std::uint32_t aid = a.id, oid = static_cast<std::uint32_t>(values_.size());
    return push("neg", {a}, std::move(out), [aid, oid](Tape& t) {
        if (!t.needs_grad_.at(aid)) return;
        const Tensor& go = t.grads_.at(oid);
        Tensor& ga = t.grad_mut(Var{aid});
        for (std::size_t i = 0; i < go.data.size(); ++i) ga.data[i] -= go.data[i];
    });
}

Var Tape::scale(Var a, double s) {
    Tensor out = value(a);
    for (double& v : out.data) v *= s;
    const std::uint32_t aid = a.id, oid = static_cast<std::uint32_t>(values_.size());
    return push("scale", {a}, std::move(out), [aid, oid, s](Tape& t) {
        if (!t.needs_grad_.at(aid)) return;
        const Tensor& go = t.grads_.at(oid);
        Tensor& ga = t.grad_mut(Var{aid});
        for (std::size_t i = 0; i < go.data.size(); ++i) ga.data[i] += s * go.data[i];
    });
}

Var Tape::gather_rows(Var a, std::vector<std::size_t> rows) {
    const Tensor& ta = value(a);
    if (ta.shape.size() != 2) throw ShapeError("gather_rows: expects a 2-D tensor");
    const std::size_t n = ta.shape[1];
    Tensor out = Tensor::matrix(rows.size(), n);
    for (std::size_t r = 0; r < rows.size(); ++r) {
        if (rows[r] >= ta.shape[0]) throw ShapeError("gather_rows: row index out of range");
        std::copy_n(ta.data.begin() + static_cast<std::ptrdiff_t>(rows[r] * n), n,
                    out.data.begin() + static_cast<std::ptrdiff_t>(r * n));
    }
    const std::uint32_t aid = a.id, oid = static_cast<std::uint32_t>(values_.size());
    return push("gather_rows", {a}, std::move(out), [aid, oid, rows = std::move(rows), n](Tape& t) {
        if (!t.needs_grad_.at(aid)) return;
        const Tensor& go = t.grads_.at(oid);
        Tensor& ga = t.grad_mut(Var{aid});
        for (std::size_t r = 0; r < rows.size(); ++r)
            for (std::size_t j = 0; j < n; ++j) ga.data[rows[r] * n + j] += go.data[r * n + j];
    });
}

Var Tape::clamp(Var a, double lo, double hi) {
    const Tensor& ta = value(a);
    Tensor out = ta;
    for (double& v : out.data) v = std::clamp(v, lo, hi);
    const std::uint32_t aid = a.id, oid = static_cast<std::uint32_t>(values_.size());
    return push("clamp", {a}, std::move(out), [aid, oid, lo, hi](Tape& t) {
        if (!t.needs_grad_.at(aid)) return;
        const Tensor& go = t.grads_.at(oid);
        const Tensor& va = t.values_.at(aid);
        Tensor& ga = t.grad_mut(Var{aid});
        for (std::size_t i = 0; i < go.data.size(); ++i)
            if (va.data[i] > lo && va.data[i] < hi) ga.data[i] += go.data[i];
    });
}

Var Tape::vstack(const std::vector<Var>& parts) {
    if (parts.empty()) throw ShapeError("vstack: no parts");
    std::size_t rows = 0;
    const std::size_t cols = value(parts[0]).cols();
    for (Var p : parts) {
        const Tensor& t = value(p);
        if (t.shape.size() != 2 || t.shape[1] != cols)
            throw ShapeError("vstack: parts must be 2-D with equal widths");
        rows += t.shape[0];
    }
    Tensor out = Tensor::matrix(rows, cols);
    std::size_t at = 0;
    std::vector<std::size_t> offsets;
    for (Var p : parts) {
        const Tensor& t = value(p);
        offsets.push_back(at);
        std::copy(t.data.begin(), t.data.end(), out.data.begin() + static_cast<std::ptrdiff_t>(at * cols));
        at += t.shape[0];
    }
    std::vector<std::uint32_t> ids;
    for (Var p : parts) ids.push_back(p.id);
    const std::uint32_t oid = static_cast<std::uint32_t>(values_.size());
    return push("vstack", std::vector<Var>(parts), std::move(out),
                [ids, offsets, cols, oid](Tape& t) {
                    const Tensor& go = t.grads_.at(oid);
                    for (std::size_t p = 0; p < ids.size(); ++p) {
                        if (!t.needs_grad_.at(ids[p])) continue;
                        Tensor& gp = t.grad_mut(Var{ids[p]});
                        const std::size_t n = gp.data.size();
                        for (std::size_t i = 0; i < n; ++i)
                            gp.data[i] += go.data[offsets[p] * cols + i];
                    }
                });
}

Var Tape::transpose(Var a) {
    const Tensor& ta = value(a);
    if (ta.shape.size() != 2) throw ShapeError("transpose: expects a 2-D tensor");
    const std::size_t m = ta.shape[0], n = ta.shape[1];
    Tensor out = Tensor::matrix(n, m);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out.data[j * m + i] = ta.data[i * n + j];
    const std::uint32_t aid = a.id, oid = static_cast<std::uint32_t>(values_.size());
    return push("transpose", {a}, std::move(out), [aid, oid, m, n](Tape& t) {
        if (!t.needs_grad_.at(aid)) return;
        const Tensor& go = t.grads_.at(oid);
        Tensor& ga = t.grad_mut(Var{aid});
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) ga.data[i * n + j] += go.data[j * m + i];
    });
}

Var Tape::flatten(Var a) {
    const Tensor& ta = value(a);
    Tensor out({ta.numel()}, ta.data);
    const std::uint32_t aid = a.id, oid = static_cast<std::uint32_t>(values_.size());
    return push("flatten", {a}, std::move(out), [aid, oid](Tape& t) {
        if (!t.needs_grad_.at(aid)) return;
        const Tensor& go = t.grads_.at(oid);
        Tensor& ga = t.grad_mut(Var{aid});
        for (std::size_t i = 0; i < go.data.size(); ++i) ga.data[i] += go.data[i];
    });
}

Var Tape::custom(const char* kind, std::vector<Var> inputs, Tensor value, BackwardFn backward) {
    return push(kind, std::move(inputs), std::move(value), std::move(backward));
}

double grad_check(const std::function<Var(Tape&, const std::vector<Var>&)>& build,
                  const std::vector<Tensor>& params, GradCheckOptions opts) {
    auto evaluate = [&](const std::vector<Tensor>& p, bool with_grad,
                        std::vector<Tensor>* grads_out) -> double {
        Tape tape;
        std::vector<Var> vars;
        vars.reserve(p.size());
        for (const Tensor& t : p) vars.push_back(tape.leaf(t, with_grad));
        Var loss = build(tape, vars);
        const double val = tape.value(loss).item();
        if (!std::isfinite(val)) throw NonFiniteError("grad_check: objective is non-finite");
        if (with_grad) {
            tape.backward(loss);
            grads_out->clear();
            for (Var v : vars) {
                Tensor g = tape.value(v);
                std::fill(g.data.begin(), g.data.end(), 0.0);
                if (tape.requires_grad(v)) {
                    // disconnected parameters keep a zero gradient
                    try {
                        g = tape.grad(v);
                    } catch (const Error&) {
                    }
                }
                grads_out->push_back(std::move(g));
            }
        }
        return val;
    };

    std::vector<Tensor> autodiff;
    evaluate(params, true, &autodiff);

    Rng rng(opts.seed);
    double max_rel = 0.0;
    std::vector<Tensor> work = params;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        const std::size_t n = params[pi].data.size();
        std::vector<std::size_t> coords;
        if (n <= opts.max_coords_per_param) {
            coords.resize(n);
            for (std::size_t i = 0; i < n; ++i) coords[i] = i;
        } else {
            std::uniform_int_distribution<std::size_t> dist(0, n - 1);
            for (std::size_t i = 0; i < opts.max_coords_per_param; ++i) coords.push_back(dist(rng));
        }
        for (std::size_t c : coords) {
            if (opts.exclude && opts.exclude(pi, c)) continue;
            const double orig = work[pi].data[c];
            work[pi].data[c] = orig + opts.eps;
            const double fp = evaluate(work, false, nullptr);
            work[pi].data[c] = orig - opts.eps;
            const double fm = evaluate(work, false, nullptr);
            work[pi].data[c] = orig;
            const double fd = (fp - fm) / (2.0 * opts.eps);
            const double rel = std::abs(autodiff[pi].data[c] - fd) / (std::abs(fd) + 1e-8);
            max_rel = std::max(max_rel, rel);
        }
    }
    return max_rel;
}

}  // namespace monrec::tensor
