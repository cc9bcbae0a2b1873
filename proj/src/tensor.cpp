#include "tsab/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

#include "tsab/kernels.hpp"

namespace tsab {

using detail::TensorImpl;

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) os << "x";
        os << s[i];
    }
    os << "]";
    return os.str();
}

std::int64_t shape_numel(const Shape& s) {
    std::int64_t n = 1;
    for (auto e : s) n *= e;
    return n;
}

namespace {

std::shared_ptr<TensorImpl> make_impl(Shape shape, std::vector<double> values,
                                      bool requires_grad) {
    for (auto e : shape)
        if (e < 0) throw DimensionError("negative extent in shape " + shape_str(shape));
    if (shape_numel(shape) != static_cast<std::int64_t>(values.size()))
        throw DimensionError("shape " + shape_str(shape) + " does not match value count " +
                             std::to_string(values.size()));
    auto impl = std::make_shared<TensorImpl>();
    impl->shape = std::move(shape);
    impl->values = std::move(values);
    impl->requires_grad = requires_grad;
    return impl;
}

void accumulate(TensorImpl& dst, const std::vector<double>& delta) {
    dst.ensure_grad();
    const std::size_t n = delta.size();
    double* __restrict g = dst.grad.data();
    const double* __restrict d = delta.data();
    for (std::size_t i = 0; i < n; ++i) g[i] += d[i];
}

void require(bool cond, const std::string& msg) {
    if (!cond) throw DimensionError(msg);
}

}  // namespace

Tensor make_op_result(Shape shape, std::vector<double> values,
                      const std::vector<Tensor>& inputs,
                      std::function<void(TensorImpl&)> backward) {
    Tensor out;
    bool needs_grad = false;
    for (const auto& t : inputs) needs_grad = needs_grad || t.requires_grad();
    out.impl_ = make_impl(std::move(shape), std::move(values), needs_grad);
    if (needs_grad) {
        for (const auto& t : inputs)
            if (t.requires_grad()) out.impl_->parents.push_back(t.impl_shared());
        out.impl_->backward_fn = std::move(backward);
    }
    return out;
}

// ---- Tensor ----------------------------------------------------------------

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    auto n = shape_numel(shape);
    return from(std::move(shape), std::vector<double>(static_cast<std::size_t>(n), 0.0),
                requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
    auto n = shape_numel(shape);
    return from(std::move(shape), std::vector<double>(static_cast<std::size_t>(n), value),
                requires_grad);
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
    Tensor t;
    t.impl_ = make_impl(std::move(shape), std::move(values), requires_grad);
    return t;
}

Tensor Tensor::scalar(double value, bool requires_grad) {
    return from(Shape{}, {value}, requires_grad);
}

const Shape& Tensor::shape() const { return impl_->shape; }
int Tensor::rank() const { return static_cast<int>(impl_->shape.size()); }
std::int64_t Tensor::dim(int axis) const { return impl_->shape.at(static_cast<std::size_t>(axis)); }
std::int64_t Tensor::size() const { return impl_->numel(); }

const std::vector<double>& Tensor::values() const { return impl_->values; }
std::vector<double>& Tensor::values() { return impl_->values; }

const std::vector<double>& Tensor::grad() const {
    if (!has_grad()) throw ContractError("tensor has no gradient buffer");
    return impl_->grad;
}

bool Tensor::has_grad() const {
    return impl_ && impl_->requires_grad && impl_->grad.size() == impl_->values.size();
}

bool Tensor::requires_grad() const { return impl_ && impl_->requires_grad; }

Tensor& Tensor::set_requires_grad(bool on) {
    impl_->requires_grad = on;
    return *this;
}

void Tensor::zero_grad() {
    impl_->grad.assign(impl_->values.size(), 0.0);
}

double Tensor::item() const {
    if (size() != 1) throw ContractError("item() requires a single-element tensor, got shape " +
                                         shape_str(shape()));
    return impl_->values[0];
}

void Tensor::backward() const {
    if (!impl_) throw ContractError("backward() on an undefined tensor");
    if (size() != 1)
        throw ContractError("backward() requires a scalar root, got shape " + shape_str(shape()));
    if (!impl_->requires_grad) return;

    // Post-order over parent links, iteratively (graphs can be thousands of
    // nodes deep for long unrolled sequences).
    std::vector<TensorImpl*> order;
    std::unordered_set<TensorImpl*> visited;
    struct Frame {
        TensorImpl* node;
        std::size_t next;
    };
    std::vector<Frame> stack;
    stack.push_back({impl_.get(), 0});
    visited.insert(impl_.get());
    while (!stack.empty()) {
        Frame& f = stack.back();
        if (f.next < f.node->parents.size()) {
            TensorImpl* p = f.node->parents[f.next++].get();
            if (visited.insert(p).second) stack.push_back({p, 0});
        } else {
            order.push_back(f.node);
            stack.pop_back();
        }
    }

    impl_->ensure_grad();
    impl_->grad[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        TensorImpl* node = *it;
        if (node->backward_fn) {
            node->ensure_grad();
            node->backward_fn(*node);
        }
    }
}

Tensor Tensor::detach() const {
    Tensor t;
    t.impl_ = make_impl(impl_->shape, impl_->values, false);
    return t;
}

Tensor Tensor::clone() const { return detach(); }

// ---- elementwise -----------------------------------------------------------

namespace {

// Shared-pointer access for op closures.
std::shared_ptr<TensorImpl> impl_ptr(const Tensor& t) { return t.impl_shared(); }

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    require(a.shape() == b.shape(),
            "add: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    std::vector<double> out(a.values().size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] + b.values()[i];
    auto pa = impl_ptr(a), pb = impl_ptr(b);
    return make_op_result(a.shape(), std::move(out), {a, b}, [pa, pb](TensorImpl& self) {
        if (pa->requires_grad) accumulate(*pa, self.grad);
        if (pb->requires_grad) accumulate(*pb, self.grad);
    });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require(a.shape() == b.shape(),
            "sub: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    std::vector<double> out(a.values().size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] - b.values()[i];
    auto pa = impl_ptr(a), pb = impl_ptr(b);
    return make_op_result(a.shape(), std::move(out), {a, b}, [pa, pb](TensorImpl& self) {
        if (pa->requires_grad) accumulate(*pa, self.grad);
        if (pb->requires_grad) {
            pb->ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i) pb->grad[i] -= self.grad[i];
        }
    });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require(a.shape() == b.shape(),
            "mul: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    std::vector<double> out(a.values().size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] * b.values()[i];
    auto pa = impl_ptr(a), pb = impl_ptr(b);
    return make_op_result(a.shape(), std::move(out), {a, b}, [pa, pb](TensorImpl& self) {
        if (pa->requires_grad) {
            pa->ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i)
                pa->grad[i] += self.grad[i] * pb->values[i];
        }
        if (pb->requires_grad) {
            pb->ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i)
                pb->grad[i] += self.grad[i] * pa->values[i];
        }
    });
}

Tensor scale(const Tensor& a, double c) {
    std::vector<double> out(a.values().size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] * c;
    auto pa = impl_ptr(a);
    return make_op_result(a.shape(), std::move(out), {a}, [pa, c](TensorImpl& self) {
        if (!pa->requires_grad) return;
        pa->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) pa->grad[i] += c * self.grad[i];
    });
}

Tensor sum(const Tensor& a) {
    double s = 0.0;
    for (double v : a.values()) s += v;
    auto pa = impl_ptr(a);
    return make_op_result(Shape{}, {s}, {a}, [pa](TensorImpl& self) {
        if (!pa->requires_grad) return;
        pa->ensure_grad();
        const double g = self.grad[0];
        for (auto& gv : pa->grad) gv += g;
    });
}

Tensor mean(const Tensor& a) {
    if (a.size() == 0) throw DimensionError("mean: empty tensor");
    return scale(sum(a), 1.0 / static_cast<double>(a.size()));
}

// ---- linear algebra --------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
    require(a.rank() == 2 && b.rank() == 2,
            "matmul: expected rank-2 operands, got " + shape_str(a.shape()) + " and " +
                shape_str(b.shape()));
    const std::int64_t m = a.dim(0), k = a.dim(1), k2 = b.dim(0), n = b.dim(1);
    require(k == k2, "matmul: inner extents differ, " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
    std::vector<double> out(static_cast<std::size_t>(m * n));
    kernels::matmul_nn(a.values().data(), b.values().data(), out.data(), m, k, n);
    auto pa = impl_ptr(a), pb = impl_ptr(b);
    return make_op_result({m, n}, std::move(out), {a, b}, [pa, pb, m, k, n](TensorImpl& self) {
        if (pa->requires_grad) {
            std::vector<double> da(static_cast<std::size_t>(m * k));
            kernels::matmul_nt(self.grad.data(), pb->values.data(), da.data(), m, n, k);
            accumulate(*pa, da);
        }
        if (pb->requires_grad) {
            std::vector<double> db(static_cast<std::size_t>(k * n));
            kernels::matmul_tn(pa->values.data(), self.grad.data(), db.data(), k, m, n);
            accumulate(*pb, db);
        }
    });
}

Tensor linear(const Tensor& x, const Tensor& w) {
    require(x.rank() == 2 && w.rank() == 2,
            "linear: expected rank-2 operands, got " + shape_str(x.shape()) + " and " +
                shape_str(w.shape()));
    const std::int64_t B = x.dim(0), N = x.dim(1), M = w.dim(0);
    require(w.dim(1) == N, "linear: fan-in mismatch, " + shape_str(x.shape()) + " vs " +
                               shape_str(w.shape()));
    std::vector<double> out(static_cast<std::size_t>(B * M));
    kernels::matmul_nt(x.values().data(), w.values().data(), out.data(), B, N, M);
    auto px = impl_ptr(x), pw = impl_ptr(w);
    return make_op_result({B, M}, std::move(out), {x, w}, [px, pw, B, N, M](TensorImpl& self) {
        if (px->requires_grad) {
            std::vector<double> dx(static_cast<std::size_t>(B * N));
            kernels::matmul_nn(self.grad.data(), pw->values.data(), dx.data(), B, M, N);
            accumulate(*px, dx);
        }
        if (pw->requires_grad) {
            std::vector<double> dw(static_cast<std::size_t>(M * N));
            kernels::matmul_tn(self.grad.data(), px->values.data(), dw.data(), M, B, N);
            accumulate(*pw, dw);
        }
    });
}

Tensor affine(const Tensor& x, const Tensor& w, const Tensor& bias) {
    require(bias.rank() == 1 && bias.dim(0) == w.dim(0),
            "affine: bias shape " + shape_str(bias.shape()) + " does not match weights " +
                shape_str(w.shape()));
    Tensor y = linear(x, w);
    const std::int64_t B = y.dim(0), M = y.dim(1);
    std::vector<double> out = y.values();
    for (std::int64_t b = 0; b < B; ++b)
        for (std::int64_t j = 0; j < M; ++j) out[static_cast<std::size_t>(b * M + j)] += bias.values()[static_cast<std::size_t>(j)];
    auto pb = impl_ptr(bias);
    return make_op_result({B, M}, std::move(out), {y, bias}, [pb, py = impl_ptr(y), B, M](TensorImpl& self) {
        if (py->requires_grad) accumulate(*py, self.grad);
        if (pb->requires_grad) {
            pb->ensure_grad();
            for (std::int64_t b = 0; b < B; ++b)
                for (std::int64_t j = 0; j < M; ++j)
                    pb->grad[static_cast<std::size_t>(j)] += self.grad[static_cast<std::size_t>(b * M + j)];
        }
    });
}

// ---- convolution -----------------------------------------------------------

Tensor conv1d_same(const Tensor& x, const Tensor& w, const Tensor& bias) {
    require(w.rank() == 3, "conv1d_same: weights must be [out x taps x in], got " +
                               shape_str(w.shape()));
    require(x.rank() == 2 || x.rank() == 3,
            "conv1d_same: input must be [in x T] or [B x in x T], got " + shape_str(x.shape()));
    const bool batched = x.rank() == 3;
    const std::int64_t B = batched ? x.dim(0) : 1;
    const std::int64_t cin = batched ? x.dim(1) : x.dim(0);
    const std::int64_t T = batched ? x.dim(2) : x.dim(1);
    const std::int64_t cout = w.dim(0), d = w.dim(1);
    require(w.dim(2) == cin, "conv1d_same: channel mismatch, input " + shape_str(x.shape()) +
                                 " vs weights " + shape_str(w.shape()));
    require(bias.rank() == 1 && bias.dim(0) == cout,
            "conv1d_same: bias shape " + shape_str(bias.shape()) + " does not match weights " +
                shape_str(w.shape()));
    if (T < 1) throw DimensionError("conv1d_same: time length must be >= 1, got input " +
                                    shape_str(x.shape()));
    if (d < 1) throw DimensionError("conv1d_same: kernel duration must be >= 1, got weights " +
                                    shape_str(w.shape()));

    std::vector<double> out(static_cast<std::size_t>(B * cout * T));
    kernels::conv1d_forward(x.values().data(), w.values().data(), bias.values().data(),
                            out.data(), B, cin, cout, T, d);
    Shape out_shape = batched ? Shape{B, cout, T} : Shape{cout, T};
    auto px = impl_ptr(x), pw = impl_ptr(w), pb = impl_ptr(bias);
    return make_op_result(std::move(out_shape), std::move(out), {x, w, bias},
                          [px, pw, pb, B, cin, cout, T, d](TensorImpl& self) {
        if (px->requires_grad) {
            std::vector<double> dx(static_cast<std::size_t>(B * cin * T));
            kernels::conv1d_backward_input(self.grad.data(), pw->values.data(), dx.data(), B,
                                           cin, cout, T, d);
            accumulate(*px, dx);
        }
        if (pw->requires_grad || pb->requires_grad) {
            std::vector<double> dw(static_cast<std::size_t>(cout * d * cin));
            std::vector<double> db(static_cast<std::size_t>(cout));
            kernels::conv1d_backward_params(px->values.data(), self.grad.data(), dw.data(),
                                            db.data(), B, cin, cout, T, d);
            if (pw->requires_grad) accumulate(*pw, dw);
            if (pb->requires_grad) accumulate(*pb, db);
        }
    });
}

// ---- batch normalization ---------------------------------------------------

Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, BnState& state,
                  Mode mode) {
    require(x.rank() == 3, "batch_norm: input must be [B x C x T], got " + shape_str(x.shape()));
    const std::int64_t B = x.dim(0), C = x.dim(1), T = x.dim(2);
    require(gamma.rank() == 1 && gamma.dim(0) == C && beta.rank() == 1 && beta.dim(0) == C,
            "batch_norm: gamma/beta must be [C]=" + std::to_string(C) + ", got " +
                shape_str(gamma.shape()) + " and " + shape_str(beta.shape()));
    state.init(C);

    std::vector<double> mean(static_cast<std::size_t>(C)), var(static_cast<std::size_t>(C));
    if (mode == Mode::Train) {
        if (B * T < 2)
            throw ContractError("batch_norm: train mode needs at least 2 values per channel");
        kernels::bn_channel_stats(x.values().data(), B, C, T, mean.data(), var.data());
        for (std::int64_t c = 0; c < C; ++c) {
            auto i = static_cast<std::size_t>(c);
            state.running_mean[i] = state.momentum * state.running_mean[i] +
                                    (1.0 - state.momentum) * mean[i];
            state.running_var[i] = state.momentum * state.running_var[i] +
                                   (1.0 - state.momentum) * var[i];
        }
    } else {
        mean = state.running_mean;
        var = state.running_var;
    }

    std::vector<double> out(static_cast<std::size_t>(B * C * T));
    kernels::bn_normalize(x.values().data(), mean.data(), var.data(), gamma.values().data(),
                          beta.values().data(), state.eps, out.data(), B, C, T);
    auto px = impl_ptr(x), pg = impl_ptr(gamma), pbt = impl_ptr(beta);
    const double eps = state.eps;
    return make_op_result({B, C, T}, std::move(out), {x, gamma, beta},
                          [px, pg, pbt, mean, var, eps, mode, B, C, T](TensorImpl& self) {
        std::vector<double> dx(static_cast<std::size_t>(B * C * T));
        std::vector<double> dgamma(static_cast<std::size_t>(C));
        std::vector<double> dbeta(static_cast<std::size_t>(C));
        if (mode == Mode::Train)
            kernels::bn_backward_train(px->values.data(), self.grad.data(), mean.data(),
                                       var.data(), pg->values.data(), eps, dx.data(),
                                       dgamma.data(), dbeta.data(), B, C, T);
        else
            kernels::bn_backward_infer(px->values.data(), self.grad.data(), mean.data(),
                                       var.data(), pg->values.data(), eps, dx.data(),
                                       dgamma.data(), dbeta.data(), B, C, T);
        if (px->requires_grad) accumulate(*px, dx);
        if (pg->requires_grad) accumulate(*pg, dgamma);
        if (pbt->requires_grad) accumulate(*pbt, dbeta);
    });
}

// ---- activations -----------------------------------------------------------

Tensor activation(const Tensor& x, Activation kind) {
    std::vector<double> out(x.values().size());
    const auto& v = x.values();
    switch (kind) {
        case Activation::Relu:
            for (std::size_t i = 0; i < out.size(); ++i) out[i] = v[i] > 0.0 ? v[i] : 0.0;
            break;
        case Activation::Sigmoid:
            for (std::size_t i = 0; i < out.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-v[i]));
            break;
        case Activation::Tanh:
            for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(v[i]);
            break;
    }
    auto px = impl_ptr(x);
    return make_op_result(x.shape(), std::move(out), {x}, [px, kind](TensorImpl& self) {
        if (!px->requires_grad) return;
        px->ensure_grad();
        const std::size_t n = self.grad.size();
        switch (kind) {
            case Activation::Relu:
                for (std::size_t i = 0; i < n; ++i)
                    if (px->values[i] > 0.0) px->grad[i] += self.grad[i];
                break;
            case Activation::Sigmoid:
                for (std::size_t i = 0; i < n; ++i) {
                    const double y = self.values[i];
                    px->grad[i] += self.grad[i] * y * (1.0 - y);
                }
                break;
            case Activation::Tanh:
                for (std::size_t i = 0; i < n; ++i) {
                    const double y = self.values[i];
                    px->grad[i] += self.grad[i] * (1.0 - y * y);
                }
                break;
        }
    });
}

Tensor relu(const Tensor& x) { return activation(x, Activation::Relu); }
Tensor sigmoid(const Tensor& x) { return activation(x, Activation::Sigmoid); }
Tensor tanh_act(const Tensor& x) { return activation(x, Activation::Tanh); }

Tensor softmax(const Tensor& x) {
    require(x.rank() == 1 || x.rank() == 2,
            "softmax: expected rank 1 or 2, got " + shape_str(x.shape()));
    const std::int64_t rows = x.rank() == 2 ? x.dim(0) : 1;
    const std::int64_t n = x.rank() == 2 ? x.dim(1) : x.dim(0);
    if (n < 1) throw DimensionError("softmax: empty input " + shape_str(x.shape()));
    std::vector<double> out(x.values().size());
    const auto& v = x.values();
    for (std::int64_t r = 0; r < rows; ++r) {
        const double* xi = v.data() + r * n;
        double* yi = out.data() + r * n;
        double mx = xi[0];
        for (std::int64_t j = 1; j < n; ++j) mx = std::max(mx, xi[j]);
        double s = 0.0;
        for (std::int64_t j = 0; j < n; ++j) {
            yi[j] = std::exp(xi[j] - mx);
            s += yi[j];
        }
        const double inv = 1.0 / s;
        for (std::int64_t j = 0; j < n; ++j) yi[j] *= inv;
    }
    auto px = impl_ptr(x);
    return make_op_result(x.shape(), std::move(out), {x}, [px, rows, n](TensorImpl& self) {
        if (!px->requires_grad) return;
        px->ensure_grad();
        for (std::int64_t r = 0; r < rows; ++r) {
            const double* p = self.values.data() + r * n;
            const double* dy = self.grad.data() + r * n;
            double dot = 0.0;
            for (std::int64_t j = 0; j < n; ++j) dot += dy[j] * p[j];
            double* dx = px->grad.data() + r * n;
            for (std::int64_t j = 0; j < n; ++j) dx[j] += p[j] * (dy[j] - dot);
        }
    });
}

Tensor dropout(const Tensor& x, double p, Mode mode, Rng& rng) {
    if (!(p >= 0.0 && p < 1.0))
        throw ParameterError("dropout: probability must be in [0,1), got " + std::to_string(p));
    if (mode == Mode::Infer) {
        std::vector<double> out = x.values();
        auto px = impl_ptr(x);
        return make_op_result(x.shape(), std::move(out), {x}, [px](TensorImpl& self) {
            if (px->requires_grad) accumulate(*px, self.grad);
        });
    }
    const double keep_scale = 1.0 / (1.0 - p);
    std::vector<double> mask(x.values().size());
    for (auto& m : mask) m = rng.next_double() < p ? 0.0 : keep_scale;
    std::vector<double> out(x.values().size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.values()[i] * mask[i];
    auto px = impl_ptr(x);
    return make_op_result(x.shape(), std::move(out), {x},
                          [px, mask = std::move(mask)](TensorImpl& self) {
        if (!px->requires_grad) return;
        px->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i)
            px->grad[i] += self.grad[i] * mask[i];
    });
}

Tensor global_average_pool(const Tensor& x) {
    require(x.rank() == 2 || x.rank() == 3,
            "global_average_pool: expected [C x T] or [B x C x T], got " + shape_str(x.shape()));
    const bool batched = x.rank() == 3;
    const std::int64_t B = batched ? x.dim(0) : 1;
    const std::int64_t C = batched ? x.dim(1) : x.dim(0);
    const std::int64_t T = batched ? x.dim(2) : x.dim(1);
    if (T < 1) throw DimensionError("global_average_pool: empty time axis in " +
                                    shape_str(x.shape()));
    std::vector<double> out(static_cast<std::size_t>(B * C));
    const double inv = 1.0 / static_cast<double>(T);
    for (std::int64_t b = 0; b < B; ++b)
        for (std::int64_t c = 0; c < C; ++c) {
            const double* xc = x.values().data() + (b * C + c) * T;
            double s = 0.0;
            for (std::int64_t t = 0; t < T; ++t) s += xc[t];
            out[static_cast<std::size_t>(b * C + c)] = s * inv;
        }
    Shape out_shape = batched ? Shape{B, C} : Shape{C};
    auto px = impl_ptr(x);
    return make_op_result(std::move(out_shape), std::move(out), {x},
                          [px, B, C, T, inv](TensorImpl& self) {
        if (!px->requires_grad) return;
        px->ensure_grad();
        for (std::int64_t b = 0; b < B; ++b)
            for (std::int64_t c = 0; c < C; ++c) {
                const double g = self.grad[static_cast<std::size_t>(b * C + c)] * inv;
                double* dx = px->grad.data() + (b * C + c) * T;
                for (std::int64_t t = 0; t < T; ++t) dx[t] += g;
            }
    });
}

Tensor dimension_shuffle(const Tensor& x) {
    require(x.rank() == 2 || x.rank() == 3,
            "dimension_shuffle: expected [1 x T] or [B x 1 x T], got " + shape_str(x.shape()));
    const bool batched = x.rank() == 3;
    const std::int64_t vars = batched ? x.dim(1) : x.dim(0);
    const std::int64_t T = batched ? x.dim(2) : x.dim(1);
    if (vars != 1)
        throw DimensionError("dimension_shuffle: unsupported multivariate input " +
                             shape_str(x.shape()) + " (exactly one variable required)");
    // [1 x T] and [T x 1] share the same flat layout, so this is a relabel.
    Shape out_shape = batched ? Shape{x.dim(0), T, 1} : Shape{T, 1};
    std::vector<double> out = x.values();
    auto px = impl_ptr(x);
    return make_op_result(std::move(out_shape), std::move(out), {x}, [px](TensorImpl& self) {
        if (px->requires_grad) accumulate(*px, self.grad);
    });
}

Tensor concat(const Tensor& a, const Tensor& b) {
    require(a.rank() == 1 && b.rank() == 1,
            "concat: expected rank-1 operands, got " + shape_str(a.shape()) + " and " +
                shape_str(b.shape()));
    const std::int64_t p = a.dim(0), q = b.dim(0);
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(p + q));
    out.insert(out.end(), a.values().begin(), a.values().end());
    out.insert(out.end(), b.values().begin(), b.values().end());
    auto pa = impl_ptr(a), pb = impl_ptr(b);
    return make_op_result({p + q}, std::move(out), {a, b}, [pa, pb, p, q](TensorImpl& self) {
        if (pa->requires_grad) {
            pa->ensure_grad();
            for (std::int64_t i = 0; i < p; ++i)
                pa->grad[static_cast<std::size_t>(i)] += self.grad[static_cast<std::size_t>(i)];
        }
        if (pb->requires_grad) {
            pb->ensure_grad();
            for (std::int64_t i = 0; i < q; ++i)
                pb->grad[static_cast<std::size_t>(i)] += self.grad[static_cast<std::size_t>(p + i)];
        }
    });
}

Tensor hstack(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ParameterError("hstack: no parts");
    const std::int64_t B = parts.front().dim(0);
    std::int64_t total = 0;
    for (const auto& t : parts) {
        require(t.rank() == 2 && t.dim(0) == B,
                "hstack: all parts must be rank-2 with " + std::to_string(B) + " rows, got " +
                    shape_str(t.shape()));
        total += t.dim(1);
    }
    std::vector<double> out(static_cast<std::size_t>(B * total));
    std::int64_t offset = 0;
    for (const auto& t : parts) {
        const std::int64_t w = t.dim(1);
        for (std::int64_t b = 0; b < B; ++b)
            std::copy_n(t.values().data() + b * w, w, out.data() + b * total + offset);
        offset += w;
    }
    std::vector<std::shared_ptr<TensorImpl>> impls;
    std::vector<std::int64_t> widths;
    for (const auto& t : parts) {
        impls.push_back(impl_ptr(t));
        widths.push_back(t.dim(1));
    }
    return make_op_result({B, total}, std::move(out), parts,
                          [impls, widths, B, total](TensorImpl& self) {
        std::int64_t offset = 0;
        for (std::size_t k = 0; k < impls.size(); ++k) {
            const std::int64_t w = widths[k];
            if (impls[k]->requires_grad) {
                impls[k]->ensure_grad();
                for (std::int64_t b = 0; b < B; ++b)
                    for (std::int64_t j = 0; j < w; ++j)
                        impls[k]->grad[static_cast<std::size_t>(b * w + j)] +=
                            self.grad[static_cast<std::size_t>(b * total + offset + j)];
            }
            offset += w;
        }
    });
}

Tensor reshape(const Tensor& x, Shape shape) {
    require(shape_numel(shape) == x.size(), "reshape: cannot view " + shape_str(x.shape()) +
                                                " as " + shape_str(shape));
    std::vector<double> out = x.values();
    auto px = impl_ptr(x);
    return make_op_result(std::move(shape), std::move(out), {x}, [px](TensorImpl& self) {
        if (px->requires_grad) accumulate(*px, self.grad);
    });
}

Tensor slice_time(const Tensor& x, std::int64_t t) {
    require(x.rank() == 3, "slice_time: expected [B x C x T], got " + shape_str(x.shape()));
    const std::int64_t B = x.dim(0), C = x.dim(1), T = x.dim(2);
    if (t < 0 || t >= T)
        throw ParameterError("slice_time: index " + std::to_string(t) + " out of range [0," +
                             std::to_string(T) + ")");
    std::vector<double> out(static_cast<std::size_t>(B * C));
    for (std::int64_t b = 0; b < B; ++b)
        for (std::int64_t c = 0; c < C; ++c)
            out[static_cast<std::size_t>(b * C + c)] = x.values()[static_cast<std::size_t>((b * C + c) * T + t)];
    auto px = impl_ptr(x);
    return make_op_result({B, C}, std::move(out), {x}, [px, B, C, T, t](TensorImpl& self) {
        if (!px->requires_grad) return;
        px->ensure_grad();
        for (std::int64_t b = 0; b < B; ++b)
            for (std::int64_t c = 0; c < C; ++c)
                px->grad[static_cast<std::size_t>((b * C + c) * T + t)] +=
                    self.grad[static_cast<std::size_t>(b * C + c)];
    });
}

Tensor col(const Tensor& x, std::int64_t j) {
    require(x.rank() == 2, "col: expected rank-2 input, got " + shape_str(x.shape()));
    const std::int64_t B = x.dim(0), N = x.dim(1);
    if (j < 0 || j >= N)
        throw ParameterError("col: index " + std::to_string(j) + " out of range [0," +
                             std::to_string(N) + ")");
    std::vector<double> out(static_cast<std::size_t>(B));
    for (std::int64_t b = 0; b < B; ++b) out[static_cast<std::size_t>(b)] = x.values()[static_cast<std::size_t>(b * N + j)];
    auto px = impl_ptr(x);
    return make_op_result({B}, std::move(out), {x}, [px, B, N, j](TensorImpl& self) {
        if (!px->requires_grad) return;
        px->ensure_grad();
        for (std::int64_t b = 0; b < B; ++b)
            px->grad[static_cast<std::size_t>(b * N + j)] += self.grad[static_cast<std::size_t>(b)];
    });
}

Tensor row(const Tensor& x, std::int64_t i) {
    require(x.rank() == 2, "row: expected rank-2 input, got " + shape_str(x.shape()));
    const std::int64_t R = x.dim(0), C = x.dim(1);
    if (i < 0 || i >= R)
        throw ParameterError("row: index " + std::to_string(i) + " out of range [0," +
                             std::to_string(R) + ")");
    std::vector<double> out(x.values().begin() + i * C, x.values().begin() + (i + 1) * C);
    auto px = impl_ptr(x);
    return make_op_result({C}, std::move(out), {x}, [px, C, i](TensorImpl& self) {
        if (!px->requires_grad) return;
        px->ensure_grad();
        for (std::int64_t j = 0; j < C; ++j)
            px->grad[static_cast<std::size_t>(i * C + j)] += self.grad[static_cast<std::size_t>(j)];
    });
}

Tensor scale_rows(const Tensor& x, const Tensor& s) {
    require(x.rank() == 2 && s.rank() == 1 && s.dim(0) == x.dim(0),
            "scale_rows: got " + shape_str(x.shape()) + " and " + shape_str(s.shape()));
    const std::int64_t B = x.dim(0), N = x.dim(1);
    std::vector<double> out(static_cast<std::size_t>(B * N));
    for (std::int64_t b = 0; b < B; ++b) {
        const double sv = s.values()[static_cast<std::size_t>(b)];
        for (std::int64_t j = 0; j < N; ++j)
            out[static_cast<std::size_t>(b * N + j)] = x.values()[static_cast<std::size_t>(b * N + j)] * sv;
    }
    auto px = impl_ptr(x), ps = impl_ptr(s);
    return make_op_result({B, N}, std::move(out), {x, s}, [px, ps, B, N](TensorImpl& self) {
        if (px->requires_grad) {
            px->ensure_grad();
            for (std::int64_t b = 0; b < B; ++b) {
                const double sv = ps->values[static_cast<std::size_t>(b)];
                for (std::int64_t j = 0; j < N; ++j)
                    px->grad[static_cast<std::size_t>(b * N + j)] +=
                        self.grad[static_cast<std::size_t>(b * N + j)] * sv;
            }
        }
        if (ps->requires_grad) {
            ps->ensure_grad();
            for (std::int64_t b = 0; b < B; ++b) {
                double dot = 0.0;
                for (std::int64_t j = 0; j < N; ++j)
                    dot += self.grad[static_cast<std::size_t>(b * N + j)] *
                           px->values[static_cast<std::size_t>(b * N + j)];
                ps->grad[static_cast<std::size_t>(b)] += dot;
            }
        }
    });
}

Tensor nll_weighted(const Tensor& probs, const std::vector<int>& labels,
                    const std::vector<double>& weights) {
    require(probs.rank() == 2, "nll_weighted: probs must be [B x C], got " +
                                   shape_str(probs.shape()));
    const std::int64_t B = probs.dim(0), C = probs.dim(1);
    if (static_cast<std::int64_t>(labels.size()) != B ||
        static_cast<std::int64_t>(weights.size()) != B)
        throw ContractError("nll_weighted: labels/weights length must equal batch size");
    double loss = 0.0;
    for (std::int64_t b = 0; b < B; ++b) {
        const int y = labels[static_cast<std::size_t>(b)];
        if (y < 0 || y >= C)
            throw ContractError("nll_weighted: label " + std::to_string(y) + " out of range");
        loss -= weights[static_cast<std::size_t>(b)] *
                std::log(probs.values()[static_cast<std::size_t>(b * C + y)]);
    }
    loss /= static_cast<double>(B);
    auto pp = impl_ptr(probs);
    return make_op_result(Shape{}, {loss}, {probs}, [pp, labels, weights, B, C](TensorImpl& self) {
        if (!pp->requires_grad) return;
        pp->ensure_grad();
        const double g = self.grad[0] / static_cast<double>(B);
        for (std::int64_t b = 0; b < B; ++b) {
            const auto idx = static_cast<std::size_t>(b * C + labels[static_cast<std::size_t>(b)]);
            pp->grad[idx] -= g * weights[static_cast<std::size_t>(b)] / pp->values[idx];
        }
    });
}

// ---- gradient checking -----------------------------------------------------

double grad_check(const std::function<Tensor(std::vector<Tensor>&)>& f,
                  std::vector<Tensor> inputs, double eps) {
    if (!(eps >= 1e-7 && eps <= 1e-3))
        throw ParameterError("grad_check: eps must lie in [1e-7, 1e-3], got " +
                             std::to_string(eps));
    for (auto& t : inputs) {
        t.set_requires_grad(true);
        t.zero_grad();
    }
    Tensor out = f(inputs);
    if (out.size() != 1)
        throw ContractError("grad_check: function output must be scalar, got shape " +
                            shape_str(out.shape()));
    out.backward();

    std::vector<std::vector<double>> analytic;
    analytic.reserve(inputs.size());
    for (auto& t : inputs)
        analytic.push_back(t.has_grad() ? t.grad() : std::vector<double>(t.values().size(), 0.0));

    double max_err = 0.0;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        auto& vals = inputs[i].values();
        for (std::size_t j = 0; j < vals.size(); ++j) {
            const double saved = vals[j];
            vals[j] = saved + eps;
            const double up = f(inputs).item();
            vals[j] = saved - eps;
            const double dn = f(inputs).item();
            vals[j] = saved;
            const double fd = (up - dn) / (2.0 * eps);
            const double ref = analytic[i][j];
            const double denom = std::max({std::fabs(ref), std::fabs(fd), 1e-8});
            max_err = std::max(max_err, std::fabs(ref - fd) / denom);
        }
    }
    return max_err;
}

}  // namespace tsab
