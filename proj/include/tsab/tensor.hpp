#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "tsab/errors.hpp"
#include "tsab/rng.hpp"

namespace tsab {

using Shape = std::vector<std::int64_t>;

enum class Mode { Train, Infer };
enum class Activation { Relu, Sigmoid, Tanh };

std::string shape_str(const Shape& s);
std::int64_t shape_numel(const Shape& s);

namespace detail {
struct TensorImpl;
}

// Dense real-valued array with an optional gradient buffer and a backward
// closure. Copies are shallow (shared storage); ops build a graph of
// parent links that backward() walks in reverse topological order.
class Tensor {
  public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double value, bool requires_grad = false);
    static Tensor from(Shape shape, std::vector<double> values,
                       bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);

    bool defined() const { return impl_ != nullptr; }
    const Shape& shape() const;
    int rank() const;
    std::int64_t dim(int axis) const;
    std::int64_t size() const;

    const std::vector<double>& values() const;
    std::vector<double>& values();
    const std::vector<double>& grad() const;
    bool has_grad() const;

    bool requires_grad() const;
    Tensor& set_requires_grad(bool on);
    void zero_grad();

    double item() const;

    // Reverse-mode sweep from a scalar root.
    void backward() const;

    // Same values, no graph, no gradient requirement.
    Tensor detach() const;
    // Deep copy of values (still detached from any graph).
    Tensor clone() const;

    detail::TensorImpl* impl() const { return impl_.get(); }
    const std::shared_ptr<detail::TensorImpl>& impl_shared() const { return impl_; }

  private:
    friend Tensor make_op_result(Shape shape, std::vector<double> values,
                                 const std::vector<Tensor>& inputs,
                                 std::function<void(detail::TensorImpl&)> backward);
    std::shared_ptr<detail::TensorImpl> impl_;
};

namespace detail {
struct TensorImpl {
    Shape shape;
    std::vector<double> values;
    std::vector<double> grad;
    bool requires_grad = false;
    std::vector<std::shared_ptr<TensorImpl>> parents;
    std::function<void(TensorImpl&)> backward_fn;

    std::int64_t numel() const { return static_cast<std::int64_t>(values.size()); }
    void ensure_grad() {
        if (grad.size() != values.size()) grad.assign(values.size(), 0.0);
    }
};
}  // namespace detail

// ---- primitive operations -------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

// c[m x n] = a[m x k] * b[k x n]
Tensor matmul(const Tensor& a, const Tensor& b);
// y[B x M] = x[B x N] * w[M x N]^T
Tensor linear(const Tensor& x, const Tensor& w);
// y = x * w^T + bias (bias broadcast over rows)
Tensor affine(const Tensor& x, const Tensor& w, const Tensor& bias);

// Same-padded temporal cross-correlation; x is [Cin x T] or [B x Cin x T],
// w is [Cout x d x Cin], bias is [Cout].
Tensor conv1d_same(const Tensor& x, const Tensor& w, const Tensor& bias);

// Per-channel batch normalization state: exponential running statistics.
struct BnState {
    std::vector<double> running_mean;
    std::vector<double> running_var;
    double momentum = 0.99;
    double eps = 1e-5;
    void init(std::int64_t channels) {
        if (static_cast<std::int64_t>(running_mean.size()) != channels) {
            running_mean.assign(static_cast<std::size_t>(channels), 0.0);
            running_var.assign(static_cast<std::size_t>(channels), 1.0);
        }
    }
};

// x[B x C x T]; train mode normalizes with batch statistics and updates the
// running averages, infer mode normalizes with the running statistics.
Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  BnState& state, Mode mode);

Tensor activation(const Tensor& x, Activation kind);
Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor tanh_act(const Tensor& x);

// Row-wise on [B x n], plain on [n].
Tensor softmax(const Tensor& x);

// Inverted dropout: survivors are scaled by 1/(1-p) at train time so that
// inference is the identity.
Tensor dropout(const Tensor& x, double p, Mode mode, Rng& rng);

// [C x T] -> [C] or [B x C x T] -> [B x C]; per-channel temporal mean.
Tensor global_average_pool(const Tensor& x);

// [1 x T] -> [T x 1] (or [B x 1 x T] -> [B x T x 1]): swaps the variable and
// time axes of a univariate series. Values are untouched.
Tensor dimension_shuffle(const Tensor& x);

// Rank-1 concatenation.
Tensor concat(const Tensor& a, const Tensor& b);
// Column-wise concatenation of rank-2 tensors with equal row counts.
Tensor hstack(const std::vector<Tensor>& parts);

// Copies values into a new shape with the same element count.
Tensor reshape(const Tensor& x, Shape shape);
// x[B x C x T] -> [B x C] at time t.
Tensor slice_time(const Tensor& x, std::int64_t t);
// x[B x N] -> [B], column j.
Tensor col(const Tensor& x, std::int64_t j);
// x[R x C] -> [C], row i.
Tensor row(const Tensor& x, std::int64_t i);
// Scales row b of x[B x N] by s[b].
Tensor scale_rows(const Tensor& x, const Tensor& s);

// Mean over samples of weight[i] * (-log probs[i, label[i]]).
Tensor nll_weighted(const Tensor& probs, const std::vector<int>& labels,
                    const std::vector<double>& weights);

// Compares reverse-mode gradients of a scalar function against central
// finite differences; returns the maximum relative error with denominator
// max(|g|, |g_fd|, 1e-8). The function must be pure in its inputs.
double grad_check(const std::function<Tensor(std::vector<Tensor>&)>& f,
                  std::vector<Tensor> inputs, double eps);

}  // namespace tsab
