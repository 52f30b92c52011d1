#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "wscos/errors.hpp"
#include "wscos/rng.hpp"

namespace wscos {

class Tensor;
using TensorPtr = std::shared_ptr<Tensor>;

// Dense f64 tensor participating in a reverse-mode gradient graph. Ops record
// backward closures on their results; backward() replays them in reverse
// topological order. Data is row-major. Tensors are treated as immutable once
// produced by an op; parameters are leaves whose data the optimizer rewrites
// between steps.
class Tensor : public std::enable_shared_from_this<Tensor> {
  public:
    std::vector<size_t> shape;
    std::vector<double> data;
    bool requires_grad = false;
    std::vector<double> grad;

    std::vector<TensorPtr> parents;
    std::function<void()> backward_fn;

    static TensorPtr create(std::vector<size_t> shape, bool requires_grad = false);
    static TensorPtr from_data(std::vector<size_t> shape, std::vector<double> data,
                               bool requires_grad = false);
    static TensorPtr full(std::vector<size_t> shape, double value, bool requires_grad = false);
    static TensorPtr scalar(double value, bool requires_grad = false);
    static TensorPtr randn(std::vector<size_t> shape, Rng& rng, double stddev,
                           bool requires_grad = true);

    size_t size() const { return data.size(); }
    size_t rank() const { return shape.size(); }
    double item() const;

    void ensure_grad();
    void zero_grad();

    bool finite() const;
};

size_t shape_product(const std::vector<size_t>& shape);

// Disables graph recording in a scope; forward values are still computed.
class NoGradGuard {
  public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

  private:
    bool prev_;
};

bool grad_mode_enabled();

// Runs the backward pass from a scalar loss. Grads of every reachable tensor
// are zeroed first, so repeated calls across training steps do not accumulate.
void backward(const TensorPtr& loss);

// ---- elementwise ----
TensorPtr add(const TensorPtr& a, const TensorPtr& b);
TensorPtr sub(const TensorPtr& a, const TensorPtr& b);
TensorPtr mul(const TensorPtr& a, const TensorPtr& b);
TensorPtr div(const TensorPtr& a, const TensorPtr& b);
TensorPtr add_scalar(const TensorPtr& a, double s);
TensorPtr mul_scalar(const TensorPtr& a, double s);
TensorPtr rsub_scalar(double s, const TensorPtr& a);  // s - a
TensorPtr log_t(const TensorPtr& a);
TensorPtr sigmoid(const TensorPtr& a);
TensorPtr tanh_t(const TensorPtr& a);
TensorPtr clamp_t(const TensorPtr& a, double lo, double hi);

// ---- linear algebra (2-D) ----
TensorPtr matmul(const TensorPtr& a, const TensorPtr& b);
TensorPtr transpose(const TensorPtr& a);

// ---- shape & gather ----
TensorPtr reshape(const TensorPtr& a, std::vector<size_t> new_shape);
TensorPtr take_row(const TensorPtr& a, size_t row);                  // {N,C} -> {1,C}
TensorPtr broadcast_row(const TensorPtr& a, size_t rows);            // {1,C} -> {rows,C}
TensorPtr concat_cols(const std::vector<TensorPtr>& parts);          // {R,Ci} -> {R,sum Ci}
TensorPtr chw_to_rows(const TensorPtr& a);                           // {C,H,W} -> {H*W,C}
TensorPtr rows_to_chw(const TensorPtr& a, size_t h, size_t w);       // {H*W,C} -> {C,H,W}

// ---- broadcasting helpers ----
TensorPtr add_rowvec(const TensorPtr& a, const TensorPtr& b);  // {R,C} + {1,C}
TensorPtr div_rowvec(const TensorPtr& a, const TensorPtr& b);  // {R,C} / {1,C}
TensorPtr mul_colvec(const TensorPtr& a, const TensorPtr& b);  // {R,C} * {R,1}

// ---- reductions ----
TensorPtr sum_all(const TensorPtr& a);
TensorPtr mean_all(const TensorPtr& a);
TensorPtr sum_axis0(const TensorPtr& a);  // {R,C} -> {1,C}

// ---- softmax ----
// Numerically stabilized softmax along `axis`; slices along the axis sum to 1.
TensorPtr softmax_axis(const TensorPtr& a, size_t axis);

// ---- conv / resampling ----
// x {C,H,W}, w {O,C,kh,kw}, b {O}; zero padding.
TensorPtr conv2d(const TensorPtr& x, const TensorPtr& w, const TensorPtr& b, size_t stride,
                 size_t pad);
TensorPtr upsample2x(const TensorPtr& x);  // nearest, {C,H,W} -> {C,2H,2W}

// ---- GRU ----
struct GRUWeights {
    TensorPtr w_xz, w_hz, b_z;
    TensorPtr w_xr, w_hr, b_r;
    TensorPtr w_xh, w_hh, b_h;

    static GRUWeights init(size_t width, Rng& rng, double stddev);
    static GRUWeights zeros(size_t width, bool requires_grad = true);
    std::vector<TensorPtr> parameters() const;
    size_t width() const { return w_xz->shape[1]; }
};

// Standard gated update: z and r gates, reset applied to the state before the
// candidate, output (1-z)*state + z*candidate. inputs/states are {N,C}.
TensorPtr gru_cell(const TensorPtr& inputs, const TensorPtr& states, const GRUWeights& w);

// ---- gradient verification ----
// Central finite differences against the analytic backward pass. Returns the
// max over all parameter entries of |analytic - numeric| / max(1, |a|, |n|).
double grad_check(const std::function<TensorPtr()>& f, const std::vector<TensorPtr>& params,
                  double eps);

}  // namespace wscos
