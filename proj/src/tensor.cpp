#include "wscos/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <unordered_set>

namespace wscos {

namespace {

thread_local bool g_grad_mode = true;

void check(bool cond, const std::string& msg) {
    if (!cond) throw ContractViolation(msg);
}

bool want_grad(const TensorPtr& a) { return g_grad_mode && a->requires_grad; }

}  // namespace

size_t shape_product(const std::vector<size_t>& shape) {
    size_t n = 1;
    for (size_t d : shape) n *= d;
    return n;
}

TensorPtr Tensor::create(std::vector<size_t> shape, bool requires_grad) {
    auto t = std::make_shared<Tensor>();
    t->shape = std::move(shape);
    t->data.assign(shape_product(t->shape), 0.0);
    t->requires_grad = requires_grad;
    return t;
}

TensorPtr Tensor::from_data(std::vector<size_t> shape, std::vector<double> data,
                            bool requires_grad) {
    check(shape_product(shape) == data.size(), "Tensor::from_data: shape/data size mismatch");
    auto t = std::make_shared<Tensor>();
    t->shape = std::move(shape);
    t->data = std::move(data);
    t->requires_grad = requires_grad;
    return t;
}

TensorPtr Tensor::full(std::vector<size_t> shape, double value, bool requires_grad) {
    auto t = create(std::move(shape), requires_grad);
    std::fill(t->data.begin(), t->data.end(), value);
    return t;
}

TensorPtr Tensor::scalar(double value, bool requires_grad) {
    return from_data({1}, {value}, requires_grad);
}

TensorPtr Tensor::randn(std::vector<size_t> shape, Rng& rng, double stddev, bool requires_grad) {
    auto t = create(std::move(shape), requires_grad);
    for (double& x : t->data) x = rng.gaussian(0.0, stddev);
    return t;
}

double Tensor::item() const {
    check(data.size() == 1, "Tensor::item: tensor is not scalar");
    return data[0];
}

void Tensor::ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
}

void Tensor::zero_grad() { grad.assign(data.size(), 0.0); }

bool Tensor::finite() const {
    for (double x : data)
        if (!std::isfinite(x)) return false;
    return true;
}

NoGradGuard::NoGradGuard() : prev_(g_grad_mode) { g_grad_mode = false; }
NoGradGuard::~NoGradGuard() { g_grad_mode = prev_; }

bool grad_mode_enabled() { return g_grad_mode; }

void backward(const TensorPtr& loss) {
    check(loss->size() == 1, "backward: loss must be scalar");
    if (!loss->requires_grad) throw ContractViolation("backward: loss does not require grad");

    // Post-order DFS; the resulting order puts every tensor after its parents.
    std::vector<Tensor*> order;
    std::unordered_set<Tensor*> seen;
    struct Frame {
        Tensor* node;
        size_t next_parent;
    };
    std::vector<Frame> stack;
    stack.push_back({loss.get(), 0});
    seen.insert(loss.get());
    while (!stack.empty()) {
        Frame& f = stack.back();
        if (f.next_parent < f.node->parents.size()) {
            Tensor* p = f.node->parents[f.next_parent++].get();
            if (seen.insert(p).second) stack.push_back({p, 0});
        } else {
            order.push_back(f.node);
            stack.pop_back();
        }
    }

    for (Tensor* t : order) {
        t->ensure_grad();
        t->zero_grad();
    }
    loss->grad[0] = 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        if ((*it)->backward_fn) (*it)->backward_fn();
    }
}

namespace {

TensorPtr make_result(std::vector<size_t> shape, std::initializer_list<TensorPtr> parents) {
    bool rg = false;
    if (g_grad_mode)
        for (const auto& p : parents) rg = rg || p->requires_grad;
    auto out = Tensor::create(std::move(shape), rg);
    if (rg) out->parents.assign(parents.begin(), parents.end());
    return out;
}

void accumulate(const TensorPtr& t, size_t i, double v) {
    if (t->requires_grad) {
        t->ensure_grad();
        t->grad[i] += v;
    }
}

}  // namespace

TensorPtr add(const TensorPtr& a, const TensorPtr& b) {
    check(a->shape == b->shape, "add: shape mismatch");
    auto out = make_result(a->shape, {a, b});
    for (size_t i = 0; i < out->size(); ++i) out->data[i] = a->data[i] + b->data[i];
    if (out->requires_grad) {
        Tensor* o = out.get();
        out->backward_fn = [a, b, o]() {
            if (a->requires_grad) {
                a->ensure_grad();
                for (size_t i = 0; i < o->size(); ++i) a->grad[i] += o->grad[i];
            }
            if (b->requires_grad) {
                b->ensure_grad();
                for (size_t i = 0; i < o->size(); ++i) b->grad[i] += o->grad[i];
            }
        };
    }
    return out;
}

TensorPtr sub(const TensorPtr& a, const TensorPtr& b) {
    check(a->shape == b->shape, "sub: shape mismatch");
    auto out = make_result(a->shape, {a, b});
    for (size_t i = 0; i < out->size(); ++i) out->data[i] = a->data[i] - b->data[i];
    if (out->requires_grad) {
        Tensor* o = out.get();
        out->backward_fn = [a, b, o]() {
            if (a->requires_grad) {
                a->ensure_grad();
                for (size_t i = 0; i < o->size(); ++i) a->grad[i] += o->grad[i];
            }
            if (b->requires_grad) {
                b->ensure_grad();
                for (size_t i = 0; i < o->size(); ++i) b->grad[i] -= o->grad[i];
            }
        };
    }
    return out;
}

TensorPtr mul(const TensorPtr& a, const TensorPtr& b) {
    check(a->shape == b->shape, "mul: shape mismatch");
    auto out = make_result(a->shape, {a, b});
    for (size_t i = 0; i < out->size(); ++i) out->data[i] = a->data[i] * b->data[i];
    if (out->requires_grad) {
        Tensor* o = out.get();
        out->backward_fn = [a, b, o]() {
            if (a->requires_grad) {
                a->ensure_grad();
                for (size_t i = 0; i < o->size(); ++i) a->grad[i] += o->grad[i] * b->data[i];
            }
            if (b->requires_grad) {
                b->ensure_grad();
                for (size_t i = 0; i < o->size(); ++i) b->grad[i] += o->grad[i] * a->data[i];
            }
        };
    }
    return out;
}

TensorPtr div(const TensorPtr& a, const TensorPtr& b) {
    check(a->shape == b->shape, "div: shape mismatch");
    auto out = make_result(a->shape, {a, b});
    for (size_t i = 0; i < out->size(); ++i) out->data[i] = a->data[i] / b->data[i];
    if (out->requires_grad) {
        Tensor* o = out.get();
        out->backward_fn = [a, b, o]() {
            if (a->requires_grad) {
                a->ensure_grad();
                for (size_t i = 0; i < o->size(); ++i) a->grad[i] += o->grad[i] / b->data[i];
            }
            if (b->requires_grad) {
                b->ensure_grad();
                for (size_t i = 0; i < o->size(); ++i)
                    b->grad[i] -= o->grad[i] * o->data[i] / b->data[i];
            }
        };
    }
    return out;
}

TensorPtr add_scalar(const TensorPtr& a, double s) {
    auto out = make_result(a->shape, {a});
    for (size_t i = 0; i < out->size(); ++i) out->data[i] = a->data[i] + s;
    if (out->requires_grad) {
        Tensor* o = out.get();
        out->backward_fn = [a, o]() {
            a->ensure_grad();
            for (size_t i = 0; i < o->size(); ++i) a->grad[i] += o->grad[i];
        };
    }
    return out;
}

TensorPtr mul_scalar(const TensorPtr& a, double s) {
    auto out = make_result(a->shape, {a});
    for (size_t i = 0; i < out->size(); ++i) out->data[i] = a->data[i] * s;
    if (out->requires_grad) {
        Tensor* o = out.get();
        out->backward_fn = [a, s, o]() {
            a->ensure_grad();
            for (size_t i = 0; i < o->size(); ++i) a->grad[i] += o->grad[i] * s;
        };
    }
    return out;
}

TensorPtr rsub_scalar(double s, const TensorPtr& a) {
    auto out = make_result(a->shape, {a});
    for (size_t i = 0; i < out->size(); ++i) out->data[i] = s - a->data[i];
    if (out->requires_grad) {
        Tensor* o = out.get();
        out->backward_fn = [a, o]() {
            a->ensure_grad();
            for (size_t i = 0; i < o->size(); ++i) a->grad[i] -= o->grad[i];
        };
    }
    return out;
}

TensorPtr log_t(const TensorPtr& a) {
    auto out = make_result(a->shape, {a});
    for (size_t i = 0; i < out->size(); ++i) out->data[i] = std::log(a->data[i]);
    if (out->requires_grad) {
        Tensor* o = out.get();
        out->backward_fn = [a, o]() {
            a->ensure_grad();
            for (size_t i = 0; i < o->size(); ++i) a->grad[i] += o->grad[i] / a->data[i];
        };
    }
    return out;
}

TensorPtr sigmoid(const TensorPtr& a) {
    auto out = make_result(a->shape, {a});
    for (size_t i = 0; i < out->size(); ++i) {
        const double x = a->data[i];
        out->data[i] = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
    }
    if (out->requires_grad) {
        Tensor* o = out.get();
        out->backward_fn = [a, o]() {
            a->ensure_grad();
            for (size_t i = 0; i < o->size(); ++i) {
                const double y = o->data[i];
                a->grad[i] += o->grad[i] * y * (1.0 - y);
            }
        };
    }
    return out;
}

TensorPtr tanh_t(const TensorPtr& a) {
    auto out = make_result(a->shape, {a});
    for (size_t i = 0; i < out->size(); ++i) out->data[i] = std::tanh(a->data[i]);
    if (out->requires_grad) {
        Tensor* o = out.get();
        out->backward_fn = [a, o]() {
            a->ensure_grad();
            for (size_t i = 0; i < o->size(); ++i) {
                const double y = o->data[i];
                a->grad[i] += o->grad[i] * (1.0 - y * y);
            }
        };
    }
    return out;
}

TensorPtr clamp_t(const TensorPtr& a, double lo, double hi) {
    check(lo < hi, "clamp: lo must be < hi");
    auto out = make_result(a->shape, {a});
    for (size_t i = 0; i < out->size(); ++i) out->data[i] = std::min(hi, std::max(lo, a->data[i]));
    if (out->requires_grad) {
        Tensor* o = out.get();
        out->backward_fn = [a, lo, hi, o]() {
            a->ensure_grad();
            for (size_t i = 0; i < o->size(); ++i) {
                const double x = a->data[i];
                if (x >= lo && x <= hi) a->grad[i] += o->grad[i];
            }
        };
    }
    return out;
}

TensorPtr matmul(const TensorPtr& a, const TensorPtr& b) {
    check(a->rank() == 2 && b->rank() == 2, "matmul: operands must be 2-D");
    check(a->shape[1] == b->shape[0], "matmul: inner dims mismatch");
    const size_t m = a->shape[0], k = a->shape[1], n = b->shape[1];
    auto out = make_result({m, n}, {a, b});
    const double* ad = a->data.data();
    const double* bd = b->data.data();
    double* od = out->data.data();
    for (size_t i = 0; i < m; ++i) {
        for (size_t p = 0; p < k; ++p) {
            const double av = ad[i * k + p];
            if (av == 0.0) continue;
            const double* brow = bd + p * n;
            double* orow = od + i * n;
            for (size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
        }
    }
    if (out->requires_grad) {
        Tensor* o = out.get();
        out->backward_fn = [a, b, o, m, k, n]() {
            const double* g = o->grad.data();
            if (a->requires_grad) {
                a->ensure_grad();
                double* ga = a->grad.data();
                const double* bd2 = b->data.data();
                // dA = G * B^T
                for (size_t i = 0; i < m; ++i)
                    for (size_t p = 0; p < k; ++p) {
                        double acc = 0.0;
                        const double* grow = g + i * n;
                        const double* brow = bd2 + p * n;
                        for (size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
                        ga[i * k + p] += acc;
                    }
            }
            if (b->requires_grad) {
                b->ensure_grad();
                double* gb = b->grad.data();
                const double* ad2 = a->data.data();
                // dB = A^T * G
                for (size_t i = 0; i < m; ++i) {
                    const double* grow = g + i * n;
                    for (size_t p = 0; p < k; ++p) {
                        const double av = ad2[i * k + p];
                        if (av == 0.0) continue;
                        double* gbrow = gb + p * n;
                        for (size_t j = 0; j < n; ++j) gbrow[j] += av * grow[j];
                    }
                }
            }
        };
    }
    return out;
}

TensorPtr transpose(const TensorPtr& a) {
    check(a->rank() == 2, "transpose: operand must be 2-D");
    const size_t r = a->shape[0], c = a->shape[1];
    auto out = make_result({c, r}, {a});
    for (size_t i = 0; i < r; ++i)
        for (size_t j = 0; j < c; ++j) out->data[j * r + i] = a->data[i * c + j];
    if (out->requires_grad) {
        Tensor* o = out.get();
        out->backward_fn = [a, o, r, c]() {
            a->ensure_grad();
            for (size_t i = 0; i < r; ++i)
                for (size_t j = 0; j < c; ++j) a->grad[i * c + j] += o->grad[j * r + i];
        };
    }
    return out;
}

TensorPtr reshape(const TensorPtr& a, std::vector<size_t> new_shape) {
    check(shape_product(new_shape) == a->size(), "reshape: element count mismatch");
    auto out = make_result(std::move(new_shape), {a});
    out->data = a->data;
    if (out->requires_grad) {
        Tensor* o = out.get();
        out->backward_fn = [a, o]() {
            a->ensure_grad();
            for (size_t i = 0; i < o->size(); ++i) a->grad[i] += o->grad[i];
        };
    }
    return out;
}

TensorPtr take_row(const TensorPtr& a, size_t row) {
    check(a->rank() == 2, "take_row: operand must be 2-D");
    check(row < a->shape[0], "take_row: row out of range");
    const size_t c = a->shape[1];
    auto out = make_result({1, c}, {a});
    std::copy_n(a->data.begin() + row * c, c, out->data.begin());
    if (out->requires_grad) {
        Tensor* o = out.get();
        out->backward_fn = [a, row, c, o]() {
            a->ensure_grad();
            for (size_t j = 0; j < c; ++j) a->grad[row * c + j] += o->grad[j];
        };
    }
    return out;
}

TensorPtr broadcast_row(const TensorPtr& a, size_t rows) {
    check(a->rank() == 2 && a->shape[0] == 1, "broadcast_row: operand must be {1,C}");
    const size_t c = a->shape[1];
    auto out = make_result({rows, c}, {a});
    for (size_t i = 0; i < rows; ++i)
        std::copy_n(a->data.begin(), c, out->data.begin() + i * c);
    if (out->requires_grad) {
        Tensor* o = out.get();
        out->backward_fn = [a, rows, c, o]() {
            a->ensure_grad();
            for (size_t i = 0; i < rows; ++i)
                for (size_t j = 0; j < c; ++j) a->grad[j] += o->grad[i * c + j];
        };
    }
    return out;
}

TensorPtr concat_cols(const std::vector<TensorPtr>& parts) {
    check(!parts.empty(), "concat_cols: empty part list");
    const size_t r = parts[0]->shape[0];
    size_t total = 0;
    for (const auto& p : parts) {
        check(p->rank() == 2 && p->shape[0] == r, "concat_cols: parts must be 2-D with equal rows");
        total += p->shape[1];
    }
    bool rg = false;
    if (g_grad_mode)
        for (const auto& p : parts) rg = rg || p->requires_grad;
    auto out = Tensor::create({r, total}, rg);
    if (rg) out->parents = parts;
    size_t offset = 0;
    for (const auto& p : parts) {
        const size_t c = p->shape[1];
        for (size_t i = 0; i < r; ++i)
            std::copy_n(p->data.begin() + i * c, c, out->data.begin() + i * total + offset);
        offset += c;
    }
    if (rg) {
        Tensor* o = out.get();
        auto parts_copy = parts;
        out->backward_fn = [parts_copy, r, total, o]() {
            size_t off = 0;
            for (const auto& p : parts_copy) {
                const size_t c = p->shape[1];
                if (p->requires_grad) {
                    p->ensure_grad();
                    for (size_t i = 0; i < r; ++i)
                        for (size_t j = 0; j < c; ++j)
                            p->grad[i * c + j] += o->grad[i * total + off + j];
                }
                off += c;
            }
        };
    }
    return out;
}

TensorPtr chw_to_rows(const TensorPtr& a) {
    check(a->rank() == 3, "chw_to_rows: operand must be {C,H,W}");
    const size_t c = a->shape[0], h = a->shape[1], w = a->shape[2];
    auto out = make_result({h * w, c}, {a});
    for (size_t ch = 0; ch < c; ++ch)
        for (size_t p = 0; p < h * w; ++p) out->data[p * c + ch] = a->data[ch * h * w + p];
    if (out->requires_grad) {
        Tensor* o = out.get();
        out->backward_fn = [a, c, h, w, o]() {
            a->ensure_grad();
            for (size_t ch = 0; ch < c; ++ch)
                for (size_t p = 0; p < h * w; ++p) a->grad[ch * h * w + p] += o->grad[p * c + ch];
        };
    }
    return out;
}

TensorPtr rows_to_chw(const TensorPtr& a, size_t h, size_t w) {
    check(a->rank() == 2 && a->shape[0] == h * w, "rows_to_chw: operand must be {H*W,C}");
    const size_t c = a->shape[1];
    auto out = make_result({c, h, w}, {a});
    for (size_t ch = 0; ch < c; ++ch)
        for (size_t p = 0; p < h * w; ++p) out->data[ch * h * w + p] = a->data[p * c + ch];
    if (out->requires_grad) {
        Tensor* o = out.get();
        out->backward_fn = [a, c, h, w, o]() {
            a->ensure_grad();
            for (size_t ch = 0; ch < c; ++ch)
                for (size_t p = 0; p < h * w; ++p) a->grad[p * c + ch] += o->grad[ch * h * w + p];
        };
    }
    return out;
}

TensorPtr add_rowvec(const TensorPtr& a, const TensorPtr& b) {
    check(a->rank() == 2 && b->rank() == 2 && b->shape[0] == 1 && b->shape[1] == a->shape[1],
          "add_rowvec: want {R,C} + {1,C}");
    const size_t r = a->shape[0], c = a->shape[1];
    auto out = make_result(a->shape, {a, b});
    for (size_t i = 0; i < r; ++i)
        for (size_t j = 0; j < c; ++j) out->data[i * c + j] = a->data[i * c + j] + b->data[j];
    if (out->requires_grad) {
        Tensor* o = out.get();
        out->backward_fn = [a, b, r, c, o]() {
            if (a->requires_grad) {
                a->ensure_grad();
                for (size_t i = 0; i < o->size(); ++i) a->grad[i] += o->grad[i];
            }
            if (b->requires_grad) {
                b->ensure_grad();
                for (size_t i = 0; i < r; ++i)
                    for (size_t j = 0; j < c; ++j) b->grad[j] += o->grad[i * c + j];
            }
        };
    }
    return out;
}

TensorPtr div_rowvec(const TensorPtr& a, const TensorPtr& b) {
    check(a->rank() == 2 && b->rank() == 2 && b->shape[0] == 1 && b->shape[1] == a->shape[1],
          "div_rowvec: want {R,C} / {1,C}");
    const size_t r = a->shape[0], c = a->shape[1];
    auto out = make_result(a->shape, {a, b});
    for (size_t i = 0; i < r; ++i)
        for (size_t j = 0; j < c; ++j) out->data[i * c + j] = a->data[i * c + j] / b->data[j];
    if (out->requires_grad) {
        Tensor* o = out.get();
        out->backward_fn = [a, b, r, c, o]() {
            if (a->requires_grad) {
                a->ensure_grad();
                for (size_t i = 0; i < r; ++i)
                    for (size_t j = 0; j < c; ++j) a->grad[i * c + j] += o->grad[i * c + j] / b->data[j];
            }
            if (b->requires_grad) {
                b->ensure_grad();
                for (size_t i = 0; i < r; ++i)
                    for (size_t j = 0; j < c; ++j)
                        b->grad[j] -= o->grad[i * c + j] * o->data[i * c + j] / b->data[j];
            }
        };
    }
    return out;
}

TensorPtr mul_colvec(const TensorPtr& a, const TensorPtr& b) {
    check(a->rank() == 2 && b->rank() == 2 && b->shape[1] == 1 && b->shape[0] == a->shape[0],
          "mul_colvec: want {R,C} * {R,1}");
    const size_t r = a->shape[0], c = a->shape[1];
    auto out = make_result(a->shape, {a, b});
    for (size_t i = 0; i < r; ++i)
        for (size_t j = 0; j < c; ++j) out->data[i * c + j] = a->data[i * c + j] * b->data[i];
    if (out->requires_grad) {
        Tensor* o = out.get();
        out->backward_fn = [a, b, r, c, o]() {
            if (a->requires_grad) {
                a->ensure_grad();
                for (size_t i = 0; i < r; ++i)
                    for (size_t j = 0; j < c; ++j) a->grad[i * c + j] += o->grad[i * c + j] * b->data[i];
            }
            if (b->requires_grad) {
                b->ensure_grad();
                for (size_t i = 0; i < r; ++i) {
                    double acc = 0.0;
                    for (size_t j = 0; j < c; ++j) acc += o->grad[i * c + j] * a->data[i * c + j];
                    b->grad[i] += acc;
                }
            }
        };
    }
    return out;
}

TensorPtr sum_all(const TensorPtr& a) {
    auto out = make_result({1}, {a});
    double acc = 0.0;
    for (double x : a->data) acc += x;
    out->data[0] = acc;
    if (out->requires_grad) {
        Tensor* o = out.get();
        out->backward_fn = [a, o]() {
            a->ensure_grad();
            const double g = o->grad[0];
            for (size_t i = 0; i < a->size(); ++i) a->grad[i] += g;
        };
    }
    return out;
}

TensorPtr mean_all(const TensorPtr& a) {
    auto out = make_result({1}, {a});
    double acc = 0.0;
    for (double x : a->data) acc += x;
    const double n = static_cast<double>(a->size());
    out->data[0] = acc / n;
    if (out->requires_grad) {
        Tensor* o = out.get();
        out->backward_fn = [a, n, o]() {
            a->ensure_grad();
            const double g = o->grad[0] / n;
            for (size_t i = 0; i < a->size(); ++i) a->grad[i] += g;
        };
    }
    return out;
}

TensorPtr sum_axis0(const TensorPtr& a) {
    check(a->rank() == 2, "sum_axis0: operand must be 2-D");
    const size_t r = a->shape[0], c = a->shape[1];
    auto out = make_result({1, c}, {a});
    for (size_t i = 0; i < r; ++i)
        for (size_t j = 0; j < c; ++j) out->data[j] += a->data[i * c + j];
    if (out->requires_grad) {
        Tensor* o = out.get();
        out->backward_fn = [a, r, c, o]() {
            a->ensure_grad();
            for (size_t i = 0; i < r; ++i)
                for (size_t j = 0; j < c; ++j) a->grad[i * c + j] += o->grad[j];
        };
    }
    return out;
}

TensorPtr softmax_axis(const TensorPtr& a, size_t axis) {
    check(axis < a->rank(), "softmax_axis: axis out of range");
    size_t outer = 1, inner = 1;
    for (size_t d = 0; d < axis; ++d) outer *= a->shape[d];
    for (size_t d = axis + 1; d < a->rank(); ++d) inner *= a->shape[d];
    const size_t len = a->shape[axis];
    auto out = make_result(a->shape, {a});
    for (size_t ou = 0; ou < outer; ++ou) {
        for (size_t in = 0; in < inner; ++in) {
            const size_t base = ou * len * inner + in;
            double mx = a->data[base];
            for (size_t k = 1; k < len; ++k) mx = std::max(mx, a->data[base + k * inner]);
            double denom = 0.0;
            for (size_t k = 0; k < len; ++k) {
                const double e = std::exp(a->data[base + k * inner] - mx);
                out->data[base + k * inner] = e;
                denom += e;
            }
            for (size_t k = 0; k < len; ++k) out->data[base + k * inner] /= denom;
        }
    }
    if (out->requires_grad) {
        Tensor* o = out.get();
        out->backward_fn = [a, outer, inner, len, o]() {
            a->ensure_grad();
            for (size_t ou = 0; ou < outer; ++ou) {
                for (size_t in = 0; in < inner; ++in) {
                    const size_t base = ou * len * inner + in;
                    double dot = 0.0;
                    for (size_t k = 0; k < len; ++k)
                        dot += o->grad[base + k * inner] * o->data[base + k * inner];
                    for (size_t k = 0; k < len; ++k) {
                        const size_t idx = base + k * inner;
                        a->grad[idx] += o->data[idx] * (o->grad[idx] - dot);
                    }
                }
            }
        };
    }
    return out;
}

TensorPtr conv2d(const TensorPtr& x, const TensorPtr& w, const TensorPtr& b, size_t stride,
                 size_t pad) {
    check(x->rank() == 3, "conv2d: input must be {C,H,W}");
    check(w->rank() == 4, "conv2d: weight must be {O,C,kh,kw}");
    check(b->rank() == 1, "conv2d: bias must be {O}");
    check(w->shape[1] == x->shape[0], "conv2d: channel mismatch");
    check(b->shape[0] == w->shape[0], "conv2d: bias size mismatch");
    check(stride >= 1, "conv2d: stride must be >= 1");
    const size_t ci = x->shape[0], h = x->shape[1], wd = x->shape[2];
    const size_t co = w->shape[0], kh = w->shape[2], kw = w->shape[3];
    check(h + 2 * pad >= kh && wd + 2 * pad >= kw, "conv2d: kernel larger than padded input");
    const size_t oh = (h + 2 * pad - kh) / stride + 1;
    const size_t ow = (wd + 2 * pad - kw) / stride + 1;
    auto out = make_result({co, oh, ow}, {x, w, b});

    const double* xd = x->data.data();
    const double* wd_ = w->data.data();
    double* od = out->data.data();
    for (size_t o = 0; o < co; ++o) {
        for (size_t r = 0; r < oh; ++r) {
            for (size_t c = 0; c < ow; ++c) {
                double acc = b->data[o];
                for (size_t ic = 0; ic < ci; ++ic) {
                    const double* xplane = xd + ic * h * wd;
                    const double* wplane = wd_ + (o * ci + ic) * kh * kw;
                    for (size_t i = 0; i < kh; ++i) {
                        const long ir = static_cast<long>(r * stride + i) - static_cast<long>(pad);
                        if (ir < 0 || ir >= static_cast<long>(h)) continue;
                        for (size_t j = 0; j < kw; ++j) {
                            const long jc = static_cast<long>(c * stride + j) - static_cast<long>(pad);
                            if (jc < 0 || jc >= static_cast<long>(wd)) continue;
                            acc += xplane[ir * wd + jc] * wplane[i * kw + j];
                        }
                    }
                }
                od[(o * oh + r) * ow + c] = acc;
            }
        }
    }
    if (out->requires_grad) {
        Tensor* ot = out.get();
        out->backward_fn = [x, w, b, stride, pad, ci, h, wd, co, kh, kw, oh, ow, ot]() {
            const double* g = ot->grad.data();
            if (b->requires_grad) {
                b->ensure_grad();
                for (size_t o = 0; o < co; ++o) {
                    double acc = 0.0;
                    for (size_t p = 0; p < oh * ow; ++p) acc += g[o * oh * ow + p];
                    b->grad[o] += acc;
                }
            }
            const bool gx = x->requires_grad, gw = w->requires_grad;
            if (gx) x->ensure_grad();
            if (gw) w->ensure_grad();
            if (!gx && !gw) return;
            for (size_t o = 0; o < co; ++o) {
                for (size_t r = 0; r < oh; ++r) {
                    for (size_t c = 0; c < ow; ++c) {
                        const double go = g[(o * oh + r) * ow + c];
                        if (go == 0.0) continue;
                        for (size_t ic = 0; ic < ci; ++ic) {
                            const size_t xoff = ic * h * wd;
                            const size_t woff = (o * ci + ic) * kh * kw;
                            for (size_t i = 0; i < kh; ++i) {
                                const long ir =
                                    static_cast<long>(r * stride + i) - static_cast<long>(pad);
                                if (ir < 0 || ir >= static_cast<long>(h)) continue;
                                for (size_t j = 0; j < kw; ++j) {
                                    const long jc =
                                        static_cast<long>(c * stride + j) - static_cast<long>(pad);
                                    if (jc < 0 || jc >= static_cast<long>(wd)) continue;
                                    if (gx) x->grad[xoff + ir * wd + jc] += go * w->data[woff + i * kw + j];
                                    if (gw) w->grad[woff + i * kw + j] += go * x->data[xoff + ir * wd + jc];
                                }
                            }
                        }
                    }
                }
            }
        };
    }
    return out;
}

TensorPtr upsample2x(const TensorPtr& x) {
    check(x->rank() == 3, "upsample2x: input must be {C,H,W}");
    const size_t c = x->shape[0], h = x->shape[1], w = x->shape[2];
    auto out = make_result({c, 2 * h, 2 * w}, {x});
    for (size_t ch = 0; ch < c; ++ch)
        for (size_t r = 0; r < h; ++r)
            for (size_t cc = 0; cc < w; ++cc) {
                const double v = x->data[(ch * h + r) * w + cc];
                const size_t base = (ch * 2 * h + 2 * r) * 2 * w + 2 * cc;
                out->data[base] = v;
                out->data[base + 1] = v;
                out->data[base + 2 * w] = v;
                out->data[base + 2 * w + 1] = v;
            }
    if (out->requires_grad) {
        Tensor* o = out.get();
        out->backward_fn = [x, c, h, w, o]() {
            x->ensure_grad();
            for (size_t ch = 0; ch < c; ++ch)
                for (size_t r = 0; r < h; ++r)
                    for (size_t cc = 0; cc < w; ++cc) {
                        const size_t base = (ch * 2 * h + 2 * r) * 2 * w + 2 * cc;
                        x->grad[(ch * h + r) * w + cc] += o->grad[base] + o->grad[base + 1] +
                                                          o->grad[base + 2 * w] +
                                                          o->grad[base + 2 * w + 1];
                    }
        };
    }
    return out;
}

GRUWeights GRUWeights::init(size_t width, Rng& rng, double stddev) {
    GRUWeights g;
    g.w_xz = Tensor::randn({width, width}, rng, stddev);
    g.w_hz = Tensor::randn({width, width}, rng, stddev);
    g.b_z = Tensor::create({1, width}, true);
    g.w_xr = Tensor::randn({width, width}, rng, stddev);
    g.w_hr = Tensor::randn({width, width}, rng, stddev);
    g.b_r = Tensor::create({1, width}, true);
    g.w_xh = Tensor::randn({width, width}, rng, stddev);
    g.w_hh = Tensor::randn({width, width}, rng, stddev);
    g.b_h = Tensor::create({1, width}, true);
    return g;
}

GRUWeights GRUWeights::zeros(size_t width, bool requires_grad) {
    GRUWeights g;
    g.w_xz = Tensor::create({width, width}, requires_grad);
    g.w_hz = Tensor::create({width, width}, requires_grad);
    g.b_z = Tensor::create({1, width}, requires_grad);
    g.w_xr = Tensor::create({width, width}, requires_grad);
    g.w_hr = Tensor::create({width, width}, requires_grad);
    g.b_r = Tensor::create({1, width}, requires_grad);
    g.w_xh = Tensor::create({width, width}, requires_grad);
    g.w_hh = Tensor::create({width, width}, requires_grad);
    g.b_h = Tensor::create({1, width}, requires_grad);
    return g;
}

std::vector<TensorPtr> GRUWeights::parameters() const {
    return {w_xz, w_hz, b_z, w_xr, w_hr, b_r, w_xh, w_hh, b_h};
}

TensorPtr gru_cell(const TensorPtr& inputs, const TensorPtr& states, const GRUWeights& w) {
    check(inputs->rank() == 2 && states->rank() == 2, "gru_cell: inputs/states must be {N,C}");
    check(inputs->shape == states->shape, "gru_cell: inputs/states shape mismatch");
    check(w.w_xz->shape[0] == inputs->shape[1], "gru_cell: weight width mismatch");
    auto z = sigmoid(add_rowvec(add(matmul(inputs, w.w_xz), matmul(states, w.w_hz)), w.b_z));
    auto r = sigmoid(add_rowvec(add(matmul(inputs, w.w_xr), matmul(states, w.w_hr)), w.b_r));
    auto candidate =
        tanh_t(add_rowvec(add(matmul(inputs, w.w_xh), matmul(mul(r, states), w.w_hh)), w.b_h));
    // (1 - z) * states + z * candidate
    return add(sub(states, mul(z, states)), mul(z, candidate));
}

double grad_check(const std::function<TensorPtr()>& f, const std::vector<TensorPtr>& params,
                  double eps) {
    check(eps >= 1e-7 && eps <= 1e-3, "grad_check: eps out of [1e-7, 1e-3]");
    auto loss = f();
    if (!std::isfinite(loss->item())) throw ContractViolation("grad_check: non-finite loss");
    backward(loss);
    std::vector<std::vector<double>> analytic;
    analytic.reserve(params.size());
    for (const auto& p : params) {
        p->ensure_grad();
        analytic.push_back(p->grad);
    }

    double worst = 0.0;
    NoGradGuard no_grad;
    for (size_t pi = 0; pi < params.size(); ++pi) {
        auto& p = params[pi];
        for (size_t i = 0; i < p->size(); ++i) {
            const double saved = p->data[i];
            p->data[i] = saved + eps;
            const double up = f()->item();
            p->data[i] = saved - eps;
            const double down = f()->item();
            p->data[i] = saved;
            if (!std::isfinite(up) || !std::isfinite(down))
                throw ContractViolation("grad_check: non-finite loss during perturbation");
            const double numeric = (up - down) / (2.0 * eps);
            const double a = analytic[pi][i];
            const double rel = std::abs(a - numeric) /
                               std::max({1.0, std::abs(a), std::abs(numeric)});
            worst = std::max(worst, rel);
        }
    }
    return worst;
}

}  // namespace wscos
