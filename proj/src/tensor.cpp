#include "codesumm/tensor.hpp"

#include <cblas.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <mutex>
#include <sstream>
#include <stdexcept>

namespace codesumm {

// ---------------- shape utilities ----------------

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace {

void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

void check_finite(const char* op, const std::vector<double>& v) {
  for (double x : v) {
    if (!std::isfinite(x)) {
      throw std::runtime_error(std::string(op) +
                               " produced a non-finite value");
    }
  }
}

// dgemm results must not depend on an ambient thread count.
void ensure_single_threaded_blas() {
  static std::once_flag flag;
  std::call_once(flag, [] { openblas_set_num_threads(1); });
}

}  // namespace

// ---------------- storage ----------------

// Value and gradient buffers live together so reshaped views can share
// both: a view is a new Impl with a different shape over the same
// Storage, and gradients written through the view land in the base.
struct TensorStorage {
  std::vector<double> values;
  std::vector<double> grad;  // empty until first accumulation
};

struct Tensor::Impl {
  Shape shape;
  std::shared_ptr<TensorStorage> storage;
  bool requires_grad = false;
  bool tracked = false;

  std::vector<double>& values() { return storage->values; }
  const std::vector<double>& values() const { return storage->values; }
};

struct TensorAccess {
  static std::shared_ptr<Tensor::Impl> impl(const Tensor& t) { return t.impl_; }

  static std::vector<double>& grad_of(Tensor::Impl& t) {
    if (t.storage->grad.empty()) {
      t.storage->grad.assign(t.storage->values.size(), 0.0);
    }
    return t.storage->grad;
  }

  static Tensor make(Shape shape, std::vector<double> values) {
    auto impl = std::make_shared<Tensor::Impl>();
    impl->shape = std::move(shape);
    impl->storage = std::make_shared<TensorStorage>();
    impl->storage->values = std::move(values);
    return Tensor(std::move(impl));
  }

  // Records `node` when a tape is active and any input is on a gradient
  // path; marks the output tracked in that case.
  template <typename MakeNode>
  static void maybe_record(std::initializer_list<const Tensor*> inputs,
                           Tensor& out, MakeNode&& make_node) {
    GradTape* tape = GradTape::active();
    if (!tape) return;
    bool any_tracked = false;
    for (const Tensor* t : inputs) {
      if (t->defined() && t->impl_->tracked) any_tracked = true;
    }
    if (!any_tracked) return;
    out.impl_->tracked = true;
    tape->nodes_.push_back(make_node());
  }

  static void record_direct(Tensor& out, std::function<void()> node) {
    GradTape* tape = GradTape::active();
    if (!tape) return;
    out.impl_->tracked = true;
    tape->nodes_.push_back(std::move(node));
  }
};

namespace {

thread_local GradTape* g_active_tape = nullptr;

using ImplPtr = std::shared_ptr<Tensor::Impl>;

// Output gradient, or null if no gradient reached this node.
const std::vector<double>* out_grad(const ImplPtr& out) {
  return out->storage->grad.empty() ? nullptr : &out->storage->grad;
}

bool wants_grad(const ImplPtr& t) { return t->tracked; }

}  // namespace

// ---------------- Tensor basics ----------------

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const std::size_t n = shape_size(shape);
  auto t = TensorAccess::make(std::move(shape), std::vector<double>(n, value));
  t.impl_->requires_grad = requires_grad;
  t.impl_->tracked = requires_grad;
  return t;
}

Tensor Tensor::from_values(Shape shape, std::vector<double> values,
                           bool requires_grad) {
  require(shape_size(shape) == values.size(),
          "from_values: " + shape_str(shape) + " does not hold " +
              std::to_string(values.size()) + " values");
  auto t = TensorAccess::make(std::move(shape), std::move(values));
  t.impl_->requires_grad = requires_grad;
  t.impl_->tracked = requires_grad;
  return t;
}

const Shape& Tensor::shape() const { return impl_->shape; }
std::size_t Tensor::rank() const { return impl_->shape.size(); }
std::size_t Tensor::size() const { return impl_->values().size(); }
bool Tensor::requires_grad() const { return impl_->requires_grad; }
bool Tensor::tracked() const { return impl_->tracked; }

std::vector<double>& Tensor::values() { return impl_->values(); }
const std::vector<double>& Tensor::values() const { return impl_->values(); }

double Tensor::item() const {
  require(size() == 1, "item: tensor " + shape_str(shape()) + " is not scalar");
  return impl_->values()[0];
}

std::vector<double>& Tensor::grad() { return TensorAccess::grad_of(*impl_); }
bool Tensor::has_grad() const { return !impl_->storage->grad.empty(); }

void Tensor::zero_grad() {
  std::fill(impl_->storage->grad.begin(), impl_->storage->grad.end(), 0.0);
}

Tensor Tensor::detached_copy() const {
  return TensorAccess::make(impl_->shape, impl_->values());
}

// ---------------- GradTape ----------------

GradTape* GradTape::active() { return g_active_tape; }

TapeScope::TapeScope(GradTape& tape) {
  previous_ = g_active_tape;
  g_active_tape = &tape;
}

TapeScope::~TapeScope() { g_active_tape = previous_; }

void GradTape::backward(const Tensor& loss) {
  require(loss.defined() && loss.size() == 1,
          "backward: loss must be a scalar");
  require(loss.tracked(),
          "backward: loss was not recorded on a tape (no gradient path)");
  auto impl = TensorAccess::impl(loss);
  TensorAccess::grad_of(*impl)[0] += 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
}

// ---------------- elementwise helpers ----------------

namespace {

// Shared implementation for unary elementwise ops whose derivative is a
// function of the output value.
template <typename Fwd, typename DerivFromOut>
Tensor unary_from_output(const Tensor& x, const char* name, Fwd fwd,
                         DerivFromOut deriv) {
  auto xi = TensorAccess::impl(x);
  std::vector<double> out(xi->values().size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(xi->values()[i]);
  check_finite(name, out);
  Tensor result = TensorAccess::make(xi->shape, std::move(out));
  auto oi = TensorAccess::impl(result);
  TensorAccess::maybe_record({&x}, result, [xi, oi, deriv] {
    return [xi, oi, deriv] {
      const auto* g = out_grad(oi);
      if (!g || !wants_grad(xi)) return;
      auto& gx = TensorAccess::grad_of(*xi);
      for (std::size_t i = 0; i < gx.size(); ++i) {
        gx[i] += (*g)[i] * deriv(oi->values()[i], xi->values()[i]);
      }
    };
  });
  return result;
}

}  // namespace

Tensor Tensor::tanh() const {
  return unary_from_output(
      *this, "tanh", [](double v) { return std::tanh(v); },
      [](double y, double) { return 1.0 - y * y; });
}

Tensor Tensor::sigmoid() const {
  return unary_from_output(
      *this, "sigmoid", [](double v) { return 1.0 / (1.0 + std::exp(-v)); },
      [](double y, double) { return y * (1.0 - y); });
}

Tensor Tensor::relu() const {
  return unary_from_output(
      *this, "relu", [](double v) { return v > 0.0 ? v : 0.0; },
      [](double, double x) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor Tensor::operator+(const Tensor& other) const {
  auto ai = impl_;
  auto bi = TensorAccess::impl(other);
  const bool same = ai->shape == bi->shape;
  if (!same) {
    // rhs must match a trailing suffix of the lhs shape
    require(bi->shape.size() <= ai->shape.size() &&
                std::equal(bi->shape.rbegin(), bi->shape.rend(),
                           ai->shape.rbegin()),
            "add: " + shape_str(bi->shape) + " is not a trailing suffix of " +
                shape_str(ai->shape));
  }
  const std::size_t bn = bi->values().size();
  std::vector<double> out(ai->values().size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = ai->values()[i] + bi->values()[i % bn];
  }
  check_finite("add", out);
  Tensor result = TensorAccess::make(ai->shape, std::move(out));
  auto oi = TensorAccess::impl(result);
  TensorAccess::maybe_record({this, &other}, result, [ai, bi, oi, bn] {
    return [ai, bi, oi, bn] {
      const auto* g = out_grad(oi);
      if (!g) return;
      if (wants_grad(ai)) {
        auto& ga = TensorAccess::grad_of(*ai);
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += (*g)[i];
      }
      if (wants_grad(bi)) {
        auto& gb = TensorAccess::grad_of(*bi);
        for (std::size_t i = 0; i < g->size(); ++i) gb[i % bn] += (*g)[i];
      }
    };
  });
  return result;
}

Tensor Tensor::operator-(const Tensor& other) const {
  auto ai = impl_;
  auto bi = TensorAccess::impl(other);
  require(ai->shape == bi->shape, "sub: shape mismatch " +
                                      shape_str(ai->shape) + " vs " +
                                      shape_str(bi->shape));
  std::vector<double> out(ai->values().size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = ai->values()[i] - bi->values()[i];
  }
  check_finite("sub", out);
  Tensor result = TensorAccess::make(ai->shape, std::move(out));
  auto oi = TensorAccess::impl(result);
  TensorAccess::maybe_record({this, &other}, result, [ai, bi, oi] {
    return [ai, bi, oi] {
      const auto* g = out_grad(oi);
      if (!g) return;
      if (wants_grad(ai)) {
        auto& ga = TensorAccess::grad_of(*ai);
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += (*g)[i];
      }
      if (wants_grad(bi)) {
        auto& gb = TensorAccess::grad_of(*bi);
        for (std::size_t i = 0; i < gb.size(); ++i) gb[i] -= (*g)[i];
      }
    };
  });
  return result;
}

Tensor Tensor::operator*(const Tensor& other) const {
  auto ai = impl_;
  auto bi = TensorAccess::impl(other);
  require(ai->shape == bi->shape, "mul: shape mismatch " +
                                      shape_str(ai->shape) + " vs " +
                                      shape_str(bi->shape));
  std::vector<double> out(ai->values().size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = ai->values()[i] * bi->values()[i];
  }
  check_finite("mul", out);
  Tensor result = TensorAccess::make(ai->shape, std::move(out));
  auto oi = TensorAccess::impl(result);
  TensorAccess::maybe_record({this, &other}, result, [ai, bi, oi] {
    return [ai, bi, oi] {
      const auto* g = out_grad(oi);
      if (!g) return;
      if (wants_grad(ai)) {
        auto& ga = TensorAccess::grad_of(*ai);
        for (std::size_t i = 0; i < ga.size(); ++i) {
          ga[i] += (*g)[i] * bi->values()[i];
        }
      }
      if (wants_grad(bi)) {
        auto& gb = TensorAccess::grad_of(*bi);
        for (std::size_t i = 0; i < gb.size(); ++i) {
          gb[i] += (*g)[i] * ai->values()[i];
        }
      }
    };
  });
  return result;
}

Tensor Tensor::operator*(double scalar) const {
  auto ai = impl_;
  std::vector<double> out(ai->values().size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = ai->values()[i] * scalar;
  check_finite("scale", out);
  Tensor result = TensorAccess::make(ai->shape, std::move(out));
  auto oi = TensorAccess::impl(result);
  TensorAccess::maybe_record({this}, result, [ai, oi, scalar] {
    return [ai, oi, scalar] {
      const auto* g = out_grad(oi);
      if (!g || !wants_grad(ai)) return;
      auto& ga = TensorAccess::grad_of(*ai);
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += (*g)[i] * scalar;
    };
  });
  return result;
}

// ---------------- matmul / transpose / reshape ----------------

Tensor Tensor::matmul(const Tensor& other) const {
  ensure_single_threaded_blas();
  auto ai = impl_;
  auto bi = TensorAccess::impl(other);
  require(ai->shape.size() >= 2 && bi->shape.size() >= 2,
          "matmul: operands must have rank >= 2, got " +
              shape_str(ai->shape) + " and " + shape_str(bi->shape));
  const std::size_t m = ai->shape[ai->shape.size() - 2];
  const std::size_t k = ai->shape[ai->shape.size() - 1];
  const std::size_t k2 = bi->shape[bi->shape.size() - 2];
  const std::size_t n = bi->shape[bi->shape.size() - 1];
  require(k == k2, "matmul: inner dimensions disagree: " +
                       shape_str(ai->shape) + " x " + shape_str(bi->shape));

  Shape abatch(ai->shape.begin(), ai->shape.end() - 2);
  Shape bbatch(bi->shape.begin(), bi->shape.end() - 2);
  require(abatch == bbatch || abatch.empty() || bbatch.empty(),
          "matmul: leading batch dimensions disagree: " +
              shape_str(ai->shape) + " x " + shape_str(bi->shape));
  const Shape& batch = abatch.empty() ? bbatch : abatch;
  const std::size_t nbatch = shape_size(batch);
  const std::size_t a_stride = abatch.empty() && !bbatch.empty() ? 0 : m * k;
  const std::size_t b_stride = bbatch.empty() && !abatch.empty() ? 0 : k * n;

  Shape out_shape = batch;
  out_shape.push_back(m);
  out_shape.push_back(n);
  std::vector<double> out(nbatch * m * n, 0.0);
  for (std::size_t s = 0; s < nbatch; ++s) {
    cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, (int)m, (int)n,
                (int)k, 1.0, ai->values().data() + s * a_stride, (int)k,
                bi->values().data() + s * b_stride, (int)n, 0.0,
                out.data() + s * m * n, (int)n);
  }
  check_finite("matmul", out);
  Tensor result = TensorAccess::make(std::move(out_shape), std::move(out));
  auto oi = TensorAccess::impl(result);
  TensorAccess::maybe_record(
      {this, &other}, result, [ai, bi, oi, m, n, k, nbatch, a_stride, b_stride] {
        return [ai, bi, oi, m, n, k, nbatch, a_stride, b_stride] {
          const auto* g = out_grad(oi);
          if (!g) return;
          if (wants_grad(ai)) {
            auto& ga = TensorAccess::grad_of(*ai);
            for (std::size_t s = 0; s < nbatch; ++s) {
              // dA += dC . B^T
              cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasTrans, (int)m,
                          (int)k, (int)n, 1.0, g->data() + s * m * n, (int)n,
                          bi->values().data() + s * b_stride, (int)n, 1.0,
                          ga.data() + s * a_stride, (int)k);
            }
          }
          if (wants_grad(bi)) {
            auto& gb = TensorAccess::grad_of(*bi);
            for (std::size_t s = 0; s < nbatch; ++s) {
              // dB += A^T . dC
              cblas_dgemm(CblasRowMajor, CblasTrans, CblasNoTrans, (int)k,
                          (int)n, (int)m, 1.0,
                          ai->values().data() + s * a_stride, (int)k,
                          g->data() + s * m * n, (int)n, 1.0,
                          gb.data() + s * b_stride, (int)n);
            }
          }
        };
      });
  return result;
}

Tensor Tensor::transpose() const {
  auto ai = impl_;
  require(ai->shape.size() >= 2, "transpose: rank must be >= 2");
  const std::size_t m = ai->shape[ai->shape.size() - 2];
  const std::size_t n = ai->shape[ai->shape.size() - 1];
  const std::size_t slices = ai->values().size() / (m * n);
  Shape out_shape = ai->shape;
  std::swap(out_shape[out_shape.size() - 2], out_shape[out_shape.size() - 1]);
  std::vector<double> out(ai->values().size());
  for (std::size_t s = 0; s < slices; ++s) {
    const double* src = ai->values().data() + s * m * n;
    double* dst = out.data() + s * m * n;
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) dst[j * m + i] = src[i * n + j];
    }
  }
  Tensor result = TensorAccess::make(std::move(out_shape), std::move(out));
  auto oi = TensorAccess::impl(result);
  TensorAccess::maybe_record({this}, result, [ai, oi, m, n, slices] {
    return [ai, oi, m, n, slices] {
      const auto* g = out_grad(oi);
      if (!g || !wants_grad(ai)) return;
      auto& ga = TensorAccess::grad_of(*ai);
      for (std::size_t s = 0; s < slices; ++s) {
        const double* src = g->data() + s * m * n;
        double* dst = ga.data() + s * m * n;
        for (std::size_t j = 0; j < n; ++j) {
          for (std::size_t i = 0; i < m; ++i) dst[i * n + j] += src[j * m + i];
        }
      }
    };
  });
  return result;
}

Tensor Tensor::reshape(Shape new_shape) const {
  auto ai = impl_;
  require(shape_size(new_shape) == ai->values().size(),
          "reshape: " + shape_str(ai->shape) + " cannot become " +
              shape_str(new_shape));
  // a view over the same storage: values and gradients are shared, so no
  // tape node is needed
  auto view = std::make_shared<Impl>();
  view->shape = std::move(new_shape);
  view->storage = ai->storage;
  view->requires_grad = ai->requires_grad;
  view->tracked = ai->tracked;
  return Tensor(std::move(view));
}

// ---------------- softmax / layer_norm ----------------

Tensor Tensor::softmax(std::size_t axis) const {
  auto ai = impl_;
  require(axis < ai->shape.size(),
          "softmax: axis " + std::to_string(axis) + " out of range for " +
              shape_str(ai->shape));
  const std::size_t n = ai->shape[axis];
  std::size_t inner = 1;
  for (std::size_t d = axis + 1; d < ai->shape.size(); ++d) {
    inner *= ai->shape[d];
  }
  const std::size_t outer = ai->values().size() / (n * inner);
  std::vector<double> out(ai->values().size());
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t i = 0; i < inner; ++i) {
      const std::size_t base = o * n * inner + i;
      double mx = ai->values()[base];
      for (std::size_t j = 1; j < n; ++j) {
        mx = std::max(mx, ai->values()[base + j * inner]);
      }
      double sum = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        const double e = std::exp(ai->values()[base + j * inner] - mx);
        out[base + j * inner] = e;
        sum += e;
      }
      for (std::size_t j = 0; j < n; ++j) out[base + j * inner] /= sum;
    }
  }
  check_finite("softmax", out);
  Tensor result = TensorAccess::make(ai->shape, std::move(out));
  auto oi = TensorAccess::impl(result);
  TensorAccess::maybe_record({this}, result, [ai, oi, n, inner, outer] {
    return [ai, oi, n, inner, outer] {
      const auto* g = out_grad(oi);
      if (!g || !wants_grad(ai)) return;
      auto& ga = TensorAccess::grad_of(*ai);
      for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t i = 0; i < inner; ++i) {
          const std::size_t base = o * n * inner + i;
          double dot = 0.0;
          for (std::size_t j = 0; j < n; ++j) {
            const std::size_t at = base + j * inner;
            dot += (*g)[at] * oi->values()[at];
          }
          for (std::size_t j = 0; j < n; ++j) {
            const std::size_t at = base + j * inner;
            ga[at] += oi->values()[at] * ((*g)[at] - dot);
          }
        }
      }
    };
  });
  return result;
}

Tensor Tensor::layer_norm(const Tensor& gain, const Tensor& bias,
                          double eps) const {
  auto xi = impl_;
  auto gi = TensorAccess::impl(gain);
  auto bi = TensorAccess::impl(bias);
  require(!xi->shape.empty(), "layer_norm: rank must be >= 1");
  const std::size_t d = xi->shape.back();
  require(gi->shape == Shape{d} && bi->shape == Shape{d},
          "layer_norm: gain/bias must be shaped to the last axis [" +
              std::to_string(d) + "]");
  const std::size_t slices = xi->values().size() / d;
  std::vector<double> out(xi->values().size());
  std::vector<double> mean(slices), inv_std(slices);
  for (std::size_t s = 0; s < slices; ++s) {
    const double* x = xi->values().data() + s * d;
    double mu = 0.0;
    for (std::size_t j = 0; j < d; ++j) mu += x[j];
    mu /= (double)d;
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (x[j] - mu) * (x[j] - mu);
    var /= (double)d;
    const double inv = 1.0 / std::sqrt(var + eps);
    mean[s] = mu;
    inv_std[s] = inv;
    for (std::size_t j = 0; j < d; ++j) {
      out[s * d + j] = (x[j] - mu) * inv * gi->values()[j] + bi->values()[j];
    }
  }
  check_finite("layer_norm", out);
  Tensor result = TensorAccess::make(xi->shape, std::move(out));
  auto oi = TensorAccess::impl(result);
  TensorAccess::maybe_record(
      {this, &gain, &bias}, result,
      [xi, gi, bi, oi, d, slices, mean, inv_std] {
        return [xi, gi, bi, oi, d, slices, mean, inv_std] {
          const auto* g = out_grad(oi);
          if (!g) return;
          for (std::size_t s = 0; s < slices; ++s) {
            const double* x = xi->values().data() + s * d;
            const double* go = g->data() + s * d;
            const double mu = mean[s];
            const double inv = inv_std[s];
            // dxhat, then reduce for dvar and dmu
            double sum_dxhat = 0.0, sum_dxhat_xc = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
              const double dxhat = go[j] * gi->values()[j];
              sum_dxhat += dxhat;
              sum_dxhat_xc += dxhat * (x[j] - mu);
            }
            if (wants_grad(xi)) {
              auto& gx = TensorAccess::grad_of(*xi);
              for (std::size_t j = 0; j < d; ++j) {
                const double dxhat = go[j] * gi->values()[j];
                const double xc = x[j] - mu;
                gx[s * d + j] +=
                    inv * (dxhat - sum_dxhat / (double)d -
                           xc * inv * inv * sum_dxhat_xc / (double)d);
              }
            }
            if (wants_grad(gi)) {
              auto& gg = TensorAccess::grad_of(*gi);
              for (std::size_t j = 0; j < d; ++j) {
                gg[j] += go[j] * (x[j] - mu) * inv;
              }
            }
            if (wants_grad(bi)) {
              auto& gb = TensorAccess::grad_of(*bi);
              for (std::size_t j = 0; j < d; ++j) gb[j] += go[j];
            }
          }
        };
      });
  return result;
}

// ---------------- dropout / masked_fill / lookup ----------------

Tensor Tensor::dropout(double p, std::mt19937_64& rng) const {
  require(p >= 0.0 && p < 1.0, "dropout: p must lie in [0, 1)");
  if (p == 0.0) return *this;
  auto ai = impl_;
  const double keep = 1.0 - p;
  const double scale = 1.0 / keep;
  auto mask = std::make_shared<std::vector<double>>(ai->values().size());
  std::vector<double> out(ai->values().size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double m = uniform01(rng) < keep ? scale : 0.0;
    (*mask)[i] = m;
    out[i] = ai->values()[i] * m;
  }
  check_finite("dropout", out);
  Tensor result = TensorAccess::make(ai->shape, std::move(out));
  auto oi = TensorAccess::impl(result);
  TensorAccess::maybe_record({this}, result, [ai, oi, mask] {
    return [ai, oi, mask] {
      const auto* g = out_grad(oi);
      if (!g || !wants_grad(ai)) return;
      auto& ga = TensorAccess::grad_of(*ai);
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += (*g)[i] * (*mask)[i];
    };
  });
  return result;
}

double masked_fill_value() { return std::numeric_limits<double>::lowest(); }

Tensor Tensor::masked_fill(const Tensor& mask, double fill) const {
  auto ai = impl_;
  auto mi = TensorAccess::impl(mask);
  require(mi->shape.size() == ai->shape.size(),
          "masked_fill: mask rank differs: " + shape_str(mi->shape) + " vs " +
              shape_str(ai->shape));
  const std::size_t rank = ai->shape.size();
  for (std::size_t d = 0; d < rank; ++d) {
    require(mi->shape[d] == ai->shape[d] || mi->shape[d] == 1,
            "masked_fill: mask " + shape_str(mi->shape) +
                " does not broadcast to " + shape_str(ai->shape));
  }
  // 0-stride odometer walk over the (possibly size-1) mask axes
  std::vector<std::size_t> mstride(rank, 0);
  {
    std::size_t s = 1;
    for (std::size_t d = rank; d-- > 0;) {
      mstride[d] = mi->shape[d] == 1 ? 0 : s;
      s *= mi->shape[d];
    }
  }
  auto keep = std::make_shared<std::vector<unsigned char>>(ai->values().size());
  std::vector<double> out(ai->values().size());
  std::vector<std::size_t> idx(rank, 0);
  std::size_t moff = 0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    const bool k = mi->values()[moff] != 0.0;
    (*keep)[i] = k;
    out[i] = k ? ai->values()[i] : fill;
    for (std::size_t d = rank; d-- > 0;) {
      moff += mstride[d];
      if (++idx[d] < ai->shape[d]) break;
      moff -= mstride[d] * ai->shape[d];
      idx[d] = 0;
    }
  }
  check_finite("masked_fill", out);
  Tensor result = TensorAccess::make(ai->shape, std::move(out));
  auto oi = TensorAccess::impl(result);
  TensorAccess::maybe_record({this}, result, [ai, oi, keep] {
    return [ai, oi, keep] {
      const auto* g = out_grad(oi);
      if (!g || !wants_grad(ai)) return;
      auto& ga = TensorAccess::grad_of(*ai);
      for (std::size_t i = 0; i < ga.size(); ++i) {
        if ((*keep)[i]) ga[i] += (*g)[i];
      }
    };
  });
  return result;
}

Tensor Tensor::lookup(const std::vector<int>& ids,
                      const Shape& ids_shape) const {
  auto ti = impl_;
  require(ti->shape.size() == 2, "lookup: table must be [rows, dim], got " +
                                     shape_str(ti->shape));
  require(shape_size(ids_shape) == ids.size(),
          "lookup: ids shape " + shape_str(ids_shape) + " does not hold " +
              std::to_string(ids.size()) + " ids");
  const std::size_t rows = ti->shape[0];
  const std::size_t dim = ti->shape[1];
  for (int id : ids) {
    require(id >= 0 && (std::size_t)id < rows,
            "lookup: id " + std::to_string(id) + " outside table of " +
                std::to_string(rows) + " rows");
  }
  Shape out_shape = ids_shape;
  out_shape.push_back(dim);
  std::vector<double> out(ids.size() * dim);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const double* row = ti->values().data() + (std::size_t)ids[i] * dim;
    std::copy(row, row + dim, out.data() + i * dim);
  }
  Tensor result = TensorAccess::make(std::move(out_shape), std::move(out));
  auto oi = TensorAccess::impl(result);
  auto ids_copy = std::make_shared<std::vector<int>>(ids);
  TensorAccess::maybe_record({this}, result, [ti, oi, ids_copy, dim] {
    return [ti, oi, ids_copy, dim] {
      const auto* g = out_grad(oi);
      if (!g || !wants_grad(ti)) return;
      auto& gt = TensorAccess::grad_of(*ti);
      for (std::size_t i = 0; i < ids_copy->size(); ++i) {
        double* dst = gt.data() + (std::size_t)(*ids_copy)[i] * dim;
        const double* src = g->data() + i * dim;
        for (std::size_t j = 0; j < dim; ++j) dst[j] += src[j];
      }
    };
  });
  return result;
}

Tensor Tensor::select(std::size_t axis, std::size_t index) const {
  auto ai = impl_;
  require(axis < ai->shape.size(),
          "select: axis " + std::to_string(axis) + " out of range for " +
              shape_str(ai->shape));
  require(index < ai->shape[axis],
          "select: index " + std::to_string(index) + " out of range for " +
              shape_str(ai->shape));
  const std::size_t n = ai->shape[axis];
  std::size_t inner = 1;
  for (std::size_t d = axis + 1; d < ai->shape.size(); ++d) {
    inner *= ai->shape[d];
  }
  const std::size_t outer = ai->values().size() / (n * inner);
  Shape out_shape;
  for (std::size_t d = 0; d < ai->shape.size(); ++d) {
    if (d != axis) out_shape.push_back(ai->shape[d]);
  }
  std::vector<double> out(outer * inner);
  for (std::size_t o = 0; o < outer; ++o) {
    const double* src = ai->values().data() + (o * n + index) * inner;
    std::copy(src, src + inner, out.data() + o * inner);
  }
  Tensor result = TensorAccess::make(std::move(out_shape), std::move(out));
  auto oi = TensorAccess::impl(result);
  TensorAccess::maybe_record({this}, result, [ai, oi, n, inner, outer,
                                              index] {
    return [ai, oi, n, inner, outer, index] {
      const auto* g = out_grad(oi);
      if (!g || !wants_grad(ai)) return;
      auto& ga = TensorAccess::grad_of(*ai);
      for (std::size_t o = 0; o < outer; ++o) {
        double* dst = ga.data() + (o * n + index) * inner;
        const double* src = g->data() + o * inner;
        for (std::size_t j = 0; j < inner; ++j) dst[j] += src[j];
      }
    };
  });
  return result;
}

Tensor Tensor::sum() const {
  auto ai = impl_;
  double total = 0.0;
  for (double v : ai->values()) total += v;
  check_finite("sum", {total});
  Tensor result = TensorAccess::make(Shape{1}, {total});
  auto oi = TensorAccess::impl(result);
  TensorAccess::maybe_record({this}, result, [ai, oi] {
    return [ai, oi] {
      const auto* g = out_grad(oi);
      if (!g || !wants_grad(ai)) return;
      auto& ga = TensorAccess::grad_of(*ai);
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += (*g)[0];
    };
  });
  return result;
}

Tensor Tensor::concat(const std::vector<Tensor>& parts, std::size_t axis) {
  require(!parts.empty(), "concat: no inputs");
  const Shape& first = parts[0].shape();
  require(axis < first.size(), "concat: axis " + std::to_string(axis) +
                                   " out of range for " + shape_str(first));
  std::size_t axis_total = 0;
  for (const Tensor& p : parts) {
    require(p.rank() == first.size(), "concat: rank mismatch");
    for (std::size_t d = 0; d < first.size(); ++d) {
      require(d == axis || p.shape()[d] == first[d],
              "concat: shapes differ outside axis: " + shape_str(p.shape()) +
                  " vs " + shape_str(first));
    }
    axis_total += p.shape()[axis];
  }
  Shape out_shape = first;
  out_shape[axis] = axis_total;
  std::size_t inner = 1;
  for (std::size_t d = axis + 1; d < first.size(); ++d) inner *= first[d];
  std::size_t outer = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= first[d];

  std::vector<double> out(shape_size(out_shape));
  const std::size_t out_row = axis_total * inner;
  std::vector<ImplPtr> impls;
  std::vector<std::size_t> offsets;  // element offset of each part within a row
  std::size_t at = 0;
  for (const Tensor& p : parts) {
    impls.push_back(TensorAccess::impl(p));
    offsets.push_back(at * inner);
    const std::size_t part_row = p.shape()[axis] * inner;
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy(p.values().data() + o * part_row,
                p.values().data() + (o + 1) * part_row,
                out.data() + o * out_row + at * inner);
    }
    at += p.shape()[axis];
  }
  Tensor result = TensorAccess::make(std::move(out_shape), std::move(out));
  auto oi = TensorAccess::impl(result);
  bool any_tracked = false;
  for (const Tensor& p : parts) any_tracked = any_tracked || p.tracked();
  if (GradTape::active() && any_tracked) {
    TensorAccess::record_direct(result, [impls, oi, offsets, outer, out_row] {
      const auto* g = out_grad(oi);
      if (!g) return;
      for (std::size_t pi = 0; pi < impls.size(); ++pi) {
        if (!wants_grad(impls[pi])) continue;
        auto& gp = TensorAccess::grad_of(*impls[pi]);
        const std::size_t part_row = gp.size() / outer;
        for (std::size_t o = 0; o < outer; ++o) {
          const double* src = g->data() + o * out_row + offsets[pi];
          double* dst = gp.data() + o * part_row;
          for (std::size_t j = 0; j < part_row; ++j) dst[j] += src[j];
        }
      }
    });
  }
  return result;
}

// ---------------- cross entropy ----------------

Tensor cross_entropy(const Tensor& logits, const std::vector<int>& targets,
                     int ignore_index, std::size_t* token_count) {
  auto li = TensorAccess::impl(logits);
  require(li->shape.size() == 2,
          "cross_entropy: logits must be [n, classes], got " +
              shape_str(li->shape));
  const std::size_t n = li->shape[0];
  const std::size_t v = li->shape[1];
  require(targets.size() == n, "cross_entropy: " + std::to_string(n) +
                                   " rows vs " +
                                   std::to_string(targets.size()) +
                                   " targets");
  std::size_t counted = 0;
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (targets[i] == ignore_index) continue;
    require(targets[i] >= 0 && (std::size_t)targets[i] < v,
            "cross_entropy: target id " + std::to_string(targets[i]) +
                " outside " + std::to_string(v) + " classes");
    const double* row = li->values().data() + i * v;
    double mx = row[0];
    for (std::size_t j = 1; j < v; ++j) mx = std::max(mx, row[j]);
    double lse = 0.0;
    for (std::size_t j = 0; j < v; ++j) lse += std::exp(row[j] - mx);
    lse = std::log(lse) + mx;
    total += lse - row[(std::size_t)targets[i]];
    ++counted;
  }
  require(counted > 0, "cross_entropy: every target equals the ignore index");
  if (token_count) *token_count = counted;
  const double mean = total / (double)counted;
  check_finite("cross_entropy", {mean});
  Tensor result = TensorAccess::make(Shape{1}, {mean});
  auto oi = TensorAccess::impl(result);
  auto tg = std::make_shared<std::vector<int>>(targets);
  TensorAccess::maybe_record(
      {&logits}, result, [li, oi, tg, ignore_index, n, v, counted] {
        return [li, oi, tg, ignore_index, n, v, counted] {
          const auto* g = out_grad(oi);
          if (!g || !wants_grad(li)) return;
          const double scale = (*g)[0] / (double)counted;
          auto& gl = TensorAccess::grad_of(*li);
          for (std::size_t i = 0; i < n; ++i) {
            if ((*tg)[i] == ignore_index) continue;
            const double* row = li->values().data() + i * v;
            double mx = row[0];
            for (std::size_t j = 1; j < v; ++j) mx = std::max(mx, row[j]);
            double sum = 0.0;
            for (std::size_t j = 0; j < v; ++j) sum += std::exp(row[j] - mx);
            for (std::size_t j = 0; j < v; ++j) {
              const double p = std::exp(row[j] - mx) / sum;
              gl[i * v + j] +=
                  scale * (p - (j == (std::size_t)(*tg)[i] ? 1.0 : 0.0));
            }
          }
        };
      });
  return result;
}

// ---------------- init helpers ----------------

double uniform01(std::mt19937_64& rng) {
  return (double)(rng() >> 11) * 0x1.0p-53;
}

double snap_to_f32(double v) { return (double)(float)v; }

Tensor xavier_uniform(Shape shape, std::mt19937_64& rng) {
  require(shape.size() == 2, "xavier_uniform: expects a [fan_in, fan_out] "
                             "matrix, got " + shape_str(shape));
  const double limit = std::sqrt(6.0 / (double)(shape[0] + shape[1]));
  return uniform_init(std::move(shape), -limit, limit, rng);
}

Tensor uniform_init(Shape shape, double lo, double hi, std::mt19937_64& rng) {
  std::vector<double> values(shape_size(shape));
  for (double& v : values) {
    v = snap_to_f32(lo + (hi - lo) * uniform01(rng));
  }
  return Tensor::from_values(std::move(shape), std::move(values), true);
}

}  // namespace codesumm
