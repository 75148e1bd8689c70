#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <vector>

namespace codesumm {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Dense row-major tensor of doubles. A Tensor is a cheap shared handle:
/// copies alias the same storage, which is what lets parameter lists,
/// optimizers and checkpoint writers all see the same buffers.
///
/// Forward operations record a backward closure onto the thread's active
/// GradTape (see TapeScope) whenever any input participates in a gradient
/// computation. Without an active tape every operation is a pure function,
/// so frozen-model inference is safe from many threads at once.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from_values(Shape shape, std::vector<double> values,
                            bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const;
  std::size_t size() const;
  bool requires_grad() const;
  /// True when this tensor lies on a recorded gradient path.
  bool tracked() const;

  std::vector<double>& values();
  const std::vector<double>& values() const;
  /// Value of a single-element tensor.
  double item() const;

  /// Gradient buffer, lazily allocated to zeros. Gradients accumulate
  /// across backward passes; callers zero them between optimizer steps.
  std::vector<double>& grad();
  bool has_grad() const;
  void zero_grad();

  /// Detached copy with its own storage (no grad, no tape history).
  Tensor detached_copy() const;

  // ---------------- forward operations ----------------

  /// Batched matrix product over the last two axes. Leading axes must be
  /// equal, or absent on one side (that side is reused for every slice).
  Tensor matmul(const Tensor& other) const;
  /// Swaps the last two axes.
  Tensor transpose() const;
  Tensor reshape(Shape new_shape) const;
  /// Elementwise add; rhs may instead match a trailing suffix of the
  /// lhs shape and is then broadcast across the leading axes.
  Tensor operator+(const Tensor& other) const;
  Tensor operator-(const Tensor& other) const;
  Tensor operator*(const Tensor& other) const;
  Tensor operator*(double scalar) const;
  Tensor softmax(std::size_t axis) const;
  /// Normalizes the last axis to zero mean / unit variance, then applies
  /// gain and bias (both shaped to the last axis).
  Tensor layer_norm(const Tensor& gain, const Tensor& bias, double eps) const;
  Tensor tanh() const;
  Tensor sigmoid() const;
  Tensor relu() const;
  /// Inverted-scaling dropout; p == 0 is the identity (evaluation mode).
  Tensor dropout(double p, std::mt19937_64& rng) const;
  /// Replaces positions where mask == 0 with `fill`. Mask has the same
  /// rank with every axis equal or 1; it is not differentiated.
  Tensor masked_fill(const Tensor& mask, double fill) const;
  /// Embedding lookup: gathers rows of this [rows, dim] table; the
  /// gradient scatter-adds back into the table.
  Tensor lookup(const std::vector<int>& ids, const Shape& ids_shape) const;
  /// Drops `axis` by picking one index along it; the gradient
  /// scatter-adds into that slice.
  Tensor select(std::size_t axis, std::size_t index) const;
  /// Sum of all elements, as a scalar tensor.
  Tensor sum() const;

  static Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);

  struct Impl;  // defined in tensor.cpp

 private:
  explicit Tensor(std::shared_ptr<Impl> impl) : impl_(std::move(impl)) {}
  std::shared_ptr<Impl> impl_;

  friend class GradTape;
  friend Tensor cross_entropy(const Tensor&, const std::vector<int>&, int,
                              std::size_t*);
  friend struct TensorAccess;
};

/// Fill value used for masked positions ahead of a softmax: the most
/// negative finite double, so exp(fill - max) underflows to exactly 0
/// without producing NaN.
double masked_fill_value();

/// Mean cross-entropy from logits [n, classes] against integer targets,
/// skipping rows whose target equals `ignore_index`. The number of counted
/// rows is written to `token_count` when non-null; zero counted rows is a
/// contract error.
Tensor cross_entropy(const Tensor& logits, const std::vector<int>& targets,
                     int ignore_index, std::size_t* token_count = nullptr);

/// Ordered record of forward operations. backward() seeds d(loss)/d(loss)=1
/// and replays every node exactly once in reverse order, accumulating
/// gradients into each tracked tensor.
class GradTape {
 public:
  GradTape() = default;
  GradTape(const GradTape&) = delete;
  GradTape& operator=(const GradTape&) = delete;

  void backward(const Tensor& loss);
  std::size_t node_count() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

  static GradTape* active();

 private:
  std::vector<std::function<void()>> nodes_;
  friend class TapeScope;
  friend struct TensorAccess;
};

/// RAII activation of a tape on the current thread.
class TapeScope {
 public:
  explicit TapeScope(GradTape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  GradTape* previous_;
};

// ---------------- initialization helpers ----------------

/// Uniform double in [0, 1) built from the top 53 bits of the generator,
/// identical across platforms.
double uniform01(std::mt19937_64& rng);

/// Rounds through float so the value survives a 32-bit checkpoint
/// round-trip unchanged.
double snap_to_f32(double v);

/// Glorot-uniform init for a [fan_in, fan_out] matrix, values snapped
/// to the float32 grid.
Tensor xavier_uniform(Shape shape, std::mt19937_64& rng);

/// Uniform init in [lo, hi), values snapped to the float32 grid.
Tensor uniform_init(Shape shape, double lo, double hi, std::mt19937_64& rng);

}  // namespace codesumm
