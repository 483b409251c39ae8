#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include "czsl/error.hpp"

namespace czsl {

using idx_t = std::int64_t;

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

namespace detail {
struct TensorNode {
  std::vector<idx_t> shape;
  std::vector<double> values;
  std::vector<double> grad;  // empty until backward touches this node
  bool requires_grad = false;
};
}  // namespace detail

// Dense 64-bit tensor handle with value semantics over a shared node.
// Rank 2 covers everything in this codebase; a rank-0 tensor is a scalar.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::vector<idx_t> shape, bool requires_grad = false);
  static Tensor full(std::vector<idx_t> shape, double value,
                     bool requires_grad = false);
  static Tensor from(std::vector<idx_t> shape, std::vector<double> values,
                     bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const std::vector<idx_t>& shape() const;
  idx_t rows() const;
  idx_t cols() const;
  idx_t numel() const;

  const std::vector<double>& values() const;
  double item() const;  // requires numel() == 1
  double at(idx_t r, idx_t c) const;

  bool requires_grad() const;
  void set_requires_grad(bool v);

  bool has_grad() const;
  const std::vector<double>& grad() const;
  void clear_grad();

  // Direct value access for initialization and optimizer updates. Must not be
  // used on a tensor that participates in a live tape.
  std::vector<double>& raw_values();

  // Deep copy with no grad and no tape connection.
  Tensor detached_copy() const;

  bool same_node(const Tensor& other) const { return node_ == other.node_; }

  std::shared_ptr<detail::TensorNode> node() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<detail::TensorNode> n) : node_(std::move(n)) {}
  std::shared_ptr<detail::TensorNode> node_;
};

std::string shape_str(const std::vector<idx_t>& shape);

// Record of the forward pass: one backward closure per recorded primitive.
// Confined to a single thread; reset (or discarded) between training steps.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Seeds d(loss)/d(loss) = 1 and replays the recorded closures in reverse,
  // accumulating gradients on every reachable requires_grad tensor. A second
  // backward without reset() is rejected.
  void backward(const Tensor& loss);

  void reset();
  bool consumed() const { return consumed_; }
  std::size_t node_count() const { return nodes_.size(); }

  void push(std::function<void()> backward_fn) {
    nodes_.push_back(std::move(backward_fn));
  }

 private:
  std::vector<std::function<void()>> nodes_;
  bool consumed_ = false;
};

// Primitive ops. Each records its adjoint on the tape when `tape` is non-null
// and at least one input requires grad; with a null tape they are plain math.

Tensor add(Tape* tape, const Tensor& a, const Tensor& b);
Tensor mul(Tape* tape, const Tensor& a, const Tensor& b);
Tensor scale(Tape* tape, const Tensor& a, double c);
Tensor matmul(Tape* tape, const Tensor& a, const Tensor& b);
Tensor transpose(Tape* tape, const Tensor& a);
Tensor sum(Tape* tape, const Tensor& a);
Tensor slice_rows(Tape* tape, const Tensor& a, idx_t start, idx_t len);
Tensor concat_rows(Tape* tape, const std::vector<Tensor>& parts);
Tensor embedding_lookup(Tape* tape, const Tensor& table,
                        const std::vector<idx_t>& indices);
Tensor softmax_rows(Tape* tape, const Tensor& a);
Tensor l2_normalize_rows(Tape* tape, const Tensor& a);
Tensor layer_norm_rows(Tape* tape, const Tensor& x, const Tensor& gain,
                       const Tensor& bias, double eps);
Tensor gelu(Tape* tape, const Tensor& a);
Tensor cross_entropy(Tape* tape, const Tensor& logits,
                     const std::vector<idx_t>& targets);

}  // namespace czsl
