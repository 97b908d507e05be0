#pragma once

#include <functional>
#include <memory>

#include "formnet/common.hpp"

namespace formnet {

struct TensorNode;
using TensorNodePtr = std::shared_ptr<TensorNode>;

// One node of the reverse-mode tape. Ops allocate the output node, fill
// `value`, and (when any parent requires grad) attach `parents` plus a
// `backward` closure that reads this node's grad and accumulates into the
// parents' grads.
struct TensorNode {
  std::vector<i64> shape;
  std::vector<double> value;
  std::vector<double> grad;  // same size as value once touched, else empty
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<TensorNodePtr> parents;
  std::function<void(TensorNode&)> backward;

  i64 numel() const { return static_cast<i64>(value.size()); }

  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
  }
  void zero_grad() {
    if (!grad.empty()) std::fill(grad.begin(), grad.end(), 0.0);
  }
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(TensorNodePtr n) : node_(std::move(n)) {}

  static Tensor zeros(std::vector<i64> shape, bool requires_grad = false);
  static Tensor full(std::vector<i64> shape, double v);
  static Tensor from_values(std::vector<i64> shape, std::vector<double> values,
                            bool requires_grad = false);
  static Tensor scalar(double v);

  bool defined() const { return node_ != nullptr; }
  const std::vector<i64>& shape() const { return node_->shape; }
  int ndim() const { return static_cast<int>(node_->shape.size()); }
  i64 dim(int i) const { return node_->shape[static_cast<size_t>(i)]; }
  i64 size() const { return node_->numel(); }

  double* data() { return node_->value.data(); }
  const double* data() const { return node_->value.data(); }
  std::vector<double>& values() { return node_->value; }
  const std::vector<double>& values() const { return node_->value; }

  double item() const {
    if (size() != 1) fail(cat("item: tensor has shape ", shape_str(shape()), ", expected scalar"));
    return node_->value[0];
  }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }

  void ensure_grad() { node_->ensure_grad(); }
  void zero_grad() { node_->zero_grad(); }
  std::vector<double>& grad() { return node_->grad; }
  const std::vector<double>& grad() const { return node_->grad; }

  TensorNode* node() const { return node_.get(); }
  const TensorNodePtr& node_ptr() const { return node_; }

 private:
  TensorNodePtr node_;
};

// Global switch: when disabled, ops skip tape construction (inference mode).
bool grad_enabled();
void set_grad_enabled(bool on);

struct NoGradGuard {
  bool prev;
  NoGradGuard() : prev(grad_enabled()) { set_grad_enabled(false); }
  ~NoGradGuard() { set_grad_enabled(prev); }
};

// Reverse-mode sweep from a scalar loss. Every parameter reachable through
// recorded ops gets d(loss)/d(param) accumulated additively into its grad.
void backward(const Tensor& loss);

// Op plumbing shared by ops.cpp and module code that defines fused ops.
Tensor make_output(const char* op, std::vector<i64> shape);
void attach(Tensor& out, const char* op, std::vector<Tensor> parents,
            std::function<void(TensorNode&)> backward_fn);
// Rounds to storage precision and (in debug mode) checks finiteness.
void finish_forward(Tensor& out);

}  // namespace formnet
