#include "formnet/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

namespace formnet {

namespace {
bool g_grad_enabled = true;
}

bool grad_enabled() { return g_grad_enabled; }
void set_grad_enabled(bool on) { g_grad_enabled = on; }

Tensor Tensor::zeros(std::vector<i64> shape, bool requires_grad) {
  auto n = std::make_shared<TensorNode>();
  i64 numel = shape_numel(shape);
  if (numel < 0) fail(cat("zeros: invalid shape ", shape_str(shape)));
  n->shape = std::move(shape);
  n->value.assign(static_cast<size_t>(numel), 0.0);
  n->requires_grad = requires_grad;
  if (requires_grad) n->ensure_grad();
  return Tensor(std::move(n));
}

Tensor Tensor::full(std::vector<i64> shape, double v) {
  Tensor t = zeros(std::move(shape));
  std::fill(t.values().begin(), t.values().end(), round_storage_value(v));
  if (fp64_mode()) std::fill(t.values().begin(), t.values().end(), v);
  return t;
}

Tensor Tensor::from_values(std::vector<i64> shape, std::vector<double> values,
                           bool requires_grad) {
  i64 numel = shape_numel(shape);
  if (numel != static_cast<i64>(values.size()))
    fail(cat("from_values: shape ", shape_str(shape), " needs ", numel, " values, got ",
             values.size()));
  auto n = std::make_shared<TensorNode>();
  n->shape = std::move(shape);
  n->value = std::move(values);
  round_storage(n->value);
  n->requires_grad = requires_grad;
  if (requires_grad) n->ensure_grad();
  return Tensor(std::move(n));
}

Tensor Tensor::scalar(double v) { return from_values({1}, {v}); }

Tensor make_output(const char* op, std::vector<i64> shape) {
  Tensor out = Tensor::zeros(std::move(shape));
  out.node()->op = op;
  return out;
}

void attach(Tensor& out, const char* op, std::vector<Tensor> parents,
            std::function<void(TensorNode&)> backward_fn) {
  out.node()->op = op;
  if (!g_grad_enabled) return;
  bool needs = false;
  for (const Tensor& p : parents)
    if (p.requires_grad()) needs = true;
  if (!needs) return;
  out.node()->requires_grad = true;
  auto& ps = out.node()->parents;
  ps.reserve(parents.size());
  for (Tensor& p : parents) ps.push_back(p.node_ptr());
  out.node()->backward = std::move(backward_fn);
}

void finish_forward(Tensor& out) {
  round_storage(out.values());
  if (debug_checks()) {
    for (double v : out.values())
      if (!std::isfinite(v))
        fail(cat("non-finite value after op '", out.node()->op, "' with shape ",
                 shape_str(out.shape())));
  }
}

void backward(const Tensor& loss) {
  if (!loss.defined() || loss.size() != 1)
    fail(cat("backward: loss must be a scalar, got shape ",
             loss.defined() ? shape_str(loss.shape()) : std::string("<undefined>")));
  if (!loss.requires_grad()) return;  // loss independent of all parameters

  // Iterative post-order DFS over parents, then run backwards in reverse
  // topological order so each node's grad is complete before its backward.
  std::vector<TensorNode*> order;
  std::unordered_set<TensorNode*> seen;
  struct Frame {
    TensorNode* n;
    size_t next_parent;
  };
  std::vector<Frame> stack;
  stack.push_back({loss.node(), 0});
  seen.insert(loss.node());
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next_parent < f.n->parents.size()) {
      TensorNode* p = f.n->parents[f.next_parent++].get();
      if (p->requires_grad && !seen.count(p)) {
        seen.insert(p);
        stack.push_back({p, 0});
      }
    } else {
      order.push_back(f.n);
      stack.pop_back();
    }
  }

  loss.node()->ensure_grad();
  loss.node()->grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorNode* n = *it;
    if (!n->backward) continue;
    for (auto& p : n->parents)
      if (p->requires_grad) p->ensure_grad();
    n->backward(*n);
  }
}

}  // namespace formnet
