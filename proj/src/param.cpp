#include "formnet/param.hpp"

namespace formnet {

Tensor ParameterStore::add(const std::string& name, std::vector<i64> shape, Init init, u64 seed,
                           double constant) {
  if (index_.count(name)) fail(cat("parameter '", name, "' registered twice"));
  Tensor t = Tensor::zeros(std::move(shape), /*requires_grad=*/true);
  switch (init) {
    case Init::Zeros:
      break;
    case Init::Ones:
      std::fill(t.values().begin(), t.values().end(), 1.0);
      break;
    case Init::Constant:
      std::fill(t.values().begin(), t.values().end(), constant);
      break;
    case Init::TruncNormal002: {
      Rng rng(mix_seed(seed, hash_string(name)));
      for (double& v : t.values()) v = rng.next_trunc_normal(0.02);
      break;
    }
  }
  round_storage(t.values());
  index_[name] = params_.size();
  params_.push_back(Parameter{name, t});
  return t;
}

Tensor& ParameterStore::at(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) fail(cat("unknown parameter '", name, "'"));
  return params_[it->second].tensor;
}

const Tensor& ParameterStore::at(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) fail(cat("unknown parameter '", name, "'"));
  return params_[it->second].tensor;
}

i64 ParameterStore::total_elements() const {
  i64 n = 0;
  for (const auto& p : params_) n += p.tensor.size();
  return n;
}

void ParameterStore::zero_grads() {
  for (auto& p : params_) p.tensor.zero_grad();
}

}  // namespace formnet
