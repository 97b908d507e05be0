#pragma once

#include <string>
#include <unordered_map>

#include "formnet/tensor.hpp"

namespace formnet {

enum class Init { TruncNormal002, Zeros, Ones, Constant };

struct Parameter {
  std::string name;
  Tensor tensor;
};

// Ordered parameter registry. Initialization is a pure function of
// (name, seed), so construction order cannot change values and two models
// built from the same config and seed are bit-identical.
class ParameterStore {
 public:
  Tensor add(const std::string& name, std::vector<i64> shape, Init init, u64 seed,
             double constant = 0.0);

  bool contains(const std::string& name) const { return index_.count(name) > 0; }
  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;

  size_t size() const { return params_.size(); }
  Parameter& operator[](size_t i) { return params_[i]; }
  const Parameter& operator[](size_t i) const { return params_[i]; }

  i64 total_elements() const;
  void zero_grads();

 private:
  std::vector<Parameter> params_;
  std::unordered_map<std::string, size_t> index_;
};

}  // namespace formnet
