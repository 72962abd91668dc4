// Copyright 2026 The UME Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "ume/param.h"

#include <cmath>
#include <stdexcept>

namespace ume {

template <typename S>
Parameter<S>& ParameterStore<S>::create(const std::string& name, Shape shape, Init init, Rng& rng,
                                        S constant) {
  if (by_name_.count(name)) throw std::invalid_argument("duplicate parameter name '" + name + "'");
  auto p = std::make_unique<Parameter<S>>();
  p->name = name;
  p->shape = shape;
  const Index n = shape_size(shape);
  switch (init) {
    case Init::kZeros:
      p->value = Array<S>::Zero(n);
      break;
    case Init::kOnes:
      p->value = Array<S>::Ones(n);
      break;
    case Init::kConstant:
      p->value = Array<S>::Constant(n, constant);
      break;
    case Init::kXavier: {
      double fan_in = 1, fan_out = 1;
      if (shape.size() == 2) {
        fan_in = static_cast<double>(shape[0]);
        fan_out = static_cast<double>(shape[1]);
      } else if (shape.size() == 3) {
        fan_in = static_cast<double>(shape[1] * shape[2]);
        fan_out = static_cast<double>(shape[0] * shape[2]);
      } else {
        fan_in = fan_out = static_cast<double>(n);
      }
      const double a = std::sqrt(6.0 / (fan_in + fan_out));
      p->value.resize(n);
      for (Index i = 0; i < n; ++i) p->value(i) = static_cast<S>(rng.uniform(-a, a));
      break;
    }
  }
  p->grad = Array<S>::Zero(n);
  p->adam_m = Array<S>::Zero(n);
  p->adam_v = Array<S>::Zero(n);
  Parameter<S>& ref = *p;
  by_name_[name] = p.get();
  params_.push_back(std::move(p));
  return ref;
}

template <typename S>
Parameter<S>* ParameterStore<S>::find(const std::string& name) {
  auto it = by_name_.find(name);
  return it == by_name_.end() ? nullptr : it->second;
}

template <typename S>
const Parameter<S>* ParameterStore<S>::find(const std::string& name) const {
  auto it = by_name_.find(name);
  return it == by_name_.end() ? nullptr : it->second;
}

template <typename S>
Parameter<S>& ParameterStore<S>::at(const std::string& name) {
  if (auto* p = find(name)) return *p;
  throw std::out_of_range("no parameter named '" + name + "'");
}

template <typename S>
std::vector<Parameter<S>*> ParameterStore<S>::all() {
  std::vector<Parameter<S>*> out;
  for (auto& p : params_) out.push_back(p.get());
  return out;
}

template <typename S>
std::vector<const Parameter<S>*> ParameterStore<S>::all() const {
  std::vector<const Parameter<S>*> out;
  for (const auto& p : params_) out.push_back(p.get());
  return out;
}

template <typename S>
std::vector<std::string> ParameterStore<S>::names() const {
  std::vector<std::string> out;
  for (const auto& p : params_) out.push_back(p->name);
  return out;
}

template <typename S>
Index ParameterStore<S>::total_elements() const {
  Index n = 0;
  for (const auto& p : params_) n += p->value.size();
  return n;
}

template <typename S>
void ParameterStore<S>::zero_grad() {
  for (auto& p : params_) p->zero_grad();
}

template <typename S>
Tensor<S> Binding<S>::operator()(Parameter<S>& p) {
  auto it = index_.find(&p);
  if (it != index_.end()) return leaves_[it->second].second;
  Tensor<S> leaf = Tensor<S>::leaf(p.shape, p.value, true);
  index_[&p] = leaves_.size();
  leaves_.emplace_back(&p, leaf);
  return leaf;
}

template <typename S>
void Binding<S>::flush(S factor) {
  for (auto& [param, leaf] : leaves_) {
    if (!leaf.has_grad()) continue;
    if (param->grad.size() != param->value.size()) param->zero_grad();
    param->grad += factor * leaf.node()->grad;
  }
}

template <typename S>
std::vector<Parameter<S>*> Binding<S>::touched() const {
  std::vector<Parameter<S>*> out;
  for (const auto& [param, leaf] : leaves_) out.push_back(param);
  return out;
}

template class ParameterStore<float>;
template class ParameterStore<double>;
template class Binding<float>;
template class Binding<double>;

}  // namespace ume
