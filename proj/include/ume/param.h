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

#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "ume/rng.h"
#include "ume/tensor.h"

namespace ume {

/// Learnable array plus its AdamW state. Gradients are accumulated here by
/// Binding::flush after each backward pass.
template <typename Scalar>
struct Parameter {
  std::string name;
  Shape shape;
  Array<Scalar> value;
  Array<Scalar> grad;
  Array<Scalar> adam_m;
  Array<Scalar> adam_v;
  long step = 0;

  void zero_grad() { grad = Array<Scalar>::Zero(value.size()); }
};

enum class Init { kXavier, kZeros, kOnes, kConstant };

/// Ordered collection of named parameters. Registration order is the
/// checkpoint order.
template <typename Scalar>
class ParameterStore {
 public:
  /// Xavier draws use fan_in/fan_out inferred from the shape: [in x out]
  /// for matrices, [out x in x K] for conv kernels.
  Parameter<Scalar>& create(const std::string& name, Shape shape, Init init, Rng& rng,
                            Scalar constant = Scalar(0));

  Parameter<Scalar>* find(const std::string& name);
  const Parameter<Scalar>* find(const std::string& name) const;
  Parameter<Scalar>& at(const std::string& name);

  std::vector<Parameter<Scalar>*> all();
  std::vector<const Parameter<Scalar>*> all() const;
  std::vector<std::string> names() const;
  std::size_t size() const { return params_.size(); }
  Index total_elements() const;

  void zero_grad();

 private:
  std::vector<std::unique_ptr<Parameter<Scalar>>> params_;
  std::map<std::string, Parameter<Scalar>*, std::less<>> by_name_;
};

/// Per-graph view of parameters. Each forward pass binds parameters to
/// fresh leaf tensors; after backward, `flush` adds the leaf gradients into
/// the parameters. Bindings on different threads never share leaves.
template <typename Scalar>
class Binding {
 public:
  Tensor<Scalar> operator()(Parameter<Scalar>& p);
  Tensor<Scalar> operator()(Parameter<Scalar>* p) { return (*this)(*p); }

  /// Adds `factor` times every bound leaf's gradient into its parameter.
  void flush(Scalar factor = Scalar(1));

  /// Parameters touched by this graph, in first-use order.
  std::vector<Parameter<Scalar>*> touched() const;

 private:
  std::vector<std::pair<Parameter<Scalar>*, Tensor<Scalar>>> leaves_;
  std::map<const Parameter<Scalar>*, std::size_t> index_;
};

}  // namespace ume
