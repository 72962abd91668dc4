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

#include "support/primitive_cases.h"

namespace ume::testing {

Array<double> random_array(Index n, Rng& rng) {
  Array<double> a(n);
  for (Index i = 0; i < n; ++i) a(i) = rng.normal();
  return a;
}

namespace {

using T = Tensor<double>;
using Inputs = std::vector<T>;

Index pick(Rng& rng, Index lo, Index hi) { return rng.uniform_int(lo, hi); }

PrimitiveTrial elementwise(Rng& rng, const char* kind) {
  const Index r = pick(rng, 1, 4), c = pick(rng, 1, 5);
  const bool bcast = rng.uniform() < 0.5;
  const bool swap = rng.uniform() < 0.5;
  Shape big{r, c}, small{c};
  std::vector<Shape> shapes = !bcast ? std::vector<Shape>{big, big}
                                     : (swap ? std::vector<Shape>{small, big} : std::vector<Shape>{big, small});
  std::string k = kind;
  return {shapes, [k](const Inputs& in) { return apply_primitive<double>(k, in); }, k};
}

std::vector<PrimitiveCase> build_cases() {
  std::vector<PrimitiveCase> cases;
  for (const char* k : {"add", "sub", "mul"}) {
    cases.push_back({k, [k](Rng& rng) { return elementwise(rng, k); }});
  }
  cases.push_back({"scale", [](Rng& rng) {
                     const double f = rng.uniform(-2, 2);
                     return PrimitiveTrial{{{pick(rng, 1, 4), pick(rng, 1, 4)}},
                                           [f](const Inputs& in) { return scale(in[0], f); }, "scale"};
                   }});
  cases.push_back({"matmul", [](Rng& rng) {
                     const Index m = pick(rng, 1, 4), k = pick(rng, 1, 4), n = pick(rng, 1, 4);
                     return PrimitiveTrial{{{m, k}, {k, n}},
                                           [](const Inputs& in) { return matmul(in[0], in[1]); }, "matmul"};
                   }});
  cases.push_back({"conv1d", [](Rng& rng) {
                     const bool depthwise = rng.uniform() < 0.3;
                     const Index cin = pick(rng, 1, 3), cout = depthwise ? cin : pick(rng, 1, 3);
                     ConvOptions o{pick(rng, 1, 3), pick(rng, 0, 2), pick(rng, 1, 2), depthwise ? cin : 1};
                     const Index k = pick(rng, 1, 4);
                     const Index t = o.dilation * (k - 1) + 1 + pick(rng, 0, 6);
                     const bool bias = rng.uniform() < 0.5;
                     std::vector<Shape> shapes{{t, cin}, {cout, depthwise ? 1 : cin, k}};
                     if (bias) shapes.push_back({cout});
                     return PrimitiveTrial{shapes,
                                           [o, bias](const Inputs& in) {
                                             return conv1d(in[0], in[1], bias ? in[2] : T{}, o);
                                           },
                                           "conv1d"};
                   }});
  cases.push_back({"conv_transpose1d", [](Rng& rng) {
                     const Index cin = pick(rng, 1, 3), cout = pick(rng, 1, 3), k = pick(rng, 1, 5);
                     const Index stride = pick(rng, 1, 3), pad = pick(rng, 0, (k - 1) / 2);
                     const Index t = pick(rng, 1, 5);
                     const bool bias = rng.uniform() < 0.5;
                     std::vector<Shape> shapes{{t, cin}, {cin, cout, k}};
                     if (bias) shapes.push_back({cout});
                     return PrimitiveTrial{shapes,
                                           [=](const Inputs& in) {
                                             return conv_transpose1d(in[0], in[1], bias ? in[2] : T{}, stride, pad);
                                           },
                                           "conv_transpose1d"};
                   }});
  cases.push_back({"layer_norm", [](Rng& rng) {
                     const Index r = pick(rng, 1, 4), d = pick(rng, 2, 6);
                     return PrimitiveTrial{{{r, d}, {d}, {d}},
                                           [](const Inputs& in) { return layer_norm(in[0], in[1], in[2]); },
                                           "layer_norm"};
                   }});
  for (const char* k : {"softmax", "log_softmax"}) {
    cases.push_back({k, [k](Rng& rng) {
                       Shape s{pick(rng, 1, 3), pick(rng, 2, 4)};
                       if (rng.uniform() < 0.4) s.push_back(pick(rng, 1, 3));
                       const Index axis = pick(rng, 0, static_cast<Index>(s.size()) - 1);
                       std::string kind = k;
                       return PrimitiveTrial{{s},
                                             [kind, axis](const Inputs& in) {
                                               return apply_primitive<double>(kind, in, {{"axis", axis}});
                                             },
                                             kind};
                     }});
  }
  for (const char* k : {"sigmoid", "relu"}) {
    cases.push_back({k, [k](Rng& rng) {
                       std::string kind = k;
                       return PrimitiveTrial{{{pick(rng, 1, 4), pick(rng, 1, 4)}},
                                             [kind](const Inputs& in) { return apply_primitive<double>(kind, in); },
                                             kind};
                     }});
  }
  cases.push_back({"prelu", [](Rng& rng) {
                     const Index r = pick(rng, 1, 4), c = pick(rng, 1, 4);
                     const bool per_channel = rng.uniform() < 0.5;
                     return PrimitiveTrial{{{r, c}, {per_channel ? c : 1}},
                                           [](const Inputs& in) { return prelu(in[0], in[1]); }, "prelu"};
                   }});
  cases.push_back({"concat", [](Rng& rng) {
                     const Index parts = pick(rng, 2, 3);
                     const Index r = pick(rng, 1, 3), c = pick(rng, 1, 3);
                     const int axis = static_cast<int>(pick(rng, 0, 1));
                     std::vector<Shape> shapes;
                     for (Index p = 0; p < parts; ++p) {
                       Shape s{r, c};
                       s[axis] = pick(rng, 1, 3);
                       shapes.push_back(s);
                     }
                     return PrimitiveTrial{shapes, [axis](const Inputs& in) { return concat(in, axis); }, "concat"};
                   }});
  cases.push_back({"slice", [](Rng& rng) {
                     Shape s{pick(rng, 2, 5), pick(rng, 2, 5)};
                     const int axis = static_cast<int>(pick(rng, 0, 1));
                     const Index start = pick(rng, 0, s[axis] - 1), end = pick(rng, start + 1, s[axis]);
                     return PrimitiveTrial{{s},
                                           [=](const Inputs& in) { return slice(in[0], axis, start, end); },
                                           "slice"};
                   }});
  cases.push_back({"reshape", [](Rng& rng) {
                     const Index a = pick(rng, 1, 4), b = pick(rng, 1, 4);
                     return PrimitiveTrial{{{a, b}},
                                           [=](const Inputs& in) { return reshape(in[0], {b, a}); }, "reshape"};
                   }});
  cases.push_back({"transpose", [](Rng& rng) {
                     return PrimitiveTrial{{{pick(rng, 1, 4), pick(rng, 1, 4)}},
                                           [](const Inputs& in) { return transpose(in[0]); }, "transpose"};
                   }});
  for (const char* k : {"sum", "mean"}) {
    cases.push_back({k, [k](Rng& rng) {
                       const Index axis = pick(rng, -1, 1);  // -1: full reduction
                       std::string kind = k;
                       Attrs attrs;
                       if (axis >= 0) attrs["axis"] = axis;
                       return PrimitiveTrial{{{pick(rng, 1, 4), pick(rng, 1, 4)}},
                                             [kind, attrs](const Inputs& in) {
                                               return apply_primitive<double>(kind, in, attrs);
                                             },
                                             kind};
                     }});
  }
  cases.push_back({"upsample_repeat", [](Rng& rng) {
                     const Index f = pick(rng, 1, 3);
                     return PrimitiveTrial{{{pick(rng, 1, 4), pick(rng, 1, 3)}},
                                           [f](const Inputs& in) { return upsample_repeat(in[0], f); },
                                           "upsample_repeat"};
                   }});
  cases.push_back({"embedding", [](Rng& rng) {
                     const Index v = pick(rng, 2, 5), d = pick(rng, 1, 3), n = pick(rng, 1, 6);
                     std::vector<Index> ids;
                     for (Index i = 0; i < n; ++i) ids.push_back(pick(rng, 0, v - 1));
                     return PrimitiveTrial{{{v, d}},
                                           [ids](const Inputs& in) { return embedding(in[0], std::span<const Index>(ids)); },
                                           "embedding"};
                   }});
  cases.push_back({"attention", [](Rng& rng) {
                     const Index heads = pick(rng, 1, 2);
                     const Index d = heads * pick(rng, 1, 3), dv = heads * pick(rng, 1, 2);
                     const Index tq = pick(rng, 1, 4), tk = pick(rng, 1, 4);
                     const bool causal = rng.uniform() < 0.5;
                     return PrimitiveTrial{{{tq, d}, {tk, d}, {tk, dv}},
                                           [=](const Inputs& in) { return attention(in[0], in[1], in[2], heads, causal); },
                                           "attention"};
                   }});
  cases.push_back({"bce_with_logits", [](Rng& rng) {
                     const Index r = pick(rng, 1, 4), c = pick(rng, 1, 3);
                     Array<double> y(r * c);
                     for (Index i = 0; i < y.size(); ++i) y(i) = rng.uniform() < 0.5 ? 0.0 : 1.0;
                     return PrimitiveTrial{{{r, c}},
                                           [=](const Inputs& in) {
                                             return bce_with_logits(in[0], T::constant({r, c}, y));
                                           },
                                           "bce_with_logits"};
                   }});
  cases.push_back({"nll", [](Rng& rng) {
                     const Index r = pick(rng, 1, 4), c = pick(rng, 2, 5);
                     std::vector<Index> tgt;
                     for (Index i = 0; i < r; ++i) tgt.push_back(pick(rng, 0, c - 1));
                     return PrimitiveTrial{{{r, c}},
                                           [tgt](const Inputs& in) {
                                             return nll(log_softmax(in[0]), std::span<const Index>(tgt));
                                           },
                                           "nll"};
                   }});
  return cases;
}

}  // namespace

const std::vector<PrimitiveCase>& primitive_cases() {
  static const std::vector<PrimitiveCase> cases = build_cases();
  return cases;
}

GradCheckReport check_trial(const PrimitiveTrial& trial, std::uint64_t seed,
                            const GradCheckOptions& options) {
  ParameterStore<double> store;
  Rng rng(seed, 1);
  std::vector<Parameter<double>*> inputs;
  for (std::size_t i = 0; i < trial.input_shapes.size(); ++i) {
    auto& p = store.create("in" + std::to_string(i), trial.input_shapes[i], Init::kZeros, rng);
    p.value = random_array(p.value.size(), rng);
    inputs.push_back(&p);
  }
  auto builder = [&](Binding<double>& bind) {
    std::vector<T> in;
    for (auto* p : inputs) in.push_back(bind(p));
    T out = trial.apply(in);
    Rng proj(seed, 2);
    return sum(mul(out, T::constant(out.shape(), random_array(out.size(), proj))));
  };
  return grad_check(store, builder, options);
}

}  // namespace ume::testing
