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

#include "ume/ops.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace ume {

namespace {

template <typename S>
using MatMap = Eigen::Map<RowMatrix<S>>;
template <typename S>
using ConstMatMap = Eigen::Map<const RowMatrix<S>>;

template <typename S>
ConstMatMap<S> as_matrix(const Array<S>& a, Index rows, Index cols) {
  return ConstMatMap<S>(a.data(), rows, cols);
}

template <typename S>
MatMap<S> as_matrix(Array<S>& a, Index rows, Index cols) {
  return MatMap<S>(a.data(), rows, cols);
}

// Leading-batch broadcasting: the smaller operand's shape must be a
// suffix of the larger one's. `outer` counts repetitions of the smaller.
struct BroadcastPlan {
  bool same = true;
  bool a_is_small = false;
  Index outer = 1;
  Index inner = 0;
};

template <typename S>
BroadcastPlan plan_broadcast(const char* kind, const Tensor<S>& a, const Tensor<S>& b) {
  if (a.shape() == b.shape()) return {true, false, 1, a.size()};
  auto is_suffix = [](const Shape& big, const Shape& small) {
    return !small.empty() && small.size() < big.size() &&
           std::equal(small.rbegin(), small.rend(), big.rbegin());
  };
  if (is_suffix(a.shape(), b.shape())) return {false, false, a.size() / b.size(), b.size()};
  if (is_suffix(b.shape(), a.shape())) return {false, true, b.size() / a.size(), a.size()};
  throw ShapeError(kind, {a.shape(), b.shape()}, "shapes are not broadcast-compatible");
}

template <typename S>
Array<S> tile(const Array<S>& small, Index outer) {
  return small.replicate(outer, 1);
}

template <typename S>
Array<S> fold(const Array<S>& big, Index outer, Index inner) {
  return as_matrix(big, outer, inner).colwise().sum().transpose().array();
}

void require_rank(const char* kind, const Shape& s, std::size_t rank) {
  if (s.size() != rank) {
    throw ShapeError(kind, {s}, "expected rank " + std::to_string(rank));
  }
}

int normalize_axis(const char* kind, const Shape& s, int axis) {
  const int r = static_cast<int>(s.size());
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r) throw ShapeError(kind, {s}, "axis " + std::to_string(axis) + " out of range");
  return axis;
}

// Splits a shape around `axis` into (outer, n, inner).
struct AxisSplit {
  Index outer = 1, n = 1, inner = 1;
};

AxisSplit split_axis(const Shape& s, int axis) {
  AxisSplit r;
  for (int i = 0; i < axis; ++i) r.outer *= s[i];
  r.n = s[axis];
  for (std::size_t i = axis + 1; i < s.size(); ++i) r.inner *= s[i];
  return r;
}

}  // namespace

template <typename S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b) {
  const BroadcastPlan p = plan_broadcast("add", a, b);
  Array<S> out;
  if (p.same) {
    out = a.value() + b.value();
  } else {
    const auto& big = p.a_is_small ? b : a;
    const auto& small = p.a_is_small ? a : b;
    out = big.value() + tile(small.value(), p.outer);
  }
  Shape shape = (p.same || !p.a_is_small) ? a.shape() : b.shape();
  return Tensor<S>::from_op("add", shape, std::move(out), {a, b}, [p](Node<S>& n) {
    auto& pa = *n.parents[0];
    auto& pb = *n.parents[1];
    if (p.same) {
      accumulate_grad(pa, n.grad);
      accumulate_grad(pb, n.grad);
    } else if (p.a_is_small) {
      accumulate_grad(pa, fold(n.grad, p.outer, p.inner));
      accumulate_grad(pb, n.grad);
    } else {
      accumulate_grad(pa, n.grad);
      accumulate_grad(pb, fold(n.grad, p.outer, p.inner));
    }
  });
}

template <typename S>
Tensor<S> sub(const Tensor<S>& a, const Tensor<S>& b) {
  const BroadcastPlan p = plan_broadcast("sub", a, b);
  Array<S> out;
  if (p.same) {
    out = a.value() - b.value();
  } else if (p.a_is_small) {
    out = tile(a.value(), p.outer) - b.value();
  } else {
    out = a.value() - tile(b.value(), p.outer);
  }
  Shape shape = (p.same || !p.a_is_small) ? a.shape() : b.shape();
  return Tensor<S>::from_op("sub", shape, std::move(out), {a, b}, [p](Node<S>& n) {
    auto& pa = *n.parents[0];
    auto& pb = *n.parents[1];
    const Array<S> neg = -n.grad;
    if (p.same) {
      accumulate_grad(pa, n.grad);
      accumulate_grad(pb, neg);
    } else if (p.a_is_small) {
      accumulate_grad(pa, fold(n.grad, p.outer, p.inner));
      accumulate_grad(pb, neg);
    } else {
      accumulate_grad(pa, n.grad);
      accumulate_grad(pb, fold(neg, p.outer, p.inner));
    }
  });
}

template <typename S>
Tensor<S> mul(const Tensor<S>& a, const Tensor<S>& b) {
  const BroadcastPlan p = plan_broadcast("mul", a, b);
  Array<S> av = p.same || !p.a_is_small ? a.value() : tile(a.value(), p.outer);
  Array<S> bv = p.same || p.a_is_small ? b.value() : tile(b.value(), p.outer);
  Array<S> out = av * bv;
  Shape shape = (p.same || !p.a_is_small) ? a.shape() : b.shape();
  return Tensor<S>::from_op(
      "mul", shape, std::move(out), {a, b},
      [p, av = std::move(av), bv = std::move(bv)](Node<S>& n) {
        auto& pa = *n.parents[0];
        auto& pb = *n.parents[1];
        if (pa.requires_grad) {
          Array<S> ga = n.grad * bv;
          accumulate_grad(pa, (!p.same && p.a_is_small) ? fold(ga, p.outer, p.inner) : ga);
        }
        if (pb.requires_grad) {
          Array<S> gb = n.grad * av;
          accumulate_grad(pb, (!p.same && !p.a_is_small) ? fold(gb, p.outer, p.inner) : gb);
        }
      });
}

template <typename S>
Tensor<S> scale(const Tensor<S>& x, S factor) {
  return Tensor<S>::from_op("scale", x.shape(), x.value() * factor, {x}, [factor](Node<S>& n) {
    accumulate_grad(*n.parents[0], n.grad * factor);
  });
}

template <typename S>
Tensor<S> sigmoid(const Tensor<S>& x) {
  const auto& v = x.value();
  Array<S> y = (v >= S(0)).select(S(1) / (S(1) + (-v).exp()), v.exp() / (S(1) + v.exp()));
  Array<S> saved = y;
  return Tensor<S>::from_op("sigmoid", x.shape(), std::move(y), {x}, [saved](Node<S>& n) {
    accumulate_grad(*n.parents[0], n.grad * saved * (S(1) - saved));
  });
}

template <typename S>
Tensor<S> relu(const Tensor<S>& x) {
  Array<S> mask = (x.value() > S(0)).template cast<S>();
  return Tensor<S>::from_op("relu", x.shape(), x.value() * mask, {x}, [mask](Node<S>& n) {
    accumulate_grad(*n.parents[0], n.grad * mask);
  });
}

template <typename S>
Tensor<S> prelu(const Tensor<S>& x, const Tensor<S>& slope) {
  const Index channels = x.rank() == 0 ? 1 : x.shape().back();
  if (slope.size() != 1 && slope.size() != channels) {
    throw ShapeError("prelu", {x.shape(), slope.shape()}, "slope must have 1 or last-dim entries");
  }
  const Index rows = x.size() / std::max<Index>(channels, 1);
  Array<S> a = slope.size() == 1 ? Array<S>::Constant(x.size(), slope.value()(0))
                                 : tile(slope.value(), rows);
  Array<S> pos = (x.value() > S(0)).template cast<S>();
  Array<S> y = pos * x.value() + (S(1) - pos) * a * x.value();
  Array<S> xv = x.value();
  return Tensor<S>::from_op(
      "prelu", x.shape(), std::move(y), {x, slope},
      [pos, a, xv, rows, channels, per_channel = slope.size() != 1](Node<S>& n) {
        accumulate_grad(*n.parents[0], n.grad * (pos + (S(1) - pos) * a));
        if (n.parents[1]->requires_grad) {
          Array<S> ga = n.grad * xv * (S(1) - pos);
          if (per_channel) {
            accumulate_grad(*n.parents[1], fold(ga, rows, channels));
          } else {
            accumulate_grad(*n.parents[1], Array<S>::Constant(1, ga.sum()));
          }
        }
      });
}

template <typename S>
Tensor<S> matmul(const Tensor<S>& a, const Tensor<S>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw ShapeError("matmul", {a.shape(), b.shape()}, "expected [m x k] * [k x n]");
  }
  const Index m = a.dim(0), k = a.dim(1), nn = b.dim(1);
  Array<S> out(m * nn);
  as_matrix(out, m, nn).noalias() = a.matrix() * b.matrix();
  return Tensor<S>::from_op("matmul", {m, nn}, std::move(out), {a, b}, [m, k, nn](Node<S>& n) {
    auto& pa = *n.parents[0];
    auto& pb = *n.parents[1];
    auto g = as_matrix(n.grad, m, nn);
    if (pa.requires_grad) {
      Array<S> ga(m * k);
      as_matrix(ga, m, k).noalias() = g * as_matrix(pb.value, k, nn).transpose();
      accumulate_grad(pa, ga);
    }
    if (pb.requires_grad) {
      Array<S> gb(k * nn);
      as_matrix(gb, k, nn).noalias() = as_matrix(pa.value, m, k).transpose() * g;
      accumulate_grad(pb, gb);
    }
  });
}

template <typename S>
Tensor<S> conv1d(const Tensor<S>& x, const Tensor<S>& weight, const Tensor<S>& bias,
                 ConvOptions opt) {
  const bool has_bias = bias.defined();
  std::vector<Shape> shapes{x.shape(), weight.shape()};
  if (has_bias) shapes.push_back(bias.shape());
  if (x.rank() != 2 || weight.rank() != 3) {
    throw ShapeError("conv1d", shapes, "expected x [T x Cin] and weight [Cout x Cin/groups x K]");
  }
  if (opt.stride < 1 || opt.dilation < 1 || opt.padding < 0) {
    throw ShapeError("conv1d", shapes, "stride and dilation must be positive, padding non-negative");
  }
  const Index t_in = x.dim(0), c_in = x.dim(1);
  const Index c_out = weight.dim(0), k = weight.dim(2);
  const bool depthwise = opt.groups != 1;
  if (depthwise && (opt.groups != c_in || c_out != c_in || weight.dim(1) != 1)) {
    throw ShapeError("conv1d", shapes, "only groups=1 or depthwise groups=channels are supported");
  }
  if (!depthwise && weight.dim(1) != c_in) {
    throw ShapeError("conv1d", shapes,
                     "input channels " + std::to_string(c_in) + " != weight in-channels " +
                         std::to_string(weight.dim(1)));
  }
  if (has_bias && bias.size() != c_out) {
    throw ShapeError("conv1d", shapes, "bias length must equal output channels");
  }
  const Index span = opt.dilation * (k - 1) + 1;
  const Index t_out = (t_in + 2 * opt.padding - span) / opt.stride + 1;
  if (t_in + 2 * opt.padding < span || t_out <= 0) {
    throw ShapeError("conv1d", shapes, "input too short for kernel");
  }
  const Index s = opt.stride, pad = opt.padding, dil = opt.dilation;
  auto src = [=](Index t, Index kk) { return t * s - pad + kk * dil; };

  Array<S> out(t_out * c_out);
  auto y = as_matrix(out, t_out, c_out);
  auto xm = x.matrix();
  std::vector<Tensor<S>> parents{x, weight};
  if (has_bias) parents.push_back(bias);

  if (depthwise) {
    auto w = as_matrix(weight.value(), c_in, k);  // [C x K]
    y.setZero();
    for (Index t = 0; t < t_out; ++t) {
      for (Index kk = 0; kk < k; ++kk) {
        const Index i = src(t, kk);
        if (i < 0 || i >= t_in) continue;
        y.row(t).array() += xm.row(i).array() * w.col(kk).transpose().array();
      }
    }
    if (has_bias) y.rowwise() += bias.matrix().row(0);
    return Tensor<S>::from_op(
        "conv1d", {t_out, c_out}, std::move(out), parents,
        [=](Node<S>& n) {
          auto g = as_matrix(n.grad, t_out, c_out);
          auto& px = *n.parents[0];
          auto& pw = *n.parents[1];
          auto xv = as_matrix(px.value, t_in, c_in);
          auto wv = as_matrix(pw.value, c_in, k);
          RowMatrix<S> gx = RowMatrix<S>::Zero(t_in, c_in);
          RowMatrix<S> gw = RowMatrix<S>::Zero(c_in, k);
          for (Index t = 0; t < t_out; ++t) {
            for (Index kk = 0; kk < k; ++kk) {
              const Index i = src(t, kk);
              if (i < 0 || i >= t_in) continue;
              gx.row(i).array() += g.row(t).array() * wv.col(kk).transpose().array();
              gw.col(kk).array() += (g.row(t).array() * xv.row(i).array()).transpose();
            }
          }
          accumulate_grad(px, Eigen::Map<Array<S>>(gx.data(), gx.size()));
          accumulate_grad(pw, Eigen::Map<Array<S>>(gw.data(), gw.size()));
          if (has_bias) accumulate_grad(*n.parents[2], fold(n.grad, t_out, c_out));
        });
  }

  // im2col: cols(t, kk*Cin + ci) = x(src(t, kk), ci).
  RowMatrix<S> cols = RowMatrix<S>::Zero(t_out, k * c_in);
  for (Index t = 0; t < t_out; ++t) {
    for (Index kk = 0; kk < k; ++kk) {
      const Index i = src(t, kk);
      if (i >= 0 && i < t_in) cols.block(t, kk * c_in, 1, c_in) = xm.row(i);
    }
  }
  // wmat(kk*Cin + ci, co) = weight[co, ci, kk].
  RowMatrix<S> wmat(k * c_in, c_out);
  const auto& wv = weight.value();
  for (Index co = 0; co < c_out; ++co)
    for (Index ci = 0; ci < c_in; ++ci)
      for (Index kk = 0; kk < k; ++kk) wmat(kk * c_in + ci, co) = wv((co * c_in + ci) * k + kk);
  y.noalias() = cols * wmat;
  if (has_bias) y.rowwise() += bias.matrix().row(0);

  return Tensor<S>::from_op(
      "conv1d", {t_out, c_out}, std::move(out), parents,
      [=, cols = std::move(cols), wmat = std::move(wmat)](Node<S>& n) {
        auto g = as_matrix(n.grad, t_out, c_out);
        auto& px = *n.parents[0];
        auto& pw = *n.parents[1];
        if (px.requires_grad) {
          RowMatrix<S> gcols = g * wmat.transpose();
          Array<S> gx = Array<S>::Zero(t_in * c_in);
          auto gxm = as_matrix(gx, t_in, c_in);
          for (Index t = 0; t < t_out; ++t) {
            for (Index kk = 0; kk < k; ++kk) {
              const Index i = src(t, kk);
              if (i >= 0 && i < t_in) gxm.row(i) += gcols.block(t, kk * c_in, 1, c_in);
            }
          }
          accumulate_grad(px, gx);
        }
        if (pw.requires_grad) {
          RowMatrix<S> gwmat = cols.transpose() * g;
          Array<S> gw(c_out * c_in * k);
          for (Index co = 0; co < c_out; ++co)
            for (Index ci = 0; ci < c_in; ++ci)
              for (Index kk = 0; kk < k; ++kk) gw((co * c_in + ci) * k + kk) = gwmat(kk * c_in + ci, co);
          accumulate_grad(pw, gw);
        }
        if (has_bias) accumulate_grad(*n.parents[2], fold(n.grad, t_out, c_out));
      });
}

template <typename S>
Tensor<S> conv_transpose1d(const Tensor<S>& x, const Tensor<S>& weight, const Tensor<S>& bias,
                           Index stride, Index padding) {
  const bool has_bias = bias.defined();
  std::vector<Shape> shapes{x.shape(), weight.shape()};
  if (has_bias) shapes.push_back(bias.shape());
  if (x.rank() != 2 || weight.rank() != 3 || weight.dim(0) != x.dim(1)) {
    throw ShapeError("conv_transpose1d", shapes, "expected x [T x Cin] and weight [Cin x Cout x K]");
  }
  if (stride < 1 || padding < 0) {
    throw ShapeError("conv_transpose1d", shapes, "stride must be positive, padding non-negative");
  }
  const Index t_in = x.dim(0), c_in = x.dim(1), c_out = weight.dim(1), k = weight.dim(2);
  if (has_bias && bias.size() != c_out) {
    throw ShapeError("conv_transpose1d", shapes, "bias length must equal output channels");
  }
  const Index t_out = (t_in - 1) * stride - 2 * padding + k;
  if (t_out <= 0) throw ShapeError("conv_transpose1d", shapes, "non-positive output length");

  // wmat(ci, kk*Cout + co) = weight[ci, co, kk].
  RowMatrix<S> wmat(c_in, k * c_out);
  const auto& wv = weight.value();
  for (Index ci = 0; ci < c_in; ++ci)
    for (Index co = 0; co < c_out; ++co)
      for (Index kk = 0; kk < k; ++kk) wmat(ci, kk * c_out + co) = wv((ci * c_out + co) * k + kk);
  RowMatrix<S> prod = x.matrix() * wmat;
  Array<S> out = Array<S>::Zero(t_out * c_out);
  auto y = as_matrix(out, t_out, c_out);
  for (Index t = 0; t < t_in; ++t) {
    for (Index kk = 0; kk < k; ++kk) {
      const Index o = t * stride + kk - padding;
      if (o >= 0 && o < t_out) y.row(o) += prod.block(t, kk * c_out, 1, c_out);
    }
  }
  if (has_bias) y.rowwise() += bias.matrix().row(0);
  std::vector<Tensor<S>> parents{x, weight};
  if (has_bias) parents.push_back(bias);

  return Tensor<S>::from_op(
      "conv_transpose1d", {t_out, c_out}, std::move(out), parents,
      [=, wmat = std::move(wmat)](Node<S>& n) {
        auto g = as_matrix(n.grad, t_out, c_out);
        RowMatrix<S> gcols = RowMatrix<S>::Zero(t_in, k * c_out);
        for (Index t = 0; t < t_in; ++t) {
          for (Index kk = 0; kk < k; ++kk) {
            const Index o = t * stride + kk - padding;
            if (o >= 0 && o < t_out) gcols.block(t, kk * c_out, 1, c_out) = g.row(o);
          }
        }
        auto& px = *n.parents[0];
        auto& pw = *n.parents[1];
        if (px.requires_grad) {
          Array<S> gx(t_in * c_in);
          as_matrix(gx, t_in, c_in).noalias() = gcols * wmat.transpose();
          accumulate_grad(px, gx);
        }
        if (pw.requires_grad) {
          RowMatrix<S> gwmat = as_matrix(px.value, t_in, c_in).transpose() * gcols;
          Array<S> gw(c_in * c_out * k);
          for (Index ci = 0; ci < c_in; ++ci)
            for (Index co = 0; co < c_out; ++co)
              for (Index kk = 0; kk < k; ++kk) gw((ci * c_out + co) * k + kk) = gwmat(ci, kk * c_out + co);
          accumulate_grad(pw, gw);
        }
        if (has_bias) accumulate_grad(*n.parents[2], fold(n.grad, t_out, c_out));
      });
}

template <typename S>
Tensor<S> layer_norm(const Tensor<S>& x, const Tensor<S>& gamma, const Tensor<S>& beta, S eps) {
  const Index d = x.rank() == 0 ? 1 : x.shape().back();
  if (gamma.size() != d || beta.size() != d) {
    throw ShapeError("layer_norm", {x.shape(), gamma.shape(), beta.shape()},
                     "scale and shift must match the last dim");
  }
  const Index rows = x.size() / d;
  auto xm = as_matrix(x.value(), rows, d);
  RowMatrix<S> xhat(rows, d);
  Array<S> inv_std(rows);
  for (Index r = 0; r < rows; ++r) {
    const S mu = xm.row(r).mean();
    const S var = (xm.row(r).array() - mu).square().mean();
    inv_std(r) = S(1) / std::sqrt(var + eps);
    xhat.row(r) = (xm.row(r).array() - mu) * inv_std(r);
  }
  Array<S> out(rows * d);
  auto y = as_matrix(out, rows, d);
  y = (xhat.array().rowwise() * gamma.matrix().row(0).array()).rowwise() +
      beta.matrix().row(0).array();
  return Tensor<S>::from_op(
      "layer_norm", x.shape(), std::move(out), {x, gamma, beta},
      [rows, d, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node<S>& n) {
        auto g = as_matrix(n.grad, rows, d);
        auto& px = *n.parents[0];
        auto& pg = *n.parents[1];
        auto& pb = *n.parents[2];
        if (px.requires_grad) {
          auto gam = as_matrix(pg.value, 1, d);
          RowMatrix<S> dxhat = g.array().rowwise() * gam.row(0).array();
          Array<S> gx(rows * d);
          auto gxm = as_matrix(gx, rows, d);
          for (Index r = 0; r < rows; ++r) {
            const S m1 = dxhat.row(r).mean();
            const S m2 = (dxhat.row(r).array() * xhat.row(r).array()).mean();
            gxm.row(r) = inv_std(r) * (dxhat.row(r).array() - m1 - xhat.row(r).array() * m2).matrix();
          }
          accumulate_grad(px, gx);
        }
        if (pg.requires_grad) {
          accumulate_grad(pg, (g.array() * xhat.array()).colwise().sum().transpose());
        }
        if (pb.requires_grad) accumulate_grad(pb, fold(n.grad, rows, d));
      });
}

namespace {

// Applies `fn(begin_index, stride, n)` to every 1-D lane along an axis.
template <typename Fn>
void for_each_lane(const AxisSplit& sp, Fn&& fn) {
  for (Index o = 0; o < sp.outer; ++o)
    for (Index i = 0; i < sp.inner; ++i) fn(o * sp.n * sp.inner + i, sp.inner);
}

}  // namespace

template <typename S>
Tensor<S> softmax(const Tensor<S>& x, int axis) {
  axis = normalize_axis("softmax", x.shape(), axis);
  const AxisSplit sp = split_axis(x.shape(), axis);
  Array<S> y(x.size());
  const auto& v = x.value();
  for_each_lane(sp, [&](Index base, Index stride) {
    S mx = -std::numeric_limits<S>::infinity();
    for (Index j = 0; j < sp.n; ++j) mx = std::max(mx, v(base + j * stride));
    S total = 0;
    for (Index j = 0; j < sp.n; ++j) total += (y(base + j * stride) = std::exp(v(base + j * stride) - mx));
    for (Index j = 0; j < sp.n; ++j) y(base + j * stride) /= total;
  });
  Array<S> saved = y;
  return Tensor<S>::from_op("softmax", x.shape(), std::move(y), {x}, [sp, saved](Node<S>& n) {
    Array<S> gx(saved.size());
    for_each_lane(sp, [&](Index base, Index stride) {
      S dot = 0;
      for (Index j = 0; j < sp.n; ++j) dot += n.grad(base + j * stride) * saved(base + j * stride);
      for (Index j = 0; j < sp.n; ++j) {
        const Index i = base + j * stride;
        gx(i) = saved(i) * (n.grad(i) - dot);
      }
    });
    accumulate_grad(*n.parents[0], gx);
  });
}

template <typename S>
Tensor<S> log_softmax(const Tensor<S>& x, int axis) {
  axis = normalize_axis("log_softmax", x.shape(), axis);
  const AxisSplit sp = split_axis(x.shape(), axis);
  Array<S> y(x.size());
  const auto& v = x.value();
  for_each_lane(sp, [&](Index base, Index stride) {
    S mx = -std::numeric_limits<S>::infinity();
    for (Index j = 0; j < sp.n; ++j) mx = std::max(mx, v(base + j * stride));
    S total = 0;
    for (Index j = 0; j < sp.n; ++j) total += std::exp(v(base + j * stride) - mx);
    const S lse = mx + std::log(total);
    for (Index j = 0; j < sp.n; ++j) y(base + j * stride) = v(base + j * stride) - lse;
  });
  Array<S> saved = y;
  return Tensor<S>::from_op("log_softmax", x.shape(), std::move(y), {x}, [sp, saved](Node<S>& n) {
    Array<S> gx(saved.size());
    for_each_lane(sp, [&](Index base, Index stride) {
      S total = 0;
      for (Index j = 0; j < sp.n; ++j) total += n.grad(base + j * stride);
      for (Index j = 0; j < sp.n; ++j) {
        const Index i = base + j * stride;
        gx(i) = n.grad(i) - std::exp(saved(i)) * total;
      }
    });
    accumulate_grad(*n.parents[0], gx);
  });
}

template <typename S>
Tensor<S> concat(const std::vector<Tensor<S>>& parts, int axis) {
  if (parts.empty()) throw ShapeError("concat", {}, "no operands");
  std::vector<Shape> shapes;
  for (const auto& p : parts) shapes.push_back(p.shape());
  axis = normalize_axis("concat", parts[0].shape(), axis);
  Shape out_shape = parts[0].shape();
  out_shape[axis] = 0;
  for (const auto& p : parts) {
    Shape a = p.shape(), b = parts[0].shape();
    if (a.size() != b.size()) throw ShapeError("concat", shapes, "rank mismatch");
    a[axis] = b[axis] = 0;
    if (a != b) throw ShapeError("concat", shapes, "non-concatenated dims differ");
    out_shape[axis] += p.shape()[axis];
  }
  const AxisSplit whole = split_axis(out_shape, axis);
  std::vector<Index> widths, offsets;
  Index off = 0;
  for (const auto& p : parts) {
    widths.push_back(p.shape()[axis] * whole.inner);
    offsets.push_back(off);
    off += widths.back();
  }
  const Index row = off;  // elements per outer index
  Array<S> out(shape_size(out_shape));
  for (std::size_t i = 0; i < parts.size(); ++i) {
    const auto& v = parts[i].value();
    for (Index o = 0; o < whole.outer; ++o)
      out.segment(o * row + offsets[i], widths[i]) = v.segment(o * widths[i], widths[i]);
  }
  return Tensor<S>::from_op("concat", out_shape, std::move(out), parts,
                            [whole, widths, offsets, row](Node<S>& n) {
                              for (std::size_t i = 0; i < n.parents.size(); ++i) {
                                if (!n.parents[i]->requires_grad) continue;
                                Array<S> g(whole.outer * widths[i]);
                                for (Index o = 0; o < whole.outer; ++o)
                                  g.segment(o * widths[i], widths[i]) =
                                      n.grad.segment(o * row + offsets[i], widths[i]);
                                accumulate_grad(*n.parents[i], g);
                              }
                            });
}

template <typename S>
Tensor<S> slice(const Tensor<S>& x, int axis, Index start, Index end) {
  axis = normalize_axis("slice", x.shape(), axis);
  const AxisSplit sp = split_axis(x.shape(), axis);
  if (start < 0 || end > sp.n || start >= end) {
    throw ShapeError("slice", {x.shape()},
                     "range [" + std::to_string(start) + "," + std::to_string(end) + ") out of bounds");
  }
  Shape out_shape = x.shape();
  out_shape[axis] = end - start;
  const Index width = (end - start) * sp.inner, row = sp.n * sp.inner, first = start * sp.inner;
  Array<S> out(sp.outer * width);
  for (Index o = 0; o < sp.outer; ++o) out.segment(o * width, width) = x.value().segment(o * row + first, width);
  const Index total = x.size();
  return Tensor<S>::from_op("slice", out_shape, std::move(out), {x},
                            [sp, width, row, first, total](Node<S>& n) {
                              Array<S> g = Array<S>::Zero(total);
                              for (Index o = 0; o < sp.outer; ++o)
                                g.segment(o * row + first, width) = n.grad.segment(o * width, width);
                              accumulate_grad(*n.parents[0], g);
                            });
}

template <typename S>
Tensor<S> reshape(const Tensor<S>& x, Shape shape) {
  if (shape_size(shape) != x.size()) {
    throw ShapeError("reshape", {x.shape(), shape}, "element count differs");
  }
  return Tensor<S>::from_op("reshape", std::move(shape), x.value(), {x},
                            [](Node<S>& n) { accumulate_grad(*n.parents[0], n.grad); });
}

template <typename S>
Tensor<S> transpose(const Tensor<S>& x) {
  require_rank("transpose", x.shape(), 2);
  const Index r = x.dim(0), c = x.dim(1);
  Array<S> out(x.size());
  as_matrix(out, c, r) = x.matrix().transpose();
  return Tensor<S>::from_op("transpose", {c, r}, std::move(out), {x}, [r, c](Node<S>& n) {
    Array<S> g(r * c);
    as_matrix(g, r, c) = as_matrix(n.grad, c, r).transpose();
    accumulate_grad(*n.parents[0], g);
  });
}

template <typename S>
Tensor<S> sum(const Tensor<S>& x) {
  const Index count = x.size();
  return Tensor<S>::from_op("sum", {1}, Array<S>::Constant(1, x.value().sum()), {x},
                            [count](Node<S>& n) {
                              accumulate_grad(*n.parents[0], Array<S>::Constant(count, n.grad(0)));
                            });
}

template <typename S>
Tensor<S> mean(const Tensor<S>& x) {
  const Index count = x.size();
  if (count == 0) throw ShapeError("mean", {x.shape()}, "empty tensor");
  return Tensor<S>::from_op("mean", {1}, Array<S>::Constant(1, x.value().mean()), {x},
                            [count](Node<S>& n) {
                              accumulate_grad(*n.parents[0],
                                              Array<S>::Constant(count, n.grad(0) / S(count)));
                            });
}

template <typename S>
Tensor<S> sum(const Tensor<S>& x, int axis) {
  require_rank("sum", x.shape(), 2);
  axis = normalize_axis("sum", x.shape(), axis);
  const Index r = x.dim(0), c = x.dim(1);
  Array<S> out = axis == 0 ? Array<S>(x.matrix().colwise().sum().transpose().array())
                           : Array<S>(x.matrix().rowwise().sum().array());
  return Tensor<S>::from_op("sum", {axis == 0 ? c : r}, std::move(out), {x}, [axis, r, c](Node<S>& n) {
    Array<S> g(r * c);
    auto gm = as_matrix(g, r, c);
    if (axis == 0) {
      gm.rowwise() = as_matrix(n.grad, 1, c).row(0);
    } else {
      gm.colwise() = as_matrix(n.grad, r, 1).col(0);
    }
    accumulate_grad(*n.parents[0], g);
  });
}

template <typename S>
Tensor<S> mean(const Tensor<S>& x, int axis) {
  require_rank("mean", x.shape(), 2);
  axis = normalize_axis("mean", x.shape(), axis);
  return scale(sum(x, axis), S(1) / S(x.dim(axis)));
}

template <typename S>
Tensor<S> upsample_repeat(const Tensor<S>& x, Index factor) {
  if (x.rank() < 1 || factor < 1) {
    throw ShapeError("upsample_repeat", {x.shape()}, "need rank >= 1 and factor >= 1");
  }
  const Index t = x.dim(0), w = x.size() / std::max<Index>(t, 1);
  Shape out_shape = x.shape();
  out_shape[0] = t * factor;
  Array<S> out(x.size() * factor);
  for (Index i = 0; i < t; ++i)
    for (Index j = 0; j < factor; ++j) out.segment((i * factor + j) * w, w) = x.value().segment(i * w, w);
  return Tensor<S>::from_op("upsample_repeat", out_shape, std::move(out), {x}, [t, w, factor](Node<S>& n) {
    Array<S> g = Array<S>::Zero(t * w);
    for (Index i = 0; i < t; ++i)
      for (Index j = 0; j < factor; ++j) g.segment(i * w, w) += n.grad.segment((i * factor + j) * w, w);
    accumulate_grad(*n.parents[0], g);
  });
}

template <typename S>
Tensor<S> embedding(const Tensor<S>& table, std::span<const Index> ids) {
  require_rank("embedding", table.shape(), 2);
  const Index vocab = table.dim(0), d = table.dim(1);
  std::vector<Index> rows(ids.begin(), ids.end());
  for (Index id : rows) {
    if (id < 0 || id >= vocab) {
      throw ShapeError("embedding", {table.shape()}, "id " + std::to_string(id) + " out of range");
    }
  }
  const Index n_ids = static_cast<Index>(rows.size());
  Array<S> out(n_ids * d);
  for (Index i = 0; i < n_ids; ++i) out.segment(i * d, d) = table.value().segment(rows[i] * d, d);
  return Tensor<S>::from_op("embedding", {n_ids, d}, std::move(out), {table},
                            [rows, vocab, d](Node<S>& n) {
                              Array<S> g = Array<S>::Zero(vocab * d);
                              for (std::size_t i = 0; i < rows.size(); ++i)
                                g.segment(rows[i] * d, d) += n.grad.segment(static_cast<Index>(i) * d, d);
                              accumulate_grad(*n.parents[0], g);
                            });
}

template <typename S>
Tensor<S> attention(const Tensor<S>& q, const Tensor<S>& k, const Tensor<S>& v, Index heads,
                    bool causal) {
  const std::vector<Shape> shapes{q.shape(), k.shape(), v.shape()};
  if (q.rank() != 2 || k.rank() != 2 || v.rank() != 2) throw ShapeError("attention", shapes, "expected rank-2 operands");
  const Index tq = q.dim(0), tk = k.dim(0), d = q.dim(1), dv = v.dim(1);
  if (k.dim(1) != d || v.dim(0) != tk) throw ShapeError("attention", shapes, "query/key/value dims disagree");
  if (heads < 1 || d % heads != 0 || dv % heads != 0) {
    throw ShapeError("attention", shapes, "head count must divide the feature dims");
  }
  const Index dh = d / heads, dvh = dv / heads;
  const S inv_scale = S(1) / std::sqrt(S(dh));
  auto qm = q.matrix();
  auto km = k.matrix();
  auto vm = v.matrix();
  std::vector<RowMatrix<S>> probs(static_cast<std::size_t>(heads));
  Array<S> out(tq * dv);
  auto y = as_matrix(out, tq, dv);
  for (Index h = 0; h < heads; ++h) {
    RowMatrix<S> scores = (qm.middleCols(h * dh, dh) * km.middleCols(h * dh, dh).transpose()) * inv_scale;
    for (Index i = 0; i < tq; ++i) {
      if (causal) {
        for (Index j = i + 1; j < tk; ++j) scores(i, j) = -std::numeric_limits<S>::infinity();
      }
      const S mx = scores.row(i).maxCoeff();
      scores.row(i) = (scores.row(i).array() - mx).exp().matrix();
      scores.row(i) /= scores.row(i).sum();
    }
    y.middleCols(h * dvh, dvh).noalias() = scores * vm.middleCols(h * dvh, dvh);
    probs[static_cast<std::size_t>(h)] = std::move(scores);
  }
  return Tensor<S>::from_op(
      "attention", {tq, dv}, std::move(out), {q, k, v},
      [=, probs = std::move(probs)](Node<S>& n) {
        auto g = as_matrix(n.grad, tq, dv);
        auto qv = as_matrix(n.parents[0]->value, tq, d);
        auto kv = as_matrix(n.parents[1]->value, tk, d);
        auto vv = as_matrix(n.parents[2]->value, tk, dv);
        RowMatrix<S> gq = RowMatrix<S>::Zero(tq, d), gk = RowMatrix<S>::Zero(tk, d),
                     gv = RowMatrix<S>::Zero(tk, dv);
        for (Index h = 0; h < heads; ++h) {
          const auto& a = probs[static_cast<std::size_t>(h)];
          auto go = g.middleCols(h * dvh, dvh);
          gv.middleCols(h * dvh, dvh).noalias() = a.transpose() * go;
          RowMatrix<S> ga = go * vv.middleCols(h * dvh, dvh).transpose();
          Eigen::Matrix<S, Eigen::Dynamic, 1> rowdot = (ga.array() * a.array()).rowwise().sum();
          RowMatrix<S> gs = (a.array() * (ga.array().colwise() - rowdot.array())).matrix() * inv_scale;
          gq.middleCols(h * dh, dh).noalias() = gs * kv.middleCols(h * dh, dh);
          gk.middleCols(h * dh, dh).noalias() = gs.transpose() * qv.middleCols(h * dh, dh);
        }
        accumulate_grad(*n.parents[0], Eigen::Map<Array<S>>(gq.data(), gq.size()));
        accumulate_grad(*n.parents[1], Eigen::Map<Array<S>>(gk.data(), gk.size()));
        accumulate_grad(*n.parents[2], Eigen::Map<Array<S>>(gv.data(), gv.size()));
      });
}

template <typename S>
Tensor<S> bce_with_logits(const Tensor<S>& logits, const Tensor<S>& targets) {
  if (logits.shape() != targets.shape()) {
    throw ShapeError("bce_with_logits", {logits.shape(), targets.shape()}, "shapes must match");
  }
  const auto& z = logits.value();
  const auto& t = targets.value();
  const S loss = (z.max(S(0)) - z * t + (S(1) + (-z.abs()).exp()).log()).sum();
  Array<S> tv = t;
  return Tensor<S>::from_op("bce_with_logits", {1}, Array<S>::Constant(1, loss), {logits, targets},
                            [tv](Node<S>& n) {
                              auto& pz = *n.parents[0];
                              const auto& zv = pz.value;
                              Array<S> sig = (zv >= S(0)).select(S(1) / (S(1) + (-zv).exp()),
                                                                 zv.exp() / (S(1) + zv.exp()));
                              accumulate_grad(pz, (sig - tv) * n.grad(0));
                            });
}

template <typename S>
Tensor<S> nll(const Tensor<S>& log_probs, std::span<const Index> targets) {
  require_rank("nll", log_probs.shape(), 2);
  const Index rows = log_probs.dim(0), classes = log_probs.dim(1);
  if (static_cast<Index>(targets.size()) != rows || rows == 0) {
    throw ShapeError("nll", {log_probs.shape()}, "need one target per row");
  }
  std::vector<Index> tgt(targets.begin(), targets.end());
  S total = 0;
  for (Index r = 0; r < rows; ++r) {
    if (tgt[r] < 0 || tgt[r] >= classes) throw ShapeError("nll", {log_probs.shape()}, "target out of range");
    total -= log_probs.value()(r * classes + tgt[r]);
  }
  return Tensor<S>::from_op("nll", {1}, Array<S>::Constant(1, total / S(rows)), {log_probs},
                            [tgt, rows, classes](Node<S>& n) {
                              Array<S> g = Array<S>::Zero(rows * classes);
                              for (Index r = 0; r < rows; ++r) g(r * classes + tgt[r]) = -n.grad(0) / S(rows);
                              accumulate_grad(*n.parents[0], g);
                            });
}

namespace {

template <typename T>
T attr_or(const Attrs& attrs, std::string_view key, T fallback) {
  auto it = attrs.find(key);
  if (it == attrs.end()) return fallback;
  if (const T* v = std::get_if<T>(&it->second)) return *v;
  if constexpr (std::is_same_v<T, double>) {
    if (const Index* i = std::get_if<Index>(&it->second)) return static_cast<double>(*i);
  }
  throw std::invalid_argument("attribute '" + std::string(key) + "' has the wrong type");
}

template <typename S>
const Tensor<S>& input(std::string_view kind, const std::vector<Tensor<S>>& in, std::size_t i) {
  if (i >= in.size() || !in[i].defined()) {
    throw std::invalid_argument(std::string(kind) + ": missing input " + std::to_string(i));
  }
  return in[i];
}

}  // namespace

const std::vector<std::string>& primitive_kinds() {
  static const std::vector<std::string> kinds{
      "add",       "sub",        "mul",          "scale",       "matmul",      "conv1d",
      "conv_transpose1d", "layer_norm", "softmax", "log_softmax", "sigmoid",     "prelu",
      "relu",      "concat",     "slice",        "reshape",     "transpose",   "sum",
      "mean",      "upsample_repeat", "embedding", "attention", "bce_with_logits", "nll"};
  return kinds;
}

template <typename S>
Tensor<S> apply_primitive(std::string_view kind, const std::vector<Tensor<S>>& in, const Attrs& attrs) {
  auto at = [&](std::size_t i) -> const Tensor<S>& { return input(kind, in, i); };
  auto opt = [&](std::size_t i) { return i < in.size() ? in[i] : Tensor<S>{}; };
  auto ids = [&]() { return attr_or(attrs, "ids", std::vector<Index>{}); };
  if (kind == "add") return add(at(0), at(1));
  if (kind == "sub") return sub(at(0), at(1));
  if (kind == "mul") return mul(at(0), at(1));
  if (kind == "scale") return scale(at(0), static_cast<S>(attr_or(attrs, "factor", 1.0)));
  if (kind == "matmul") return matmul(at(0), at(1));
  if (kind == "conv1d") {
    ConvOptions o{attr_or<Index>(attrs, "stride", 1), attr_or<Index>(attrs, "padding", 0),
                  attr_or<Index>(attrs, "dilation", 1), attr_or<Index>(attrs, "groups", 1)};
    return conv1d(at(0), at(1), opt(2), o);
  }
  if (kind == "conv_transpose1d") {
    return conv_transpose1d(at(0), at(1), opt(2), attr_or<Index>(attrs, "stride", 1),
                            attr_or<Index>(attrs, "padding", 0));
  }
  if (kind == "layer_norm") return layer_norm(at(0), at(1), at(2), static_cast<S>(attr_or(attrs, "eps", 1e-5)));
  if (kind == "softmax") return softmax(at(0), static_cast<int>(attr_or<Index>(attrs, "axis", -1)));
  if (kind == "log_softmax") return log_softmax(at(0), static_cast<int>(attr_or<Index>(attrs, "axis", -1)));
  if (kind == "sigmoid") return sigmoid(at(0));
  if (kind == "prelu") return prelu(at(0), at(1));
  if (kind == "relu") return relu(at(0));
  if (kind == "concat") return concat(in, static_cast<int>(attr_or<Index>(attrs, "axis", -1)));
  if (kind == "slice") {
    return slice(at(0), static_cast<int>(attr_or<Index>(attrs, "axis", 0)), attr_or<Index>(attrs, "start", 0),
                 attr_or<Index>(attrs, "end", 0));
  }
  if (kind == "reshape") return reshape(at(0), attr_or(attrs, "shape", Shape{}));
  if (kind == "transpose") return transpose(at(0));
  if (kind == "sum" || kind == "mean") {
    auto it = attrs.find("axis");
    const bool is_sum = kind == "sum";
    if (it == attrs.end()) return is_sum ? sum(at(0)) : mean(at(0));
    const int axis = static_cast<int>(attr_or<Index>(attrs, "axis", 0));
    return is_sum ? sum(at(0), axis) : mean(at(0), axis);
  }
  if (kind == "upsample_repeat") return upsample_repeat(at(0), attr_or<Index>(attrs, "factor", 1));
  if (kind == "embedding") {
    const auto v = ids();
    return embedding(at(0), std::span<const Index>(v));
  }
  if (kind == "attention") {
    return attention(at(0), at(1), at(2), attr_or<Index>(attrs, "heads", 1), attr_or(attrs, "causal", false));
  }
  if (kind == "bce_with_logits") return bce_with_logits(at(0), at(1));
  if (kind == "nll") {
    const auto v = ids();
    return nll(at(0), std::span<const Index>(v));
  }
  throw std::invalid_argument("unknown primitive kind '" + std::string(kind) + "'");
}

#define UME_INSTANTIATE_OPS(S)                                                                     \
  template Tensor<S> add(const Tensor<S>&, const Tensor<S>&);                                      \
  template Tensor<S> sub(const Tensor<S>&, const Tensor<S>&);                                      \
  template Tensor<S> mul(const Tensor<S>&, const Tensor<S>&);                                      \
  template Tensor<S> scale(const Tensor<S>&, S);                                                   \
  template Tensor<S> sigmoid(const Tensor<S>&);                                                    \
  template Tensor<S> relu(const Tensor<S>&);                                                       \
  template Tensor<S> prelu(const Tensor<S>&, const Tensor<S>&);                                    \
  template Tensor<S> matmul(const Tensor<S>&, const Tensor<S>&);                                   \
  template Tensor<S> conv1d(const Tensor<S>&, const Tensor<S>&, const Tensor<S>&, ConvOptions);    \
  template Tensor<S> conv_transpose1d(const Tensor<S>&, const Tensor<S>&, const Tensor<S>&, Index, \
                                      Index);                                                      \
  template Tensor<S> layer_norm(const Tensor<S>&, const Tensor<S>&, const Tensor<S>&, S);          \
  template Tensor<S> softmax(const Tensor<S>&, int);                                               \
  template Tensor<S> log_softmax(const Tensor<S>&, int);                                           \
  template Tensor<S> concat(const std::vector<Tensor<S>>&, int);                                   \
  template Tensor<S> slice(const Tensor<S>&, int, Index, Index);                                   \
  template Tensor<S> reshape(const Tensor<S>&, Shape);                                             \
  template Tensor<S> transpose(const Tensor<S>&);                                                  \
  template Tensor<S> sum(const Tensor<S>&);                                                        \
  template Tensor<S> mean(const Tensor<S>&);                                                       \
  template Tensor<S> sum(const Tensor<S>&, int);                                                   \
  template Tensor<S> mean(const Tensor<S>&, int);                                                  \
  template Tensor<S> upsample_repeat(const Tensor<S>&, Index);                                     \
  template Tensor<S> embedding(const Tensor<S>&, std::span<const Index>);                          \
  template Tensor<S> attention(const Tensor<S>&, const Tensor<S>&, const Tensor<S>&, Index, bool); \
  template Tensor<S> bce_with_logits(const Tensor<S>&, const Tensor<S>&);                          \
  template Tensor<S> nll(const Tensor<S>&, std::span<const Index>);                                \
  template Tensor<S> apply_primitive(std::string_view, const std::vector<Tensor<S>>&, const Attrs&);

UME_INSTANTIATE_OPS(float)
UME_INSTANTIATE_OPS(double)

#undef UME_INSTANTIATE_OPS

}  // namespace ume
