/* Copyright 2026 The ACNV Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include "acnv/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace acnv {

namespace {

template <typename Scalar>
using ColMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

[[noreturn]] void fail(const std::string& op, const std::string& what) {
  throw std::invalid_argument(op + ": " + what);
}

template <typename Scalar>
void require_rank(const Tensor<Scalar>& t, int rank, const char* op, const char* name) {
  if (!t.defined()) fail(op, std::string(name) + " is undefined");
  if (t.ndim() != rank) {
    fail(op, std::string(name) + " must be " + std::to_string(rank) + "-d, got " +
                 to_string(t.shape()));
  }
}

template <typename Scalar>
void require_same_shape(const Tensor<Scalar>& a, const Tensor<Scalar>& b, const char* op) {
  if (a.shape() != b.shape()) {
    fail(op, "shape mismatch " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  }
}

// Output positions ox whose tap ox*stride - pad + k lands inside [0, extent).
struct TapRange {
  Index lo;
  Index hi;  // exclusive
};

TapRange valid_taps(Index out, Index extent, Index stride, Index pad, Index k) {
  // ox*stride >= pad - k  and  ox*stride <= extent - 1 + pad - k
  const Index a = pad - k;
  const Index b = extent - 1 + pad - k;
  Index lo = a <= 0 ? 0 : (a + stride - 1) / stride;
  Index hi = b < 0 ? 0 : b / stride + 1;
  lo = std::min(lo, out);
  hi = std::clamp(hi, lo, out);
  return {lo, hi};
}

struct ConvGeometry {
  Index cin, h, w, kh, kw, ho, wo, sh, sw;
  Padding2d pad;

  Index patch() const { return cin * kh * kw; }
  Index positions() const { return ho * wo; }
  bool pointwise() const {
    return kh == 1 && kw == 1 && sh == 1 && sw == 1 && pad == Padding2d{};
  }
};

// Column (c, i, j) of `cols` holds the input sample seen by tap (i, j) of
// channel c at every output position, so cols * W is the convolution.
template <typename Scalar>
void im2col(const Scalar* x, const ConvGeometry& g, Scalar* cols) {
  const Index hw = g.positions();
  for (Index c = 0; c < g.cin; ++c) {
    const Scalar* xc = x + c * g.h * g.w;
    for (Index i = 0; i < g.kh; ++i) {
      const TapRange rows = valid_taps(g.ho, g.h, g.sh, g.pad.top, i);
      for (Index j = 0; j < g.kw; ++j) {
        const TapRange cols_r = valid_taps(g.wo, g.w, g.sw, g.pad.left, j);
        Scalar* col = cols + ((c * g.kh + i) * g.kw + j) * hw;
        std::fill(col, col + rows.lo * g.wo, Scalar(0));
        for (Index oy = rows.lo; oy < rows.hi; ++oy) {
          const Scalar* xr = xc + (oy * g.sh - g.pad.top + i) * g.w - g.pad.left + j;
          Scalar* out = col + oy * g.wo;
          std::fill(out, out + cols_r.lo, Scalar(0));
          if (g.sw == 1) {
            std::copy(xr + cols_r.lo, xr + cols_r.hi, out + cols_r.lo);
          } else {
            for (Index ox = cols_r.lo; ox < cols_r.hi; ++ox) out[ox] = xr[ox * g.sw];
          }
          std::fill(out + cols_r.hi, out + g.wo, Scalar(0));
        }
        std::fill(col + rows.hi * g.wo, col + hw, Scalar(0));
      }
    }
  }
}

template <typename Scalar>
void col2im(const Scalar* cols, const ConvGeometry& g, Scalar* dx) {
  const Index hw = g.positions();
  for (Index c = 0; c < g.cin; ++c) {
    Scalar* xc = dx + c * g.h * g.w;
    for (Index i = 0; i < g.kh; ++i) {
      const TapRange rows = valid_taps(g.ho, g.h, g.sh, g.pad.top, i);
      for (Index j = 0; j < g.kw; ++j) {
        const TapRange cols_r = valid_taps(g.wo, g.w, g.sw, g.pad.left, j);
        const Scalar* col = cols + ((c * g.kh + i) * g.kw + j) * hw;
        for (Index oy = rows.lo; oy < rows.hi; ++oy) {
          Scalar* xr = xc + (oy * g.sh - g.pad.top + i) * g.w - g.pad.left + j;
          const Scalar* in = col + oy * g.wo;
          for (Index ox = cols_r.lo; ox < cols_r.hi; ++ox) xr[ox * g.sw] += in[ox];
        }
      }
    }
  }
}

}  // namespace

template <typename Scalar>
Tensor<Scalar> conv2d(const Tensor<Scalar>& input, const Tensor<Scalar>& weight,
                      const Tensor<Scalar>& bias, const Conv2dOptions& options) {
  using Node = detail::Node<Scalar>;
  require_rank(input, 4, "conv2d", "input");
  require_rank(weight, 4, "conv2d", "weight");
  if (options.stride_h < 1 || options.stride_w < 1) fail("conv2d", "strides must be >= 1");
  const Padding2d& pad = options.padding;
  if (pad.top < 0 || pad.bottom < 0 || pad.left < 0 || pad.right < 0) {
    fail("conv2d", "negative padding");
  }
  if (input.dim(1) != weight.dim(1)) {
    fail("conv2d", "input channels " + std::to_string(input.dim(1)) + " of " +
                       to_string(input.shape()) + " do not match weight " +
                       to_string(weight.shape()));
  }
  const Index cout = weight.dim(0);
  if (bias.defined() && (bias.ndim() != 1 || bias.dim(0) != cout)) {
    fail("conv2d", "bias " + to_string(bias.shape()) + " does not match " +
                       std::to_string(cout) + " output channels");
  }
  ConvGeometry g{input.dim(1), input.dim(2), input.dim(3), weight.dim(2), weight.dim(3),
                 0,            0,            options.stride_h, options.stride_w, pad};
  const Index padded_h = g.h + pad.top + pad.bottom;
  const Index padded_w = g.w + pad.left + pad.right;
  if (g.kh > padded_h || g.kw > padded_w) {
    fail("conv2d", "kernel " + to_string(weight.shape()) + " larger than padded input " +
                       to_string(input.shape()));
  }
  g.ho = (padded_h - g.kh) / g.sh + 1;
  g.wo = (padded_w - g.kw) / g.sw + 1;

  const Index batch = input.dim(0);
  const Index hw = g.positions();
  const Index k = g.patch();
  typename Node::Array out(batch * cout * hw);

  Eigen::Map<const ColMatrix<Scalar>> wm(weight.data(), k, cout);
  ColMatrix<Scalar> cols;
  if (!g.pointwise()) cols.resize(hw, k);
  for (Index b = 0; b < batch; ++b) {
    Eigen::Map<ColMatrix<Scalar>> y(out.data() + b * cout * hw, hw, cout);
    if (g.pointwise()) {
      Eigen::Map<const ColMatrix<Scalar>> x(input.data() + b * g.cin * hw, hw, g.cin);
      y.noalias() = x * wm;
    } else {
      im2col(input.data() + b * g.cin * g.h * g.w, g, cols.data());
      y.noalias() = cols * wm;
    }
    if (bias.defined()) {
      y.rowwise() += Eigen::Map<const Eigen::Matrix<Scalar, 1, Eigen::Dynamic>>(bias.data(), cout);
    }
  }

  auto in_node = input.node();
  auto w_node = weight.node();
  auto b_node = bias.defined() ? bias.node() : nullptr;
  std::vector<Tensor<Scalar>> inputs{input, weight};
  if (bias.defined()) inputs.push_back(bias);
  return detail::make_result<Scalar>(
      {batch, cout, g.ho, g.wo}, std::move(out), std::move(inputs),
      [in_node, w_node, b_node, g, batch, cout](Node& self) {
        const Index hw = g.positions();
        const Index k = g.patch();
        const Index in_plane = g.cin * g.h * g.w;
        Eigen::Map<const ColMatrix<Scalar>> wm(w_node->value.data(), k, cout);
        const bool need_w = w_node->requires_grad;
        const bool need_b = b_node && b_node->requires_grad;
        const bool need_x = in_node->requires_grad;
        if (need_w) w_node->ensure_grad();
        if (need_b) b_node->ensure_grad();
        if (need_x) in_node->ensure_grad();
        ColMatrix<Scalar> cols;
        if (!g.pointwise()) cols.resize(hw, k);
        for (Index b = 0; b < batch; ++b) {
          Eigen::Map<const ColMatrix<Scalar>> dy(self.grad.data() + b * cout * hw, hw, cout);
          if (need_b) {
            Eigen::Map<Eigen::Matrix<Scalar, 1, Eigen::Dynamic>>(b_node->grad.data(), cout) +=
                dy.colwise().sum();
          }
          if (g.pointwise()) {
            Eigen::Map<const ColMatrix<Scalar>> x(in_node->value.data() + b * in_plane, hw, g.cin);
            if (need_w) {
              Eigen::Map<ColMatrix<Scalar>>(w_node->grad.data(), k, cout).noalias() +=
                  x.transpose() * dy;
            }
            if (need_x) {
              Eigen::Map<ColMatrix<Scalar>>(in_node->grad.data() + b * in_plane, hw, g.cin)
                  .noalias() += dy * wm.transpose();
            }
            continue;
          }
          if (need_w) {
            im2col(in_node->value.data() + b * in_plane, g, cols.data());
            Eigen::Map<ColMatrix<Scalar>>(w_node->grad.data(), k, cout).noalias() +=
                cols.transpose() * dy;
          }
          if (need_x) {
            cols.noalias() = dy * wm.transpose();
            col2im(cols.data(), g, in_node->grad.data() + b * in_plane);
          }
        }
      });
}

template <typename Scalar>
Tensor<Scalar> pool2d(const Tensor<Scalar>& input, PoolKind kind, const Pool2dOptions& o) {
  using Node = detail::Node<Scalar>;
  require_rank(input, 4, "pool2d", "input");
  if (o.kernel_h < 1 || o.kernel_w < 1 || o.stride_h < 1 || o.stride_w < 1) {
    fail("pool2d", "kernel and stride must be >= 1");
  }
  const Padding2d& pad = o.padding;
  if (pad.top >= o.kernel_h || pad.bottom >= o.kernel_h || pad.left >= o.kernel_w ||
      pad.right >= o.kernel_w || pad.top < 0 || pad.bottom < 0 || pad.left < 0 || pad.right < 0) {
    fail("pool2d", "padding must be in [0, kernel)");
  }
  const Index batch = input.dim(0), channels = input.dim(1), h = input.dim(2), w = input.dim(3);
  const Index padded_h = h + pad.top + pad.bottom;
  const Index padded_w = w + pad.left + pad.right;
  if (o.kernel_h > padded_h || o.kernel_w > padded_w || h == 0 || w == 0) {
    fail("pool2d", "zero-extent output for input " + to_string(input.shape()));
  }
  const Index ho = (padded_h - o.kernel_h) / o.stride_h + 1;
  const Index wo = (padded_w - o.kernel_w) / o.stride_w + 1;
  const Index planes = batch * channels;
  typename Node::Array out(planes * ho * wo);
  // For max pooling: flat input offset within the plane of each winner.
  std::vector<Index> argmax;
  if (kind == PoolKind::kMax) argmax.resize(out.size());
  const Scalar inv_area = Scalar(1) / Scalar(o.kernel_h * o.kernel_w);

  for (Index p = 0; p < planes; ++p) {
    const Scalar* x = input.data() + p * h * w;
    for (Index oy = 0; oy < ho; ++oy) {
      const Index y0 = oy * o.stride_h - pad.top;
      for (Index ox = 0; ox < wo; ++ox) {
        const Index x0 = ox * o.stride_w - pad.left;
        const Index dst = (p * ho + oy) * wo + ox;
        if (kind == PoolKind::kMax) {
          Scalar best = -std::numeric_limits<Scalar>::infinity();
          Index where = -1;
          for (Index i = std::max<Index>(y0, 0); i < std::min(y0 + o.kernel_h, h); ++i) {
            for (Index j = std::max<Index>(x0, 0); j < std::min(x0 + o.kernel_w, w); ++j) {
              if (where < 0 || x[i * w + j] > best) {
                best = x[i * w + j];
                where = i * w + j;
              }
            }
          }
          out[dst] = best;
          argmax[dst] = where;
        } else {
          Scalar acc = 0;
          for (Index i = std::max<Index>(y0, 0); i < std::min(y0 + o.kernel_h, h); ++i) {
            for (Index j = std::max<Index>(x0, 0); j < std::min(x0 + o.kernel_w, w); ++j) {
              acc += x[i * w + j];
            }
          }
          out[dst] = acc * inv_area;
        }
      }
    }
  }

  auto in_node = input.node();
  return detail::make_result<Scalar>(
      {batch, channels, ho, wo}, std::move(out), {input},
      [in_node, kind, o, planes, h, w, ho, wo, inv_area,
       argmax = std::move(argmax)](Node& self) {
        in_node->ensure_grad();
        for (Index p = 0; p < planes; ++p) {
          Scalar* dx = in_node->grad.data() + p * h * w;
          for (Index oy = 0; oy < ho; ++oy) {
            const Index y0 = oy * o.stride_h - o.padding.top;
            for (Index ox = 0; ox < wo; ++ox) {
              const Index src = (p * ho + oy) * wo + ox;
              const Scalar g = self.grad[src];
              if (kind == PoolKind::kMax) {
                dx[argmax[src]] += g;
                continue;
              }
              const Index x0 = ox * o.stride_w - o.padding.left;
              for (Index i = std::max<Index>(y0, 0); i < std::min(y0 + o.kernel_h, h); ++i) {
                for (Index j = std::max<Index>(x0, 0); j < std::min(x0 + o.kernel_w, w); ++j) {
                  dx[i * w + j] += g * inv_area;
                }
              }
            }
          }
        }
      });
}

namespace {

struct LerpTap {
  Index lo;
  Index hi;
  double frac;
};

std::vector<LerpTap> corner_aligned_taps(Index in, Index out) {
  std::vector<LerpTap> taps(out);
  for (Index i = 0; i < out; ++i) {
    const double src = (in == 1 || out == 1) ? 0.0 : double(i) * double(in - 1) / double(out - 1);
    Index lo = std::min<Index>(static_cast<Index>(std::floor(src)), in - 1);
    Index hi = std::min<Index>(lo + 1, in - 1);
    taps[i] = {lo, hi, src - double(lo)};
  }
  return taps;
}

}  // namespace

template <typename Scalar>
Tensor<Scalar> bilinear_upsample(const Tensor<Scalar>& input, Index out_h, Index out_w) {
  using Node = detail::Node<Scalar>;
  require_rank(input, 4, "bilinear_upsample", "input");
  const Index batch = input.dim(0), channels = input.dim(1), h = input.dim(2), w = input.dim(3);
  if (out_h < h || out_w < w) {
    fail("bilinear_upsample", "cannot downscale " + to_string(input.shape()) + " to " +
                                  std::to_string(out_h) + "x" + std::to_string(out_w));
  }
  if (h == 0 || w == 0) fail("bilinear_upsample", "empty input");
  auto rows = corner_aligned_taps(h, out_h);
  auto cols = corner_aligned_taps(w, out_w);
  const Index planes = batch * channels;
  typename Node::Array out(planes * out_h * out_w);
  for (Index p = 0; p < planes; ++p) {
    const Scalar* x = input.data() + p * h * w;
    Scalar* y = out.data() + p * out_h * out_w;
    for (Index i = 0; i < out_h; ++i) {
      const auto& r = rows[i];
      const Scalar fy = Scalar(r.frac);
      for (Index j = 0; j < out_w; ++j) {
        const auto& c = cols[j];
        const Scalar fx = Scalar(c.frac);
        const Scalar top = x[r.lo * w + c.lo] * (1 - fx) + x[r.lo * w + c.hi] * fx;
        const Scalar bot = x[r.hi * w + c.lo] * (1 - fx) + x[r.hi * w + c.hi] * fx;
        y[i * out_w + j] = top * (1 - fy) + bot * fy;
      }
    }
  }
  auto in_node = input.node();
  return detail::make_result<Scalar>(
      {batch, channels, out_h, out_w}, std::move(out), {input},
      [in_node, rows = std::move(rows), cols = std::move(cols), planes, h, w, out_h,
       out_w](Node& self) {
        in_node->ensure_grad();
        for (Index p = 0; p < planes; ++p) {
          Scalar* dx = in_node->grad.data() + p * h * w;
          const Scalar* dy = self.grad.data() + p * out_h * out_w;
          for (Index i = 0; i < out_h; ++i) {
            const auto& r = rows[i];
            const Scalar fy = Scalar(r.frac);
            for (Index j = 0; j < out_w; ++j) {
              const auto& c = cols[j];
              const Scalar fx = Scalar(c.frac);
              const Scalar g = dy[i * out_w + j];
              dx[r.lo * w + c.lo] += g * (1 - fy) * (1 - fx);
              dx[r.lo * w + c.hi] += g * (1 - fy) * fx;
              dx[r.hi * w + c.lo] += g * fy * (1 - fx);
              dx[r.hi * w + c.hi] += g * fy * fx;
            }
          }
        }
      });
}

template <typename Scalar>
Tensor<Scalar> batchnorm(const Tensor<Scalar>& input, const Tensor<Scalar>& gamma,
                         const Tensor<Scalar>& beta, BatchNormState<Scalar>& state, Mode mode) {
  using Node = detail::Node<Scalar>;
  using Array = typename Node::Array;
  require_rank(input, 4, "batchnorm", "input");
  const Index batch = input.dim(0), channels = input.dim(1);
  const Index hw = input.dim(2) * input.dim(3);
  const Index count = batch * hw;
  if (gamma.size() != channels || beta.size() != channels) {
    fail("batchnorm", "gamma/beta must have " + std::to_string(channels) + " entries");
  }
  if (state.running_mean.size() != channels || state.running_var.size() != channels) {
    fail("batchnorm", "running statistics sized for " +
                          std::to_string(state.running_mean.size()) + " channels, input has " +
                          std::to_string(channels));
  }
  const bool train = mode == Mode::kTrain;
  if (train && count < 2) {
    fail("batchnorm", "batch statistics need at least 2 values per channel, input " +
                          to_string(input.shape()));
  }
  if (!train && !state.initialized()) {
    fail("batchnorm", "inference with uninitialized running statistics");
  }

  Array mean(channels), inv_std(channels);
  for (Index c = 0; c < channels; ++c) {
    if (train) {
      double s = 0, ss = 0;
      for (Index b = 0; b < batch; ++b) {
        auto plane = Eigen::Map<const Array>(input.data() + (b * channels + c) * hw, hw);
        s += plane.template cast<double>().sum();
      }
      const double m = s / double(count);
      for (Index b = 0; b < batch; ++b) {
        auto plane = Eigen::Map<const Array>(input.data() + (b * channels + c) * hw, hw);
        ss += (plane.template cast<double>() - m).square().sum();
      }
      const double var = ss / double(count);
      mean[c] = Scalar(m);
      inv_std[c] = Scalar(1.0 / std::sqrt(var + state.epsilon));
      state.running_mean[c] =
          Scalar(state.momentum * double(state.running_mean[c]) + (1 - state.momentum) * m);
      state.running_var[c] =
          Scalar(state.momentum * double(state.running_var[c]) +
                 (1 - state.momentum) * ss / double(count - 1));
    } else {
      mean[c] = state.running_mean[c];
      inv_std[c] = Scalar(1.0 / std::sqrt(double(state.running_var[c]) + state.epsilon));
    }
  }
  if (train) ++state.batches_tracked;

  Array normalized(input.size());
  Array out(input.size());
  for (Index b = 0; b < batch; ++b) {
    for (Index c = 0; c < channels; ++c) {
      const Index off = (b * channels + c) * hw;
      auto xhat = Eigen::Map<Array>(normalized.data() + off, hw);
      xhat = (Eigen::Map<const Array>(input.data() + off, hw) - mean[c]) * inv_std[c];
      Eigen::Map<Array>(out.data() + off, hw) = xhat * gamma[c] + beta[c];
    }
  }

  auto in_node = input.node();
  auto g_node = gamma.node();
  auto b_node = beta.node();
  return detail::make_result<Scalar>(
      input.shape(), std::move(out), {input, gamma, beta},
      [in_node, g_node, b_node, normalized = std::move(normalized), inv_std, train, batch,
       channels, hw, count](Node& self) {
        for (Index c = 0; c < channels; ++c) {
          Scalar sum_dy = 0, sum_dy_xhat = 0;
          for (Index b = 0; b < batch; ++b) {
            const Index off = (b * channels + c) * hw;
            auto dy = Eigen::Map<const Array>(self.grad.data() + off, hw);
            auto xhat = Eigen::Map<const Array>(normalized.data() + off, hw);
            sum_dy += dy.sum();
            sum_dy_xhat += (dy * xhat).sum();
          }
          if (g_node->requires_grad) {
            g_node->ensure_grad();
            g_node->grad[c] += sum_dy_xhat;
          }
          if (b_node->requires_grad) {
            b_node->ensure_grad();
            b_node->grad[c] += sum_dy;
          }
          if (!in_node->requires_grad) continue;
          in_node->ensure_grad();
          const Scalar gamma_c = g_node->value[c];
          const Scalar n = Scalar(count);
          for (Index b = 0; b < batch; ++b) {
            const Index off = (b * channels + c) * hw;
            auto dy = Eigen::Map<const Array>(self.grad.data() + off, hw);
            auto dx = Eigen::Map<Array>(in_node->grad.data() + off, hw);
            if (train) {
              auto xhat = Eigen::Map<const Array>(normalized.data() + off, hw);
              dx += (gamma_c * inv_std[c] / n) * (n * dy - sum_dy - xhat * sum_dy_xhat);
            } else {
              dx += gamma_c * inv_std[c] * dy;
            }
          }
        }
      });
}

template <typename Scalar>
Tensor<Scalar> relu(const Tensor<Scalar>& x) {
  using Node = detail::Node<Scalar>;
  auto in_node = x.node();
  return detail::make_result<Scalar>(
      x.shape(), x.values().max(Scalar(0)), {x}, [in_node](Node& self) {
        in_node->accumulate((in_node->value > Scalar(0)).select(self.grad, Scalar(0)));
      });
}

template <typename Scalar>
Tensor<Scalar> sigmoid(const Tensor<Scalar>& x) {
  using Node = detail::Node<Scalar>;
  typename Node::Array y(x.size());
  for (Index i = 0; i < x.size(); ++i) {
    const Scalar v = x[i];
    if (v >= 0) {
      y[i] = Scalar(1) / (Scalar(1) + std::exp(-v));
    } else {
      const Scalar e = std::exp(v);
      y[i] = e / (Scalar(1) + e);
    }
  }
  auto in_node = x.node();
  return detail::make_result<Scalar>(x.shape(), std::move(y), {x}, [in_node](Node& self) {
    in_node->accumulate(self.grad * self.value * (Scalar(1) - self.value));
  });
}

template <typename Scalar>
Tensor<Scalar> add(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  using Node = detail::Node<Scalar>;
  require_same_shape(a, b, "add");
  auto na = a.node(), nb = b.node();
  return detail::make_result<Scalar>(a.shape(), a.values() + b.values(), {a, b},
                                     [na, nb](Node& self) {
                                       if (na->requires_grad) na->accumulate(self.grad);
                                       if (nb->requires_grad) nb->accumulate(self.grad);
                                     });
}

template <typename Scalar>
Tensor<Scalar> multiply(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  using Node = detail::Node<Scalar>;
  require_same_shape(a, b, "multiply");
  auto na = a.node(), nb = b.node();
  return detail::make_result<Scalar>(a.shape(), a.values() * b.values(), {a, b},
                                     [na, nb](Node& self) {
                                       if (na->requires_grad) na->accumulate(self.grad * nb->value);
                                       if (nb->requires_grad) nb->accumulate(self.grad * na->value);
                                     });
}

template <typename Scalar>
Tensor<Scalar> scale(const Tensor<Scalar>& a, Scalar s) {
  using Node = detail::Node<Scalar>;
  auto na = a.node();
  return detail::make_result<Scalar>(a.shape(), a.values() * s, {a},
                                     [na, s](Node& self) { na->accumulate(self.grad * s); });
}

template <typename Scalar>
Tensor<Scalar> sum(const Tensor<Scalar>& a) {
  using Node = detail::Node<Scalar>;
  auto na = a.node();
  typename Node::Array v(1);
  v[0] = a.values().sum();
  return detail::make_result<Scalar>({1}, std::move(v), {a}, [na](Node& self) {
    na->ensure_grad();
    na->grad += self.grad[0];
  });
}

template <typename Scalar>
Tensor<Scalar> concat_channels(const std::vector<Tensor<Scalar>>& parts) {
  using Node = detail::Node<Scalar>;
  if (parts.empty()) fail("concat_channels", "no inputs");
  for (const auto& p : parts) require_rank(p, 4, "concat_channels", "part");
  const Index batch = parts[0].dim(0), h = parts[0].dim(2), w = parts[0].dim(3);
  Index channels = 0;
  std::vector<Index> offsets;
  for (const auto& p : parts) {
    if (p.dim(0) != batch || p.dim(2) != h || p.dim(3) != w) {
      fail("concat_channels", "non-channel extents differ: " + to_string(parts[0].shape()) +
                                  " vs " + to_string(p.shape()));
    }
    offsets.push_back(channels);
    channels += p.dim(1);
  }
  const Index hw = h * w;
  typename Node::Array out(batch * channels * hw);
  for (size_t k = 0; k < parts.size(); ++k) {
    const Index pc = parts[k].dim(1);
    for (Index b = 0; b < batch; ++b) {
      std::copy_n(parts[k].data() + b * pc * hw, pc * hw,
                  out.data() + (b * channels + offsets[k]) * hw);
    }
  }
  std::vector<std::shared_ptr<Node>> nodes;
  std::vector<Index> widths;
  for (const auto& p : parts) {
    nodes.push_back(p.node());
    widths.push_back(p.dim(1));
  }
  return detail::make_result<Scalar>(
      {batch, channels, h, w}, std::move(out), parts,
      [nodes = std::move(nodes), widths = std::move(widths), offsets = std::move(offsets), batch,
       channels, hw](Node& self) {
        for (size_t k = 0; k < nodes.size(); ++k) {
          if (!nodes[k]->requires_grad) continue;
          nodes[k]->ensure_grad();
          const Index pc = widths[k];
          for (Index b = 0; b < batch; ++b) {
            Eigen::Map<typename Node::Array>(nodes[k]->grad.data() + b * pc * hw, pc * hw) +=
                Eigen::Map<const typename Node::Array>(
                    self.grad.data() + (b * channels + offsets[k]) * hw, pc * hw);
          }
        }
      });
}

template <typename Scalar>
Tensor<Scalar> row_softmax(const Tensor<Scalar>& x) {
  using Node = detail::Node<Scalar>;
  require_rank(x, 2, "row_softmax", "input");
  const Index n = x.dim(0), k = x.dim(1);
  typename Node::Array out(x.size());
  Eigen::Map<const RowMatrix<Scalar>> in(x.data(), n, k);
  Eigen::Map<RowMatrix<Scalar>> y(out.data(), n, k);
  for (Index r = 0; r < n; ++r) {
    const Scalar m = in.row(r).maxCoeff();
    y.row(r) = (in.row(r).array() - m).exp().matrix();
    y.row(r) /= y.row(r).sum();
  }
  auto in_node = x.node();
  return detail::make_result<Scalar>(x.shape(), std::move(out), {x}, [in_node, n, k](Node& self) {
    in_node->ensure_grad();
    Eigen::Map<const RowMatrix<Scalar>> y(self.value.data(), n, k);
    Eigen::Map<const RowMatrix<Scalar>> dy(self.grad.data(), n, k);
    Eigen::Map<RowMatrix<Scalar>> dx(in_node->grad.data(), n, k);
    for (Index r = 0; r < n; ++r) {
      const Scalar dot = y.row(r).dot(dy.row(r));
      dx.row(r).array() += y.row(r).array() * (dy.row(r).array() - dot);
    }
  });
}

template <typename Scalar>
Tensor<Scalar> matmul_affine(const Tensor<Scalar>& x, const Tensor<Scalar>& weight,
                             const Tensor<Scalar>& bias) {
  using Node = detail::Node<Scalar>;
  require_rank(x, 2, "matmul_affine", "x");
  require_rank(weight, 2, "matmul_affine", "weight");
  const Index n = x.dim(0), d = x.dim(1), k = weight.dim(1);
  if (weight.dim(0) != d) {
    fail("matmul_affine", "x " + to_string(x.shape()) + " incompatible with weight " +
                              to_string(weight.shape()));
  }
  if (!bias.defined() || bias.size() != k) {
    fail("matmul_affine", "bias must have " + std::to_string(k) + " entries");
  }
  typename Node::Array out(n * k);
  Eigen::Map<RowMatrix<Scalar>> y(out.data(), n, k);
  y.noalias() = Eigen::Map<const RowMatrix<Scalar>>(x.data(), n, d) *
                Eigen::Map<const RowMatrix<Scalar>>(weight.data(), d, k);
  y.rowwise() += Eigen::Map<const Eigen::Matrix<Scalar, 1, Eigen::Dynamic>>(bias.data(), k);
  auto nx = x.node(), nw = weight.node(), nb = bias.node();
  return detail::make_result<Scalar>(
      {n, k}, std::move(out), {x, weight, bias}, [nx, nw, nb, n, d, k](Node& self) {
        Eigen::Map<const RowMatrix<Scalar>> dy(self.grad.data(), n, k);
        if (nx->requires_grad) {
          nx->ensure_grad();
          Eigen::Map<RowMatrix<Scalar>>(nx->grad.data(), n, d).noalias() +=
              dy * Eigen::Map<const RowMatrix<Scalar>>(nw->value.data(), d, k).transpose();
        }
        if (nw->requires_grad) {
          nw->ensure_grad();
          Eigen::Map<RowMatrix<Scalar>>(nw->grad.data(), d, k).noalias() +=
              Eigen::Map<const RowMatrix<Scalar>>(nx->value.data(), n, d).transpose() * dy;
        }
        if (nb->requires_grad) {
          nb->ensure_grad();
          Eigen::Map<Eigen::Matrix<Scalar, 1, Eigen::Dynamic>>(nb->grad.data(), k) +=
              dy.colwise().sum();
        }
      });
}

template <typename Scalar>
Tensor<Scalar> reshape(const Tensor<Scalar>& x, Shape shape) {
  using Node = detail::Node<Scalar>;
  if (numel(shape) != x.size()) {
    fail("reshape", "cannot view " + to_string(x.shape()) + " as " + to_string(shape));
  }
  auto nx = x.node();
  return detail::make_result<Scalar>(std::move(shape), x.values(), {x},
                                     [nx](Node& self) { nx->accumulate(self.grad); });
}

template <typename Scalar>
Tensor<Scalar> columns_to_frames(const Tensor<Scalar>& maps) {
  using Node = detail::Node<Scalar>;
  require_rank(maps, 4, "columns_to_frames", "maps");
  const Index batch = maps.dim(0), c = maps.dim(1), h = maps.dim(2), w = maps.dim(3);
  const Index depth = c * h;
  typename Node::Array out(maps.size());
  for (Index b = 0; b < batch; ++b) {
    // Per sample the input is a (depth x w) row-major block; frames are its columns.
    Eigen::Map<RowMatrix<Scalar>>(out.data() + b * depth * w, w, depth) =
        Eigen::Map<const RowMatrix<Scalar>>(maps.data() + b * depth * w, depth, w).transpose();
  }
  auto nx = maps.node();
  return detail::make_result<Scalar>(
      {batch, w, depth}, std::move(out), {maps}, [nx, batch, depth, w](Node& self) {
        nx->ensure_grad();
        for (Index b = 0; b < batch; ++b) {
          Eigen::Map<RowMatrix<Scalar>>(nx->grad.data() + b * depth * w, depth, w) +=
              Eigen::Map<const RowMatrix<Scalar>>(self.grad.data() + b * depth * w, w, depth)
                  .transpose();
        }
      });
}

template <typename Scalar>
Tensor<Scalar> frames_to_columns(const Tensor<Scalar>& frames) {
  using Node = detail::Node<Scalar>;
  require_rank(frames, 3, "frames_to_columns", "frames");
  const Index batch = frames.dim(0), w = frames.dim(1), depth = frames.dim(2);
  typename Node::Array out(frames.size());
  for (Index b = 0; b < batch; ++b) {
    Eigen::Map<RowMatrix<Scalar>>(out.data() + b * depth * w, depth, w) =
        Eigen::Map<const RowMatrix<Scalar>>(frames.data() + b * depth * w, w, depth).transpose();
  }
  auto nx = frames.node();
  return detail::make_result<Scalar>(
      {batch, 1, depth, w}, std::move(out), {frames}, [nx, batch, depth, w](Node& self) {
        nx->ensure_grad();
        for (Index b = 0; b < batch; ++b) {
          Eigen::Map<RowMatrix<Scalar>>(nx->grad.data() + b * depth * w, w, depth) +=
              Eigen::Map<const RowMatrix<Scalar>>(self.grad.data() + b * depth * w, depth, w)
                  .transpose();
        }
      });
}

#define ACNV_INSTANTIATE_OPS(S)                                                              \
  template Tensor<S> conv2d(const Tensor<S>&, const Tensor<S>&, const Tensor<S>&,            \
                            const Conv2dOptions&);                                           \
  template Tensor<S> pool2d(const Tensor<S>&, PoolKind, const Pool2dOptions&);               \
  template Tensor<S> bilinear_upsample(const Tensor<S>&, Index, Index);                      \
  template Tensor<S> batchnorm(const Tensor<S>&, const Tensor<S>&, const Tensor<S>&,         \
                               BatchNormState<S>&, Mode);                                    \
  template Tensor<S> relu(const Tensor<S>&);                                                 \
  template Tensor<S> sigmoid(const Tensor<S>&);                                              \
  template Tensor<S> add(const Tensor<S>&, const Tensor<S>&);                                \
  template Tensor<S> multiply(const Tensor<S>&, const Tensor<S>&);                           \
  template Tensor<S> scale(const Tensor<S>&, S);                                             \
  template Tensor<S> sum(const Tensor<S>&);                                                  \
  template Tensor<S> concat_channels(const std::vector<Tensor<S>>&);                         \
  template Tensor<S> row_softmax(const Tensor<S>&);                                          \
  template Tensor<S> matmul_affine(const Tensor<S>&, const Tensor<S>&, const Tensor<S>&);    \
  template Tensor<S> reshape(const Tensor<S>&, Shape);                                       \
  template Tensor<S> columns_to_frames(const Tensor<S>&);                                    \
  template Tensor<S> frames_to_columns(const Tensor<S>&);

ACNV_INSTANTIATE_OPS(float)
ACNV_INSTANTIATE_OPS(double)

#undef ACNV_INSTANTIATE_OPS

}  // namespace acnv
