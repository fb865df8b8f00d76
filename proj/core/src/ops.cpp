#include "gafnet/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "eigen_view.hpp"
#include "gafnet/error.hpp"

namespace gafnet::ops {

using detail::view;

namespace {

[[noreturn]] void shape_error(const std::string& what) { throw Error(ErrorKind::kShapeMismatch, what); }

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Column matrix [cin*k x T] for same-padded 1-D correlation.
Tensor im2col_1d(const Tensor& x, std::size_t k) {
  const std::size_t cin = x.dim(0), len = x.dim(1);
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>((k - 1) / 2);
  Tensor col({cin * k, len});
  for (std::size_t c = 0; c < cin; ++c)
    for (std::size_t d = 0; d < k; ++d) {
      double* row = &col.at(c * k + d, 0);
      for (std::size_t t = 0; t < len; ++t) {
        const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t + d) - pad;
        if (src >= 0 && src < static_cast<std::ptrdiff_t>(len)) row[t] = x.at(c, static_cast<std::size_t>(src));
      }
    }
  return col;
}

struct Conv2dGeometry {
  std::size_t cin, height, width, k, stride, pad, out_h, out_w;
};

Conv2dGeometry conv2d_geometry(const Tensor& x, const Tensor& kernels, std::size_t stride) {
  require_rank(x, 3, "conv2d input");
  require_rank(kernels, 4, "conv2d kernels");
  if (kernels.dim(1) != x.dim(0)) shape_error("conv2d: kernel input channels do not match input");
  if (kernels.dim(2) != kernels.dim(3)) shape_error("conv2d: kernels must be square");
  if (stride == 0) throw Error(ErrorKind::kInvalidArgument, "conv2d stride must be >= 1");
  Conv2dGeometry g{};
  g.cin = x.dim(0);
  g.height = x.dim(1);
  g.width = x.dim(2);
  g.k = kernels.dim(2);
  g.stride = stride;
  if (stride == 1) {
    if (g.k % 2 == 0) shape_error("conv2d: same padding needs an odd kernel");
    g.pad = (g.k - 1) / 2;
  }
  g.out_h = conv2d_output_side(g.height, g.k, stride);
  g.out_w = conv2d_output_side(g.width, g.k, stride);
  return g;
}

Tensor im2col_2d(const Tensor& x, const Conv2dGeometry& g) {
  Tensor col({g.cin * g.k * g.k, g.out_h * g.out_w});
  const auto pad = static_cast<std::ptrdiff_t>(g.pad);
  for (std::size_t c = 0; c < g.cin; ++c)
    for (std::size_t di = 0; di < g.k; ++di)
      for (std::size_t dj = 0; dj < g.k; ++dj) {
        double* row = &col.at((c * g.k + di) * g.k + dj, 0);
        for (std::size_t oi = 0; oi < g.out_h; ++oi) {
          const std::ptrdiff_t si = static_cast<std::ptrdiff_t>(oi * g.stride + di) - pad;
          if (si < 0 || si >= static_cast<std::ptrdiff_t>(g.height)) continue;
          for (std::size_t oj = 0; oj < g.out_w; ++oj) {
            const std::ptrdiff_t sj = static_cast<std::ptrdiff_t>(oj * g.stride + dj) - pad;
            if (sj < 0 || sj >= static_cast<std::ptrdiff_t>(g.width)) continue;
            row[oi * g.out_w + oj] = x.at(c, static_cast<std::size_t>(si), static_cast<std::size_t>(sj));
          }
        }
      }
  return col;
}

struct AxisSplit {
  std::size_t outer, n, inner;
};

AxisSplit split_at(const Shape& shape, std::size_t axis) {
  if (axis >= shape.size()) shape_error("axis out of range for " + shape_string(shape));
  AxisSplit s{1, shape[axis], 1};
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

void check_lstm(const Tensor& x, const LstmWeights& w, const char* which) {
  const std::size_t h = w.recurrent_weight.dim(0);
  require_shape(w.input_weight, {x.dim(1), 4 * h}, which);
  require_shape(w.recurrent_weight, {h, 4 * h}, which);
  require_shape(w.bias, {4 * h}, which);
}

// Runs one direction; output rows follow original time order.
void run_lstm(const Tensor& x, const LstmWeights& w, bool reverse, LstmTrace& tr, Tensor& out,
              std::size_t column_offset) {
  const std::size_t steps = x.dim(0), h = w.hidden();
  Tensor pre({steps, 4 * h});
  view(pre).noalias() = view(x) * view(w.input_weight);
  for (std::size_t t = 0; t < steps; ++t)
    for (std::size_t j = 0; j < 4 * h; ++j) pre.at(t, j) += w.bias[j];

  tr.input_gate = tr.forget_gate = tr.candidate = tr.output_gate = Tensor({steps, h});
  tr.cell = tr.cell_tanh = tr.hidden = Tensor({steps, h});

  Tensor z({1, 4 * h});
  const auto wh = view(w.recurrent_weight);
  for (std::size_t s = 0; s < steps; ++s) {
    const std::size_t t = reverse ? steps - 1 - s : s;
    auto zv = view(z);
    zv = view(pre).row(static_cast<Eigen::Index>(t));
    if (s > 0) zv.noalias() += view(tr.hidden).row(static_cast<Eigen::Index>(s - 1)) * wh;
    for (std::size_t j = 0; j < h; ++j) {
      const double i_g = sigmoid(z[j]);
      const double f_g = sigmoid(z[h + j]);
      const double c_g = std::tanh(z[2 * h + j]);
      const double o_g = sigmoid(z[3 * h + j]);
      const double c_prev = s > 0 ? tr.cell.at(s - 1, j) : 0.0;
      const double c = f_g * c_prev + i_g * c_g;
      const double tc = std::tanh(c);
      tr.input_gate.at(s, j) = i_g;
      tr.forget_gate.at(s, j) = f_g;
      tr.candidate.at(s, j) = c_g;
      tr.output_gate.at(s, j) = o_g;
      tr.cell.at(s, j) = c;
      tr.cell_tanh.at(s, j) = tc;
      tr.hidden.at(s, j) = o_g * tc;
      out.at(t, column_offset + j) = o_g * tc;
    }
  }
}

LstmGrads backprop_lstm(const Tensor& x, const LstmWeights& w, bool reverse, const LstmTrace& tr,
                        const Tensor& dout, std::size_t column_offset, Tensor& dx) {
  const std::size_t steps = x.dim(0), h = w.hidden();
  Tensor dz_time({steps, 4 * h});  // original time order
  Tensor dh_next({1, h}), dc_next({1, h}), dz({1, 4 * h});
  LstmGrads g{Tensor(w.input_weight.shape()), Tensor(w.recurrent_weight.shape()), Tensor(w.bias.shape())};
  auto dwh = view(g.drecurrent_weight);
  const auto wh = view(w.recurrent_weight);

  for (std::size_t s = steps; s-- > 0;) {
    const std::size_t t = reverse ? steps - 1 - s : s;
    for (std::size_t j = 0; j < h; ++j) {
      const double dh = dout.at(t, column_offset + j) + dh_next[j];
      const double i_g = tr.input_gate.at(s, j), f_g = tr.forget_gate.at(s, j);
      const double c_g = tr.candidate.at(s, j), o_g = tr.output_gate.at(s, j);
      const double tc = tr.cell_tanh.at(s, j);
      const double c_prev = s > 0 ? tr.cell.at(s - 1, j) : 0.0;
      const double dc = dh * o_g * (1.0 - tc * tc) + dc_next[j];
      dz[j] = dc * c_g * i_g * (1.0 - i_g);
      dz[h + j] = dc * c_prev * f_g * (1.0 - f_g);
      dz[2 * h + j] = dc * i_g * (1.0 - c_g * c_g);
      dz[3 * h + j] = dh * tc * o_g * (1.0 - o_g);
      dc_next[j] = dc * f_g;
    }
    const auto dzv = view(dz);
    view(dz_time).row(static_cast<Eigen::Index>(t)) = dzv;
    if (s > 0) {
      dwh.noalias() += view(tr.hidden).row(static_cast<Eigen::Index>(s - 1)).transpose() * dzv;
      view(dh_next).noalias() = dzv * wh.transpose();
    }
  }
  view(g.dinput_weight).noalias() = view(x).transpose() * view(dz_time);
  for (std::size_t t = 0; t < steps; ++t)
    for (std::size_t j = 0; j < 4 * h; ++j) g.dbias[j] += dz_time.at(t, j);
  view(dx).noalias() += view(dz_time) * view(w.input_weight).transpose();
  return g;
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul lhs");
  require_rank(b, 2, "matmul rhs");
  if (a.dim(1) != b.dim(0))
    shape_error("matmul: " + shape_string(a.shape()) + " x " + shape_string(b.shape()));
  Tensor out({a.dim(0), b.dim(1)});
  view(out).noalias() = view(a) * view(b);
  return out;
}

MatmulGrads matmul_backward(const Tensor& a, const Tensor& b, const Tensor& dout) {
  require_shape(dout, {a.dim(0), b.dim(1)}, "matmul output gradient");
  MatmulGrads g{Tensor(a.shape()), Tensor(b.shape())};
  view(g.da).noalias() = view(dout) * view(b).transpose();
  view(g.db).noalias() = view(a).transpose() * view(dout);
  return g;
}

Tensor transpose(const Tensor& x) {
  require_rank(x, 2, "transpose");
  Tensor out({x.dim(1), x.dim(0)});
  view(out) = view(x).transpose();
  return out;
}

Tensor conv1d(const Tensor& x, const Tensor& kernels, const Tensor& bias) {
  require_rank(x, 2, "conv1d input");
  require_rank(kernels, 3, "conv1d kernels");
  const std::size_t cout = kernels.dim(0), cin = kernels.dim(1), k = kernels.dim(2);
  if (cin != x.dim(0)) shape_error("conv1d: kernel input channels do not match input");
  if (k % 2 == 0) shape_error("conv1d: kernel length must be odd");
  require_shape(bias, {cout}, "conv1d bias");
  const std::size_t len = x.dim(1);
  const Tensor col = im2col_1d(x, k);
  Tensor out({cout, len});
  view(out).noalias() = view(kernels, cout, cin * k) * view(col);
  for (std::size_t c = 0; c < cout; ++c)
    for (std::size_t t = 0; t < len; ++t) out.at(c, t) += bias[c];
  return out;
}

ConvGrads conv1d_backward(const Tensor& x, const Tensor& kernels, const Tensor& dout) {
  const std::size_t cout = kernels.dim(0), cin = kernels.dim(1), k = kernels.dim(2), len = x.dim(1);
  require_shape(dout, {cout, len}, "conv1d output gradient");
  const Tensor col = im2col_1d(x, k);
  ConvGrads g{Tensor(x.shape()), Tensor(kernels.shape()), Tensor({cout})};
  view(g.dkernels, cout, cin * k).noalias() = view(dout) * view(col).transpose();
  for (std::size_t c = 0; c < cout; ++c)
    for (std::size_t t = 0; t < len; ++t) g.dbias[c] += dout.at(c, t);
  Tensor dcol({cin * k, len});
  view(dcol).noalias() = view(kernels, cout, cin * k).transpose() * view(dout);
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>((k - 1) / 2);
  for (std::size_t c = 0; c < cin; ++c)
    for (std::size_t d = 0; d < k; ++d)
      for (std::size_t t = 0; t < len; ++t) {
        const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t + d) - pad;
        if (src >= 0 && src < static_cast<std::ptrdiff_t>(len))
          g.dx.at(c, static_cast<std::size_t>(src)) += dcol.at(c * k + d, t);
      }
  return g;
}

std::size_t conv2d_output_side(std::size_t side, std::size_t kernel, std::size_t stride) {
  if (stride == 1) return side;
  if (side < kernel) shape_error("conv2d: input smaller than kernel");
  return (side - kernel) / stride + 1;
}

Tensor conv2d(const Tensor& x, const Tensor& kernels, const Tensor& bias, std::size_t stride) {
  const Conv2dGeometry g = conv2d_geometry(x, kernels, stride);
  const std::size_t cout = kernels.dim(0);
  require_shape(bias, {cout}, "conv2d bias");
  const Tensor col = im2col_2d(x, g);
  const std::size_t pixels = g.out_h * g.out_w;
  Tensor out({cout, g.out_h, g.out_w});
  view(out, cout, pixels).noalias() = view(kernels, cout, g.cin * g.k * g.k) * view(col);
  for (std::size_t c = 0; c < cout; ++c) {
    double* row = out.data().data() + c * pixels;
    for (std::size_t p = 0; p < pixels; ++p) row[p] += bias[c];
  }
  return out;
}

ConvGrads conv2d_backward(const Tensor& x, const Tensor& kernels, const Tensor& dout, std::size_t stride) {
  const Conv2dGeometry g = conv2d_geometry(x, kernels, stride);
  const std::size_t cout = kernels.dim(0), pixels = g.out_h * g.out_w, patch = g.cin * g.k * g.k;
  require_shape(dout, {cout, g.out_h, g.out_w}, "conv2d output gradient");
  const Tensor col = im2col_2d(x, g);
  ConvGrads grads{Tensor(x.shape()), Tensor(kernels.shape()), Tensor({cout})};
  view(grads.dkernels, cout, patch).noalias() = view(dout, cout, pixels) * view(col).transpose();
  for (std::size_t c = 0; c < cout; ++c) {
    const double* row = dout.data().data() + c * pixels;
    for (std::size_t p = 0; p < pixels; ++p) grads.dbias[c] += row[p];
  }
  Tensor dcol({patch, pixels});
  view(dcol).noalias() = view(kernels, cout, patch).transpose() * view(dout, cout, pixels);
  const auto pad = static_cast<std::ptrdiff_t>(g.pad);
  for (std::size_t c = 0; c < g.cin; ++c)
    for (std::size_t di = 0; di < g.k; ++di)
      for (std::size_t dj = 0; dj < g.k; ++dj) {
        const double* row = &dcol.at((c * g.k + di) * g.k + dj, 0);
        for (std::size_t oi = 0; oi < g.out_h; ++oi) {
          const std::ptrdiff_t si = static_cast<std::ptrdiff_t>(oi * g.stride + di) - pad;
          if (si < 0 || si >= static_cast<std::ptrdiff_t>(g.height)) continue;
          for (std::size_t oj = 0; oj < g.out_w; ++oj) {
            const std::ptrdiff_t sj = static_cast<std::ptrdiff_t>(oj * g.stride + dj) - pad;
            if (sj < 0 || sj >= static_cast<std::ptrdiff_t>(g.width)) continue;
            grads.dx.at(c, static_cast<std::size_t>(si), static_cast<std::size_t>(sj)) += row[oi * g.out_w + oj];
          }
        }
      }
  return grads;
}

Tensor relu(const Tensor& x) {
  Tensor out = x;
  for (double& v : out.data()) v = v > 0.0 ? v : 0.0;
  return out;
}

Tensor relu_backward(const Tensor& x, const Tensor& dout) {
  require_shape(dout, x.shape(), "relu output gradient");
  Tensor dx(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) dx[i] = x[i] > 0.0 ? dout[i] : 0.0;
  return dx;
}

Tensor softmax(const Tensor& x, std::size_t axis) {
  const AxisSplit s = split_at(x.shape(), axis);
  Tensor out(x.shape());
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t in = 0; in < s.inner; ++in) {
      auto idx = [&](std::size_t i) { return (o * s.n + i) * s.inner + in; };
      double mx = x[idx(0)];
      for (std::size_t i = 1; i < s.n; ++i) mx = std::max(mx, x[idx(i)]);
      double sum = 0.0;
      for (std::size_t i = 0; i < s.n; ++i) sum += (out[idx(i)] = std::exp(x[idx(i)] - mx));
      for (std::size_t i = 0; i < s.n; ++i) out[idx(i)] /= sum;
    }
  return out;
}

Tensor softmax_backward(const Tensor& y, const Tensor& dout, std::size_t axis) {
  require_shape(dout, y.shape(), "softmax output gradient");
  const AxisSplit s = split_at(y.shape(), axis);
  Tensor dx(y.shape());
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t in = 0; in < s.inner; ++in) {
      auto idx = [&](std::size_t i) { return (o * s.n + i) * s.inner + in; };
      double dot = 0.0;
      for (std::size_t i = 0; i < s.n; ++i) dot += y[idx(i)] * dout[idx(i)];
      for (std::size_t i = 0; i < s.n; ++i) dx[idx(i)] = y[idx(i)] * (dout[idx(i)] - dot);
    }
  return dx;
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias) {
  if (x.rank() == 0) shape_error("layer_norm of a scalar");
  const std::size_t d = x.shape().back(), rows = x.size() / d;
  require_shape(gain, {d}, "layer_norm gain");
  require_shape(bias, {d}, "layer_norm bias");
  Tensor out(x.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x.data().data() + r * d;
    double* yr = out.data().data() + r * d;
    double mean = 0.0;
    for (std::size_t i = 0; i < d; ++i) mean += xr[i];
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t i = 0; i < d; ++i) var += (xr[i] - mean) * (xr[i] - mean);
    var /= static_cast<double>(d);
    const double inv = 1.0 / std::sqrt(var + kLayerNormEps);
    for (std::size_t i = 0; i < d; ++i) yr[i] = gain[i] * (xr[i] - mean) * inv + bias[i];
  }
  return out;
}

LayerNormGrads layer_norm_backward(const Tensor& x, const Tensor& gain, const Tensor& dout) {
  require_shape(dout, x.shape(), "layer_norm output gradient");
  const std::size_t d = x.shape().back(), rows = x.size() / d;
  LayerNormGrads g{Tensor(x.shape()), Tensor(gain.shape()), Tensor(gain.shape())};
  std::vector<double> xhat(d), dxhat(d);
  const double n = static_cast<double>(d);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x.data().data() + r * d;
    const double* dr = dout.data().data() + r * d;
    double mean = 0.0;
    for (std::size_t i = 0; i < d; ++i) mean += xr[i];
    mean /= n;
    double var = 0.0;
    for (std::size_t i = 0; i < d; ++i) var += (xr[i] - mean) * (xr[i] - mean);
    var /= n;
    const double inv = 1.0 / std::sqrt(var + kLayerNormEps);
    double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      xhat[i] = (xr[i] - mean) * inv;
      dxhat[i] = dr[i] * gain[i];
      g.dgain[i] += dr[i] * xhat[i];
      g.dbias[i] += dr[i];
      mean_dxhat += dxhat[i];
      mean_dxhat_xhat += dxhat[i] * xhat[i];
    }
    mean_dxhat /= n;
    mean_dxhat_xhat /= n;
    double* dxr = g.dx.data().data() + r * d;
    for (std::size_t i = 0; i < d; ++i) dxr[i] = inv * (dxhat[i] - mean_dxhat - xhat[i] * mean_dxhat_xhat);
  }
  return g;
}

Tensor global_avg_pool(const Tensor& x) {
  if (x.rank() < 2) shape_error("global_avg_pool needs [c x ...], got " + shape_string(x.shape()));
  const std::size_t c = x.dim(0), rest = x.size() / c;
  Tensor out({c});
  for (std::size_t i = 0; i < c; ++i) {
    double sum = 0.0;
    for (std::size_t j = 0; j < rest; ++j) sum += x[i * rest + j];
    out[i] = sum / static_cast<double>(rest);
  }
  return out;
}

Tensor global_avg_pool_backward(const Shape& input_shape, const Tensor& dout) {
  const std::size_t c = input_shape.at(0), rest = shape_size(input_shape) / c;
  require_shape(dout, {c}, "global_avg_pool output gradient");
  Tensor dx(input_shape);
  for (std::size_t i = 0; i < c; ++i)
    for (std::size_t j = 0; j < rest; ++j) dx[i * rest + j] = dout[i] / static_cast<double>(rest);
  return dx;
}

Tensor concat(const Tensor& a, const Tensor& b, std::size_t axis) {
  if (a.rank() != b.rank()) shape_error("concat: rank mismatch");
  Shape out_shape = a.shape();
  for (std::size_t i = 0; i < a.rank(); ++i)
    if (i != axis && a.dim(i) != b.dim(i))
      shape_error("concat: " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  const AxisSplit sa = split_at(a.shape(), axis), sb = split_at(b.shape(), axis);
  out_shape[axis] = sa.n + sb.n;
  Tensor out(out_shape);
  const std::size_t ca = sa.n * sa.inner, cb = sb.n * sb.inner;
  for (std::size_t o = 0; o < sa.outer; ++o) {
    std::copy_n(a.data().data() + o * ca, ca, out.data().data() + o * (ca + cb));
    std::copy_n(b.data().data() + o * cb, cb, out.data().data() + o * (ca + cb) + ca);
  }
  return out;
}

ConcatGrads concat_backward(const Shape& a_shape, const Shape& b_shape, const Tensor& dout, std::size_t axis) {
  const AxisSplit sa = split_at(a_shape, axis), sb = split_at(b_shape, axis);
  if (dout.size() != shape_size(a_shape) + shape_size(b_shape)) shape_error("concat output gradient");
  ConcatGrads g{Tensor(a_shape), Tensor(b_shape)};
  const std::size_t ca = sa.n * sa.inner, cb = sb.n * sb.inner;
  for (std::size_t o = 0; o < sa.outer; ++o) {
    std::copy_n(dout.data().data() + o * (ca + cb), ca, g.da.data().data() + o * ca);
    std::copy_n(dout.data().data() + o * (ca + cb) + ca, cb, g.db.data().data() + o * cb);
  }
  return g;
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  require_rank(weight, 2, "linear weight");
  const std::size_t din = weight.dim(0), dout = weight.dim(1);
  require_shape(bias, {dout}, "linear bias");
  if (x.rank() == 0 || x.rank() > 2 || x.shape().back() != din)
    shape_error("linear: input " + shape_string(x.shape()) + " vs weight " + shape_string(weight.shape()));
  const std::size_t rows = x.rank() == 1 ? 1 : x.dim(0);
  Tensor out(x.rank() == 1 ? Shape{dout} : Shape{rows, dout});
  auto ov = view(out, rows, dout);
  ov.noalias() = view(x, rows, din) * view(weight);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < dout; ++j) out[r * dout + j] += bias[j];
  return out;
}

LinearGrads linear_backward(const Tensor& x, const Tensor& weight, const Tensor& dout) {
  const std::size_t din = weight.dim(0), dn = weight.dim(1);
  const std::size_t rows = x.rank() == 1 ? 1 : x.dim(0);
  if (dout.size() != rows * dn) shape_error("linear output gradient");
  LinearGrads g{Tensor(x.shape()), Tensor(weight.shape()), Tensor({dn})};
  view(g.dweight).noalias() = view(x, rows, din).transpose() * view(dout, rows, dn);
  view(g.dx, rows, din).noalias() = view(dout, rows, dn) * view(weight).transpose();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < dn; ++j) g.dbias[j] += dout[r * dn + j];
  return g;
}

Tensor bilstm_forward(const Tensor& x, const LstmWeights& fwd, const LstmWeights& bwd, BiLstmTrace* trace) {
  require_rank(x, 2, "bilstm input");
  check_lstm(x, fwd, "bilstm forward cell");
  check_lstm(x, bwd, "bilstm backward cell");
  const std::size_t h = fwd.hidden();
  if (bwd.hidden() != h) shape_error("bilstm: cells differ in hidden size");
  Tensor out({x.dim(0), 2 * h});
  BiLstmTrace local;
  BiLstmTrace& tr = trace ? *trace : local;
  run_lstm(x, fwd, false, tr.forward, out, 0);
  run_lstm(x, bwd, true, tr.backward, out, h);
  return out;
}

BiLstmGrads bilstm_backward(const Tensor& x, const LstmWeights& fwd, const LstmWeights& bwd,
                            const BiLstmTrace& trace, const Tensor& dout) {
  const std::size_t h = fwd.hidden();
  require_shape(dout, {x.dim(0), 2 * h}, "bilstm output gradient");
  BiLstmGrads g;
  g.dx = Tensor(x.shape());
  g.forward = backprop_lstm(x, fwd, false, trace.forward, dout, 0, g.dx);
  g.backward = backprop_lstm(x, bwd, true, trace.backward, dout, h, g.dx);
  return g;
}

Tensor cross_attention(const Tensor& tokens_q, const Tensor& tokens_kv, const AttentionWeights& w,
                       AttentionTrace* trace) {
  require_rank(tokens_q, 2, "attention query tokens");
  require_rank(tokens_kv, 2, "attention key/value tokens");
  const std::size_t d = w.dim();
  require_shape(w.query, {tokens_q.dim(1), d}, "attention query projection");
  require_shape(w.key, {tokens_kv.dim(1), d}, "attention key projection");
  require_shape(w.value, {tokens_kv.dim(1), d}, "attention value projection");

  AttentionTrace local;
  AttentionTrace& tr = trace ? *trace : local;
  tr.q = matmul(tokens_q, w.query);
  tr.k = matmul(tokens_kv, w.key);
  tr.v = matmul(tokens_kv, w.value);
  Tensor scores({tokens_q.dim(0), tokens_kv.dim(0)});
  view(scores).noalias() = view(tr.q) * view(tr.k).transpose();
  scores *= 1.0 / std::sqrt(static_cast<double>(d));
  tr.weights = softmax(scores, 1);
  return matmul(tr.weights, tr.v);
}

AttentionGrads cross_attention_backward(const Tensor& tokens_q, const Tensor& tokens_kv,
                                        const AttentionWeights& w, const AttentionTrace& tr,
                                        const Tensor& dout) {
  const std::size_t d = w.dim();
  require_shape(dout, {tokens_q.dim(0), d}, "attention output gradient");
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));
  const MatmulGrads pv = matmul_backward(tr.weights, tr.v, dout);
  Tensor dscores = softmax_backward(tr.weights, pv.da, 1);
  dscores *= scale;
  Tensor dq({tr.q.dim(0), d}), dk({tr.k.dim(0), d});
  view(dq).noalias() = view(dscores) * view(tr.k);
  view(dk).noalias() = view(dscores).transpose() * view(tr.q);

  const MatmulGrads gq = matmul_backward(tokens_q, w.query, dq);
  const MatmulGrads gk = matmul_backward(tokens_kv, w.key, dk);
  const MatmulGrads gv = matmul_backward(tokens_kv, w.value, pv.db);
  return AttentionGrads{gq.da, gk.da + gv.da, gq.db, gk.db, gv.db};
}

}  // namespace gafnet::ops
