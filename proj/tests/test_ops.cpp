#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "gafnet/error.hpp"
#include "gafnet/gradcheck.hpp"
#include "gafnet/ops.hpp"
#include "gafnet/rng.hpp"
#include "gafnet/tensor.hpp"

using namespace gafnet;

namespace {

constexpr int kTrials = 20;
constexpr double kGradTol = 1e-4;

Tensor random_tensor(Shape shape, std::mt19937_64& gen, double scale = 1.0) {
  std::uniform_real_distribution<double> u(-scale, scale);
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = u(gen);
  return t;
}

std::size_t pick(std::mt19937_64& gen, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(gen);
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Plain-loop LSTM pass over rows of x in the given order.
std::vector<std::vector<double>> reference_lstm(const Tensor& x, const ops::LstmWeights& w, bool reverse) {
  const std::size_t T = x.dim(0), din = x.dim(1), h = w.hidden();
  std::vector<std::vector<double>> out(T, std::vector<double>(h));
  std::vector<double> hp(h, 0.0), cp(h, 0.0);
  for (std::size_t step = 0; step < T; ++step) {
    const std::size_t t = reverse ? T - 1 - step : step;
    std::vector<double> z(4 * h);
    for (std::size_t j = 0; j < 4 * h; ++j) {
      double s = w.bias[j];
      for (std::size_t i = 0; i < din; ++i) s += x.at(t, i) * w.input_weight.at(i, j);
      for (std::size_t i = 0; i < h; ++i) s += hp[i] * w.recurrent_weight.at(i, j);
      z[j] = s;
    }
    for (std::size_t j = 0; j < h; ++j) {
      const double ig = sigmoid(z[j]), fg = sigmoid(z[h + j]), g = std::tanh(z[2 * h + j]), og = sigmoid(z[3 * h + j]);
      cp[j] = fg * cp[j] + ig * g;
      hp[j] = og * std::tanh(cp[j]);
    }
    out[t] = hp;
  }
  return out;
}

ops::LstmWeights random_lstm(std::size_t din, std::size_t h, std::mt19937_64& gen) {
  return {random_tensor({din, 4 * h}, gen, 0.6), random_tensor({h, 4 * h}, gen, 0.6), random_tensor({4 * h}, gen, 0.3)};
}

// softmax(q k^T / sqrt(d)) v by explicit loops.
Tensor reference_attention(const Tensor& tq, const Tensor& tkv, const ops::AttentionWeights& w) {
  const std::size_t gq = tq.dim(0), gk = tkv.dim(0), d = w.dim();
  auto project = [d](const Tensor& t, const Tensor& m) {
    Tensor out({t.dim(0), d});
    for (std::size_t i = 0; i < t.dim(0); ++i)
      for (std::size_t j = 0; j < d; ++j)
        for (std::size_t c = 0; c < t.dim(1); ++c) out.at(i, j) += t.at(i, c) * m.at(c, j);
    return out;
  };
  const Tensor q = project(tq, w.query), k = project(tkv, w.key), v = project(tkv, w.value);
  Tensor out({gq, d});
  for (std::size_t i = 0; i < gq; ++i) {
    std::vector<double> s(gk);
    double mx = -1e300;
    for (std::size_t j = 0; j < gk; ++j) {
      for (std::size_t c = 0; c < d; ++c) s[j] += q.at(i, c) * k.at(j, c);
      s[j] /= std::sqrt(static_cast<double>(d));
      mx = std::max(mx, s[j]);
    }
    double z = 0;
    for (double& e : s) z += (e = std::exp(e - mx));
    for (std::size_t j = 0; j < gk; ++j)
      for (std::size_t c = 0; c < d; ++c) out.at(i, c) += s[j] / z * v.at(j, c);
  }
  return out;
}

}  // namespace

// ---- tensor basics ----

TEST(Tensor, ShapeAndIndexing) {
  Tensor t({2, 3, 4});
  EXPECT_EQ(t.size(), 24u);
  EXPECT_EQ(t.rank(), 3u);
  t.at(1, 2, 3) = 5.0;
  EXPECT_EQ(t[23], 5.0);
  EXPECT_THROW(Tensor({2, 2}, std::vector<double>{1, 2, 3}), Error);
  EXPECT_THROW(t.reshaped({5, 5}), Error);
  EXPECT_EQ(t.reshaped({24})[23], 5.0);
}

TEST(Rng, SeededStreamsRepeat) {
  Rng a(99), b(99), c(100);
  bool differs = false;
  for (int i = 0; i < 100; ++i) {
    const auto x = a.next_u64();
    EXPECT_EQ(x, b.next_u64());
    differs |= x != c.next_u64();
  }
  EXPECT_TRUE(differs);
  Rng r(5);
  for (int i = 0; i < 1000; ++i) {
    const double u = r.uniform();
    EXPECT_GE(u, 0.0);
    EXPECT_LT(u, 1.0);
    EXPECT_LT(r.below(7), 7u);
  }
  EXPECT_NE(derive_seed(1, 2), derive_seed(1, 3));
  EXPECT_EQ(derive_seed(1, 2), derive_seed(1, 2));
}

// ---- forward oracles ----

TEST(Matmul, HandExampleAndIdentity) {
  const Tensor a = Tensor::matrix(2, 2, {1, 2, 3, 4});
  const Tensor b = Tensor::matrix(2, 1, {5, 6});
  const Tensor c = ops::matmul(a, b);
  EXPECT_EQ(c.shape(), (Shape{2, 1}));
  EXPECT_EQ(c[0], 17.0);
  EXPECT_EQ(c[1], 39.0);
  const Tensor eye = Tensor::matrix(3, 3, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  std::mt19937_64 gen(1);
  const Tensor x = random_tensor({3, 5}, gen);
  EXPECT_EQ(ops::matmul(eye, x), x);
  try {
    ops::matmul(a, eye);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kShapeMismatch);
  }
}

TEST(Matmul, TransposeIdentity) {
  std::mt19937_64 gen(2);
  for (int trial = 0; trial < kTrials; ++trial) {
    const std::size_t m = pick(gen, 1, 6), k = pick(gen, 1, 6), n = pick(gen, 1, 6);
    const Tensor a = random_tensor({m, k}, gen), b = random_tensor({k, n}, gen);
    const Tensor lhs = ops::transpose(ops::matmul(a, b));
    const Tensor rhs = ops::matmul(ops::transpose(b), ops::transpose(a));
    for (std::size_t i = 0; i < lhs.size(); ++i) EXPECT_NEAR(lhs[i], rhs[i], 1e-12);
  }
}

TEST(Conv1d, HandExamples) {
  const Tensor x = Tensor::matrix(1, 3, {1, 2, 3});
  const Tensor sum = ops::conv1d(x, Tensor({1, 1, 3}, {1, 1, 1}), Tensor({1}));
  EXPECT_EQ(sum.values(), (std::vector<double>{3, 6, 5}));
  const Tensor id = ops::conv1d(x, Tensor({1, 1, 3}, {0, 1, 0}), Tensor({1}));
  EXPECT_EQ(id.values(), x.values());
}

TEST(Conv1d, MatchesLoopOracle) {
  std::mt19937_64 gen(3);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t cin = pick(gen, 1, 4), cout = pick(gen, 1, 4), T = pick(gen, 1, 8), k = 2 * pick(gen, 0, 3) + 1;
    const Tensor x = random_tensor({cin, T}, gen), w = random_tensor({cout, cin, k}, gen), b = random_tensor({cout}, gen);
    const Tensor y = ops::conv1d(x, w, b);
    ASSERT_EQ(y.shape(), (Shape{cout, T}));
    const long pad = static_cast<long>(k / 2);
    for (std::size_t c = 0; c < cout; ++c)
      for (std::size_t t = 0; t < T; ++t) {
        double s = b[c];
        for (std::size_t ci = 0; ci < cin; ++ci)
          for (std::size_t d = 0; d < k; ++d) {
            const long src = static_cast<long>(t) + static_cast<long>(d) - pad;
            if (src >= 0 && src < static_cast<long>(T)) s += w.at(c, ci, d) * x.at(ci, static_cast<std::size_t>(src));
          }
        EXPECT_NEAR(y.at(c, t), s, 1e-12);
      }
  }
}

TEST(Conv2d, HandExamples) {
  const Tensor ones({1, 3, 3}, 1.0);
  const Tensor valid = ops::conv2d(ones, Tensor({1, 1, 3, 3}, 1.0), Tensor({1}), 2);
  EXPECT_EQ(valid.shape(), (Shape{1, 1, 1}));
  EXPECT_EQ(valid[0], 9.0);
  std::mt19937_64 gen(4);
  const Tensor x = random_tensor({1, 4, 5}, gen);
  EXPECT_EQ(ops::conv2d(x, Tensor({1, 1, 1, 1}, 1.0), Tensor({1}), 1), x);
}

TEST(Conv2d, MatchesLoopOracle) {
  std::mt19937_64 gen(5);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t cin = pick(gen, 1, 3), cout = pick(gen, 1, 3), k = 2 * pick(gen, 0, 2) + 1;
    const std::size_t stride = pick(gen, 1, 3);
    const std::size_t H = pick(gen, k, 8);
    const Tensor x = random_tensor({cin, H, H}, gen), w = random_tensor({cout, cin, k, k}, gen), b = random_tensor({cout}, gen);
    const Tensor y = ops::conv2d(x, w, b, stride);
    const long pad = stride == 1 ? static_cast<long>(k / 2) : 0;
    const std::size_t out = stride == 1 ? H : (H - k) / stride + 1;
    ASSERT_EQ(y.shape(), (Shape{cout, out, out}));
    EXPECT_EQ(ops::conv2d_output_side(H, k, stride), out);
    for (std::size_t c = 0; c < cout; ++c)
      for (std::size_t i = 0; i < out; ++i)
        for (std::size_t j = 0; j < out; ++j) {
          double s = b[c];
          for (std::size_t ci = 0; ci < cin; ++ci)
            for (std::size_t di = 0; di < k; ++di)
              for (std::size_t dj = 0; dj < k; ++dj) {
                const long r = static_cast<long>(i * stride + di) - pad, q = static_cast<long>(j * stride + dj) - pad;
                if (r < 0 || q < 0 || r >= static_cast<long>(H) || q >= static_cast<long>(H)) continue;
                s += w[((c * cin + ci) * k + di) * k + dj] * x.at(ci, static_cast<std::size_t>(r), static_cast<std::size_t>(q));
              }
          EXPECT_NEAR(y.at(c, i, j), s, 1e-12);
        }
  }
}

TEST(Elementwise, ReluSoftmaxPool) {
  EXPECT_EQ(ops::relu(Tensor::vector({-1, 0, 2})).values(), (std::vector<double>{0, 0, 2}));
  for (double v : ops::softmax(Tensor::vector({0, 0, 0}), 0).values()) EXPECT_NEAR(v, 1.0 / 3.0, 1e-15);
  EXPECT_EQ(ops::global_avg_pool(Tensor::matrix(2, 2, {1, 3, 2, 2})).values(), (std::vector<double>{2, 2}));
}

TEST(Softmax, RowsSumToOneAndShiftInvariant) {
  std::mt19937_64 gen(6);
  for (int trial = 0; trial < kTrials; ++trial) {
    const std::size_t r = pick(gen, 1, 5), c = pick(gen, 1, 7);
    const Tensor x = random_tensor({r, c}, gen, 20.0);
    for (std::size_t axis : {0u, 1u}) {
      const Tensor y = ops::softmax(x, axis);
      Tensor shifted = x;
      for (double& v : shifted.data()) v += 123.456;
      const Tensor ys = ops::softmax(shifted, axis);
      for (std::size_t i = 0; i < y.size(); ++i) EXPECT_NEAR(y[i], ys[i], 1e-12);
      const std::size_t outer = axis == 1 ? r : c, inner = axis == 1 ? c : r;
      for (std::size_t o = 0; o < outer; ++o) {
        double s = 0;
        for (std::size_t i = 0; i < inner; ++i) s += axis == 1 ? y.at(o, i) : y.at(i, o);
        EXPECT_NEAR(s, 1.0, 1e-12);
      }
    }
  }
}

TEST(LayerNorm, ConstantAndMoments) {
  const Tensor gain({4}, 1.0), bias({4});
  for (double v : ops::layer_norm(Tensor::vector({3, 3, 3, 3}), gain, bias).values()) EXPECT_EQ(v, 0.0);
  std::mt19937_64 gen(7);
  for (int trial = 0; trial < kTrials; ++trial) {
    const std::size_t d = pick(gen, 2, 32);
    const Tensor y = ops::layer_norm(random_tensor({3, d}, gen, 5.0), Tensor({d}, 1.0), Tensor({d}));
    for (std::size_t r = 0; r < 3; ++r) {
      double mean = 0, var = 0;
      for (std::size_t i = 0; i < d; ++i) mean += y.at(r, i);
      mean /= static_cast<double>(d);
      for (std::size_t i = 0; i < d; ++i) var += (y.at(r, i) - mean) * (y.at(r, i) - mean);
      EXPECT_NEAR(mean, 0.0, 1e-9);
      EXPECT_NEAR(var / static_cast<double>(d), 1.0, 1e-3);
    }
  }
}

TEST(BiLstm, ZeroWeightsGiveZeroOutput) {
  const ops::LstmWeights z{Tensor({3, 8}), Tensor({2, 8}), Tensor({8})};
  std::mt19937_64 gen(8);
  const Tensor y = ops::bilstm_forward(random_tensor({5, 3}, gen), z, z);
  EXPECT_EQ(y.shape(), (Shape{5, 4}));
  for (double v : y.values()) EXPECT_EQ(v, 0.0);
}

TEST(BiLstm, MatchesLoopOracle) {
  std::mt19937_64 gen(9);
  for (int trial = 0; trial < kTrials; ++trial) {
    const std::size_t T = pick(gen, 1, 6), din = pick(gen, 1, 4), h = pick(gen, 1, 4);
    const Tensor x = random_tensor({T, din}, gen);
    const auto fw = random_lstm(din, h, gen), bw = random_lstm(din, h, gen);
    const Tensor y = ops::bilstm_forward(x, fw, bw);
    const auto rf = reference_lstm(x, fw, false), rb = reference_lstm(x, bw, true);
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t j = 0; j < h; ++j) {
        EXPECT_NEAR(y.at(t, j), rf[t][j], 1e-12);
        EXPECT_NEAR(y.at(t, h + j), rb[t][j], 1e-12);
      }
  }
}

TEST(BiLstm, ReversalSwapsHalvesWithSharedWeights) {
  std::mt19937_64 gen(10);
  const std::size_t T = 3, h = 2;
  const Tensor x = random_tensor({T, 2}, gen);
  Tensor xr({T, 2});
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t i = 0; i < 2; ++i) xr.at(t, i) = x.at(T - 1 - t, i);
  const auto w = random_lstm(2, h, gen);
  const Tensor y = ops::bilstm_forward(x, w, w), yr = ops::bilstm_forward(xr, w, w);
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t j = 0; j < h; ++j) {
      EXPECT_NEAR(yr.at(t, j), y.at(T - 1 - t, h + j), 1e-14);
      EXPECT_NEAR(yr.at(t, h + j), y.at(T - 1 - t, j), 1e-14);
    }
}

TEST(Attention, MatchesLoopOracle) {
  std::mt19937_64 gen(11);
  for (int trial = 0; trial < kTrials; ++trial) {
    const std::size_t g = pick(gen, 1, 5), c1 = pick(gen, 1, 6), c2 = pick(gen, 1, 6), d = pick(gen, 1, 5);
    const Tensor tq = random_tensor({g, c1}, gen), tkv = random_tensor({g, c2}, gen);
    const ops::AttentionWeights w{random_tensor({c1, d}, gen), random_tensor({c2, d}, gen), random_tensor({c2, d}, gen)};
    ops::AttentionTrace tr;
    const Tensor y = ops::cross_attention(tq, tkv, w, &tr);
    const Tensor ref = reference_attention(tq, tkv, w);
    for (std::size_t i = 0; i < y.size(); ++i) EXPECT_NEAR(y[i], ref[i], 1e-12);
    for (std::size_t i = 0; i < g; ++i) {
      double s = 0;
      for (std::size_t j = 0; j < g; ++j) s += tr.weights.at(i, j);
      EXPECT_NEAR(s, 1.0, 1e-12);
    }
  }
}

TEST(Attention, DegenerateCases) {
  std::mt19937_64 gen(12);
  const ops::AttentionWeights w{random_tensor({3, 4}, gen), random_tensor({3, 4}, gen), random_tensor({3, 4}, gen)};
  const Tensor single = random_tensor({1, 3}, gen);
  const Tensor y = ops::intra_attention(single, w);
  const Tensor v = ops::matmul(single, w.value);
  EXPECT_EQ(y, v);

  Tensor same({4, 3});
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 3; ++j) same.at(i, j) = single.at(0, j);
  ops::AttentionTrace tr;
  ops::intra_attention(same, w, &tr);
  for (double a : tr.weights.values()) EXPECT_NEAR(a, 0.25, 1e-15);

  const Tensor t = random_tensor({3, 3}, gen);
  EXPECT_EQ(ops::cross_attention(t, t, w), ops::intra_attention(t, w));

  const Tensor other = random_tensor({1, 3}, gen);
  EXPECT_EQ(ops::cross_attention(single, other, w), ops::matmul(other, w.value));
}

// ---- gradient checks ----

TEST(GradCheck, Matmul) {
  std::mt19937_64 gen(20);
  const DiffOp op{[](const std::vector<Tensor>& in) { return ops::matmul(in[0], in[1]); },
                  [](const std::vector<Tensor>& in, const Tensor& d) {
                    auto g = ops::matmul_backward(in[0], in[1], d);
                    return std::vector<Tensor>{g.da, g.db};
                  }};
  EXPECT_LT(grad_check(op, {random_tensor({3, 4}, gen), random_tensor({4, 2}, gen)}), 1e-6);
  for (int trial = 0; trial < kTrials; ++trial) {
    const std::size_t m = pick(gen, 1, 5), k = pick(gen, 1, 5), n = pick(gen, 1, 5);
    EXPECT_LT(grad_check(op, {random_tensor({m, k}, gen), random_tensor({k, n}, gen)}, 1e-5, trial), kGradTol);
  }
}

TEST(GradCheck, Conv1d) {
  std::mt19937_64 gen(21);
  const DiffOp op{[](const std::vector<Tensor>& in) { return ops::conv1d(in[0], in[1], in[2]); },
                  [](const std::vector<Tensor>& in, const Tensor& d) {
                    auto g = ops::conv1d_backward(in[0], in[1], d);
                    return std::vector<Tensor>{g.dx, g.dkernels, g.dbias};
                  }};
  for (int trial = 0; trial < kTrials; ++trial) {
    const std::size_t cin = pick(gen, 1, 3), cout = pick(gen, 1, 3), T = pick(gen, 1, 7), k = 2 * pick(gen, 0, 2) + 1;
    EXPECT_LT(grad_check(op, {random_tensor({cin, T}, gen), random_tensor({cout, cin, k}, gen), random_tensor({cout}, gen)},
                         1e-5, trial),
              kGradTol);
  }
}

TEST(GradCheck, Conv2d) {
  std::mt19937_64 gen(22);
  for (std::size_t stride : {1u, 2u}) {
    const DiffOp op{[stride](const std::vector<Tensor>& in) { return ops::conv2d(in[0], in[1], in[2], stride); },
                    [stride](const std::vector<Tensor>& in, const Tensor& d) {
                      auto g = ops::conv2d_backward(in[0], in[1], d, stride);
                      return std::vector<Tensor>{g.dx, g.dkernels, g.dbias};
                    }};
    EXPECT_LT(grad_check(op, {random_tensor({2, 5, 5}, gen), random_tensor({2, 2, 3, 3}, gen), random_tensor({2}, gen)}),
              1e-6);
    for (int trial = 0; trial < kTrials; ++trial) {
      const std::size_t cin = pick(gen, 1, 2), cout = pick(gen, 1, 3), k = 2 * pick(gen, 0, 1) + 1, H = pick(gen, k, 6);
      EXPECT_LT(grad_check(op, {random_tensor({cin, H, H}, gen), random_tensor({cout, cin, k, k}, gen),
                                random_tensor({cout}, gen)},
                           1e-5, trial),
                kGradTol);
    }
  }
}

TEST(GradCheck, Relu) {
  std::mt19937_64 gen(23);
  const DiffOp op{[](const std::vector<Tensor>& in) { return ops::relu(in[0]); },
                  [](const std::vector<Tensor>& in, const Tensor& d) {
                    return std::vector<Tensor>{ops::relu_backward(in[0], d)};
                  }};
  for (int trial = 0; trial < kTrials; ++trial) {
    Tensor x = random_tensor({pick(gen, 1, 10)}, gen);
    for (double& v : x.data())
      if (std::abs(v) < 1e-3) v = 0.5;  // keep clear of the kink
    EXPECT_LT(grad_check(op, {x}, 1e-5, trial), kGradTol);
  }
}

TEST(GradCheck, Softmax) {
  std::mt19937_64 gen(24);
  for (std::size_t axis : {0u, 1u}) {
    const DiffOp op{[axis](const std::vector<Tensor>& in) { return ops::softmax(in[0], axis); },
                    [axis](const std::vector<Tensor>& in, const Tensor& d) {
                      return std::vector<Tensor>{ops::softmax_backward(ops::softmax(in[0], axis), d, axis)};
                    }};
    for (int trial = 0; trial < kTrials; ++trial)
      EXPECT_LT(grad_check(op, {random_tensor({pick(gen, 1, 4), pick(gen, 1, 5)}, gen, 3.0)}, 1e-5, trial), kGradTol);
  }
}

TEST(GradCheck, LayerNorm) {
  std::mt19937_64 gen(25);
  const DiffOp op{[](const std::vector<Tensor>& in) { return ops::layer_norm(in[0], in[1], in[2]); },
                  [](const std::vector<Tensor>& in, const Tensor& d) {
                    auto g = ops::layer_norm_backward(in[0], in[1], d);
                    return std::vector<Tensor>{g.dx, g.dgain, g.dbias};
                  }};
  for (int trial = 0; trial < kTrials; ++trial) {
    const std::size_t d = pick(gen, 2, 8);
    const Shape xs = trial % 2 ? Shape{d} : Shape{pick(gen, 1, 3), d};
    EXPECT_LT(grad_check(op, {random_tensor(xs, gen, 2.0), random_tensor({d}, gen), random_tensor({d}, gen)}, 1e-5, trial),
              kGradTol);
  }
}

TEST(GradCheck, GlobalAvgPool) {
  std::mt19937_64 gen(26);
  const DiffOp op{[](const std::vector<Tensor>& in) { return ops::global_avg_pool(in[0]); },
                  [](const std::vector<Tensor>& in, const Tensor& d) {
                    return std::vector<Tensor>{ops::global_avg_pool_backward(in[0].shape(), d)};
                  }};
  for (int trial = 0; trial < kTrials; ++trial) {
    const Shape s = trial % 2 ? Shape{pick(gen, 1, 4), pick(gen, 1, 6)} : Shape{pick(gen, 1, 3), pick(gen, 1, 4), pick(gen, 1, 4)};
    EXPECT_LT(grad_check(op, {random_tensor(s, gen)}, 1e-5, trial), kGradTol);
  }
}

TEST(GradCheck, ConcatLinearTranspose) {
  std::mt19937_64 gen(27);
  const DiffOp cat{[](const std::vector<Tensor>& in) { return ops::concat(in[0], in[1], 0); },
                   [](const std::vector<Tensor>& in, const Tensor& d) {
                     auto g = ops::concat_backward(in[0].shape(), in[1].shape(), d, 0);
                     return std::vector<Tensor>{g.da, g.db};
                   }};
  const DiffOp lin{[](const std::vector<Tensor>& in) { return ops::linear(in[0], in[1], in[2]); },
                   [](const std::vector<Tensor>& in, const Tensor& d) {
                     auto g = ops::linear_backward(in[0], in[1], d);
                     return std::vector<Tensor>{g.dx, g.dweight, g.dbias};
                   }};
  const DiffOp tr{[](const std::vector<Tensor>& in) { return ops::transpose(in[0]); },
                  [](const std::vector<Tensor>&, const Tensor& d) { return std::vector<Tensor>{ops::transpose(d)}; }};
  for (int trial = 0; trial < kTrials; ++trial) {
    EXPECT_LT(grad_check(cat, {random_tensor({pick(gen, 1, 5)}, gen), random_tensor({pick(gen, 1, 5)}, gen)}, 1e-5, trial),
              kGradTol);
    const std::size_t din = pick(gen, 1, 5), dout = pick(gen, 1, 5);
    const Shape xs = trial % 2 ? Shape{din} : Shape{pick(gen, 1, 3), din};
    EXPECT_LT(grad_check(lin, {random_tensor(xs, gen), random_tensor({din, dout}, gen), random_tensor({dout}, gen)}, 1e-5, trial),
              kGradTol);
    EXPECT_LT(grad_check(tr, {random_tensor({pick(gen, 1, 4), pick(gen, 1, 4)}, gen)}, 1e-5, trial), kGradTol);
  }
}

TEST(GradCheck, BiLstm) {
  std::mt19937_64 gen(28);
  const DiffOp op{[](const std::vector<Tensor>& in) {
                    return ops::bilstm_forward(in[0], {in[1], in[2], in[3]}, {in[4], in[5], in[6]});
                  },
                  [](const std::vector<Tensor>& in, const Tensor& d) {
                    const ops::LstmWeights f{in[1], in[2], in[3]}, b{in[4], in[5], in[6]};
                    ops::BiLstmTrace trace;
                    ops::bilstm_forward(in[0], f, b, &trace);
                    auto g = ops::bilstm_backward(in[0], f, b, trace, d);
                    return std::vector<Tensor>{g.dx,
                                               g.forward.dinput_weight,
                                               g.forward.drecurrent_weight,
                                               g.forward.dbias,
                                               g.backward.dinput_weight,
                                               g.backward.drecurrent_weight,
                                               g.backward.dbias};
                  }};
  auto inputs = [&](std::size_t T, std::size_t din, std::size_t h) {
    const auto f = random_lstm(din, h, gen), b = random_lstm(din, h, gen);
    return std::vector<Tensor>{random_tensor({T, din}, gen), f.input_weight, f.recurrent_weight, f.bias,
                               b.input_weight, b.recurrent_weight, b.bias};
  };
  EXPECT_LT(grad_check(op, inputs(4, 3, 3)), 1e-5);
  for (int trial = 0; trial < kTrials; ++trial)
    EXPECT_LT(grad_check(op, inputs(pick(gen, 1, 5), pick(gen, 1, 3), pick(gen, 1, 3)), 1e-5, trial), kGradTol);
}

TEST(GradCheck, IntraAndCrossAttention) {
  std::mt19937_64 gen(29);
  const DiffOp cross{[](const std::vector<Tensor>& in) {
                       return ops::cross_attention(in[0], in[1], {in[2], in[3], in[4]});
                     },
                     [](const std::vector<Tensor>& in, const Tensor& d) {
                       const ops::AttentionWeights w{in[2], in[3], in[4]};
                       ops::AttentionTrace tr;
                       ops::cross_attention(in[0], in[1], w, &tr);
                       auto g = ops::cross_attention_backward(in[0], in[1], w, tr, d);
                       return std::vector<Tensor>{g.dtokens_q, g.dtokens_kv, g.dquery, g.dkey, g.dvalue};
                     }};
  const DiffOp intra{[](const std::vector<Tensor>& in) { return ops::intra_attention(in[0], {in[1], in[2], in[3]}); },
                     [](const std::vector<Tensor>& in, const Tensor& d) {
                       const ops::AttentionWeights w{in[1], in[2], in[3]};
                       ops::AttentionTrace tr;
                       ops::intra_attention(in[0], w, &tr);
                       auto g = ops::cross_attention_backward(in[0], in[0], w, tr, d);
                       return std::vector<Tensor>{g.dtokens_q + g.dtokens_kv, g.dquery, g.dkey, g.dvalue};
                     }};
  for (int trial = 0; trial < kTrials; ++trial) {
    const std::size_t g = pick(gen, 1, 4), c1 = pick(gen, 1, 4), c2 = pick(gen, 1, 4), d = pick(gen, 1, 4);
    EXPECT_LT(grad_check(cross, {random_tensor({g, c1}, gen), random_tensor({g, c2}, gen), random_tensor({c1, d}, gen),
                                 random_tensor({c2, d}, gen), random_tensor({c2, d}, gen)},
                         1e-5, trial),
              kGradTol);
    EXPECT_LT(grad_check(intra, {random_tensor({g, c1}, gen), random_tensor({c1, d}, gen), random_tensor({c1, d}, gen),
                                 random_tensor({c1, d}, gen)},
                         1e-5, trial),
              kGradTol);
  }
}

TEST(GradCheck, ReportsNonFiniteGradient) {
  const DiffOp op{[](const std::vector<Tensor>& in) { return in[0]; },
                  [](const std::vector<Tensor>& in, const Tensor&) {
                    return std::vector<Tensor>{Tensor(in[0].shape(), std::nan(""))};
                  }};
  try {
    grad_check(op, {Tensor::vector({1.0})});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kNonFiniteGradient);
  }
}
