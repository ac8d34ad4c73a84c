#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numeric>
#include <vector>

#include "acblstm/layers.hpp"
#include "acblstm/tensor.hpp"

using namespace acblstm;

namespace {

double mean_of(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double biased_std(const std::vector<double>& v) {
  const double m = mean_of(v);
  double acc = 0.0;
  for (double x : v) acc += (x - m) * (x - m);
  return std::sqrt(acc / static_cast<double>(v.size()));
}

}  // namespace

TEST_CASE("conv_1xd: hand-computed filters") {
  // one filter w=[1,-1], b=0 on word [2,3] -> relu(-1) = 0
  Conv1xdParams p;
  p.weight = Tensor::from_data({1, 2}, {1, -1}, true);
  p.bias = Tensor::zeros({1}, true);
  Tensor x = Tensor::from_data({1, 1, 2}, {2, 3});
  Tensor out = conv_1xd(x, p, nullptr, Mode::Eval);
  CHECK(out.shape() == std::vector<int>{1, 1, 1});
  CHECK(out[0] == 0.0);

  // a one-hot filter copies relu of the input's first column
  Conv1xdParams proj;
  proj.weight = Tensor::from_data({1, 3}, {1, 0, 0}, true);
  proj.bias = Tensor::zeros({1}, true);
  Tensor sent = Tensor::from_data({1, 2, 3}, {-1, 5, 5, 2, 7, 7});
  Tensor got = conv_1xd(sent, proj, nullptr, Mode::Eval);
  CHECK(got.values() == std::vector<double>{0, 2});

  Tensor wrong = Tensor::from_data({1, 1, 4}, {1, 2, 3, 4});
  CHECK_THROWS_AS(conv_1xd(wrong, p, nullptr, Mode::Eval), shape_error);
}

TEST_CASE("conv_1xd: gradient vs finite differences") {
  Rng rng(21);
  Conv1xdParams p = Conv1xdParams::init(3, 4, rng);
  Tensor x = Tensor::uniform({2, 5, 4}, 0.2, 1.0, rng, true);
  CHECK(finite_diff_check(
            [&](const Tensor& t) { return mean_all(conv_1xd(t, p, nullptr, Mode::Eval)); },
            x) < 1e-5);
  CHECK(finite_diff_check(
            [&](const Tensor&) { return mean_all(conv_1xd(x, p, nullptr, Mode::Eval)); },
            p.weight) < 1e-5);
}

TEST_CASE("conv_kx1: sliding sums and output length") {
  // k=1, w=1, b=0 is the identity on non-negative input
  ConvKx1Params ident;
  ident.weight = Tensor::from_data({1, 1}, {1}, true);
  ident.bias = Tensor::zeros({1}, true);
  ident.k = 1;
  Tensor x = Tensor::from_data({1, 3, 1}, {1, 2, 3});
  CHECK(conv_kx1(x, ident, nullptr, Mode::Eval).values() == std::vector<double>{1, 2, 3});

  // k=2, w=[1,1]: sliding sum of [1,2,3] -> [3,5]
  ConvKx1Params sum2;
  sum2.weight = Tensor::from_data({1, 2}, {1, 1}, true);
  sum2.bias = Tensor::zeros({1}, true);
  sum2.k = 2;
  CHECK(conv_kx1(x, sum2, nullptr, Mode::Eval).values() == std::vector<double>{3, 5});

  // L=10, k=4 -> length 7
  Rng rng(5);
  ConvKx1Params p = ConvKx1Params::init(3, 4, rng);
  Tensor longer = Tensor::uniform({2, 10, 3}, -1, 1, rng);
  CHECK(conv_kx1(longer, p, nullptr, Mode::Eval).shape() == std::vector<int>{2, 7, 3});

  Tensor tiny = Tensor::uniform({1, 3, 3}, -1, 1, rng);
  CHECK_THROWS_AS(conv_kx1(tiny, p, nullptr, Mode::Eval), shape_error);
}

TEST_CASE("conv_kx1: output length is L-k+1 for random sizes") {
  Rng rng(31);
  for (int rep = 0; rep < 25; ++rep) {
    const int k = 1 + static_cast<int>(rng.below(5));
    const int len = k + static_cast<int>(rng.below(20));
    const int n = 1 + static_cast<int>(rng.below(4));
    ConvKx1Params p = ConvKx1Params::init(n, k, rng);
    Tensor x = Tensor::uniform({1, len, n}, -1, 1, rng);
    CHECK(conv_kx1(x, p, nullptr, Mode::Eval).shape() == std::vector<int>{1, len - k + 1, n});
  }
}

TEST_CASE("conv_kx1: gradient vs finite differences") {
  Rng rng(41);
  ConvKx1Params p = ConvKx1Params::init(2, 3, rng);
  Tensor x = Tensor::uniform({2, 6, 2}, 0.2, 1.0, rng, true);
  CHECK(finite_diff_check(
            [&](const Tensor& t) { return mean_all(conv_kx1(t, p, nullptr, Mode::Eval)); },
            x) < 1e-5);
  CHECK(finite_diff_check(
            [&](const Tensor&) { return mean_all(conv_kx1(x, p, nullptr, Mode::Eval)); },
            p.weight) < 1e-5);
}

TEST_CASE("deconv2d: stride-2 doubles spatial dims and halves channels") {
  Rng rng(51);
  Deconv2dParams p = Deconv2dParams::init(4, 4, 4, 2, 2, rng);
  Tensor x = Tensor::uniform({1, 10, 75, 4}, -1, 1, rng);
  CHECK(deconv2d(x, p).shape() == std::vector<int>{1, 20, 150, 2});
}

TEST_CASE("deconv2d: stride-1 zero filter gives all-zero same-size output") {
  Rng rng(52);
  Deconv2dParams p;
  p.weight = Tensor::zeros({4, 4, 1, 1}, true);
  p.bias = Tensor::zeros({1}, true);
  p.stride = 1;
  Tensor x = Tensor::uniform({1, 5, 6, 1}, -1, 1, rng);
  Tensor out = deconv2d(x, p);
  CHECK(out.shape() == std::vector<int>{1, 5, 6, 1});
  for (std::size_t i = 0; i < out.size(); ++i) CHECK(out[i] == 0.0);
}

TEST_CASE("deconv2d: gradient vs finite differences on 4x4x2 input") {
  Rng rng(53);
  Deconv2dParams p2 = Deconv2dParams::init(4, 4, 2, 3, 2, rng);
  Tensor x = Tensor::uniform({1, 4, 4, 2}, -1, 1, rng, true);
  CHECK(finite_diff_check([&](const Tensor& t) { return mean_all(deconv2d(t, p2)); }, x) <
        1e-5);
  CHECK(finite_diff_check([&](const Tensor&) { return mean_all(deconv2d(x, p2)); },
                          p2.weight) < 1e-5);
  Deconv2dParams p1 = Deconv2dParams::init(4, 4, 2, 1, 1, rng);
  CHECK(finite_diff_check([&](const Tensor& t) { return mean_all(deconv2d(t, p1)); }, x) <
        1e-5);
}

TEST_CASE("batchnorm: constant input collapses to beta") {
  BatchNormParams p = BatchNormParams::init(3);
  Tensor x = Tensor::full({4, 3}, 5.0);
  Tensor out = batchnorm(x, p, Mode::Train);
  for (std::size_t i = 0; i < out.size(); ++i)
    CHECK(out[i] == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("batchnorm: train mode normalizes per channel") {
  Rng rng(61);
  BatchNormParams p = BatchNormParams::init(2);
  Tensor x = Tensor::uniform({64, 2}, -3, 7, rng);
  Tensor out = batchnorm(x, p, Mode::Train);
  for (int c = 0; c < 2; ++c) {
    std::vector<double> col;
    for (int i = 0; i < 64; ++i) col.push_back(out.at({i, c}));
    CHECK(mean_of(col) == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(biased_std(col) == doctest::Approx(1.0).epsilon(1e-5));
  }
}

TEST_CASE("batchnorm: affine contract - gamma 2, beta 3 on normalized data") {
  Rng rng(62);
  BatchNormParams p = BatchNormParams::init(1);
  p.epsilon = 1e-12;  // keeps the epsilon shrinkage below the tolerance
  p.gamma.mutable_values()[0] = 2.0;
  p.beta.mutable_values()[0] = 3.0;
  // data with exact sample mean 0, biased std 1
  std::vector<double> raw(32);
  for (double& v : raw) v = rng.normal();
  const double m = mean_of(raw);
  for (double& v : raw) v -= m;
  const double s = biased_std(raw);
  for (double& v : raw) v /= s;
  Tensor x = Tensor::from_data({32, 1}, raw);
  Tensor out = batchnorm(x, p, Mode::Train);
  std::vector<double> col(out.values());
  CHECK(mean_of(col) == doctest::Approx(3.0).epsilon(1e-6));
  CHECK(biased_std(col) == doctest::Approx(2.0).epsilon(1e-6));
}

TEST_CASE("batchnorm: eval mode is deterministic and batch-size independent") {
  BatchNormParams p = BatchNormParams::init(2);
  p.running_mean = Tensor::from_data({2}, {1.0, -1.0});
  p.running_var = Tensor::from_data({2}, {4.0, 0.25});
  Tensor one = Tensor::from_data({1, 2}, {3.0, 0.0});
  Tensor big = Tensor::from_data({3, 2}, {3.0, 0.0, 9.9, 1.2, -4.0, 0.7});
  Tensor o1 = batchnorm(one, p, Mode::Eval);
  Tensor o2 = batchnorm(big, p, Mode::Eval);
  CHECK(o1.at({0, 0}) == o2.at({0, 0}));
  CHECK(o1.at({0, 1}) == o2.at({0, 1}));
  CHECK(batchnorm(one, p, Mode::Eval).values() == o1.values());

  CHECK_THROWS_AS(batchnorm(one, p, Mode::Train), contract_error);
}

TEST_CASE("batchnorm: running stats update with momentum") {
  BatchNormParams p = BatchNormParams::init(1);
  Tensor x = Tensor::from_data({2, 1}, {1.0, 3.0});  // mean 2, biased var 1
  batchnorm(x, p, Mode::Train);
  CHECK(p.running_mean[0] == doctest::Approx(0.9 * 0.0 + 0.1 * 2.0));
  CHECK(p.running_var[0] == doctest::Approx(0.9 * 1.0 + 0.1 * 1.0));
}

TEST_CASE("batchnorm: gradients vs finite differences, both modes") {
  Rng rng(63);
  BatchNormParams p = BatchNormParams::init(3);
  Tensor x = Tensor::uniform({6, 3}, -2, 2, rng, true);
  Tensor probe = Tensor::uniform({6, 3}, -1, 1, rng);  // fixed mixing weights
  CHECK(finite_diff_check(
            [&](const Tensor& t) {
              BatchNormParams q = BatchNormParams::init(3);  // fresh running stats per eval
              return mean_all(mul(batchnorm(t, q, Mode::Train), probe));
            },
            x) < 1e-5);
  CHECK(finite_diff_check(
            [&](const Tensor& t) { return mean_all(mul(batchnorm(t, p, Mode::Eval), probe)); },
            x) < 1e-5);
  CHECK(finite_diff_check(
            [&](const Tensor&) { return mean_all(batchnorm(x, p, Mode::Eval)); }, p.gamma) <
        1e-6);
}

TEST_CASE("dropout: identity cases and Monte Carlo mean") {
  Rng rng(71);
  Tensor x = Tensor::uniform({10}, -1, 1, rng);
  CHECK(dropout(x, 0.0, Mode::Train, rng).values() == x.values());
  CHECK(dropout(x, 0.9, Mode::Eval, rng).values() == x.values());
  CHECK_THROWS_AS(dropout(x, 1.0, Mode::Train, rng), config_error);

  Tensor ones = Tensor::full({100000}, 1.0);
  Tensor dropped = dropout(ones, 0.5, Mode::Train, rng);
  CHECK(mean_of(dropped.values()) > 0.98);
  CHECK(mean_of(dropped.values()) < 1.02);
}

TEST_CASE("dropout: bit-reproducible under a fixed seed") {
  Tensor x = Tensor::full({64}, 2.0);
  Rng a(123), b(123);
  CHECK(dropout(x, 0.3, Mode::Train, a).values() == dropout(x, 0.3, Mode::Train, b).values());
}

TEST_CASE("lstm_step: zero weights give zero state") {
  Rng rng(81);
  LstmParams p = LstmParams::init(3, 2, rng);
  for (auto* t : {&p.w_i, &p.w_f, &p.w_o, &p.w_g, &p.u_i, &p.u_f, &p.u_o, &p.u_g,
                  &p.b_i, &p.b_f, &p.b_o, &p.b_g})
    std::fill(t->mutable_values().begin(), t->mutable_values().end(), 0.0);
  Tensor x = Tensor::from_data({1, 2}, {0.5, -0.5});
  Tensor h0 = Tensor::zeros({1, 3});
  Tensor c0 = Tensor::zeros({1, 3});
  auto [h, c] = lstm_step(x, h0, c0, p);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(c[i] == 0.0);
    CHECK(h[i] == 0.0);
  }

  // saturated forget gate preserves the cell: c'=sigma(1000)*1 + sigma(0)*tanh(0)
  std::fill(p.b_f.mutable_values().begin(), p.b_f.mutable_values().end(), 1000.0);
  Tensor c1 = Tensor::full({1, 3}, 1.0);
  auto [h2, c2] = lstm_step(x, h0, c1, p);
  for (std::size_t i = 0; i < 3; ++i) CHECK(c2[i] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("lstm_step: gradient vs finite differences") {
  Rng rng(82);
  LstmParams p = LstmParams::init(3, 2, rng);
  Tensor x = Tensor::uniform({2, 2}, -1, 1, rng, true);
  Tensor h = Tensor::uniform({2, 3}, -1, 1, rng, true);
  Tensor c = Tensor::uniform({2, 3}, -1, 1, rng, true);
  auto loss = [&](const Tensor& xx, const Tensor& hh, const Tensor& cc) {
    auto [hn, cn] = lstm_step(xx, hh, cc, p);
    return mean_all(add(hn, cn));
  };
  CHECK(finite_diff_check([&](const Tensor& t) { return loss(t, h, c); }, x) < 1e-5);
  CHECK(finite_diff_check([&](const Tensor& t) { return loss(x, t, c); }, h) < 1e-5);
  CHECK(finite_diff_check([&](const Tensor& t) { return loss(x, h, t); }, c) < 1e-5);
  CHECK(finite_diff_check([&](const Tensor&) { return loss(x, h, c); }, p.w_g) < 1e-5);
  CHECK(finite_diff_check([&](const Tensor&) { return loss(x, h, c); }, p.u_f) < 1e-5);
}

TEST_CASE("blstm: T=1 backward direction equals a single step with backward weights") {
  Rng rng(91);
  BlstmStack stack = BlstmStack::init(1, 2, 3, rng);
  Tensor seq = Tensor::uniform({1, 1, 2}, -1, 1, rng);
  Tensor out = blstm_forward(seq, stack, 0.0, Mode::Eval, nullptr);
  CHECK(out.shape() == std::vector<int>{1, 1, 6});

  Tensor x0 = reshape(seq, {1, 2});
  auto [hb, cb] = lstm_step(x0, Tensor::zeros({1, 3}), Tensor::zeros({1, 3}),
                            stack.layers[0].bw);
  for (int j = 0; j < 3; ++j) CHECK(out.at({0, 0, 3 + j}) == hb.at({0, j}));
}

TEST_CASE("blstm: backward direction is reverse(forward-on-reversed)") {
  Rng rng(92);
  LstmParams p = LstmParams::init(3, 2, rng);
  Tensor seq = Tensor::uniform({2, 5, 2}, -1, 1, rng);
  Tensor bw = lstm_forward_sequence(seq, p, true);

  // reverse the sequence by hand, run forward, re-reverse
  std::vector<double> rev(seq.size());
  const auto& sv = seq.values();
  for (int b = 0; b < 2; ++b)
    for (int t = 0; t < 5; ++t)
      for (int j = 0; j < 2; ++j)
        rev[(static_cast<std::size_t>(b) * 5 + t) * 2 + j] =
            sv[(static_cast<std::size_t>(b) * 5 + (4 - t)) * 2 + j];
  Tensor fw = lstm_forward_sequence(Tensor::from_data({2, 5, 2}, rev), p, false);
  for (int b = 0; b < 2; ++b)
    for (int t = 0; t < 5; ++t)
      for (int j = 0; j < 3; ++j)
        CHECK(bw.at({b, t, j}) == fw.at({b, 4 - t, j}));
}

TEST_CASE("blstm: hidden dim 100 gives 200-wide step features") {
  Rng rng(93);
  BlstmStack stack = BlstmStack::init(1, 4, 100, rng);
  Tensor seq = Tensor::uniform({1, 3, 4}, -1, 1, rng);
  CHECK(blstm_forward(seq, stack, 0.0, Mode::Eval, nullptr).shape() ==
        std::vector<int>{1, 3, 200});
}

TEST_CASE("blstm: palindrome with tied weights mirrors forward and backward halves") {
  Rng rng(94);
  BlstmStack stack = BlstmStack::init(1, 2, 3, rng);
  stack.layers[0].bw = stack.layers[0].fw;  // tie directions
  std::vector<double> vals = {0.1, -0.2, 0.4, 0.5, 0.1, -0.2};  // palindromic in t
  Tensor seq = Tensor::from_data({1, 3, 2}, vals);
  Tensor out = blstm_forward(seq, stack, 0.0, Mode::Eval, nullptr);
  const int T = 3, H = 3;
  for (int t = 0; t < T; ++t)
    for (int j = 0; j < H; ++j)
      CHECK(out.at({0, t, H + j}) == doctest::Approx(out.at({0, T - 1 - t, j})).epsilon(1e-12));
}

TEST_CASE("blstm: stacked layers chain and gradients flow") {
  Rng rng(95);
  BlstmStack stack = BlstmStack::init(2, 2, 3, rng);
  Tensor seq = Tensor::uniform({2, 4, 2}, -1, 1, rng, true);
  Tensor out = blstm_forward(seq, stack, 0.0, Mode::Eval, nullptr);
  CHECK(out.shape() == std::vector<int>{2, 4, 6});
  CHECK(finite_diff_check(
            [&](const Tensor& t) {
              return mean_all(blstm_forward(t, stack, 0.0, Mode::Eval, nullptr));
            },
            seq) < 1e-5);
}

TEST_CASE("dense: identity, constant bias, gradient") {
  DenseParams ident;
  ident.weight = Tensor::from_data({2, 2}, {1, 0, 0, 1}, true);
  ident.bias = Tensor::zeros({2}, true);
  Tensor x = Tensor::from_data({1, 2}, {3, 4});
  CHECK(dense(x, ident).values() == std::vector<double>{3, 4});

  DenseParams constant;
  constant.weight = Tensor::zeros({1, 2}, true);
  constant.bias = Tensor::from_data({1}, {5}, true);
  CHECK(dense(x, constant).values() == std::vector<double>{5});

  Rng rng(96);
  DenseParams p = DenseParams::init(3, 4, rng);
  Tensor in = Tensor::uniform({2, 4}, -1, 1, rng, true);
  CHECK(finite_diff_check([&](const Tensor& t) { return mean_all(dense(t, p)); }, in) < 1e-6);
  CHECK(finite_diff_check([&](const Tensor&) { return mean_all(dense(in, p)); }, p.weight) <
        1e-6);
  CHECK_THROWS_AS(dense(Tensor::zeros({1, 5}), p), shape_error);
}

TEST_CASE("asymmetric pair parameter count is d+k+2 per filter vs k*d+1 full") {
  Rng rng(97);
  const int n = 3, d = 7, k = 4;
  Conv1xdParams a = Conv1xdParams::init(n, d, rng);
  ConvKx1Params b = ConvKx1Params::init(n, k, rng);
  const std::size_t per_filter =
      (a.weight.size() + a.bias.size() + b.weight.size() + b.bias.size()) / n;
  CHECK(per_filter == static_cast<std::size_t>(d + k + 2));
  CHECK(per_filter < static_cast<std::size_t>(k * d + 1));
}

TEST_CASE("lstm init: forget bias starts at 1") {
  Rng rng(98);
  LstmParams p = LstmParams::init(4, 2, rng);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(p.b_f[i] == 1.0);
    CHECK(p.b_i[i] == 0.0);
  }
}
