#include "acblstm/layers.hpp"

#include <cmath>

namespace acblstm {

// -- parameter construction -----------------------------------------------------

Conv1xdParams Conv1xdParams::init(int filters, int width, Rng& rng) {
  if (filters < 1 || width < 1) throw config_error("conv_1xd needs filters >= 1, width >= 1");
  Conv1xdParams p;
  p.weight = Tensor::uniform({filters, width}, -kWeightInitRange, kWeightInitRange, rng, true);
  p.bias = Tensor::zeros({filters}, true);
  return p;
}

void Conv1xdParams::append_named(const std::string& prefix, std::vector<NamedTensor>& out) const {
  out.push_back({prefix + ".weight", weight});
  out.push_back({prefix + ".bias", bias});
}

ConvKx1Params ConvKx1Params::init(int filters, int k, Rng& rng) {
  if (filters < 1 || k < 1) throw config_error("conv_kx1 needs filters >= 1, k >= 1");
  ConvKx1Params p;
  p.weight = Tensor::uniform({filters, k}, -kWeightInitRange, kWeightInitRange, rng, true);
  p.bias = Tensor::zeros({filters}, true);
  p.k = k;
  return p;
}

void ConvKx1Params::append_named(const std::string& prefix, std::vector<NamedTensor>& out) const {
  out.push_back({prefix + ".weight", weight});
  out.push_back({prefix + ".bias", bias});
}

BatchNormParams BatchNormParams::init(int channels) {
  if (channels < 1) throw config_error("batchnorm needs channels >= 1");
  BatchNormParams p;
  p.gamma = Tensor::full({channels}, 1.0, true);
  p.beta = Tensor::zeros({channels}, true);
  p.running_mean = Tensor::zeros({channels});
  p.running_var = Tensor::full({channels}, 1.0);
  return p;
}

void BatchNormParams::append_named(const std::string& prefix, std::vector<NamedTensor>& out) const {
  out.push_back({prefix + ".gamma", gamma});
  out.push_back({prefix + ".beta", beta});
  out.push_back({prefix + ".running_mean", running_mean});
  out.push_back({prefix + ".running_var", running_var});
}

DenseParams DenseParams::init(int out, int in, Rng& rng) {
  if (out < 1 || in < 1) throw config_error("dense needs positive dims");
  DenseParams p;
  p.weight = Tensor::uniform({out, in}, -kWeightInitRange, kWeightInitRange, rng, true);
  p.bias = Tensor::zeros({out}, true);
  return p;
}

void DenseParams::append_named(const std::string& prefix, std::vector<NamedTensor>& out) const {
  out.push_back({prefix + ".weight", weight});
  out.push_back({prefix + ".bias", bias});
}

LstmParams LstmParams::init(int hidden, int in, Rng& rng) {
  if (hidden < 1 || in < 1) throw config_error("lstm needs positive dims");
  auto w = [&] { return Tensor::uniform({hidden, in}, -kWeightInitRange, kWeightInitRange, rng, true); };
  auto u = [&] { return Tensor::uniform({hidden, hidden}, -kWeightInitRange, kWeightInitRange, rng, true); };
  LstmParams p;
  p.w_i = w(); p.w_f = w(); p.w_o = w(); p.w_g = w();
  p.u_i = u(); p.u_f = u(); p.u_o = u(); p.u_g = u();
  p.b_i = Tensor::zeros({hidden}, true);
  p.b_f = Tensor::full({hidden}, 1.0, true);
  p.b_o = Tensor::zeros({hidden}, true);
  p.b_g = Tensor::zeros({hidden}, true);
  return p;
}

void LstmParams::append_named(const std::string& prefix, std::vector<NamedTensor>& out) const {
  out.push_back({prefix + ".w_i", w_i}); out.push_back({prefix + ".w_f", w_f});
  out.push_back({prefix + ".w_o", w_o}); out.push_back({prefix + ".w_g", w_g});
  out.push_back({prefix + ".u_i", u_i}); out.push_back({prefix + ".u_f", u_f});
  out.push_back({prefix + ".u_o", u_o}); out.push_back({prefix + ".u_g", u_g});
  out.push_back({prefix + ".b_i", b_i}); out.push_back({prefix + ".b_f", b_f});
  out.push_back({prefix + ".b_o", b_o}); out.push_back({prefix + ".b_g", b_g});
}

Deconv2dParams Deconv2dParams::init(int kh, int kw, int c_in, int c_out, int stride, Rng& rng) {
  if (kh < 1 || kw < 1 || c_in < 1 || c_out < 1) throw config_error("deconv2d needs positive dims");
  if (stride != 1 && stride != 2) throw config_error("deconv2d stride must be 1 or 2");
  Deconv2dParams p;
  p.weight = Tensor::uniform({kh, kw, c_in, c_out}, -kWeightInitRange, kWeightInitRange, rng, true);
  p.bias = Tensor::zeros({c_out}, true);
  p.stride = stride;
  return p;
}

void Deconv2dParams::append_named(const std::string& prefix, std::vector<NamedTensor>& out) const {
  out.push_back({prefix + ".weight", weight});
  out.push_back({prefix + ".bias", bias});
}

BlstmStack BlstmStack::init(int layers, int in, int hidden, Rng& rng) {
  if (layers < 1) throw config_error("blstm needs at least one layer");
  BlstmStack s;
  s.hidden = hidden;
  int dim = in;
  for (int l = 0; l < layers; ++l) {
    Direction d;
    d.fw = LstmParams::init(hidden, dim, rng);
    d.bw = LstmParams::init(hidden, dim, rng);
    s.layers.push_back(std::move(d));
    dim = 2 * hidden;
  }
  return s;
}

void BlstmStack::append_named(const std::string& prefix, std::vector<NamedTensor>& out) const {
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const std::string base = prefix + ".layer" + std::to_string(l);
    layers[l].fw.append_named(base + ".fw", out);
    layers[l].bw.append_named(base + ".bw", out);
  }
}

// -- batchnorm -------------------------------------------------------------------

Tensor batchnorm(const Tensor& input, BatchNormParams& params, Mode mode) {
  const int channels = params.gamma.dim(0);
  if (input.rank() < 2 || input.shape().back() != channels)
    throw shape_error("batchnorm expects channels-last input matching gamma width");
  const std::size_t total = input.size();
  const std::size_t c = static_cast<std::size_t>(channels);
  const std::size_t n = total / c;  // samples per channel
  const double eps = params.epsilon;
  const auto& x = input.values();

  std::vector<double> mean(c), istd(c);
  if (mode == Mode::Train) {
    if (n < 2)
      throw contract_error("batchnorm train mode needs at least 2 samples per channel");
    std::vector<double> var(c, 0.0);
    for (std::size_t j = 0; j < c; ++j) mean[j] = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < c; ++j) mean[j] += x[i * c + j];
    for (std::size_t j = 0; j < c; ++j) mean[j] /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < c; ++j) {
        const double d = x[i * c + j] - mean[j];
        var[j] += d * d;
      }
    for (std::size_t j = 0; j < c; ++j) var[j] /= static_cast<double>(n);
    for (std::size_t j = 0; j < c; ++j) istd[j] = 1.0 / std::sqrt(var[j] + eps);

    std::vector<double>& rm = params.running_mean.mutable_values();
    std::vector<double>& rv = params.running_var.mutable_values();
    const double m = params.momentum;
    for (std::size_t j = 0; j < c; ++j) {
      rm[j] = m * rm[j] + (1.0 - m) * mean[j];
      rv[j] = m * rv[j] + (1.0 - m) * var[j];
    }
  } else {
    const auto& rm = params.running_mean.values();
    const auto& rv = params.running_var.values();
    for (std::size_t j = 0; j < c; ++j) {
      mean[j] = rm[j];
      istd[j] = 1.0 / std::sqrt(rv[j] + eps);
    }
  }

  const auto& gamma = params.gamma.values();
  const auto& beta = params.beta.values();
  std::vector<double> out(total);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < c; ++j) {
      const std::size_t k = i * c + j;
      out[k] = gamma[j] * (x[k] - mean[j]) * istd[j] + beta[j];
    }

  const bool train = mode == Mode::Train;
  return Tensor::make_op(
      input.shape(), std::move(out), {input, params.gamma, params.beta},
      [input, gp = params.gamma, mean = std::move(mean), istd = std::move(istd), n, c,
       train](const std::vector<double>& g, const std::vector<std::vector<double>*>& gi) {
        const auto& x = input.values();
        const auto& gamma = gp.values();
        std::vector<double> sum_g(c, 0.0), sum_gx(c, 0.0);
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < c; ++j) {
            const std::size_t k = i * c + j;
            const double xhat = (x[k] - mean[j]) * istd[j];
            sum_g[j] += g[k];
            sum_gx[j] += g[k] * xhat;
          }
        if (gi[1])
          for (std::size_t j = 0; j < c; ++j) (*gi[1])[j] += sum_gx[j];
        if (gi[2])
          for (std::size_t j = 0; j < c; ++j) (*gi[2])[j] += sum_g[j];
        if (gi[0]) {
          std::vector<double>& dx = *gi[0];
          const double inv_n = 1.0 / static_cast<double>(n);
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < c; ++j) {
              const std::size_t k = i * c + j;
              if (train) {
                // batch statistics participate in the gradient
                const double xhat = (x[k] - mean[j]) * istd[j];
                dx[k] += gamma[j] * istd[j] *
                         (g[k] - sum_g[j] * inv_n - xhat * sum_gx[j] * inv_n);
              } else {
                dx[k] += gamma[j] * istd[j] * g[k];
              }
            }
        }
      });
}

// -- dropout ---------------------------------------------------------------------

Tensor dropout(const Tensor& input, double rate, Mode mode, Rng& rng) {
  if (rate < 0.0 || rate >= 1.0)
    throw config_error("dropout rate must lie in [0,1), got " + std::to_string(rate));
  if (mode == Mode::Eval || rate == 0.0) return input;
  const std::size_t total = input.size();
  const double scale = 1.0 / (1.0 - rate);
  std::vector<double> mask(total);
  for (double& m : mask) m = rng.uniform01() >= rate ? scale : 0.0;
  const auto& x = input.values();
  std::vector<double> out(total);
  for (std::size_t i = 0; i < total; ++i) out[i] = x[i] * mask[i];
  return Tensor::make_op(input.shape(), std::move(out), {input},
                         [mask = std::move(mask)](const std::vector<double>& g,
                                                  const std::vector<std::vector<double>*>& gi) {
                           if (!gi[0]) return;
                           for (std::size_t i = 0; i < g.size(); ++i)
                             (*gi[0])[i] += g[i] * mask[i];
                         });
}

// -- convolutions ------------------------------------------------------------------

Tensor conv_1xd(const Tensor& input, const Conv1xdParams& params, BatchNormParams* bn,
                Mode mode) {
  if (input.rank() != 3) throw shape_error("conv_1xd expects [B, L, d] input");
  const int b = input.dim(0), len = input.dim(1), d = input.dim(2);
  if (d != params.weight.dim(1))
    throw shape_error("conv_1xd width mismatch: input d=" + std::to_string(d) +
                      ", filter d=" + std::to_string(params.weight.dim(1)));
  const int n = params.weight.dim(0);
  Tensor flat = reshape(input, {b * len, d});
  Tensor affine = add_rowwise(matmul(flat, transpose2d(params.weight)), params.bias);
  Tensor features = reshape(affine, {b, len, n});
  if (bn) features = batchnorm(features, *bn, mode);
  return relu(features);
}

namespace {

// Depthwise sliding-window product: out[b,t,i] = sum_r w[i,r] * in[b,t+r,i] + bias[i].
Tensor depthwise_window(const Tensor& input, const Tensor& weight, const Tensor& bias) {
  const int b = input.dim(0), len = input.dim(1), n = input.dim(2);
  const int k = weight.dim(1);
  const int out_len = len - k + 1;
  const auto& x = input.values();
  const auto& w = weight.values();
  const auto& bv = bias.values();
  std::vector<double> out(static_cast<std::size_t>(b) * out_len * n);
  for (int bi = 0; bi < b; ++bi)
    for (int t = 0; t < out_len; ++t) {
      double* orow = out.data() + (static_cast<std::size_t>(bi) * out_len + t) * n;
      for (int i = 0; i < n; ++i) orow[i] = bv[i];
      for (int r = 0; r < k; ++r) {
        const double* xrow = x.data() + (static_cast<std::size_t>(bi) * len + t + r) * n;
        for (int i = 0; i < n; ++i) orow[i] += w[static_cast<std::size_t>(i) * k + r] * xrow[i];
      }
    }
  return Tensor::make_op(
      {b, out_len, n}, std::move(out), {input, weight, bias},
      [input, weight, b, len, n, k, out_len](const std::vector<double>& g,
                                             const std::vector<std::vector<double>*>& gi) {
        const auto& x = input.values();
        const auto& w = weight.values();
        for (int bi = 0; bi < b; ++bi)
          for (int t = 0; t < out_len; ++t) {
            const double* grow = g.data() + (static_cast<std::size_t>(bi) * out_len + t) * n;
            for (int r = 0; r < k; ++r) {
              const std::size_t xoff = (static_cast<std::size_t>(bi) * len + t + r) * n;
              if (gi[0])
                for (int i = 0; i < n; ++i)
                  (*gi[0])[xoff + i] += grow[i] * w[static_cast<std::size_t>(i) * k + r];
              if (gi[1])
                for (int i = 0; i < n; ++i)
                  (*gi[1])[static_cast<std::size_t>(i) * k + r] += grow[i] * x[xoff + i];
            }
            if (gi[2])
              for (int i = 0; i < n; ++i) (*gi[2])[i] += grow[i];
          }
      });
}

}  // namespace

Tensor conv_kx1(const Tensor& input, const ConvKx1Params& params, BatchNormParams* bn,
                Mode mode) {
  if (input.rank() != 3) throw shape_error("conv_kx1 expects [B, L, n] input");
  const int len = input.dim(1), n = input.dim(2);
  if (n != params.weight.dim(0))
    throw shape_error("conv_kx1 channel mismatch: input n=" + std::to_string(n) +
                      ", filters=" + std::to_string(params.weight.dim(0)));
  const int k = params.weight.dim(1);
  if (len < k)
    throw shape_error("sequence too short for conv_kx1: L=" + std::to_string(len) +
                      " < k=" + std::to_string(k));
  Tensor features = depthwise_window(input, params.weight, params.bias);
  if (bn) features = batchnorm(features, *bn, mode);
  return relu(features);
}

// -- transposed convolution ----------------------------------------------------------

Tensor deconv2d(const Tensor& input, const Deconv2dParams& params) {
  if (input.rank() != 4) throw shape_error("deconv2d expects [B, H, W, C] input");
  const int b = input.dim(0), h = input.dim(1), w = input.dim(2), ci = input.dim(3);
  if (ci != params.weight.dim(2))
    throw shape_error("deconv2d channel mismatch");
  const int kh = params.weight.dim(0), kw = params.weight.dim(1), co = params.weight.dim(3);
  const int s = params.stride;
  // stride 2: symmetric pad 1 doubles the spatial dims;
  // stride 1: total trim kh-1 (1 low, rest high) preserves them.
  const int pad_lo = 1;
  const int oh = s == 2 ? 2 * h : h;
  const int ow = s == 2 ? 2 * w : w;

  const auto& x = input.values();
  const auto& wt = params.weight.values();
  const auto& bias = params.bias.values();
  std::vector<double> out(static_cast<std::size_t>(b) * oh * ow * co);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = bias[i % co];
  for (int bi = 0; bi < b; ++bi)
    for (int iy = 0; iy < h; ++iy)
      for (int ix = 0; ix < w; ++ix) {
        const double* xin = x.data() + ((static_cast<std::size_t>(bi) * h + iy) * w + ix) * ci;
        for (int ky = 0; ky < kh; ++ky) {
          const int oy = iy * s + ky - pad_lo;
          if (oy < 0 || oy >= oh) continue;
          for (int kx = 0; kx < kw; ++kx) {
            const int ox = ix * s + kx - pad_lo;
            if (ox < 0 || ox >= ow) continue;
            double* orow =
                out.data() + ((static_cast<std::size_t>(bi) * oh + oy) * ow + ox) * co;
            const double* wrow = wt.data() + (static_cast<std::size_t>(ky) * kw + kx) * ci * co;
            for (int c = 0; c < ci; ++c) {
              const double xv = xin[c];
              const double* wr = wrow + static_cast<std::size_t>(c) * co;
              for (int o = 0; o < co; ++o) orow[o] += xv * wr[o];
            }
          }
        }
      }
  return Tensor::make_op(
      {b, oh, ow, co}, std::move(out), {input, params.weight, params.bias},
      [input, wp = params.weight, b, h, w, ci, kh, kw, co, s, oh, ow,
       pad_lo](const std::vector<double>& g, const std::vector<std::vector<double>*>& gi) {
        const auto& x = input.values();
        const auto& wt = wp.values();
        for (int bi = 0; bi < b; ++bi)
          for (int iy = 0; iy < h; ++iy)
            for (int ix = 0; ix < w; ++ix) {
              const std::size_t xoff =
                  ((static_cast<std::size_t>(bi) * h + iy) * w + ix) * ci;
              for (int ky = 0; ky < kh; ++ky) {
                const int oy = iy * s + ky - pad_lo;
                if (oy < 0 || oy >= oh) continue;
                for (int kx = 0; kx < kw; ++kx) {
                  const int ox = ix * s + kx - pad_lo;
                  if (ox < 0 || ox >= ow) continue;
                  const double* grow =
                      g.data() + ((static_cast<std::size_t>(bi) * oh + oy) * ow + ox) * co;
                  const std::size_t woff = (static_cast<std::size_t>(ky) * kw + kx) * ci * co;
                  for (int c = 0; c < ci; ++c) {
                    const double* wr = wt.data() + woff + static_cast<std::size_t>(c) * co;
                    if (gi[0]) {
                      double acc = 0.0;
                      for (int o = 0; o < co; ++o) acc += grow[o] * wr[o];
                      (*gi[0])[xoff + c] += acc;
                    }
                    if (gi[1]) {
                      const double xv = x[xoff + c];
                      double* dw = gi[1]->data() + woff + static_cast<std::size_t>(c) * co;
                      for (int o = 0; o < co; ++o) dw[o] += xv * grow[o];
                    }
                  }
                }
              }
            }
        if (gi[2]) {
          std::vector<double>& db = *gi[2];
          for (std::size_t i = 0; i < g.size(); ++i) db[i % co] += g[i];
        }
      });
}

// -- lstm ------------------------------------------------------------------------------

namespace {

struct GateWeightsT {
  Tensor wt_i, wt_f, wt_o, wt_g;  // [in, hidden]
  Tensor ut_i, ut_f, ut_o, ut_g;  // [hidden, hidden]
};

GateWeightsT transpose_gates(const LstmParams& p) {
  return {transpose2d(p.w_i), transpose2d(p.w_f), transpose2d(p.w_o), transpose2d(p.w_g),
          transpose2d(p.u_i), transpose2d(p.u_f), transpose2d(p.u_o), transpose2d(p.u_g)};
}

std::pair<Tensor, Tensor> lstm_step_pre(const Tensor& x, const Tensor& h, const Tensor& c,
                                        const GateWeightsT& t, const LstmParams& p) {
  auto gate = [&](const Tensor& wt, const Tensor& ut, const Tensor& b) {
    return add_rowwise(add(matmul(x, wt), matmul(h, ut)), b);
  };
  Tensor i = sigmoid(gate(t.wt_i, t.ut_i, p.b_i));
  Tensor f = sigmoid(gate(t.wt_f, t.ut_f, p.b_f));
  Tensor o = sigmoid(gate(t.wt_o, t.ut_o, p.b_o));
  Tensor g = tanh(gate(t.wt_g, t.ut_g, p.b_g));
  Tensor c_next = add(mul(f, c), mul(i, g));
  Tensor h_next = mul(o, tanh(c_next));
  return {h_next, c_next};
}

}  // namespace

std::pair<Tensor, Tensor> lstm_step(const Tensor& x, const Tensor& h, const Tensor& c,
                                    const LstmParams& params) {
  if (x.rank() != 2 || h.rank() != 2 || c.rank() != 2)
    throw shape_error("lstm_step expects 2-d [B, dim] tensors");
  if (x.dim(1) != params.input_dim() || h.dim(1) != params.hidden() ||
      c.dim(1) != params.hidden() || x.dim(0) != h.dim(0) || h.dim(0) != c.dim(0))
    throw shape_error("lstm_step dimension mismatch");
  return lstm_step_pre(x, h, c, transpose_gates(params), params);
}

Tensor lstm_forward_sequence(const Tensor& seq, const LstmParams& params, bool reversed) {
  if (seq.rank() != 3) throw shape_error("lstm_forward_sequence expects [B, T, in]");
  const int b = seq.dim(0), steps = seq.dim(1), in = seq.dim(2);
  if (in != params.input_dim()) throw shape_error("lstm input width mismatch");
  const int hidden = params.hidden();
  const GateWeightsT trans = transpose_gates(params);
  Tensor h = Tensor::zeros({b, hidden});
  Tensor c = Tensor::zeros({b, hidden});
  std::vector<Tensor> outputs(steps);
  for (int step = 0; step < steps; ++step) {
    const int t = reversed ? steps - 1 - step : step;
    Tensor xt = reshape(slice(seq, 1, t, t + 1), {b, in});
    auto [h2, c2] = lstm_step_pre(xt, h, c, trans, params);
    h = h2;
    c = c2;
    outputs[t] = reshape(h, {b, 1, hidden});
  }
  return concat(outputs, 1);
}

Tensor blstm_forward(const Tensor& seq, const BlstmStack& stack, double dropout_rate,
                     Mode mode, Rng* rng) {
  if (seq.rank() != 3) throw shape_error("blstm_forward expects [B, T, in]");
  if (stack.layers.empty()) throw contract_error("blstm stack has no layers");
  Tensor x = seq;
  if (mode == Mode::Train && dropout_rate > 0.0) {
    if (!rng) throw contract_error("train-mode dropout needs an rng");
    x = dropout(x, dropout_rate, mode, *rng);
  }
  for (const auto& layer : stack.layers) {
    Tensor fw = lstm_forward_sequence(x, layer.fw, false);
    Tensor bw = lstm_forward_sequence(x, layer.bw, true);
    x = concat({fw, bw}, 2);
  }
  return x;
}

Tensor dense(const Tensor& input, const DenseParams& params, Activation act) {
  if (input.rank() != 2) throw shape_error("dense expects [B, in] input");
  if (input.dim(1) != params.weight.dim(1))
    throw shape_error("dense input width " + std::to_string(input.dim(1)) +
                      " != " + std::to_string(params.weight.dim(1)));
  Tensor out = add_rowwise(matmul(input, transpose2d(params.weight)), params.bias);
  return act == Activation::Relu ? relu(out) : out;
}

}  // namespace acblstm
