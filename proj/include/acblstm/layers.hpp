#ifndef ACBLSTM_LAYERS_HPP_
#define ACBLSTM_LAYERS_HPP_

#include <string>
#include <utility>
#include <vector>

#include "acblstm/rng.hpp"
#include "acblstm/tensor.hpp"

namespace acblstm {

enum class Mode { Train, Eval };

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

// Uniform range for all trainable layer weights.
inline constexpr double kWeightInitRange = 0.08;

// All layer functions are batch-first: sentence inputs are [B, L, d],
// sequence features [B, T, n], images [B, H, W, C] with channels last.

/// First asymmetric stage: n filters, each a full-width d-vector (1xd).
struct Conv1xdParams {
  Tensor weight;  // [n, d]
  Tensor bias;    // [n]
  static Conv1xdParams init(int filters, int width, Rng& rng);
  void append_named(const std::string& prefix, std::vector<NamedTensor>& out) const;
};

/// Second asymmetric stage: depthwise kx1 filters, one k-tap filter per channel.
struct ConvKx1Params {
  Tensor weight;  // [n, k]
  Tensor bias;    // [n]
  int k = 0;
  static ConvKx1Params init(int filters, int k, Rng& rng);
  void append_named(const std::string& prefix, std::vector<NamedTensor>& out) const;
};

struct BatchNormParams {
  Tensor gamma, beta;               // trainable, per channel
  Tensor running_mean, running_var; // state, per channel
  double momentum = 0.9;
  double epsilon = 1e-5;
  static BatchNormParams init(int channels);
  void append_named(const std::string& prefix, std::vector<NamedTensor>& out) const;
};

struct DenseParams {
  Tensor weight;  // [out, in]
  Tensor bias;    // [out]
  static DenseParams init(int out, int in, Rng& rng);
  void append_named(const std::string& prefix, std::vector<NamedTensor>& out) const;
};

/// Canonical LSTM with forget gate; per-gate weights as separate tensors.
/// Forget bias starts at 1.0 so early training does not flush the cell.
struct LstmParams {
  Tensor w_i, w_f, w_o, w_g;  // [hidden, in]
  Tensor u_i, u_f, u_o, u_g;  // [hidden, hidden]
  Tensor b_i, b_f, b_o, b_g;  // [hidden]
  static LstmParams init(int hidden, int in, Rng& rng);
  void append_named(const std::string& prefix, std::vector<NamedTensor>& out) const;
  int hidden() const { return w_i.dim(0); }
  int input_dim() const { return w_i.dim(1); }
};

struct Deconv2dParams {
  Tensor weight;  // [kh, kw, c_in, c_out]
  Tensor bias;    // [c_out]
  int stride = 2; // 2 doubles the spatial dims (pad 1); 1 preserves them
  static Deconv2dParams init(int kh, int kw, int c_in, int c_out, int stride, Rng& rng);
  void append_named(const std::string& prefix, std::vector<NamedTensor>& out) const;
};

/// Stacked bidirectional LSTM parameters.
struct BlstmStack {
  struct Direction {
    LstmParams fw, bw;
  };
  std::vector<Direction> layers;
  int hidden = 0;
  static BlstmStack init(int layers, int in, int hidden, Rng& rng);
  void append_named(const std::string& prefix, std::vector<NamedTensor>& out) const;
};

// -- layer ops -----------------------------------------------------------------

/// Eq.-style word convolution: per word j, filter i yields relu(w_i . x_j + b_i)
/// (batchnorm, when supplied, runs just before the relu).
/// input [B, L, d] -> [B, L, n].
Tensor conv_1xd(const Tensor& input, const Conv1xdParams& params,
                BatchNormParams* bn, Mode mode);

/// Depthwise window convolution: filter i slides over channel i with window k.
/// input [B, L, n] -> [B, L-k+1, n]; relu applied, batchnorm optional.
Tensor conv_kx1(const Tensor& input, const ConvKx1Params& params,
                BatchNormParams* bn, Mode mode);

/// Raw transposed convolution (no activation).
/// stride 2: [B,H,W,Ci] -> [B,2H,2W,Co]; stride 1: spatial dims preserved.
Tensor deconv2d(const Tensor& input, const Deconv2dParams& params);

/// Per-channel batch normalization; channel = last axis, statistics over all
/// other axes. Train mode updates the running statistics in place.
Tensor batchnorm(const Tensor& input, BatchNormParams& params, Mode mode);

/// Inverted dropout: survivors scaled by 1/(1-rate) so eval is the identity.
Tensor dropout(const Tensor& input, double rate, Mode mode, Rng& rng);

/// One LSTM step. x [B,in], h/c [B,hidden] -> (h', c').
std::pair<Tensor, Tensor> lstm_step(const Tensor& x, const Tensor& h, const Tensor& c,
                                    const LstmParams& params);

/// Runs a unidirectional LSTM over seq [B,T,in], zero initial state,
/// optionally right-to-left (outputs re-reversed to input order). -> [B,T,hidden].
Tensor lstm_forward_sequence(const Tensor& seq, const LstmParams& params,
                             bool reversed = false);

/// Stacked BLSTM. Applies dropout once to the stack input (train mode), then
/// per layer concatenates forward and backward hidden states per step.
/// seq [B,T,in] -> [B,T,2*hidden].
Tensor blstm_forward(const Tensor& seq, const BlstmStack& stack, double dropout_rate,
                     Mode mode, Rng* rng);

enum class Activation { None, Relu };

/// W.x + b per row; input [B,in] -> [B,out].
Tensor dense(const Tensor& input, const DenseParams& params,
             Activation act = Activation::None);

}  // namespace acblstm

#endif  // ACBLSTM_LAYERS_HPP_
