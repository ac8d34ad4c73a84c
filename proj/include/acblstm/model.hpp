#ifndef ACBLSTM_MODEL_HPP_
#define ACBLSTM_MODEL_HPP_

#include <array>
#include <string>
#include <vector>

#include "acblstm/layers.hpp"
#include "acblstm/tensor.hpp"

namespace acblstm {

struct ModelConfig {
  int max_len = 0;        // L, padded sentence length
  int embed_dim = 300;    // d
  int filters = 100;      // n, per branch
  std::array<int, 3> k_set = {2, 3, 4};
  int lstm_dim = 100;
  int lstm_layers = 1;
  double dropout_blstm_input = 0.5;
  double dropout_before_softmax = 0.5;
  int classes = 0;        // K
  bool use_batchnorm = true;
  bool extra_fake_class = false;  // adds the generated-sample class K+1

  int khat() const { return std::max({k_set[0], k_set[1], k_set[2]}); }
  int fused_len() const { return max_len - khat() + 1; }    // T
  int logits_dim() const { return classes + (extra_fake_class ? 1 : 0); }
  void validate() const;  // throws config_error naming the offending key
};

struct Prediction {
  std::vector<int> classes;   // per example; fake class excluded from the argmax
  std::vector<double> probs;  // [B x C] row-major softmax over all C logits
  int width = 0;              // C
};

struct ParamCount {
  std::vector<std::pair<std::string, std::size_t>> per_component;
  std::size_t total = 0;
};

/// Three parallel asymmetric convolution branches, tail compression so all
/// branches share length L-khat+1, per-step fusion to 3n features, a stacked
/// BLSTM, and a softmax head over the flattened per-step hidden states.
class AcBlstmModel {
 public:
  AcBlstmModel(const ModelConfig& config, Rng& rng);

  /// One branch: 1xd stage then kx1 stage, batchnorm+relu each (when enabled).
  /// input [B, L, d] -> [B, L-k_i+1, n].
  Tensor asymmetric_branch(const Tensor& input, int branch, Mode mode);

  /// Aligns branch outputs to length L-khat+1 via each branch's compression
  /// head and concatenates per step. -> [B, T, 3n].
  Tensor fuse_branches(const std::vector<Tensor>& branch_outputs);

  /// Full forward pass to logits [B, C]. Train mode draws dropout masks from
  /// rng; batchnorm (when enabled) then needs batch >= 2.
  Tensor forward(const Tensor& input, Mode mode, Rng* rng = nullptr);

  /// Eval-mode forward + softmax + argmax. With the extra fake class enabled
  /// the argmax runs over the real classes only.
  Prediction predict(const Tensor& input);

  ParamCount param_count() const;

  const ModelConfig& config() const { return config_; }
  /// All state tensors, trainable and running statistics alike.
  std::vector<NamedTensor> named_tensors() const;
  /// Trainable parameters (requires_grad) in a stable order.
  std::vector<Tensor> trainable() const;

 private:
  struct Branch {
    Conv1xdParams stage1;
    ConvKx1Params stage2;
    BatchNormParams bn1, bn2;  // used only when config.use_batchnorm
    DenseParams compress;      // absent (undefined tensors) for the khat branch
    bool has_compress = false;
  };

  ModelConfig config_;
  std::array<Branch, 3> branches_;
  BlstmStack blstm_;
  DenseParams head_;
};

}  // namespace acblstm

#endif  // ACBLSTM_MODEL_HPP_
