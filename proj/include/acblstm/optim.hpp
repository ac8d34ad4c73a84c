#ifndef ACBLSTM_OPTIM_HPP_
#define ACBLSTM_OPTIM_HPP_

#include <cstdint>
#include <vector>

#include "acblstm/tensor.hpp"

namespace acblstm {

/// How the global clipping norm is formed from the per-parameter gradients.
/// SumOfNorms is the sum of per-parameter L2 norms; ConcatNorm is the L2 norm
/// of all gradients concatenated into one vector (the more common variant,
/// exposed for comparison).
enum class ClipMode { SumOfNorms, ConcatNorm };

struct ClipResult {
  double sum_norm = 0.0;
  double scale = 1.0;  // threshold / sum_norm when clipped, else 1
};

/// Computes the global norm over the parameter set and, when it exceeds the
/// threshold, rescales every gradient in place by threshold/norm. Parameters
/// without a gradient buffer count as zero.
ClipResult clip_global(const std::vector<Tensor>& params, double threshold,
                       ClipMode mode = ClipMode::SumOfNorms);

struct TrainConfig {
  int batch_size = 50;
  int epochs = 10;
  double learning_rate = 1e-4;
  double decay = 0.9;    // squared-gradient moving-average coefficient
  double epsilon = 1e-8;
  double clip_threshold = 0.5;
  ClipMode clip_mode = ClipMode::SumOfNorms;
  std::uint64_t seed = 12345;
  int eval_every = 1;
  int patience = 0;  // early-stop patience in eval rounds; 0 disables
  void validate() const;
};

/// RMSprop: acc <- rho*acc + (1-rho)*g^2; theta <- theta - lr*g/sqrt(acc+eps).
class RmspropOptimizer {
 public:
  RmspropOptimizer(std::vector<Tensor> params, double learning_rate = 1e-4,
                   double decay = 0.9, double epsilon = 1e-8);

  /// Applies one update from the parameters' current gradients (missing
  /// gradient buffers are treated as zero).
  void step();
  void zero_grad();
  const std::vector<Tensor>& params() const { return params_; }

 private:
  std::vector<Tensor> params_;
  std::vector<std::vector<double>> acc_;
  double lr_, decay_, eps_;
};

}  // namespace acblstm

#endif  // ACBLSTM_OPTIM_HPP_
