#ifndef ACBLSTM_GAN_HPP_
#define ACBLSTM_GAN_HPP_

#include <cstdint>
#include <vector>

#include "acblstm/layers.hpp"
#include "acblstm/model.hpp"
#include "acblstm/optim.hpp"

namespace acblstm {

struct GanConfig {
  int latent_dim = 100;
  int c_g = 100;        // first feature-map channel count, divisible by 4
  double p_g = 0.1;     // generated fraction of each training batch
  std::uint64_t seed = 0;  // 0: derive from the run seed

  int fake_count(int batch_size) const;  // round(batch * p_g)
  void validate(int max_len, int embed_dim) const;
};

/// Deconvolutional generator: dense+reshape to floor(L/4) x floor(d/4) x c_g,
/// two stride-2 deconv doublings with the channel chain c_g -> c_g/2 -> c_g/4,
/// a stride-1 stage collapsing to one channel, exact crop/pad to L x d, tanh.
/// Batchnorm + relu sit between stages.
class Generator {
 public:
  Generator(const GanConfig& config, int max_len, int embed_dim, Rng& rng);

  /// z [B, latent_dim] -> [B, L, d, 1], values in (-1, 1).
  Tensor forward(const Tensor& z, Mode mode);
  /// Draws standard-normal noise from noise_rng and runs forward.
  Tensor sample(int count, Mode mode, Rng& noise_rng);

  std::vector<NamedTensor> named_tensors() const;
  std::vector<Tensor> trainable() const;
  const GanConfig& config() const { return cfg_; }
  int height() const { return h_; }
  int width() const { return w_; }

 private:
  GanConfig cfg_;
  int max_len_, embed_dim_, h_, w_;
  DenseParams dense_;
  BatchNormParams bn0_, bn1_, bn2_;
  Deconv2dParams deconv1_, deconv2_, deconv3_;
};

struct MixedBatch {
  Tensor inputs;                   // [m, L, d], no gradient history
  std::vector<int> labels;         // generated entries carry label K
  std::vector<bool> is_fake;
  std::vector<std::size_t> perm;   // row r of inputs came from pre-shuffle slot perm[r]
};

/// Assembles gen_count generator samples (labeled K) with the real examples
/// and shuffles the rows. gen_count == 0 returns the real batch untouched so
/// the p_g = 0 trajectory matches plain supervised training bit for bit.
MixedBatch mix_batch(const Tensor& real_inputs, const std::vector<int>& real_labels,
                     int gen_count, Generator& generator, int num_real_classes,
                     Mode mode, Rng& gan_rng);

/// Non-saturating generator objective: -mean_i log(1 - softmax(logits_i)[fake]).
Tensor fake_class_rejection_loss(const Tensor& logits, int fake_class);

struct SemisupStepResult {
  double loss_d = 0.0;
  double loss_g = 0.0;
  int fake_count = 0;
  double sum_norm = 0.0;   // pre-clip classifier gradient norm
  int correct_real = 0;    // real examples the classifier got right this step
  int real_count = 0;
};

/// One G-AC-BLSTM iteration: the classifier trains on the mixed batch over
/// K+1 classes (gradients clipped), then the generator takes a step against
/// the updated classifier on fresh noise. The classifier runs in eval mode
/// inside the generator objective so its state is untouched by the G update.
SemisupStepResult semisup_train_step(AcBlstmModel& model, Generator& generator,
                                     const Tensor& real_inputs,
                                     const std::vector<int>& real_labels,
                                     RmspropOptimizer& model_opt,
                                     RmspropOptimizer& gen_opt, const TrainConfig& tcfg,
                                     const GanConfig& gcfg, Rng& model_rng, Rng& gan_rng);

/// Everything train_epoch needs to run semi-supervised.
struct SemisupContext {
  Generator* generator = nullptr;
  GanConfig config;
  RmspropOptimizer* gen_opt = nullptr;
  Rng* gan_rng = nullptr;
};

}  // namespace acblstm

#endif  // ACBLSTM_GAN_HPP_
