#include "acblstm/gan.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace acblstm {

int GanConfig::fake_count(int batch_size) const {
  return static_cast<int>(std::lround(batch_size * p_g));
}

void GanConfig::validate(int max_len, int embed_dim) const {
  if (latent_dim < 1) throw config_error("latent_dim must be >= 1");
  if (c_g < 4 || c_g % 4 != 0) throw config_error("c_g must be a positive multiple of 4");
  if (p_g < 0.0 || p_g >= 1.0) throw config_error("p_g must lie in [0,1)");
  if (max_len / 4 < 1)
    throw config_error("max_len " + std::to_string(max_len) + " leaves generator height 0");
  if (embed_dim / 4 < 1)
    throw config_error("embed_dim " + std::to_string(embed_dim) + " leaves generator width 0");
}

Generator::Generator(const GanConfig& config, int max_len, int embed_dim, Rng& rng)
    : cfg_(config), max_len_(max_len), embed_dim_(embed_dim) {
  cfg_.validate(max_len, embed_dim);
  h_ = max_len / 4;
  w_ = embed_dim / 4;
  const int cg = cfg_.c_g;
  dense_ = DenseParams::init(h_ * w_ * cg, cfg_.latent_dim, rng);
  bn0_ = BatchNormParams::init(cg);
  deconv1_ = Deconv2dParams::init(4, 4, cg, cg / 2, 2, rng);
  bn1_ = BatchNormParams::init(cg / 2);
  deconv2_ = Deconv2dParams::init(4, 4, cg / 2, cg / 4, 2, rng);
  bn2_ = BatchNormParams::init(cg / 4);
  deconv3_ = Deconv2dParams::init(4, 4, cg / 4, 1, 1, rng);
}

namespace {

// Crops or zero-pads axis (1 = rows, 2 = cols) of [B, H, W, C] to `target`.
Tensor fit_axis(const Tensor& x, int axis, int target) {
  const int have = x.dim(axis);
  if (have == target) return x;
  if (have > target) return slice(x, axis, 0, target);
  std::vector<int> pad_shape = x.shape();
  pad_shape[static_cast<std::size_t>(axis)] = target - have;
  return concat({x, Tensor::zeros(pad_shape)}, axis);
}

}  // namespace

Tensor Generator::forward(const Tensor& z, Mode mode) {
  if (z.rank() != 2 || z.dim(1) != cfg_.latent_dim)
    throw shape_error("generator expects [B, latent_dim] noise");
  const int b = z.dim(0);
  const int cg = cfg_.c_g;
  Tensor x = reshape(dense(z, dense_), {b, h_, w_, cg});
  x = relu(batchnorm(x, bn0_, mode));
  x = relu(batchnorm(deconv2d(x, deconv1_), bn1_, mode));  // 2h x 2w x c_g/2
  x = relu(batchnorm(deconv2d(x, deconv2_), bn2_, mode));  // 4h x 4w x c_g/4
  x = deconv2d(x, deconv3_);                               // 4h x 4w x 1
  x = fit_axis(x, 1, max_len_);                            // exact L x d when not
  x = fit_axis(x, 2, embed_dim_);                          // divisible by 4
  return tanh(x);
}

Tensor Generator::sample(int count, Mode mode, Rng& noise_rng) {
  if (count < 1) throw contract_error("generator sample count must be >= 1");
  std::vector<double> z(static_cast<std::size_t>(count) * cfg_.latent_dim);
  for (double& v : z) v = noise_rng.normal();
  return forward(Tensor::from_data({count, cfg_.latent_dim}, std::move(z)), mode);
}

std::vector<NamedTensor> Generator::named_tensors() const {
  std::vector<NamedTensor> out;
  dense_.append_named("gen.dense", out);
  bn0_.append_named("gen.bn0", out);
  deconv1_.append_named("gen.deconv1", out);
  bn1_.append_named("gen.bn1", out);
  deconv2_.append_named("gen.deconv2", out);
  bn2_.append_named("gen.bn2", out);
  deconv3_.append_named("gen.deconv3", out);
  return out;
}

std::vector<Tensor> Generator::trainable() const {
  std::vector<Tensor> out;
  for (const NamedTensor& nt : named_tensors())
    if (nt.tensor.requires_grad()) out.push_back(nt.tensor);
  return out;
}

MixedBatch mix_batch(const Tensor& real_inputs, const std::vector<int>& real_labels,
                     int gen_count, Generator& generator, int num_real_classes, Mode mode,
                     Rng& gan_rng) {
  if (real_inputs.rank() != 3) throw shape_error("mix_batch expects [m_r, L, d] real inputs");
  const int m_r = real_inputs.dim(0);
  if (static_cast<int>(real_labels.size()) != m_r)
    throw shape_error("real label count does not match the batch");
  if (gen_count < 0) throw config_error("gen_count must be >= 0");
  if (m_r < 1) throw config_error("p_g leaves no real examples in the batch");

  MixedBatch out;
  if (gen_count == 0) {
    out.inputs = real_inputs;
    out.labels = real_labels;
    out.is_fake.assign(static_cast<std::size_t>(m_r), false);
    out.perm.resize(static_cast<std::size_t>(m_r));
    std::iota(out.perm.begin(), out.perm.end(), std::size_t{0});
    return out;
  }

  const int rows = real_inputs.dim(1), cols = real_inputs.dim(2);
  Tensor fake = generator.sample(gen_count, mode, gan_rng);
  if (fake.dim(1) != rows || fake.dim(2) != cols)
    throw shape_error("generator output does not match the sentence-matrix shape");
  const int m = m_r + gen_count;

  out.perm.resize(static_cast<std::size_t>(m));
  std::iota(out.perm.begin(), out.perm.end(), std::size_t{0});
  gan_rng.shuffle(out.perm);

  const std::size_t stride = static_cast<std::size_t>(rows) * cols;
  const auto& rv = real_inputs.values();
  const auto& fv = fake.values();
  std::vector<double> data(static_cast<std::size_t>(m) * stride);
  out.labels.resize(static_cast<std::size_t>(m));
  out.is_fake.resize(static_cast<std::size_t>(m));
  for (int r = 0; r < m; ++r) {
    const std::size_t src = out.perm[static_cast<std::size_t>(r)];
    const bool fake_row = src >= static_cast<std::size_t>(m_r);
    out.is_fake[static_cast<std::size_t>(r)] = fake_row;
    out.labels[static_cast<std::size_t>(r)] =
        fake_row ? num_real_classes : real_labels[src];
    const double* from = fake_row ? fv.data() + (src - static_cast<std::size_t>(m_r)) * stride
                                  : rv.data() + src * stride;
    std::copy_n(from, stride, data.data() + static_cast<std::size_t>(r) * stride);
  }
  out.inputs = Tensor::from_data({m, rows, cols}, std::move(data));
  return out;
}

Tensor fake_class_rejection_loss(const Tensor& logits, int fake_class) {
  if (logits.rank() != 2) throw shape_error("fake_class_rejection_loss expects [m x C] logits");
  const int m = logits.dim(0), c = logits.dim(1);
  if (fake_class < 0 || fake_class >= c) throw bounds_error("fake class index out of range");
  for (double x : logits.values())
    if (!std::isfinite(x)) throw numeric_error("non-finite logit in generator loss");

  std::vector<double> probs = softmax_rows(logits);
  double loss = 0.0;
  for (int i = 0; i < m; ++i) {
    const double p_fake = probs[static_cast<std::size_t>(i) * c + fake_class];
    loss -= std::log(std::max(1.0 - p_fake, 1e-12));
  }
  loss /= static_cast<double>(m);
  // dL/dz_j = p_f (1{j=f} - p_j) / (1 - p_f) / m
  return Tensor::make_op(
      {1}, {loss}, {logits},
      [probs = std::move(probs), m, c, fake_class](
          const std::vector<double>& g, const std::vector<std::vector<double>*>& gi) {
        if (!gi[0]) return;
        const double scale = g[0] / static_cast<double>(m);
        for (int i = 0; i < m; ++i) {
          const double* prow = probs.data() + static_cast<std::size_t>(i) * c;
          const double p_fake = prow[fake_class];
          const double denom = std::max(1.0 - p_fake, 1e-12);
          for (int j = 0; j < c; ++j)
            (*gi[0])[static_cast<std::size_t>(i) * c + j] +=
                scale * p_fake * ((j == fake_class ? 1.0 : 0.0) - prow[j]) / denom;
        }
      });
}

SemisupStepResult semisup_train_step(AcBlstmModel& model, Generator& generator,
                                     const Tensor& real_inputs,
                                     const std::vector<int>& real_labels,
                                     RmspropOptimizer& model_opt, RmspropOptimizer& gen_opt,
                                     const TrainConfig& tcfg, const GanConfig& gcfg,
                                     Rng& model_rng, Rng& gan_rng) {
  if (!model.config().extra_fake_class)
    throw contract_error("semisup_train_step needs a model with the extra fake class");
  const int k = model.config().classes;
  const int m_r = real_inputs.dim(0);
  // the batch is composed as round(m*p_g) generated + the rest real
  const int gen_count = gcfg.fake_count(tcfg.batch_size);
  if (m_r != tcfg.batch_size - gen_count)
    throw contract_error("semisup step expects " +
                         std::to_string(tcfg.batch_size - gen_count) +
                         " real examples, got " + std::to_string(m_r));

  SemisupStepResult result;
  result.fake_count = gen_count;
  result.real_count = m_r;

  // classifier step on the mixed batch (generated rows detached from G)
  MixedBatch mixed = mix_batch(real_inputs, real_labels, gen_count, generator, k,
                               Mode::Train, gan_rng);
  Tensor logits = model.forward(mixed.inputs, Mode::Train, &model_rng);
  Tensor loss_d = softmax_cross_entropy(logits, mixed.labels);
  result.loss_d = loss_d[0];
  if (!std::isfinite(result.loss_d))
    throw numeric_error("non-finite discriminator loss; step aborted");

  const int c = logits.dim(1);
  for (int i = 0; i < mixed.inputs.dim(0); ++i) {
    if (mixed.is_fake[static_cast<std::size_t>(i)]) continue;
    const double* row = logits.values().data() + static_cast<std::size_t>(i) * c;
    const int pred = static_cast<int>(std::max_element(row, row + c) - row);
    if (pred == mixed.labels[static_cast<std::size_t>(i)]) ++result.correct_real;
  }

  backward(loss_d);
  std::vector<Tensor> model_params = model.trainable();
  result.sum_norm = clip_global(model_params, tcfg.clip_threshold, tcfg.clip_mode).sum_norm;
  model_opt.step();
  model_opt.zero_grad();

  if (gen_count > 0) {
    // generator step against the updated classifier, fresh noise, eval-mode
    // classifier so neither its parameters nor its running stats move
    Tensor fake = generator.sample(gen_count, Mode::Train, gan_rng);
    Tensor as_sentences = reshape(fake, {gen_count, fake.dim(1), fake.dim(2)});
    Tensor gen_logits = model.forward(as_sentences, Mode::Eval);
    Tensor loss_g = fake_class_rejection_loss(gen_logits, k);
    result.loss_g = loss_g[0];
    if (!std::isfinite(result.loss_g))
      throw numeric_error("non-finite generator loss; step aborted");
    backward(loss_g);
    gen_opt.step();
    gen_opt.zero_grad();
    model_opt.zero_grad();  // discard classifier gradients from the G objective
  }
  return result;
}

}  // namespace acblstm
