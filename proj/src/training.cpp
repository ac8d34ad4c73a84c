#include "acblstm/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

namespace acblstm {

EpochMetrics train_epoch(AcBlstmModel& model, const TrainData& data, const TrainConfig& cfg,
                         RmspropOptimizer& opt, Rng& rng, SemisupContext* gan) {
  cfg.validate();
  if (!data.dataset || !data.table) throw contract_error("train_epoch needs dataset and table");
  if (data.indices.empty()) throw contract_error("train_epoch on an empty index set");

  const int gen_count = gan ? gan->config.fake_count(cfg.batch_size) : 0;
  const bool semisup = gan && gen_count > 0;
  const int real_per_batch = cfg.batch_size - gen_count;
  if (real_per_batch < 1) throw config_error("p_g too large: no real examples per batch");
  if (semisup && (!gan->generator || !gan->gen_opt || !gan->gan_rng))
    throw contract_error("semi-supervised training needs generator, optimizer and rng");

  std::vector<std::size_t> order = data.indices;
  rng.shuffle(order);
  const std::size_t batches = order.size() / static_cast<std::size_t>(real_per_batch);
  if (batches == 0)
    throw config_error("batch size exceeds the training set; nothing to train on");

  EpochMetrics metrics;
  double loss_sum = 0.0, loss_g_sum = 0.0, norm_sum = 0.0;
  long correct = 0, seen = 0;
  std::vector<Tensor> params = model.trainable();

  for (std::size_t b = 0; b < batches; ++b) {
    std::vector<std::size_t> batch_idx(
        order.begin() + static_cast<long>(b * static_cast<std::size_t>(real_per_batch)),
        order.begin() + static_cast<long>((b + 1) * static_cast<std::size_t>(real_per_batch)));
    Tensor inputs = data.table->embed(data.dataset->examples, batch_idx, data.max_len);
    std::vector<int> labels;
    labels.reserve(batch_idx.size());
    for (std::size_t i : batch_idx) labels.push_back(data.dataset->examples[i].label);

    BatchStats stats;
    if (semisup) {
      SemisupStepResult r =
          semisup_train_step(model, *gan->generator, inputs, labels, opt, *gan->gen_opt,
                             cfg, gan->config, rng, *gan->gan_rng);
      stats.loss = r.loss_d;
      stats.sum_norm = r.sum_norm;
      stats.fake_count = r.fake_count;
      stats.size = r.real_count + r.fake_count;
      loss_g_sum += r.loss_g;
      correct += r.correct_real;
      seen += r.real_count;
    } else {
      Tensor logits = model.forward(inputs, Mode::Train, &rng);
      Tensor loss = softmax_cross_entropy(logits, labels);
      stats.loss = loss[0];
      if (!std::isfinite(stats.loss))
        throw numeric_error("non-finite training loss at batch " + std::to_string(b) +
                            "; epoch aborted");
      const int c = logits.dim(1);
      for (std::size_t i = 0; i < labels.size(); ++i) {
        const double* row = logits.values().data() + i * static_cast<std::size_t>(c);
        if (static_cast<int>(std::max_element(row, row + c) - row) == labels[i]) ++correct;
      }
      seen += static_cast<long>(labels.size());
      backward(loss);
      stats.sum_norm = clip_global(params, cfg.clip_threshold, cfg.clip_mode).sum_norm;
      opt.step();
      opt.zero_grad();
      stats.size = static_cast<int>(labels.size());
    }
    loss_sum += stats.loss;
    norm_sum += stats.sum_norm;
    metrics.sum_norm_max = std::max(metrics.sum_norm_max, stats.sum_norm);
    metrics.batches.push_back(stats);
  }

  const double nb = static_cast<double>(batches);
  metrics.mean_loss = loss_sum / nb;
  metrics.mean_loss_g = semisup ? loss_g_sum / nb : 0.0;
  metrics.sum_norm_mean = norm_sum / nb;
  metrics.train_accuracy = seen > 0 ? static_cast<double>(correct) / static_cast<double>(seen) : 0.0;
  return metrics;
}

EvalResult evaluate(AcBlstmModel& model, const Dataset& dataset, const EmbeddingTable& table,
                    int max_len, const std::vector<std::size_t>* subset,
                    int eval_batch_size) {
  std::vector<std::size_t> indices;
  if (subset) {
    indices = *subset;
  } else {
    indices.resize(dataset.size());
    std::iota(indices.begin(), indices.end(), std::size_t{0});
  }
  if (indices.empty()) throw contract_error("evaluate on an empty dataset");
  if (eval_batch_size < 1) throw config_error("eval batch size must be >= 1");

  const int k = dataset.num_classes();
  EvalResult result;
  result.confusion.assign(static_cast<std::size_t>(k), std::vector<long>(static_cast<std::size_t>(k), 0));
  long correct = 0;
  for (std::size_t at = 0; at < indices.size(); at += static_cast<std::size_t>(eval_batch_size)) {
    const std::size_t end = std::min(indices.size(), at + static_cast<std::size_t>(eval_batch_size));
    std::vector<std::size_t> batch(indices.begin() + static_cast<long>(at),
                                   indices.begin() + static_cast<long>(end));
    Tensor inputs = table.embed(dataset.examples, batch, max_len);
    Prediction pred = model.predict(inputs);
    for (std::size_t i = 0; i < batch.size(); ++i) {
      const int truth = dataset.examples[batch[i]].label;
      const int guess = pred.classes[i];
      if (guess == truth) ++correct;
      if (truth >= 0 && truth < k && guess >= 0 && guess < k)
        ++result.confusion[static_cast<std::size_t>(truth)][static_cast<std::size_t>(guess)];
    }
  }
  result.total = indices.size();
  result.accuracy = static_cast<double>(correct) / static_cast<double>(indices.size());
  return result;
}

namespace {

std::vector<std::vector<double>> snapshot_values(const std::vector<NamedTensor>& named) {
  std::vector<std::vector<double>> out;
  out.reserve(named.size());
  for (const NamedTensor& nt : named) out.push_back(nt.tensor.values());
  return out;
}

void restore_values(std::vector<NamedTensor>& named,
                    const std::vector<std::vector<double>>& snap) {
  for (std::size_t i = 0; i < named.size(); ++i)
    named[i].tensor.mutable_values() = snap[i];
}

}  // namespace

FitResult fit(AcBlstmModel& model, const TrainData& train, const TrainConfig& cfg,
              RmspropOptimizer& opt, Rng& rng, SemisupContext* gan,
              const Dataset* val_dataset, const std::vector<std::size_t>* val_subset,
              const std::function<void(const EpochRecord&)>& on_epoch) {
  FitResult result;
  std::vector<std::vector<double>> best_snapshot;
  int evals_since_best = 0;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train = train_epoch(model, train, cfg, opt, rng, gan);

    if (val_dataset && epoch % cfg.eval_every == 0) {
      rec.has_val = true;
      rec.val_accuracy =
          evaluate(model, *val_dataset, *train.table, train.max_len, val_subset).accuracy;
      if (rec.val_accuracy > result.best_val) {
        result.best_val = rec.val_accuracy;
        result.best_epoch = epoch;
        auto named = model.named_tensors();
        best_snapshot = snapshot_values(named);
        evals_since_best = 0;
      } else {
        ++evals_since_best;
      }
    }
    rec.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
                      .count();
    result.history.push_back(rec);
    if (on_epoch) on_epoch(rec);
    if (val_dataset && cfg.patience > 0 && evals_since_best >= cfg.patience) break;
  }

  if (!best_snapshot.empty()) {
    auto named = model.named_tensors();
    restore_values(named, best_snapshot);
  }
  return result;
}

}  // namespace acblstm
