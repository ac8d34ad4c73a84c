#ifndef ACBLSTM_TRAINING_HPP_
#define ACBLSTM_TRAINING_HPP_

#include <functional>
#include <vector>

#include "acblstm/data.hpp"
#include "acblstm/gan.hpp"
#include "acblstm/model.hpp"
#include "acblstm/optim.hpp"

namespace acblstm {

/// A training view over a dataset: which examples to use and how to embed them.
struct TrainData {
  const Dataset* dataset = nullptr;
  const EmbeddingTable* table = nullptr;
  std::vector<std::size_t> indices;  // examples used (e.g. one fold's train split)
  int max_len = 0;
};

struct BatchStats {
  double loss = 0.0;
  double sum_norm = 0.0;
  int fake_count = 0;
  int size = 0;
};

struct EpochMetrics {
  double mean_loss = 0.0;
  double train_accuracy = 0.0;  // over real examples
  double sum_norm_mean = 0.0;
  double sum_norm_max = 0.0;
  double mean_loss_g = 0.0;     // 0 when not semi-supervised
  std::vector<BatchStats> batches;
};

/// One pass over seeded-shuffled mini-batches: forward, loss, backward,
/// clip_global, rmsprop. The last incomplete batch is dropped. With a
/// semi-supervised context and p_g > 0 each batch mixes in generator samples;
/// p_g = 0 falls back to the plain supervised path (identical rng stream).
/// Word vectors live in the frozen embedding table and are never updated.
EpochMetrics train_epoch(AcBlstmModel& model, const TrainData& data,
                         const TrainConfig& cfg, RmspropOptimizer& opt, Rng& rng,
                         SemisupContext* gan = nullptr);

struct EvalResult {
  double accuracy = 0.0;
  std::vector<std::vector<long>> confusion;  // [true][predicted], K x K
  std::size_t total = 0;
};

/// Eval-mode scoring (dropout off, batchnorm running stats); partial final
/// batch included. Pass a subset to score one fold.
EvalResult evaluate(AcBlstmModel& model, const Dataset& dataset,
                    const EmbeddingTable& table, int max_len,
                    const std::vector<std::size_t>* subset = nullptr,
                    int eval_batch_size = 100);

struct EpochRecord {
  int epoch = 0;  // 1-based
  EpochMetrics train;
  bool has_val = false;
  double val_accuracy = 0.0;
  double wall_ms = 0.0;
};

struct FitResult {
  std::vector<EpochRecord> history;
  int best_epoch = 0;      // 1-based; 0 when no validation ran
  double best_val = -1.0;  // -1 when no validation ran
};

/// Epoch loop with optional validation each eval_every epochs. When a
/// validation set is present the best-accuracy parameters are restored at the
/// end (model selection) and patience > 0 stops after that many evals without
/// improvement. Without validation the final epoch stands.
FitResult fit(AcBlstmModel& model, const TrainData& train, const TrainConfig& cfg,
              RmspropOptimizer& opt, Rng& rng, SemisupContext* gan = nullptr,
              const Dataset* val_dataset = nullptr,
              const std::vector<std::size_t>* val_subset = nullptr,
              const std::function<void(const EpochRecord&)>& on_epoch = nullptr);

}  // namespace acblstm

#endif  // ACBLSTM_TRAINING_HPP_
