#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numeric>

#include "acblstm/training.hpp"

using namespace acblstm;

namespace {

Tensor param_with_grad(const std::vector<double>& values, const std::vector<double>& grad) {
  Tensor t = Tensor::from_data({static_cast<int>(values.size())}, values, true);
  t.mutable_grad() = grad;
  return t;
}

// Two-class keyword corpus: class 0 sentences contain "alpha", class 1 "omega",
// plus shared filler drawn from a small pool.
Dataset keyword_corpus(int count, Rng& rng) {
  const std::vector<std::string> filler = {"the", "film", "was", "plot", "and", "scene"};
  Dataset ds;
  ds.label_names = {"neg", "pos"};
  for (int i = 0; i < count; ++i) {
    Example e;
    e.label = i % 2;
    const int len = 3 + static_cast<int>(rng.below(3));
    for (int t = 0; t < len; ++t) e.tokens.push_back(filler[rng.below(filler.size())]);
    e.tokens[rng.below(e.tokens.size())] = e.label == 0 ? "alpha" : "omega";
    ds.examples.push_back(std::move(e));
  }
  return ds;
}

ModelConfig overfit_config(int k_classes) {
  ModelConfig cfg;
  cfg.max_len = 6;
  cfg.embed_dim = 8;
  cfg.filters = 8;
  cfg.lstm_dim = 8;
  cfg.lstm_layers = 1;
  cfg.classes = k_classes;
  cfg.dropout_blstm_input = 0.0;
  cfg.dropout_before_softmax = 0.0;
  cfg.use_batchnorm = true;
  return cfg;
}

}  // namespace

TEST_CASE("clip_global: paper rule on norms 0.6 + 0.4") {
  Tensor a = param_with_grad({0, 0}, {0.6, 0.0});
  Tensor b = param_with_grad({0}, {0.4});
  ClipResult r = clip_global({a, b}, 0.5);
  CHECK(r.sum_norm == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(r.scale == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(a.grad()[0] == doctest::Approx(0.3).epsilon(1e-15));
  CHECK(b.grad()[0] == doctest::Approx(0.2).epsilon(1e-15));
}

TEST_CASE("clip_global: below the threshold gradients stay bit-identical") {
  Tensor a = param_with_grad({0, 0}, {0.18, 0.0});
  Tensor b = param_with_grad({0}, {0.12});
  ClipResult r = clip_global({a, b}, 0.5);
  CHECK(r.sum_norm == doctest::Approx(0.3).epsilon(1e-15));
  CHECK(r.scale == 1.0);
  CHECK(a.grad() == std::vector<double>{0.18, 0.0});
  CHECK(b.grad() == std::vector<double>{0.12});
}

TEST_CASE("clip_global: post-clip norm is min(pre, threshold) and one shared scale") {
  Rng rng(7);
  for (int rep = 0; rep < 50; ++rep) {
    std::vector<Tensor> params;
    std::vector<std::vector<double>> before;
    for (int p = 0; p < 3; ++p) {
      const int n = 1 + static_cast<int>(rng.below(5));
      std::vector<double> g(static_cast<std::size_t>(n));
      for (double& x : g) x = rng.uniform(-0.4, 0.4);
      params.push_back(param_with_grad(std::vector<double>(g.size(), 0.0), g));
      before.push_back(g);
    }
    ClipResult r = clip_global(params, 0.5);
    double post = 0.0;
    for (const Tensor& p : params) {
      double sq = 0.0;
      for (double g : p.grad()) sq += g * g;
      post += std::sqrt(sq);
    }
    CHECK(post == doctest::Approx(std::min(r.sum_norm, 0.5)).epsilon(1e-12));
    // direction preserved: every coordinate shares one scaling factor
    for (std::size_t p = 0; p < params.size(); ++p)
      for (std::size_t i = 0; i < before[p].size(); ++i)
        CHECK(params[p].grad()[i] == doctest::Approx(before[p][i] * r.scale).epsilon(1e-15));
  }
}

TEST_CASE("clip_global: concatenated-norm mode and error paths") {
  Tensor a = param_with_grad({0}, {0.6});
  Tensor b = param_with_grad({0}, {0.4});
  ClipResult r = clip_global({a, b}, 0.5, ClipMode::ConcatNorm);
  CHECK(r.sum_norm == doctest::Approx(std::sqrt(0.52)).epsilon(1e-12));
  CHECK(r.scale == doctest::Approx(0.5 / std::sqrt(0.52)).epsilon(1e-12));

  Tensor bad = param_with_grad({0}, {std::numeric_limits<double>::quiet_NaN()});
  CHECK_THROWS_AS(clip_global({bad}, 0.5), numeric_error);
  CHECK_THROWS_AS(clip_global({a}, 0.0), config_error);
}

TEST_CASE("rmsprop: zero gradient leaves parameters unchanged") {
  Tensor p = Tensor::from_data({3}, {1.0, -2.0, 3.0}, true);
  RmspropOptimizer opt({p}, 0.01);
  opt.step();  // no gradient buffer at all
  CHECK(p.values() == std::vector<double>{1.0, -2.0, 3.0});
  p.mutable_grad();  // allocated but zero
  opt.step();
  CHECK(p.values() == std::vector<double>{1.0, -2.0, 3.0});
}

TEST_CASE("rmsprop: constant gradient converges to lr-sized steps") {
  Tensor p = Tensor::from_data({1}, {0.0}, true);
  const double lr = 1e-3, g = 0.5;
  RmspropOptimizer opt({p}, lr);
  double prev = 0.0;
  double last_step = 0.0;
  for (int i = 0; i < 1000; ++i) {
    p.mutable_grad() = {g};
    opt.step();
    last_step = std::abs(p.values()[0] - prev);
    prev = p.values()[0];
  }
  // acc -> g^2, so |delta| -> lr * g / sqrt(g^2 + eps) ~= lr
  CHECK(last_step == doctest::Approx(lr).epsilon(1e-4));
}

TEST_CASE("rmsprop: equal gradients produce equal updates") {
  Tensor a = Tensor::from_data({1}, {1.0}, true);
  Tensor b = Tensor::from_data({1}, {5.0}, true);
  RmspropOptimizer opt({a, b}, 1e-2);
  for (int i = 0; i < 3; ++i) {
    a.mutable_grad() = {0.7};
    b.mutable_grad() = {0.7};
    opt.step();
  }
  CHECK(a.values()[0] - 1.0 == doctest::Approx(b.values()[0] - 5.0).epsilon(1e-15));
}

TEST_CASE("train_epoch: same seed gives bit-identical parameters") {
  auto run = [] {
    Rng data_rng(100);
    Dataset ds = keyword_corpus(24, data_rng);
    EmbeddingTable table = EmbeddingTable::build(ds.examples, "", 8, 5);
    Rng model_rng(200);
    AcBlstmModel model(overfit_config(2), model_rng);
    TrainConfig cfg;
    cfg.batch_size = 8;
    cfg.learning_rate = 1e-3;
    TrainData data{&ds, &table, {}, 6};
    data.indices.resize(ds.size());
    std::iota(data.indices.begin(), data.indices.end(), std::size_t{0});
    RmspropOptimizer opt(model.trainable(), cfg.learning_rate);
    Rng train_rng(300);
    for (int e = 0; e < 2; ++e) train_epoch(model, data, cfg, opt, train_rng);
    std::vector<double> flat;
    for (const NamedTensor& nt : model.named_tensors())
      flat.insert(flat.end(), nt.tensor.values().begin(), nt.tensor.values().end());
    return flat;
  };
  CHECK(run() == run());
}

TEST_CASE("train_epoch: embedding table is never updated") {
  Rng data_rng(101);
  Dataset ds = keyword_corpus(24, data_rng);
  EmbeddingTable table = EmbeddingTable::build(ds.examples, "", 8, 5);
  const std::vector<double> before = table.matrix().values();
  Rng model_rng(201);
  AcBlstmModel model(overfit_config(2), model_rng);
  TrainConfig cfg;
  cfg.batch_size = 8;
  TrainData data{&ds, &table, {}, 6};
  data.indices.resize(ds.size());
  std::iota(data.indices.begin(), data.indices.end(), std::size_t{0});
  RmspropOptimizer opt(model.trainable(), cfg.learning_rate);
  Rng train_rng(301);
  train_epoch(model, data, cfg, opt, train_rng);
  CHECK(table.matrix().values() == before);
}

TEST_CASE("train_epoch: non-finite loss aborts with a numeric error") {
  Rng data_rng(102);
  Dataset ds = keyword_corpus(16, data_rng);
  EmbeddingTable table = EmbeddingTable::build(ds.examples, "", 8, 5);
  Rng model_rng(202);
  AcBlstmModel model(overfit_config(2), model_rng);
  // poison one parameter
  for (NamedTensor& nt : [&] { auto v = model.named_tensors(); return v; }())
    if (nt.name == "head.bias")
      nt.tensor.mutable_values()[0] = std::numeric_limits<double>::quiet_NaN();
  TrainConfig cfg;
  cfg.batch_size = 8;
  TrainData data{&ds, &table, {}, 6};
  data.indices.resize(ds.size());
  std::iota(data.indices.begin(), data.indices.end(), std::size_t{0});
  RmspropOptimizer opt(model.trainable(), cfg.learning_rate);
  Rng train_rng(302);
  CHECK_THROWS_AS(train_epoch(model, data, cfg, opt, train_rng), numeric_error);
}

TEST_CASE("evaluate: constant predictor, confusion counts, permutation invariance") {
  Rng data_rng(103);
  Dataset ds;
  ds.label_names = {"a", "b", "c", "d"};
  for (int i = 0; i < 40; ++i) {
    Example e;
    e.label = i % 4;
    e.tokens = {"word"};
    ds.examples.push_back(e);
  }
  EmbeddingTable table = EmbeddingTable::build(ds.examples, "", 8, 5);
  Rng model_rng(203);
  AcBlstmModel model(overfit_config(4), model_rng);
  for (NamedTensor& nt : [&] { auto v = model.named_tensors(); return v; }()) {
    if (nt.name == "head.weight")
      std::fill(nt.tensor.mutable_values().begin(), nt.tensor.mutable_values().end(), 0.0);
    if (nt.name == "head.bias") nt.tensor.mutable_values() = {0.0, 1.0, 0.0, 0.0};
  }
  EvalResult r = evaluate(model, ds, table, 6);
  CHECK(r.accuracy == doctest::Approx(0.25));
  CHECK(r.total == 40);
  long sum = 0;
  for (const auto& row : r.confusion) {
    long rowsum = 0;
    for (long cell : row) rowsum += cell;
    CHECK(rowsum == 10);  // per-class support
    sum += rowsum;
  }
  CHECK(sum == 40);

  std::vector<std::size_t> shuffled(40);
  std::iota(shuffled.begin(), shuffled.end(), std::size_t{0});
  Rng perm(9);
  perm.shuffle(shuffled);
  CHECK(evaluate(model, ds, table, 6, &shuffled).accuracy == doctest::Approx(0.25));

  std::vector<std::size_t> empty;
  CHECK_THROWS_AS(evaluate(model, ds, table, 6, &empty), contract_error);
}

TEST_CASE("overfit: separable corpus reaches 100% train accuracy, loss trends down") {
  Rng data_rng(104);
  Dataset ds = keyword_corpus(64, data_rng);
  EmbeddingTable table = EmbeddingTable::build(ds.examples, "", 8, 5);
  Rng model_rng(204);
  AcBlstmModel model(overfit_config(2), model_rng);
  TrainConfig cfg;
  cfg.batch_size = 16;
  cfg.learning_rate = 1e-3;
  cfg.epochs = 200;
  TrainData data{&ds, &table, {}, 6};
  data.indices.resize(ds.size());
  std::iota(data.indices.begin(), data.indices.end(), std::size_t{0});
  RmspropOptimizer opt(model.trainable(), cfg.learning_rate);
  Rng train_rng(304);
  std::vector<double> losses;
  bool reached = false;
  for (int e = 0; e < cfg.epochs; ++e) {
    EpochMetrics m = train_epoch(model, data, cfg, opt, train_rng);
    losses.push_back(m.mean_loss);
    if (m.train_accuracy == 1.0) {
      reached = true;
      break;
    }
  }
  CHECK(reached);
  // after epoch 5 the loss never jumps more than 5% between epochs
  for (std::size_t e = 5; e + 1 < losses.size(); ++e)
    CHECK(losses[e + 1] <= losses[e] * 1.05);
}

TEST_CASE("fit: validation selects the best epoch and early stops") {
  Rng data_rng(105);
  Dataset ds = keyword_corpus(48, data_rng);
  EmbeddingTable table = EmbeddingTable::build(ds.examples, "", 8, 5);
  Rng model_rng(205);
  AcBlstmModel model(overfit_config(2), model_rng);
  TrainConfig cfg;
  cfg.batch_size = 8;
  cfg.learning_rate = 1e-3;
  cfg.epochs = 30;
  cfg.patience = 3;
  TrainData data{&ds, &table, {}, 6};
  for (std::size_t i = 0; i < 32; ++i) data.indices.push_back(i);
  std::vector<std::size_t> val;
  for (std::size_t i = 32; i < 48; ++i) val.push_back(i);
  RmspropOptimizer opt(model.trainable(), cfg.learning_rate);
  Rng train_rng(305);
  int seen_epochs = 0;
  FitResult r = fit(model, data, cfg, opt, train_rng, nullptr, &ds, &val,
                    [&](const EpochRecord&) { ++seen_epochs; });
  CHECK(r.best_epoch >= 1);
  CHECK(static_cast<int>(r.history.size()) == seen_epochs);
  // restored parameters reproduce the best validation accuracy
  CHECK(evaluate(model, ds, table, 6, &val).accuracy == doctest::Approx(r.best_val));
}
