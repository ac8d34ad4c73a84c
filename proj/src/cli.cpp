#include "acblstm/cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

#include "acblstm/checkpoint.hpp"
#include "acblstm/config.hpp"
#include "acblstm/training.hpp"

namespace acblstm {

namespace {

namespace fs = std::filesystem;

using KV = std::vector<std::pair<std::string, std::string>>;

std::string format_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

std::string format_metric(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

/// Append-only metrics sink; writes are serialized so parallel repeat
/// workers can share it.
class MetricsWriter {
 public:
  explicit MetricsWriter(const std::string& path) : os_(path, std::ios::app) {
    if (!os_) throw config_error("cannot open metrics file for append: " + path);
  }
  void write(const KV& fields) {
    std::lock_guard<std::mutex> lock(mu_);
    bool first = true;
    for (const auto& [k, v] : fields) {
      os_ << (first ? "" : " ") << k << "=" << v;
      first = false;
    }
    os_ << "\n";
    os_.flush();
  }

 private:
  std::ofstream os_;
  std::mutex mu_;
};

void require_file(const std::string& what, const std::string& path) {
  if (path.empty()) throw config_error("missing required path: " + what);
  if (!fs::exists(path)) throw config_error(what + " path does not exist: " + path);
}

std::string join_labels(const std::vector<std::string>& labels) {
  std::string out;
  for (std::size_t i = 0; i < labels.size(); ++i) out += (i ? "," : "") + labels[i];
  return out;
}

std::vector<std::string> split_labels(const std::string& joined) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : joined) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

std::vector<std::size_t> all_indices(std::size_t n) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  return idx;
}

// -- checkpoint assembly ----------------------------------------------------------

CheckpointData make_checkpoint(const RunConfig& cfg, const Dataset& train_ds,
                               const EmbeddingTable& table, AcBlstmModel& model,
                               Generator* generator, const std::string& rng_state) {
  CheckpointData data;
  data.config = cfg.echo();
  data.config.emplace_back("classes", std::to_string(train_ds.num_classes()));
  data.config.emplace_back("labels", join_labels(train_ds.label_names));
  data.rng_state = rng_state;
  data.vocab = table.row_tokens();
  data.tensors.push_back({"embedding.matrix", table.matrix()});
  for (const NamedTensor& nt : model.named_tensors()) data.tensors.push_back(nt);
  if (generator)
    for (const NamedTensor& nt : generator->named_tensors()) data.tensors.push_back(nt);
  return data;
}

struct RestoredRun {
  RunConfig cfg;
  std::vector<std::string> labels;
  EmbeddingTable table;
  std::unique_ptr<AcBlstmModel> model;
  std::unique_ptr<Generator> generator;  // only when the checkpoint carries one
};

void fill_named(const std::vector<NamedTensor>& targets,
                const std::vector<NamedTensor>& source, const std::string& what) {
  for (const NamedTensor& t : targets) {
    const NamedTensor* hit = nullptr;
    for (const NamedTensor& s : source)
      if (s.name == t.name) {
        hit = &s;
        break;
      }
    if (!hit) throw parse_error("checkpoint is missing tensor " + t.name + " for " + what);
    if (hit->tensor.shape() != t.tensor.shape())
      throw parse_error("checkpoint tensor " + t.name + " has the wrong shape");
    Tensor handle = t.tensor;
    handle.mutable_values() = hit->tensor.values();
  }
}

RestoredRun restore_run(const std::string& path) {
  CheckpointData data = load_checkpoint(path);
  RestoredRun run;
  int classes = 0;
  const auto& keys = RunConfig::keys();
  for (const auto& [key, value] : data.config) {
    if (key == "classes") classes = std::stoi(value);
    else if (key == "labels") run.labels = split_labels(value);
    else if (std::find(keys.begin(), keys.end(), key) != keys.end()) run.cfg.set(key, value);
  }
  if (classes < 2 || run.labels.empty())
    throw parse_error("checkpoint lacks class information");
  run.cfg.model.classes = classes;

  const NamedTensor* emb = nullptr;
  for (const NamedTensor& nt : data.tensors)
    if (nt.name == "embedding.matrix") emb = &nt;
  if (!emb || data.vocab.empty()) throw parse_error("checkpoint lacks the embedding table");
  run.table = EmbeddingTable::from_parts(data.vocab, emb->tensor);

  Rng scratch(0);  // values are overwritten from the checkpoint right after
  run.model = std::make_unique<AcBlstmModel>(run.cfg.model, scratch);
  fill_named(run.model->named_tensors(), data.tensors, "the model");

  bool has_gen = false;
  for (const NamedTensor& nt : data.tensors)
    if (nt.name.rfind("gen.", 0) == 0) has_gen = true;
  if (has_gen) {
    run.generator = std::make_unique<Generator>(run.cfg.gan_config, run.cfg.model.max_len,
                                                run.cfg.model.embed_dim, scratch);
    fill_named(run.generator->named_tensors(), data.tensors, "the generator");
  }
  return run;
}

// -- train ------------------------------------------------------------------------

struct RepeatOutcome {
  bool has_accuracy = false;
  double accuracy = 0.0;
};

RepeatOutcome run_one_repeat(int repeat, const RunConfig& cfg, const Dataset& train_ds,
                             const Dataset* test_ds, const Dataset* val_ds,
                             const EmbeddingTable& table, MetricsWriter& metrics) {
  const std::uint64_t seed_r = cfg.train.seed + static_cast<std::uint64_t>(repeat);
  TrainConfig tcfg = cfg.train;
  tcfg.seed = seed_r;
  Rng rng(seed_r);

  AcBlstmModel model(cfg.model, rng);
  RmspropOptimizer opt(model.trainable(), tcfg.learning_rate, tcfg.decay, tcfg.epsilon);

  // The gan rng stream is per repeat; CV folds draw fresh generators from it
  // the same way they draw fresh models from the repeat's model stream.
  std::unique_ptr<Rng> gan_rng;
  std::unique_ptr<Generator> generator;
  std::unique_ptr<RmspropOptimizer> gen_opt;
  SemisupContext ctx;
  if (cfg.gan) {
    const std::uint64_t gan_seed =
        (cfg.gan_config.seed != 0 ? cfg.gan_config.seed : seed_r + 7919) +
        static_cast<std::uint64_t>(cfg.gan_config.seed != 0 ? repeat : 0);
    gan_rng = std::make_unique<Rng>(gan_seed);
  }
  auto fresh_gan = [&]() -> SemisupContext* {
    if (!cfg.gan) return nullptr;
    generator = std::make_unique<Generator>(cfg.gan_config, cfg.model.max_len,
                                            cfg.model.embed_dim, *gan_rng);
    gen_opt = std::make_unique<RmspropOptimizer>(generator->trainable(), tcfg.learning_rate,
                                                 tcfg.decay, tcfg.epsilon);
    ctx = {generator.get(), cfg.gan_config, gen_opt.get(), gan_rng.get()};
    return &ctx;
  };

  auto emit_epoch = [&](const EpochRecord& rec, int fold) {
    KV fields = {{"event", "epoch"}, {"repeat", std::to_string(repeat)}};
    if (fold >= 0) fields.emplace_back("fold", std::to_string(fold));
    fields.emplace_back("epoch", std::to_string(rec.epoch));
    fields.emplace_back("loss", format_metric(rec.train.mean_loss));
    fields.emplace_back("train_acc", format_metric(rec.train.train_accuracy));
    if (rec.has_val) fields.emplace_back("val_acc", format_metric(rec.val_accuracy));
    fields.emplace_back("sum_norm_mean", format_metric(rec.train.sum_norm_mean));
    fields.emplace_back("sum_norm_max", format_metric(rec.train.sum_norm_max));
    if (cfg.gan) fields.emplace_back("loss_g", format_metric(rec.train.mean_loss_g));
    fields.emplace_back("wall_ms", format_metric(rec.wall_ms));
    metrics.write(fields);
  };

  RepeatOutcome outcome;
  if (cfg.cv_folds > 0) {
    FoldPlan plan = kfold_split(train_ds.size(), cfg.cv_folds, seed_r);
    double acc_sum = 0.0;
    for (int fold = 0; fold < cfg.cv_folds; ++fold) {
      AcBlstmModel fold_model(cfg.model, rng);
      RmspropOptimizer fold_opt(fold_model.trainable(), tcfg.learning_rate, tcfg.decay,
                                tcfg.epsilon);
      TrainData data{&train_ds, &table, fold_complement(plan, fold), cfg.model.max_len};
      fit(fold_model, data, tcfg, fold_opt, rng, fresh_gan(), nullptr, nullptr,
          [&](const EpochRecord& rec) { emit_epoch(rec, fold); });
      const std::vector<std::size_t> test_idx = fold_members(plan, fold);
      const double acc =
          evaluate(fold_model, train_ds, table, cfg.model.max_len, &test_idx).accuracy;
      acc_sum += acc;
      metrics.write({{"event", "fold_summary"},
                     {"repeat", std::to_string(repeat)},
                     {"fold", std::to_string(fold)},
                     {"accuracy", format_metric(acc)}});
      if (fold == cfg.cv_folds - 1) {
        CheckpointData ck = make_checkpoint(cfg, train_ds, table, fold_model,
                                            generator.get(), rng.state());
        save_checkpoint(cfg.out_dir + "/checkpoint_r" + std::to_string(repeat) + ".ckpt", ck);
      }
    }
    outcome.has_accuracy = true;
    outcome.accuracy = acc_sum / cfg.cv_folds;
  } else {
    TrainData data{&train_ds, &table, all_indices(train_ds.size()), cfg.model.max_len};
    const Dataset* val = val_ds ? val_ds : nullptr;
    FitResult fitres = fit(model, data, tcfg, opt, rng, fresh_gan(), val, nullptr,
                           [&](const EpochRecord& rec) { emit_epoch(rec, -1); });
    if (test_ds) {
      outcome.has_accuracy = true;
      outcome.accuracy = evaluate(model, *test_ds, table, cfg.model.max_len).accuracy;
    } else if (val_ds && fitres.best_epoch > 0) {
      outcome.has_accuracy = true;
      outcome.accuracy = fitres.best_val;
    }
    CheckpointData ck =
        make_checkpoint(cfg, train_ds, table, model, generator.get(), rng.state());
    save_checkpoint(cfg.out_dir + "/checkpoint_r" + std::to_string(repeat) + ".ckpt", ck);
  }

  KV summary = {{"event", "repeat_summary"}, {"repeat", std::to_string(repeat)}};
  if (outcome.has_accuracy) summary.emplace_back("accuracy", format_metric(outcome.accuracy));
  metrics.write(summary);
  return outcome;
}

int run_train(RunConfig cfg) {
  require_file("dataset", cfg.dataset);
  if (!cfg.test_dataset.empty()) require_file("test_dataset", cfg.test_dataset);
  if (!cfg.val_dataset.empty()) require_file("val_dataset", cfg.val_dataset);
  if (!cfg.embeddings.empty()) require_file("embeddings", cfg.embeddings);
  if (cfg.repeats < 1) throw config_error("repeats must be >= 1");
  if (cfg.jobs < 1) throw config_error("jobs must be >= 1");
  fs::create_directories(cfg.out_dir);

  Dataset train_ds = load_dataset(cfg.dataset);
  cfg.model.classes = train_ds.num_classes();
  if (cfg.gan) cfg.model.extra_fake_class = true;
  if (cfg.model.max_len == 0) {
    cfg.model.max_len =
        std::max({percentile_length(train_ds.examples, 95.0), cfg.model.khat(),
                  cfg.gan ? 4 : 1});
  }
  cfg.model.validate();
  cfg.train.validate();
  if (cfg.gan) cfg.gan_config.validate(cfg.model.max_len, cfg.model.embed_dim);

  std::unique_ptr<Dataset> test_ds, val_ds;
  if (!cfg.test_dataset.empty())
    test_ds = std::make_unique<Dataset>(load_dataset(cfg.test_dataset, &train_ds.label_names));
  if (!cfg.val_dataset.empty())
    val_ds = std::make_unique<Dataset>(load_dataset(cfg.val_dataset, &train_ds.label_names));

  EmbeddingTable table =
      EmbeddingTable::build(train_ds.examples, cfg.embeddings, cfg.model.embed_dim,
                            cfg.train.seed);

  MetricsWriter metrics(cfg.resolved_metrics_file());
  KV config_record = {{"event", "config"}};
  for (const auto& kv : cfg.echo()) config_record.push_back(kv);
  config_record.emplace_back("classes", std::to_string(train_ds.num_classes()));
  metrics.write(config_record);

  std::vector<RepeatOutcome> outcomes(static_cast<std::size_t>(cfg.repeats));
  std::exception_ptr first_error;
  std::mutex error_mu;
  std::atomic<int> next{0};
  auto worker = [&] {
    for (;;) {
      const int r = next.fetch_add(1);
      if (r >= cfg.repeats) return;
      try {
        outcomes[static_cast<std::size_t>(r)] = run_one_repeat(
            r, cfg, train_ds, test_ds.get(), val_ds.get(), table, metrics);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mu);
        if (!first_error) first_error = std::current_exception();
        return;
      }
    }
  };
  if (cfg.jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int j = 0; j < std::min(cfg.jobs, cfg.repeats); ++j) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
  }
  if (first_error) std::rethrow_exception(first_error);

  std::vector<double> accs;
  for (const RepeatOutcome& o : outcomes)
    if (o.has_accuracy) accs.push_back(o.accuracy);
  if (!accs.empty()) {
    const double mean = std::accumulate(accs.begin(), accs.end(), 0.0) /
                        static_cast<double>(accs.size());
    double var = 0.0;
    for (double a : accs) var += (a - mean) * (a - mean);
    const double stddev =
        accs.size() > 1 ? std::sqrt(var / static_cast<double>(accs.size() - 1)) : 0.0;
    metrics.write({{"event", "summary"},
                   {"repeats", std::to_string(accs.size())},
                   {"mean_accuracy", format_metric(mean)},
                   {"std_accuracy", format_metric(stddev)}});
    std::cout << "repeats=" << accs.size() << " mean_accuracy=" << format_metric(mean)
              << " std_accuracy=" << format_metric(stddev) << "\n";
  } else {
    std::cout << "training finished (no evaluation split configured)\n";
  }
  std::cout << "checkpoints written to " << cfg.out_dir << "\n";
  return kExitOk;
}

// -- eval / predict ------------------------------------------------------------------

int run_eval(const RunConfig& cli_cfg) {
  require_file("checkpoint", cli_cfg.checkpoint);
  require_file("dataset", cli_cfg.dataset);
  RestoredRun run = restore_run(cli_cfg.checkpoint);
  Dataset ds = load_dataset(cli_cfg.dataset, &run.labels);
  ds.label_names = run.labels;
  EvalResult r = evaluate(*run.model, ds, run.table, run.cfg.model.max_len);
  std::cout << "examples=" << r.total << " accuracy=" << format_metric(r.accuracy) << "\n";
  std::cout << "confusion (rows = true class):\n";
  for (std::size_t i = 0; i < r.confusion.size(); ++i) {
    std::cout << "  " << run.labels[i] << ":";
    for (long c : r.confusion[i]) std::cout << " " << c;
    std::cout << "\n";
  }
  return kExitOk;
}

int run_predict(const RunConfig& cli_cfg) {
  require_file("checkpoint", cli_cfg.checkpoint);
  RestoredRun run = restore_run(cli_cfg.checkpoint);
  std::string line;
  while (std::getline(std::cin, line)) {
    const std::vector<std::string> tokens = tokenize(line);
    if (tokens.empty()) continue;
    Tensor input = run.table.embed_tokens(tokens, run.cfg.model.max_len);
    Prediction pred = run.model->predict(input);
    std::cout << run.labels[static_cast<std::size_t>(pred.classes[0])];
    for (int j = 0; j < pred.width; ++j) std::cout << (j ? " " : "\t") << format_metric(pred.probs[static_cast<std::size_t>(j)]);
    std::cout << "\n";
  }
  return kExitOk;
}

// -- gen-sample ------------------------------------------------------------------------

int run_gen_sample(const RunConfig& cli_cfg) {
  std::unique_ptr<Generator> generator;
  int max_len = cli_cfg.model.max_len, embed_dim = cli_cfg.model.embed_dim;
  Rng rng(cli_cfg.gan_config.seed != 0 ? cli_cfg.gan_config.seed : cli_cfg.train.seed);
  if (!cli_cfg.checkpoint.empty()) {
    require_file("checkpoint", cli_cfg.checkpoint);
    RestoredRun run = restore_run(cli_cfg.checkpoint);
    if (!run.generator)
      throw config_error("checkpoint carries no generator (trained without --gan)");
    generator = std::move(run.generator);
    max_len = run.cfg.model.max_len;
    embed_dim = run.cfg.model.embed_dim;
  } else {
    if (max_len < 4) throw config_error("gen-sample needs max_len >= 4 (or a checkpoint)");
    generator = std::make_unique<Generator>(cli_cfg.gan_config, max_len, embed_dim, rng);
  }
  if (cli_cfg.gen_samples < 1) throw config_error("gen_samples must be >= 1");

  fs::create_directories(cli_cfg.out_dir);
  const std::string path = cli_cfg.out_dir + "/gen_samples.txt";
  std::ofstream os(path);
  if (!os) throw config_error("cannot write " + path);
  Tensor out = generator->sample(cli_cfg.gen_samples, Mode::Eval, rng);
  os << "samples " << cli_cfg.gen_samples << " " << max_len << " " << embed_dim << "\n";
  for (int s = 0; s < cli_cfg.gen_samples; ++s) {
    os << "sample " << s << "\n";
    for (int t = 0; t < max_len; ++t) {
      for (int j = 0; j < embed_dim; ++j)
        os << (j ? " " : "") << format_double(out.at({s, t, j, 0}));
      os << "\n";
    }
  }
  std::cout << "wrote " << cli_cfg.gen_samples << " samples to " << path << "\n";
  return kExitOk;
}

// -- folds --------------------------------------------------------------------------

int run_folds(const RunConfig& cli_cfg) {
  require_file("dataset", cli_cfg.dataset);
  Dataset ds = load_dataset(cli_cfg.dataset);
  const int folds = cli_cfg.cv_folds > 0 ? cli_cfg.cv_folds : 10;
  FoldPlan plan = kfold_split(ds.size(), folds, cli_cfg.train.seed);
  write_fold_csv(plan, std::cout);
  return kExitOk;
}

}  // namespace

// -- gradcheck ---------------------------------------------------------------------------

std::vector<std::pair<std::string, double>> gradient_check_suite() {
  std::vector<std::pair<std::string, double>> results;
  Rng rng(424242);

  {
    Tensor a = Tensor::uniform({3, 4}, -1, 1, rng, true);
    Tensor b = Tensor::uniform({4, 2}, -1, 1, rng);
    results.emplace_back("matmul", finite_diff_check([&](const Tensor& t) {
      return sum_all(matmul(t, b));
    }, a));
  }
  {
    Tensor x = Tensor::uniform({8}, 0.1, 1.5, rng, true);
    results.emplace_back("elementwise_tanh_mul", finite_diff_check([](const Tensor& t) {
      return mean_all(mul(tanh(t), sigmoid(t)));
    }, x));
    Tensor y = Tensor::uniform({8}, 0.1, 1.5, rng, true);
    results.emplace_back("relu_offkink", finite_diff_check([](const Tensor& t) {
      return sum_all(relu(t));
    }, y));
  }
  {
    Tensor logits = Tensor::uniform({5, 3}, -2, 2, rng, true);
    results.emplace_back("softmax_cross_entropy", finite_diff_check([](const Tensor& t) {
      return softmax_cross_entropy(t, {0, 2, 1, 1, 0});
    }, logits));
  }
  {
    Conv1xdParams p = Conv1xdParams::init(3, 5, rng);
    Tensor x = Tensor::uniform({2, 6, 5}, 0.2, 1.0, rng, true);
    results.emplace_back("conv_1xd", finite_diff_check([&](const Tensor& t) {
      return mean_all(conv_1xd(t, p, nullptr, Mode::Eval));
    }, x));
  }
  {
    ConvKx1Params p = ConvKx1Params::init(3, 3, rng);
    Tensor x = Tensor::uniform({2, 6, 3}, 0.2, 1.0, rng, true);
    results.emplace_back("conv_kx1", finite_diff_check([&](const Tensor& t) {
      return mean_all(conv_kx1(t, p, nullptr, Mode::Eval));
    }, x));
  }
  {
    Deconv2dParams p = Deconv2dParams::init(4, 4, 2, 2, 2, rng);
    Tensor x = Tensor::uniform({1, 4, 4, 2}, -1, 1, rng, true);
    results.emplace_back("deconv2d", finite_diff_check([&](const Tensor& t) {
      return mean_all(deconv2d(t, p));
    }, x));
  }
  {
    Tensor x = Tensor::uniform({6, 3}, -2, 2, rng, true);
    Tensor probe = Tensor::uniform({6, 3}, -1, 1, rng);
    results.emplace_back("batchnorm_train", finite_diff_check([&](const Tensor& t) {
      BatchNormParams q = BatchNormParams::init(3);
      return mean_all(mul(batchnorm(t, q, Mode::Train), probe));
    }, x));
    BatchNormParams p = BatchNormParams::init(3);
    results.emplace_back("batchnorm_eval", finite_diff_check([&](const Tensor& t) {
      return mean_all(mul(batchnorm(t, p, Mode::Eval), probe));
    }, x));
  }
  {
    LstmParams p = LstmParams::init(3, 2, rng);
    Tensor x = Tensor::uniform({2, 2}, -1, 1, rng, true);
    Tensor h = Tensor::uniform({2, 3}, -1, 1, rng);
    Tensor c = Tensor::uniform({2, 3}, -1, 1, rng);
    results.emplace_back("lstm_step", finite_diff_check([&](const Tensor& t) {
      auto [hn, cn] = lstm_step(t, h, c, p);
      return mean_all(add(hn, cn));
    }, x));
  }
  {
    DenseParams p = DenseParams::init(3, 4, rng);
    Tensor x = Tensor::uniform({2, 4}, -1, 1, rng, true);
    results.emplace_back("dense", finite_diff_check([&](const Tensor& t) {
      return mean_all(dense(t, p));
    }, x));
  }
  {
    ModelConfig cfg;
    cfg.max_len = 8;
    cfg.embed_dim = 4;
    cfg.filters = 3;
    cfg.lstm_dim = 3;
    cfg.classes = 3;
    cfg.dropout_blstm_input = 0.0;
    cfg.dropout_before_softmax = 0.0;
    AcBlstmModel model(cfg, rng);
    Tensor x = Tensor::uniform({2, 8, 4}, -1, 1, rng, true);
    auto loss = [&](const Tensor& t) {
      return softmax_cross_entropy(model.forward(t, Mode::Eval), {0, 2});
    };
    results.emplace_back("model_input", finite_diff_check(loss, x));
    for (NamedTensor& nt : [&] { auto v = model.named_tensors(); return v; }()) {
      if (nt.name == "blstm.layer0.fw.w_g")
        results.emplace_back("model_lstm_weight",
                             finite_diff_check([&](const Tensor&) { return loss(x); }, nt.tensor));
      if (nt.name == "branch0.conv_1xd.weight")
        results.emplace_back("model_conv_weight",
                             finite_diff_check([&](const Tensor&) { return loss(x); }, nt.tensor));
    }
  }
  {
    ModelConfig cfg;
    cfg.max_len = 8;
    cfg.embed_dim = 8;
    cfg.filters = 4;
    cfg.lstm_dim = 4;
    cfg.classes = 2;
    cfg.extra_fake_class = true;
    cfg.dropout_blstm_input = 0.0;
    cfg.dropout_before_softmax = 0.0;
    AcBlstmModel model(cfg, rng);
    GanConfig gcfg;
    gcfg.latent_dim = 6;
    gcfg.c_g = 4;
    Generator gen(gcfg, 8, 8, rng);
    std::vector<double> zdata(2 * 6);
    for (double& v : zdata) v = rng.normal();
    Tensor z = Tensor::from_data({2, 6}, zdata);
    auto loss = [&](const Tensor&) {
      Tensor fake = gen.forward(z, Mode::Eval);
      return fake_class_rejection_loss(
          model.forward(reshape(fake, {2, 8, 8}), Mode::Eval), 2);
    };
    for (NamedTensor& nt : [&] { auto v = gen.named_tensors(); return v; }())
      if (nt.name == "gen.deconv3.weight")
        results.emplace_back("generator_loss", finite_diff_check(loss, nt.tensor));
  }
  return results;
}

namespace {

int run_gradcheck(const RunConfig&) {
  const auto results = gradient_check_suite();
  double worst = 0.0;
  for (const auto& [name, err] : results) {
    std::cout << name << " max_rel_err=" << format_metric(err) << "\n";
    worst = std::max(worst, err);
  }
  std::cout << "worst=" << format_metric(worst) << (worst < 1e-4 ? " (pass)" : " (FAIL)")
            << "\n";
  return worst < 1e-4 ? kExitOk : kExitConfig;
}

}  // namespace

// -- entry point ------------------------------------------------------------------------

int run_command(const std::vector<std::string>& args) {
  std::vector<const char*> argv;
  argv.push_back("acblstm");
  for (const std::string& a : args) argv.push_back(a.c_str());
  return run_command(static_cast<int>(argv.size()), argv.data());
}

int run_command(int argc, const char* const* argv) {
  CLI::App app{"AC-BLSTM text classification (with the semi-supervised G-AC-BLSTM extension)"};
  app.require_subcommand(1);

  struct CommandArgs {
    std::string config_path;
    std::vector<std::pair<std::string, std::string>> overrides;
  };
  std::vector<std::unique_ptr<CommandArgs>> arg_blocks;

  int rc = kExitOk;
  auto add_command = [&](const std::string& name, const std::string& desc,
                         std::function<int(const RunConfig&)> handler) {
    CLI::App* sub = app.add_subcommand(name, desc);
    arg_blocks.push_back(std::make_unique<CommandArgs>());
    CommandArgs* ca = arg_blocks.back().get();
    sub->add_option("--config", ca->config_path, "config file of key = value lines");
    for (const std::string& key : RunConfig::keys()) {
      if (key == "gan") continue;
      sub->add_option_function<std::string>(
          "--" + key,
          [ca, key](const std::string& v) { ca->overrides.emplace_back(key, v); });
    }
    sub->add_flag_callback("--gan",
                           [ca] { ca->overrides.emplace_back("gan", "true"); },
                           "enable the semi-supervised generator");
    sub->add_option_function<std::string>(
        "--out", [ca](const std::string& v) { ca->overrides.emplace_back("out_dir", v); },
        "output directory (alias of --out_dir)");
    sub->callback([ca, handler, &rc] {
      RunConfig cfg = parse_config(ca->config_path, ca->overrides);
      rc = handler(cfg);
    });
    return sub;
  };

  add_command("train", "train a model (repeated runs, mean/std accuracy)", run_train);
  add_command("eval", "score a checkpoint on a dataset", run_eval);
  add_command("predict", "classify lines from standard input", run_predict);
  add_command("gradcheck", "run the finite-difference gradient suite", run_gradcheck);
  add_command("gen-sample", "write generator samples for inspection", run_gen_sample);
  add_command("folds", "emit a 10-fold cross-validation plan as CSV", run_folds);

  try {
    app.parse(argc, const_cast<char**>(argv));
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n";
    std::cerr << app.help() << "\n";
    return kExitUsage;
  } catch (const numeric_error& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const config_error& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const parse_error& e) {
    std::cerr << "parse error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  }
  return rc;
}

}  // namespace acblstm
