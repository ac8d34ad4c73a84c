#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "acblstm/checkpoint.hpp"
#include "acblstm/cli.hpp"
#include "acblstm/config.hpp"
#include "acblstm/training.hpp"

using namespace acblstm;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("acblstm_cli_" + std::to_string(::getpid()) + "_" +
                                        std::to_string(counter()++));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
  static int& counter() {
    static int c = 0;
    return c;
  }
};

void write_file(const std::string& path, const std::string& contents) {
  std::ofstream out(path);
  out << contents;
}

std::string tiny_corpus(int n) {
  std::ostringstream os;
  const char* pos_words[] = {"great", "superb", "lovely"};
  const char* neg_words[] = {"awful", "dire", "boring"};
  for (int i = 0; i < n; ++i) {
    const bool pos = i % 2 == 0;
    os << (pos ? "pos" : "neg") << "\tthe film was "
       << (pos ? pos_words[i % 3] : neg_words[i % 3]) << " overall\n";
  }
  return os.str();
}

}  // namespace

TEST_CASE("parse_config: defaults carry the paper hyperparameters") {
  RunConfig cfg = parse_config("", {});
  CHECK(cfg.model.k_set == std::array<int, 3>{2, 3, 4});
  CHECK(cfg.train.learning_rate == 1e-4);
  CHECK(cfg.train.clip_threshold == 0.5);
  CHECK(cfg.train.batch_size == 50);
  CHECK(cfg.model.dropout_blstm_input == 0.5);
  CHECK(cfg.gan_config.latent_dim == 100);
  CHECK(cfg.gan_config.c_g == 100);
  CHECK(cfg.repeats == 10);
  CHECK_FALSE(cfg.gan);
}

TEST_CASE("parse_config: file values and override precedence") {
  TempDir dir;
  const std::string path = dir.file("run.cfg");
  write_file(path,
             "# an SST-style run\n"
             "p_g = 0.1\n"
             "filters = 300   # the wide configuration\n"
             "lstm_dim = 300\n"
             "epochs = 7\n");
  RunConfig cfg = parse_config(path, {});
  CHECK(cfg.gan_config.p_g == 0.1);
  CHECK(cfg.model.filters == 300);
  CHECK(cfg.train.epochs == 7);

  RunConfig overridden = parse_config(path, {{"epochs", "3"}, {"p_g", "0.2"}});
  CHECK(overridden.train.epochs == 3);      // command line beats the file
  CHECK(overridden.gan_config.p_g == 0.2);
  CHECK(overridden.model.filters == 300);   // untouched file value survives
}

TEST_CASE("parse_config: unknown keys and bad values name the location") {
  TempDir dir;
  const std::string path = dir.file("bad.cfg");
  write_file(path, "filters = 100\nno_such_key = 5\n");
  try {
    parse_config(path, {});
    FAIL("expected config_error");
  } catch (const config_error& e) {
    const std::string msg = e.what();
    CHECK(msg.find(":2") != std::string::npos);
    CHECK(msg.find("no_such_key") != std::string::npos);
  }
  write_file(path, "epochs = soon\n");
  CHECK_THROWS_AS(parse_config(path, {}), config_error);
  CHECK_THROWS_AS(parse_config(path, {{"clip_mode", "l1"}}), config_error);
}

TEST_CASE("model invariant violations surface as config errors at train time") {
  TempDir dir;
  const std::string data = dir.file("train.tsv");
  write_file(data, tiny_corpus(12));
  const int rc = run_command({"train", "--dataset", data, "--filters", "16", "--lstm_dim",
                              "8", "--out", dir.file("out")});
  CHECK(rc == kExitConfig);  // filters != lstm_dim
}

TEST_CASE("checkpoint: low-level save/load round trip is bit-exact") {
  TempDir dir;
  Rng rng(5);
  CheckpointData data;
  data.config = {{"alpha", "1"}, {"beta", "x y z"}};
  data.rng_state = rng.state();
  data.vocab = {"<pad>", "<unk>", "word"};
  data.tensors.push_back({"a", Tensor::uniform({3, 4}, -5, 5, rng)});
  data.tensors.push_back({"b.c", Tensor::from_data({2}, {1.0 / 3.0, -0.0})});
  const std::string path = dir.file("t.ckpt");
  save_checkpoint(path, data);
  CheckpointData back = load_checkpoint(path);
  CHECK(back.version == 1);
  CHECK(back.config == data.config);
  CHECK(back.rng_state == data.rng_state);
  CHECK(back.vocab == data.vocab);
  REQUIRE(back.tensors.size() == 2);
  CHECK(back.tensors[0].name == "a");
  CHECK(back.tensors[0].tensor.values() == data.tensors[0].tensor.values());
  CHECK(back.tensors[1].tensor.values() == data.tensors[1].tensor.values());

  // restored rng continues the same stream
  Rng replay(0);
  replay.restore(back.rng_state);
  Rng expect(5);
  expect.restore(data.rng_state);
  for (int i = 0; i < 8; ++i) CHECK(replay.uniform01() == expect.uniform01());
}

TEST_CASE("checkpoint: load(save(model)) reproduces the live model's logits") {
  TempDir dir;
  ModelConfig mcfg;
  mcfg.max_len = 8;
  mcfg.embed_dim = 6;
  mcfg.filters = 5;
  mcfg.lstm_dim = 5;
  mcfg.classes = 3;
  mcfg.dropout_blstm_input = 0.0;
  mcfg.dropout_before_softmax = 0.0;
  Rng rng(31);
  AcBlstmModel original(mcfg, rng);

  CheckpointData data;
  data.config = {{"format", "test"}};
  data.rng_state = rng.state();
  for (const NamedTensor& nt : original.named_tensors()) data.tensors.push_back(nt);
  const std::string path = dir.file("model.ckpt");
  save_checkpoint(path, data);

  CheckpointData back = load_checkpoint(path);
  Rng scratch(0);
  AcBlstmModel restored(mcfg, scratch);
  for (const NamedTensor& nt : restored.named_tensors()) {
    bool found = false;
    for (const NamedTensor& s : back.tensors)
      if (s.name == nt.name) {
        Tensor handle = nt.tensor;
        handle.mutable_values() = s.tensor.values();
        found = true;
      }
    REQUIRE(found);
  }
  Rng probe(77);
  for (int rep = 0; rep < 16; ++rep) {
    Tensor x = Tensor::uniform({3, 8, 6}, -1, 1, probe);
    CHECK(original.forward(x, Mode::Eval).values() == restored.forward(x, Mode::Eval).values());
  }
}

TEST_CASE("checkpoint: trained model round trip reproduces logits bit-exactly") {
  TempDir dir;
  const std::string data = dir.file("train.tsv");
  write_file(data, tiny_corpus(24));
  const std::string out = dir.file("out");
  int rc = run_command({"train", "--dataset", data, "--repeats", "1", "--epochs", "2",
                        "--filters", "6", "--lstm_dim", "6", "--embed_dim", "8",
                        "--max_len", "8", "--batch_size", "8", "--seed", "77", "--out", out});
  REQUIRE(rc == kExitOk);

  // rebuild the model through the checkpoint twice and compare logits
  CheckpointData ck = load_checkpoint(out + "/checkpoint_r0.ckpt");
  RunConfig cfg;
  int classes = 0;
  for (const auto& [key, value] : ck.config) {
    if (key == "classes") classes = std::stoi(value);
    else {
      const auto& keys = RunConfig::keys();
      if (std::find(keys.begin(), keys.end(), key) != keys.end()) cfg.set(key, value);
    }
  }
  cfg.model.classes = classes;
  auto build = [&] {
    Rng scratch(0);
    auto model = std::make_unique<AcBlstmModel>(cfg.model, scratch);
    for (const NamedTensor& nt : model->named_tensors())
      for (const NamedTensor& s : ck.tensors)
        if (s.name == nt.name) {
          Tensor handle = nt.tensor;
          handle.mutable_values() = s.tensor.values();
        }
    return model;
  };
  auto m1 = build();
  auto m2 = build();
  Rng probe(123);
  for (int rep = 0; rep < 16; ++rep) {
    Tensor x = Tensor::uniform({2, cfg.model.max_len, cfg.model.embed_dim}, -1, 1, probe);
    CHECK(m1->forward(x, Mode::Eval).values() == m2->forward(x, Mode::Eval).values());
  }
}

TEST_CASE("run_command: exit-code mapping by fault injection") {
  TempDir dir;
  // unknown command -> usage
  CHECK(run_command({"frobnicate"}) == kExitUsage);
  CHECK(run_command({}) == kExitUsage);

  // config violation -> 1, named key
  CHECK(run_command({"train", "--dataset", dir.file("missing.tsv")}) == kExitConfig);

  // numeric runtime error -> 3: an absurd learning rate sends the parameters
  // to ~1e200 after the first batch, so the second batch's logits overflow
  const std::string data = dir.file("train.tsv");
  write_file(data, tiny_corpus(8));
  const int rc = run_command({"train", "--dataset", data, "--learning_rate", "1e200",
                              "--embed_dim", "4", "--filters", "4", "--lstm_dim", "4",
                              "--max_len", "4", "--batch_size", "4", "--repeats", "1",
                              "--use_batchnorm", "false", "--out", dir.file("out")});
  CHECK(rc == kExitNumeric);
}

TEST_CASE("run_command: predict with empty stdin exits cleanly") {
  TempDir dir;
  const std::string data = dir.file("train.tsv");
  write_file(data, tiny_corpus(12));
  const std::string out = dir.file("out");
  REQUIRE(run_command({"train", "--dataset", data, "--repeats", "1", "--epochs", "1",
                       "--filters", "4", "--lstm_dim", "4", "--embed_dim", "6",
                       "--max_len", "6", "--batch_size", "4", "--out", out}) == kExitOk);
  std::istringstream empty_in;
  auto* old = std::cin.rdbuf(empty_in.rdbuf());
  const int rc = run_command({"predict", "--checkpoint", out + "/checkpoint_r0.ckpt"});
  std::cin.rdbuf(old);
  CHECK(rc == kExitOk);
}

TEST_CASE("metrics file: append-only records with the expected fields") {
  TempDir dir;
  const std::string data = dir.file("train.tsv");
  write_file(data, tiny_corpus(24));
  const std::string metrics = dir.file("metrics.log");
  REQUIRE(run_command({"train", "--dataset", data, "--test_dataset", data, "--repeats", "2",
                       "--epochs", "2", "--filters", "4", "--lstm_dim", "4", "--embed_dim",
                       "6", "--max_len", "6", "--batch_size", "8", "--metrics_file", metrics,
                       "--out", dir.file("out")}) == kExitOk);
  std::ifstream in(metrics);
  std::string line;
  int config_records = 0, epoch_records = 0, summaries = 0;
  while (std::getline(in, line)) {
    if (line.rfind("event=config", 0) == 0) {
      ++config_records;
      CHECK(line.find("learning_rate=") != std::string::npos);
    }
    if (line.rfind("event=epoch", 0) == 0) {
      ++epoch_records;
      for (const char* field : {"repeat=", "epoch=", "loss=", "train_acc=", "sum_norm_mean=",
                                "sum_norm_max=", "wall_ms="})
        CHECK(line.find(field) != std::string::npos);
    }
    if (line.rfind("event=summary", 0) == 0) {
      ++summaries;
      CHECK(line.find("mean_accuracy=") != std::string::npos);
      CHECK(line.find("std_accuracy=") != std::string::npos);
    }
  }
  CHECK(config_records == 1);
  CHECK(epoch_records == 4);  // 2 repeats x 2 epochs
  CHECK(summaries == 1);

  // a second run appends rather than truncates
  REQUIRE(run_command({"train", "--dataset", data, "--repeats", "1", "--epochs", "1",
                       "--filters", "4", "--lstm_dim", "4", "--embed_dim", "6", "--max_len",
                       "6", "--batch_size", "8", "--metrics_file", metrics, "--out",
                       dir.file("out2")}) == kExitOk);
  std::ifstream again(metrics);
  int configs_after = 0;
  while (std::getline(again, line))
    if (line.rfind("event=config", 0) == 0) ++configs_after;
  CHECK(configs_after == 2);
}

TEST_CASE("gradcheck command passes and prints per-layer errors") {
  const auto results = gradient_check_suite();
  CHECK(results.size() >= 14);
  for (const auto& [name, err] : results) {
    INFO(name);
    CHECK(err < 1e-4);
  }
}

TEST_CASE("folds command emits a CSV plan") {
  TempDir dir;
  const std::string data = dir.file("train.tsv");
  write_file(data, tiny_corpus(20));
  std::ostringstream captured;
  auto* old = std::cout.rdbuf(captured.rdbuf());
  const int rc = run_command({"folds", "--dataset", data, "--seed", "3"});
  std::cout.rdbuf(old);
  CHECK(rc == kExitOk);
  std::istringstream is(captured.str());
  std::string line;
  std::getline(is, line);
  CHECK(line == "example_index,fold_id");
  int rows = 0;
  while (std::getline(is, line)) ++rows;
  CHECK(rows == 20);
}

TEST_CASE("ACBLSTM_SEED environment variable sets the default seed") {
  ::setenv("ACBLSTM_SEED", "4242", 1);
  RunConfig with_env = parse_config("", {});
  CHECK(with_env.train.seed == 4242);
  // explicit value still wins
  RunConfig overridden = parse_config("", {{"seed", "7"}});
  CHECK(overridden.train.seed == 7);
  ::unsetenv("ACBLSTM_SEED");
  RunConfig without = parse_config("", {});
  CHECK(without.train.seed == 12345);
}
