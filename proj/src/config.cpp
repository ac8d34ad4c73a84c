#include "acblstm/config.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "acblstm/errors.hpp"

namespace acblstm {

namespace {

std::string format_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

double parse_double(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(value, &pos);
    if (pos != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw config_error("key '" + key + "': cannot parse '" + value + "' as a number");
  }
}

long long parse_int(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    const long long v = std::stoll(value, &pos);
    if (pos != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw config_error("key '" + key + "': cannot parse '" + value + "' as an integer");
  }
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  throw config_error("key '" + key + "': cannot parse '" + value + "' as a boolean");
}

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  std::size_t b = s.find_last_not_of(" \t\r");
  return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
}

}  // namespace

RunConfig::RunConfig() {
  if (const char* env = std::getenv("ACBLSTM_SEED")) {
    train.seed = static_cast<std::uint64_t>(parse_int("ACBLSTM_SEED", env));
  }
}

const std::vector<std::string>& RunConfig::keys() {
  static const std::vector<std::string> k = {
      "max_len", "embed_dim", "filters", "k1", "k2", "k3", "lstm_dim", "lstm_layers",
      "dropout_blstm_input", "dropout_before_softmax", "use_batchnorm", "extra_fake_class",
      "batch_size", "epochs", "learning_rate", "rmsprop_decay", "rmsprop_epsilon",
      "clip_threshold", "clip_mode", "seed", "eval_every", "patience",
      "gan", "latent_dim", "c_g", "p_g", "gan_seed",
      "repeats", "cv_folds", "gen_samples", "jobs",
      "dataset", "test_dataset", "val_dataset", "embeddings", "out_dir", "metrics_file",
      "checkpoint"};
  return k;
}

void RunConfig::set(const std::string& key, const std::string& value) {
  if (key == "max_len") model.max_len = static_cast<int>(parse_int(key, value));
  else if (key == "embed_dim") model.embed_dim = static_cast<int>(parse_int(key, value));
  else if (key == "filters") model.filters = static_cast<int>(parse_int(key, value));
  else if (key == "k1") model.k_set[0] = static_cast<int>(parse_int(key, value));
  else if (key == "k2") model.k_set[1] = static_cast<int>(parse_int(key, value));
  else if (key == "k3") model.k_set[2] = static_cast<int>(parse_int(key, value));
  else if (key == "lstm_dim") model.lstm_dim = static_cast<int>(parse_int(key, value));
  else if (key == "lstm_layers") model.lstm_layers = static_cast<int>(parse_int(key, value));
  else if (key == "dropout_blstm_input") model.dropout_blstm_input = parse_double(key, value);
  else if (key == "dropout_before_softmax") model.dropout_before_softmax = parse_double(key, value);
  else if (key == "use_batchnorm") model.use_batchnorm = parse_bool(key, value);
  else if (key == "extra_fake_class") model.extra_fake_class = parse_bool(key, value);
  else if (key == "batch_size") train.batch_size = static_cast<int>(parse_int(key, value));
  else if (key == "epochs") train.epochs = static_cast<int>(parse_int(key, value));
  else if (key == "learning_rate") train.learning_rate = parse_double(key, value);
  else if (key == "rmsprop_decay") train.decay = parse_double(key, value);
  else if (key == "rmsprop_epsilon") train.epsilon = parse_double(key, value);
  else if (key == "clip_threshold") train.clip_threshold = parse_double(key, value);
  else if (key == "clip_mode") {
    if (value == "sum") train.clip_mode = ClipMode::SumOfNorms;
    else if (value == "concat") train.clip_mode = ClipMode::ConcatNorm;
    else throw config_error("key 'clip_mode': expected 'sum' or 'concat', got '" + value + "'");
  } else if (key == "seed") train.seed = static_cast<std::uint64_t>(parse_int(key, value));
  else if (key == "eval_every") train.eval_every = static_cast<int>(parse_int(key, value));
  else if (key == "patience") train.patience = static_cast<int>(parse_int(key, value));
  else if (key == "gan") gan = parse_bool(key, value);
  else if (key == "latent_dim") gan_config.latent_dim = static_cast<int>(parse_int(key, value));
  else if (key == "c_g") gan_config.c_g = static_cast<int>(parse_int(key, value));
  else if (key == "p_g") gan_config.p_g = parse_double(key, value);
  else if (key == "gan_seed") gan_config.seed = static_cast<std::uint64_t>(parse_int(key, value));
  else if (key == "repeats") repeats = static_cast<int>(parse_int(key, value));
  else if (key == "cv_folds") cv_folds = static_cast<int>(parse_int(key, value));
  else if (key == "gen_samples") gen_samples = static_cast<int>(parse_int(key, value));
  else if (key == "jobs") jobs = static_cast<int>(parse_int(key, value));
  else if (key == "dataset") dataset = value;
  else if (key == "test_dataset") test_dataset = value;
  else if (key == "val_dataset") val_dataset = value;
  else if (key == "embeddings") embeddings = value;
  else if (key == "out_dir") out_dir = value;
  else if (key == "metrics_file") metrics_file = value;
  else if (key == "checkpoint") checkpoint = value;
  else throw config_error("unknown config key '" + key + "'");
}

std::string RunConfig::get(const std::string& key) const {
  if (key == "max_len") return std::to_string(model.max_len);
  if (key == "embed_dim") return std::to_string(model.embed_dim);
  if (key == "filters") return std::to_string(model.filters);
  if (key == "k1") return std::to_string(model.k_set[0]);
  if (key == "k2") return std::to_string(model.k_set[1]);
  if (key == "k3") return std::to_string(model.k_set[2]);
  if (key == "lstm_dim") return std::to_string(model.lstm_dim);
  if (key == "lstm_layers") return std::to_string(model.lstm_layers);
  if (key == "dropout_blstm_input") return format_double(model.dropout_blstm_input);
  if (key == "dropout_before_softmax") return format_double(model.dropout_before_softmax);
  if (key == "use_batchnorm") return model.use_batchnorm ? "true" : "false";
  if (key == "extra_fake_class") return model.extra_fake_class ? "true" : "false";
  if (key == "batch_size") return std::to_string(train.batch_size);
  if (key == "epochs") return std::to_string(train.epochs);
  if (key == "learning_rate") return format_double(train.learning_rate);
  if (key == "rmsprop_decay") return format_double(train.decay);
  if (key == "rmsprop_epsilon") return format_double(train.epsilon);
  if (key == "clip_threshold") return format_double(train.clip_threshold);
  if (key == "clip_mode") return train.clip_mode == ClipMode::SumOfNorms ? "sum" : "concat";
  if (key == "seed") return std::to_string(train.seed);
  if (key == "eval_every") return std::to_string(train.eval_every);
  if (key == "patience") return std::to_string(train.patience);
  if (key == "gan") return gan ? "true" : "false";
  if (key == "latent_dim") return std::to_string(gan_config.latent_dim);
  if (key == "c_g") return std::to_string(gan_config.c_g);
  if (key == "p_g") return format_double(gan_config.p_g);
  if (key == "gan_seed") return std::to_string(gan_config.seed);
  if (key == "repeats") return std::to_string(repeats);
  if (key == "cv_folds") return std::to_string(cv_folds);
  if (key == "gen_samples") return std::to_string(gen_samples);
  if (key == "jobs") return std::to_string(jobs);
  if (key == "dataset") return dataset;
  if (key == "test_dataset") return test_dataset;
  if (key == "val_dataset") return val_dataset;
  if (key == "embeddings") return embeddings;
  if (key == "out_dir") return out_dir;
  if (key == "metrics_file") return metrics_file;
  if (key == "checkpoint") return checkpoint;
  throw config_error("unknown config key '" + key + "'");
}

std::vector<std::pair<std::string, std::string>> RunConfig::echo() const {
  std::vector<std::pair<std::string, std::string>> out;
  for (const std::string& key : keys()) out.emplace_back(key, get(key));
  return out;
}

std::string RunConfig::resolved_metrics_file() const {
  return metrics_file.empty() ? out_dir + "/metrics.log" : metrics_file;
}

RunConfig parse_config(const std::string& path,
                       const std::vector<std::pair<std::string, std::string>>& overrides) {
  RunConfig cfg;
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw config_error("cannot open config file: " + path);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const std::size_t hash = line.find('#');
      if (hash != std::string::npos) line.resize(hash);
      line = trim(line);
      if (line.empty()) continue;
      const std::size_t eq = line.find('=');
      if (eq == std::string::npos)
        throw config_error(path + ":" + std::to_string(lineno) + ": expected 'key = value'");
      const std::string key = trim(line.substr(0, eq));
      const std::string value = trim(line.substr(eq + 1));
      try {
        cfg.set(key, value);
      } catch (const config_error& e) {
        throw config_error(path + ":" + std::to_string(lineno) + ": " + e.what());
      }
    }
  }
  for (const auto& [key, value] : overrides) cfg.set(key, value);
  return cfg;
}

}  // namespace acblstm
