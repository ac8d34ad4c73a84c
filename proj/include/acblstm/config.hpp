#ifndef ACBLSTM_CONFIG_HPP_
#define ACBLSTM_CONFIG_HPP_

#include <string>
#include <utility>
#include <vector>

#include "acblstm/gan.hpp"
#include "acblstm/model.hpp"
#include "acblstm/optim.hpp"

namespace acblstm {

/// Flat run configuration: every model/train/gan hyperparameter plus paths.
/// Resolution order: built-in defaults (seed also via ACBLSTM_SEED), then the
/// config file, then command-line overrides.
struct RunConfig {
  ModelConfig model;    // classes is filled from data; max_len 0 = derive (95th pct)
  TrainConfig train;
  GanConfig gan_config;
  bool gan = false;
  int repeats = 10;
  int cv_folds = 0;     // > 0: k-fold cross validation instead of a test split
  int gen_samples = 4;
  int jobs = 1;         // parallel repeat workers
  std::string dataset, test_dataset, val_dataset, embeddings;
  std::string out_dir = "out";
  std::string metrics_file;  // defaults to <out_dir>/metrics.log
  std::string checkpoint;

  RunConfig();  // applies defaults incl. the ACBLSTM_SEED override

  static const std::vector<std::string>& keys();
  /// Sets one key from its string form. Throws config_error naming the key
  /// on unknown keys or unparsable values.
  void set(const std::string& key, const std::string& value);
  std::string get(const std::string& key) const;
  /// Full resolved key/value listing in canonical order (checkpoint echo,
  /// metrics provenance).
  std::vector<std::pair<std::string, std::string>> echo() const;
  std::string resolved_metrics_file() const;
};

/// Reads "key = value" lines (# comments, blank lines allowed), then applies
/// the overrides. An empty path yields pure defaults + overrides.
RunConfig parse_config(const std::string& path,
                       const std::vector<std::pair<std::string, std::string>>& overrides);

}  // namespace acblstm

#endif  // ACBLSTM_CONFIG_HPP_
