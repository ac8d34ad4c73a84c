#ifndef ACBLSTM_DATA_HPP_
#define ACBLSTM_DATA_HPP_

#include <cstdint>
#include <iosfwd>
#include <string>
#include <unordered_map>
#include <vector>

#include "acblstm/tensor.hpp"

namespace acblstm {

inline constexpr const char* kPadToken = "<pad>";
inline constexpr const char* kUnkToken = "<unk>";

struct Example {
  std::vector<std::string> tokens;  // preprocessed, unpadded
  int label = -1;
  std::string text;  // original line text
};

struct Dataset {
  std::vector<Example> examples;
  std::vector<std::string> label_names;  // index -> first-seen label string
  int num_classes() const { return static_cast<int>(label_names.size()); }
  std::size_t size() const { return examples.size(); }
};

/// Lowercase + whitespace split. Preprocessing is deliberately minimal.
std::vector<std::string> tokenize(const std::string& text);

/// Truncates to L or right-pads with the pad token; result has length exactly L.
std::vector<std::string> pad_tokens(std::vector<std::string> tokens, int max_len);

/// tokenize + pad_tokens; an input that tokenizes to nothing is an error.
std::vector<std::string> tokenize_and_pad(const std::string& text, int max_len);

/// Reads a UTF-8 "label<TAB>text" file. Labels map to contiguous ints in
/// first-seen order; pass `fixed_labels` to score against an existing map
/// (unknown labels then fail instead of growing the map).
Dataset load_dataset(const std::string& path,
                     const std::vector<std::string>* fixed_labels = nullptr);

/// The given percentile (in (0,100]) of token counts, for deriving L.
int percentile_length(const std::vector<Example>& examples, double pct);

/// Frozen token -> vector table. Row 0 is the all-zero pad row, row 1 the
/// shared unknown-token row; both always exist.
class EmbeddingTable {
 public:
  /// Builds the vocabulary from the corpus (first-seen order). Tokens found
  /// in the word2vec-text-format file keep its vectors; the rest draw
  /// uniform(-0.25, 0.25) from `seed`. Empty path skips the file.
  static EmbeddingTable build(const std::vector<Example>& corpus,
                              const std::string& pretrained_path, int dim,
                              std::uint64_t seed);

  /// Reassembles a table from checkpoint parts.
  static EmbeddingTable from_parts(std::vector<std::string> row_tokens, Tensor matrix);

  int dim() const { return matrix_.dim(1); }
  std::size_t rows() const { return row_tokens_.size(); }
  int row_of(const std::string& token) const;

  /// Embeds selected examples as one [B, L, dim] tensor (no gradient).
  Tensor embed(const std::vector<Example>& examples,
               const std::vector<std::size_t>& indices, int max_len) const;
  /// Embeds one token list -> [1, L, dim].
  Tensor embed_tokens(const std::vector<std::string>& tokens, int max_len) const;

  const Tensor& matrix() const { return matrix_; }
  const std::vector<std::string>& row_tokens() const { return row_tokens_; }

 private:
  std::unordered_map<std::string, int> index_;
  std::vector<std::string> row_tokens_;
  Tensor matrix_;  // [rows, dim], requires_grad is always false
};

/// 10-fold (or k-fold) assignment: seeded shuffle then round robin, so fold
/// sizes differ by at most one.
struct FoldPlan {
  int folds = 10;
  std::uint64_t seed = 0;
  std::vector<int> fold_of;  // example index -> fold id
};

FoldPlan kfold_split(std::size_t n, int folds, std::uint64_t seed);
std::vector<std::size_t> fold_members(const FoldPlan& plan, int fold);
std::vector<std::size_t> fold_complement(const FoldPlan& plan, int fold);
/// Two-column CSV: example_index,fold_id.
void write_fold_csv(const FoldPlan& plan, std::ostream& os);

}  // namespace acblstm

#endif  // ACBLSTM_DATA_HPP_
