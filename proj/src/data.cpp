#include "acblstm/data.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "acblstm/errors.hpp"
#include "acblstm/rng.hpp"

namespace acblstm {

std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> tokens;
  std::string cur;
  for (char ch : text) {
    if (std::isspace(static_cast<unsigned char>(ch))) {
      if (!cur.empty()) tokens.push_back(std::move(cur)), cur.clear();
    } else {
      cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
    }
  }
  if (!cur.empty()) tokens.push_back(std::move(cur));
  return tokens;
}

std::vector<std::string> pad_tokens(std::vector<std::string> tokens, int max_len) {
  if (max_len < 1) throw config_error("pad length must be >= 1");
  if (static_cast<int>(tokens.size()) > max_len) tokens.resize(max_len);
  while (static_cast<int>(tokens.size()) < max_len) tokens.emplace_back(kPadToken);
  return tokens;
}

std::vector<std::string> tokenize_and_pad(const std::string& text, int max_len) {
  std::vector<std::string> tokens = tokenize(text);
  if (tokens.empty()) throw parse_error("empty example after tokenization: \"" + text + "\"");
  return pad_tokens(std::move(tokens), max_len);
}

Dataset load_dataset(const std::string& path, const std::vector<std::string>* fixed_labels) {
  std::ifstream in(path);
  if (!in) throw config_error("cannot open dataset file: " + path);
  Dataset ds;
  std::unordered_map<std::string, int> label_ids;
  if (fixed_labels) {
    ds.label_names = *fixed_labels;
    for (std::size_t i = 0; i < ds.label_names.size(); ++i)
      label_ids[ds.label_names[i]] = static_cast<int>(i);
  }
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::size_t tab = line.find('\t');
    if (tab == std::string::npos)
      throw parse_error(path + ":" + std::to_string(lineno) + ": missing tab separator");
    const std::string label = line.substr(0, tab);
    const std::string text = line.substr(tab + 1);
    auto it = label_ids.find(label);
    int id;
    if (it != label_ids.end()) {
      id = it->second;
    } else if (fixed_labels) {
      throw bounds_error(path + ":" + std::to_string(lineno) + ": unknown label \"" + label +
                         "\" for the fixed label map");
    } else {
      id = static_cast<int>(ds.label_names.size());
      label_ids[label] = id;
      ds.label_names.push_back(label);
    }
    Example ex;
    ex.tokens = tokenize(text);
    if (ex.tokens.empty())
      throw parse_error(path + ":" + std::to_string(lineno) + ": empty example text");
    ex.label = id;
    ex.text = text;
    ds.examples.push_back(std::move(ex));
  }
  if (ds.examples.empty()) throw parse_error(path + ": empty dataset");
  return ds;
}

int percentile_length(const std::vector<Example>& examples, double pct) {
  if (examples.empty()) throw contract_error("percentile_length of an empty corpus");
  if (pct <= 0.0 || pct > 100.0) throw config_error("percentile must lie in (0,100]");
  std::vector<std::size_t> lens;
  lens.reserve(examples.size());
  for (const Example& e : examples) lens.push_back(e.tokens.size());
  std::sort(lens.begin(), lens.end());
  const std::size_t rank = static_cast<std::size_t>(
      std::max<long long>(0, static_cast<long long>(
                                 std::ceil(pct / 100.0 * static_cast<double>(lens.size()))) -
                                 1));
  return static_cast<int>(lens[std::min(rank, lens.size() - 1)]);
}

// -- embeddings -----------------------------------------------------------------

namespace {

// word2vec text format: header "V d", then "token v1 ... vd" per line.
std::unordered_map<std::string, std::vector<double>> read_word2vec_text(
    const std::string& path, int expect_dim,
    const std::unordered_map<std::string, int>& wanted) {
  std::ifstream in(path);
  if (!in) throw config_error("cannot open embeddings file: " + path);
  std::string line;
  if (!std::getline(in, line)) throw parse_error(path + ":1: missing word2vec header");
  std::istringstream header(line);
  long long vocab = 0, dim = 0;
  if (!(header >> vocab >> dim) || vocab < 0 || dim < 1)
    throw parse_error(path + ":1: malformed word2vec header \"" + line + "\"");
  std::string trailing;
  if (header >> trailing) throw parse_error(path + ":1: malformed word2vec header");
  if (dim != expect_dim)
    throw parse_error(path + ":1: embedding dim " + std::to_string(dim) +
                      " does not match configured dim " + std::to_string(expect_dim));
  std::unordered_map<std::string, std::vector<double>> found;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string token;
    if (!(ls >> token))
      throw parse_error(path + ":" + std::to_string(lineno) + ": malformed embedding line");
    std::vector<double> vec(static_cast<std::size_t>(dim));
    for (long long i = 0; i < dim; ++i)
      if (!(ls >> vec[static_cast<std::size_t>(i)]))
        throw parse_error(path + ":" + std::to_string(lineno) + ": expected " +
                          std::to_string(dim) + " values for token \"" + token + "\"");
    if (wanted.count(token)) found.emplace(std::move(token), std::move(vec));
  }
  return found;
}

}  // namespace

EmbeddingTable EmbeddingTable::build(const std::vector<Example>& corpus,
                                     const std::string& pretrained_path, int dim,
                                     std::uint64_t seed) {
  if (dim < 1) throw config_error("embedding dim must be >= 1");
  EmbeddingTable table;
  table.row_tokens_ = {kPadToken, kUnkToken};
  table.index_ = {{kPadToken, 0}, {kUnkToken, 1}};
  for (const Example& ex : corpus)
    for (const std::string& tok : ex.tokens)
      if (!table.index_.count(tok)) {
        table.index_[tok] = static_cast<int>(table.row_tokens_.size());
        table.row_tokens_.push_back(tok);
      }

  std::unordered_map<std::string, std::vector<double>> pretrained;
  if (!pretrained_path.empty())
    pretrained = read_word2vec_text(pretrained_path, dim, table.index_);

  Rng rng(seed);
  const std::size_t rows = table.row_tokens_.size();
  std::vector<double> data(rows * static_cast<std::size_t>(dim), 0.0);
  for (std::size_t r = 1; r < rows; ++r) {  // row 0 stays the zero pad row
    double* dst = data.data() + r * static_cast<std::size_t>(dim);
    auto hit = pretrained.find(table.row_tokens_[r]);
    if (hit != pretrained.end()) {
      std::copy(hit->second.begin(), hit->second.end(), dst);
    } else {
      for (int i = 0; i < dim; ++i) dst[i] = rng.uniform(-0.25, 0.25);
    }
  }
  table.matrix_ = Tensor::from_data({static_cast<int>(rows), dim}, std::move(data));
  return table;
}

EmbeddingTable EmbeddingTable::from_parts(std::vector<std::string> row_tokens, Tensor matrix) {
  if (matrix.rank() != 2 || matrix.dim(0) != static_cast<int>(row_tokens.size()))
    throw shape_error("embedding matrix rows do not match the token list");
  if (row_tokens.size() < 2 || row_tokens[0] != kPadToken || row_tokens[1] != kUnkToken)
    throw contract_error("embedding token list must start with pad and unk rows");
  EmbeddingTable table;
  table.row_tokens_ = std::move(row_tokens);
  for (std::size_t i = 0; i < table.row_tokens_.size(); ++i)
    table.index_[table.row_tokens_[i]] = static_cast<int>(i);
  table.matrix_ = matrix.detach();
  return table;
}

int EmbeddingTable::row_of(const std::string& token) const {
  auto it = index_.find(token);
  return it == index_.end() ? 1 : it->second;
}

Tensor EmbeddingTable::embed(const std::vector<Example>& examples,
                             const std::vector<std::size_t>& indices, int max_len) const {
  const int d = dim();
  const int b = static_cast<int>(indices.size());
  if (b < 1) throw contract_error("embed of an empty batch");
  const auto& m = matrix_.values();
  std::vector<double> out(static_cast<std::size_t>(b) * max_len * d, 0.0);
  for (int bi = 0; bi < b; ++bi) {
    const Example& ex = examples.at(indices[static_cast<std::size_t>(bi)]);
    const int n = std::min<int>(max_len, static_cast<int>(ex.tokens.size()));
    for (int t = 0; t < n; ++t) {
      const int row = row_of(ex.tokens[static_cast<std::size_t>(t)]);
      std::copy_n(m.data() + static_cast<std::size_t>(row) * d, d,
                  out.data() + (static_cast<std::size_t>(bi) * max_len + t) * d);
    }
    // rows past n keep the zero pad vector
  }
  return Tensor::from_data({b, max_len, d}, std::move(out));
}

Tensor EmbeddingTable::embed_tokens(const std::vector<std::string>& tokens, int max_len) const {
  Example ex;
  ex.tokens = tokens;
  std::vector<Example> one = {std::move(ex)};
  return embed(one, {0}, max_len);
}

// -- folds ------------------------------------------------------------------------

FoldPlan kfold_split(std::size_t n, int folds, std::uint64_t seed) {
  if (folds < 2) throw config_error("kfold needs at least 2 folds");
  if (n < static_cast<std::size_t>(folds))
    throw contract_error("dataset size " + std::to_string(n) + " smaller than fold count " +
                         std::to_string(folds));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(order);
  FoldPlan plan;
  plan.folds = folds;
  plan.seed = seed;
  plan.fold_of.assign(n, 0);
  for (std::size_t i = 0; i < n; ++i)
    plan.fold_of[order[i]] = static_cast<int>(i % static_cast<std::size_t>(folds));
  return plan;
}

std::vector<std::size_t> fold_members(const FoldPlan& plan, int fold) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < plan.fold_of.size(); ++i)
    if (plan.fold_of[i] == fold) out.push_back(i);
  return out;
}

std::vector<std::size_t> fold_complement(const FoldPlan& plan, int fold) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < plan.fold_of.size(); ++i)
    if (plan.fold_of[i] != fold) out.push_back(i);
  return out;
}

void write_fold_csv(const FoldPlan& plan, std::ostream& os) {
  os << "example_index,fold_id\n";
  for (std::size_t i = 0; i < plan.fold_of.size(); ++i)
    os << i << "," << plan.fold_of[i] << "\n";
}

}  // namespace acblstm
