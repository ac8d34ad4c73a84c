#include "acblstm/model.hpp"

#include <algorithm>
#include <set>

namespace acblstm {

void ModelConfig::validate() const {
  if (max_len < 1) throw config_error("max_len must be >= 1");
  if (embed_dim < 1) throw config_error("embed_dim must be >= 1");
  if (filters < 1) throw config_error("filters must be >= 1");
  if (lstm_dim < 1) throw config_error("lstm_dim must be >= 1");
  if (lstm_layers < 1) throw config_error("lstm_layers must be >= 1");
  if (classes < 2) throw config_error("classes must be >= 2");
  if (filters != lstm_dim)
    throw config_error("filters must equal lstm_dim (observed constraint), got filters=" +
                       std::to_string(filters) + " lstm_dim=" + std::to_string(lstm_dim));
  std::set<int> distinct(k_set.begin(), k_set.end());
  if (distinct.size() != 3) throw config_error("k_set needs 3 distinct filter lengths");
  for (int k : k_set) {
    if (k < 1) throw config_error("k_set entries must be >= 1");
    if (k > max_len)
      throw config_error("k_set entry " + std::to_string(k) + " exceeds max_len " +
                         std::to_string(max_len));
  }
  if (dropout_blstm_input < 0 || dropout_blstm_input >= 1)
    throw config_error("dropout_blstm_input must lie in [0,1)");
  if (dropout_before_softmax < 0 || dropout_before_softmax >= 1)
    throw config_error("dropout_before_softmax must lie in [0,1)");
}

AcBlstmModel::AcBlstmModel(const ModelConfig& config, Rng& rng) : config_(config) {
  config_.validate();
  const int n = config_.filters;
  const int khat = config_.khat();
  for (int i = 0; i < 3; ++i) {
    Branch& br = branches_[static_cast<std::size_t>(i)];
    const int k = config_.k_set[static_cast<std::size_t>(i)];
    br.stage1 = Conv1xdParams::init(n, config_.embed_dim, rng);
    br.stage2 = ConvKx1Params::init(n, k, rng);
    if (config_.use_batchnorm) {
      br.bn1 = BatchNormParams::init(n);
      br.bn2 = BatchNormParams::init(n);
    }
    if (k < khat) {
      // tail features t >= T-1 collapse to one n-dim feature
      br.compress = DenseParams::init(n, (khat - k + 1) * n, rng);
      br.has_compress = true;
    }
  }
  blstm_ = BlstmStack::init(config_.lstm_layers, 3 * n, config_.lstm_dim, rng);
  head_ = DenseParams::init(config_.logits_dim(), config_.fused_len() * 2 * config_.lstm_dim, rng);
}

Tensor AcBlstmModel::asymmetric_branch(const Tensor& input, int branch, Mode mode) {
  if (branch < 0 || branch > 2) throw bounds_error("branch index must be 0, 1 or 2");
  Branch& br = branches_[static_cast<std::size_t>(branch)];
  const bool bn = config_.use_batchnorm;
  Tensor stage1 = conv_1xd(input, br.stage1, bn ? &br.bn1 : nullptr, mode);
  return conv_kx1(stage1, br.stage2, bn ? &br.bn2 : nullptr, mode);
}

Tensor AcBlstmModel::fuse_branches(const std::vector<Tensor>& branch_outputs) {
  if (branch_outputs.size() != 3) throw contract_error("fuse_branches expects 3 branches");
  const int n = config_.filters;
  const int t_out = config_.fused_len();
  std::vector<Tensor> aligned;
  for (int i = 0; i < 3; ++i) {
    const Tensor& out = branch_outputs[static_cast<std::size_t>(i)];
    if (out.rank() != 3 || out.dim(2) != n)
      throw shape_error("branch output width must equal the filter count");
    Branch& br = branches_[static_cast<std::size_t>(i)];
    const int len = out.dim(1);
    if (len == t_out) {
      aligned.push_back(out);  // khat branch passes through unmodified
      continue;
    }
    if (!br.has_compress || len < t_out)
      throw shape_error("unexpected branch length " + std::to_string(len));
    const int b = out.dim(0);
    const int tail = len - (t_out - 1);  // khat - k_i + 1 features
    Tensor tail_flat =
        reshape(slice(out, 1, t_out - 1, len), {b, tail * n});
    Tensor squeezed = reshape(dense(tail_flat, br.compress), {b, 1, n});
    if (t_out == 1) {
      aligned.push_back(squeezed);
    } else {
      Tensor headpart = slice(out, 1, 0, t_out - 1);
      aligned.push_back(concat({headpart, squeezed}, 1));
    }
  }
  return concat(aligned, 2);
}

Tensor AcBlstmModel::forward(const Tensor& input, Mode mode, Rng* rng) {
  if (input.rank() != 3 || input.dim(1) != config_.max_len ||
      input.dim(2) != config_.embed_dim)
    throw shape_error("forward expects [B, max_len, embed_dim] input");
  if (mode == Mode::Train && (config_.dropout_blstm_input > 0 || config_.dropout_before_softmax > 0) &&
      !rng)
    throw contract_error("train-mode forward needs an rng for dropout");
  if (mode == Mode::Train && config_.use_batchnorm && input.dim(0) < 2)
    throw contract_error("train-mode forward with batchnorm needs a batch of >= 2");
  std::vector<Tensor> branch_outputs;
  for (int i = 0; i < 3; ++i) branch_outputs.push_back(asymmetric_branch(input, i, mode));
  Tensor fused = fuse_branches(branch_outputs);
  Tensor encoded = blstm_forward(fused, blstm_, config_.dropout_blstm_input, mode, rng);
  const int b = encoded.dim(0);
  Tensor flat = reshape(encoded, {b, config_.fused_len() * 2 * config_.lstm_dim});
  if (mode == Mode::Train && config_.dropout_before_softmax > 0)
    flat = dropout(flat, config_.dropout_before_softmax, mode, *rng);
  return dense(flat, head_);
}

Prediction AcBlstmModel::predict(const Tensor& input) {
  Tensor logits = forward(input, Mode::Eval);
  Prediction pred;
  pred.width = logits.dim(1);
  pred.probs = softmax_rows(logits);
  const int b = logits.dim(0);
  const int argmax_width = config_.extra_fake_class ? config_.classes : pred.width;
  for (int i = 0; i < b; ++i) {
    const double* row = pred.probs.data() + static_cast<std::size_t>(i) * pred.width;
    pred.classes.push_back(static_cast<int>(
        std::max_element(row, row + argmax_width) - row));
  }
  return pred;
}

std::vector<NamedTensor> AcBlstmModel::named_tensors() const {
  std::vector<NamedTensor> out;
  for (int i = 0; i < 3; ++i) {
    const Branch& br = branches_[static_cast<std::size_t>(i)];
    const std::string base = "branch" + std::to_string(i);
    br.stage1.append_named(base + ".conv_1xd", out);
    br.stage2.append_named(base + ".conv_kx1", out);
    if (config_.use_batchnorm) {
      br.bn1.append_named(base + ".bn1", out);
      br.bn2.append_named(base + ".bn2", out);
    }
    if (br.has_compress) br.compress.append_named(base + ".compress", out);
  }
  blstm_.append_named("blstm", out);
  head_.append_named("head", out);
  return out;
}

std::vector<Tensor> AcBlstmModel::trainable() const {
  std::vector<Tensor> out;
  for (const NamedTensor& nt : named_tensors())
    if (nt.tensor.requires_grad()) out.push_back(nt.tensor);
  return out;
}

ParamCount AcBlstmModel::param_count() const {
  ParamCount pc;
  auto bucket = [&pc](const std::string& name, std::size_t n) {
    for (auto& [key, count] : pc.per_component)
      if (key == name) {
        count += n;
        return;
      }
    pc.per_component.emplace_back(name, n);
  };
  for (const NamedTensor& nt : named_tensors()) {
    if (!nt.tensor.requires_grad()) continue;  // running stats are state, not params
    const std::size_t dot = nt.name.rfind('.');
    std::string component = nt.name.substr(0, dot);
    bucket(component, nt.tensor.size());
    pc.total += nt.tensor.size();
  }
  return pc;
}

}  // namespace acblstm
