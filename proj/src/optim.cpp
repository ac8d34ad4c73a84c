#include "acblstm/optim.hpp"

#include <cmath>

#include "acblstm/errors.hpp"

namespace acblstm {

void TrainConfig::validate() const {
  if (batch_size < 2) throw config_error("batch_size must be >= 2");
  if (epochs < 1) throw config_error("epochs must be >= 1");
  if (learning_rate <= 0) throw config_error("learning_rate must be > 0");
  if (decay < 0 || decay >= 1) throw config_error("decay must lie in [0,1)");
  if (epsilon <= 0) throw config_error("epsilon must be > 0");
  if (clip_threshold <= 0) throw config_error("clip_threshold must be > 0");
  if (eval_every < 1) throw config_error("eval_every must be >= 1");
  if (patience < 0) throw config_error("patience must be >= 0");
}

ClipResult clip_global(const std::vector<Tensor>& params, double threshold, ClipMode mode) {
  if (threshold <= 0) throw config_error("clip threshold must be > 0");
  double agg = 0.0;
  for (const Tensor& p : params) {
    if (!p.has_grad()) continue;
    double sq = 0.0;
    for (double g : p.grad()) {
      if (!std::isfinite(g)) throw numeric_error("non-finite gradient in clip_global");
      sq += g * g;
    }
    agg += mode == ClipMode::SumOfNorms ? std::sqrt(sq) : sq;
  }
  ClipResult result;
  result.sum_norm = mode == ClipMode::SumOfNorms ? agg : std::sqrt(agg);
  if (result.sum_norm > threshold) {
    result.scale = threshold / result.sum_norm;
    for (const Tensor& p : params) {
      if (!p.has_grad()) continue;
      Tensor handle = p;
      for (double& g : handle.mutable_grad()) g *= result.scale;
    }
  }
  return result;
}

RmspropOptimizer::RmspropOptimizer(std::vector<Tensor> params, double learning_rate,
                                   double decay, double epsilon)
    : params_(std::move(params)), lr_(learning_rate), decay_(decay), eps_(epsilon) {
  acc_.reserve(params_.size());
  for (const Tensor& p : params_) acc_.emplace_back(p.size(), 0.0);
}

void RmspropOptimizer::step() {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor& p = params_[i];
    std::vector<double>& acc = acc_[i];
    if (!p.has_grad()) {
      for (double& a : acc) a *= decay_;
      continue;
    }
    const std::vector<double>& g = p.grad();
    std::vector<double>& v = p.mutable_values();
    for (std::size_t j = 0; j < v.size(); ++j) {
      acc[j] = decay_ * acc[j] + (1.0 - decay_) * g[j] * g[j];
      v[j] -= lr_ * g[j] / std::sqrt(acc[j] + eps_);
    }
  }
}

void RmspropOptimizer::zero_grad() {
  for (Tensor& p : params_) p.zero_grad();
}

}  // namespace acblstm
