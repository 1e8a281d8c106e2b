#include "vmamba/training.hpp"

#include <cmath>

#include "vmamba/errors.hpp"
#include "vmamba/ops.hpp"

namespace vmamba {

AdamW::AdamW(std::vector<Tensor> params, AdamWConfig cfg) : params_(std::move(params)), cfg_(cfg) {
  if (!(cfg_.lr > 0.0)) throw ConfigurationError("AdamW: learning rate must be positive");
  for (const auto& p : params_) {
    m_.emplace_back(p.numel(), 0.0);
    v_.emplace_back(p.numel(), 0.0);
  }
}

void AdamW::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

void AdamW::step() {
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    auto& p = params_[k];
    if (!p.has_grad()) continue;
    auto g = p.grad();
    auto w = p.mutable_data();
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
      const double update = (m[i] / bc1) / (std::sqrt(v[i] / bc2) + cfg_.eps);
      w[i] -= cfg_.lr * (update + cfg_.weight_decay * w[i]);
    }
  }
}

double training_step(VideoEnhancer& model, std::span<const TrainingSample> batch, AdamW& optimizer) {
  if (batch.empty()) throw ContractError("training_step: empty batch");
  optimizer.zero_grad();
  Tensor total;
  try {
    for (const auto& sample : batch) {
      if (sample.target.shape() != sample.window.at(0).shape()) {
        throw DimensionError("training_step: target " + shape_to_string(sample.target.shape()) +
                             " does not match input frames " + shape_to_string(sample.window.at(0).shape()));
      }
      auto loss = charbonnier_loss(model.forward(sample.window, false), sample.target, kCharbonnierEps);
      total = total.defined() ? add(total, loss) : loss;
    }
  } catch (const NumericError& e) {
    throw TrainingError(std::string("training aborted: non-finite values in the forward pass (") + e.what() + ")");
  }
  total = scale(total, 1.0 / static_cast<double>(batch.size()));
  const double value = total.item();
  if (!std::isfinite(value)) throw TrainingError("training aborted: loss is " + std::to_string(value));
  total.backward();
  optimizer.step();
  return value;
}

}  // namespace vmamba
