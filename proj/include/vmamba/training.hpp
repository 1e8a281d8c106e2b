#pragma once

#include <span>
#include <vector>

#include "vmamba/model.hpp"

namespace vmamba {

struct AdamWConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;  // decoupled
};

// Adam with decoupled weight decay over a fixed parameter list.
class AdamW {
 public:
  AdamW(std::vector<Tensor> params, AdamWConfig cfg);

  void zero_grad();
  // Parameters without a gradient buffer are left untouched.
  void step();
  long steps_taken() const { return t_; }
  const AdamWConfig& config() const { return cfg_; }

 private:
  std::vector<Tensor> params_;
  std::vector<std::vector<double>> m_, v_;
  AdamWConfig cfg_;
  long t_ = 0;
};

struct TrainingSample {
  std::vector<Tensor> window;  // input_frames x [3,H,W]
  Tensor target;               // [3,H,W]
};

inline constexpr double kCharbonnierEps = 1e-3;

/// Forward (alignment + enhancement), mean Charbonnier loss over the batch,
/// backward and one optimizer update. Returns the loss before the update.
/// Throws TrainingError on a non-finite loss.
double training_step(VideoEnhancer& model, std::span<const TrainingSample> batch, AdamW& optimizer);

}  // namespace vmamba
