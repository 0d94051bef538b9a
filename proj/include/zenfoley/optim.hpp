#pragma once

#include <vector>

#include "zenfoley/tensor.hpp"

namespace zenfoley::optim {

// Adam with optional global-norm gradient clipping. Moment state is stored in
// float32 so checkpoints round-trip it bit-exactly; per-coordinate updates are
// computed in double. Parameters absent from the gradient map are treated as
// zero-gradient.
class Adam {
 public:
  struct Config {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
  };

  Adam() = default;
  explicit Adam(const Config& cfg) : cfg_(cfg) {}

  // Applies one update. Returns the global gradient norm after clipping
  // (equal to the raw norm when max_norm <= 0 or the raw norm is below it).
  double step(std::vector<NamedTensor>& params, const GradientMap& grads,
              double lr, double max_norm = 0.0);

  int64_t step_count() const { return step_; }

  // Checkpoint surface: moment buffers as named tensors ("opt.m.<p>",
  // "opt.v.<p>") plus the step counter.
  std::vector<NamedTensor> state_tensors(
      const std::vector<NamedTensor>& params) const;
  void load_state(const std::vector<NamedTensor>& params,
                  const std::vector<NamedTensor>& state, int64_t step_count);

 private:
  void ensure_slots(const std::vector<NamedTensor>& params);

  Config cfg_;
  int64_t step_ = 0;
  std::vector<std::vector<float>> m_, v_;
};

// Global L2 norm of the gradients of `params` under `grads` (missing = 0).
double global_grad_norm(const std::vector<NamedTensor>& params,
                        const GradientMap& grads);

}  // namespace zenfoley::optim
