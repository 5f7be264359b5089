#pragma once

#include "symseg/tensor.hpp"

#include <vector>

namespace symseg {

// Both optimizers fold L2 weight decay into the gradient and skip
// parameters whose gradient was never populated this step.

class SgdOptimizer {
 public:
  explicit SgdOptimizer(std::vector<Tensor> params, double momentum = 0.9,
                        double weight_decay = 1e-5);
  void step(double lr);

 private:
  std::vector<Tensor> params_;
  std::vector<Eigen::ArrayXd> velocity_;
  double momentum_;
  double weight_decay_;
};

class AdamOptimizer {
 public:
  explicit AdamOptimizer(std::vector<Tensor> params, double beta1 = 0.9, double beta2 = 0.999,
                         double epsilon = 1e-8, double weight_decay = 1e-5);
  void step(double lr);

 private:
  std::vector<Tensor> params_;
  std::vector<Eigen::ArrayXd> first_moment_;
  std::vector<Eigen::ArrayXd> second_moment_;
  double beta1_, beta2_, epsilon_, weight_decay_;
  long step_count_ = 0;
};

// Linear ramp from 0 to peak over the first warmup iterations, then cosine
// decay from peak toward 0 across the remaining span.
double warmup_cosine_lr(Index iteration, Index total_iterations, Index warmup_iterations,
                        double peak);

// Straight line from lr_start (first iteration) to lr_end (last iteration).
double linear_lr(Index iteration, Index total_iterations, double lr_start, double lr_end);

}  // namespace symseg
