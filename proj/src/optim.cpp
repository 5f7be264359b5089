#include "symseg/optim.hpp"

#include <cmath>
#include <stdexcept>
#include <utility>

namespace symseg {

SgdOptimizer::SgdOptimizer(std::vector<Tensor> params, double momentum, double weight_decay)
    : params_(std::move(params)), momentum_(momentum), weight_decay_(weight_decay) {
  if (momentum_ < 0.0 || momentum_ >= 1.0) {
    throw std::invalid_argument("sgd: momentum must lie in [0, 1)");
  }
  if (weight_decay_ < 0.0) throw std::invalid_argument("sgd: negative weight decay");
  velocity_.reserve(params_.size());
  for (const Tensor& p : params_) velocity_.emplace_back(Eigen::ArrayXd::Zero(p.size()));
}

void SgdOptimizer::step(double lr) {
  for (size_t i = 0; i < params_.size(); ++i) {
    Tensor& p = params_[i];
    if (!p.has_grad()) continue;
    const Eigen::ArrayXd g = p.grad() + weight_decay_ * p.values();
    velocity_[i] = momentum_ * velocity_[i] + g;
    // Nesterov look-ahead: descend along the momentum-corrected gradient
    p.values_mut() -= lr * (g + momentum_ * velocity_[i]);
  }
}

AdamOptimizer::AdamOptimizer(std::vector<Tensor> params, double beta1, double beta2,
                             double epsilon, double weight_decay)
    : params_(std::move(params)),
      beta1_(beta1),
      beta2_(beta2),
      epsilon_(epsilon),
      weight_decay_(weight_decay) {
  if (beta1_ < 0.0 || beta1_ >= 1.0 || beta2_ < 0.0 || beta2_ >= 1.0) {
    throw std::invalid_argument("adam: betas must lie in [0, 1)");
  }
  if (epsilon_ <= 0.0) throw std::invalid_argument("adam: epsilon must be positive");
  if (weight_decay_ < 0.0) throw std::invalid_argument("adam: negative weight decay");
  first_moment_.reserve(params_.size());
  second_moment_.reserve(params_.size());
  for (const Tensor& p : params_) {
    first_moment_.emplace_back(Eigen::ArrayXd::Zero(p.size()));
    second_moment_.emplace_back(Eigen::ArrayXd::Zero(p.size()));
  }
}

void AdamOptimizer::step(double lr) {
  ++step_count_;
  const double bias1 = 1.0 - std::pow(beta1_, static_cast<double>(step_count_));
  const double bias2 = 1.0 - std::pow(beta2_, static_cast<double>(step_count_));
  for (size_t i = 0; i < params_.size(); ++i) {
    Tensor& p = params_[i];
    if (!p.has_grad()) continue;
    const Eigen::ArrayXd g = p.grad() + weight_decay_ * p.values();
    first_moment_[i] = beta1_ * first_moment_[i] + (1.0 - beta1_) * g;
    second_moment_[i] = beta2_ * second_moment_[i] + (1.0 - beta2_) * g.square();
    p.values_mut() -=
        lr * (first_moment_[i] / bias1) / ((second_moment_[i] / bias2).sqrt() + epsilon_);
  }
}

double warmup_cosine_lr(Index iteration, Index total_iterations, Index warmup_iterations,
                        double peak) {
  if (total_iterations < 1 || iteration < 0 || iteration >= total_iterations) {
    throw std::invalid_argument("warmup_cosine_lr: iteration outside the schedule");
  }
  if (warmup_iterations < 0 || warmup_iterations > total_iterations) {
    throw std::invalid_argument("warmup_cosine_lr: warmup longer than the schedule");
  }
  if (!(peak > 0.0)) throw std::invalid_argument("warmup_cosine_lr: peak must be positive");
  if (iteration < warmup_iterations) {
    return peak * static_cast<double>(iteration) / static_cast<double>(warmup_iterations);
  }
  const Index span = total_iterations - warmup_iterations;
  if (span == 0) return peak;
  const double phase = static_cast<double>(iteration - warmup_iterations) /
                       static_cast<double>(span);
  return peak * 0.5 * (1.0 + std::cos(3.14159265358979323846 * phase));
}

double linear_lr(Index iteration, Index total_iterations, double lr_start, double lr_end) {
  if (total_iterations < 1 || iteration < 0 || iteration >= total_iterations) {
    throw std::invalid_argument("linear_lr: iteration outside the schedule");
  }
  if (total_iterations == 1) return lr_start;
  const double t = static_cast<double>(iteration) / static_cast<double>(total_iterations - 1);
  return lr_start + (lr_end - lr_start) * t;
}

}  // namespace symseg
