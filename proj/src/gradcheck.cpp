#include "symseg/gradcheck.hpp"

#include <cmath>
#include <limits>

namespace symseg {

double finite_difference_check(const std::function<Tensor(const Tensor&)>& f, Tensor theta,
                               double eps) {
  if (!(eps > 0.0)) throw std::invalid_argument("finite_difference_check: eps must be positive");
  if (!theta.requires_grad()) {
    throw std::invalid_argument("finite_difference_check: parameter must require gradients");
  }
  constexpr double kInf = std::numeric_limits<double>::infinity();

  auto eval = [&f](const Tensor& t) {
    Tensor loss = f(t);
    if (loss.size() != 1) {
      throw std::invalid_argument("finite_difference_check: function must return a scalar");
    }
    return loss;
  };

  theta.zero_grad();
  Tensor loss = eval(theta);
  if (!std::isfinite(loss.values()(0))) return kInf;
  backward(loss);
  Eigen::ArrayXd analytic =
      theta.has_grad() ? theta.grad() : Eigen::ArrayXd::Zero(theta.size());

  double worst = 0.0;
  Eigen::ArrayXd& v = theta.values_mut();
  for (Index i = 0; i < theta.size(); ++i) {
    const double saved = v(i);
    v(i) = saved + eps;
    const double hi = eval(theta).values()(0);
    v(i) = saved - eps;
    const double lo = eval(theta).values()(0);
    v(i) = saved;
    if (!std::isfinite(hi) || !std::isfinite(lo)) return kInf;
    const double fd = (hi - lo) / (2.0 * eps);
    const double rel = std::abs(analytic(i) - fd) / std::max(1.0, std::abs(fd));
    worst = std::max(worst, rel);
  }
  return worst;
}

}  // namespace symseg
