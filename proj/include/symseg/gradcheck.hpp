#pragma once

#include "symseg/tensor.hpp"

#include <functional>

namespace symseg {

// Compares the reverse-mode gradient of a scalar-valued function against
// central finite differences, elementwise over the parameter tensor.
// Returns max over parameters of |analytic - fd| / max(1, |fd|); +inf is
// returned when the function produces a non-finite value. The function
// must be deterministic and is re-evaluated with perturbed parameters.
double finite_difference_check(const std::function<Tensor(const Tensor&)>& f, Tensor theta,
                               double eps);

}  // namespace symseg
