#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace symseg {

struct GradCheckEntry {
  std::string component;
  double max_rel_error;
};

// Deterministic end-to-end gradient verification: compares reverse-mode
// gradients against central finite differences for the masked cross-entropy,
// the feature-alignment loss, every distillation variant, and a
// reduced-size two-branch network trained loss, parameter by parameter.
// All entries are expected to sit below 1e-4 at eps = 1e-5.
std::vector<GradCheckEntry> run_gradient_suite(std::uint64_t seed);

}  // namespace symseg
