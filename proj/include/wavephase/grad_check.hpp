// grad_check.hpp - central finite-difference verification of analytic gradients.

#pragma once

#include <cstddef>
#include <functional>

#include "wavephase/tensor.hpp"

namespace wavephase {

struct GradReport {
    double max_rel_err = 0.0;
    std::size_t worst_coordinate = 0;
};

// Compares analytic_grad against (f(x+h e_i) - f(x-h e_i)) / (2h) per
// coordinate. The error is relative to max(|fd|, |analytic|); below
// small_magnitude it falls back to the absolute difference, since the
// central-difference estimate carries cancellation noise of order
// |f| * eps / h that swamps a relative comparison near zero. Throws
// std::invalid_argument on non-finite f evaluations or shape mismatch.
GradReport grad_check(const std::function<double(const Tensor&)>& f,
                      const Tensor& analytic_grad, const Tensor& x, double h = 1e-5,
                      double small_magnitude = 1e-8);

} // namespace wavephase
