#include "wavephase/grad_check.hpp"

#include <cmath>
#include <stdexcept>

namespace wavephase {

GradReport grad_check(const std::function<double(const Tensor&)>& f,
                      const Tensor& analytic_grad, const Tensor& x, double h,
                      double small_magnitude) {
    if (h <= 0.0) throw std::invalid_argument("grad_check: h must be positive");
    if (small_magnitude < 0.0)
        throw std::invalid_argument("grad_check: small_magnitude must be >= 0");
    if (analytic_grad.size() != x.size())
        throw std::invalid_argument("grad_check: gradient/input size mismatch");

    GradReport report;
    Tensor probe = x;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double saved = probe[i];
        probe[i] = saved + h;
        const double f_plus = f(probe);
        probe[i] = saved - h;
        const double f_minus = f(probe);
        probe[i] = saved;
        if (!std::isfinite(f_plus) || !std::isfinite(f_minus))
            throw std::invalid_argument("grad_check: non-finite function evaluation");

        const double fd = (f_plus - f_minus) / (2.0 * h);
        const double g = analytic_grad[i];
        const double denom = std::max(std::abs(fd), std::abs(g));
        const double err =
            denom < small_magnitude ? std::abs(fd - g) : std::abs(fd - g) / denom;
        if (err > report.max_rel_err) {
            report.max_rel_err = err;
            report.worst_coordinate = i;
        }
    }
    return report;
}

} // namespace wavephase
