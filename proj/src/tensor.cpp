#include "wavephase/tensor.hpp"

#include <cmath>

namespace wavephase {

void Tensor::check_finite() const {
    for (double v : data_)
        if (!std::isfinite(v))
            throw std::invalid_argument("Tensor: non-finite entry");
}

} // namespace wavephase
