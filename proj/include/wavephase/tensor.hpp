// tensor.hpp - dense row-major double tensor used across the library.

#pragma once

#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace wavephase {

// Dense rank-1/2/3 real array, double precision, row-major.
// Entries are checked finite when constructed from caller data; zero-filled
// construction is trivially finite.
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<std::size_t> dims)
        : dims_(std::move(dims)), data_(checked_size(dims_), 0.0) {}

    Tensor(std::vector<std::size_t> dims, std::vector<double> data)
        : dims_(std::move(dims)), data_(std::move(data)) {
        if (data_.size() != checked_size(dims_))
            throw std::invalid_argument("Tensor: data length does not match dims product");
        check_finite();
    }

    static Tensor zeros(std::vector<std::size_t> dims) { return Tensor(std::move(dims)); }

    std::size_t rank() const { return dims_.size(); }
    std::size_t dim(std::size_t i) const { return dims_.at(i); }
    const std::vector<std::size_t>& dims() const { return dims_; }
    std::size_t size() const { return data_.size(); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& vec() { return data_; }
    const std::vector<double>& vec() const { return data_; }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    // rank-2 accessors
    double& at2(std::size_t i, std::size_t j) { return data_[i * dims_[1] + j]; }
    double at2(std::size_t i, std::size_t j) const { return data_[i * dims_[1] + j]; }

    void check_finite() const;

private:
    static std::size_t checked_size(const std::vector<std::size_t>& dims) {
        if (dims.empty())
            throw std::invalid_argument("Tensor: rank must be >= 1");
        std::size_t n = 1;
        for (std::size_t d : dims) {
            if (d == 0) throw std::invalid_argument("Tensor: extents must be positive");
            n *= d;
        }
        return n;
    }

    std::vector<std::size_t> dims_;
    std::vector<double> data_;
};

} // namespace wavephase
