// dft.hpp - complex DFT/IDFT along the sequence axis of d x T tensors.
//
// Convention: unnormalized forward
//     X_k = sum_t x_t exp(-2*pi*i*k*t/T)
// and (1/T)-normalized inverse. Power-of-two lengths take a radix-2
// Cooley-Tukey path; every other length goes through Bluestein's chirp
// transform, so the semantics are the exact DFT for all T.

#pragma once

#include <complex>
#include <cstddef>
#include <utility>
#include <vector>

#include "wavephase/tensor.hpp"

namespace wavephase {

// Complex d x T array produced by the sequence-dimension DFT. Row-major,
// split real/imaginary storage.
struct ComplexSpectrum {
    std::size_t d = 0;
    std::size_t T = 0;
    std::vector<double> re;
    std::vector<double> im;

    ComplexSpectrum() = default;
    ComplexSpectrum(std::size_t d_, std::size_t T_)
        : d(d_), T(T_), re(d_ * T_, 0.0), im(d_ * T_, 0.0) {}

    std::size_t index(std::size_t n, std::size_t k) const { return n * T + k; }
    std::complex<double> at(std::size_t n, std::size_t k) const {
        return {re[index(n, k)], im[index(n, k)]};
    }
    void set(std::size_t n, std::size_t k, std::complex<double> z) {
        re[index(n, k)] = z.real();
        im[index(n, k)] = z.imag();
    }
};

// In-place transform of one complex signal of arbitrary length.
// inverse=false: unnormalized forward. inverse=true: includes the 1/T factor.
void dft_inplace(std::vector<double>& re, std::vector<double>& im, bool inverse);

// Forward DFT of every row of a d x T tensor. Throws std::invalid_argument
// if V is not rank 2.
ComplexSpectrum dft_seq(const Tensor& V);

// Inverse DFT of every row; returns the real part. max_imag_residue, when
// given, receives the largest |imaginary| component of the reconstruction
// (< 1e-9 for Hermitian-symmetric input).
Tensor idft_seq(const ComplexSpectrum& S, double* max_imag_residue = nullptr);

} // namespace wavephase
