// spectral.hpp - power spectra, band selection, Zipf fits, and the
// cumulative-energy dimension bound.

#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "wavephase/dft.hpp"
#include "wavephase/tensor.hpp"

namespace wavephase {
namespace spectral {

// Per-frequency energy E_k aggregated over all embedding rows, plus the
// normalized probabilities p_k = E_k / sum(E) when the total is positive.
struct PowerSpectrum {
    std::vector<double> energies;
    std::vector<double> probabilities; // empty unless has_probabilities
    bool has_probabilities = false;
    double total_energy = 0.0;

    std::size_t T() const { return energies.size(); }
};

// Hermitian-closed set of retained frequency indices with retained-energy
// metadata. 'saturated' marks a KL selection that fell back to the full
// spectrum.
struct Band {
    std::vector<std::size_t> indices; // sorted
    std::size_t T = 0;                // spectrum length the band was selected over
    double retained_energy = 0.0;
    bool saturated = false;

    bool contains(std::size_t k) const;
    bool is_full() const { return indices.size() == T; }
};

struct ZipfFit {
    double beta_hat = 0.0;
    double r_squared = 0.0;
};

PowerSpectrum power_spectrum(const ComplexSpectrum& S);

// Symmetric low-pass rank: 0, then {1,T-1}, then {2,T-2}, ...
std::vector<std::size_t> lowpass_order(std::size_t T);

// S(k) = sum of the first k+1 probabilities under 'order'; nondecreasing,
// ends at 1. Throws std::invalid_argument when probabilities are undefined.
std::vector<double> cumulative_energy(const PowerSpectrum& P, const std::vector<std::size_t>& order);
std::vector<double> cumulative_energy(const PowerSpectrum& P);

// Symmetric low-pass prefix {0} u {1..k} u {T-k..T-1} for prefix depth k.
Band lowpass_prefix(std::size_t T, std::size_t k, const PowerSpectrum& P);

// Smallest symmetric low-pass prefix with retained energy >= theta.
Band select_band(const PowerSpectrum& P, double theta);

// Smallest symmetric low-pass prefix with spectral_kl <= kappa; full
// spectrum with saturated=true when none qualifies.
Band select_band_kl(const PowerSpectrum& P, double kappa, double eps);

// g = IDFT(mask(DFT(V), omega)): the linear, symmetric, idempotent
// band-limit projector applied row-wise.
Tensor band_projector(const Tensor& V, const Band& omega);

// (|V~|, phase) with phase in (-pi, pi], zero where the magnitude is zero.
std::pair<Tensor, Tensor> magnitude_phase(const ComplexSpectrum& S);

// Minimal k with sum_{n<=k} (n+1)^-beta / sum_{n<T} (n+1)^-beta >= theta,
// by direct summation.
std::size_t dimension_bound(std::size_t T, double beta, double theta);

// OLS of log p_k against log(k+1) over strictly positive bins; beta_hat is
// the negated slope.
ZipfFit zipf_fit(const PowerSpectrum& P);

// D_KL(p || q) with q the eps-floor-smoothed restriction of p to omega:
// q_k = (1 - eps*T) * restrict-and-renormalize(p, omega)_k + eps.
double spectral_kl(const PowerSpectrum& P, const Band& omega, double eps);

} // namespace spectral
} // namespace wavephase
