#include "wavephase/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace wavephase {
namespace spectral {

namespace {
constexpr double kPi = 3.14159265358979323846;

void require_probabilities(const PowerSpectrum& P, const char* who) {
    if (!P.has_probabilities)
        throw std::invalid_argument(std::string(who) + ": zero total energy, probabilities undefined");
}

std::size_t max_prefix_depth(std::size_t T) { return T / 2; }
} // namespace

bool Band::contains(std::size_t k) const {
    return std::binary_search(indices.begin(), indices.end(), k);
}

PowerSpectrum power_spectrum(const ComplexSpectrum& S) {
    PowerSpectrum P;
    P.energies.assign(S.T, 0.0);
    for (std::size_t n = 0; n < S.d; ++n) {
        for (std::size_t k = 0; k < S.T; ++k) {
            const std::size_t idx = n * S.T + k;
            P.energies[k] += S.re[idx] * S.re[idx] + S.im[idx] * S.im[idx];
        }
    }
    for (double e : P.energies) P.total_energy += e;
    if (P.total_energy > 0.0) {
        P.has_probabilities = true;
        P.probabilities.resize(S.T);
        for (std::size_t k = 0; k < S.T; ++k)
            P.probabilities[k] = P.energies[k] / P.total_energy;
    }
    return P;
}

std::vector<std::size_t> lowpass_order(std::size_t T) {
    std::vector<std::size_t> order;
    order.reserve(T);
    order.push_back(0);
    for (std::size_t k = 1; k <= T / 2; ++k) {
        order.push_back(k);
        const std::size_t mirror = T - k;
        if (mirror != k && mirror < T) order.push_back(mirror);
    }
    return order;
}

std::vector<double> cumulative_energy(const PowerSpectrum& P, const std::vector<std::size_t>& order) {
    require_probabilities(P, "cumulative_energy");
    const std::size_t T = P.T();
    if (order.size() != T)
        throw std::invalid_argument("cumulative_energy: order must be a permutation of 0..T-1");
    std::vector<char> seen(T, 0);
    for (std::size_t k : order) {
        if (k >= T || seen[k])
            throw std::invalid_argument("cumulative_energy: order must be a permutation of 0..T-1");
        seen[k] = 1;
    }
    std::vector<double> curve(T);
    double acc = 0.0;
    for (std::size_t n = 0; n < T; ++n) {
        acc += P.probabilities[order[n]];
        curve[n] = acc;
    }
    return curve;
}

std::vector<double> cumulative_energy(const PowerSpectrum& P) {
    return cumulative_energy(P, lowpass_order(P.T()));
}

Band lowpass_prefix(std::size_t T, std::size_t k, const PowerSpectrum& P) {
    Band band;
    band.T = T;
    band.indices.push_back(0);
    for (std::size_t j = 1; j <= k; ++j) {
        band.indices.push_back(j);
        const std::size_t mirror = T - j;
        if (mirror != j) band.indices.push_back(mirror);
    }
    std::sort(band.indices.begin(), band.indices.end());
    if (P.has_probabilities)
        for (std::size_t idx : band.indices) band.retained_energy += P.probabilities[idx];
    return band;
}

Band select_band(const PowerSpectrum& P, double theta) {
    require_probabilities(P, "select_band");
    if (theta <= 0.0 || theta > 1.0)
        throw std::invalid_argument("select_band: theta must be in (0, 1]");
    const std::size_t T = P.T();
    const std::size_t kmax = max_prefix_depth(T);
    for (std::size_t k = 0; k <= kmax; ++k) {
        Band band = lowpass_prefix(T, k, P);
        if (band.retained_energy >= theta || k == kmax)
            return band;
    }
    return lowpass_prefix(T, kmax, P); // unreachable
}

Band select_band_kl(const PowerSpectrum& P, double kappa, double eps) {
    require_probabilities(P, "select_band_kl");
    if (kappa <= 0.0) throw std::invalid_argument("select_band_kl: kappa must be positive");
    const std::size_t T = P.T();
    const std::size_t kmax = max_prefix_depth(T);
    for (std::size_t k = 0; k <= kmax; ++k) {
        Band band = lowpass_prefix(T, k, P);
        if (spectral_kl(P, band, eps) <= kappa) return band;
    }
    Band full = lowpass_prefix(T, kmax, P);
    full.saturated = true;
    return full;
}

Tensor band_projector(const Tensor& V, const Band& omega) {
    if (V.rank() != 2)
        throw std::invalid_argument("band_projector: expected a rank-2 d x T tensor");
    const std::size_t T = V.dim(1);
    std::vector<char> mask(T, 0);
    for (std::size_t idx : omega.indices) {
        if (idx >= T)
            throw std::invalid_argument("band_projector: band index out of range");
        mask[idx] = 1;
    }
    for (std::size_t k = 1; k < T; ++k)
        if (mask[k] != mask[T - k])
            throw std::invalid_argument("band_projector: band is not Hermitian-closed for this T");

    ComplexSpectrum S = dft_seq(V);
    for (std::size_t n = 0; n < S.d; ++n) {
        for (std::size_t k = 0; k < T; ++k) {
            if (!mask[k]) {
                S.re[n * T + k] = 0.0;
                S.im[n * T + k] = 0.0;
            }
        }
    }
    double residue = 0.0;
    Tensor out = idft_seq(S, &residue);
    if (residue >= 1e-9)
        throw std::runtime_error("band_projector: imaginary residue exceeds 1e-9");
    return out;
}

std::pair<Tensor, Tensor> magnitude_phase(const ComplexSpectrum& S) {
    Tensor mag({S.d, S.T});
    Tensor phase({S.d, S.T});
    for (std::size_t i = 0; i < S.re.size(); ++i) {
        const double m = std::hypot(S.re[i], S.im[i]);
        mag.data()[i] = m;
        double p = m == 0.0 ? 0.0 : std::atan2(S.im[i], S.re[i]);
        if (p <= -kPi) p = kPi; // normalize to (-pi, pi]
        phase.data()[i] = p;
    }
    return {std::move(mag), std::move(phase)};
}

std::size_t dimension_bound(std::size_t T, double beta, double theta) {
    if (T == 0) throw std::invalid_argument("dimension_bound: T must be >= 1");
    if (beta <= 0.0) throw std::invalid_argument("dimension_bound: beta must be positive");
    if (theta <= 0.0 || theta > 1.0)
        throw std::invalid_argument("dimension_bound: theta must be in (0, 1]");
    double total = 0.0;
    for (std::size_t n = 0; n < T; ++n)
        total += std::pow(static_cast<double>(n + 1), -beta);
    double acc = 0.0;
    for (std::size_t k = 0; k < T; ++k) {
        acc += std::pow(static_cast<double>(k + 1), -beta);
        if (acc / total >= theta) return k;
    }
    return T - 1;
}

ZipfFit zipf_fit(const PowerSpectrum& P) {
    require_probabilities(P, "zipf_fit");
    std::vector<double> xs, ys;
    for (std::size_t k = 0; k < P.T(); ++k) {
        if (P.probabilities[k] > 0.0) {
            xs.push_back(std::log(static_cast<double>(k + 1)));
            ys.push_back(std::log(P.probabilities[k]));
        }
    }
    if (xs.size() < 3)
        throw std::invalid_argument("zipf_fit: need at least 3 strictly positive bins");

    const double n = static_cast<double>(xs.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        mx += xs[i];
        my += ys[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double dx = xs[i] - mx;
        const double dy = ys[i] - my;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    ZipfFit fit;
    if (sxx == 0.0) {
        // all mass at a single log-abscissa; no slope information
        fit.beta_hat = 0.0;
        fit.r_squared = 0.0;
        return fit;
    }
    const double slope = sxy / sxx;
    fit.beta_hat = -slope;
    if (syy <= 1e-30) {
        fit.r_squared = 1.0; // constant data is fit exactly by the constant model
    } else {
        double ss_res = 0.0;
        for (std::size_t i = 0; i < xs.size(); ++i) {
            const double pred = my + slope * (xs[i] - mx);
            const double r = ys[i] - pred;
            ss_res += r * r;
        }
        fit.r_squared = std::clamp(1.0 - ss_res / syy, 0.0, 1.0);
    }
    return fit;
}

double spectral_kl(const PowerSpectrum& P, const Band& omega, double eps) {
    require_probabilities(P, "spectral_kl");
    const std::size_t T = P.T();
    if (eps <= 0.0 || eps >= 1.0 / static_cast<double>(T))
        throw std::invalid_argument("spectral_kl: eps must satisfy 0 < eps < 1/T");

    std::vector<char> mask(T, 0);
    for (std::size_t idx : omega.indices) {
        if (idx >= T) throw std::invalid_argument("spectral_kl: band index out of range");
        mask[idx] = 1;
    }
    double band_mass = 0.0;
    for (std::size_t k = 0; k < T; ++k)
        if (mask[k]) band_mass += P.probabilities[k];

    const double keep = 1.0 - eps * static_cast<double>(T);
    const double uniform_in_band =
        omega.indices.empty() ? 0.0 : 1.0 / static_cast<double>(omega.indices.size());

    double kl = 0.0;
    for (std::size_t k = 0; k < T; ++k) {
        const double p = P.probabilities[k];
        if (p <= 0.0) continue;
        double restricted = 0.0;
        if (mask[k]) restricted = band_mass > 0.0 ? p / band_mass : uniform_in_band;
        const double q = keep * restricted + eps;
        kl += p * std::log(p / q);
    }
    return std::max(kl, 0.0);
}

} // namespace spectral
} // namespace wavephase
