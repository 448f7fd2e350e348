#include "wavephase/dft.hpp"

#include <cmath>
#include <stdexcept>

namespace wavephase {

namespace {

constexpr double kPi = 3.14159265358979323846;

bool is_pow2(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

// Iterative radix-2 Cooley-Tukey, in place. sign = -1 forward, +1 inverse
// (no normalization here).
void fft_radix2(std::vector<double>& re, std::vector<double>& im, int sign) {
    const std::size_t n = re.size();
    if (n <= 1) return;

    // bit reversal permutation
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) {
            std::swap(re[i], re[j]);
            std::swap(im[i], im[j]);
        }
    }

    for (std::size_t len = 2; len <= n; len <<= 1) {
        const std::size_t half = len >> 1;
        for (std::size_t j = 0; j < half; ++j) {
            const double ang = sign * 2.0 * kPi * static_cast<double>(j) / static_cast<double>(len);
            const double wr = std::cos(ang);
            const double wi = std::sin(ang);
            for (std::size_t i = j; i < n; i += len) {
                const std::size_t m = i + half;
                const double tr = re[m] * wr - im[m] * wi;
                const double ti = re[m] * wi + im[m] * wr;
                re[m] = re[i] - tr;
                im[m] = im[i] - ti;
                re[i] += tr;
                im[i] += ti;
            }
        }
    }
}

// Bluestein's algorithm for arbitrary length: re-expresses the DFT as a
// cyclic convolution of power-of-two size >= 2n-1. Chirp angles use
// k^2 mod 2n so they stay well-conditioned for large n.
void fft_bluestein(std::vector<double>& re, std::vector<double>& im, int sign) {
    const std::size_t n = re.size();
    std::size_t m = 1;
    while (m < 2 * n - 1) m <<= 1;

    std::vector<double> cos_t(n), sin_t(n);
    for (std::size_t k = 0; k < n; ++k) {
        const std::uint64_t sq = (static_cast<std::uint64_t>(k) * k) % (2 * n);
        const double ang = sign * kPi * static_cast<double>(sq) / static_cast<double>(n);
        cos_t[k] = std::cos(ang);
        sin_t[k] = std::sin(ang);
    }

    std::vector<double> are(m, 0.0), aim(m, 0.0);
    for (std::size_t k = 0; k < n; ++k) {
        are[k] = re[k] * cos_t[k] - im[k] * sin_t[k];
        aim[k] = re[k] * sin_t[k] + im[k] * cos_t[k];
    }
    std::vector<double> bre(m, 0.0), bim(m, 0.0);
    bre[0] = cos_t[0];
    bim[0] = -sin_t[0];
    for (std::size_t k = 1; k < n; ++k) {
        bre[k] = bre[m - k] = cos_t[k];
        bim[k] = bim[m - k] = -sin_t[k];
    }

    fft_radix2(are, aim, -1);
    fft_radix2(bre, bim, -1);
    for (std::size_t k = 0; k < m; ++k) {
        const double tr = are[k] * bre[k] - aim[k] * bim[k];
        aim[k] = are[k] * bim[k] + aim[k] * bre[k];
        are[k] = tr;
    }
    fft_radix2(are, aim, +1);
    const double inv_m = 1.0 / static_cast<double>(m);

    for (std::size_t k = 0; k < n; ++k) {
        const double cr = are[k] * inv_m;
        const double ci = aim[k] * inv_m;
        re[k] = cr * cos_t[k] - ci * sin_t[k];
        im[k] = cr * sin_t[k] + ci * cos_t[k];
    }
}

} // namespace

void dft_inplace(std::vector<double>& re, std::vector<double>& im, bool inverse) {
    if (re.size() != im.size())
        throw std::invalid_argument("dft_inplace: re/im length mismatch");
    const std::size_t n = re.size();
    if (n == 0) throw std::invalid_argument("dft_inplace: empty signal");
    const int sign = inverse ? +1 : -1;
    if (is_pow2(n)) {
        fft_radix2(re, im, sign);
    } else {
        fft_bluestein(re, im, sign);
    }
    if (inverse) {
        const double inv_n = 1.0 / static_cast<double>(n);
        for (std::size_t k = 0; k < n; ++k) {
            re[k] *= inv_n;
            im[k] *= inv_n;
        }
    }
}

ComplexSpectrum dft_seq(const Tensor& V) {
    if (V.rank() != 2)
        throw std::invalid_argument("dft_seq: expected a rank-2 d x T tensor");
    const std::size_t d = V.dim(0);
    const std::size_t T = V.dim(1);
    ComplexSpectrum out(d, T);
    std::vector<double> re(T), im(T);
    for (std::size_t n = 0; n < d; ++n) {
        const double* row = V.data() + n * T;
        for (std::size_t t = 0; t < T; ++t) {
            re[t] = row[t];
            im[t] = 0.0;
        }
        dft_inplace(re, im, false);
        for (std::size_t k = 0; k < T; ++k) {
            out.re[n * T + k] = re[k];
            out.im[n * T + k] = im[k];
        }
    }
    return out;
}

Tensor idft_seq(const ComplexSpectrum& S, double* max_imag_residue) {
    if (S.d == 0 || S.T == 0)
        throw std::invalid_argument("idft_seq: empty spectrum");
    Tensor out({S.d, S.T});
    std::vector<double> re(S.T), im(S.T);
    double worst = 0.0;
    for (std::size_t n = 0; n < S.d; ++n) {
        for (std::size_t k = 0; k < S.T; ++k) {
            re[k] = S.re[n * S.T + k];
            im[k] = S.im[n * S.T + k];
        }
        dft_inplace(re, im, true);
        for (std::size_t t = 0; t < S.T; ++t) {
            out.data()[n * S.T + t] = re[t];
            const double residue = std::abs(im[t]);
            if (residue > worst) worst = residue;
        }
    }
    if (max_imag_residue) *max_imag_residue = worst;
    return out;
}

} // namespace wavephase
