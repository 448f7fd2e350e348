#include "wavephase/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <exception>
#include <limits>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "wavephase/rng.hpp"

namespace wavephase {
namespace model {

namespace {

constexpr double kLnEps = 1e-5;
constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

std::string lname(std::size_t l, const char* suffix) {
    return "layer" + std::to_string(l) + "." + suffix;
}

} // namespace

void ModelConfig::validate() const {
    if (vocab != 256) throw std::invalid_argument("ModelConfig: vocab must be 256 (byte-level)");
    if (T < 1 || d < 1 || n_layers < 1 || n_heads < 1 || ffn_mult < 1 || r < 1)
        throw std::invalid_argument("ModelConfig: all sizes must be positive");
    if (d % n_heads != 0)
        throw std::invalid_argument("ModelConfig: d must be divisible by n_heads");
    if (w < 1 || w > T) throw std::invalid_argument("ModelConfig: require 1 <= w <= T");
    if (stride < 1 || stride > w)
        throw std::invalid_argument("ModelConfig: require 1 <= stride <= w");
    if (!(theta > 0.0) || theta > 1.0)
        throw std::invalid_argument("ModelConfig: theta must be in (0, 1]");
    if (!(kappa >= 0.0)) throw std::invalid_argument("ModelConfig: kappa must be >= 0");
    if (!(eps > 0.0) || !(eps < 1.0 / static_cast<double>(T)))
        throw std::invalid_argument("ModelConfig: eps must satisfy 0 < eps < 1/T");
}

void LossWeights::validate() const {
    if (!(lambda >= 0.0) || !(mu >= 0.0) || !(eta >= 0.0))
        throw std::invalid_argument("LossWeights: lambda, mu, eta must be >= 0");
}

ParamLayout ParamLayout::for_config(const ModelConfig& cfg) {
    cfg.validate();
    ParamLayout out;
    auto add = [&out](std::string name, std::vector<std::size_t> dims) {
        ParamEntry e;
        e.name = std::move(name);
        e.dims = std::move(dims);
        e.size = 1;
        for (std::size_t x : e.dims) e.size *= x;
        e.offset = out.total_;
        out.total_ += e.size;
        out.entries_.push_back(std::move(e));
    };
    const std::size_t d = cfg.d, F = cfg.ffn_mult * cfg.d;
    add("tok_emb", {cfg.vocab, d});
    add("pos_emb", {cfg.T, d});
    for (std::size_t l = 0; l < cfg.n_layers; ++l) {
        add(lname(l, "ln1.g"), {d});
        add(lname(l, "ln1.b"), {d});
        add(lname(l, "attn.wq"), {d, d});
        add(lname(l, "attn.bq"), {d});
        add(lname(l, "attn.wk"), {d, d});
        add(lname(l, "attn.bk"), {d});
        add(lname(l, "attn.wv"), {d, d});
        add(lname(l, "attn.bv"), {d});
        add(lname(l, "attn.wo"), {d, d});
        add(lname(l, "attn.bo"), {d});
        add(lname(l, "ln2.g"), {d});
        add(lname(l, "ln2.b"), {d});
        add(lname(l, "ffn.w1"), {d, F});
        add(lname(l, "ffn.b1"), {F});
        add(lname(l, "ffn.w2"), {F, d});
        add(lname(l, "ffn.b2"), {d});
        add(lname(l, "alpha"), {1});
    }
    add("ln_f.g", {d});
    add("ln_f.b", {d});
    add("w_s", {cfg.r, d});
    add("head.w", {d, cfg.vocab});
    add("head.b", {cfg.vocab});
    return out;
}

const ParamEntry& ParamLayout::view(const std::string& name) const {
    for (const ParamEntry& e : entries_)
        if (e.name == name) return e;
    throw std::invalid_argument("ParamLayout: unknown parameter '" + name + "'");
}

bool ParamLayout::has(const std::string& name) const {
    for (const ParamEntry& e : entries_)
        if (e.name == name) return true;
    return false;
}

Params init_params(const ModelConfig& cfg) {
    Params p;
    p.cfg = cfg;
    p.layout = ParamLayout::for_config(cfg);
    p.data.assign(p.layout.total(), 0.0);
    Rng rng(cfg.seed);
    for (const ParamEntry& e : p.layout.entries()) {
        double* dst = p.data.data() + e.offset;
        const std::string& n = e.name;
        const bool ln_gain = n.ends_with("ln1.g") || n.ends_with("ln2.g") || n == "ln_f.g";
        const bool zero_init = n.ends_with(".b") || n.ends_with(".bq") || n.ends_with(".bk") ||
                               n.ends_with(".bv") || n.ends_with(".bo") || n.ends_with(".b1") ||
                               n.ends_with(".b2") || n.ends_with("alpha");
        if (ln_gain) {
            std::fill(dst, dst + e.size, 1.0);
        } else if (zero_init) {
            // already zero
        } else {
            for (std::size_t i = 0; i < e.size; ++i) dst[i] = 0.02 * rng.normal();
        }
    }
    return p;
}

// ---------------------------------------------------------------------------
// dense kernels on row-major [rows x cols] buffers
// ---------------------------------------------------------------------------

namespace {

// Y = X W + b with W stored row-major [in x out]
void linear_forward(const double* X, std::size_t rows, std::size_t in, std::size_t out,
                    const double* W, const double* b, double* Y) {
    for (std::size_t t = 0; t < rows; ++t) {
        double* y = Y + t * out;
        std::memcpy(y, b, out * sizeof(double));
        const double* x = X + t * in;
        for (std::size_t i = 0; i < in; ++i) {
            const double xi = x[i];
            const double* wrow = W + i * out;
            for (std::size_t o = 0; o < out; ++o) y[o] += xi * wrow[o];
        }
    }
}

// dX += dY W', dW += X' dY, db += column sums of dY
void linear_backward(const double* X, const double* dY, std::size_t rows, std::size_t in,
                     std::size_t out, const double* W, double* dX, double* dW, double* db) {
    for (std::size_t t = 0; t < rows; ++t) {
        const double* dy = dY + t * out;
        for (std::size_t o = 0; o < out; ++o) db[o] += dy[o];
        const double* x = X + t * in;
        double* dx = dX + t * in;
        for (std::size_t i = 0; i < in; ++i) {
            const double* wrow = W + i * out;
            double* dwrow = dW + i * out;
            const double xi = x[i];
            double acc = 0.0;
            for (std::size_t o = 0; o < out; ++o) {
                acc += dy[o] * wrow[o];
                dwrow[o] += xi * dy[o];
            }
            dx[i] += acc;
        }
    }
}

void layernorm_forward(const double* x, std::size_t rows, std::size_t d, const double* g,
                       const double* b, double* y, double* xhat, double* rstd) {
    for (std::size_t t = 0; t < rows; ++t) {
        const double* xt = x + t * d;
        double mu = 0.0;
        for (std::size_t j = 0; j < d; ++j) mu += xt[j];
        mu /= static_cast<double>(d);
        double var = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            const double c = xt[j] - mu;
            var += c * c;
        }
        var /= static_cast<double>(d);
        const double rs = 1.0 / std::sqrt(var + kLnEps);
        rstd[t] = rs;
        double* xh = xhat + t * d;
        double* yt = y + t * d;
        for (std::size_t j = 0; j < d; ++j) {
            xh[j] = (xt[j] - mu) * rs;
            yt[j] = g[j] * xh[j] + b[j];
        }
    }
}

void layernorm_backward(const double* dy, const double* xhat, const double* rstd, const double* g,
                        std::size_t rows, std::size_t d, double* dx, double* dg, double* db) {
    for (std::size_t t = 0; t < rows; ++t) {
        const double* dyt = dy + t * d;
        const double* xh = xhat + t * d;
        double m1 = 0.0, m2 = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            const double a = g[j] * dyt[j];
            m1 += a;
            m2 += a * xh[j];
        }
        m1 /= static_cast<double>(d);
        m2 /= static_cast<double>(d);
        const double rs = rstd[t];
        double* dxt = dx + t * d;
        for (std::size_t j = 0; j < d; ++j) {
            dxt[j] += (g[j] * dyt[j] - m1 - xh[j] * m2) * rs;
            dg[j] += dyt[j] * xh[j];
            db[j] += dyt[j];
        }
    }
}

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); }
double gelu_grad(double x) {
    return 0.5 * (1.0 + std::erf(x * kInvSqrt2)) + x * std::exp(-0.5 * x * x) * kInvSqrt2Pi;
}

void attention_forward(std::size_t tc, std::size_t d, std::size_t H, const double* q,
                       const double* k, const double* v, double* probs, double* out) {
    const std::size_t dh = d / H;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    for (std::size_t h = 0; h < H; ++h) {
        const std::size_t co = h * dh;
        double* Ph = probs + h * tc * tc;
        for (std::size_t i = 0; i < tc; ++i) {
            double* row = Ph + i * tc;
            const double* qi = q + i * d + co;
            double maxv = -std::numeric_limits<double>::infinity();
            for (std::size_t j = 0; j <= i; ++j) {
                const double* kj = k + j * d + co;
                double s = 0.0;
                for (std::size_t c = 0; c < dh; ++c) s += qi[c] * kj[c];
                s *= scale;
                row[j] = s;
                if (s > maxv) maxv = s;
            }
            double sum = 0.0;
            for (std::size_t j = 0; j <= i; ++j) {
                row[j] = std::exp(row[j] - maxv);
                sum += row[j];
            }
            const double inv = 1.0 / sum;
            for (std::size_t j = 0; j <= i; ++j) row[j] *= inv;
            for (std::size_t j = i + 1; j < tc; ++j) row[j] = 0.0;
            double* oi = out + i * d + co;
            std::fill(oi, oi + dh, 0.0);
            for (std::size_t j = 0; j <= i; ++j) {
                const double pij = row[j];
                const double* vj = v + j * d + co;
                for (std::size_t c = 0; c < dh; ++c) oi[c] += pij * vj[c];
            }
        }
    }
}

void attention_backward(std::size_t tc, std::size_t d, std::size_t H, const double* q,
                        const double* k, const double* v, const double* probs, const double* dout,
                        double* dq, double* dk, double* dv, std::vector<double>& scratch) {
    const std::size_t dh = d / H;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    scratch.assign(tc, 0.0);
    for (std::size_t h = 0; h < H; ++h) {
        const std::size_t co = h * dh;
        const double* Ph = probs + h * tc * tc;
        for (std::size_t i = 0; i < tc; ++i) {
            const double* row = Ph + i * tc;
            const double* doi = dout + i * d + co;
            double dot_pp = 0.0;
            for (std::size_t j = 0; j <= i; ++j) {
                const double* vj = v + j * d + co;
                double dp = 0.0;
                for (std::size_t c = 0; c < dh; ++c) dp += doi[c] * vj[c];
                scratch[j] = dp;
                dot_pp += dp * row[j];
            }
            const double* qi = q + i * d + co;
            double* dqi = dq + i * d + co;
            for (std::size_t j = 0; j <= i; ++j) {
                const double pij = row[j];
                const double ds = pij * (scratch[j] - dot_pp) * scale;
                const double* kj = k + j * d + co;
                double* dkj = dk + j * d + co;
                double* dvj = dv + j * d + co;
                for (std::size_t c = 0; c < dh; ++c) {
                    dqi[c] += ds * kj[c];
                    dkj[c] += ds * qi[c];
                    dvj[c] += pij * doi[c];
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// spectral plumbing on [tc x d] position-major buffers
// ---------------------------------------------------------------------------

// y (tc x d) = first tc columns of B_omega applied to x zero-padded to omega.T
void apply_band_txd(const double* x, std::size_t tc, std::size_t d, const spectral::Band& omega,
                    double* y) {
    Tensor V({d, omega.T});
    for (std::size_t t = 0; t < tc; ++t)
        for (std::size_t n = 0; n < d; ++n) V.at2(n, t) = x[t * d + n];
    Tensor P = spectral::band_projector(V, omega);
    for (std::size_t t = 0; t < tc; ++t)
        for (std::size_t n = 0; n < d; ++n) y[t * d + n] = P.at2(n, t);
}

// spectrum of x zero-padded to length T along the sequence axis
void padded_spectrum(const double* x, std::size_t tc, std::size_t d, std::size_t T,
                     ComplexSpectrum& spec, spectral::PowerSpectrum& power) {
    Tensor V({d, T});
    for (std::size_t t = 0; t < tc; ++t)
        for (std::size_t n = 0; n < d; ++n) V.at2(n, t) = x[t * d + n];
    spec = dft_seq(V);
    power = spectral::power_spectrum(spec);
}

spectral::Band select_band_for(const spectral::PowerSpectrum& P, const ModelConfig& cfg) {
    return cfg.band_policy == BandPolicy::energy
               ? spectral::select_band(P, cfg.theta)
               : spectral::select_band_kl(P, cfg.kappa, cfg.eps);
}

// d(mu*KL)/dx added into dx for the padded-spectrum construction above
void spectral_kl_backward(const ComplexSpectrum& spec, const spectral::PowerSpectrum& P,
                          const spectral::Band& omega, double eps, double mu, std::size_t tc,
                          std::size_t d, double* dx) {
    const std::size_t T = spec.T;
    std::vector<char> mask(T, 0);
    for (std::size_t kk : omega.indices) mask[kk] = 1;

    const std::vector<double>& p = P.probabilities;
    double Z = 0.0;
    for (std::size_t k2 = 0; k2 < T; ++k2)
        if (mask[k2]) Z += p[k2];
    const double smooth = 1.0 - eps * static_cast<double>(T);

    std::vector<double> q(T), u(T);
    if (Z > 0.0) {
        for (std::size_t k2 = 0; k2 < T; ++k2)
            q[k2] = smooth * (mask[k2] ? p[k2] / Z : 0.0) + eps;
        double A = 0.0;
        for (std::size_t k2 = 0; k2 < T; ++k2)
            if (mask[k2]) A += p[k2] * p[k2] / q[k2];
        for (std::size_t k2 = 0; k2 < T; ++k2) {
            const double pk = std::max(p[k2], 1e-300);
            double g = std::log(pk / q[k2]) + 1.0;
            if (mask[k2]) g -= smooth * (p[k2] / (q[k2] * Z) - A / (Z * Z));
            u[k2] = g;
        }
    } else {
        // degenerate band mass: the smoothing target falls back to uniform
        // over the band and no longer depends on p
        const double inv = 1.0 / static_cast<double>(omega.indices.size());
        for (std::size_t k2 = 0; k2 < T; ++k2)
            q[k2] = smooth * (mask[k2] ? inv : 0.0) + eps;
        for (std::size_t k2 = 0; k2 < T; ++k2)
            u[k2] = std::log(std::max(p[k2], 1e-300) / q[k2]) + 1.0;
    }

    // through the probability normalization p = E / S
    double updot = 0.0;
    for (std::size_t k2 = 0; k2 < T; ++k2) updot += u[k2] * p[k2];
    std::vector<double> G(T);
    const double invS = 1.0 / P.total_energy;
    for (std::size_t k2 = 0; k2 < T; ++k2) G[k2] = mu * invS * (u[k2] - updot);

    // adjoint of E_k = sum_n |c_{n,k}|^2 through the forward DFT:
    // grad_x[n,t] = 2 Re( FWD(G .* conj(c_n))_t )
    std::vector<double> zre(T), zim(T);
    for (std::size_t n = 0; n < d; ++n) {
        const double* cre = spec.re.data() + n * T;
        const double* cim = spec.im.data() + n * T;
        for (std::size_t k2 = 0; k2 < T; ++k2) {
            zre[k2] = G[k2] * cre[k2];
            zim[k2] = -G[k2] * cim[k2];
        }
        dft_inplace(zre, zim, false);
        for (std::size_t t = 0; t < tc; ++t) dx[t * d + n] += 2.0 * zre[t];
    }
}

// ---------------------------------------------------------------------------
// sections on [tc x d] buffers
// ---------------------------------------------------------------------------

void window_means(const double* x, const coh::WindowCovering& cov, std::size_t d, double* means) {
    for (std::size_t i = 0; i < cov.count(); ++i) {
        const auto [a, b] = cov.windows[i];
        double* m = means + i * d;
        std::fill(m, m + d, 0.0);
        for (std::size_t t = a; t < b; ++t) {
            const double* xt = x + t * d;
            for (std::size_t n = 0; n < d; ++n) m[n] += xt[n];
        }
        const double inv = 1.0 / static_cast<double>(b - a);
        for (std::size_t n = 0; n < d; ++n) m[n] *= inv;
    }
}

void project_means(const double* means, const double* w_s, std::size_t N, std::size_t r,
                   std::size_t d, coh::SectionStack& out) {
    out = coh::SectionStack(N, r);
    for (std::size_t i = 0; i < N; ++i) {
        const double* m = means + i * d;
        double* s = out.row(i);
        for (std::size_t j = 0; j < r; ++j) {
            const double* wrow = w_s + j * d;
            double acc = 0.0;
            for (std::size_t n = 0; n < d; ++n) acc += wrow[n] * m[n];
            s[j] = acc;
        }
    }
}

// backward of project_means + window_means: dsec -> dw_s, dx
void sections_backward(const coh::SectionStack& dsec, const double* means,
                       const coh::WindowCovering& cov, const double* w_s, std::size_t d,
                       double* dw_s, double* dx) {
    const std::size_t N = dsec.n, r = dsec.r;
    std::vector<double> dmean(d);
    for (std::size_t i = 0; i < N; ++i) {
        const double* ds = dsec.row(i);
        const double* m = means + i * d;
        std::fill(dmean.begin(), dmean.end(), 0.0);
        for (std::size_t j = 0; j < r; ++j) {
            const double dsij = ds[j];
            if (dsij == 0.0) continue;
            const double* wrow = w_s + j * d;
            double* dwrow = dw_s + j * d;
            for (std::size_t n = 0; n < d; ++n) {
                dwrow[n] += dsij * m[n];
                dmean[n] += dsij * wrow[n];
            }
        }
        const auto [a, b] = cov.windows[i];
        const double inv = 1.0 / static_cast<double>(b - a);
        for (std::size_t t = a; t < b; ++t) {
            double* dxt = dx + t * d;
            for (std::size_t n = 0; n < d; ++n) dxt[n] += dmean[n] * inv;
        }
    }
}

// ---------------------------------------------------------------------------
// cross-entropy on a raw [tc x V] logits buffer
// ---------------------------------------------------------------------------

double ce_forward(const double* logits, std::size_t tc, std::size_t V,
                  const std::vector<int>& targets) {
    double acc = 0.0;
    for (std::size_t t = 0; t < tc; ++t) {
        const double* row = logits + t * V;
        double maxv = row[0];
        for (std::size_t j = 1; j < V; ++j) maxv = std::max(maxv, row[j]);
        double sum = 0.0;
        for (std::size_t j = 0; j < V; ++j) sum += std::exp(row[j] - maxv);
        acc += maxv + std::log(sum) - row[static_cast<std::size_t>(targets[t])];
    }
    return acc / static_cast<double>(tc);
}

void ce_backward(const double* logits, std::size_t tc, std::size_t V,
                 const std::vector<int>& targets, double* dlogits) {
    const double inv = 1.0 / static_cast<double>(tc);
    for (std::size_t t = 0; t < tc; ++t) {
        const double* row = logits + t * V;
        double* drow = dlogits + t * V;
        double maxv = row[0];
        for (std::size_t j = 1; j < V; ++j) maxv = std::max(maxv, row[j]);
        double sum = 0.0;
        for (std::size_t j = 0; j < V; ++j) {
            drow[j] = std::exp(row[j] - maxv);
            sum += drow[j];
        }
        const double norm = 1.0 / sum;
        for (std::size_t j = 0; j < V; ++j) drow[j] *= norm * inv;
        drow[static_cast<std::size_t>(targets[t])] -= inv;
    }
}

// ---------------------------------------------------------------------------
// workspace + forward
// ---------------------------------------------------------------------------

struct LayerWork {
    std::vector<double> ln1_xhat, ln1_rstd, ln1_out;
    std::vector<double> q, k, v, probs, att_concat, att_proj;
    std::vector<double> res1;
    std::vector<double> ln2_xhat, ln2_rstd, ln2_out;
    std::vector<double> ffn_pre, ffn_act;
    std::vector<double> block_out, g, injected;
    std::vector<double> sec_means, tgt_means;
    coh::SectionStack sections, targets;
};

struct Workspace {
    std::size_t tc = 0;
    std::vector<double> emb;
    ComplexSpectrum emb_spec;
    spectral::PowerSpectrum emb_power;
    bool has_spectrum = false;
    std::vector<LayerWork> layers;
    std::vector<double> lnf_xhat, lnf_rstd, lnf_out, logits;
    coh::WindowCovering cov;
    coh::OverlapGraph graph;
    std::vector<std::size_t> cover_count;
};

struct LayerOffsets {
    std::size_t ln1g, ln1b, wq, bq, wk, bk, wv, bv, wo, bo, ln2g, ln2b, w1, b1, w2, b2, alpha;
};

LayerOffsets layer_offsets(const ParamLayout& L, std::size_t l) {
    LayerOffsets o;
    o.ln1g = L.view(lname(l, "ln1.g")).offset;
    o.ln1b = L.view(lname(l, "ln1.b")).offset;
    o.wq = L.view(lname(l, "attn.wq")).offset;
    o.bq = L.view(lname(l, "attn.bq")).offset;
    o.wk = L.view(lname(l, "attn.wk")).offset;
    o.bk = L.view(lname(l, "attn.bk")).offset;
    o.wv = L.view(lname(l, "attn.wv")).offset;
    o.bv = L.view(lname(l, "attn.bv")).offset;
    o.wo = L.view(lname(l, "attn.wo")).offset;
    o.bo = L.view(lname(l, "attn.bo")).offset;
    o.ln2g = L.view(lname(l, "ln2.g")).offset;
    o.ln2b = L.view(lname(l, "ln2.b")).offset;
    o.w1 = L.view(lname(l, "ffn.w1")).offset;
    o.b1 = L.view(lname(l, "ffn.b1")).offset;
    o.w2 = L.view(lname(l, "ffn.w2")).offset;
    o.b2 = L.view(lname(l, "ffn.b2")).offset;
    o.alpha = L.view(lname(l, "alpha")).offset;
    return o;
}

void check_tokens(const std::vector<int>& tokens, const ModelConfig& cfg) {
    if (tokens.empty()) throw std::invalid_argument("model: token sequence must be nonempty");
    if (tokens.size() > cfg.T)
        throw std::invalid_argument("model: sequence length exceeds context length");
    for (int id : tokens)
        if (id < 0 || static_cast<std::size_t>(id) >= cfg.vocab)
            throw std::invalid_argument("model: token id out of range");
}

// one transformer block: cur (tc x d) -> lw.block_out, caching intermediates
void block_forward(const Params& p, const LayerOffsets& off, std::size_t tc, const double* cur,
                   LayerWork& lw) {
    const ModelConfig& cfg = p.cfg;
    const std::size_t d = cfg.d, F = cfg.ffn_mult * d;
    const double* pd = p.data.data();

    lw.ln1_xhat.resize(tc * d);
    lw.ln1_rstd.resize(tc);
    lw.ln1_out.resize(tc * d);
    layernorm_forward(cur, tc, d, pd + off.ln1g, pd + off.ln1b, lw.ln1_out.data(),
                      lw.ln1_xhat.data(), lw.ln1_rstd.data());

    lw.q.resize(tc * d);
    lw.k.resize(tc * d);
    lw.v.resize(tc * d);
    linear_forward(lw.ln1_out.data(), tc, d, d, pd + off.wq, pd + off.bq, lw.q.data());
    linear_forward(lw.ln1_out.data(), tc, d, d, pd + off.wk, pd + off.bk, lw.k.data());
    linear_forward(lw.ln1_out.data(), tc, d, d, pd + off.wv, pd + off.bv, lw.v.data());

    lw.probs.resize(cfg.n_heads * tc * tc);
    lw.att_concat.resize(tc * d);
    attention_forward(tc, d, cfg.n_heads, lw.q.data(), lw.k.data(), lw.v.data(), lw.probs.data(),
                      lw.att_concat.data());

    lw.att_proj.resize(tc * d);
    linear_forward(lw.att_concat.data(), tc, d, d, pd + off.wo, pd + off.bo, lw.att_proj.data());

    lw.res1.resize(tc * d);
    for (std::size_t i = 0; i < tc * d; ++i) lw.res1[i] = cur[i] + lw.att_proj[i];

    lw.ln2_xhat.resize(tc * d);
    lw.ln2_rstd.resize(tc);
    lw.ln2_out.resize(tc * d);
    layernorm_forward(lw.res1.data(), tc, d, pd + off.ln2g, pd + off.ln2b, lw.ln2_out.data(),
                      lw.ln2_xhat.data(), lw.ln2_rstd.data());

    lw.ffn_pre.resize(tc * F);
    lw.ffn_act.resize(tc * F);
    linear_forward(lw.ln2_out.data(), tc, d, F, pd + off.w1, pd + off.b1, lw.ffn_pre.data());
    for (std::size_t i = 0; i < tc * F; ++i) lw.ffn_act[i] = gelu(lw.ffn_pre[i]);

    lw.block_out.resize(tc * d);
    linear_forward(lw.ffn_act.data(), tc, F, d, pd + off.w2, pd + off.b2, lw.block_out.data());
    for (std::size_t i = 0; i < tc * d; ++i) lw.block_out[i] += lw.res1[i];
}

// band-limited injection after the block: lw.block_out -> lw.g, lw.injected
void injection_forward(const Params& p, const LayerOffsets& off, std::size_t tc,
                       const spectral::Band& band, LayerWork& lw) {
    const ModelConfig& cfg = p.cfg;
    const std::size_t d = cfg.d;
    lw.injected.resize(tc * d);
    if (cfg.spectral_injection) {
        lw.g.resize(tc * d);
        apply_band_txd(lw.block_out.data(), tc, d, band, lw.g.data());
        const double alpha = p.data[off.alpha];
        if (alpha == 0.0) {
            std::memcpy(lw.injected.data(), lw.block_out.data(), tc * d * sizeof(double));
        } else {
            for (std::size_t i = 0; i < tc * d; ++i)
                lw.injected[i] = lw.block_out[i] + alpha * lw.g[i];
        }
    } else {
        std::memcpy(lw.injected.data(), lw.block_out.data(), tc * d * sizeof(double));
    }
}

void final_head(const Params& p, std::size_t tc, const double* cur, Workspace& ws) {
    const std::size_t d = p.cfg.d, V = p.cfg.vocab;
    ws.lnf_xhat.resize(tc * d);
    ws.lnf_rstd.resize(tc);
    ws.lnf_out.resize(tc * d);
    layernorm_forward(cur, tc, d, p.get("ln_f.g"), p.get("ln_f.b"), ws.lnf_out.data(),
                      ws.lnf_xhat.data(), ws.lnf_rstd.data());
    ws.logits.resize(tc * V);
    linear_forward(ws.lnf_out.data(), tc, d, V, p.get("head.w"), p.get("head.b"),
                   ws.logits.data());
}

coh::WindowCovering covering_for(const ModelConfig& cfg, std::size_t tc) {
    const std::size_t w_eff = std::min(cfg.w, tc);
    const std::size_t stride_eff = std::min(cfg.stride, w_eff);
    return coh::make_covering(tc, w_eff, stride_eff);
}

// Full forward pass. When `omega` is null and injection is on, the band is
// selected from this sequence's own embedding spectrum; `band_out` receives
// the band actually used.
void forward_internal(const std::vector<int>& tokens, const Params& p,
                      const spectral::Band* omega, bool want_spectrum, Workspace& ws,
                      spectral::Band& band_out) {
    const ModelConfig& cfg = p.cfg;
    check_tokens(tokens, cfg);
    const std::size_t tc = tokens.size(), d = cfg.d;
    ws.tc = tc;

    // embedding
    ws.emb.resize(tc * d);
    const double* tok = p.get("tok_emb");
    const double* pos = p.get("pos_emb");
    for (std::size_t t = 0; t < tc; ++t) {
        const double* te = tok + static_cast<std::size_t>(tokens[t]) * d;
        const double* pe = pos + t * d;
        double* e = ws.emb.data() + t * d;
        for (std::size_t n = 0; n < d; ++n) e[n] = te[n] + pe[n];
    }

    ws.has_spectrum = false;
    if (cfg.spectral_injection || want_spectrum) {
        padded_spectrum(ws.emb.data(), tc, d, cfg.T, ws.emb_spec, ws.emb_power);
        ws.has_spectrum = true;
    }
    if (cfg.spectral_injection) {
        band_out = omega ? *omega : select_band_for(ws.emb_power, cfg);
        if (band_out.T != cfg.T || band_out.indices.empty())
            throw std::invalid_argument("model: band does not match the model context length");
    } else {
        band_out = spectral::Band{};
    }

    ws.cov = covering_for(cfg, tc);
    ws.graph = coh::overlap_graph(ws.cov);
    ws.cover_count.assign(tc, 0);
    for (const auto& [a, b] : ws.cov.windows)
        for (std::size_t t = a; t < b; ++t) ++ws.cover_count[t];

    ws.layers.assign(cfg.n_layers, LayerWork{});
    const double* cur = ws.emb.data();
    for (std::size_t l = 0; l < cfg.n_layers; ++l) {
        LayerWork& lw = ws.layers[l];
        const LayerOffsets off = layer_offsets(p.layout, l);
        block_forward(p, off, tc, cur, lw);
        injection_forward(p, off, tc, band_out, lw);

        const std::size_t N = ws.cov.count();
        lw.sec_means.resize(N * d);
        window_means(lw.injected.data(), ws.cov, d, lw.sec_means.data());
        project_means(lw.sec_means.data(), p.get("w_s"), N, cfg.r, d, lw.sections);
        if (cfg.spectral_injection) {
            lw.tgt_means.resize(N * d);
            window_means(lw.g.data(), ws.cov, d, lw.tgt_means.data());
            project_means(lw.tgt_means.data(), p.get("w_s"), N, cfg.r, d, lw.targets);
        }

        cur = lw.injected.data();
    }
    final_head(p, tc, cur, ws);
}

void check_targets(const std::vector<int>& targets, std::size_t tc, const ModelConfig& cfg) {
    if (targets.size() != tc)
        throw std::invalid_argument("model: target length must match the input length");
    for (int id : targets)
        if (id < 0 || static_cast<std::size_t>(id) >= cfg.vocab)
            throw std::invalid_argument("model: target id out of range");
}

LossBreakdown losses_from_workspace(const Workspace& ws, const std::vector<int>& targets,
                                    const LossWeights& w, const ModelConfig& cfg,
                                    const spectral::Band& omega) {
    LossBreakdown out;
    out.task = ce_forward(ws.logits.data(), ws.tc, cfg.vocab, targets);
    for (const LayerWork& lw : ws.layers) {
        if (w.lambda > 0.0) out.coh += coh::coh_loss(ws.graph, lw.sections, w.lambda).value;
        if (w.eta > 0.0) {
            if (lw.targets.n == 0)
                throw std::invalid_argument(
                    "model: coupling loss requires spectral injection (no global intent)");
            out.coupling += coh::coupling_loss(lw.sections, lw.targets, w.eta).value;
        }
    }
    if (w.mu > 0.0) {
        if (!ws.has_spectrum)
            throw std::invalid_argument("model: spectral loss requires an embedding spectrum");
        out.spec = w.mu * spectral::spectral_kl(ws.emb_power, omega, cfg.eps);
    }
    out.total = out.task + out.coh + out.coupling + out.spec;
    return out;
}

} // namespace

// ---------------------------------------------------------------------------
// public ops
// ---------------------------------------------------------------------------

Tensor spectral_inject(const Tensor& x, const spectral::Band& omega, double alpha) {
    if (x.rank() != 2) throw std::invalid_argument("spectral_inject: expected a rank-2 tensor");
    if (alpha == 0.0) return x;
    Tensor g = spectral::band_projector(x, omega);
    Tensor out = x;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += alpha * g[i];
    return out;
}

coh::SectionStack extract_sections(const Tensor& h, const coh::WindowCovering& cov,
                                   const Tensor& w_s) {
    if (h.rank() != 2 || w_s.rank() != 2)
        throw std::invalid_argument("extract_sections: expected rank-2 tensors");
    const std::size_t d = h.dim(0), T = h.dim(1), r = w_s.dim(0);
    if (w_s.dim(1) != d)
        throw std::invalid_argument("extract_sections: projector width must match h rows");
    if (cov.T != T)
        throw std::invalid_argument("extract_sections: covering length must match h columns");
    coh::SectionStack out(cov.count(), r);
    std::vector<double> mean(d);
    for (std::size_t i = 0; i < cov.count(); ++i) {
        const auto [a, b] = cov.windows[i];
        std::fill(mean.begin(), mean.end(), 0.0);
        for (std::size_t t = a; t < b; ++t)
            for (std::size_t n = 0; n < d; ++n) mean[n] += h.at2(n, t);
        const double inv = 1.0 / static_cast<double>(b - a);
        for (std::size_t n = 0; n < d; ++n) mean[n] *= inv;
        double* s = out.row(i);
        for (std::size_t j = 0; j < r; ++j) {
            double acc = 0.0;
            for (std::size_t n = 0; n < d; ++n) acc += w_s.at2(j, n) * mean[n];
            s[j] = acc;
        }
    }
    return out;
}

double mean_cross_entropy(const Tensor& logits, const std::vector<int>& targets) {
    if (logits.rank() != 2) throw std::invalid_argument("mean_cross_entropy: rank-2 logits");
    if (logits.dim(0) == 0 || targets.size() != logits.dim(0))
        throw std::invalid_argument("mean_cross_entropy: target/logit row mismatch");
    for (int id : targets)
        if (id < 0 || static_cast<std::size_t>(id) >= logits.dim(1))
            throw std::invalid_argument("mean_cross_entropy: target id out of range");
    return ce_forward(logits.data(), logits.dim(0), logits.dim(1), targets);
}

namespace {

ForwardResult result_from_workspace(const Workspace& ws, const Params& p,
                                    const spectral::Band& band) {
    const ModelConfig& cfg = p.cfg;
    const std::size_t tc = ws.tc, d = cfg.d;
    ForwardResult fr;
    fr.logits = Tensor({tc, cfg.vocab}, ws.logits);
    fr.embedding_spectrum = ws.emb_power;
    fr.omega = band;
    fr.states.reserve(cfg.n_layers);
    for (std::size_t l = 0; l < cfg.n_layers; ++l) {
        const LayerWork& lw = ws.layers[l];
        LayerState st;
        st.hidden = Tensor({d, tc});
        for (std::size_t t = 0; t < tc; ++t)
            for (std::size_t n = 0; n < d; ++n) st.hidden.at2(n, t) = lw.block_out[t * d + n];
        if (cfg.spectral_injection) {
            st.global_intent = Tensor({d, tc});
            for (std::size_t t = 0; t < tc; ++t)
                for (std::size_t n = 0; n < d; ++n)
                    st.global_intent.at2(n, t) = lw.g[t * d + n];
        }
        st.sections = lw.sections;
        st.coupling_targets = lw.targets;
        st.alpha = p.data[p.layout.view(lname(l, "alpha")).offset];
        fr.states.push_back(std::move(st));
    }
    return fr;
}

} // namespace

ForwardResult forward(const std::vector<int>& tokens, const Params& p,
                      const spectral::Band& omega) {
    Workspace ws;
    spectral::Band band;
    forward_internal(tokens, p, &omega, false, ws, band);
    return result_from_workspace(ws, p, band);
}

ForwardResult forward(const std::vector<int>& tokens, const Params& p) {
    Workspace ws;
    spectral::Band band;
    forward_internal(tokens, p, nullptr, false, ws, band);
    return result_from_workspace(ws, p, band);
}

LossBreakdown total_loss(const ForwardResult& fr, const std::vector<int>& targets,
                         const LossWeights& w, const ModelConfig& cfg) {
    w.validate();
    const std::size_t tc = fr.logits.dim(0);
    check_targets(targets, tc, cfg);
    LossBreakdown out;
    out.task = mean_cross_entropy(fr.logits, targets);
    if (w.lambda > 0.0 || w.eta > 0.0) {
        coh::OverlapGraph graph = coh::overlap_graph(covering_for(cfg, tc));
        for (const LayerState& st : fr.states) {
            if (w.lambda > 0.0) out.coh += coh::coh_loss(graph, st.sections, w.lambda).value;
            if (w.eta > 0.0) {
                if (st.coupling_targets.n == 0)
                    throw std::invalid_argument(
                        "model: coupling loss requires spectral injection (no global intent)");
                out.coupling +=
                    coh::coupling_loss(st.sections, st.coupling_targets, w.eta).value;
            }
        }
    }
    if (w.mu > 0.0) {
        if (!fr.embedding_spectrum.has_probabilities)
            throw std::invalid_argument("model: spectral loss requires an embedding spectrum");
        out.spec = w.mu * spectral::spectral_kl(fr.embedding_spectrum, fr.omega, cfg.eps);
    }
    out.total = out.task + out.coh + out.coupling + out.spec;
    return out;
}

LossBreakdown loss_and_grad(const std::vector<int>& inputs, const std::vector<int>& targets,
                            const Params& p, const spectral::Band& omega, const LossWeights& w,
                            std::vector<double>& grad) {
    const ModelConfig& cfg = p.cfg;
    w.validate();
    if (grad.size() != p.layout.total())
        throw std::invalid_argument("loss_and_grad: gradient buffer size mismatch");

    Workspace ws;
    spectral::Band band;
    forward_internal(inputs, p, cfg.spectral_injection ? &omega : nullptr, w.mu > 0.0, ws, band);
    const std::size_t tc = ws.tc, d = cfg.d, V = cfg.vocab, F = cfg.ffn_mult * d;
    check_targets(targets, tc, cfg);

    // with injection on, the KL band is the injection band; otherwise the
    // caller-fixed band still defines the spectral loss
    const spectral::Band& kl_band = cfg.spectral_injection ? band : omega;
    LossBreakdown losses = losses_from_workspace(ws, targets, w, cfg, kl_band);

    // ---- backward ----
    const double* pd = p.data.data();
    double* gd = grad.data();

    std::vector<double> dlogits(tc * V);
    ce_backward(ws.logits.data(), tc, V, targets, dlogits.data());

    std::vector<double> dcur(tc * d, 0.0); // gradient on the pre-ln_f hidden state
    {
        const std::size_t headw = p.layout.view("head.w").offset;
        const std::size_t headb = p.layout.view("head.b").offset;
        std::vector<double> dlnf(tc * d, 0.0);
        linear_backward(ws.lnf_out.data(), dlogits.data(), tc, d, V, pd + headw, dlnf.data(),
                        gd + headw, gd + headb);
        layernorm_backward(dlnf.data(), ws.lnf_xhat.data(), ws.lnf_rstd.data(), pd + p.layout.view("ln_f.g").offset,
                           tc, d, dcur.data(), gd + p.layout.view("ln_f.g").offset,
                           gd + p.layout.view("ln_f.b").offset);
    }

    const std::size_t ws_off = p.layout.view("w_s").offset;
    std::vector<double> sA(tc * d), sB(tc * d), dq(tc * d), dk(tc * d), dv(tc * d);
    std::vector<double> sF(tc * F), dg(tc * d), band_tmp(tc * d);
    std::vector<double> att_scratch;

    for (std::size_t l = cfg.n_layers; l-- > 0;) {
        const LayerWork& lw = ws.layers[l];
        const LayerOffsets off = layer_offsets(p.layout, l);

        // section losses -> d(injected), dW_s; coupling also -> dg
        bool have_dg = false;
        if (w.lambda > 0.0 || w.eta > 0.0) {
            coh::SectionStack dsec(lw.sections.n, lw.sections.r);
            bool any = false;
            if (w.lambda > 0.0) {
                coh::LossGrad cg = coh::coh_loss(ws.graph, lw.sections, w.lambda);
                for (std::size_t i = 0; i < dsec.data.size(); ++i) dsec.data[i] += cg.grad.data[i];
                any = true;
            }
            coh::SectionStack dtgt;
            if (w.eta > 0.0) {
                coh::LossGrad cl = coh::coupling_loss(lw.sections, lw.targets, w.eta);
                dtgt = coh::SectionStack(lw.targets.n, lw.targets.r);
                for (std::size_t i = 0; i < dsec.data.size(); ++i) {
                    dsec.data[i] += cl.grad.data[i];
                    dtgt.data[i] = -cl.grad.data[i];
                }
                any = true;
            }
            if (any)
                sections_backward(dsec, lw.sec_means.data(), ws.cov, pd + ws_off, d, gd + ws_off,
                                  dcur.data());
            if (w.eta > 0.0) {
                std::fill(dg.begin(), dg.end(), 0.0);
                sections_backward(dtgt, lw.tgt_means.data(), ws.cov, pd + ws_off, d, gd + ws_off,
                                  dg.data());
                have_dg = true;
            }
        }

        // injection backward: dblock = dcur + B(alpha*dcur + dg); dalpha = <g, dcur>
        if (cfg.spectral_injection) {
            const double alpha = pd[off.alpha];
            double dalpha = 0.0;
            for (std::size_t i = 0; i < tc * d; ++i) dalpha += lw.g[i] * dcur[i];
            gd[off.alpha] += dalpha;
            if (alpha != 0.0 || have_dg) {
                for (std::size_t i = 0; i < tc * d; ++i)
                    band_tmp[i] = alpha * dcur[i] + (have_dg ? dg[i] : 0.0);
                apply_band_txd(band_tmp.data(), tc, d, band, sA.data());
                for (std::size_t i = 0; i < tc * d; ++i) dcur[i] += sA[i];
            }
        }

        // FFN: block_out = res1 + W2(gelu(W1(ln2(res1))))
        std::fill(sF.begin(), sF.end(), 0.0);
        linear_backward(lw.ffn_act.data(), dcur.data(), tc, F, d, pd + off.w2, sF.data(),
                        gd + off.w2, gd + off.b2);
        for (std::size_t i = 0; i < tc * F; ++i) sF[i] *= gelu_grad(lw.ffn_pre[i]);
        std::fill(sA.begin(), sA.end(), 0.0);
        linear_backward(lw.ln2_out.data(), sF.data(), tc, d, F, pd + off.w1, sA.data(),
                        gd + off.w1, gd + off.b1);
        layernorm_backward(sA.data(), lw.ln2_xhat.data(), lw.ln2_rstd.data(), pd + off.ln2g, tc,
                           d, dcur.data(), gd + off.ln2g, gd + off.ln2b);

        // attention: res1 = h_in + Wo(attn(ln1(h_in)))
        std::fill(sB.begin(), sB.end(), 0.0);
        linear_backward(lw.att_concat.data(), dcur.data(), tc, d, d, pd + off.wo, sB.data(),
                        gd + off.wo, gd + off.bo);
        std::fill(dq.begin(), dq.end(), 0.0);
        std::fill(dk.begin(), dk.end(), 0.0);
        std::fill(dv.begin(), dv.end(), 0.0);
        attention_backward(tc, d, cfg.n_heads, lw.q.data(), lw.k.data(), lw.v.data(),
                           lw.probs.data(), sB.data(), dq.data(), dk.data(), dv.data(),
                           att_scratch);
        std::fill(sA.begin(), sA.end(), 0.0);
        linear_backward(lw.ln1_out.data(), dq.data(), tc, d, d, pd + off.wq, sA.data(),
                        gd + off.wq, gd + off.bq);
        linear_backward(lw.ln1_out.data(), dk.data(), tc, d, d, pd + off.wk, sA.data(),
                        gd + off.wk, gd + off.bk);
        linear_backward(lw.ln1_out.data(), dv.data(), tc, d, d, pd + off.wv, sA.data(),
                        gd + off.wv, gd + off.bv);
        layernorm_backward(sA.data(), lw.ln1_xhat.data(), lw.ln1_rstd.data(), pd + off.ln1g, tc,
                           d, dcur.data(), gd + off.ln1g, gd + off.ln1b);
    }

    // spectral KL gradient lands directly on the embedding sequence
    if (w.mu > 0.0)
        spectral_kl_backward(ws.emb_spec, ws.emb_power, kl_band, cfg.eps, w.mu, tc, d,
                             dcur.data());

    // scatter into token/position embeddings
    {
        double* dtok = gd + p.layout.view("tok_emb").offset;
        double* dpos = gd + p.layout.view("pos_emb").offset;
        for (std::size_t t = 0; t < tc; ++t) {
            const double* dct = dcur.data() + t * d;
            double* dte = dtok + static_cast<std::size_t>(inputs[t]) * d;
            double* dpe = dpos + t * d;
            for (std::size_t n = 0; n < d; ++n) {
                dte[n] += dct[n];
                dpe[n] += dct[n];
            }
        }
    }

    return losses;
}

StepResult train_step(const std::vector<std::vector<int>>& inputs,
                      const std::vector<std::vector<int>>& targets, Params& p, AdamState& opt,
                      const LossWeights& w, const TrainConfig& tc, std::size_t step_index,
                      std::size_t n_threads) {
    const ModelConfig& cfg = p.cfg;
    cfg.validate();
    w.validate();
    const std::size_t B = inputs.size();
    if (B == 0) throw std::invalid_argument("train_step: empty batch");
    if (targets.size() != B)
        throw std::invalid_argument("train_step: input/target batch size mismatch");

    // band from the batch-aggregate embedding spectrum
    spectral::Band band;
    if (cfg.spectral_injection || w.mu > 0.0) {
        const std::size_t d = cfg.d;
        const double* tok = p.get("tok_emb");
        const double* pos = p.get("pos_emb");
        std::vector<double> agg(cfg.T, 0.0);
        for (const auto& seq : inputs) {
            check_tokens(seq, cfg);
            std::vector<double> emb(seq.size() * d);
            for (std::size_t t = 0; t < seq.size(); ++t)
                for (std::size_t n = 0; n < d; ++n)
                    emb[t * d + n] =
                        tok[static_cast<std::size_t>(seq[t]) * d + n] + pos[t * d + n];
            ComplexSpectrum spec;
            spectral::PowerSpectrum power;
            padded_spectrum(emb.data(), seq.size(), d, cfg.T, spec, power);
            for (std::size_t k = 0; k < cfg.T; ++k) agg[k] += power.energies[k];
        }
        spectral::PowerSpectrum batch_power;
        batch_power.energies = std::move(agg);
        for (double e : batch_power.energies) batch_power.total_energy += e;
        if (batch_power.total_energy > 0.0) {
            batch_power.has_probabilities = true;
            batch_power.probabilities.resize(cfg.T);
            for (std::size_t k = 0; k < cfg.T; ++k)
                batch_power.probabilities[k] = batch_power.energies[k] / batch_power.total_energy;
        }
        band = select_band_for(batch_power, cfg);
    }

    // per-example gradients, reduced in example order for determinism
    const std::size_t P = p.layout.total();
    std::vector<std::vector<double>> grads(B);
    std::vector<LossBreakdown> parts(B);
    std::vector<std::exception_ptr> errors(B);

    auto run_example = [&](std::size_t b) {
        try {
            grads[b].assign(P, 0.0);
            parts[b] = loss_and_grad(inputs[b], targets[b], p, band, w, grads[b]);
        } catch (...) {
            errors[b] = std::current_exception();
        }
    };

    const std::size_t workers = std::max<std::size_t>(1, std::min(n_threads, B));
    if (workers == 1) {
        for (std::size_t b = 0; b < B; ++b) run_example(b);
    } else {
        std::vector<std::thread> pool;
        pool.reserve(workers);
        for (std::size_t wk = 0; wk < workers; ++wk)
            pool.emplace_back([&, wk] {
                for (std::size_t b = wk; b < B; b += workers) run_example(b);
            });
        for (auto& th : pool) th.join();
    }
    for (std::size_t b = 0; b < B; ++b)
        if (errors[b]) std::rethrow_exception(errors[b]);

    LossBreakdown mean;
    const double invB = 1.0 / static_cast<double>(B);
    for (std::size_t b = 0; b < B; ++b) {
        mean.total += parts[b].total;
        mean.task += parts[b].task;
        mean.coh += parts[b].coh;
        mean.coupling += parts[b].coupling;
        mean.spec += parts[b].spec;
    }
    mean.total *= invB;
    mean.task *= invB;
    mean.coh *= invB;
    mean.coupling *= invB;
    mean.spec *= invB;

    if (!std::isfinite(mean.total))
        throw TrainingDivergence(
            "train_step: non-finite loss at step " + std::to_string(step_index), step_index);

    std::vector<double> g(P, 0.0);
    for (std::size_t b = 0; b < B; ++b) {
        const std::vector<double>& gb = grads[b];
        for (std::size_t i = 0; i < P; ++i) g[i] += gb[i];
    }
    for (std::size_t i = 0; i < P; ++i) g[i] *= invB;

    // Adam with decoupled weight decay
    if (opt.m.empty()) {
        opt.m.assign(P, 0.0);
        opt.v.assign(P, 0.0);
        opt.t = 0;
    }
    if (opt.m.size() != P || opt.v.size() != P)
        throw std::invalid_argument("train_step: optimizer state size mismatch");
    opt.t += 1;
    const double bc1 = 1.0 - std::pow(tc.beta1, static_cast<double>(opt.t));
    const double bc2 = 1.0 - std::pow(tc.beta2, static_cast<double>(opt.t));
    for (std::size_t i = 0; i < P; ++i) {
        opt.m[i] = tc.beta1 * opt.m[i] + (1.0 - tc.beta1) * g[i];
        opt.v[i] = tc.beta2 * opt.v[i] + (1.0 - tc.beta2) * g[i] * g[i];
        const double mhat = opt.m[i] / bc1;
        const double vhat = opt.v[i] / bc2;
        p.data[i] -= tc.lr * (mhat / (std::sqrt(vhat) + tc.adam_eps) + tc.weight_decay * p.data[i]);
    }

    StepResult out;
    out.loss = mean;
    out.omega = band;
    return out;
}

std::vector<int> infer_harmonized(const std::vector<int>& prompt, const Params& p,
                                  const LossWeights& w, std::size_t max_new,
                                  HarmonizeDiagnostics* diag) {
    const ModelConfig& cfg = p.cfg;
    cfg.validate();
    w.validate();
    if (prompt.empty()) throw std::invalid_argument("infer_harmonized: prompt must be nonempty");
    for (int id : prompt)
        if (id < 0 || static_cast<std::size_t>(id) >= cfg.vocab)
            throw std::invalid_argument("infer_harmonized: prompt id out of range");
    if (!cfg.spectral_injection && w.eta > 0.0)
        throw std::invalid_argument(
            "infer_harmonized: coupling requires spectral injection (no global intent)");

    const std::size_t d = cfg.d, V = cfg.vocab;
    const bool active = w.lambda > 0.0 || w.eta > 0.0;
    std::vector<int> ctx = prompt;
    std::vector<int> out;
    out.reserve(max_new);
    std::vector<double> delta(d);

    for (std::size_t stepi = 0; stepi < max_new; ++stepi) {
        const std::size_t tc = std::min(ctx.size(), cfg.T);
        std::vector<int> suffix(ctx.end() - static_cast<std::ptrdiff_t>(tc), ctx.end());

        Workspace ws;
        spectral::Band band;
        std::vector<double> pre_row, post_row;
        if (!active && !diag) {
            // inactive harmonization leaves plain greedy decoding untouched
            forward_internal(suffix, p, nullptr, false, ws, band);
        } else {
            // forward pass with per-layer harmonization of the sections and
            // write-back of the correction before the next layer runs
            ws.tc = tc;
            ws.emb.resize(tc * d);
            const double* tok = p.get("tok_emb");
            const double* pos = p.get("pos_emb");
            for (std::size_t t = 0; t < tc; ++t) {
                const double* te = tok + static_cast<std::size_t>(suffix[t]) * d;
                const double* pe = pos + t * d;
                double* e = ws.emb.data() + t * d;
                for (std::size_t n = 0; n < d; ++n) e[n] = te[n] + pe[n];
            }
            if (cfg.spectral_injection) {
                padded_spectrum(ws.emb.data(), tc, d, cfg.T, ws.emb_spec, ws.emb_power);
                band = select_band_for(ws.emb_power, cfg);
            }
            ws.cov = covering_for(cfg, tc);
            ws.graph = coh::overlap_graph(ws.cov);
            ws.cover_count.assign(tc, 0);
            for (const auto& [a, b] : ws.cov.windows)
                for (std::size_t t = a; t < b; ++t) ++ws.cover_count[t];

            const double* w_s = p.get("w_s");
            ws.layers.assign(cfg.n_layers, LayerWork{});
            const double* cur = ws.emb.data();
            for (std::size_t l = 0; l < cfg.n_layers; ++l) {
                LayerWork& lw = ws.layers[l];
                const LayerOffsets off = layer_offsets(p.layout, l);
                block_forward(p, off, tc, cur, lw);
                injection_forward(p, off, tc, band, lw);

                const std::size_t N = ws.cov.count();
                lw.sec_means.resize(N * d);
                window_means(lw.injected.data(), ws.cov, d, lw.sec_means.data());
                project_means(lw.sec_means.data(), w_s, N, cfg.r, d, lw.sections);

                const double pre = coh::coboundary_energy(ws.graph, lw.sections);
                double post = pre;
                if (active) {
                    coh::SectionStack tgt;
                    if (w.eta > 0.0) {
                        lw.tgt_means.resize(N * d);
                        window_means(lw.g.data(), ws.cov, d, lw.tgt_means.data());
                        project_means(lw.tgt_means.data(), w_s, N, cfg.r, d, tgt);
                    }
                    coh::SectionStack star =
                        coh::harmonize(lw.sections, ws.graph, w.lambda, w.eta, tgt);
                    post = coh::coboundary_energy(ws.graph, star);
                    // write-back: h_t += W_s'(s*_i - s0_i) / cover_count(t)
                    for (std::size_t i = 0; i < N; ++i) {
                        const double* s0 = lw.sections.row(i);
                        const double* s1 = star.row(i);
                        std::fill(delta.begin(), delta.end(), 0.0);
                        for (std::size_t j = 0; j < cfg.r; ++j) {
                            const double dj = s1[j] - s0[j];
                            if (dj == 0.0) continue;
                            const double* wrow = w_s + j * d;
                            for (std::size_t n = 0; n < d; ++n) delta[n] += dj * wrow[n];
                        }
                        const auto [a, b] = ws.cov.windows[i];
                        for (std::size_t t = a; t < b; ++t) {
                            const double inv = 1.0 / static_cast<double>(ws.cover_count[t]);
                            double* ht = lw.injected.data() + t * d;
                            for (std::size_t n = 0; n < d; ++n) ht[n] += delta[n] * inv;
                        }
                    }
                }
                pre_row.push_back(pre);
                post_row.push_back(post);
                cur = lw.injected.data();
            }
            final_head(p, tc, cur, ws);
        }

        if (diag) {
            diag->pre_energy.push_back(pre_row);
            diag->post_energy.push_back(post_row);
        }

        const double* last = ws.logits.data() + (tc - 1) * V;
        std::size_t best = 0;
        for (std::size_t j = 1; j < V; ++j)
            if (last[j] > last[best]) best = j;
        ctx.push_back(static_cast<int>(best));
        out.push_back(static_cast<int>(best));
    }
    return out;
}

} // namespace model
} // namespace wavephase
