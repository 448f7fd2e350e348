// model.hpp - byte-level causal transformer with band-limited residual
// injection, per-layer window sections, the combined training objective,
// and harmonized greedy decoding.

#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "wavephase/cohomology.hpp"
#include "wavephase/dft.hpp"
#include "wavephase/spectral.hpp"
#include "wavephase/tensor.hpp"

namespace wavephase {
namespace model {

enum class BandPolicy { energy, kl };

struct ModelConfig {
    std::size_t vocab = 256; // byte-level
    std::size_t T = 128;     // context length
    std::size_t d = 64;      // embedding width
    std::size_t n_layers = 2;
    std::size_t n_heads = 4;
    std::size_t ffn_mult = 4;
    std::size_t r = 16;      // section dimension
    std::size_t w = 32;      // covering window width
    std::size_t stride = 16; // covering stride
    BandPolicy band_policy = BandPolicy::energy;
    double theta = 0.9; // retained-energy threshold (energy policy)
    double kappa = 0.1; // KL threshold (kl policy)
    double eps = 1e-6;  // smoothing floor for the spectral KL
    bool spectral_injection = true; // false = plain transformer path
    std::uint64_t seed = 0;

    void validate() const; // throws std::invalid_argument
};

struct LossWeights {
    double lambda = 0.0; // cohomology
    double mu = 0.0;     // spectral KL
    double eta = 0.0;    // section/global-intent coupling

    void validate() const;
};

// Named segment of the flat parameter vector.
struct ParamEntry {
    std::string name;
    std::size_t offset = 0;
    std::size_t size = 0;
    std::vector<std::size_t> dims;
};

class ParamLayout {
public:
    ParamLayout() = default;
    static ParamLayout for_config(const ModelConfig& cfg);

    const ParamEntry& view(const std::string& name) const; // throws on unknown name
    bool has(const std::string& name) const;
    std::size_t total() const { return total_; }
    const std::vector<ParamEntry>& entries() const { return entries_; }

private:
    std::vector<ParamEntry> entries_;
    std::size_t total_ = 0;
};

struct Params {
    ModelConfig cfg;
    ParamLayout layout;
    std::vector<double> data;

    double* get(const std::string& name) { return data.data() + layout.view(name).offset; }
    const double* get(const std::string& name) const {
        return data.data() + layout.view(name).offset;
    }
    double scalar(const std::string& name) const { return data[layout.view(name).offset]; }
};

// Seeded initialization: N(0, 0.02) weights, zero biases, unit LayerNorm
// gains, zero injection strengths.
Params init_params(const ModelConfig& cfg);

// Per-layer record exposed by forward().
struct LayerState {
    Tensor hidden;                      // d x tc block output x^(l), pre-injection
    Tensor global_intent;               // d x tc band-limited g^(l); rank 0 when injection off
    coh::SectionStack sections;         // post-injection window sections s^(l)
    coh::SectionStack coupling_targets; // P_i(g); empty when injection off
    double alpha = 0.0;
};

struct ForwardResult {
    Tensor logits; // tc x vocab
    std::vector<LayerState> states;
    spectral::PowerSpectrum embedding_spectrum; // of the padded embedding sequence
    spectral::Band omega;                       // band used for injection / L_spec
};

// x + alpha * B_omega(x) on a d x T tensor; alpha == 0 returns x unchanged.
Tensor spectral_inject(const Tensor& x, const spectral::Band& omega, double alpha);

// s_i = W_s . mean_{t in U_i} h_{:,t}; h is d x T, w_s is r x d.
coh::SectionStack extract_sections(const Tensor& h, const coh::WindowCovering& cov,
                                   const Tensor& w_s);

// Full forward pass with a caller-fixed band (sequence length tc <= cfg.T;
// shorter sequences are zero-padded to cfg.T inside the spectral ops).
ForwardResult forward(const std::vector<int>& tokens, const Params& p,
                      const spectral::Band& omega);
// Convenience: selects the band from this sequence's own embedding spectrum
// under the config's band policy.
ForwardResult forward(const std::vector<int>& tokens, const Params& p);

struct LossBreakdown {
    double total = 0.0;
    double task = 0.0;     // mean next-token cross-entropy
    double coh = 0.0;      // lambda-weighted, summed over layers
    double coupling = 0.0; // eta-weighted, summed over layers
    double spec = 0.0;     // mu-weighted KL of the embedding spectrum
};

// Shared cross-entropy path (natural log, mean over positions); perplexity
// is defined as exp of this value.
double mean_cross_entropy(const Tensor& logits, const std::vector<int>& targets);

// Component breakdown for an already-computed forward result. total is the
// exact sum of the components.
LossBreakdown total_loss(const ForwardResult& fr, const std::vector<int>& targets,
                         const LossWeights& w, const ModelConfig& cfg);

// Loss and flat-parameter gradient for one example under a caller-fixed
// band. Accumulates into grad (caller zeroes it); grad.size() must equal
// the layout total.
LossBreakdown loss_and_grad(const std::vector<int>& inputs, const std::vector<int>& targets,
                            const Params& p, const spectral::Band& omega, const LossWeights& w,
                            std::vector<double>& grad);

struct TrainConfig {
    double lr = 3e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    double weight_decay = 0.0; // decoupled
};

struct AdamState {
    std::vector<double> m, v;
    std::size_t t = 0;
};

class TrainingDivergence : public std::runtime_error {
public:
    TrainingDivergence(const std::string& what, std::size_t step)
        : std::runtime_error(what), step(step) {}
    std::size_t step;
};

struct StepResult {
    LossBreakdown loss;   // batch means
    spectral::Band omega; // band selected from the batch-aggregate spectrum
};

// One optimizer step over a batch: band re-selected from the batch-aggregate
// embedding spectrum, per-example gradients reduced in a fixed order (so the
// result is independent of n_threads), Adam update with decoupled weight
// decay. Throws TrainingDivergence when the batch loss is non-finite.
StepResult train_step(const std::vector<std::vector<int>>& inputs,
                      const std::vector<std::vector<int>>& targets, Params& p, AdamState& opt,
                      const LossWeights& w, const TrainConfig& tc, std::size_t step_index,
                      std::size_t n_threads = 1);

struct HarmonizeDiagnostics {
    // [generated-token step][layer]
    std::vector<std::vector<double>> pre_energy;
    std::vector<std::vector<double>> post_energy;
};

// Greedy decoding with per-layer harmonization: sections are replaced by
// harmonize(s0, L, lambda, eta, P(g)) and broadcast back as the additive
// correction W_s'(s*_i - s0_i) / cover_count(t) before the next layer.
// Returns the max_new generated token ids. lambda = eta = 0 reproduces plain
// greedy decoding bitwise.
std::vector<int> infer_harmonized(const std::vector<int>& prompt, const Params& p,
                                  const LossWeights& w, std::size_t max_new,
                                  HarmonizeDiagnostics* diag = nullptr);

} // namespace model
} // namespace wavephase
