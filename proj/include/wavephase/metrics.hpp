// metrics.hpp - perplexity, overlap consistency, Zipf deviation / energy
// retention, and the multi-configuration ablation report.

#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "wavephase/cohomology.hpp"
#include "wavephase/spectral.hpp"
#include "wavephase/tensor.hpp"

namespace wavephase {
namespace metrics {

struct EvalReport {
    double perplexity = 1.0;        // >= 1
    double consistency = 1.0;       // in [0, 1]
    double zipf_deviation = 0.0;    // >= 0
    double energy_retention = 1.0;  // in [0, 1]
    std::vector<double> coboundary_energy_per_layer;
};

// Stable JSON field names: perplexity, consistency, zipf_deviation,
// energy_retention, coboundary_energy_per_layer.
nlohmann::json report_json(const EvalReport& r);

// exp(mean next-token cross-entropy); shares the model's cross-entropy path.
double perplexity(const Tensor& logits, const std::vector<int>& targets);

// Fraction of pairs (i, j) with cosine(s_i, s_j) >= tau. Zero sections agree
// only with zero sections. Requires 0 < tau <= 1 and a nonempty pair list.
double consistency_score(const coh::SectionStack& s,
                         const std::vector<std::pair<std::size_t, std::size_t>>& pairs,
                         double tau);

// (|beta_hat(after) - beta_hat(before)|, sum_{n in omega} p_n of `after`).
std::pair<double, double> zipf_deviation(const spectral::PowerSpectrum& before,
                                         const spectral::PowerSpectrum& after,
                                         const spectral::Band& omega);

// Side-by-side comparison of per-configuration evaluation reports. Requires
// at least the labels {full, lambda0, mu0, eta0}; throws an invalid_argument
// naming the first missing one. Rows are copied verbatim; deltas are taken
// against `full` (per-layer deltas only when the layer counts match).
struct AblationReport {
    std::vector<std::string> labels; // full, lambda0, mu0, eta0, then extras
    std::vector<EvalReport> runs;    // parallel to labels
    nlohmann::json json;             // {"runs": {...}, "deltas_vs_full": {...}}
    std::string text;                // aligned plain-text table
};

AblationReport ablation_report(const std::map<std::string, EvalReport>& runs);

} // namespace metrics
} // namespace wavephase
