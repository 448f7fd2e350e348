#include "wavephase/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "wavephase/model.hpp"

namespace wavephase {
namespace metrics {

nlohmann::json report_json(const EvalReport& r) {
    return nlohmann::json{{"perplexity", r.perplexity},
                          {"consistency", r.consistency},
                          {"zipf_deviation", r.zipf_deviation},
                          {"energy_retention", r.energy_retention},
                          {"coboundary_energy_per_layer", r.coboundary_energy_per_layer}};
}

double perplexity(const Tensor& logits, const std::vector<int>& targets) {
    return std::exp(model::mean_cross_entropy(logits, targets));
}

double consistency_score(const coh::SectionStack& s,
                         const std::vector<std::pair<std::size_t, std::size_t>>& pairs,
                         double tau) {
    if (!(tau > 0.0) || tau > 1.0)
        throw std::invalid_argument("consistency_score: tau must be in (0, 1]");
    if (pairs.empty()) throw std::invalid_argument("consistency_score: empty pair set");

    std::vector<double> norms(s.n);
    for (std::size_t i = 0; i < s.n; ++i) {
        double acc = 0.0;
        const double* row = s.row(i);
        for (std::size_t j = 0; j < s.r; ++j) acc += row[j] * row[j];
        norms[i] = std::sqrt(acc);
    }

    std::size_t agree = 0;
    for (const auto& [i, j] : pairs) {
        if (i >= s.n || j >= s.n)
            throw std::invalid_argument("consistency_score: pair index out of range");
        if (norms[i] == 0.0 || norms[j] == 0.0) {
            if (norms[i] == 0.0 && norms[j] == 0.0) ++agree;
            continue;
        }
        double dot = 0.0;
        const double* si = s.row(i);
        const double* sj = s.row(j);
        for (std::size_t k = 0; k < s.r; ++k) dot += si[k] * sj[k];
        if (dot / (norms[i] * norms[j]) >= tau) ++agree;
    }
    return static_cast<double>(agree) / static_cast<double>(pairs.size());
}

std::pair<double, double> zipf_deviation(const spectral::PowerSpectrum& before,
                                         const spectral::PowerSpectrum& after,
                                         const spectral::Band& omega) {
    const double b0 = spectral::zipf_fit(before).beta_hat;
    const double b1 = spectral::zipf_fit(after).beta_hat;
    if (!after.has_probabilities)
        throw std::invalid_argument("zipf_deviation: `after` has no probabilities");
    double retention = 0.0;
    for (std::size_t k : omega.indices) {
        if (k >= after.T())
            throw std::invalid_argument("zipf_deviation: band index out of range");
        retention += after.probabilities[k];
    }
    return {std::fabs(b1 - b0), retention};
}

namespace {

const char* const kRequired[] = {"full", "lambda0", "mu0", "eta0"};

std::string fmt(double v) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

std::string fmt_delta(double v, double base) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "%.6g (%+.6g)", v, v - base);
    return buf;
}

} // namespace

AblationReport ablation_report(const std::map<std::string, EvalReport>& runs) {
    for (const char* need : kRequired)
        if (runs.find(need) == runs.end())
            throw std::invalid_argument(std::string("ablation_report: missing required label '") +
                                        need + "'");

    AblationReport out;
    for (const char* need : kRequired) out.labels.push_back(need);
    for (const auto& [label, _] : runs)
        if (std::find(out.labels.begin(), out.labels.end(), label) == out.labels.end())
            out.labels.push_back(label);
    for (const std::string& label : out.labels) out.runs.push_back(runs.at(label));

    const EvalReport& full = runs.at("full");
    nlohmann::json jruns = nlohmann::json::object();
    nlohmann::json jdeltas = nlohmann::json::object();
    for (std::size_t i = 0; i < out.labels.size(); ++i) {
        const std::string& label = out.labels[i];
        const EvalReport& r = out.runs[i];
        jruns[label] = report_json(r);
        if (label == "full") continue;
        nlohmann::json d{{"perplexity", r.perplexity - full.perplexity},
                         {"consistency", r.consistency - full.consistency},
                         {"zipf_deviation", r.zipf_deviation - full.zipf_deviation},
                         {"energy_retention", r.energy_retention - full.energy_retention}};
        if (r.coboundary_energy_per_layer.size() == full.coboundary_energy_per_layer.size()) {
            std::vector<double> dc(r.coboundary_energy_per_layer.size());
            for (std::size_t l = 0; l < dc.size(); ++l)
                dc[l] = r.coboundary_energy_per_layer[l] - full.coboundary_energy_per_layer[l];
            d["coboundary_energy_per_layer"] = dc;
        }
        jdeltas[label] = std::move(d);
    }
    out.json = nlohmann::json{{"runs", std::move(jruns)}, {"deltas_vs_full", std::move(jdeltas)}};

    // aligned table: one column per label, deltas in parentheses
    std::size_t n_layers = 0;
    for (const EvalReport& r : out.runs)
        n_layers = std::max(n_layers, r.coboundary_energy_per_layer.size());

    struct Row {
        std::string name;
        std::vector<std::string> cells;
    };
    std::vector<Row> rows;
    auto add_row = [&](const std::string& name, auto getter) {
        Row row{name, {}};
        for (std::size_t i = 0; i < out.labels.size(); ++i) {
            const EvalReport& r = out.runs[i];
            const double v = getter(r);
            row.cells.push_back(out.labels[i] == "full" ? fmt(v) : fmt_delta(v, getter(full)));
        }
        rows.push_back(std::move(row));
    };
    add_row("perplexity", [](const EvalReport& r) { return r.perplexity; });
    add_row("consistency", [](const EvalReport& r) { return r.consistency; });
    add_row("zipf_deviation", [](const EvalReport& r) { return r.zipf_deviation; });
    add_row("energy_retention", [](const EvalReport& r) { return r.energy_retention; });
    for (std::size_t l = 0; l < n_layers; ++l) {
        Row row{"coboundary[" + std::to_string(l) + "]", {}};
        for (std::size_t i = 0; i < out.labels.size(); ++i) {
            const EvalReport& r = out.runs[i];
            if (l >= r.coboundary_energy_per_layer.size()) {
                row.cells.push_back("-");
            } else if (out.labels[i] == "full" ||
                       l >= full.coboundary_energy_per_layer.size()) {
                row.cells.push_back(fmt(r.coboundary_energy_per_layer[l]));
            } else {
                row.cells.push_back(fmt_delta(r.coboundary_energy_per_layer[l],
                                              full.coboundary_energy_per_layer[l]));
            }
        }
        rows.push_back(std::move(row));
    }

    std::vector<std::size_t> widths{16};
    for (const Row& row : rows) widths[0] = std::max(widths[0], row.name.size());
    for (std::size_t i = 0; i < out.labels.size(); ++i) {
        std::size_t w = out.labels[i].size();
        for (const Row& row : rows) w = std::max(w, row.cells[i].size());
        widths.push_back(w);
    }
    auto pad = [](const std::string& s, std::size_t w) {
        return s + std::string(w - s.size(), ' ');
    };
    std::string text = pad("metric", widths[0]);
    for (std::size_t i = 0; i < out.labels.size(); ++i)
        text += "  " + pad(out.labels[i], widths[i + 1]);
    text += '\n';
    for (const Row& row : rows) {
        text += pad(row.name, widths[0]);
        for (std::size_t i = 0; i < row.cells.size(); ++i)
            text += "  " + pad(row.cells[i], widths[i + 1]);
        text += '\n';
    }
    out.text = std::move(text);
    return out;
}

} // namespace metrics
} // namespace wavephase
