// cohomology.hpp - window coverings, overlap graphs, coboundary losses,
// harmonization solves, and the edge-space Hodge decomposition.

#pragma once

#include <array>
#include <cstddef>
#include <utility>
#include <vector>

#include "wavephase/sparse.hpp"
#include "wavephase/tensor.hpp"

namespace wavephase {
namespace coh {

// Overlapping index ranges [start, start+w) covering [0, T). The final
// window is clamped so position T-1 is always covered.
struct WindowCovering {
    std::size_t T = 0;
    std::size_t w = 0;
    std::size_t stride = 0;
    std::vector<std::pair<std::size_t, std::size_t>> windows; // [start, end)

    std::size_t count() const { return windows.size(); }
};

// One vertex per window; edges connect windows with intersecting ranges.
// laplacian = D - A (A weighted when overlap weighting is on).
struct OverlapGraph {
    std::size_t n_vertices = 0;
    std::vector<std::pair<std::size_t, std::size_t>> edges; // (i, j), i < j, sorted
    std::vector<double> edge_weights;                       // parallel to edges
    SparseSym laplacian;
};

// N x r matrix of local sections, row i = s_i.
struct SectionStack {
    std::size_t n = 0;
    std::size_t r = 0;
    std::vector<double> data; // row-major

    SectionStack() = default;
    SectionStack(std::size_t n_, std::size_t r_) : n(n_), r(r_), data(n_ * r_, 0.0) {}

    double* row(std::size_t i) { return data.data() + i * r; }
    const double* row(std::size_t i) const { return data.data() + i * r; }
};

struct HodgeComponents {
    std::vector<double> gradient;
    std::vector<double> curl;
    std::vector<double> harmonic;
};

struct LossGrad {
    double value = 0.0;
    SectionStack grad;
};

WindowCovering make_covering(std::size_t T, std::size_t w, std::size_t stride);

OverlapGraph overlap_graph(const WindowCovering& cov, bool weighted_by_overlap = false);

// Oriented edge matrix, row for edge (i,j) with i<j equal to s_j - s_i.
std::vector<double> coboundary(const OverlapGraph& g, const SectionStack& s);

// Unweighted coboundary energy sum_{(i,j) in E} ||s_j - s_i||^2.
double coboundary_energy(const OverlapGraph& g, const SectionStack& s);

// value = lambda * s'(L (x) I_r)s, grad = 2 lambda (L s) row-block-wise.
LossGrad coh_loss(const OverlapGraph& g, const SectionStack& s, double lambda);

// value = eta * sum_i ||s_i - t_i||^2, grad w.r.t. s = 2 eta (s - t).
LossGrad coupling_loss(const SectionStack& s, const SectionStack& t, double eta);

// Unique minimizer of ||s - s0||^2 + lambda s'(L (x) I_r)s + eta sum||s_i - t_i||^2,
// i.e. the column-wise CG solve of ((1+eta) I + lambda L) S = S0 + eta T.
// t may be empty when eta == 0.
SectionStack harmonize(const SectionStack& s0, const OverlapGraph& g, double lambda, double eta,
                       const SectionStack& t, double tol = 1e-12, std::size_t max_iter = 0);

// Orthogonal projection onto ker(L) (x) R^r: per connected component, every
// row replaced by the component mean.
SectionStack kernel_projection(const OverlapGraph& g, const SectionStack& s);

std::vector<std::vector<std::size_t>> connected_components(const OverlapGraph& g);

// All 3-cliques of g, each sorted ascending.
std::vector<std::array<std::size_t, 3>> find_triangles(const OverlapGraph& g);

// Orthogonal split of an oriented edge flow into im(d0) (gradient),
// im(d1') (curl, supported on the given 3-cliques) and the harmonic rest.
HodgeComponents hodge_edge_decomposition(const OverlapGraph& g,
                                         const std::vector<std::array<std::size_t, 3>>& triangles,
                                         const std::vector<double>& flow);

} // namespace coh
} // namespace wavephase
