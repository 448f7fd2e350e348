#include "wavephase/cohomology.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace wavephase {
namespace coh {

WindowCovering make_covering(std::size_t T, std::size_t w, std::size_t stride) {
    if (w < 1 || w > T)
        throw std::invalid_argument("make_covering: require 1 <= w <= T");
    if (stride < 1)
        throw std::invalid_argument("make_covering: require stride >= 1");
    if (stride > w)
        throw std::invalid_argument("make_covering: stride > w would leave gaps in the covering");

    WindowCovering cov;
    cov.T = T;
    cov.w = w;
    cov.stride = stride;
    for (std::size_t start = 0;; start += stride) {
        if (start + w >= T) {
            cov.windows.emplace_back(T - w, T); // clamped final window
            break;
        }
        cov.windows.emplace_back(start, start + w);
    }
    return cov;
}

OverlapGraph overlap_graph(const WindowCovering& cov, bool weighted_by_overlap) {
    OverlapGraph g;
    g.n_vertices = cov.count();
    const auto& win = cov.windows;
    for (std::size_t i = 0; i < win.size(); ++i) {
        for (std::size_t j = i + 1; j < win.size(); ++j) {
            const std::size_t lo = std::max(win[i].first, win[j].first);
            const std::size_t hi = std::min(win[i].second, win[j].second);
            if (lo < hi) {
                g.edges.emplace_back(i, j);
                g.edge_weights.push_back(
                    weighted_by_overlap ? static_cast<double>(hi - lo) / static_cast<double>(cov.w)
                                        : 1.0);
            }
        }
    }

    std::vector<std::vector<std::pair<std::size_t, double>>> rows(g.n_vertices);
    std::vector<double> degree(g.n_vertices, 0.0);
    for (std::size_t e = 0; e < g.edges.size(); ++e) {
        const auto [i, j] = g.edges[e];
        const double wgt = g.edge_weights[e];
        rows[i].emplace_back(j, -wgt);
        rows[j].emplace_back(i, -wgt);
        degree[i] += wgt;
        degree[j] += wgt;
    }
    for (std::size_t i = 0; i < g.n_vertices; ++i)
        rows[i].emplace_back(i, degree[i]);
    g.laplacian = SparseSym::from_rows(g.n_vertices, std::move(rows));
    return g;
}

namespace {
void require_matching(const OverlapGraph& g, const SectionStack& s, const char* who) {
    if (s.n != g.n_vertices)
        throw std::invalid_argument(std::string(who) + ": section count does not match graph order");
}
} // namespace

std::vector<double> coboundary(const OverlapGraph& g, const SectionStack& s) {
    require_matching(g, s, "coboundary");
    std::vector<double> delta(g.edges.size() * s.r, 0.0);
    for (std::size_t e = 0; e < g.edges.size(); ++e) {
        const auto [i, j] = g.edges[e];
        const double* si = s.row(i);
        const double* sj = s.row(j);
        double* out = delta.data() + e * s.r;
        for (std::size_t c = 0; c < s.r; ++c) out[c] = sj[c] - si[c];
    }
    return delta;
}

double coboundary_energy(const OverlapGraph& g, const SectionStack& s) {
    require_matching(g, s, "coboundary_energy");
    double acc = 0.0;
    for (const auto& [i, j] : g.edges) {
        const double* si = s.row(i);
        const double* sj = s.row(j);
        for (std::size_t c = 0; c < s.r; ++c) {
            const double d = sj[c] - si[c];
            acc += d * d;
        }
    }
    return acc;
}

LossGrad coh_loss(const OverlapGraph& g, const SectionStack& s, double lambda) {
    require_matching(g, s, "coh_loss");
    if (lambda < 0.0) throw std::invalid_argument("coh_loss: lambda must be >= 0");

    LossGrad out;
    out.grad = SectionStack(s.n, s.r);
    double energy = 0.0;
    for (std::size_t e = 0; e < g.edges.size(); ++e) {
        const auto [i, j] = g.edges[e];
        const double wgt = g.edge_weights[e];
        const double* si = s.row(i);
        const double* sj = s.row(j);
        double* gi = out.grad.row(i);
        double* gj = out.grad.row(j);
        for (std::size_t c = 0; c < s.r; ++c) {
            const double d = sj[c] - si[c];
            energy += wgt * d * d;
            gi[c] -= 2.0 * lambda * wgt * d; // = 2 lambda (L s) accumulated edge-wise
            gj[c] += 2.0 * lambda * wgt * d;
        }
    }
    out.value = lambda * energy;
    return out;
}

LossGrad coupling_loss(const SectionStack& s, const SectionStack& t, double eta) {
    if (s.n != t.n || s.r != t.r)
        throw std::invalid_argument("coupling_loss: shape mismatch between s and t");
    if (eta < 0.0) throw std::invalid_argument("coupling_loss: eta must be >= 0");

    LossGrad out;
    out.grad = SectionStack(s.n, s.r);
    double acc = 0.0;
    for (std::size_t i = 0; i < s.data.size(); ++i) {
        const double d = s.data[i] - t.data[i];
        acc += d * d;
        out.grad.data[i] = 2.0 * eta * d;
    }
    out.value = eta * acc;
    return out;
}

SectionStack harmonize(const SectionStack& s0, const OverlapGraph& g, double lambda, double eta,
                       const SectionStack& t, double tol, std::size_t max_iter) {
    require_matching(g, s0, "harmonize");
    if (lambda < 0.0 || eta < 0.0)
        throw std::invalid_argument("harmonize: lambda and eta must be >= 0");
    if (eta > 0.0 && (t.n != s0.n || t.r != s0.r))
        throw std::invalid_argument("harmonize: coupling target shape mismatch");
    if (lambda == 0.0 && eta == 0.0) return s0; // pure fidelity

    const std::size_t n = s0.n;
    if (max_iter == 0) max_iter = 20 * n + 200;

    ShiftedOp A;
    A.matrix = &g.laplacian;
    A.scale = lambda;
    A.shift = 1.0 + eta;

    SectionStack out(n, s0.r);
    std::vector<double> rhs(n), col(n);
    for (std::size_t c = 0; c < s0.r; ++c) {
        for (std::size_t i = 0; i < n; ++i) {
            rhs[i] = s0.row(i)[c];
            if (eta > 0.0) rhs[i] += eta * t.row(i)[c];
        }
        CgResult res = cg_solve(A, rhs, tol, max_iter);
        for (std::size_t i = 0; i < n; ++i) out.row(i)[c] = res.x[i];
    }
    return out;
}

std::vector<std::vector<std::size_t>> connected_components(const OverlapGraph& g) {
    std::vector<std::vector<std::size_t>> adj(g.n_vertices);
    for (const auto& [i, j] : g.edges) {
        adj[i].push_back(j);
        adj[j].push_back(i);
    }
    std::vector<int> comp(g.n_vertices, -1);
    std::vector<std::vector<std::size_t>> components;
    for (std::size_t v = 0; v < g.n_vertices; ++v) {
        if (comp[v] >= 0) continue;
        const int id = static_cast<int>(components.size());
        components.emplace_back();
        std::vector<std::size_t> stack{v};
        comp[v] = id;
        while (!stack.empty()) {
            const std::size_t u = stack.back();
            stack.pop_back();
            components[id].push_back(u);
            for (std::size_t nb : adj[u]) {
                if (comp[nb] < 0) {
                    comp[nb] = id;
                    stack.push_back(nb);
                }
            }
        }
    }
    for (auto& c : components) std::sort(c.begin(), c.end());
    return components;
}

SectionStack kernel_projection(const OverlapGraph& g, const SectionStack& s) {
    require_matching(g, s, "kernel_projection");
    SectionStack out(s.n, s.r);
    for (const auto& component : connected_components(g)) {
        std::vector<double> mean(s.r, 0.0);
        for (std::size_t v : component)
            for (std::size_t c = 0; c < s.r; ++c) mean[c] += s.row(v)[c];
        for (double& m : mean) m /= static_cast<double>(component.size());
        for (std::size_t v : component)
            for (std::size_t c = 0; c < s.r; ++c) out.row(v)[c] = mean[c];
    }
    return out;
}

std::vector<std::array<std::size_t, 3>> find_triangles(const OverlapGraph& g) {
    std::vector<std::vector<char>> adj(g.n_vertices, std::vector<char>(g.n_vertices, 0));
    for (const auto& [i, j] : g.edges) adj[i][j] = adj[j][i] = 1;
    std::vector<std::array<std::size_t, 3>> tris;
    for (std::size_t i = 0; i < g.n_vertices; ++i)
        for (std::size_t j = i + 1; j < g.n_vertices; ++j) {
            if (!adj[i][j]) continue;
            for (std::size_t k = j + 1; k < g.n_vertices; ++k)
                if (adj[i][k] && adj[j][k]) tris.push_back({i, j, k});
        }
    return tris;
}

namespace {

std::size_t edge_index(const OverlapGraph& g, std::size_t a, std::size_t b) {
    const auto key = std::make_pair(std::min(a, b), std::max(a, b));
    const auto it = std::lower_bound(g.edges.begin(), g.edges.end(), key);
    if (it == g.edges.end() || *it != key)
        throw std::invalid_argument("hodge: triangle side is not an edge of the graph");
    return static_cast<std::size_t>(it - g.edges.begin());
}

} // namespace

HodgeComponents hodge_edge_decomposition(const OverlapGraph& g,
                                         const std::vector<std::array<std::size_t, 3>>& triangles,
                                         const std::vector<double>& flow) {
    const std::size_t n_edges = g.edges.size();
    if (flow.size() != n_edges)
        throw std::invalid_argument("hodge: flow length must equal the edge count");

    HodgeComponents out;
    out.gradient.assign(n_edges, 0.0);
    out.curl.assign(n_edges, 0.0);
    out.harmonic = flow;
    if (n_edges == 0) return out;

    // gradient part: d0 y with L0 y = d0' f (consistent singular system, CG from 0)
    {
        std::vector<double> rhs(g.n_vertices, 0.0);
        for (std::size_t e = 0; e < n_edges; ++e) {
            const auto [i, j] = g.edges[e];
            rhs[i] -= flow[e];
            rhs[j] += flow[e];
        }
        ShiftedOp L0;
        L0.matrix = &g.laplacian;
        CgResult res = cg_core(L0, rhs, 1e-13, 50 * g.n_vertices + 200);
        for (std::size_t e = 0; e < n_edges; ++e) {
            const auto [i, j] = g.edges[e];
            out.gradient[e] = res.x[j] - res.x[i];
        }
    }

    // curl part: d1' z with (d1 d1') z = d1 f.
    // Triangle (i<j<k) has boundary +[ij] +[jk] -[ik] in the i<j edge orientation.
    if (!triangles.empty()) {
        const std::size_t n_tri = triangles.size();
        std::vector<std::array<std::size_t, 3>> tri_edges(n_tri);
        for (std::size_t t = 0; t < n_tri; ++t) {
            auto [i, j, k] = triangles[t];
            if (!(i < j && j < k))
                throw std::invalid_argument("hodge: triangle vertices must be sorted ascending");
            tri_edges[t] = {edge_index(g, i, j), edge_index(g, j, k), edge_index(g, i, k)};
        }
        auto apply_d1 = [&](const double* f, double* z) {
            for (std::size_t t = 0; t < n_tri; ++t)
                z[t] = f[tri_edges[t][0]] + f[tri_edges[t][1]] - f[tri_edges[t][2]];
        };
        auto apply_d1t = [&](const double* z, double* f) {
            std::fill(f, f + n_edges, 0.0);
            for (std::size_t t = 0; t < n_tri; ++t) {
                f[tri_edges[t][0]] += z[t];
                f[tri_edges[t][1]] += z[t];
                f[tri_edges[t][2]] -= z[t];
            }
        };
        // assemble d1 d1' densely; triangle counts are small
        std::vector<std::tuple<std::size_t, std::size_t, double>> triples;
        std::vector<double> unit(n_tri, 0.0), fcol(n_edges, 0.0), col(n_tri, 0.0);
        for (std::size_t t = 0; t < n_tri; ++t) {
            std::fill(unit.begin(), unit.end(), 0.0);
            unit[t] = 1.0;
            apply_d1t(unit.data(), fcol.data());
            apply_d1(fcol.data(), col.data());
            for (std::size_t u = 0; u < n_tri; ++u)
                if (col[u] != 0.0) triples.emplace_back(u, t, col[u]);
        }
        SparseSym up = SparseSym::from_triples(n_tri, triples);
        std::vector<double> rhs(n_tri, 0.0);
        apply_d1(flow.data(), rhs.data());
        ShiftedOp L1;
        L1.matrix = &up;
        CgResult res = cg_core(L1, rhs, 1e-13, 50 * n_tri + 200);
        apply_d1t(res.x.data(), out.curl.data());
    }

    for (std::size_t e = 0; e < n_edges; ++e)
        out.harmonic[e] = flow[e] - out.gradient[e] - out.curl[e];
    return out;
}

} // namespace coh
} // namespace wavephase
