#include "wavephase/sparse.hpp"

#include <algorithm>
#include <cmath>

namespace wavephase {

SparseSym SparseSym::from_triples(
    std::size_t order,
    const std::vector<std::tuple<std::size_t, std::size_t, double>>& triples) {
    std::vector<std::vector<std::pair<std::size_t, double>>> rows(order);
    for (const auto& [i, j, v] : triples) {
        if (i >= order || j >= order)
            throw std::invalid_argument("SparseSym: triple index out of range");
        rows[i].emplace_back(j, v);
    }
    // symmetry check: sorted (col,val) list of row i must mirror column i
    auto sorted = rows;
    for (auto& r : sorted) std::sort(r.begin(), r.end());
    for (std::size_t i = 0; i < order; ++i) {
        for (const auto& [j, v] : sorted[i]) {
            const auto& back = sorted[j];
            auto it = std::lower_bound(back.begin(), back.end(), std::make_pair(i, -1e308));
            if (it == back.end() || it->first != i || it->second != v)
                throw std::invalid_argument("SparseSym: entries are not symmetric");
        }
    }
    return from_rows(order, std::move(sorted));
}

SparseSym SparseSym::from_rows(std::size_t order,
                               std::vector<std::vector<std::pair<std::size_t, double>>> rows) {
    SparseSym m;
    m.n_ = order;
    m.row_ptr_.assign(1, 0);
    for (std::size_t i = 0; i < order; ++i) {
        auto& r = rows[i];
        std::sort(r.begin(), r.end());
        for (const auto& [j, v] : r) {
            m.col_.push_back(j);
            m.val_.push_back(v);
        }
        m.row_ptr_.push_back(m.col_.size());
    }
    return m;
}

void SparseSym::apply(const double* x, double* y) const {
    for (std::size_t i = 0; i < n_; ++i) {
        double acc = 0.0;
        for (std::size_t p = row_ptr_[i]; p < row_ptr_[i + 1]; ++p)
            acc += val_[p] * x[col_[p]];
        y[i] = acc;
    }
}

double SparseSym::quadratic_form(const double* x) const {
    double acc = 0.0;
    for (std::size_t i = 0; i < n_; ++i) {
        double row = 0.0;
        for (std::size_t p = row_ptr_[i]; p < row_ptr_[i + 1]; ++p)
            row += val_[p] * x[col_[p]];
        acc += x[i] * row;
    }
    return acc;
}

void ShiftedOp::apply(const double* x, double* y) const {
    const std::size_t n = size();
    if (matrix) {
        matrix->apply(x, y);
        for (std::size_t i = 0; i < n; ++i) y[i] = shift * x[i] + scale * y[i];
    } else {
        for (std::size_t i = 0; i < n; ++i) y[i] = shift * x[i];
    }
}

namespace {
double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}
} // namespace

CgResult cg_core(const ShiftedOp& A, const std::vector<double>& b, double tol, std::size_t max_iter) {
    const std::size_t n = A.size();
    if (b.size() != n) throw std::invalid_argument("cg: rhs size mismatch");
    if (tol <= 0.0) throw std::invalid_argument("cg: tol must be positive");

    CgResult res;
    res.x.assign(n, 0.0);
    const double b_norm = std::sqrt(dot(b, b));
    if (b_norm == 0.0) {
        res.converged = true;
        return res;
    }

    std::vector<double> r = b; // r = b - A*0
    std::vector<double> p = r;
    std::vector<double> q(n, 0.0);
    double rr = dot(r, r);

    for (std::size_t it = 0; it < max_iter; ++it) {
        if (std::sqrt(rr) <= tol * b_norm) break;
        A.apply(p.data(), q.data());
        const double pq = dot(p, q);
        if (pq <= 0.0) break; // lost positive definiteness numerically
        const double alpha = rr / pq;
        for (std::size_t i = 0; i < n; ++i) {
            res.x[i] += alpha * p[i];
            r[i] -= alpha * q[i];
        }
        const double rr_new = dot(r, r);
        const double beta = rr_new / rr;
        rr = rr_new;
        for (std::size_t i = 0; i < n; ++i) p[i] = r[i] + beta * p[i];
        ++res.iterations;
    }

    // report the true residual, not the recurrence's
    A.apply(res.x.data(), q.data());
    double rn = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double di = q[i] - b[i];
        rn += di * di;
    }
    res.final_residual = std::sqrt(rn) / b_norm;
    res.converged = res.final_residual <= tol;
    return res;
}

CgResult cg_solve(const ShiftedOp& A, const std::vector<double>& b, double tol, std::size_t max_iter) {
    CgResult res = cg_core(A, b, tol, max_iter);
    if (!res.converged)
        throw SolverFailure("cg_solve: no convergence within max_iter (relative residual " +
                                std::to_string(res.final_residual) + ")",
                            res.final_residual, res.iterations);
    return res;
}

} // namespace wavephase
