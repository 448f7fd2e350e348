// sparse.hpp - sparse symmetric matrices and the conjugate-gradient solver.

#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include "wavephase/tensor.hpp"

namespace wavephase {

// Symmetric sparse matrix stored as CSR over the full (both-triangle)
// entry set. from_triples verifies symmetry; graph-Laplacian construction
// is symmetric by construction.
class SparseSym {
public:
    SparseSym() = default;

    static SparseSym from_triples(std::size_t order,
                                  const std::vector<std::tuple<std::size_t, std::size_t, double>>& triples);

    // y = A x
    void apply(const double* x, double* y) const;

    std::size_t order() const { return n_; }
    double quadratic_form(const double* x) const; // x' A x

    const std::vector<std::size_t>& row_ptr() const { return row_ptr_; }
    const std::vector<std::size_t>& cols() const { return col_; }
    const std::vector<double>& values() const { return val_; }

    // Builds directly from per-row (col, value) lists; caller guarantees
    // symmetry (used by Laplacian assembly).
    static SparseSym from_rows(std::size_t order,
                               std::vector<std::vector<std::pair<std::size_t, double>>> rows);

private:
    std::size_t n_ = 0;
    std::vector<std::size_t> row_ptr_{0};
    std::vector<std::size_t> col_;
    std::vector<double> val_;
};

// Linear operator shift*I + scale*A with A optional. Covers the identity,
// plain sparse matrices, and the harmonization system (1+eta)I + lambda*L.
struct ShiftedOp {
    const SparseSym* matrix = nullptr;
    double scale = 1.0;
    double shift = 0.0;
    std::size_t order = 0;

    std::size_t size() const { return matrix ? matrix->order() : order; }
    void apply(const double* x, double* y) const;
};

class SolverFailure : public std::runtime_error {
public:
    SolverFailure(const std::string& what, double residual, std::size_t iterations)
        : std::runtime_error(what), final_residual(residual), iterations(iterations) {}
    double final_residual;
    std::size_t iterations;
};

struct CgResult {
    std::vector<double> x;
    std::size_t iterations = 0;
    double final_residual = 0.0; // ||Ax - b|| / ||b||
    bool converged = false;
};

// Plain CG from x0 = 0, relative residual stopping rule. Does not throw on
// non-convergence; used directly where singular-but-consistent systems are
// legitimate (Hodge projections).
CgResult cg_core(const ShiftedOp& A, const std::vector<double>& b, double tol, std::size_t max_iter);

// SPD-contract solve: returns x with ||Ax - b|| <= tol*||b||, throws
// SolverFailure carrying the final residual otherwise.
CgResult cg_solve(const ShiftedOp& A, const std::vector<double>& b, double tol, std::size_t max_iter);

} // namespace wavephase
