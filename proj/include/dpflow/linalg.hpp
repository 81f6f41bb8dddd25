#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace dpflow::linalg {

struct CsrMatrix {
    std::size_t rows = 0;
    std::vector<std::int32_t> row_ptr;
    std::vector<std::int32_t> cols;
    std::vector<double> vals;

    void multiply(std::span<const double> x, std::span<double> y) const;
    std::vector<double> diagonal() const;
};

// Accumulates (row, col, value) contributions; duplicates are summed in
// insertion order so assembly is deterministic.
class TripletBuilder {
public:
    explicit TripletBuilder(std::size_t rows) : rows_(rows) {}

    void add(std::size_t row, std::size_t col, double value);
    CsrMatrix build() const;

private:
    struct Entry {
        std::int32_t row;
        std::int32_t col;
        double value;
    };
    std::size_t rows_;
    std::vector<Entry> entries_;
};

struct KrylovResult {
    int iterations = 0;
    double relative_residual = 0.0;
    bool converged = false;
};

// Jacobi-preconditioned conjugate gradients for symmetric positive definite
// systems. x holds the initial guess on entry.
KrylovResult pcg(const CsrMatrix& a, std::span<const double> b, std::span<double> x,
                 double rel_tol, int max_iter);

// ||b - A x|| / ||b||, or ||A x|| when b vanishes.
double relative_residual(const CsrMatrix& a, std::span<const double> b, std::span<const double> x);

// Square band matrix with LU factorisation without pivoting. Used for the
// Newton Jacobians of the monotone finite volume schemes, which are
// M-matrices and factor stably in natural order.
class BandedMatrix {
public:
    BandedMatrix(std::size_t n, std::size_t lower, std::size_t upper);

    std::size_t size() const { return n_; }
    void set_zero();
    void add(std::size_t row, std::size_t col, double value);
    double at(std::size_t row, std::size_t col) const;

    // Factors in place and overwrites rhs with the solution.
    void solve_in_place(std::span<double> rhs);

private:
    double& ref(std::size_t row, std::size_t col);

    std::size_t n_;
    std::size_t lower_;
    std::size_t upper_;
    std::size_t width_;
    std::vector<double> data_;
};

} // namespace dpflow::linalg
