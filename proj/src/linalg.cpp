#include "dpflow/linalg.hpp"

#include "dpflow/error.hpp"
#include "dpflow/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace dpflow::linalg {

void CsrMatrix::multiply(std::span<const double> x, std::span<double> y) const
{
    kernels::active().csr_spmv(rows, row_ptr.data(), cols.data(), vals.data(), x.data(), y.data());
}

std::vector<double> CsrMatrix::diagonal() const
{
    std::vector<double> d(rows, 0.0);
    for (std::size_t r = 0; r < rows; ++r)
        for (std::int32_t k = row_ptr[r]; k < row_ptr[r + 1]; ++k)
            if (static_cast<std::size_t>(cols[k]) == r)
                d[r] += vals[k];
    return d;
}

void TripletBuilder::add(std::size_t row, std::size_t col, double value)
{
    entries_.push_back({static_cast<std::int32_t>(row), static_cast<std::int32_t>(col), value});
}

CsrMatrix TripletBuilder::build() const
{
    std::vector<Entry> sorted = entries_;
    std::stable_sort(sorted.begin(), sorted.end(), [](const Entry& a, const Entry& b) {
        return a.row != b.row ? a.row < b.row : a.col < b.col;
    });

    CsrMatrix m;
    m.rows = rows_;
    m.row_ptr.assign(rows_ + 1, 0);
    for (std::size_t k = 0; k < sorted.size();) {
        std::size_t j = k;
        double sum = 0.0;
        while (j < sorted.size() && sorted[j].row == sorted[k].row && sorted[j].col == sorted[k].col)
            sum += sorted[j++].value;
        m.cols.push_back(sorted[k].col);
        m.vals.push_back(sum);
        ++m.row_ptr[sorted[k].row + 1];
        k = j;
    }
    for (std::size_t r = 0; r < rows_; ++r)
        m.row_ptr[r + 1] += m.row_ptr[r];
    return m;
}

double relative_residual(const CsrMatrix& a, std::span<const double> b, std::span<const double> x)
{
    std::vector<double> r(b.size());
    a.multiply(x, r);
    for (std::size_t i = 0; i < r.size(); ++i)
        r[i] = b[i] - r[i];
    const double bnorm = std::sqrt(kernels::dot(b, b));
    const double rnorm = std::sqrt(kernels::dot(r, r));
    return bnorm > 0.0 ? rnorm / bnorm : rnorm;
}

KrylovResult pcg(const CsrMatrix& a, std::span<const double> b, std::span<double> x,
                 double rel_tol, int max_iter)
{
    const std::size_t n = a.rows;
    KrylovResult result;
    std::vector<double> inv_diag = a.diagonal();
    for (double& d : inv_diag) {
        if (!(d > 0.0))
            throw SolverError("pcg: non-positive diagonal entry");
        d = 1.0 / d;
    }

    std::vector<double> r(n), z(n), p(n), q(n);
    a.multiply(x, r);
    for (std::size_t i = 0; i < n; ++i)
        r[i] = b[i] - r[i];

    const double bnorm = std::sqrt(kernels::dot(b, b));
    if (bnorm == 0.0) {
        std::fill(x.begin(), x.end(), 0.0);
        result.converged = true;
        return result;
    }

    double rnorm = std::sqrt(kernels::dot(r, r));
    result.relative_residual = rnorm / bnorm;
    if (result.relative_residual <= rel_tol) {
        result.converged = true;
        return result;
    }

    kernels::hadamard(inv_diag, r, z);
    std::copy(z.begin(), z.end(), p.begin());
    double rz = kernels::dot(r, z);

    for (int it = 1; it <= max_iter; ++it) {
        a.multiply(p, q);
        const double pq = kernels::dot(p, q);
        if (!(pq > 0.0))
            throw SolverError("pcg: loss of positive definiteness");
        const double step = rz / pq;
        kernels::axpy(step, p, x);
        kernels::axpy(-step, q, r);

        rnorm = std::sqrt(kernels::dot(r, r));
        result.iterations = it;
        result.relative_residual = rnorm / bnorm;
        if (result.relative_residual <= rel_tol) {
            result.converged = true;
            break;
        }

        kernels::hadamard(inv_diag, r, z);
        const double rz_next = kernels::dot(r, z);
        kernels::xpay(z, rz_next / rz, p);
        rz = rz_next;
    }

    // The recursive residual drifts from the true one on long runs; report the
    // true value.
    result.relative_residual = relative_residual(a, b, x);
    result.converged = result.relative_residual <= rel_tol * 10.0;
    return result;
}

BandedMatrix::BandedMatrix(std::size_t n, std::size_t lower, std::size_t upper)
    : n_(n), lower_(lower), upper_(upper), width_(lower + upper + 1), data_(n * width_, 0.0)
{
}

void BandedMatrix::set_zero()
{
    std::fill(data_.begin(), data_.end(), 0.0);
}

double& BandedMatrix::ref(std::size_t row, std::size_t col)
{
    return data_[row * width_ + (col + lower_ - row)];
}

void BandedMatrix::add(std::size_t row, std::size_t col, double value)
{
    if (col + lower_ < row || col > row + upper_)
        throw SolverError("banded matrix: entry (" + std::to_string(row) + ", " +
                          std::to_string(col) + ") outside the band");
    ref(row, col) += value;
}

double BandedMatrix::at(std::size_t row, std::size_t col) const
{
    if (col + lower_ < row || col > row + upper_)
        return 0.0;
    return data_[row * width_ + (col + lower_ - row)];
}

void BandedMatrix::solve_in_place(std::span<double> rhs)
{
    for (std::size_t k = 0; k < n_; ++k) {
        const double pivot = ref(k, k);
        if (!(std::abs(pivot) > 0.0) || !std::isfinite(pivot))
            throw SolverError("banded LU: zero pivot at row " + std::to_string(k));
        const std::size_t last_row = std::min(n_ - 1, k + lower_);
        const std::size_t last_col = std::min(n_ - 1, k + upper_);
        for (std::size_t i = k + 1; i <= last_row; ++i) {
            double& lik = ref(i, k);
            if (lik == 0.0)
                continue;
            lik /= pivot;
            for (std::size_t j = k + 1; j <= last_col; ++j)
                ref(i, j) -= lik * ref(k, j);
            rhs[i] -= lik * rhs[k];
        }
    }
    for (std::size_t kk = n_; kk-- > 0;) {
        double sum = rhs[kk];
        const std::size_t last_col = std::min(n_ - 1, kk + upper_);
        for (std::size_t j = kk + 1; j <= last_col; ++j)
            sum -= ref(kk, j) * rhs[j];
        rhs[kk] = sum / ref(kk, kk);
    }
}

} // namespace dpflow::linalg
