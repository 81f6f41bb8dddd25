#include "dpflow/kernels.hpp"

namespace dpflow::kernels {
namespace {

double dot_scalar(const double* x, const double* y, std::size_t n)
{
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        sum += x[i] * y[i];
    return sum;
}

void axpy_scalar(double a, const double* x, double* y, std::size_t n)
{
    for (std::size_t i = 0; i < n; ++i)
        y[i] += a * x[i];
}

void xpay_scalar(const double* x, double a, double* y, std::size_t n)
{
    for (std::size_t i = 0; i < n; ++i)
        y[i] = x[i] + a * y[i];
}

void hadamard_scalar(const double* a, const double* b, double* out, std::size_t n)
{
    for (std::size_t i = 0; i < n; ++i)
        out[i] = a[i] * b[i];
}

void csr_spmv_scalar(std::size_t rows, const std::int32_t* row_ptr, const std::int32_t* cols,
                     const double* vals, const double* x, double* y)
{
    for (std::size_t r = 0; r < rows; ++r) {
        double sum = 0.0;
        for (std::int32_t k = row_ptr[r]; k < row_ptr[r + 1]; ++k)
            sum += vals[k] * x[cols[k]];
        y[r] = sum;
    }
}

} // namespace

const KernelTable& scalar_table()
{
    static const KernelTable table{dot_scalar, axpy_scalar, xpay_scalar, hadamard_scalar,
                                   csr_spmv_scalar};
    return table;
}

} // namespace dpflow::kernels
