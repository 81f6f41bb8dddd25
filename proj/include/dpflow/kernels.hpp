#pragma once
// Data-parallel inner loops used by the Krylov solvers.
//
// Every kernel has a portable scalar reference and an AVX2/FMA variant. The
// variant is picked once per process from the CPU features; setting
// DPFLOW_SIMD=scalar in the environment forces the reference path.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>

namespace dpflow::kernels {

enum class Isa { scalar, avx2 };

struct KernelTable {
    double (*dot)(const double* x, const double* y, std::size_t n);
    // y += a * x
    void (*axpy)(double a, const double* x, double* y, std::size_t n);
    // y = x + a * y
    void (*xpay)(const double* x, double a, double* y, std::size_t n);
    // out = a .* b
    void (*hadamard)(const double* a, const double* b, double* out, std::size_t n);
    // y = A x for a CSR matrix with 32-bit column indices
    void (*csr_spmv)(std::size_t rows, const std::int32_t* row_ptr, const std::int32_t* cols,
                     const double* vals, const double* x, double* y);
};

const KernelTable& scalar_table();
// Null when the binary was built without AVX2 support.
const KernelTable* avx2_table();

bool cpu_has_avx2();
Isa active_isa();
const KernelTable& active();
const KernelTable& table_for(Isa isa);
std::string_view isa_name(Isa isa);

inline double dot(std::span<const double> x, std::span<const double> y)
{
    return active().dot(x.data(), y.data(), x.size());
}

inline void axpy(double a, std::span<const double> x, std::span<double> y)
{
    active().axpy(a, x.data(), y.data(), x.size());
}

inline void xpay(std::span<const double> x, double a, std::span<double> y)
{
    active().xpay(x.data(), a, y.data(), x.size());
}

inline void hadamard(std::span<const double> a, std::span<const double> b, std::span<double> out)
{
    active().hadamard(a.data(), b.data(), out.data(), a.size());
}

} // namespace dpflow::kernels
