#include "dpflow/kernels.hpp"

#include <cstdlib>
#include <string>

namespace dpflow::kernels {
namespace {

Isa detect()
{
    if (const char* env = std::getenv("DPFLOW_SIMD"); env != nullptr && std::string(env) == "scalar")
        return Isa::scalar;
    if (avx2_table() != nullptr && cpu_has_avx2())
        return Isa::avx2;
    return Isa::scalar;
}

} // namespace

Isa active_isa()
{
    static const Isa isa = detect();
    return isa;
}

const KernelTable& table_for(Isa isa)
{
    if (isa == Isa::avx2 && avx2_table() != nullptr)
        return *avx2_table();
    return scalar_table();
}

const KernelTable& active()
{
    static const KernelTable& table = table_for(active_isa());
    return table;
}

std::string_view isa_name(Isa isa)
{
    return isa == Isa::avx2 ? "avx2" : "scalar";
}

} // namespace dpflow::kernels
