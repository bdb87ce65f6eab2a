#include <atomic>
#include <cstdlib>
#include <stdexcept>
#include <string>

#include "vlcl/kernels.hpp"

namespace vlcl::kernels {
namespace {

Isa detect() {
    if (const char* env = std::getenv("VLCL_ISA"); env != nullptr && *env != '\0') {
        const Isa requested = parse_isa(env);
        if (cpu_supports(requested)) return requested;
    }
    return cpu_supports(Isa::avx2) ? Isa::avx2 : Isa::scalar;
}

std::atomic<Isa>& current() {
    static std::atomic<Isa> isa{detect()};
    return isa;
}

}  // namespace

bool cpu_supports(Isa isa) {
    switch (isa) {
        case Isa::scalar:
            return true;
        case Isa::avx2:
#if defined(VLCL_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
            __builtin_cpu_init();
            return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
            return false;
#endif
    }
    return false;
}

const KernelTable& active() {
#if defined(VLCL_HAVE_AVX2)
    if (current().load(std::memory_order_relaxed) == Isa::avx2) return avx2_table();
#endif
    return scalar_table();
}

Isa active_isa() { return current().load(std::memory_order_relaxed); }

void set_isa(Isa isa) {
    if (!cpu_supports(isa)) {
        throw std::invalid_argument("kernel variant '" + std::string(isa_name(isa)) +
                                    "' is not available on this build/CPU");
    }
    current().store(isa, std::memory_order_relaxed);
}

Isa parse_isa(std::string_view name) {
    if (name == "scalar") return Isa::scalar;
    if (name == "avx2") return Isa::avx2;
    throw std::invalid_argument("unknown kernel variant '" + std::string(name) + "'");
}

std::string_view isa_name(Isa isa) { return isa == Isa::avx2 ? "avx2" : "scalar"; }

}  // namespace vlcl::kernels
