#pragma once

// Dense arithmetic kernels behind the autodiff ops.
//
// Every kernel has a portable scalar reference implementation and, on x86-64,
// an AVX2/FMA variant compiled in its own translation unit. The variant is
// picked once at startup from CPUID and can be overridden with the
// VLCL_ISA environment variable ("scalar" or "avx2") or set_isa().

#include <cstddef>
#include <string_view>

namespace vlcl::kernels {

enum class Isa { scalar, avx2 };

/// Arguments for bilinear sampling on channel-last image batches.
///
/// image: batch x in_h x in_w x channels
/// grid:  batch x out_h x out_w x 2, normalized (x, y) source coordinates in
///        [-1, 1] with -1/+1 on the centers of the border pixels.
/// Samples falling outside the image read zeros.
struct BilinearShape {
    std::size_t batch = 0;
    std::size_t in_h = 0;
    std::size_t in_w = 0;
    std::size_t channels = 0;
    std::size_t out_h = 0;
    std::size_t out_w = 0;
};

struct KernelTable {
    const char* name;

    // C = alpha * op(A) * op(B) + beta * C, row-major. op(X) = X or X^T.
    // op(A) is m x k, op(B) is k x n.
    void (*gemm)(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
                 double alpha, const double* a, std::size_t lda, const double* b,
                 std::size_t ldb, double beta, double* c, std::size_t ldc);

    // y = a * x + b * y
    void (*axpby)(std::size_t n, double a, const double* x, double b, double* y);

    // out = x + y, out = x * y (out may alias x or y)
    void (*add)(std::size_t n, const double* x, const double* y, double* out);
    void (*mul)(std::size_t n, const double* x, const double* y, double* out);

    double (*dot)(std::size_t n, const double* x, const double* y);

    // out: batch x out_h x out_w x channels
    void (*bilinear_forward)(const BilinearShape& s, const double* image, const double* grid,
                             double* out);

    // Accumulates d(out)/d(image)^T * grad_out into grad_image (if non-null) and
    // d(out)/d(grid)^T * grad_out into grad_grid (if non-null). Both must be
    // zero-initialized by the caller when a fresh gradient is wanted.
    void (*bilinear_backward)(const BilinearShape& s, const double* image, const double* grid,
                              const double* grad_out, double* grad_image, double* grad_grid);
};

const KernelTable& scalar_table();
#if defined(VLCL_HAVE_AVX2)
const KernelTable& avx2_table();
#endif

/// Whether the running CPU can execute the given variant.
bool cpu_supports(Isa isa);

/// The active kernel table. Thread-safe to read.
const KernelTable& active();

Isa active_isa();

/// Switches the active variant. Throws std::invalid_argument if the variant is
/// not compiled in or not supported by this CPU.
void set_isa(Isa isa);

Isa parse_isa(std::string_view name);
std::string_view isa_name(Isa isa);

/// RAII override of the active variant, restoring the previous one on exit.
class ScopedIsa {
public:
    explicit ScopedIsa(Isa isa) : previous_(active_isa()) { set_isa(isa); }
    ~ScopedIsa() { set_isa(previous_); }
    ScopedIsa(const ScopedIsa&) = delete;
    ScopedIsa& operator=(const ScopedIsa&) = delete;

private:
    Isa previous_;
};

}  // namespace vlcl::kernels
