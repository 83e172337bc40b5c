#pragma once

// Dense double-precision kernels used by the trainers and metrics.
//
// Every kernel has a scalar reference implementation plus vectorized variants
// (AVX2+FMA on x86-64, NEON on AArch64). The active variant is chosen once at
// runtime from CPU capabilities and can be pinned with set_isa() or the
// CSOEVAL_ISA environment variable ("scalar", "avx2", "neon").
//
// Vectorized reductions reorder additions, so results agree with the scalar
// reference to rounding, not bitwise. Within a process the choice is fixed,
// which keeps every pipeline bitwise reproducible run to run on one machine.

#include <cstddef>
#include <span>
#include <string_view>

namespace csoeval::kernels {

enum class Isa { scalar, avx2, neon };

std::string_view isa_name(Isa isa);

/// Best variant the host CPU supports.
Isa detect_isa();

/// Variant currently in use by the dispatching entry points below.
Isa active_isa();

/// Pins the dispatching entry points to `isa`. Returns false (and leaves the
/// selection unchanged) if the host cannot run it.
bool set_isa(Isa isa);

bool isa_supported(Isa isa);

/// Sum of a[i] * b[i].
double dot(std::span<const double> a, std::span<const double> b);

/// y[i] += alpha * x[i].
void axpy(double alpha, std::span<const double> x, std::span<double> y);

/// Sum of (a[i] - b[i])^2.
double sum_sq_diff(std::span<const double> a, std::span<const double> b);

/// y = W x + bias, W row-major [rows x cols]. bias may be empty.
void gemv(std::span<const double> w, std::size_t rows, std::size_t cols,
          std::span<const double> x, std::span<const double> bias,
          std::span<double> y);

/// Accumulates the upper triangle of G += Z^T Z for a block of rows stored
/// column-major: zt is [cols x rows] (column c of Z is zt[c*rows ...]).
/// G is [cols x cols] row-major; only entries with j >= i are written.
void gram_upper(std::span<const double> zt, std::size_t cols, std::size_t rows, std::span<double> gram);

// Direct access to each variant, used by the equivalence tests.
namespace scalar {
double dot(const double* a, const double* b, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
double sum_sq_diff(const double* a, const double* b, std::size_t n);
}  // namespace scalar

namespace avx2 {
double dot(const double* a, const double* b, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
double sum_sq_diff(const double* a, const double* b, std::size_t n);
}  // namespace avx2

namespace neon {
double dot(const double* a, const double* b, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
double sum_sq_diff(const double* a, const double* b, std::size_t n);
}  // namespace neon

}  // namespace csoeval::kernels
