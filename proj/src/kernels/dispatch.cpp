#include "csoeval/kernels.hpp"

#include <atomic>
#include <cassert>
#include <cstdlib>
#include <string>

namespace csoeval::kernels {

namespace {

struct Table {
    double (*dot)(const double*, const double*, std::size_t);
    void (*axpy)(double, const double*, double*, std::size_t);
    double (*sum_sq_diff)(const double*, const double*, std::size_t);
};

constexpr Table kScalar{scalar::dot, scalar::axpy, scalar::sum_sq_diff};
constexpr Table kAvx2{avx2::dot, avx2::axpy, avx2::sum_sq_diff};
constexpr Table kNeon{neon::dot, neon::axpy, neon::sum_sq_diff};

const Table* table_for(Isa isa) {
    switch (isa) {
        case Isa::avx2: return &kAvx2;
        case Isa::neon: return &kNeon;
        case Isa::scalar: break;
    }
    return &kScalar;
}

Isa initial_isa() {
    Isa isa = detect_isa();
    if (const char* env = std::getenv("CSOEVAL_ISA")) {
        const std::string want(env);
        if (want == "scalar") isa = Isa::scalar;
        else if (want == "avx2" && isa_supported(Isa::avx2)) isa = Isa::avx2;
        else if (want == "neon" && isa_supported(Isa::neon)) isa = Isa::neon;
    }
    return isa;
}

std::atomic<Isa>& current() {
    static std::atomic<Isa> isa{initial_isa()};
    return isa;
}

const Table& active() { return *table_for(current().load(std::memory_order_relaxed)); }

}  // namespace

std::string_view isa_name(Isa isa) {
    switch (isa) {
        case Isa::avx2: return "avx2";
        case Isa::neon: return "neon";
        case Isa::scalar: break;
    }
    return "scalar";
}

bool isa_supported(Isa isa) {
    switch (isa) {
        case Isa::scalar: return true;
        case Isa::avx2:
#if defined(__x86_64__) || defined(_M_X64)
            return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
            return false;
#endif
        case Isa::neon:
#if defined(__aarch64__) || defined(_M_ARM64)
            return true;
#else
            return false;
#endif
    }
    return false;
}

Isa detect_isa() {
    if (isa_supported(Isa::avx2)) return Isa::avx2;
    if (isa_supported(Isa::neon)) return Isa::neon;
    return Isa::scalar;
}

Isa active_isa() { return current().load(std::memory_order_relaxed); }

bool set_isa(Isa isa) {
    if (!isa_supported(isa)) return false;
    current().store(isa, std::memory_order_relaxed);
    return true;
}

double dot(std::span<const double> a, std::span<const double> b) {
    assert(a.size() == b.size());
    return active().dot(a.data(), b.data(), a.size());
}

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
    assert(x.size() == y.size());
    active().axpy(alpha, x.data(), y.data(), x.size());
}

double sum_sq_diff(std::span<const double> a, std::span<const double> b) {
    assert(a.size() == b.size());
    return active().sum_sq_diff(a.data(), b.data(), a.size());
}

void gemv(std::span<const double> w, std::size_t rows, std::size_t cols,
          std::span<const double> x, std::span<const double> bias, std::span<double> y) {
    assert(w.size() == rows * cols && x.size() == cols && y.size() == rows);
    const Table& t = active();
    for (std::size_t r = 0; r < rows; ++r) {
        const double v = t.dot(w.data() + r * cols, x.data(), cols);
        y[r] = bias.empty() ? v : v + bias[r];
    }
}

void gram_upper(std::span<const double> zt, std::size_t cols, std::size_t rows, std::span<double> gram) {
    assert(zt.size() == cols * rows && gram.size() == cols * cols);
    const Table& t = active();
    for (std::size_t i = 0; i < cols; ++i) {
        const double* zi = zt.data() + i * rows;
        double* g = gram.data() + i * cols;
        for (std::size_t j = i; j < cols; ++j) g[j] += t.dot(zi, zt.data() + j * rows, rows);
    }
}

}  // namespace csoeval::kernels
