#include "monrec/kernels.hpp"

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <cstring>

namespace monrec::kernels {

namespace {

std::atomic<bool>& parallel_flag() {
    static std::atomic<bool> flag = [] {
        const char* env = std::getenv("MONREC_SERIAL_KERNELS");
        return !(env && env[0] == '1');
    }();
    return flag;
}

inline void zero_or_keep(double* c, std::size_t len, bool accumulate) {
    if (!accumulate) std::memset(c, 0, len * sizeof(double));
}

// One output row of C = A*B, accumulation order fixed by ascending l.
inline void nn_row(const double* a, const double* b, double* c,
                   std::size_t i, std::size_t k, std::size_t n) {
    const double* arow = a + i * k;
    double* crow = c + i * n;
    for (std::size_t l = 0; l < k; ++l) {
        const double av = arow[l];
        if (av == 0.0) continue;
        const double* brow = b + l * n;
        for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
}

inline void nt_row(const double* a, const double* b, double* c,
                   std::size_t i, std::size_t k, std::size_t n) {
    const double* arow = a + i * k;
    double* crow = c + i * n;
    for (std::size_t j = 0; j < n; ++j) {
        const double* brow = b + j * k;
        double acc = 0.0;
        for (std::size_t l = 0; l < k; ++l) acc += arow[l] * brow[l];
        crow[j] += acc;
    }
}

inline void tn_row(const double* a, const double* b, double* c,
                   std::size_t p, std::size_t m, std::size_t k, std::size_t n) {
    double* crow = c + p * n;
    for (std::size_t i = 0; i < m; ++i) {
        const double av = a[i * k + p];
        if (av == 0.0) continue;
        const double* brow = b + i * n;
        for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
}

inline double window_distance(const double* w, const double* q, std::size_t len, double var_eps) {
    // z-normalize the window on the fly, then Euclidean distance to q.
    double mean = 0.0;
    for (std::size_t t = 0; t < len; ++t) mean += w[t];
    mean /= static_cast<double>(len);
    double var = 0.0;
    for (std::size_t t = 0; t < len; ++t) {
        const double d = w[t] - mean;
        var += d * d;
    }
    var /= static_cast<double>(len);
    double acc = 0.0;
    if (var < var_eps) {
        for (std::size_t t = 0; t < len; ++t) acc += q[t] * q[t];
    } else {
        const double inv = 1.0 / std::sqrt(var);
        for (std::size_t t = 0; t < len; ++t) {
            const double d = (w[t] - mean) * inv - q[t];
            acc += d * d;
        }
    }
    return std::sqrt(acc);
}

}  // namespace

bool parallel_enabled() { return parallel_flag().load(std::memory_order_relaxed); }
void set_parallel_enabled(bool on) { parallel_flag().store(on, std::memory_order_relaxed); }

void matmul_nn_serial(const double* a, const double* b, double* c,
                      std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
    zero_or_keep(c, m * n, accumulate);
    for (std::size_t i = 0; i < m; ++i) nn_row(a, b, c, i, k, n);
}

void matmul_nn_parallel(const double* a, const double* b, double* c,
                        std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
    zero_or_keep(c, m * n, accumulate);
#pragma omp parallel for schedule(static)
    for (long long i = 0; i < static_cast<long long>(m); ++i)
        nn_row(a, b, c, static_cast<std::size_t>(i), k, n);
}

void matmul_nn(const double* a, const double* b, double* c,
               std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
    if (parallel_enabled() && m > 1)
        matmul_nn_parallel(a, b, c, m, k, n, accumulate);
    else
        matmul_nn_serial(a, b, c, m, k, n, accumulate);
}

void matmul_nt_serial(const double* a, const double* b, double* c,
                      std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
    zero_or_keep(c, m * n, accumulate);
    for (std::size_t i = 0; i < m; ++i) nt_row(a, b, c, i, k, n);
}

void matmul_nt_parallel(const double* a, const double* b, double* c,
                        std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
    zero_or_keep(c, m * n, accumulate);
#pragma omp parallel for schedule(static)
    for (long long i = 0; i < static_cast<long long>(m); ++i)
        nt_row(a, b, c, static_cast<std::size_t>(i), k, n);
}

void matmul_nt(const double* a, const double* b, double* c,
               std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
    if (parallel_enabled() && m > 1)
        matmul_nt_parallel(a, b, c, m, k, n, accumulate);
    else
        matmul_nt_serial(a, b, c, m, k, n, accumulate);
}

void matmul_tn_serial(const double* a, const double* b, double* c,
                      std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
    zero_or_keep(c, k * n, accumulate);
    for (std::size_t p = 0; p < k; ++p) tn_row(a, b, c, p, m, k, n);
}

void matmul_tn_parallel(const double* a, const double* b, double* c,
                        std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
    zero_or_keep(c, k * n, accumulate);
#pragma omp parallel for schedule(static)
    for (long long p = 0; p < static_cast<long long>(k); ++p)
        tn_row(a, b, c, static_cast<std::size_t>(p), m, k, n);
}

void matmul_tn(const double* a, const double* b, double* c,
               std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
    if (parallel_enabled() && k > 1)
        matmul_tn_parallel(a, b, c, m, k, n, accumulate);
    else
        matmul_tn_serial(a, b, c, m, k, n, accumulate);
}

bool znormalize(std::span<double> window, double var_eps) {
    const std::size_t len = window.size();
    if (len == 0) return true;
    double mean = 0.0;
    for (double v : window) mean += v;
    mean /= static_cast<double>(len);
    double var = 0.0;
    for (double v : window) {
        const double d = v - mean;
        var += d * d;
    }
    var /= static_cast<double>(len);
    if (var < var_eps) {
        for (double& v : window) v = 0.0;
        return true;
    }
    const double inv = 1.0 / std::sqrt(var);
    for (double& v : window) v = (v - mean) * inv;
    return false;
}

std::vector<double> znorm_distance_profile_serial(std::span<const double> series,
                                                  std::span<const double> query_z,
                                                  std::size_t stride, double var_eps) {
    const std::size_t len = query_z.size();
    if (stride == 0) stride = 1;
    std::vector<double> out;
    if (series.size() < len) return out;
    const std::size_t positions = (series.size() - len) / stride + 1;
    out.resize(positions);
    for (std::size_t p = 0; p < positions; ++p)
        out[p] = window_distance(series.data() + p * stride, query_z.data(), len, var_eps);
    return out;
}

std::vector<double> znorm_distance_profile_parallel(std::span<const double> series,
                                                    std::span<const double> query_z,
                                                    std::size_t stride, double var_eps) {
    const std::size_t len = query_z.size();
    if (stride == 0) stride = 1;
    std::vector<double> out;
    if (series.size() < len) return out;
    const std::size_t positions = (series.size() - len) / stride + 1;
    out.resize(positions);
#pragma omp parallel for schedule(static)
    for (long long p = 0; p < static_cast<long long>(positions); ++p)
        out[static_cast<std::size_t>(p)] =
            window_distance(series.data() + static_cast<std::size_t>(p) * stride, query_z.data(), len, var_eps);
    return out;
}

std::vector<double> znorm_distance_profile(std::span<const double> series,
                                           std::span<const double> query_z,
                                           std::size_t stride, double var_eps) {
    return parallel_enabled() ? znorm_distance_profile_parallel(series, query_z, stride, var_eps)
                              : znorm_distance_profile_serial(series, query_z, stride, var_eps);
}

}  // namespace monrec::kernels
