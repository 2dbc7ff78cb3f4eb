#pragma once

#include <cstddef>
#include <span>
#include <vector>

// Dense row-major kernels behind the tensor ops and the shapelet search.
// Every kernel ships as a serial reference plus an OpenMP variant that
// parallelizes over independent output rows/positions only, so the two
// produce bitwise-identical results. Tests assert the equality; the bench
// target compares throughput.

namespace monrec::kernels {

/// Runtime switch (default on). The env var MONREC_SERIAL_KERNELS=1 forces
/// the serial path for the whole process.
bool parallel_enabled();
void set_parallel_enabled(bool on);

// C(m,n) = A(m,k) * B(k,n), optionally accumulating into C.
void matmul_nn_serial(const double* a, const double* b, double* c,
                      std::size_t m, std::size_t k, std::size_t n, bool accumulate);
void matmul_nn_parallel(const double* a, const double* b, double* c,
                        std::size_t m, std::size_t k, std::size_t n, bool accumulate);
void matmul_nn(const double* a, const double* b, double* c,
               std::size_t m, std::size_t k, std::size_t n, bool accumulate = false);

// C(m,n) = A(m,k) * B(n,k)^T
void matmul_nt_serial(const double* a, const double* b, double* c,
                      std::size_t m, std::size_t k, std::size_t n, bool accumulate);
void matmul_nt_parallel(const double* a, const double* b, double* c,
                        std::size_t m, std::size_t k, std::size_t n, bool accumulate);
void matmul_nt(const double* a, const double* b, double* c,
               std::size_t m, std::size_t k, std::size_t n, bool accumulate = false);

// C(k,n) = A(m,k)^T * B(m,n)
void matmul_tn_serial(const double* a, const double* b, double* c,
                      std::size_t m, std::size_t k, std::size_t n, bool accumulate);
void matmul_tn_parallel(const double* a, const double* b, double* c,
                        std::size_t m, std::size_t k, std::size_t n, bool accumulate);
void matmul_tn(const double* a, const double* b, double* c,
               std::size_t m, std::size_t k, std::size_t n, bool accumulate = false);

/// z-normalizes a window in place; windows whose variance falls below
/// var_eps become all zeros and report constant=true. Callers that know the
/// series scale pass a relative threshold so measurement noise on a flat
/// series does not get amplified into a fake unit-variance shape.
bool znormalize(std::span<double> window, double var_eps = 1e-12);

/// Euclidean distance between a z-normalized query and the z-normalized
/// window of `series` starting at every position of the stride grid.
/// Returns one distance per grid position.
std::vector<double> znorm_distance_profile_serial(std::span<const double> series,
                                                  std::span<const double> query_z,
                                                  std::size_t stride, double var_eps = 1e-12);
std::vector<double> znorm_distance_profile_parallel(std::span<const double> series,
                                                    std::span<const double> query_z,
                                                    std::size_t stride, double var_eps = 1e-12);
std::vector<double> znorm_distance_profile(std::span<const double> series,
                                           std::span<const double> query_z,
                                           std::size_t stride, double var_eps = 1e-12);

}  // namespace monrec::kernels
