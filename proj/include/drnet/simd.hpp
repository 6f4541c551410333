#pragma once

// Data-parallel inner loops. Every kernel has a portable scalar reference
// implementation; an AVX2/FMA variant is compiled separately and selected at
// runtime when the CPU supports it. Set DRNET_SIMD=scalar to force the
// reference path.

#include <cstddef>
#include <string_view>

namespace drnet::simd {

enum class Backend { Scalar, Avx2 };

template <typename T>
struct KernelTable {
  T (*dot)(const T* a, const T* b, std::size_t n);
  /// y += alpha * x
  void (*axpy)(T alpha, const T* x, T* y, std::size_t n);
  void (*add)(const T* a, const T* b, T* out, std::size_t n);
  void (*mul)(const T* a, const T* b, T* out, std::size_t n);
  /// out = alpha * x
  void (*scale)(T alpha, const T* x, T* out, std::size_t n);
  void (*relu)(const T* x, T* out, std::size_t n);
  T (*sum)(const T* x, std::size_t n);
};

bool backend_supported(Backend backend);
Backend active_backend();
/// Throws std::invalid_argument when the backend is not available on this CPU/build.
void set_backend(Backend backend);
std::string_view backend_name(Backend backend);

template <typename T>
const KernelTable<T>& kernels(Backend backend);

template <typename T>
const KernelTable<T>& kernels() {
  return kernels<T>(active_backend());
}

// Row-major GEMM helpers accumulating into C, built on the active kernels.
// gemm_nn: C[M,N] += A[M,K] * B[K,N]
template <typename T>
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c);
// gemm_tn: C[M,N] += A[K,M]^T * B[K,N]
template <typename T>
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c);
// gemm_nt: C[M,N] += A[M,K] * B[N,K]^T
template <typename T>
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c);

}  // namespace drnet::simd
