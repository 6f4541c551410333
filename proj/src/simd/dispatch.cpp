#include <atomic>
#include <cstdlib>
#include <stdexcept>
#include <string>

#include "kernels.hpp"

namespace drnet::simd {
namespace {

Backend detect() {
  if (const char* env = std::getenv("DRNET_SIMD"); env != nullptr && std::string(env) == "scalar")
    return Backend::Scalar;
  return backend_supported(Backend::Avx2) ? Backend::Avx2 : Backend::Scalar;
}

std::atomic<Backend>& current() {
  static std::atomic<Backend> backend{detect()};
  return backend;
}

}  // namespace

bool backend_supported(Backend backend) {
  switch (backend) {
    case Backend::Scalar:
      return true;
    case Backend::Avx2:
#if defined(DRNET_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
      return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
      return false;
#endif
  }
  return false;
}

Backend active_backend() { return current().load(std::memory_order_relaxed); }

void set_backend(Backend backend) {
  if (!backend_supported(backend))
    throw std::invalid_argument("SIMD backend not available: " + std::string(backend_name(backend)));
  current().store(backend, std::memory_order_relaxed);
}

std::string_view backend_name(Backend backend) {
  return backend == Backend::Avx2 ? "avx2" : "scalar";
}

template <typename T>
const KernelTable<T>& kernels(Backend backend) {
#ifdef DRNET_HAVE_AVX2
  if (backend == Backend::Avx2) return detail::avx2_kernels<T>();
#endif
  (void)backend;
  return detail::scalar_kernels<T>();
}

template <typename T>
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c) {
  const auto& kt = kernels<T>();
  for (std::size_t i = 0; i < m; ++i) {
    T* crow = c + i * n;
    const T* arow = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = arow[p];
      if (av != T(0)) kt.axpy(av, b + p * n, crow, n);
    }
  }
}

template <typename T>
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c) {
  const auto& kt = kernels<T>();
  for (std::size_t p = 0; p < k; ++p) {
    const T* arow = a + p * m;
    const T* brow = b + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      const T av = arow[i];
      if (av != T(0)) kt.axpy(av, brow, c + i * n, n);
    }
  }
}

template <typename T>
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c) {
  const auto& kt = kernels<T>();
  for (std::size_t i = 0; i < m; ++i) {
    const T* arow = a + i * k;
    T* crow = c + i * n;
    for (std::size_t j = 0; j < n; ++j) crow[j] += kt.dot(arow, b + j * k, k);
  }
}

template const KernelTable<float>& kernels<float>(Backend);
template const KernelTable<double>& kernels<double>(Backend);
template void gemm_nn<float>(std::size_t, std::size_t, std::size_t, const float*, const float*, float*);
template void gemm_nn<double>(std::size_t, std::size_t, std::size_t, const double*, const double*, double*);
template void gemm_tn<float>(std::size_t, std::size_t, std::size_t, const float*, const float*, float*);
template void gemm_tn<double>(std::size_t, std::size_t, std::size_t, const double*, const double*, double*);
template void gemm_nt<float>(std::size_t, std::size_t, std::size_t, const float*, const float*, float*);
template void gemm_nt<double>(std::size_t, std::size_t, std::size_t, const double*, const double*, double*);

}  // namespace drnet::simd
