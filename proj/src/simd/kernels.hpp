#pragma once

#include "drnet/simd.hpp"

namespace drnet::simd::detail {

template <typename T>
const KernelTable<T>& scalar_kernels();

#ifdef DRNET_HAVE_AVX2
template <typename T>
const KernelTable<T>& avx2_kernels();
#endif

}  // namespace drnet::simd::detail
