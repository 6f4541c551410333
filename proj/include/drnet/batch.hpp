#pragma once

#include <vector>

#include "drnet/image.hpp"
#include "drnet/tensor.hpp"

namespace drnet {

/// Stacks equally sized images into [n, 1, h, w].
Tensor<float> images_to_tensor(const std::vector<const NormalizedImage*>& images);
/// Splits [n, 1, h, w] into n images.
std::vector<NormalizedImage> tensor_to_images(const Tensor<float>& batch);

}  // namespace drnet
