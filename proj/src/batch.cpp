#include "drnet/batch.hpp"

#include <fmt/format.h>

#include <algorithm>

#include "drnet/error.hpp"

namespace drnet {

Tensor<float> images_to_tensor(const std::vector<const NormalizedImage*>& images) {
  if (images.empty()) throw std::invalid_argument("images_to_tensor: no images");
  const std::size_t h = images[0]->height, w = images[0]->width;
  Tensor<float> t(Shape{images.size(), 1, h, w});
  float* out = t.ptr();
  for (const NormalizedImage* img : images) {
    if (img->width != w || img->height != h)
      throw ShapeError(fmt::format("images_to_tensor: mixed sizes {}x{} and {}x{}", w, h, img->width, img->height));
    out = std::copy(img->data.begin(), img->data.end(), out);
  }
  return t;
}

std::vector<NormalizedImage> tensor_to_images(const Tensor<float>& batch) {
  const Shape& s = batch.shape();
  if (s.rank() != 4 || s[1] != 1) throw ShapeError("tensor_to_images expects [n, 1, h, w], got " + s.str());
  std::vector<NormalizedImage> out;
  const std::size_t plane = s[2] * s[3];
  for (std::size_t i = 0; i < s[0]; ++i) {
    NormalizedImage img(s[3], s[2]);
    std::copy(batch.ptr() + i * plane, batch.ptr() + (i + 1) * plane, img.data.begin());
    out.push_back(std::move(img));
  }
  return out;
}

}  // namespace drnet
