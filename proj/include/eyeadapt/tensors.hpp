#pragma once

#include <vector>

#include <torch/torch.h>

#include "eyeadapt/datakit.hpp"

namespace eyeadapt {

/// [B, 1, H, W] float32 batch from the selected samples.
torch::Tensor images_to_tensor(const std::vector<ImageSample>& samples,
                               const std::vector<std::size_t>& indices);
torch::Tensor images_to_tensor(const std::vector<ImageSample>& samples);

/// [B, H, W] int64 class ids.
torch::Tensor masks_to_tensor(const std::vector<ImageSample>& samples,
                              const std::vector<std::size_t>& indices);
torch::Tensor masks_to_tensor(const std::vector<ImageSample>& samples);

torch::Tensor image_to_tensor(const Image& image);  // [H, W]
torch::Tensor mask_to_tensor(const Mask& mask);     // [H, W] int64

/// Accepts [H, W] or [1, H, W]; values are clamped to [0,1] and quantized.
Image tensor_to_image(const torch::Tensor& t);
/// Accepts [H, W] integer tensor.
Mask tensor_to_mask(const torch::Tensor& t);

}  // namespace eyeadapt
