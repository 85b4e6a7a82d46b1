#include "eyeadapt/tensors.hpp"

#include <numeric>

#include "eyeadapt/errors.hpp"

namespace eyeadapt {

namespace {

std::vector<std::size_t> all_indices(std::size_t n) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  return idx;
}

}  // namespace

torch::Tensor image_to_tensor(const Image& image) {
  return torch::from_blob(const_cast<float*>(image.data.data()), {image.height, image.width},
                          torch::kFloat32)
      .clone();
}

torch::Tensor mask_to_tensor(const Mask& mask) {
  return torch::from_blob(const_cast<std::uint8_t*>(mask.data.data()), {mask.height, mask.width},
                          torch::kUInt8)
      .to(torch::kInt64);
}

torch::Tensor images_to_tensor(const std::vector<ImageSample>& samples,
                               const std::vector<std::size_t>& indices) {
  if (indices.empty()) throw ConfigError("cannot build an empty image batch");
  const auto& first = samples.at(indices.front()).image;
  auto out = torch::empty({static_cast<std::int64_t>(indices.size()), 1, first.height, first.width},
                          torch::kFloat32);
  auto* dst = out.data_ptr<float>();
  const std::size_t plane = first.size();
  for (std::size_t b = 0; b < indices.size(); ++b) {
    const auto& img = samples.at(indices[b]).image;
    if (!img.same_shape(first)) throw DataError("batch images differ in size");
    std::copy(img.data.begin(), img.data.end(), dst + b * plane);
  }
  return out;
}

torch::Tensor images_to_tensor(const std::vector<ImageSample>& samples) {
  return images_to_tensor(samples, all_indices(samples.size()));
}

torch::Tensor masks_to_tensor(const std::vector<ImageSample>& samples,
                              const std::vector<std::size_t>& indices) {
  if (indices.empty()) throw ConfigError("cannot build an empty mask batch");
  const auto& first = samples.at(indices.front()).mask;
  auto out = torch::empty({static_cast<std::int64_t>(indices.size()), first.height, first.width},
                          torch::kInt64);
  auto* dst = out.data_ptr<std::int64_t>();
  const std::size_t plane = first.size();
  for (std::size_t b = 0; b < indices.size(); ++b) {
    const auto& m = samples.at(indices[b]).mask;
    if (!m.same_shape(first)) throw DataError("batch masks differ in size");
    std::copy(m.data.begin(), m.data.end(), dst + b * plane);
  }
  return out;
}

torch::Tensor masks_to_tensor(const std::vector<ImageSample>& samples) {
  return masks_to_tensor(samples, all_indices(samples.size()));
}

Image tensor_to_image(const torch::Tensor& t) {
  auto x = t.detach().to(torch::kCPU, torch::kFloat32).contiguous();
  if (x.dim() == 3 && x.size(0) == 1) x = x.squeeze(0);
  if (x.dim() != 2) throw ConfigError("expected a single-channel image tensor");
  Image img(static_cast<int>(x.size(0)), static_cast<int>(x.size(1)));
  std::copy(x.data_ptr<float>(), x.data_ptr<float>() + x.numel(), img.data.begin());
  quantize(img);
  return img;
}

Mask tensor_to_mask(const torch::Tensor& t) {
  auto x = t.detach().to(torch::kCPU, torch::kInt64).contiguous();
  if (x.dim() != 2) throw ConfigError("expected a 2-D mask tensor");
  Mask m(static_cast<int>(x.size(0)), static_cast<int>(x.size(1)));
  const auto* src = x.data_ptr<std::int64_t>();
  for (std::size_t i = 0; i < m.size(); ++i) m.data[i] = static_cast<std::uint8_t>(src[i]);
  return m;
}

}  // namespace eyeadapt
