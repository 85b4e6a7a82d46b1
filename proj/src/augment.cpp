#include <algorithm>
#include <cmath>
#include <numbers>

#include "eyeadapt/datakit.hpp"
#include "eyeadapt/errors.hpp"

namespace eyeadapt {

AugmentConfig AugmentConfig::none() {
  AugmentConfig cfg;
  cfg.p_reflect = cfg.p_blur = cfg.p_translate = cfg.p_lines = cfg.p_starburst = 0.0;
  return cfg;
}

AugmentConfig AugmentConfig::scaled_to_width(int width) const {
  AugmentConfig cfg = *this;
  const double f = width / 640.0;
  cfg.translate_max = std::max(1, static_cast<int>(std::lround(translate_max * f)));
  cfg.blur_sigma_min = std::max(0.3, blur_sigma_min * f);
  cfg.blur_sigma_max = std::max(cfg.blur_sigma_min, blur_sigma_max * f);
  return cfg;
}

void validate(const AugmentConfig& cfg) {
  for (double p : {cfg.p_reflect, cfg.p_blur, cfg.p_translate, cfg.p_lines, cfg.p_starburst}) {
    if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("augmentation probabilities must lie in [0,1]");
  }
  if (cfg.blur_kernel < 1 || cfg.blur_kernel % 2 == 0) throw ConfigError("blur kernel must be odd and positive");
  if (!(cfg.blur_sigma_min > 0.0) || cfg.blur_sigma_max < cfg.blur_sigma_min) {
    throw ConfigError("blur sigma range must be non-empty and positive");
  }
  if (cfg.translate_max < 0) throw ConfigError("translation range must be non-negative");
  if (cfg.lines_min < 0 || cfg.lines_max < cfg.lines_min) throw ConfigError("line count range invalid");
}

ImageSample reflect_vertical_axis(const ImageSample& sample) {
  ImageSample out = sample;
  const int w = sample.image.width;
  for (int r = 0; r < sample.image.height; ++r) {
    for (int c = 0; c < w; ++c) {
      out.image.at(r, c) = sample.image.at(r, w - 1 - c);
      out.mask.at(r, c) = sample.mask.at(r, w - 1 - c);
    }
  }
  return out;
}

ImageSample translate_sample(const ImageSample& sample, int dx, int dy) {
  ImageSample out = sample;
  const int h = sample.image.height;
  const int w = sample.image.width;
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      const int sr = r - dy;
      const int sc = c - dx;
      const bool inside = sr >= 0 && sr < h && sc >= 0 && sc < w;
      out.image.at(r, c) = inside ? sample.image.at(sr, sc) : 0.0f;
      out.mask.at(r, c) = inside ? sample.mask.at(sr, sc) : std::uint8_t{0};
    }
  }
  return out;
}

Image gaussian_blur(const Image& image, int kernel, double sigma) {
  const int radius = kernel / 2;
  std::vector<double> weights(static_cast<std::size_t>(kernel));
  double total = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    const double w = std::exp(-0.5 * (i * i) / (sigma * sigma));
    weights[static_cast<std::size_t>(i + radius)] = w;
    total += w;
  }
  for (auto& w : weights) w /= total;

  const int h = image.height;
  const int w = image.width;
  Image tmp(h, w);
  Image out(h, w);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i) {
        acc += weights[static_cast<std::size_t>(i + radius)] * image.at(r, std::clamp(c + i, 0, w - 1));
      }
      tmp.at(r, c) = static_cast<float>(acc);
    }
  }
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i) {
        acc += weights[static_cast<std::size_t>(i + radius)] * tmp.at(std::clamp(r + i, 0, h - 1), c);
      }
      out.at(r, c) = static_cast<float>(acc);
    }
  }
  return out;
}

// Fixed radial-line stamp: 16 rays whose brightness fades with distance.
void draw_starburst(Image& image, double cx, double cy, double radius) {
  constexpr int kRays = 16;
  Image stamp(image.height, image.width, 0.0f);
  for (int k = 0; k < kRays; ++k) {
    const double a = 2.0 * std::numbers::pi * k / kRays;
    for (double t = 0.0; t <= radius; t += 0.5) {
      const int c = static_cast<int>(std::floor(cx + t * std::cos(a)));
      const int r = static_cast<int>(std::floor(cy + t * std::sin(a)));
      if (r < 0 || r >= image.height || c < 0 || c >= image.width) break;
      const float v = static_cast<float>(0.35 * (1.0 - t / radius));
      stamp.at(r, c) = std::max(stamp.at(r, c), v);
    }
  }
  for (std::size_t i = 0; i < image.size(); ++i) image.data[i] += stamp.data[i];
}

ImageSample augment(const ImageSample& sample, const AugmentConfig& cfg, Rng& rng) {
  ImageSample out = sample;
  const int h = sample.image.height;
  const int w = sample.image.width;
  bool touched = false;

  if (rng.bernoulli(cfg.p_reflect) && cfg.reflection) {
    out = reflect_vertical_axis(out);
    touched = true;
  }
  if (rng.bernoulli(cfg.p_blur)) {
    out.image = gaussian_blur(out.image, cfg.blur_kernel, rng.uniform(cfg.blur_sigma_min, cfg.blur_sigma_max));
    touched = true;
  }
  if (rng.bernoulli(cfg.p_translate)) {
    const auto dx = static_cast<int>(rng.uniform_int(-cfg.translate_max, cfg.translate_max));
    const auto dy = static_cast<int>(rng.uniform_int(-cfg.translate_max, cfg.translate_max));
    out = translate_sample(out, dx, dy);
    touched = true;
  }
  if (rng.bernoulli(cfg.p_lines)) {
    const auto n = rng.uniform_int(cfg.lines_min, cfg.lines_max);
    for (std::int64_t i = 0; i < n; ++i) {
      const bool vertical = rng.bernoulli(0.5);
      const float value = rng.bernoulli(0.5) ? 1.0f : 0.0f;
      if (vertical) {
        const auto c = static_cast<int>(rng.uniform_int(0, w - 1));
        for (int r = 0; r < h; ++r) out.image.at(r, c) = value;
      } else {
        const auto r = static_cast<int>(rng.uniform_int(0, h - 1));
        for (int c = 0; c < w; ++c) out.image.at(r, c) = value;
      }
    }
    touched = true;
  }
  if (rng.bernoulli(cfg.p_starburst) && cfg.starburst) {
    const double cx = w / 2.0 + rng.uniform(-w / 8.0, w / 8.0);
    const double cy = h / 2.0 + rng.uniform(-h / 8.0, h / 8.0);
    draw_starburst(out.image, cx, cy, 0.25 * w);
    touched = true;
  }
  if (touched) quantize(out.image);
  return out;
}

}  // namespace eyeadapt
