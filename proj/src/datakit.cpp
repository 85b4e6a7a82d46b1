#include "eyeadapt/datakit.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "eyeadapt/errors.hpp"

namespace eyeadapt {

std::string_view to_string(Domain d) { return d == Domain::kSource ? "source" : "target"; }

std::string_view to_string(Style s) {
  return s == Style::kSyntheticLike ? "synthetic-like" : "real-like";
}

Domain parse_domain(std::string_view text) {
  if (text == "source") return Domain::kSource;
  if (text == "target") return Domain::kTarget;
  throw ConfigError("unknown domain '" + std::string(text) + "' (expected source|target)");
}

Style parse_style(std::string_view text) {
  if (text == "synthetic-like" || text == "synthetic") return Style::kSyntheticLike;
  if (text == "real-like" || text == "real") return Style::kRealLike;
  throw ConfigError("unknown style '" + std::string(text) + "' (expected synthetic-like|real-like)");
}

Domain domain_of(Style s) { return s == Style::kSyntheticLike ? Domain::kSource : Domain::kTarget; }

void validate(const ImageSample& sample) {
  if (!sample.image.same_shape(sample.mask)) {
    throw FormatError(sample.id, "image and mask dimensions differ");
  }
  for (auto v : sample.mask.data) {
    if (v >= kNumClasses) {
      throw FormatError(sample.id, "mask value " + std::to_string(int(v)) +
                                       " outside class range (K=" + std::to_string(kNumClasses) + ")");
    }
  }
  for (auto v : sample.image.data) {
    if (!(v >= 0.0f && v <= 1.0f)) throw FormatError(sample.id, "image intensity outside [0,1]");
  }
}

void quantize(Image& image) {
  for (auto& v : image.data) {
    const float c = std::clamp(v, 0.0f, 1.0f);
    v = std::round(c * 255.0f) / 255.0f;
  }
}

// ---------------------------------------------------------------------------

namespace {

struct PixelEllipse {
  double cx, cy, sx, sy, cos_a, sin_a;

  PixelEllipse(const Ellipse& e, int height, int width)
      : cx(e.cx * width),
        cy(e.cy * height),
        sx(e.semi_x * width),
        sy(e.semi_y * width),
        cos_a(std::cos(e.angle)),
        sin_a(std::sin(e.angle)) {}

  double level(double x, double y) const {
    const double dx = x - cx;
    const double dy = y - cy;
    const double u = dx * cos_a + dy * sin_a;
    const double v = -dx * sin_a + dy * cos_a;
    return (u / sx) * (u / sx) + (v / sy) * (v / sy);
  }
  bool contains(double x, double y) const { return level(x, y) <= 1.0; }

  std::pair<double, double> boundary_point(double t) const {
    const double u = sx * std::cos(t);
    const double v = sy * std::sin(t);
    return {cx + u * cos_a - v * sin_a, cy + u * sin_a + v * cos_a};
  }
};

struct PixelLids {
  double cx, cy, half_width, upper, lower;

  PixelLids(const Eyelids& l, int height, int width)
      : cx(l.center_x * width),
        cy(l.center_y * height),
        half_width(l.half_width * width),
        upper(l.upper * l.aperture * width),
        lower(l.lower * l.aperture * width) {}

  // Signed clearance to the nearest lid; positive inside the opening.
  double clearance(double x, double y) const {
    const double t = (x - cx) / half_width;
    if (std::abs(t) >= 1.0) return -1.0;
    const double shape = 1.0 - t * t;
    const double top = cy - upper * shape;
    const double bottom = cy + lower * shape;
    return std::min(y - top, bottom - y);
  }
  bool inside(double x, double y) const { return clearance(x, y) > 0.0; }
};

bool pupil_inside_iris(const EyeParams& p, int height, int width) {
  const PixelEllipse pupil(p.pupil, height, width);
  const PixelEllipse iris(p.iris, height, width);
  if (!iris.contains(pupil.cx, pupil.cy)) return false;
  constexpr int kSamples = 360;
  for (int i = 0; i < kSamples; ++i) {
    const auto [x, y] = pupil.boundary_point(2.0 * std::numbers::pi * i / kSamples);
    if (!iris.contains(x, y)) return false;
  }
  return true;
}

void check_positive(double v, const char* what) {
  if (!(v > 0.0) || !std::isfinite(v)) throw GeometryError(std::string(what) + " must be positive");
}

Image blur_sigma(const Image& image, double sigma) {
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  return gaussian_blur(image, 2 * radius + 1, sigma);
}

struct StylePalette {
  std::array<double, kNumClasses> base;
  double texture_noise;
  double iris_texture;
};

constexpr StylePalette kSyntheticPalette{{0.62, 0.88, 0.42, 0.08}, 0.01, 0.02};
constexpr StylePalette kRealPalette{{0.42, 0.70, 0.28, 0.10}, 0.015, 0.04};

}  // namespace

void validate_geometry(const EyeParams& params, int height, int width) {
  check_positive(params.pupil.semi_x, "pupil semi-axis");
  check_positive(params.pupil.semi_y, "pupil semi-axis");
  check_positive(params.iris.semi_x, "iris semi-axis");
  check_positive(params.iris.semi_y, "iris semi-axis");
  check_positive(params.lids.half_width, "eyelid half width");
  if (params.lids.upper < 0.0 || params.lids.lower < 0.0) {
    throw GeometryError("eyelid heights must be non-negative");
  }
  if (params.lids.aperture < 0.0 || params.lids.aperture > 1.0) {
    throw GeometryError("eyelid aperture must lie in [0,1]");
  }
  if (!pupil_inside_iris(params, height, width)) {
    throw GeometryError("pupil ellipse is not contained in the iris ellipse");
  }
}

void validate(const EyeParams& params) { validate_geometry(params, 1, 1); }

ImageSample render_eye(const EyeParams& params, int height, int width, std::string id) {
  if (height < 16 || width < 16) throw ConfigError("render dims must be at least 16x16");
  validate_geometry(params, height, width);

  const PixelEllipse pupil(params.pupil, height, width);
  const PixelEllipse iris(params.iris, height, width);
  const PixelLids lids(params.lids, height, width);

  ImageSample out;
  out.id = std::move(id);
  out.domain = domain_of(params.style);
  out.mask = Mask(height, width, 0);
  for (int r = 0; r < height; ++r) {
    for (int c = 0; c < width; ++c) {
      const double x = c + 0.5;
      const double y = r + 0.5;
      EyeClass k = EyeClass::kBackground;
      if (lids.inside(x, y)) {
        if (pupil.contains(x, y)) {
          k = EyeClass::kPupil;
        } else if (iris.contains(x, y)) {
          k = EyeClass::kIris;
        } else {
          k = EyeClass::kSclera;
        }
      }
      out.mask.at(r, c) = static_cast<std::uint8_t>(k);
    }
  }

  const bool real = params.style == Style::kRealLike;
  const StylePalette& palette = real ? kRealPalette : kSyntheticPalette;
  Rng tex(params.texture_seed);
  std::array<double, kNumClasses> level{};
  for (int k = 0; k < kNumClasses; ++k) level[k] = palette.base[k] + tex.uniform(-0.03, 0.03);
  const double iris_phase = tex.uniform(0.0, 2.0 * std::numbers::pi);
  const double iris_freq = std::round(tex.uniform(10.0, 18.0));

  Image base(height, width);
  for (int r = 0; r < height; ++r) {
    for (int c = 0; c < width; ++c) {
      base.at(r, c) = static_cast<float>(level[out.mask.at(r, c)]);
    }
  }

  const double scale = width / 64.0;
  if (real) base = blur_sigma(base, 0.8 * scale);

  Image img = base;
  for (int r = 0; r < height; ++r) {
    for (int c = 0; c < width; ++c) {
      double v = img.at(r, c);
      if (out.mask.at(r, c) == static_cast<std::uint8_t>(EyeClass::kIris)) {
        const double theta = std::atan2(r + 0.5 - iris.cy, c + 0.5 - iris.cx);
        v += palette.iris_texture * std::sin(iris_freq * theta + iris_phase);
      }
      v += palette.texture_noise * tex.normal();
      img.at(r, c) = static_cast<float>(v);
    }
  }

  if (real) {
    // Low-frequency correlated noise, rescaled to a fixed standard deviation.
    Image field(height, width);
    for (auto& v : field.data) v = static_cast<float>(tex.normal());
    field = blur_sigma(field, 2.0 * scale);
    double sq = 0.0;
    for (auto v : field.data) sq += double(v) * v;
    const double sd = std::sqrt(sq / field.size());
    const double gain = sd > 0.0 ? 0.045 / sd : 0.0;
    const double shade_len = 3.0 * scale;
    for (int r = 0; r < height; ++r) {
      for (int c = 0; c < width; ++c) {
        double v = img.at(r, c) + gain * field.at(r, c);
        const double clearance = lids.clearance(c + 0.5, r + 0.5);
        if (clearance > 0.0) {
          v *= 1.0 - 0.3 * std::exp(-clearance / shade_len);
        } else {
          v *= 0.9 + 0.2 * (r + 0.5) / height;
        }
        img.at(r, c) = static_cast<float>(v);
      }
    }
  }

  quantize(img);
  out.image = std::move(img);
  return out;
}

EyeParams random_eye_params(Style style, Rng& rng) {
  EyeParams p;
  p.style = style;
  p.lids.center_x = 0.5 + rng.uniform(-0.04, 0.04);
  p.lids.center_y = 0.5 + rng.uniform(-0.04, 0.04);
  p.lids.half_width = rng.uniform(0.38, 0.46);
  p.lids.upper = rng.uniform(0.22, 0.30);
  p.lids.lower = rng.uniform(0.17, 0.24);
  p.lids.aperture = rng.uniform(0.65, 1.0);

  const double r = rng.uniform(0.14, 0.19);
  p.iris.cx = p.lids.center_x + rng.uniform(-0.06, 0.06);
  p.iris.cy = p.lids.center_y + rng.uniform(-0.04, 0.04);
  p.iris.semi_x = r;
  p.iris.semi_y = r * rng.uniform(0.92, 1.08);
  p.iris.angle = rng.uniform(0.0, std::numbers::pi);

  const double pr = r * rng.uniform(0.3, 0.55);
  p.pupil.cx = p.iris.cx + rng.uniform(-0.02, 0.02);
  p.pupil.cy = p.iris.cy + rng.uniform(-0.02, 0.02);
  p.pupil.semi_x = pr;
  p.pupil.semi_y = pr * rng.uniform(0.9, 1.1);
  p.pupil.angle = rng.uniform(0.0, std::numbers::pi);
  while (!pupil_inside_iris(p, 1, 1)) {
    p.pupil.semi_x *= 0.9;
    p.pupil.semi_y *= 0.9;
  }
  p.texture_seed = rng.next_u64();
  return p;
}

// ---------------------------------------------------------------------------

Dataset make_dataset(std::vector<ImageSample> samples, Domain domain,
                     std::map<std::string, std::string> provenance) {
  Dataset ds;
  ds.manifest.domain = domain;
  ds.manifest.provenance = std::move(provenance);
  ds.manifest.entries.reserve(samples.size());
  for (auto& s : samples) {
    s.domain = domain;
    ds.manifest.entries.push_back({s.id, "images/" + s.id + ".png", "masks/" + s.id + ".png", "train"});
  }
  ds.samples = std::move(samples);
  return ds;
}

Dataset subset(const Dataset& ds, const std::vector<std::size_t>& indices) {
  Dataset out;
  out.manifest.version = ds.manifest.version;
  out.manifest.domain = ds.manifest.domain;
  out.manifest.provenance = ds.manifest.provenance;
  for (auto i : indices) {
    out.manifest.entries.push_back(ds.manifest.entries.at(i));
    out.samples.push_back(ds.samples.at(i));
  }
  return out;
}

Dataset generate_dataset(int n, Style style, std::uint64_t seed, int height, int width) {
  if (n < 1) throw ConfigError("generate_dataset requires n >= 1");
  Rng rng(seed);
  const char* prefix = style == Style::kSyntheticLike ? "syn" : "real";
  std::vector<ImageSample> samples;
  samples.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const EyeParams params = random_eye_params(style, rng);
    char id[32];
    std::snprintf(id, sizeof id, "%s_%05d", prefix, i);
    samples.push_back(render_eye(params, height, width, id));
  }
  return make_dataset(std::move(samples), domain_of(style),
                      {{"generator", "procedural"},
                       {"style", std::string(to_string(style))},
                       {"seed", std::to_string(seed)}});
}

}  // namespace eyeadapt
