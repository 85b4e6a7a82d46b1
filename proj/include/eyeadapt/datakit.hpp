#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "eyeadapt/rng.hpp"

namespace eyeadapt {

/// Number of segmentation classes: background, sclera, iris, pupil.
inline constexpr int kNumClasses = 4;

enum class EyeClass : std::uint8_t { kBackground = 0, kSclera = 1, kIris = 2, kPupil = 3 };

/// Row-major 2-D array.
template <class T>
struct Grid {
  int height = 0;
  int width = 0;
  std::vector<T> data;

  Grid() = default;
  Grid(int h, int w, T fill = T{}) : height(h), width(w), data(static_cast<std::size_t>(h) * w, fill) {}

  T& at(int row, int col) { return data[static_cast<std::size_t>(row) * width + col]; }
  const T& at(int row, int col) const { return data[static_cast<std::size_t>(row) * width + col]; }
  std::size_t size() const { return data.size(); }
  bool same_shape(const auto& other) const { return height == other.height && width == other.width; }

  friend bool operator==(const Grid&, const Grid&) = default;
};

using Image = Grid<float>;        // intensities in [0,1]
using Mask = Grid<std::uint8_t>;  // class ids in [0, kNumClasses)

enum class Domain { kSource, kTarget };
enum class Style { kSyntheticLike, kRealLike };

std::string_view to_string(Domain d);
std::string_view to_string(Style s);
Domain parse_domain(std::string_view text);
Style parse_style(std::string_view text);
Domain domain_of(Style s);

struct ImageSample {
  std::string id;
  Image image;
  Mask mask;
  Domain domain = Domain::kSource;

  friend bool operator==(const ImageSample&, const ImageSample&) = default;
};

/// Throws FormatError if dims differ, a class id is >= kNumClasses or an
/// intensity falls outside [0,1].
void validate(const ImageSample& sample);

/// Round intensities to the nearest 8-bit level so on-disk PNG round trips are exact.
void quantize(Image& image);

// ---------------------------------------------------------------------------
// Procedural eye renderer

/// Lengths are fractions of the image width; centers are fractions of width (x)
/// and height (y). Angles in radians.
struct Ellipse {
  double cx = 0.5;
  double cy = 0.5;
  double semi_x = 0.1;
  double semi_y = 0.1;
  double angle = 0.0;
};

struct Eyelids {
  double center_x = 0.5;
  double center_y = 0.5;
  double half_width = 0.42;
  double upper = 0.26;     // lid height above the eye centre line
  double lower = 0.2;      // lid height below it
  double aperture = 1.0;   // 0 closes the eye entirely
};

struct EyeParams {
  Ellipse pupil;
  Ellipse iris{0.5, 0.5, 0.18, 0.18, 0.0};
  Eyelids lids;
  std::uint64_t texture_seed = 0;
  Style style = Style::kSyntheticLike;
};

/// Throws GeometryError when the pupil is not contained in the iris or any
/// length is non-positive.
void validate(const EyeParams& params);

/// Renders an image and its pixel-exact mask (class of each pixel centre).
/// `dims` is (height, width) and must be at least 16x16.
ImageSample render_eye(const EyeParams& params, int height, int width, std::string id = "eye");

/// Random but valid geometry for one eye.
EyeParams random_eye_params(Style style, Rng& rng);

// ---------------------------------------------------------------------------
// Dataset model

struct ManifestEntry {
  std::string id;
  std::string image;  // path relative to the dataset root
  std::string mask;
  std::string split = "train";

  friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

struct DatasetManifest {
  int version = 1;
  Domain domain = Domain::kSource;
  std::vector<ManifestEntry> entries;
  std::map<std::string, std::string> provenance;

  std::size_t count() const { return entries.size(); }
  friend bool operator==(const DatasetManifest&, const DatasetManifest&) = default;
};

/// A manifest together with its decoded samples (same order as entries).
struct Dataset {
  DatasetManifest manifest;
  std::vector<ImageSample> samples;

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }
};

/// Build a dataset from in-memory samples with the default on-disk layout.
Dataset make_dataset(std::vector<ImageSample> samples, Domain domain,
                     std::map<std::string, std::string> provenance = {});

/// Subset in the given index order; manifest entries follow.
Dataset subset(const Dataset& ds, const std::vector<std::size_t>& indices);

/// `n` samples with randomized geometry; deterministic in `seed`.
Dataset generate_dataset(int n, Style style, std::uint64_t seed, int height = 64, int width = 64);

std::string manifest_to_json(const DatasetManifest& manifest);
DatasetManifest manifest_from_json(const std::string& text);

void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);
DatasetManifest load_manifest(const std::filesystem::path& path);

void save_sample(const ImageSample& sample, const std::filesystem::path& image_path,
                 const std::filesystem::path& mask_path);
ImageSample load_sample(const std::string& id, const std::filesystem::path& image_path,
                        const std::filesystem::path& mask_path, Domain domain);

/// Writes `<root>/images/<id>.png`, `<root>/masks/<id>.png`, `<root>/manifest.json`.
void save_dataset(const Dataset& ds, const std::filesystem::path& root);
Dataset load_dataset(const std::filesystem::path& root);

// ---------------------------------------------------------------------------
// Augmentation

struct AugmentConfig {
  double p_reflect = 0.2;
  double p_blur = 0.2;
  double p_translate = 0.2;
  double p_lines = 0.2;
  double p_starburst = 0.2;
  int blur_kernel = 7;
  double blur_sigma_min = 2.0;
  double blur_sigma_max = 7.0;
  int translate_max = 20;  // pixels, both axes
  int lines_min = 2;
  int lines_max = 9;
  bool starburst = true;
  bool reflection = true;

  /// All selection probabilities zero.
  static AugmentConfig none();
  /// Pixel ranges rescaled from the 640-pixel-wide reference resolution.
  AugmentConfig scaled_to_width(int width) const;
};

void validate(const AugmentConfig& cfg);

/// Applies, in order and each with its own probability: vertical-axis
/// reflection, Gaussian blur, translation, thin line corruption, starburst.
/// Exactly one selection draw per augmentation is taken from `rng`, followed
/// by that augmentation's parameter draws when it is selected.
ImageSample augment(const ImageSample& sample, const AugmentConfig& cfg, Rng& rng);

// Individual transforms, exposed for tests and tools.
ImageSample reflect_vertical_axis(const ImageSample& sample);
/// out(x, y) = in(x - dx, y - dy); vacated pixels become background with intensity 0.
ImageSample translate_sample(const ImageSample& sample, int dx, int dy);
Image gaussian_blur(const Image& image, int kernel, double sigma);
void draw_starburst(Image& image, double cx, double cy, double radius);

}  // namespace eyeadapt
