#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>
#include <torch/torch.h>

namespace eyeadapt {

// ---------------------------------------------------------------------------
// Architecture specs. Every spec carries the image dims it was built for so
// checkpoints can refuse mismatched inputs.

/// ResNet-style translator: stem conv, x4 downsampling, residual blocks, x4
/// upsampling, output conv. The output is added to the input image, so a
/// zero-initialized output conv makes a fresh generator the identity map.
struct GeneratorSpec {
  int channels = 1;
  int base_width = 8;
  int residual_blocks = 2;  // 8 at paper scale
  bool identity_init = true;
  int height = 64;
  int width = 64;

  friend bool operator==(const GeneratorSpec&, const GeneratorSpec&) = default;
};

/// Four strided conv blocks with leaky ReLU, then one linear logit.
struct DiscriminatorSpec {
  int channels = 1;
  int base_width = 8;
  int blocks = 4;
  int stride = 2;  // 4 restores the paper-scale stride for 400x640 inputs
  double leaky_slope = 0.2;
  int height = 64;
  int width = 64;

  friend bool operator==(const DiscriminatorSpec&, const DiscriminatorSpec&) = default;
};

enum class SiameseBackbone { kSmallConv, kInceptionV4 };

struct SiameseEncoderSpec {
  int channels = 1;
  int base_width = 8;
  int latent_dim = 2;
  SiameseBackbone backbone = SiameseBackbone::kSmallConv;
  int height = 64;
  int width = 64;

  friend bool operator==(const SiameseEncoderSpec&, const SiameseEncoderSpec&) = default;
};

/// U-net: each down block halves resolution, up blocks concatenate the
/// matching encoder output, a full-resolution head emits K logits.
struct SegmenterSpec {
  int channels = 1;
  int base_width = 8;
  int down_blocks = 5;
  int up_blocks = 4;
  int classes = 4;
  int height = 64;
  int width = 64;

  int bottleneck_channels() const { return base_width << (down_blocks - 1); }
  int bottleneck_height() const { return height >> down_blocks; }
  int bottleneck_width() const { return width >> down_blocks; }
  std::int64_t bottleneck_size() const {
    return std::int64_t{bottleneck_channels()} * bottleneck_height() * bottleneck_width();
  }

  friend bool operator==(const SegmenterSpec&, const SegmenterSpec&) = default;
};

/// Five dense layers, ReLU between them, sigmoid output.
struct DomainClassifierSpec {
  std::int64_t input_dim = 512;
  int hidden = 64;
  int layers = 5;

  friend bool operator==(const DomainClassifierSpec&, const DomainClassifierSpec&) = default;
};

void validate(const GeneratorSpec& spec);
void validate(const DiscriminatorSpec& spec);
void validate(const SiameseEncoderSpec& spec);
void validate(const SegmenterSpec& spec);
void validate(const DomainClassifierSpec& spec);

nlohmann::json to_json(const GeneratorSpec& spec);
nlohmann::json to_json(const DiscriminatorSpec& spec);
nlohmann::json to_json(const SiameseEncoderSpec& spec);
nlohmann::json to_json(const SegmenterSpec& spec);
nlohmann::json to_json(const DomainClassifierSpec& spec);

GeneratorSpec generator_spec_from_json(const nlohmann::json& j);
DiscriminatorSpec discriminator_spec_from_json(const nlohmann::json& j);
SiameseEncoderSpec siamese_spec_from_json(const nlohmann::json& j);
SegmenterSpec segmenter_spec_from_json(const nlohmann::json& j);
DomainClassifierSpec domain_classifier_spec_from_json(const nlohmann::json& j);

// ---------------------------------------------------------------------------
// Gradient reversal

/// Identity in the forward pass; multiplies the incoming gradient by -scale
/// in the backward pass.
torch::Tensor gradient_reversal(const torch::Tensor& x, double scale);

// ---------------------------------------------------------------------------
// Modules

class ResidualBlockImpl : public torch::nn::Module {
 public:
  explicit ResidualBlockImpl(int channels);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  torch::nn::Sequential body_{nullptr};
};
TORCH_MODULE(ResidualBlock);

class GeneratorImpl : public torch::nn::Module {
 public:
  explicit GeneratorImpl(const GeneratorSpec& spec);
  torch::Tensor forward(const torch::Tensor& x);
  const GeneratorSpec& spec() const { return spec_; }

 private:
  GeneratorSpec spec_;
  torch::nn::Sequential body_{nullptr};
  torch::nn::Conv2d out_{nullptr};
};
TORCH_MODULE(Generator);

class DiscriminatorImpl : public torch::nn::Module {
 public:
  explicit DiscriminatorImpl(const DiscriminatorSpec& spec);
  /// Returns one logit per image, shape [B].
  torch::Tensor forward(const torch::Tensor& x);
  const DiscriminatorSpec& spec() const { return spec_; }

 private:
  DiscriminatorSpec spec_;
  torch::nn::Sequential features_{nullptr};
  torch::nn::Linear head_{nullptr};
};
TORCH_MODULE(Discriminator);

class SiameseEncoderImpl : public torch::nn::Module {
 public:
  explicit SiameseEncoderImpl(const SiameseEncoderSpec& spec);
  /// [B, C, H, W] -> [B, latent_dim]
  torch::Tensor forward(const torch::Tensor& x);
  /// Both inputs go through the same weights.
  std::pair<torch::Tensor, torch::Tensor> forward_pair(const torch::Tensor& a, const torch::Tensor& b);
  const SiameseEncoderSpec& spec() const { return spec_; }

 private:
  SiameseEncoderSpec spec_;
  torch::nn::Sequential trunk_{nullptr};
  torch::nn::Linear head_{nullptr};
};
TORCH_MODULE(SiameseEncoder);

/// Encoder output: the bottleneck plus per-level skip features.
struct Encoded {
  torch::Tensor bottleneck;
  std::vector<torch::Tensor> skips;
  torch::Tensor input;
};

class SegmenterImpl : public torch::nn::Module {
 public:
  explicit SegmenterImpl(const SegmenterSpec& spec);
  Encoded encode(const torch::Tensor& x);
  /// Per-pixel logits [B, K, H, W].
  torch::Tensor decode(const Encoded& enc);
  torch::Tensor forward(const torch::Tensor& x) { return decode(encode(x)); }

  /// Parameters of the encoder half only (down blocks).
  std::vector<torch::Tensor> encoder_parameters() const;
  const SegmenterSpec& spec() const { return spec_; }

 private:
  SegmenterSpec spec_;
  std::vector<torch::nn::Sequential> down_;
  std::vector<torch::nn::Sequential> up_;
  torch::nn::Sequential head_{nullptr};
};
TORCH_MODULE(Segmenter);

class DomainClassifierImpl : public torch::nn::Module {
 public:
  explicit DomainClassifierImpl(const DomainClassifierSpec& spec);
  /// Flattens its input and returns probabilities in (0,1), shape [B].
  torch::Tensor forward(const torch::Tensor& latent);
  /// Pre-sigmoid output, shape [B].
  torch::Tensor logits(const torch::Tensor& latent);
  const DomainClassifierSpec& spec() const { return spec_; }

 private:
  DomainClassifierSpec spec_;
  torch::nn::Sequential layers_{nullptr};
};
TORCH_MODULE(DomainClassifier);

// Builders seed torch's generator so initial parameters are a function of `seed`.
Generator build_generator(const GeneratorSpec& spec, std::uint64_t seed);
Discriminator build_discriminator(const DiscriminatorSpec& spec, std::uint64_t seed);
SiameseEncoder build_siamese(const SiameseEncoderSpec& spec, std::uint64_t seed);
Segmenter build_segmenter(const SegmenterSpec& spec, std::uint64_t seed);
DomainClassifier build_domain_classifier(const DomainClassifierSpec& spec, std::uint64_t seed);

/// Encoder output for a batch [B, C, H, W] (or a single [C, H, W] / [H, W]
/// image). Throws ConfigError if dims do not match the spec.
torch::Tensor encoder_bottleneck(Segmenter& model, const torch::Tensor& images);

/// Hex digest of all parameters and buffers; used to detect which models a
/// training phase touched.
std::string parameter_hash(const torch::nn::Module& module);

// ---------------------------------------------------------------------------
// Checkpoints

struct CheckpointMeta {
  std::string kind;         // generator, discriminator, siamese, segmenter, domain_classifier
  nlohmann::json spec;      // echo of the spec the parameters belong to
  std::uint64_t seed = 0;
  std::int64_t step = 0;
};

void save_checkpoint(const std::filesystem::path& path, const CheckpointMeta& meta,
                     const torch::nn::Module& module);
CheckpointMeta read_checkpoint_meta(const std::filesystem::path& path);
/// Loads parameters into `module`; throws ConfigError if the stored kind or
/// spec differs from `expected`.
CheckpointMeta load_checkpoint(const std::filesystem::path& path, torch::nn::Module& module,
                               const std::string& expected_kind, const nlohmann::json& expected_spec);

Generator load_generator(const std::filesystem::path& path);
SiameseEncoder load_siamese(const std::filesystem::path& path);
Segmenter load_segmenter(const std::filesystem::path& path);

}  // namespace eyeadapt
