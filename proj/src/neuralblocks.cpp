#include "eyeadapt/neuralblocks.hpp"

#include <cstdio>

#include "eyeadapt/errors.hpp"

namespace eyeadapt {

namespace nn = torch::nn;
namespace F = torch::nn::functional;
using nlohmann::json;

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw ConfigError(what);
}

void require_positive(int v, const char* name) {
  require(v > 0, std::string(name) + " must be positive (got " + std::to_string(v) + ")");
}

nn::Conv2d conv(int in, int out, int kernel, int stride = 1, int padding = 0, bool bias = true) {
  return nn::Conv2d(nn::Conv2dOptions(in, out, kernel).stride(stride).padding(padding).bias(bias));
}

nn::InstanceNorm2d instance_norm(int channels) {
  return nn::InstanceNorm2d(nn::InstanceNorm2dOptions(channels));
}

nn::LeakyReLU leaky(double slope) { return nn::LeakyReLU(nn::LeakyReLUOptions().negative_slope(slope)); }

class SeedGuard {
 public:
  explicit SeedGuard(std::uint64_t seed) { torch::manual_seed(seed); }
};

}  // namespace

// ---------------------------------------------------------------------------
// Validation and JSON echo

void validate(const GeneratorSpec& s) {
  require_positive(s.channels, "generator channels");
  require_positive(s.base_width, "generator base width");
  require(s.residual_blocks >= 0, "generator residual block count must be non-negative");
  require_positive(s.height, "generator height");
  require_positive(s.width, "generator width");
  require(s.height % 4 == 0 && s.width % 4 == 0, "generator dims must be divisible by 4");
}

void validate(const DiscriminatorSpec& s) {
  require_positive(s.channels, "discriminator channels");
  require_positive(s.base_width, "discriminator base width");
  require_positive(s.blocks, "discriminator block count");
  require(s.stride == 2 || s.stride == 4, "discriminator stride must be 2 or 4");
  require(s.leaky_slope >= 0.0, "leaky slope must be non-negative");
  int h = s.height;
  int w = s.width;
  for (int b = 0; b < s.blocks; ++b) {
    h /= s.stride;
    w /= s.stride;
  }
  require(h >= 1 && w >= 1, "discriminator strides collapse the input below 1x1");
}

void validate(const SiameseEncoderSpec& s) {
  require_positive(s.channels, "siamese channels");
  require_positive(s.base_width, "siamese base width");
  require_positive(s.latent_dim, "siamese latent dim");
  require_positive(s.height, "siamese height");
  require_positive(s.width, "siamese width");
  require(s.backbone == SiameseBackbone::kSmallConv,
          "the Inceptionv4 siamese backbone is not implemented; use small-conv");
}

void validate(const SegmenterSpec& s) {
  require_positive(s.channels, "segmenter channels");
  require_positive(s.base_width, "segmenter base width");
  require_positive(s.down_blocks, "segmenter down blocks");
  require_positive(s.classes, "segmenter classes");
  require(s.up_blocks == s.down_blocks - 1, "segmenter needs exactly down_blocks - 1 up blocks");
  const int f = 1 << s.down_blocks;
  require(s.height % f == 0 && s.width % f == 0,
          "segmenter dims must be divisible by 2^down_blocks (" + std::to_string(f) + ")");
}

void validate(const DomainClassifierSpec& s) {
  require(s.input_dim > 0, "domain classifier input dim must be positive");
  require_positive(s.hidden, "domain classifier hidden width");
  require(s.layers >= 2, "domain classifier needs at least two layers");
}

json to_json(const GeneratorSpec& s) {
  return {{"channels", s.channels}, {"base_width", s.base_width}, {"residual_blocks", s.residual_blocks},
          {"identity_init", s.identity_init}, {"height", s.height}, {"width", s.width}};
}

json to_json(const DiscriminatorSpec& s) {
  return {{"channels", s.channels}, {"base_width", s.base_width}, {"blocks", s.blocks},
          {"stride", s.stride}, {"leaky_slope", s.leaky_slope}, {"height", s.height}, {"width", s.width}};
}

json to_json(const SiameseEncoderSpec& s) {
  return {{"channels", s.channels},
          {"base_width", s.base_width},
          {"latent_dim", s.latent_dim},
          {"backbone", s.backbone == SiameseBackbone::kSmallConv ? "small-conv" : "inceptionv4"},
          {"height", s.height},
          {"width", s.width}};
}

json to_json(const SegmenterSpec& s) {
  return {{"channels", s.channels}, {"base_width", s.base_width}, {"down_blocks", s.down_blocks},
          {"up_blocks", s.up_blocks}, {"classes", s.classes}, {"height", s.height}, {"width", s.width}};
}

json to_json(const DomainClassifierSpec& s) {
  return {{"input_dim", s.input_dim}, {"hidden", s.hidden}, {"layers", s.layers}};
}

GeneratorSpec generator_spec_from_json(const json& j) {
  GeneratorSpec s;
  s.channels = j.at("channels");
  s.base_width = j.at("base_width");
  s.residual_blocks = j.at("residual_blocks");
  s.identity_init = j.at("identity_init");
  s.height = j.at("height");
  s.width = j.at("width");
  return s;
}

DiscriminatorSpec discriminator_spec_from_json(const json& j) {
  DiscriminatorSpec s;
  s.channels = j.at("channels");
  s.base_width = j.at("base_width");
  s.blocks = j.at("blocks");
  s.stride = j.at("stride");
  s.leaky_slope = j.at("leaky_slope");
  s.height = j.at("height");
  s.width = j.at("width");
  return s;
}

SiameseEncoderSpec siamese_spec_from_json(const json& j) {
  SiameseEncoderSpec s;
  s.channels = j.at("channels");
  s.base_width = j.at("base_width");
  s.latent_dim = j.at("latent_dim");
  s.backbone = j.at("backbone") == "small-conv" ? SiameseBackbone::kSmallConv : SiameseBackbone::kInceptionV4;
  s.height = j.at("height");
  s.width = j.at("width");
  return s;
}

SegmenterSpec segmenter_spec_from_json(const json& j) {
  SegmenterSpec s;
  s.channels = j.at("channels");
  s.base_width = j.at("base_width");
  s.down_blocks = j.at("down_blocks");
  s.up_blocks = j.at("up_blocks");
  s.classes = j.at("classes");
  s.height = j.at("height");
  s.width = j.at("width");
  return s;
}

DomainClassifierSpec domain_classifier_spec_from_json(const json& j) {
  DomainClassifierSpec s;
  s.input_dim = j.at("input_dim");
  s.hidden = j.at("hidden");
  s.layers = j.at("layers");
  return s;
}

// ---------------------------------------------------------------------------
// Gradient reversal

namespace {

struct GradientReversalFn : public torch::autograd::Function<GradientReversalFn> {
  static torch::Tensor forward(torch::autograd::AutogradContext* ctx, const torch::Tensor& x, double scale) {
    ctx->saved_data["scale"] = scale;
    return x.clone();
  }

  static torch::autograd::variable_list backward(torch::autograd::AutogradContext* ctx,
                                                 torch::autograd::variable_list grad_out) {
    const double scale = ctx->saved_data["scale"].toDouble();
    return {grad_out[0] * (-scale), torch::Tensor()};
  }
};

}  // namespace

torch::Tensor gradient_reversal(const torch::Tensor& x, double scale) {
  if (!(scale >= 0.0)) throw ConfigError("gradient reversal scale must be non-negative");
  return GradientReversalFn::apply(x, scale);
}

// ---------------------------------------------------------------------------
// Generator

ResidualBlockImpl::ResidualBlockImpl(int channels) {
  body_ = register_module("body", nn::Sequential(nn::ReflectionPad2d(1), conv(channels, channels, 3),
                                                 instance_norm(channels), nn::ReLU(), nn::ReflectionPad2d(1),
                                                 conv(channels, channels, 3), instance_norm(channels)));
}

torch::Tensor ResidualBlockImpl::forward(const torch::Tensor& x) { return x + body_->forward(x); }

GeneratorImpl::GeneratorImpl(const GeneratorSpec& spec) : spec_(spec) {
  validate(spec);
  const int c = spec.channels;
  const int w = spec.base_width;
  nn::Sequential body(nn::ReflectionPad2d(3), conv(c, w, 7), instance_norm(w), nn::ReLU(),
                      conv(w, 2 * w, 3, 2, 1), instance_norm(2 * w), nn::ReLU(),
                      conv(2 * w, 4 * w, 3, 2, 1), instance_norm(4 * w), nn::ReLU());
  for (int i = 0; i < spec.residual_blocks; ++i) body->push_back(ResidualBlock(4 * w));
  const auto up = nn::UpsampleOptions().scale_factor(std::vector<double>{2.0, 2.0}).mode(torch::kNearest);
  body->push_back(nn::Upsample(up));
  body->push_back(conv(4 * w, 2 * w, 3, 1, 1));
  body->push_back(instance_norm(2 * w));
  body->push_back(nn::ReLU());
  body->push_back(nn::Upsample(up));
  body->push_back(conv(2 * w, w, 3, 1, 1));
  body->push_back(instance_norm(w));
  body->push_back(nn::ReLU());
  body->push_back(nn::ReflectionPad2d(3));
  body_ = register_module("body", body);
  out_ = register_module("out", conv(w, c, 7));
  if (spec.identity_init) {
    torch::NoGradGuard guard;
    out_->weight.zero_();
    out_->bias.zero_();
  }
}

torch::Tensor GeneratorImpl::forward(const torch::Tensor& x) { return x + out_->forward(body_->forward(x)); }

// ---------------------------------------------------------------------------
// Discriminator

DiscriminatorImpl::DiscriminatorImpl(const DiscriminatorSpec& spec) : spec_(spec) {
  validate(spec);
  const int kernel = 2 * spec.stride;
  const int pad = spec.stride / 2;
  nn::Sequential features;
  int in = spec.channels;
  int h = spec.height;
  int w = spec.width;
  for (int b = 0; b < spec.blocks; ++b) {
    const int out = spec.base_width << b;
    features->push_back(conv(in, out, kernel, spec.stride, pad));
    if (b > 0) features->push_back(instance_norm(out));
    features->push_back(leaky(spec.leaky_slope));
    in = out;
    h /= spec.stride;
    w /= spec.stride;
  }
  features_ = register_module("features", features);
  head_ = register_module("head", nn::Linear(std::int64_t{in} * h * w, 1));
}

torch::Tensor DiscriminatorImpl::forward(const torch::Tensor& x) {
  return head_->forward(features_->forward(x).flatten(1)).squeeze(1);
}

// ---------------------------------------------------------------------------
// Siamese encoder

SiameseEncoderImpl::SiameseEncoderImpl(const SiameseEncoderSpec& spec) : spec_(spec) {
  validate(spec);
  const int c = spec.channels;
  const int w = spec.base_width;
  trunk_ = register_module(
      "trunk", nn::Sequential(conv(c, w, 3, 2, 1), nn::ReLU(), conv(w, 2 * w, 3, 2, 1), nn::ReLU(),
                              conv(2 * w, 4 * w, 3, 2, 1), nn::ReLU(), conv(4 * w, 4 * w, 3, 2, 1), nn::ReLU(),
                              nn::AdaptiveAvgPool2d(nn::AdaptiveAvgPool2dOptions(1)), nn::Flatten()));
  head_ = register_module("head", nn::Linear(4 * w, spec.latent_dim));
}

torch::Tensor SiameseEncoderImpl::forward(const torch::Tensor& x) { return head_->forward(trunk_->forward(x)); }

std::pair<torch::Tensor, torch::Tensor> SiameseEncoderImpl::forward_pair(const torch::Tensor& a,
                                                                        const torch::Tensor& b) {
  return {forward(a), forward(b)};
}

// ---------------------------------------------------------------------------
// Segmenter

namespace {

nn::Sequential double_conv(int in, int out) {
  return nn::Sequential(conv(in, out, 3, 1, 1, false), nn::BatchNorm2d(out), leaky(0.01),
                        conv(out, out, 3, 1, 1, false), nn::BatchNorm2d(out), leaky(0.01));
}

torch::Tensor upsample2(const torch::Tensor& x) {
  return F::interpolate(x, F::InterpolateFuncOptions()
                               .scale_factor(std::vector<double>{2.0, 2.0})
                               .mode(torch::kBilinear)
                               .align_corners(false));
}

}  // namespace

SegmenterImpl::SegmenterImpl(const SegmenterSpec& spec) : spec_(spec) {
  validate(spec);
  const int w = spec.base_width;
  int in = spec.channels;
  for (int i = 0; i < spec.down_blocks; ++i) {
    const int out = w << i;
    down_.push_back(register_module("down" + std::to_string(i), double_conv(in, out)));
    in = out;
  }
  for (int j = 0; j < spec.up_blocks; ++j) {
    const int skip = w << (spec.down_blocks - 2 - j);
    up_.push_back(register_module("up" + std::to_string(j), double_conv(in + skip, skip)));
    in = skip;
  }
  head_ = register_module("head", nn::Sequential(conv(in + spec.channels, w, 3, 1, 1), leaky(0.01),
                                                 conv(w, spec.classes, 1)));
}

Encoded SegmenterImpl::encode(const torch::Tensor& x) {
  Encoded enc;
  enc.input = x;
  torch::Tensor h = x;
  for (std::size_t i = 0; i < down_.size(); ++i) {
    h = down_[i]->forward(F::avg_pool2d(h, F::AvgPool2dFuncOptions(2)));
    if (i + 1 < down_.size()) enc.skips.push_back(h);
  }
  enc.bottleneck = h;
  return enc;
}

torch::Tensor SegmenterImpl::decode(const Encoded& enc) {
  torch::Tensor h = enc.bottleneck;
  for (std::size_t j = 0; j < up_.size(); ++j) {
    const auto& skip = enc.skips[enc.skips.size() - 1 - j];
    h = up_[j]->forward(torch::cat({upsample2(h), skip}, 1));
  }
  return head_->forward(torch::cat({upsample2(h), enc.input}, 1));
}

std::vector<torch::Tensor> SegmenterImpl::encoder_parameters() const {
  std::vector<torch::Tensor> params;
  for (const auto& d : down_) {
    for (const auto& p : d->parameters()) params.push_back(p);
  }
  return params;
}

// ---------------------------------------------------------------------------
// Domain classifier

DomainClassifierImpl::DomainClassifierImpl(const DomainClassifierSpec& spec) : spec_(spec) {
  validate(spec);
  nn::Sequential layers;
  std::int64_t in = spec.input_dim;
  std::int64_t width = spec.hidden;
  for (int i = 0; i < spec.layers; ++i) {
    const bool last = i + 1 == spec.layers;
    const std::int64_t out = last ? 1 : std::max<std::int64_t>(2, width);
    layers->push_back(nn::Linear(in, out));
    if (!last) layers->push_back(nn::ReLU());
    in = out;
    width /= 2;
  }
  layers_ = register_module("layers", layers);
}

torch::Tensor DomainClassifierImpl::logits(const torch::Tensor& latent) {
  return layers_->forward(latent.flatten(1)).squeeze(1);
}

torch::Tensor DomainClassifierImpl::forward(const torch::Tensor& latent) { return torch::sigmoid(logits(latent)); }

// ---------------------------------------------------------------------------
// Builders

Generator build_generator(const GeneratorSpec& spec, std::uint64_t seed) {
  SeedGuard guard(seed);
  return Generator(spec);
}

Discriminator build_discriminator(const DiscriminatorSpec& spec, std::uint64_t seed) {
  SeedGuard guard(seed);
  return Discriminator(spec);
}

SiameseEncoder build_siamese(const SiameseEncoderSpec& spec, std::uint64_t seed) {
  SeedGuard guard(seed);
  return SiameseEncoder(spec);
}

Segmenter build_segmenter(const SegmenterSpec& spec, std::uint64_t seed) {
  SeedGuard guard(seed);
  return Segmenter(spec);
}

DomainClassifier build_domain_classifier(const DomainClassifierSpec& spec, std::uint64_t seed) {
  SeedGuard guard(seed);
  return DomainClassifier(spec);
}

torch::Tensor encoder_bottleneck(Segmenter& model, const torch::Tensor& images) {
  torch::Tensor x = images;
  if (x.dim() == 2) x = x.unsqueeze(0);
  if (x.dim() == 3) x = x.unsqueeze(0);
  const auto& s = model->spec();
  if (x.dim() != 4 || x.size(1) != s.channels || x.size(2) != s.height || x.size(3) != s.width) {
    throw ConfigError("dimension mismatch: segmenter expects [B," + std::to_string(s.channels) + "," +
                      std::to_string(s.height) + "," + std::to_string(s.width) + "] input");
  }
  return model->encode(x).bottleneck;
}

std::string parameter_hash(const torch::nn::Module& module) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](const torch::Tensor& t) {
    const auto c = t.detach().contiguous().to(torch::kCPU);
    const auto* bytes = static_cast<const unsigned char*>(c.data_ptr());
    const auto n = static_cast<std::size_t>(c.numel()) * c.element_size();
    for (std::size_t i = 0; i < n; ++i) {
      h ^= bytes[i];
      h *= 0x100000001b3ULL;
    }
  };
  for (const auto& p : module.named_parameters(true)) mix(p.value());
  for (const auto& b : module.named_buffers(true)) mix(b.value());
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace eyeadapt
