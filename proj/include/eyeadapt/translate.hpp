#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>

#include <torch/torch.h>

#include "eyeadapt/datakit.hpp"
#include "eyeadapt/history.hpp"
#include "eyeadapt/losses.hpp"
#include "eyeadapt/neuralblocks.hpp"

namespace eyeadapt {

enum class TranslateMode { kCgan, kSrcgan };

std::string_view to_string(TranslateMode m);
TranslateMode parse_translate_mode(std::string_view text);

struct TranslateConfig {
  TranslateMode mode = TranslateMode::kSrcgan;
  LossWeights weights;
  double lr = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  int batch_size = 8;
  int epochs = 12;
  std::uint64_t seed = 0;
  int checkpoint_every = 0;  // epochs between intermediate checkpoints; 0 keeps only the final one
  bool image_pool = false;   // reserved, not implemented
  GeneratorSpec generator;
  DiscriminatorSpec discriminator;

  /// Loss weights actually used: cgan mode zeroes edge, mean and var.
  LossWeights effective_weights() const;
};

void validate(const TranslateConfig& cfg);

/// One aligned pair of source and target batches.
struct TranslateBatch {
  torch::Tensor s;       // [B, 1, H, W]
  torch::Tensor s_mask;  // [B, H, W]
  torch::Tensor r;
  torch::Tensor r_mask;
};

/// Owns both generators, both discriminators and their optimizers.
class TranslatorTrainer {
 public:
  explicit TranslatorTrainer(const TranslateConfig& cfg);

  /// Updates D_S and D_R only. Returns loss_d_s and loss_d_r.
  std::map<std::string, double> step_discriminators(const TranslateBatch& batch);
  /// Updates G_SR and G_RS only. Returns the raw value of every objective
  /// term plus the weighted total.
  std::map<std::string, double> step_generators(const TranslateBatch& batch);

  /// Raw component losses for a batch without touching any parameter.
  std::map<std::string, double> evaluate(const TranslateBatch& batch);

  Generator& g_sr() { return g_sr_; }
  Generator& g_rs() { return g_rs_; }
  Discriminator& d_s() { return d_s_; }
  Discriminator& d_r() { return d_r_; }
  const TranslateConfig& config() const { return cfg_; }
  std::int64_t step() const { return step_; }
  void advance() { ++step_; }

 private:
  SrcganParts generator_parts(const TranslateBatch& batch);

  TranslateConfig cfg_;
  LossWeights weights_;
  Generator g_sr_{nullptr};
  Generator g_rs_{nullptr};
  Discriminator d_s_{nullptr};
  Discriminator d_r_{nullptr};
  std::unique_ptr<torch::optim::Adam> opt_g_;
  std::unique_ptr<torch::optim::Adam> opt_d_;
  std::int64_t step_ = 0;
};

struct TranslateResult {
  Generator g_sr{nullptr};
  Generator g_rs{nullptr};
  Discriminator d_s{nullptr};
  Discriminator d_r{nullptr};
  History history;  // one row per term per epoch, epoch-averaged
  std::int64_t steps = 0;
};

/// Alternating D/G training over shuffled epochs. When `out_dir` is given,
/// checkpoints and history.csv are written there.
TranslateResult train_translator(const Dataset& source, const Dataset& target, const TranslateConfig& cfg,
                                 const std::filesystem::path& out_dir = {});

/// Images G(s) paired with the original masks, ids preserved, domain source.
Dataset translate_dataset(Generator& generator, const Dataset& source, const std::string& generator_id);
/// Loads a generator checkpoint and checks its dims against the dataset.
Dataset translate_dataset(const std::filesystem::path& checkpoint, const Dataset& source);

}  // namespace eyeadapt
