#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>
#include <torch/torch.h>

#include "eyeadapt/datakit.hpp"
#include "eyeadapt/history.hpp"
#include "eyeadapt/losses.hpp"
#include "eyeadapt/neuralblocks.hpp"

namespace eyeadapt {

enum class SegMode { kRitnet, kDann };

std::string_view to_string(SegMode m);
SegMode parse_seg_mode(std::string_view text);

/// Domain labels used by the classifier.
inline constexpr int kSourceLabel = 0;
inline constexpr int kTargetLabel = 1;

struct SegTrainConfig {
  SegMode mode = SegMode::kRitnet;
  int n_real = 0;
  int epochs = 0;                  // 0 derives the count from epoch_schedule
  double epoch_multiplier = 0.05;  // desk-scale factor applied to the schedule
  int batch_size = 8;
  double lr = 2e-3;
  LossWeights weights;
  int grl_ramp_steps = 0;  // 0 applies grl_scale from the first step
  bool balance_domains = true;  // each domain present in a batch carries half the domain loss
  int folds = 3;
  bool augment = true;
  std::uint64_t seed = 0;
  SegmenterSpec segmenter;
  DomainClassifierSpec classifier;
};

void validate(const SegTrainConfig& cfg);

/// Paper schedule for (M source, N real) training, with nearest-cell fallback
/// on a log scale and `multiplier` applied (result at least 1).
int epoch_schedule(int m, int n, double multiplier = 1.0);

struct BatchItem {
  bool source = true;
  std::size_t index = 0;

  int label() const { return source ? kSourceLabel : kTargetLabel; }
  friend bool operator==(const BatchItem&, const BatchItem&) = default;
};

/// Draws a fixed subset of N target indices once, then yields shuffled
/// epochs that interleave every source sample with every chosen target sample.
class BatchMixer {
 public:
  BatchMixer(std::size_t source_size, const std::vector<std::size_t>& target_pool, std::size_t n_real,
             std::size_t batch_size, Rng& rng);

  std::vector<std::vector<BatchItem>> epoch(Rng& rng) const;
  const std::vector<std::size_t>& chosen_target() const { return chosen_; }
  std::size_t batches_per_epoch() const;

 private:
  std::size_t source_size_;
  std::size_t batch_size_;
  std::vector<std::size_t> chosen_;
};

/// Domain classification loss on the reversed bottleneck: the classifier
/// receives the ordinary gradient, everything upstream of the bottleneck the
/// negated and scaled one.
torch::Tensor domain_adversarial_loss(const torch::Tensor& bottleneck, DomainClassifier& classifier,
                                      const torch::Tensor& labels, double grl_scale, bool balanced = false);

class SegmentationTrainer {
 public:
  SegmentationTrainer(const SegTrainConfig& cfg, std::uint64_t seed);

  /// One optimization step on a labeled batch. Returns "segmentation",
  /// "total" and, in dann mode, "domain".
  std::map<std::string, double> step(const torch::Tensor& images, const torch::Tensor& masks,
                                     const torch::Tensor& labels);

  /// Freezing stops encoder updates; the decoder and classifier still train.
  void set_encoder_frozen(bool frozen);
  /// Fraction of images the classifier assigns to the right domain.
  double domain_accuracy(const torch::Tensor& images, const torch::Tensor& labels);
  bool has_domain_classifier() const { return !classifier_.is_empty(); }
  double current_grl_scale() const;

  Segmenter& model() { return model_; }
  DomainClassifier& classifier() { return classifier_; }
  std::int64_t steps() const { return step_; }

 private:
  SegTrainConfig cfg_;
  Segmenter model_{nullptr};
  DomainClassifier classifier_{nullptr};
  std::unique_ptr<torch::optim::Adam> opt_;
  std::int64_t step_ = 0;
};

/// Argmax class map per image, [B, H, W] int64, computed in eval mode.
torch::Tensor predict_masks(Segmenter& model, const torch::Tensor& images);

struct FoldResult {
  int fold = 0;
  double miou = 0.0;
  std::size_t train_source = 0;
  std::size_t train_target = 0;
  std::size_t validation = 0;
  int epochs = 0;
  History history;
  Segmenter model{nullptr};
};

struct SegResult {
  SegMode mode = SegMode::kRitnet;
  std::vector<FoldResult> folds;
  double mean = 0.0;
  std::optional<double> std;  // Bessel-corrected; absent for a single fold
  int n_real = 0;
  std::size_t m_source = 0;

  nlohmann::json metrics_json(const SegTrainConfig& cfg) const;
};

/// k-fold protocol: the target set is shuffled once by seed and cut into
/// `folds` parts. Fold k trains a fresh model on the source set plus N real
/// images drawn from the other parts and reports mean per-image mIoU on part k.
/// With `out_dir`, writes fold_<k>.ckpt and metrics.json.
SegResult train_segmenter(const Dataset& source, const Dataset& target, const SegTrainConfig& cfg,
                          const std::filesystem::path& out_dir = {});

}  // namespace eyeadapt
