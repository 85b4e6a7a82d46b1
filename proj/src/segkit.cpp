#include "eyeadapt/segkit.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <limits>

#include "eyeadapt/errors.hpp"
#include "eyeadapt/evalkit.hpp"
#include "eyeadapt/tensors.hpp"

namespace eyeadapt {

std::string_view to_string(SegMode m) { return m == SegMode::kRitnet ? "ritnet" : "dann"; }

SegMode parse_seg_mode(std::string_view text) {
  if (text == "ritnet") return SegMode::kRitnet;
  if (text == "dann") return SegMode::kDann;
  throw ConfigError("unknown segmentation mode '" + std::string(text) + "' (expected ritnet or dann)");
}

void validate(const SegTrainConfig& cfg) {
  validate(cfg.weights);
  validate(cfg.segmenter);
  if (cfg.n_real < 0) throw ConfigError("n_real must be >= 0");
  if (cfg.mode == SegMode::kDann) {
    if (cfg.n_real < 1) throw ConfigError("dann mode needs n_real >= 1 (use ritnet mode for N = 0)");
    validate(cfg.classifier);
    if (cfg.classifier.input_dim != cfg.segmenter.bottleneck_size()) {
      throw ConfigError("domain classifier input_dim " + std::to_string(cfg.classifier.input_dim) +
                        " does not match the segmenter bottleneck size " +
                        std::to_string(cfg.segmenter.bottleneck_size()));
    }
  }
  if (cfg.epochs < 0) throw ConfigError("seg epochs must be >= 0");
  if (!(cfg.epoch_multiplier > 0.0)) throw ConfigError("seg epoch_multiplier must be positive");
  if (cfg.batch_size < 1) throw ConfigError("seg batch_size must be >= 1");
  if (!(cfg.lr > 0.0)) throw ConfigError("seg lr must be positive");
  if (cfg.grl_ramp_steps < 0) throw ConfigError("grl_ramp_steps must be >= 0");
  if (cfg.folds < 1) throw ConfigError("folds must be >= 1");
}

int epoch_schedule(int m, int n, double multiplier) {
  static constexpr std::array<int, 5> kM = {64, 256, 1024, 2048, 4096};
  static constexpr std::array<int, 3> kN = {0, 64, 8192};
  static constexpr int kTable[3][5] = {
      {1600, 800, 200, 100, 70},
      {400, 150, 120, 100, 70},
      {120, 100, 80, 70, 60},
  };
  const auto nearest = [](const auto& axis, int v) {
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < axis.size(); ++i) {
      const double d = std::abs(std::log1p(double(std::max(v, 0))) - std::log1p(double(axis[i])));
      if (d < best_d) {
        best_d = d;
        best = i;
      }
    }
    return best;
  };
  const int cell = kTable[nearest(kN, n)][nearest(kM, m)];
  return std::max(1, static_cast<int>(std::lround(cell * multiplier)));
}

BatchMixer::BatchMixer(std::size_t source_size, const std::vector<std::size_t>& target_pool, std::size_t n_real,
                       std::size_t batch_size, Rng& rng)
    : source_size_(source_size), batch_size_(batch_size) {
  if (n_real > target_pool.size()) {
    throw ConfigError("n_real " + std::to_string(n_real) + " exceeds the " + std::to_string(target_pool.size()) +
                      " target images available for training");
  }
  if (batch_size == 0) throw ConfigError("batch size must be >= 1");
  if (source_size + n_real == 0) throw DataError("no training samples");
  const auto perm = permutation(target_pool.size(), rng);
  for (std::size_t i = 0; i < n_real; ++i) chosen_.push_back(target_pool[perm[i]]);
}

std::size_t BatchMixer::batches_per_epoch() const {
  return (source_size_ + chosen_.size() + batch_size_ - 1) / batch_size_;
}

std::vector<std::vector<BatchItem>> BatchMixer::epoch(Rng& rng) const {
  std::vector<BatchItem> items;
  items.reserve(source_size_ + chosen_.size());
  for (std::size_t i = 0; i < source_size_; ++i) items.push_back({true, i});
  for (auto t : chosen_) items.push_back({false, t});
  rng.shuffle(items);
  std::vector<std::vector<BatchItem>> batches;
  for (std::size_t start = 0; start < items.size(); start += batch_size_) {
    batches.emplace_back(items.begin() + start, items.begin() + std::min(items.size(), start + batch_size_));
  }
  return batches;
}

torch::Tensor domain_adversarial_loss(const torch::Tensor& bottleneck, DomainClassifier& classifier,
                                      const torch::Tensor& labels, double grl_scale, bool balanced) {
  const auto pred = classifier->forward(gradient_reversal(bottleneck, grl_scale));
  if (!balanced) return domain_bce_loss(pred, labels);
  // each domain present in the batch contributes half, split evenly over its samples
  const auto l = labels.to(pred.scalar_type());
  const auto n_t = l.sum(), n_s = l.numel() - n_t;
  const auto w = torch::where(l > 0.5, 0.5 / n_t.clamp_min(1), 0.5 / n_s.clamp_min(1)) * l.numel();
  const auto p = pred.clamp(1e-7, 1.0 - 1e-7);
  return -(w * (l * p.log() + (1.0 - l) * (1.0 - p).log())).mean();
}

SegmentationTrainer::SegmentationTrainer(const SegTrainConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  validate(cfg);
  Rng rng(seed);
  model_ = build_segmenter(cfg.segmenter, rng.fork_seed());
  auto params = model_->parameters();
  if (cfg.mode == SegMode::kDann) {
    classifier_ = build_domain_classifier(cfg.classifier, rng.fork_seed());
    for (const auto& p : classifier_->parameters()) params.push_back(p);
  }
  opt_ = std::make_unique<torch::optim::Adam>(params, torch::optim::AdamOptions(cfg.lr));
}

double SegmentationTrainer::current_grl_scale() const {
  if (cfg_.grl_ramp_steps <= 0) return cfg_.weights.grl_scale;
  return cfg_.weights.grl_scale * std::min(1.0, static_cast<double>(step_) / cfg_.grl_ramp_steps);
}

std::map<std::string, double> SegmentationTrainer::step(const torch::Tensor& images, const torch::Tensor& masks,
                                                        const torch::Tensor& labels) {
  model_->train();
  opt_->zero_grad();
  const auto enc = model_->encode(images);
  const auto logits = model_->decode(enc);
  const auto seg = segmentation_loss(logits, masks, cfg_.weights);
  std::map<std::string, double> out{{"segmentation", seg.item<double>()}};
  auto total = seg;
  if (has_domain_classifier()) {
    classifier_->train();
    const auto dom = domain_adversarial_loss(enc.bottleneck, classifier_, labels, current_grl_scale(), cfg_.balance_domains);
    out["domain"] = dom.item<double>();
    total = total + dom;
  }
  out["total"] = total.item<double>();
  for (const auto& [term, v] : out) guard_finite(v, term, step_);
  total.backward();
  opt_->step();
  ++step_;
  return out;
}

void SegmentationTrainer::set_encoder_frozen(bool frozen) {
  for (auto& p : model_->encoder_parameters()) p.requires_grad_(!frozen);
}

double SegmentationTrainer::domain_accuracy(const torch::Tensor& images, const torch::Tensor& labels) {
  if (!has_domain_classifier()) throw ConfigError("no domain classifier in ritnet mode");
  torch::NoGradGuard guard;
  model_->eval();
  classifier_->eval();
  const auto p = classifier_->forward(model_->encode(images).bottleneck);
  const auto hit = (p > 0.5).to(torch::kInt64).eq(labels.to(torch::kInt64));
  model_->train();
  classifier_->train();
  return hit.to(torch::kFloat64).mean().item<double>();
}

torch::Tensor predict_masks(Segmenter& model, const torch::Tensor& images) {
  torch::NoGradGuard guard;
  model->eval();
  return model->forward(images).argmax(1);
}

nlohmann::json SegResult::metrics_json(const SegTrainConfig& cfg) const {
  nlohmann::json folds_json = nlohmann::json::array();
  for (const auto& f : folds) {
    folds_json.push_back({{"fold", f.fold},
                          {"miou", f.miou},
                          {"train_source", f.train_source},
                          {"train_target", f.train_target},
                          {"validation", f.validation},
                          {"epochs", f.epochs}});
  }
  return {{"mode", std::string(to_string(mode))},
          {"m_source", m_source},
          {"n_real", n_real},
          {"seed", cfg.seed},
          {"loss_weights",
           {{"gdl", cfg.weights.gdl},
            {"bal", cfg.weights.bal},
            {"surface", cfg.weights.surface},
            {"bal_beta", cfg.weights.bal_beta},
            {"grl_scale", cfg.mode == SegMode::kDann ? nlohmann::json(cfg.weights.grl_scale) : nlohmann::json()}}},
          {"folds", folds_json},
          {"miou_mean", mean},
          {"miou_std", std ? nlohmann::json(*std) : nlohmann::json()}};
}

namespace {

double validate_fold(Segmenter& model, const Dataset& target, const std::vector<std::size_t>& held) {
  std::vector<double> scores;
  constexpr std::size_t kChunk = 32;
  for (std::size_t start = 0; start < held.size(); start += kChunk) {
    std::vector<std::size_t> idx(held.begin() + start, held.begin() + std::min(held.size(), start + kChunk));
    const auto pred = predict_masks(model, images_to_tensor(target.samples, idx));
    for (std::size_t j = 0; j < idx.size(); ++j) {
      scores.push_back(miou(tensor_to_mask(pred[static_cast<std::int64_t>(j)]), target.samples[idx[j]].mask));
    }
  }
  return mean_std(scores).mean;
}

}  // namespace

SegResult train_segmenter(const Dataset& source, const Dataset& target, const SegTrainConfig& cfg,
                          const std::filesystem::path& out_dir) {
  validate(cfg);
  if (source.empty()) throw DataError("segmentation training needs a nonempty source set");
  if (target.size() < static_cast<std::size_t>(cfg.folds)) {
    throw DataError("target set has " + std::to_string(target.size()) + " images, fewer than " +
                    std::to_string(cfg.folds) + " folds");
  }
  for (const auto* ds : {&source, &target}) {
    const auto& img = ds->samples.front().image;
    if (img.height != cfg.segmenter.height || img.width != cfg.segmenter.width) {
      throw ConfigError("segmenter spec dims do not match the data");
    }
  }

  Rng split_rng(cfg.seed);
  const auto order = permutation(target.size(), split_rng);
  const AugmentConfig aug = cfg.augment ? AugmentConfig{}.scaled_to_width(cfg.segmenter.width) : AugmentConfig::none();

  SegResult res;
  res.mode = cfg.mode;
  res.n_real = cfg.n_real;
  res.m_source = source.size();
  std::vector<double> scores;
  for (int k = 0; k < cfg.folds; ++k) {
    const std::size_t lo = order.size() * k / cfg.folds;
    const std::size_t hi = order.size() * (k + 1) / cfg.folds;
    std::vector<std::size_t> held(order.begin() + lo, order.begin() + hi);
    std::vector<std::size_t> pool(order.begin(), order.begin() + lo);
    pool.insert(pool.end(), order.begin() + hi, order.end());

    const std::uint64_t fold_seed = cfg.seed + static_cast<std::uint64_t>(k);
    Rng rng(fold_seed);
    BatchMixer mixer(source.size(), pool, static_cast<std::size_t>(cfg.n_real),
                     static_cast<std::size_t>(cfg.batch_size), rng);
    SegmentationTrainer trainer(cfg, rng.fork_seed());
    const int epochs =
        cfg.epochs > 0 ? cfg.epochs : epoch_schedule(static_cast<int>(source.size()), cfg.n_real, cfg.epoch_multiplier);

    FoldResult fr;
    fr.fold = k;
    fr.epochs = epochs;
    fr.train_source = source.size();
    fr.train_target = mixer.chosen_target().size();
    fr.validation = held.size();
    for (int e = 0; e < epochs; ++e) {
      std::map<std::string, double> sums;
      const auto batches = mixer.epoch(rng);
      for (const auto& batch : batches) {
        std::vector<ImageSample> samples;
        std::vector<std::int64_t> labels;
        for (const auto& item : batch) {
          const auto& s = item.source ? source.samples[item.index] : target.samples[item.index];
          samples.push_back(cfg.augment ? augment(s, aug, rng) : s);
          labels.push_back(item.label());
        }
        const auto stats = trainer.step(images_to_tensor(samples), masks_to_tensor(samples), torch::tensor(labels));
        for (const auto& [term, v] : stats) sums[term] += v;
      }
      for (const auto& [term, v] : sums) {
        fr.history.push_back({trainer.steps(), term, v / static_cast<double>(batches.size())});
      }
    }
    fr.model = trainer.model();
    fr.miou = validate_fold(fr.model, target, held);
    scores.push_back(fr.miou);
    if (!out_dir.empty()) {
      save_checkpoint(out_dir / ("fold_" + std::to_string(k) + ".ckpt"),
                      {"segmenter", to_json(cfg.segmenter), fold_seed, trainer.steps()}, *fr.model);
      write_history_csv(fr.history, out_dir / ("history_fold_" + std::to_string(k) + ".csv"));
    }
    res.folds.push_back(std::move(fr));
  }
  const auto ms = mean_std(scores);
  res.mean = ms.mean;
  res.std = ms.std;
  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    std::ofstream(out_dir / "metrics.json") << res.metrics_json(cfg).dump(2) << '\n';
  }
  return res;
}

}  // namespace eyeadapt
