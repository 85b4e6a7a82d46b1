#include "doctest_torch.hpp"

#include <cmath>
#include <fstream>
#include <set>

#include <json.hpp>
#include <torch/torch.h>

#include "eyeadapt/errors.hpp"
#include "eyeadapt/segkit.hpp"
#include "eyeadapt/tensors.hpp"
#include "test_util.hpp"

using namespace eyeadapt;
using doctest::Approx;

namespace {

SegTrainConfig small_config(SegMode mode, int n_real) {
  SegTrainConfig cfg;
  cfg.mode = mode;
  cfg.n_real = n_real;
  cfg.epochs = 1;
  cfg.seed = 5;
  cfg.segmenter.height = cfg.segmenter.width = 32;
  cfg.classifier.input_dim = cfg.segmenter.bottleneck_size();
  return cfg;
}

}  // namespace

TEST_CASE("epoch schedule cells") {
  CHECK(epoch_schedule(64, 0) == 1600);
  CHECK(epoch_schedule(2048, 64) == 100);
  CHECK(epoch_schedule(4096, 8192) == 60);
  CHECK(epoch_schedule(256, 0) == 800);
  SUBCASE("off-grid sizes use the nearest cell on a log scale") {
    CHECK(epoch_schedule(200, 0) == 800);
    CHECK(epoch_schedule(1500, 8000) == 70);
  }
  SUBCASE("multiplier rounds and never drops below one") {
    CHECK(epoch_schedule(200, 0, 0.05) == 40);
    CHECK(epoch_schedule(4096, 8192, 1e-6) == 1);
  }
}

TEST_CASE("batch mixer") {
  std::vector<std::size_t> pool = {10, 11, 12, 13, 14};
  SUBCASE("N = 0 yields only source items, each once per epoch") {
    Rng rng(1);
    BatchMixer m(9, pool, 0, 4, rng);
    CHECK(m.chosen_target().empty());
    const auto batches = m.epoch(rng);
    CHECK(batches.size() == 3);
    std::multiset<std::size_t> seen;
    for (const auto& b : batches)
      for (const auto& it : b) {
        CHECK(it.source);
        seen.insert(it.index);
      }
    CHECK(seen.size() == 9);
    CHECK(std::set<std::size_t>(seen.begin(), seen.end()).size() == 9);
  }
  SUBCASE("N equal to the pool uses every pool image") {
    Rng rng(2);
    BatchMixer m(3, pool, 5, 4, rng);
    CHECK(std::set<std::size_t>(m.chosen_target().begin(), m.chosen_target().end()) ==
          std::set<std::size_t>(pool.begin(), pool.end()));
    int targets = 0;
    for (const auto& b : m.epoch(rng))
      for (const auto& it : b) targets += !it.source && it.label() == kTargetLabel;
    CHECK(targets == 5);
  }
  SUBCASE("N larger than the pool is rejected") {
    Rng rng(3);
    CHECK_THROWS_AS(BatchMixer(3, pool, 6, 4, rng), ConfigError);
  }
}

TEST_CASE("config validation") {
  CHECK_THROWS_AS(validate(small_config(SegMode::kDann, 0)), ConfigError);
  auto cfg = small_config(SegMode::kDann, 2);
  cfg.classifier.input_dim = 100;
  CHECK_THROWS_AS(validate(cfg), ConfigError);
  CHECK_NOTHROW(validate(small_config(SegMode::kDann, 2)));
  CHECK_THROWS_AS(parse_seg_mode("unet"), ConfigError);
}

TEST_CASE("trainer modes") {
  const auto ds = generate_dataset(8, Style::kSyntheticLike, 3, 32, 32);
  const auto imgs = images_to_tensor(ds.samples), masks = masks_to_tensor(ds.samples);
  const auto labels = torch::tensor({0, 0, 0, 0, 1, 1, 1, 1}, torch::kInt64);

  SUBCASE("ritnet has no classifier and no domain term") {
    SegmentationTrainer t(small_config(SegMode::kRitnet, 0), 1);
    CHECK_FALSE(t.has_domain_classifier());
    const auto out = t.step(imgs, masks, labels);
    CHECK(out.count("domain") == 0);
    CHECK(out.at("total") == out.at("segmentation"));
  }
  SUBCASE("dann adds the domain term") {
    SegmentationTrainer t(small_config(SegMode::kDann, 4), 1);
    CHECK(t.has_domain_classifier());
    const auto out = t.step(imgs, masks, labels);
    CHECK(out.at("total") == Approx(out.at("segmentation") + out.at("domain")));
    const double acc = t.domain_accuracy(imgs, labels);
    CHECK(acc >= 0.0);
    CHECK(acc <= 1.0);
  }
  SUBCASE("grl ramp grows linearly to the configured scale") {
    auto cfg = small_config(SegMode::kDann, 4);
    cfg.grl_ramp_steps = 4;
    cfg.weights.grl_scale = 1.0;
    SegmentationTrainer t(cfg, 1);
    CHECK(t.current_grl_scale() == 0.0);
    t.step(imgs, masks, labels);
    t.step(imgs, masks, labels);
    CHECK(t.current_grl_scale() == Approx(0.5));
  }
  SUBCASE("freezing the encoder keeps its parameters") {
    SegmentationTrainer t(small_config(SegMode::kRitnet, 0), 1);
    t.set_encoder_frozen(true);
    std::vector<torch::Tensor> before;
    for (const auto& p : t.model()->encoder_parameters()) before.push_back(p.clone());
    t.step(imgs, masks, labels);
    const auto after = t.model()->encoder_parameters();
    for (std::size_t i = 0; i < before.size(); ++i) CHECK(torch::equal(before[i], after[i]));
  }
}

TEST_CASE("balanced domain loss weights each domain equally") {
  torch::manual_seed(1);
  DomainClassifierSpec spec;
  spec.input_dim = 6;
  auto cls = build_domain_classifier(spec, 2);
  const auto z = torch::randn({4, 6});
  const auto labels = torch::tensor({0, 0, 0, 1}, torch::kInt64);
  const auto p = cls->forward(z).to(torch::kFloat64);
  const auto nll = -(labels.to(torch::kFloat64) * p.log() + (1 - labels.to(torch::kFloat64)) * (1 - p).log());
  const double want = 0.5 * nll.slice(0, 0, 3).mean().item<double>() + 0.5 * nll[3].item<double>();
  CHECK(domain_adversarial_loss(z, cls, labels, 1.0, true).item<double>() == Approx(want).epsilon(1e-5));
  CHECK(domain_adversarial_loss(z, cls, labels, 1.0, false).item<double>() ==
        Approx(nll.mean().item<double>()).epsilon(1e-5));
}

TEST_CASE("k-fold training") {
  const auto s = generate_dataset(8, Style::kSyntheticLike, 11, 32, 32);
  const auto t = generate_dataset(9, Style::kRealLike, 12, 32, 32);
  test::TempDir dir;
  const auto res = train_segmenter(s, t, small_config(SegMode::kRitnet, 2), dir.path);
  REQUIRE(res.folds.size() == 3);
  for (const auto& f : res.folds) {
    CHECK(f.validation == 3);
    CHECK(f.train_target == 2);
    CHECK(f.miou >= 0.0);
    CHECK(f.miou <= 1.0);
  }
  double mean = 0;
  for (const auto& f : res.folds) mean += f.miou / 3;
  double ss = 0;
  for (const auto& f : res.folds) ss += (f.miou - mean) * (f.miou - mean);
  CHECK(res.mean == Approx(mean));
  REQUIRE(res.std);
  CHECK(*res.std == Approx(std::sqrt(ss / 2)));
  const auto metrics = nlohmann::json::parse(std::ifstream(dir.path / "metrics.json"));
  CHECK((metrics.at("miou_mean").get<double>() == Approx(res.mean)));
  CHECK(std::filesystem::exists(dir.path / "fold_2.ckpt"));

  SUBCASE("same seed reproduces the result exactly") {
    const auto again = train_segmenter(s, t, small_config(SegMode::kRitnet, 2));
    CHECK(again.mean == res.mean);
  }
  SUBCASE("fewer target images than folds is a data error") {
    CHECK_THROWS_AS(train_segmenter(s, subset(t, {0, 1}), small_config(SegMode::kRitnet, 0)), DataError);
  }
  SUBCASE("mismatched data dims are a config error") {
    auto cfg = small_config(SegMode::kRitnet, 0);
    cfg.segmenter.height = cfg.segmenter.width = 64;
    CHECK_THROWS_AS(train_segmenter(s, t, cfg), ConfigError);
  }
}

TEST_CASE("predicted masks hold valid class indices") {
  auto model = build_segmenter(small_config(SegMode::kRitnet, 0).segmenter, 3);
  const auto pred = predict_masks(model, torch::rand({2, 1, 32, 32}));
  CHECK(pred.sizes() == torch::IntArrayRef{2, 32, 32});
  CHECK(pred.min().item<std::int64_t>() >= 0);
  CHECK(pred.max().item<std::int64_t>() < kNumClasses);
}
