#include "doctest_torch.hpp"

#include <cmath>

#include <torch/torch.h>

#include "eyeadapt/errors.hpp"
#include "eyeadapt/tensors.hpp"
#include "eyeadapt/translate.hpp"
#include "test_util.hpp"

using namespace eyeadapt;

namespace {

TranslateConfig small_config(int size, TranslateMode mode = TranslateMode::kSrcgan) {
  TranslateConfig cfg;
  cfg.mode = mode;
  cfg.epochs = 1;
  cfg.seed = 17;
  cfg.generator.height = cfg.generator.width = size;
  cfg.discriminator.height = cfg.discriminator.width = size;
  return cfg;
}

TranslateBatch batch_of(const Dataset& s, const Dataset& r) {
  return {images_to_tensor(s.samples), masks_to_tensor(s.samples), images_to_tensor(r.samples),
          masks_to_tensor(r.samples)};
}

}  // namespace

TEST_CASE("one epoch on a tiny set yields finite history") {
  const auto s = generate_dataset(8, Style::kSyntheticLike, 1, 32, 32);
  const auto r = generate_dataset(8, Style::kRealLike, 2, 32, 32);
  test::TempDir dir;
  const auto res = train_translator(s, r, small_config(32), dir.path);
  REQUIRE_FALSE(res.history.empty());
  for (const auto& row : res.history) CHECK(std::isfinite(row.value));
  CHECK(res.steps == 1);
  CHECK((read_history_csv(dir.path / "history.csv") == res.history));
}

TEST_CASE("discriminator and generator steps touch only their own networks") {
  const auto s = generate_dataset(4, Style::kSyntheticLike, 3, 32, 32);
  const auto r = generate_dataset(4, Style::kRealLike, 4, 32, 32);
  TranslatorTrainer t(small_config(32));
  const auto b = batch_of(s, r);
  const auto hashes = [&] {
    return std::vector<std::string>{parameter_hash(*t.g_sr()), parameter_hash(*t.g_rs()), parameter_hash(*t.d_s()),
                                    parameter_hash(*t.d_r())};
  };
  const auto h0 = hashes();
  t.step_discriminators(b);
  const auto h1 = hashes();
  CHECK(h1[0] == h0[0]);
  CHECK(h1[1] == h0[1]);
  CHECK(h1[2] != h0[2]);
  CHECK(h1[3] != h0[3]);
  t.step_generators(b);
  const auto h2 = hashes();
  CHECK(h2[0] != h1[0]);
  CHECK(h2[1] != h1[1]);
  CHECK(h2[2] == h1[2]);
  CHECK(h2[3] == h1[3]);
}

TEST_CASE("training is reproducible for a fixed seed") {
  const auto s = generate_dataset(8, Style::kSyntheticLike, 5, 32, 32);
  const auto r = generate_dataset(8, Style::kRealLike, 6, 32, 32);
  const auto a = train_translator(s, r, small_config(32));
  const auto b = train_translator(s, r, small_config(32));
  CHECK((a.history == b.history));
  CHECK(parameter_hash(*a.g_sr) == parameter_hash(*b.g_sr));
}

TEST_CASE("cgan mode drops the structure terms") {
  const auto w = small_config(32, TranslateMode::kCgan).effective_weights();
  CHECK(w.edge == 0.0);
  CHECK(w.var == 0.0);
  CHECK(small_config(32).effective_weights().var == 60.0);
}

TEST_CASE("identity generator translation is bitwise lossless") {
  const auto s = generate_dataset(5, Style::kSyntheticLike, 7, 32, 32);
  GeneratorSpec spec;
  spec.height = spec.width = 32;
  auto g = build_generator(spec, 1);
  const auto out = translate_dataset(g, s, "identity");
  REQUIRE(out.size() == s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    CHECK(out.samples[i].image == s.samples[i].image);
    CHECK(out.samples[i].mask == s.samples[i].mask);
    CHECK(out.samples[i].id == s.samples[i].id);
  }
}

TEST_CASE("generator training lowers the edge term from a random start") {
  const auto s = generate_dataset(8, Style::kSyntheticLike, 8, 32, 32);
  const auto r = generate_dataset(8, Style::kRealLike, 9, 32, 32);
  auto cfg = small_config(32);
  cfg.generator.identity_init = false;
  cfg.lr = 1e-3;
  TranslatorTrainer t(cfg);
  const auto b = batch_of(s, r);
  const double before = t.evaluate(b).at("edge");
  for (int i = 0; i < 200; ++i) {
    t.step_discriminators(b);
    t.step_generators(b);
    t.advance();
  }
  CHECK(t.evaluate(b).at("edge") < before);
}

TEST_CASE("invalid translator configs are rejected") {
  auto cfg = small_config(32);
  cfg.lr = 0.0;
  CHECK_THROWS_AS(validate(cfg), ConfigError);
  cfg = small_config(32);
  cfg.image_pool = true;
  CHECK_THROWS_AS(validate(cfg), ConfigError);
  CHECK_THROWS_AS(parse_translate_mode("pix2pix"), ConfigError);
}

TEST_CASE("dimension mismatch between checkpoint and data is a config error") {
  test::TempDir dir;
  GeneratorSpec spec;
  auto g = build_generator(spec, 1);
  save_checkpoint(dir.path / "g.ckpt", {"generator", to_json(spec), 1, 0}, *g);
  CHECK_THROWS_AS(translate_dataset(dir.path / "g.ckpt", generate_dataset(2, Style::kSyntheticLike, 1, 32, 32)),
                  ConfigError);
}
