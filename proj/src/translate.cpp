#include "eyeadapt/translate.hpp"

#include <algorithm>

#include "eyeadapt/errors.hpp"
#include "eyeadapt/tensors.hpp"

namespace eyeadapt {

std::string_view to_string(TranslateMode m) { return m == TranslateMode::kCgan ? "cgan" : "srcgan"; }

TranslateMode parse_translate_mode(std::string_view text) {
  if (text == "cgan") return TranslateMode::kCgan;
  if (text == "srcgan") return TranslateMode::kSrcgan;
  throw ConfigError("unknown translate mode '" + std::string(text) + "' (expected cgan or srcgan)");
}

LossWeights TranslateConfig::effective_weights() const {
  return mode == TranslateMode::kCgan ? cgan_weights(weights) : weights;
}

void validate(const TranslateConfig& cfg) {
  validate(cfg.weights);
  validate(cfg.generator);
  validate(cfg.discriminator);
  if (!(cfg.lr > 0.0)) throw ConfigError("translate lr must be positive");
  if (cfg.beta1 < 0.0 || cfg.beta1 >= 1.0 || cfg.beta2 < 0.0 || cfg.beta2 >= 1.0) {
    throw ConfigError("translate betas must lie in [0, 1)");
  }
  if (cfg.batch_size < 1) throw ConfigError("translate batch_size must be >= 1");
  if (cfg.epochs < 1) throw ConfigError("translate epochs must be >= 1");
  if (cfg.checkpoint_every < 0) throw ConfigError("translate checkpoint_every must be >= 0");
  if (cfg.image_pool) throw ConfigError("translate image_pool is reserved and not implemented");
  if (cfg.generator.height != cfg.discriminator.height || cfg.generator.width != cfg.discriminator.width ||
      cfg.generator.channels != cfg.discriminator.channels) {
    throw ConfigError("generator and discriminator specs disagree on image dims");
  }
}

namespace {

std::vector<torch::Tensor> join(const std::vector<torch::Tensor>& a, const std::vector<torch::Tensor>& b) {
  auto out = a;
  out.insert(out.end(), b.begin(), b.end());
  return out;
}

torch::optim::AdamOptions adam(const TranslateConfig& cfg) {
  return torch::optim::AdamOptions(cfg.lr).betas({cfg.beta1, cfg.beta2});
}

}  // namespace

TranslatorTrainer::TranslatorTrainer(const TranslateConfig& cfg) : cfg_(cfg), weights_(cfg.effective_weights()) {
  validate(cfg);
  Rng rng(cfg.seed);
  g_sr_ = build_generator(cfg.generator, rng.fork_seed());
  g_rs_ = build_generator(cfg.generator, rng.fork_seed());
  d_s_ = build_discriminator(cfg.discriminator, rng.fork_seed());
  d_r_ = build_discriminator(cfg.discriminator, rng.fork_seed());
  opt_g_ = std::make_unique<torch::optim::Adam>(join(g_sr_->parameters(), g_rs_->parameters()), adam(cfg));
  opt_d_ = std::make_unique<torch::optim::Adam>(join(d_s_->parameters(), d_r_->parameters()), adam(cfg));
}

std::map<std::string, double> TranslatorTrainer::step_discriminators(const TranslateBatch& b) {
  torch::Tensor fake_r, fake_s;
  {
    torch::NoGradGuard guard;
    fake_r = g_sr_->forward(b.s);
    fake_s = g_rs_->forward(b.r);
  }
  opt_d_->zero_grad();
  const auto loss_r = adversarial_loss(d_r_->forward(b.r), d_r_->forward(fake_r)).discriminator;
  const auto loss_s = adversarial_loss(d_s_->forward(b.s), d_s_->forward(fake_s)).discriminator;
  const double vr = loss_r.item<double>();
  const double vs = loss_s.item<double>();
  guard_finite(vr, "loss_d_r", step_);
  guard_finite(vs, "loss_d_s", step_);
  (loss_r + loss_s).backward();
  opt_d_->step();
  return {{"loss_d_r", vr}, {"loss_d_s", vs}};
}

SrcganParts TranslatorTrainer::generator_parts(const TranslateBatch& b) {
  const auto fake_r = g_sr_->forward(b.s);
  const auto fake_s = g_rs_->forward(b.r);
  const auto rec_s = g_rs_->forward(fake_r);
  const auto rec_r = g_sr_->forward(fake_s);
  SrcganParts p;
  p.adv_sr = adversarial_loss(d_r_->forward(b.r), d_r_->forward(fake_r)).generator;
  p.adv_rs = adversarial_loss(d_s_->forward(b.s), d_s_->forward(fake_s)).generator;
  p.cycle = cycle_loss(b.s, rec_s, b.r, rec_r);
  p.identity = identity_loss(b.s, g_rs_->forward(b.s), b.r, g_sr_->forward(b.r));
  const auto zero = torch::zeros({}, b.s.options());
  if (cfg_.mode == TranslateMode::kCgan) {
    p.edge = p.mean = p.var = zero;
  } else {
    const int k = kNumClasses;
    p.edge = edge_retaining_loss(b.s, fake_r, rec_s, b.r, fake_s, rec_r);
    p.mean = color_mean_loss(fake_r, b.s_mask, b.r, b.r_mask, fake_s, b.s, k);
    p.var = color_var_loss(fake_r, b.s_mask, b.r, b.r_mask, fake_s, b.s, k);
  }
  return p;
}

namespace {

std::map<std::string, double> raw_values(const SrcganParts& p) {
  return {{"adv_sr", p.adv_sr.item<double>()},     {"adv_rs", p.adv_rs.item<double>()},
          {"cycle", p.cycle.item<double>()},       {"identity", p.identity.item<double>()},
          {"edge", p.edge.item<double>()},         {"mean", p.mean.item<double>()},
          {"var", p.var.item<double>()}};
}

}  // namespace

std::map<std::string, double> TranslatorTrainer::step_generators(const TranslateBatch& b) {
  opt_g_->zero_grad();
  const auto parts = generator_parts(b);
  const auto weighted = total_srcgan_loss(parts, weights_);
  auto values = raw_values(parts);
  values["total"] = weighted.total.item<double>();
  for (const auto& [term, v] : values) guard_finite(v, term, step_);
  weighted.total.backward();
  opt_g_->step();
  return values;
}

std::map<std::string, double> TranslatorTrainer::evaluate(const TranslateBatch& b) {
  torch::NoGradGuard guard;
  const auto parts = generator_parts(b);
  auto values = raw_values(parts);
  values["total"] = total_srcgan_loss(parts, weights_).total.item<double>();
  return values;
}

namespace {

void check_inputs(const Dataset& source, const Dataset& target, const TranslateConfig& cfg) {
  if (source.empty() || target.empty()) throw DataError("translator training needs nonempty source and target sets");
  if (source.manifest.domain == target.manifest.domain) {
    throw DataError("translator source and target manifests carry the same domain");
  }
  for (const auto* ds : {&source, &target}) {
    const auto& img = ds->samples.front().image;
    if (img.height != cfg.generator.height || img.width != cfg.generator.width) {
      throw ConfigError("translator spec is " + std::to_string(cfg.generator.height) + "x" +
                        std::to_string(cfg.generator.width) + " but the data is " + std::to_string(img.height) +
                        "x" + std::to_string(img.width));
    }
  }
}

void save_models(const TranslateResult& res, const TranslateConfig& cfg, const std::filesystem::path& dir) {
  const auto gspec = to_json(cfg.generator);
  const auto dspec = to_json(cfg.discriminator);
  save_checkpoint(dir / "g_sr.ckpt", {"generator", gspec, cfg.seed, res.steps}, *res.g_sr);
  save_checkpoint(dir / "g_rs.ckpt", {"generator", gspec, cfg.seed, res.steps}, *res.g_rs);
  save_checkpoint(dir / "d_s.ckpt", {"discriminator", dspec, cfg.seed, res.steps}, *res.d_s);
  save_checkpoint(dir / "d_r.ckpt", {"discriminator", dspec, cfg.seed, res.steps}, *res.d_r);
}

}  // namespace

TranslateResult train_translator(const Dataset& source, const Dataset& target, const TranslateConfig& cfg,
                                 const std::filesystem::path& out_dir) {
  validate(cfg);
  check_inputs(source, target, cfg);
  TranslatorTrainer trainer(cfg);
  Rng rng(cfg.seed ^ 0x5bd1e995ULL);
  const std::size_t m = source.size();
  const std::size_t n = target.size();
  const std::size_t bs = static_cast<std::size_t>(cfg.batch_size);
  const std::size_t steps_per_epoch = (std::max(m, n) + bs - 1) / bs;

  TranslateResult res;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto ps = permutation(m, rng);
    const auto pt = permutation(n, rng);
    std::map<std::string, double> sums;
    for (std::size_t k = 0; k < steps_per_epoch; ++k) {
      std::vector<std::size_t> si, ti;
      for (std::size_t i = 0; i < bs; ++i) {
        si.push_back(ps[(k * bs + i) % m]);
        ti.push_back(pt[(k * bs + i) % n]);
      }
      const TranslateBatch batch{images_to_tensor(source.samples, si), masks_to_tensor(source.samples, si),
                                 images_to_tensor(target.samples, ti), masks_to_tensor(target.samples, ti)};
      for (const auto& [term, v] : trainer.step_discriminators(batch)) sums[term] += v;
      for (const auto& [term, v] : trainer.step_generators(batch)) sums[term] += v;
      trainer.advance();
    }
    for (const auto& [term, total] : sums) {
      res.history.push_back({trainer.step(), term, total / static_cast<double>(steps_per_epoch)});
    }
    if (!out_dir.empty() && cfg.checkpoint_every > 0 && (epoch + 1) % cfg.checkpoint_every == 0 &&
        epoch + 1 < cfg.epochs) {
      TranslateResult snap{trainer.g_sr(), trainer.g_rs(), trainer.d_s(), trainer.d_r(), {}, trainer.step()};
      save_models(snap, cfg, out_dir / ("epoch_" + std::to_string(epoch + 1)));
    }
  }
  res.g_sr = trainer.g_sr();
  res.g_rs = trainer.g_rs();
  res.d_s = trainer.d_s();
  res.d_r = trainer.d_r();
  res.steps = trainer.step();
  if (!out_dir.empty()) {
    save_models(res, cfg, out_dir);
    write_history_csv(res.history, out_dir / "history.csv");
  }
  return res;
}

Dataset translate_dataset(Generator& generator, const Dataset& source, const std::string& generator_id) {
  if (source.empty()) throw DataError("cannot translate an empty dataset");
  const auto& spec = generator->spec();
  const auto& first = source.samples.front().image;
  if (first.height != spec.height || first.width != spec.width) {
    throw ConfigError("checkpoint mismatch: generator expects " + std::to_string(spec.height) + "x" +
                      std::to_string(spec.width) + " images, dataset has " + std::to_string(first.height) + "x" +
                      std::to_string(first.width));
  }
  generator->eval();
  torch::NoGradGuard guard;
  std::vector<ImageSample> out;
  out.reserve(source.size());
  constexpr std::size_t kChunk = 32;
  for (std::size_t start = 0; start < source.size(); start += kChunk) {
    std::vector<std::size_t> idx;
    for (std::size_t i = start; i < std::min(source.size(), start + kChunk); ++i) idx.push_back(i);
    const auto y = generator->forward(images_to_tensor(source.samples, idx));
    for (std::size_t j = 0; j < idx.size(); ++j) {
      const auto& src = source.samples[idx[j]];
      out.push_back({src.id, tensor_to_image(y[static_cast<std::int64_t>(j)]), src.mask, Domain::kSource});
    }
  }
  auto provenance = source.manifest.provenance;
  provenance["translated_by"] = generator_id;
  auto ds = make_dataset(std::move(out), Domain::kSource, std::move(provenance));
  for (std::size_t i = 0; i < ds.manifest.entries.size(); ++i) {
    ds.manifest.entries[i].split = source.manifest.entries[i].split;
  }
  return ds;
}

Dataset translate_dataset(const std::filesystem::path& checkpoint, const Dataset& source) {
  auto g = load_generator(checkpoint);
  const auto meta = read_checkpoint_meta(checkpoint);
  return translate_dataset(g, source, checkpoint.filename().string() + "@step" + std::to_string(meta.step));
}

}  // namespace eyeadapt
