#include "eyeadapt/filterkit.hpp"

#include <cmath>
#include <fstream>
#include <limits>

#include "eyeadapt/errors.hpp"
#include "eyeadapt/losses.hpp"
#include "eyeadapt/tensors.hpp"

namespace eyeadapt {

std::vector<SiamesePair> sample_pairs(const Dataset& source, const Dataset& target, int count, Rng& rng) {
  if (source.size() < 2 || target.size() < 2) throw DataError("pair sampling needs at least 2 samples per domain");
  if (count < 0) throw ConfigError("pair count must be non-negative");
  const auto pick = [&rng](std::size_t n) { return static_cast<std::size_t>(rng.uniform_int(0, std::int64_t(n) - 1)); };
  std::vector<SiamesePair> pairs;
  pairs.reserve(count);
  for (int i = 0; i < count; ++i) {
    SiamesePair p;
    switch (i % 4) {
      case 0:
        p.kind = PairKind::kSameSource;
        p.a_source = p.b_source = true;
        break;
      case 1:
        p.kind = PairKind::kSameTarget;
        p.a_source = p.b_source = false;
        break;
      default:
        p.kind = PairKind::kCross;
        p.a_source = true;
        p.b_source = false;
    }
    const Dataset& da = p.a_source ? source : target;
    const Dataset& db = p.b_source ? source : target;
    p.a = pick(da.size());
    do {
      p.b = pick(db.size());
    } while (da.samples[p.a].id == db.samples[p.b].id);
    pairs.push_back(p);
  }
  return pairs;
}

void validate(const SiameseConfig& cfg) {
  validate(cfg.encoder);
  if (cfg.epochs < 1) throw ConfigError("siamese epochs must be >= 1");
  if (cfg.pairs_per_epoch < 1) throw ConfigError("siamese pairs_per_epoch must be >= 1");
  if (cfg.batch_size < 1) throw ConfigError("siamese batch_size must be >= 1");
  if (!(cfg.lr > 0.0)) throw ConfigError("siamese lr must be positive");
  if (!(cfg.margin > 0.0)) throw ConfigError("contrastive margin must be positive");
}

SiameseResult train_siamese(const Dataset& source, const Dataset& target, const SiameseConfig& cfg,
                            const std::filesystem::path& out_dir) {
  validate(cfg);
  if (source.empty() || target.empty()) throw DataError("siamese training needs nonempty datasets");
  Rng rng(cfg.seed);
  SiameseResult res;
  res.encoder = build_siamese(cfg.encoder, rng.fork_seed());
  auto& enc = res.encoder;
  enc->train();
  torch::optim::Adam opt(enc->parameters(), torch::optim::AdamOptions(cfg.lr));
  const auto xs = images_to_tensor(source.samples);
  const auto xt = images_to_tensor(target.samples);
  std::int64_t step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto pairs = sample_pairs(source, target, cfg.pairs_per_epoch, rng);
    double sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < pairs.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(pairs.size(), start + static_cast<std::size_t>(cfg.batch_size));
      std::vector<torch::Tensor> a, b;
      std::vector<float> same;
      for (std::size_t i = start; i < end; ++i) {
        const auto& p = pairs[i];
        a.push_back((p.a_source ? xs : xt)[static_cast<std::int64_t>(p.a)]);
        b.push_back((p.b_source ? xs : xt)[static_cast<std::int64_t>(p.b)]);
        same.push_back(p.same_domain() ? 1.0f : 0.0f);
      }
      opt.zero_grad();
      const auto [fa, fb] = enc->forward_pair(torch::stack(a), torch::stack(b));
      const auto loss = contrastive_loss(embedding_distance(fa, fb), torch::tensor(same), cfg.margin);
      const double v = loss.item<double>();
      guard_finite(v, "contrastive", step);
      loss.backward();
      opt.step();
      sum += v;
      ++batches;
      ++step;
    }
    res.final_loss = sum / static_cast<double>(batches);
    res.history.push_back({step, "contrastive", res.final_loss});
  }
  enc->eval();
  if (!out_dir.empty()) {
    save_checkpoint(out_dir / "encoder.ckpt", {"siamese", to_json(cfg.encoder), cfg.seed, step}, *enc);
    write_history_csv(res.history, out_dir / "history.csv");
  }
  return res;
}

std::vector<LatentEmbedding> embed_dataset(SiameseEncoder& encoder, const Dataset& ds) {
  const auto& spec = encoder->spec();
  std::vector<LatentEmbedding> out;
  if (ds.empty()) return out;
  const auto& first = ds.samples.front().image;
  if (first.height != spec.height || first.width != spec.width) {
    throw ConfigError("siamese encoder expects " + std::to_string(spec.height) + "x" + std::to_string(spec.width) +
                      " images");
  }
  encoder->eval();
  torch::NoGradGuard guard;
  constexpr std::size_t kChunk = 64;
  for (std::size_t start = 0; start < ds.size(); start += kChunk) {
    std::vector<std::size_t> idx;
    for (std::size_t i = start; i < std::min(ds.size(), start + kChunk); ++i) idx.push_back(i);
    const auto z = encoder->forward(images_to_tensor(ds.samples, idx)).to(torch::kFloat64).contiguous();
    const auto* p = z.data_ptr<double>();
    const auto n = z.size(1);
    for (std::size_t j = 0; j < idx.size(); ++j) {
      out.push_back({ds.samples[idx[j]].id, std::vector<double>(p + j * n, p + (j + 1) * n)});
    }
  }
  return out;
}

std::vector<double> centroid_of(const std::vector<std::vector<double>>& points) {
  if (points.empty()) throw DataError("centroid of an empty set");
  std::vector<double> c(points.front().size(), 0.0);
  for (const auto& p : points) {
    if (p.size() != c.size()) throw ConfigError("embeddings differ in dimension");
    for (std::size_t i = 0; i < c.size(); ++i) c[i] += p[i];
  }
  for (auto& v : c) v /= static_cast<double>(points.size());
  return c;
}

CentroidModel compute_centroid(SiameseEncoder& encoder, const Dataset& real, const std::string& encoder_id) {
  if (real.empty()) throw DataError("centroid of an empty real set");
  std::vector<std::vector<double>> pts;
  for (auto& e : embed_dataset(encoder, real)) pts.push_back(std::move(e.z));
  CentroidModel m;
  m.centroid = centroid_of(pts);
  m.dim = static_cast<int>(m.centroid.size());
  m.encoder_id = encoder_id;
  return m;
}

double squared_distance(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw ConfigError("embedding and centroid differ in dimension");
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d += (a[i] - b[i]) * (a[i] - b[i]);
  return d;
}

double distance_to_centroid(SiameseEncoder& encoder, const ImageSample& sample, const CentroidModel& centroid) {
  const auto ds = make_dataset({sample}, sample.domain);
  return squared_distance(embed_dataset(encoder, ds).front().z, centroid.centroid);
}

FilterResult filter_by_distance(const Dataset& ds, const std::vector<double>& distances, double threshold) {
  if (!(threshold > 0.0)) throw ConfigError("filter threshold must be positive");
  if (distances.size() != ds.size()) throw ConfigError("one distance per sample required");
  FilterResult res;
  res.total = ds.size();
  res.distances = distances;
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < distances.size(); ++i) {
    if (distances[i] < threshold) keep.push_back(i);
  }
  res.kept = subset(ds, keep);
  res.kept.manifest.provenance["filter_threshold"] = format_double(threshold);
  res.kept.manifest.provenance["filter_kept"] = std::to_string(keep.size()) + "/" + std::to_string(ds.size());
  if (keep.empty()) {
    res.warnings.push_back("filter kept no samples: every distance is >= " + format_double(threshold));
  }
  return res;
}

FilterResult filter_dataset(SiameseEncoder& encoder, const Dataset& ds, const CentroidModel& centroid,
                            double threshold) {
  auto emb = embed_dataset(encoder, ds);
  std::vector<double> d;
  d.reserve(emb.size());
  for (const auto& e : emb) d.push_back(squared_distance(e.z, centroid.centroid));
  auto res = filter_by_distance(ds, d, threshold);
  res.embeddings = std::move(emb);
  return res;
}

double mean_of(const std::vector<double>& values) {
  if (values.empty()) throw DataError("mean of an empty set");
  double s = 0.0;
  for (double v : values) s += v;
  return s / static_cast<double>(values.size());
}

double mean_distance(SiameseEncoder& encoder, const Dataset& ds, const CentroidModel& centroid) {
  if (ds.empty()) throw DataError("mean distance of an empty dataset");
  std::vector<double> d;
  for (const auto& e : embed_dataset(encoder, ds)) d.push_back(squared_distance(e.z, centroid.centroid));
  return mean_of(d);
}

void write_embeddings_csv(const std::vector<LatentEmbedding>& embeddings, const std::vector<double>& distances,
                          const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  const std::size_t n = embeddings.empty() ? 0 : embeddings.front().z.size();
  out << "id";
  for (std::size_t i = 0; i < n; ++i) out << ",z" << i;
  out << ",distance\n";
  for (std::size_t r = 0; r < embeddings.size(); ++r) {
    out << embeddings[r].id;
    for (double v : embeddings[r].z) out << ',' << format_double(v);
    out << ',' << (r < distances.size() ? format_double(distances[r]) : "") << '\n';
  }
}

}  // namespace eyeadapt
