#include <cstring>

#include "eyeadapt/errors.hpp"
#include "eyeadapt/neuralblocks.hpp"

namespace eyeadapt {

namespace {

torch::Tensor string_tensor(const std::string& s) {
  auto t = torch::empty({static_cast<std::int64_t>(s.size())}, torch::kInt8);
  if (!s.empty()) std::memcpy(t.data_ptr(), s.data(), s.size());
  return t;
}

std::string tensor_string(const torch::Tensor& t) {
  const auto c = t.contiguous();
  return std::string(static_cast<const char*>(c.data_ptr()), static_cast<std::size_t>(c.numel()));
}

torch::Tensor read_key(torch::serialize::InputArchive& ar, const std::string& key,
                       const std::filesystem::path& path) {
  torch::Tensor t;
  if (!ar.try_read(key, t)) throw FormatError(path.filename().string(), "checkpoint is missing '" + key + "'");
  return t;
}

CheckpointMeta read_meta(torch::serialize::InputArchive& ar, const std::filesystem::path& path) {
  CheckpointMeta meta;
  meta.kind = tensor_string(read_key(ar, "meta/kind", path));
  try {
    meta.spec = nlohmann::json::parse(tensor_string(read_key(ar, "meta/spec", path)));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.filename().string(), std::string("bad spec echo: ") + e.what());
  }
  meta.seed = static_cast<std::uint64_t>(read_key(ar, "meta/seed", path).item<std::int64_t>());
  meta.step = read_key(ar, "meta/step", path).item<std::int64_t>();
  return meta;
}

torch::serialize::InputArchive open_archive(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw DataError("checkpoint not found: " + path.string());
  torch::serialize::InputArchive ar;
  try {
    ar.load_from(path.string());
  } catch (const c10::Error& e) {
    throw FormatError(path.filename().string(), "unreadable checkpoint");
  }
  return ar;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const CheckpointMeta& meta,
                     const torch::nn::Module& module) {
  torch::serialize::OutputArchive ar;
  ar.write("meta/kind", string_tensor(meta.kind));
  ar.write("meta/spec", string_tensor(meta.spec.dump()));
  ar.write("meta/seed", torch::tensor(static_cast<std::int64_t>(meta.seed)));
  ar.write("meta/step", torch::tensor(meta.step));
  for (const auto& p : module.named_parameters(true)) ar.write("param/" + p.key(), p.value().detach());
  for (const auto& b : module.named_buffers(true)) ar.write("buffer/" + b.key(), b.value().detach());
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  ar.save_to(path.string());
}

CheckpointMeta read_checkpoint_meta(const std::filesystem::path& path) {
  auto ar = open_archive(path);
  return read_meta(ar, path);
}

CheckpointMeta load_checkpoint(const std::filesystem::path& path, torch::nn::Module& module,
                               const std::string& expected_kind, const nlohmann::json& expected_spec) {
  auto ar = open_archive(path);
  auto meta = read_meta(ar, path);
  if (meta.kind != expected_kind) {
    throw ConfigError("checkpoint " + path.string() + " holds a " + meta.kind + ", expected " + expected_kind);
  }
  if (meta.spec != expected_spec) {
    throw ConfigError("checkpoint " + path.string() + " was saved for a different architecture: " +
                      meta.spec.dump() + " vs " + expected_spec.dump());
  }
  torch::NoGradGuard guard;
  for (auto& p : module.named_parameters(true)) {
    auto src = read_key(ar, "param/" + p.key(), path);
    if (!src.sizes().equals(p.value().sizes())) throw FormatError(path.filename().string(), "shape of " + p.key());
    p.value().copy_(src);
  }
  for (auto& b : module.named_buffers(true)) {
    auto src = read_key(ar, "buffer/" + b.key(), path);
    if (!src.sizes().equals(b.value().sizes())) throw FormatError(path.filename().string(), "shape of " + b.key());
    b.value().copy_(src);
  }
  return meta;
}

Generator load_generator(const std::filesystem::path& path) {
  const auto meta = read_checkpoint_meta(path);
  if (meta.kind != "generator") throw ConfigError(path.string() + " is not a generator checkpoint");
  const auto spec = generator_spec_from_json(meta.spec);
  Generator g(spec);
  load_checkpoint(path, *g, "generator", to_json(spec));
  return g;
}

SiameseEncoder load_siamese(const std::filesystem::path& path) {
  const auto meta = read_checkpoint_meta(path);
  if (meta.kind != "siamese") throw ConfigError(path.string() + " is not a siamese checkpoint");
  const auto spec = siamese_spec_from_json(meta.spec);
  SiameseEncoder e(spec);
  load_checkpoint(path, *e, "siamese", to_json(spec));
  return e;
}

Segmenter load_segmenter(const std::filesystem::path& path) {
  const auto meta = read_checkpoint_meta(path);
  if (meta.kind != "segmenter") throw ConfigError(path.string() + " is not a segmenter checkpoint");
  const auto spec = segmenter_spec_from_json(meta.spec);
  Segmenter s(spec);
  load_checkpoint(path, *s, "segmenter", to_json(spec));
  return s;
}

}  // namespace eyeadapt
