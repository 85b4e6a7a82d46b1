#include "eyeadapt/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <iomanip>
#include <map>
#include <memory>
#include <sstream>

#include <openssl/evp.h>
#include <torch/torch.h>

#include "eyeadapt/errors.hpp"
#include "eyeadapt/evalkit.hpp"
#include "eyeadapt/filterkit.hpp"
#include "eyeadapt/report.hpp"
#include "eyeadapt/tensors.hpp"

namespace eyeadapt {

namespace fs = std::filesystem;
using nlohmann::json;

const std::vector<Stage>& stage_order() {
  static const std::vector<Stage> order = {Stage::kGenerate,     Stage::kTrainTranslate, Stage::kTranslate,
                                           Stage::kTrainSiamese, Stage::kFilter,         Stage::kTrainSeg,
                                           Stage::kEvaluate,     Stage::kReport};
  return order;
}

std::string_view to_string(Stage s) {
  switch (s) {
    case Stage::kGenerate: return "generate";
    case Stage::kTrainTranslate: return "train-translate";
    case Stage::kTranslate: return "translate";
    case Stage::kTrainSiamese: return "train-siamese";
    case Stage::kFilter: return "filter";
    case Stage::kTrainSeg: return "train-seg";
    case Stage::kEvaluate: return "evaluate";
    case Stage::kReport: return "report";
  }
  return "?";
}

Stage parse_stage(std::string_view text) {
  for (auto s : stage_order()) {
    if (to_string(s) == text) return s;
  }
  throw ConfigError("unknown stage '" + std::string(text) + "'");
}

std::string git_blob_sha1(const std::string& bytes) {
  const std::string header = "blob " + std::to_string(bytes.size()) + '\0';
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha1(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx.get(), header.data(), header.size()) != 1 ||
      EVP_DigestUpdate(ctx.get(), bytes.data(), bytes.size()) != 1 || EVP_DigestFinal_ex(ctx.get(), digest, &len) != 1) {
    throw DataError("sha1 digest failed");
  }
  std::ostringstream hex;
  for (unsigned int i = 0; i < len; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(digest[i]);
  return hex.str();
}

std::string git_blob_sha1_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return git_blob_sha1(ss.str());
}

fs::path dataset_dir(const PipelineConfig& cfg, const std::string& name) { return cfg.output_root / "data" / name; }

fs::path segment_dir(const PipelineConfig& cfg, SegMode mode, const std::string& dataset, int n_real) {
  return cfg.output_root / "segment" / std::string(to_string(mode)) / dataset / ("n" + std::to_string(n_real));
}

namespace {

fs::path relative_to_root(const PipelineConfig& cfg, const fs::path& p) {
  return p.lexically_relative(cfg.output_root);
}

/// Stage that produces a dataset of the given name.
Stage producer_of(const std::string& dataset) {
  if (dataset == "source" || dataset == "target") return Stage::kGenerate;
  if (dataset.size() > 2 && dataset.ends_with("_s")) return Stage::kFilter;
  return Stage::kTranslate;
}

struct Input {
  fs::path path;
  Stage producer;
};

fs::path dataset_marker(const PipelineConfig& cfg, const std::string& name) {
  return dataset_dir(cfg, name) / "manifest.json";
}

std::vector<Input> stage_inputs(Stage stage, const PipelineConfig& cfg) {
  const auto& root = cfg.output_root;
  std::vector<Input> in;
  const auto data = [&](const std::string& name) { in.push_back({dataset_dir(cfg, name), producer_of(name)}); };
  switch (stage) {
    case Stage::kGenerate:
      break;
    case Stage::kTrainTranslate:
    case Stage::kTrainSiamese:
      data("source");
      data("target");
      break;
    case Stage::kTranslate:
      data("source");
      for (auto m : cfg.translate_modes) {
        in.push_back({root / "translate" / std::string(to_string(m)) / "g_sr.ckpt", Stage::kTrainTranslate});
      }
      break;
    case Stage::kFilter:
      data(cfg.filter.dataset);
      data("target");
      in.push_back({root / "siamese" / "encoder.ckpt", Stage::kTrainSiamese});
      break;
    case Stage::kTrainSeg:
      for (const auto& d : cfg.seg.datasets) data(d);
      data("target");
      break;
    case Stage::kEvaluate:
      data("target");
      in.push_back({root / "siamese" / "encoder.ckpt", Stage::kTrainSiamese});
      break;
    case Stage::kReport:
      in.push_back({root / "evaluate" / "report.json", Stage::kEvaluate});
      break;
  }
  return in;
}

std::vector<fs::path> stage_owned(Stage stage, const PipelineConfig& cfg) {
  const auto& root = cfg.output_root;
  switch (stage) {
    case Stage::kGenerate: return {dataset_dir(cfg, "source"), dataset_dir(cfg, "target")};
    case Stage::kTrainTranslate: {
      std::vector<fs::path> out;
      for (auto m : cfg.translate_modes) out.push_back(root / "translate" / std::string(to_string(m)));
      return out;
    }
    case Stage::kTranslate: {
      std::vector<fs::path> out;
      for (auto m : cfg.translate_modes) out.push_back(dataset_dir(cfg, std::string(to_string(m))));
      return out;
    }
    case Stage::kTrainSiamese: return {root / "siamese"};
    case Stage::kFilter: return {dataset_dir(cfg, cfg.filter.dataset + "_s"), root / "filter"};
    case Stage::kTrainSeg: return {root / "segment"};
    case Stage::kEvaluate: return {root / "evaluate"};
    case Stage::kReport: return {root / "report"};
  }
  return {};
}

void require_inputs(Stage stage, const PipelineConfig& cfg) {
  for (const auto& in : stage_inputs(stage, cfg)) {
    const bool is_dataset = in.path.parent_path().filename() == "data";
    const auto probe = is_dataset ? in.path / "manifest.json" : in.path;
    if (!fs::exists(probe)) {
      throw DataError("dangling artifact: stage '" + std::string(to_string(stage)) + "' needs " +
                      relative_to_root(cfg, in.path).string() + ", which stage '" +
                      std::string(to_string(in.producer)) + "' has not produced");
    }
  }
}

void collect_files(const fs::path& p, std::vector<fs::path>& out) {
  if (fs::is_regular_file(p)) {
    out.push_back(p);
  } else if (fs::is_directory(p)) {
    for (const auto& e : fs::recursive_directory_iterator(p)) {
      if (e.is_regular_file()) out.push_back(e.path());
    }
  }
}

json hash_tree(const fs::path& base, const std::vector<fs::path>& roots) {
  std::vector<fs::path> files;
  for (const auto& r : roots) collect_files(r, files);
  std::sort(files.begin(), files.end());
  files.erase(std::unique(files.begin(), files.end()), files.end());
  const auto abs_base = fs::absolute(base);
  json j = json::object();
  for (const auto& f : files) j[fs::absolute(f).lexically_relative(abs_base).generic_string()] = git_blob_sha1_file(f);
  return j;
}

void write_json(const fs::path& path, const json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

// ---------------------------------------------------------------------------
// Stage bodies

void stage_generate(const PipelineConfig& cfg, StageOutcome&) {
  const auto& d = cfg.data;
  save_dataset(generate_dataset(d.source_count, Style::kSyntheticLike, cfg.seed, d.height, d.width),
               dataset_dir(cfg, "source"));
  save_dataset(generate_dataset(d.target_count, Style::kRealLike, cfg.seed + 1'000'003ULL, d.height, d.width),
               dataset_dir(cfg, "target"));
}

void stage_train_translate(const PipelineConfig& cfg, StageOutcome&) {
  const auto source = load_dataset(dataset_dir(cfg, "source"));
  const auto target = load_dataset(dataset_dir(cfg, "target"));
  for (auto m : cfg.translate_modes) {
    auto tc = cfg.translate;
    tc.mode = m;
    train_translator(source, target, tc, cfg.output_root / "translate" / std::string(to_string(m)));
  }
}

void stage_translate(const PipelineConfig& cfg, StageOutcome&) {
  const auto source = load_dataset(dataset_dir(cfg, "source"));
  for (auto m : cfg.translate_modes) {
    const auto name = std::string(to_string(m));
    const auto ckpt = cfg.output_root / "translate" / name / "g_sr.ckpt";
    auto g = load_generator(ckpt);
    auto ds = translate_dataset(g, source, "translate/" + name + "/g_sr.ckpt@" + git_blob_sha1_file(ckpt).substr(0, 12));
    ds.manifest.provenance["translate_mode"] = name;
    save_dataset(ds, dataset_dir(cfg, name));
  }
}

void stage_train_siamese(const PipelineConfig& cfg, StageOutcome&) {
  const auto source = load_dataset(dataset_dir(cfg, "source"));
  const auto target = load_dataset(dataset_dir(cfg, "target"));
  train_siamese(source, target, cfg.filter.siamese, cfg.output_root / "siamese");
}

void stage_filter(const PipelineConfig& cfg, StageOutcome& outcome) {
  auto enc = load_siamese(cfg.output_root / "siamese" / "encoder.ckpt");
  const auto target = load_dataset(dataset_dir(cfg, "target"));
  const auto ds = load_dataset(dataset_dir(cfg, cfg.filter.dataset));
  const auto centroid = compute_centroid(enc, target, "siamese/encoder.ckpt");
  double threshold = cfg.filter.threshold;
  if (cfg.filter.rule == ThresholdRule::kMean) threshold = mean_distance(enc, ds, centroid);
  if (!(threshold > 0.0)) threshold = cfg.filter.threshold;
  auto res = filter_dataset(enc, ds, centroid, threshold);
  save_dataset(res.kept, dataset_dir(cfg, cfg.filter.dataset + "_s"));
  write_embeddings_csv(res.embeddings, res.distances, cfg.output_root / "filter" / "embeddings.csv");
  json summary = {{"dataset", cfg.filter.dataset},
                  {"threshold", threshold},
                  {"rule", cfg.filter.rule == ThresholdRule::kMean ? "mean" : "fixed"},
                  {"kept", res.kept.size()},
                  {"total", res.total},
                  {"mu_d_unfiltered", mean_of(res.distances)},
                  {"mu_d_filtered", res.kept.empty() ? json() : json(mean_distance(enc, res.kept, centroid))},
                  {"centroid", centroid.centroid}};
  write_json(cfg.output_root / "filter" / "summary.json", summary);
  outcome.warnings = res.warnings;
}

void stage_train_seg(const PipelineConfig& cfg, StageOutcome& outcome) {
  const auto target = load_dataset(dataset_dir(cfg, "target"));
  for (const auto& name : cfg.seg.datasets) {
    const auto source = load_dataset(dataset_dir(cfg, name));
    for (auto mode : cfg.seg.modes) {
      for (int n : cfg.seg.n_real) {
        if (mode == SegMode::kDann && n == 0) {
          outcome.warnings.push_back("skipped dann with n_real=0 for " + name + " (same as ritnet training)");
          continue;
        }
        auto sc = cfg.seg.base;
        sc.mode = mode;
        sc.n_real = n;
        train_segmenter(source, target, sc, segment_dir(cfg, mode, name, n));
      }
    }
  }
}

std::vector<std::vector<double>> bottleneck_latents(Segmenter& model, const Dataset& ds, std::size_t limit) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < std::min(limit, ds.size()); ++i) idx.push_back(i);
  torch::NoGradGuard guard;
  model->eval();
  const auto z = encoder_bottleneck(model, images_to_tensor(ds.samples, idx)).flatten(1).to(torch::kFloat64).contiguous();
  std::vector<std::vector<double>> out;
  const auto* p = z.data_ptr<double>();
  const auto d = z.size(1);
  for (std::size_t i = 0; i < idx.size(); ++i) out.emplace_back(p + i * d, p + (i + 1) * d);
  return out;
}

void stage_evaluate(const PipelineConfig& cfg, StageOutcome&) {
  constexpr std::size_t kPcaLimit = 64;
  auto enc = load_siamese(cfg.output_root / "siamese" / "encoder.ckpt");
  const auto target = load_dataset(dataset_dir(cfg, "target"));
  const auto centroid = compute_centroid(enc, target, "siamese/encoder.ckpt");
  json mu = json::object();
  std::vector<fs::path> dirs;
  for (const auto& e : fs::directory_iterator(cfg.output_root / "data")) {
    if (fs::exists(e.path() / "manifest.json")) dirs.push_back(e.path());
  }
  std::sort(dirs.begin(), dirs.end());
  for (const auto& dir : dirs) {
    const auto ds = load_dataset(dir);
    if (!ds.empty()) mu[dir.filename().string()] = mean_distance(enc, ds, centroid);
  }

  json pca = json::array();
  const auto seg_root = cfg.output_root / "segment";
  if (fs::exists(seg_root)) {
    std::vector<fs::path> runs;
    for (const auto& e : fs::recursive_directory_iterator(seg_root)) {
      if (e.path().filename() == "fold_0.ckpt") runs.push_back(e.path().parent_path());
    }
    std::sort(runs.begin(), runs.end());
    for (const auto& run : runs) {
      const auto n_dir = run.filename().string();
      const auto ds_name = run.parent_path().filename().string();
      const auto mode = run.parent_path().parent_path().filename().string();
      if (!fs::exists(dataset_marker(cfg, ds_name))) continue;
      const auto ds = load_dataset(dataset_dir(cfg, ds_name));
      auto model = load_segmenter(run / "fold_0.ckpt");
      auto pts = bottleneck_latents(model, ds, kPcaLimit);
      const auto tgt = bottleneck_latents(model, target, kPcaLimit);
      std::vector<std::string> ids, domains;
      for (std::size_t i = 0; i < pts.size(); ++i) {
        ids.push_back(ds.samples[i].id);
        domains.push_back(ds_name);
      }
      for (std::size_t i = 0; i < tgt.size(); ++i) {
        ids.push_back(target.samples[i].id);
        domains.push_back("target");
      }
      std::vector<bool> fit_on(pts.size(), cfg.eval.pca_joint);
      fit_on.resize(pts.size() + tgt.size(), true);
      pts.insert(pts.end(), tgt.begin(), tgt.end());
      const auto res = pca_project(pts, 2, fit_on);
      pca.push_back({{"pair", mode + "_" + ds_name + "_" + n_dir},
                     {"ids", ids},
                     {"domains", domains},
                     {"coords", res.coords},
                     {"explained_ratio", res.explained_ratio}});
    }
  }
  write_json(cfg.output_root / "evaluate" / "report.json",
             {{"mu_d", mu}, {"centroid", centroid.centroid}, {"pca", pca}, {"pca_fit", cfg.eval.pca_joint ? "joint" : "target"}});
}

void write_manifest(const fs::path& path, std::string_view name, const PipelineConfig& cfg, const json& inputs,
                    const json& outputs, double wall, const std::vector<std::string>& warnings) {
  write_json(path, {{"stage", std::string(name)},
                    {"seed", cfg.seed},
                    {"deterministic", cfg.deterministic},
                    {"config", cfg.doc.to_json()},
                    {"inputs", inputs},
                    {"outputs", outputs},
                    {"warnings", warnings},
                    {"wall_time_seconds", wall}});
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw FormatError(path.filename().string(), e.what());
  }
}

void stage_report(const PipelineConfig& cfg, StageOutcome&) {
  const auto eval = read_json(cfg.output_root / "evaluate" / "report.json");
  std::map<std::string, MetricsReport> by_name;
  const auto seg_root = cfg.output_root / "segment";
  if (fs::exists(seg_root)) {
    std::vector<fs::path> files;
    for (const auto& e : fs::recursive_directory_iterator(seg_root)) {
      if (e.path().filename() == "metrics.json") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      const auto m = read_json(f);
      const auto ds_name = f.parent_path().parent_path().filename().string();
      const std::string name = ds_name + "/" + m.at("mode").get<std::string>();
      auto& r = by_name[name];
      r.dataset = name;
      r.folds = static_cast<int>(m.at("folds").size());
      MeanStd v;
      v.mean = m.at("miou_mean").get<double>();
      if (!m.at("miou_std").is_null()) v.std = m.at("miou_std").get<double>();
      r.by_n[m.at("n_real").get<int>()] = v;
    }
  }
  // distances are per dataset, segmentation rows per dataset/mode
  for (const auto& [ds_name, value] : eval.at("mu_d").items()) {
    by_name[ds_name].dataset = ds_name;
    by_name[ds_name].mu_d = value.get<double>();
  }
  std::vector<MetricsReport> reports;
  for (auto& [name, r] : by_name) reports.push_back(std::move(r));
  std::vector<PcaExport> projections;
  for (const auto& p : eval.at("pca")) {
    PcaExport e;
    e.pair = p.at("pair").get<std::string>();
    e.ids = p.at("ids").get<std::vector<std::string>>();
    e.domains = p.at("domains").get<std::vector<std::string>>();
    e.pca.coords = p.at("coords").get<std::vector<std::vector<double>>>();
    e.pca.explained_ratio = p.at("explained_ratio").get<std::vector<double>>();
    projections.push_back(std::move(e));
  }
  if (reports.empty()) throw DataError("nothing to report: no segmentation metrics or distances found");
  emit_report(reports, projections, cfg.output_root / "report");
}

}  // namespace

StageOutcome run_stage(Stage stage, const PipelineConfig& cfg, bool force) {
  if (cfg.deterministic) {
    torch::set_num_threads(1);
    torch::manual_seed(cfg.seed);
  }
  const auto manifest = cfg.output_root / "runs" / (std::string(to_string(stage)) + ".json");
  if (fs::exists(manifest) && !force) {
    throw ConfigError("stage '" + std::string(to_string(stage)) + "' already ran (see " + manifest.string() +
                      "); pass --force to run it again");
  }
  require_inputs(stage, cfg);
  const auto owned = stage_owned(stage, cfg);
  for (const auto& p : owned) fs::remove_all(p);
  fs::create_directories(cfg.output_root);

  std::vector<fs::path> input_paths;
  for (const auto& in : stage_inputs(stage, cfg)) input_paths.push_back(in.path);
  const auto inputs = hash_tree(cfg.output_root, input_paths);

  StageOutcome outcome;
  outcome.stage = stage;
  const auto t0 = std::chrono::steady_clock::now();
  switch (stage) {
    case Stage::kGenerate: stage_generate(cfg, outcome); break;
    case Stage::kTrainTranslate: stage_train_translate(cfg, outcome); break;
    case Stage::kTranslate: stage_translate(cfg, outcome); break;
    case Stage::kTrainSiamese: stage_train_siamese(cfg, outcome); break;
    case Stage::kFilter: stage_filter(cfg, outcome); break;
    case Stage::kTrainSeg: stage_train_seg(cfg, outcome); break;
    case Stage::kEvaluate: stage_evaluate(cfg, outcome); break;
    case Stage::kReport: stage_report(cfg, outcome); break;
  }
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  const auto outputs = hash_tree(cfg.output_root, owned);
  for (const auto& [rel, sha] : outputs.items()) outcome.outputs.push_back(rel);
  outcome.manifest = manifest;
  write_manifest(manifest, to_string(stage), cfg, inputs, outputs, wall, outcome.warnings);
  return outcome;
}

void write_run_manifest(const fs::path& manifest, std::string_view name, const PipelineConfig& cfg,
                        const fs::path& base, const std::vector<fs::path>& inputs,
                        const std::vector<fs::path>& outputs, double wall_seconds,
                        const std::vector<std::string>& warnings) {
  write_manifest(manifest, name, cfg, hash_tree(base, inputs), hash_tree(base, outputs), wall_seconds, warnings);
}

std::vector<StageOutcome> run_pipeline(const PipelineConfig& cfg, Stage from, Stage to, bool force) {
  const auto& order = stage_order();
  const auto a = std::find(order.begin(), order.end(), from);
  const auto b = std::find(order.begin(), order.end(), to);
  if (a > b) {
    throw ConfigError("stage '" + std::string(to_string(from)) + "' comes after '" + std::string(to_string(to)) +
                      "' in the pipeline order");
  }
  std::vector<StageOutcome> out;
  for (auto it = a; it <= b; ++it) out.push_back(run_stage(*it, cfg, force));
  return out;
}

}  // namespace eyeadapt
