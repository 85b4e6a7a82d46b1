// eyeadapt command line: managed pipeline stages plus direct per-module commands.

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>
#include <torch/torch.h>

#include "eyeadapt/config.hpp"
#include "eyeadapt/errors.hpp"
#include "eyeadapt/evalkit.hpp"
#include "eyeadapt/filterkit.hpp"
#include "eyeadapt/pipeline.hpp"
#include "eyeadapt/segkit.hpp"
#include "eyeadapt/tensors.hpp"
#include "eyeadapt/translate.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace eyeadapt;

namespace {

struct Common {
  std::string config;
  std::vector<std::string> sets;
  std::optional<long long> seed;
  std::string output_root;
  bool force = false;
};

void add_common(CLI::App* sub, Common& c, bool managed) {
  sub->add_option("--config", c.config, "TOML config file")->check(CLI::ExistingFile);
  sub->add_option("--set", c.sets, "Override a config key, section.key=value (repeatable)");
  sub->add_option("--seed", c.seed, "Global seed ([global].seed)");
  if (managed) {
    sub->add_option("--output-root", c.output_root, "Output root ([global].output_root)");
    sub->add_flag("--force", c.force, "Re-run a stage that already has a run manifest");
  }
}

/// Config file, then named flags, then --set overrides.
PipelineConfig build_config(const Common& c, const std::vector<std::pair<std::string, ConfigValue>>& flags) {
  ConfigDoc doc = c.config.empty() ? ConfigDoc{} : ConfigDoc::load(c.config);
  if (c.seed) doc.set("global", "seed", static_cast<double>(*c.seed));
  if (!c.output_root.empty()) doc.set("global", "output_root", c.output_root);
  for (const auto& [key, value] : flags) {
    const auto dot = key.find('.');
    doc.set(key.substr(0, dot), key.substr(dot + 1), value);
  }
  for (const auto& s : c.sets) doc.set_from_text(s);
  auto cfg = pipeline_config(doc);
  if (cfg.deterministic) {
    torch::set_num_threads(1);
    torch::manual_seed(cfg.seed);
  }
  return cfg;
}

using Flags = std::vector<std::pair<std::string, ConfigValue>>;

template <class T>
void flag_if(Flags& f, const std::string& key, const std::optional<T>& v) {
  if (v) f.emplace_back(key, static_cast<double>(*v));
}
void flag_if(Flags& f, const std::string& key, const std::optional<std::string>& v) {
  if (v) f.emplace_back(key, *v);
}
void flag_list_if(Flags& f, const std::string& key, const std::optional<std::string>& v) {
  if (v) f.emplace_back(key, std::vector<std::string>{*v});
}

fs::path manifest_for(const fs::path& out) {
  auto p = out;
  if (!p.has_filename()) p = p.parent_path();
  return p.parent_path() / (p.filename().string() + ".run.json");
}

class Timer {
 public:
  double seconds() const { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count(); }

 private:
  std::chrono::steady_clock::time_point t0_ = std::chrono::steady_clock::now();
};

void print_outcomes(const std::vector<StageOutcome>& outcomes) {
  json j = json::array();
  for (const auto& o : outcomes) {
    json outs = json::array();
    for (const auto& p : o.outputs) outs.push_back(p.generic_string());
    j.push_back({{"stage", std::string(to_string(o.stage))},
                 {"manifest", o.manifest.string()},
                 {"outputs", outs.size()},
                 {"warnings", o.warnings}});
  }
  std::cout << j.dump(2) << '\n';
}

int run_managed(Stage stage, const PipelineConfig& cfg, bool force) {
  print_outcomes({run_stage(stage, cfg, force)});
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sim-to-real eye segmentation toolkit: translation, filtering, adapted segmentation"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "eyeadapt 0.1.0");

  std::vector<std::string> stage_names;
  for (auto s : stage_order()) stage_names.emplace_back(to_string(s));

  // generate
  Common gen_c;
  std::optional<std::string> gen_out, gen_style;
  std::optional<int> gen_count, gen_h, gen_w;
  auto* gen = app.add_subcommand("generate", "Render procedural eye datasets");
  add_common(gen, gen_c, true);
  gen->add_option("--out", gen_out, "Write a single dataset here instead of running the managed stage");
  gen->add_option("--style", gen_style, "Dataset style for --out")->check(CLI::IsMember({"synthetic", "real"}));
  gen->add_option("--count", gen_count, "Image count for --out")->check(CLI::PositiveNumber);
  gen->add_option("--height", gen_h, "Image height ([datakit].height)");
  gen->add_option("--width", gen_w, "Image width ([datakit].width)");

  // train-translate
  Common tt_c;
  std::optional<std::string> tt_mode, tt_source, tt_target, tt_out;
  std::optional<int> tt_epochs;
  auto* tt = app.add_subcommand("train-translate", "Train a CGAN or SRCGAN translator pair");
  add_common(tt, tt_c, true);
  tt->add_option("--mode", tt_mode, "cgan or srcgan ([translate].modes)")->check(CLI::IsMember({"cgan", "srcgan"}));
  tt->add_option("--source", tt_source, "Source dataset directory (direct mode)");
  tt->add_option("--target", tt_target, "Target dataset directory (direct mode)");
  tt->add_option("--out", tt_out, "Checkpoint directory (direct mode)");
  tt->add_option("--epochs", tt_epochs, "Training epochs ([translate].epochs)");

  // translate
  Common tr_c;
  std::optional<std::string> tr_ckpt, tr_source, tr_out;
  auto* tr = app.add_subcommand("translate", "Translate a dataset with a trained generator");
  add_common(tr, tr_c, true);
  tr->add_option("--ckpt", tr_ckpt, "Generator checkpoint (direct mode)");
  tr->add_option("--source", tr_source, "Dataset to translate (direct mode)");
  tr->add_option("--out", tr_out, "Output dataset directory (direct mode)");

  // train-siamese
  Common ts_c;
  std::optional<std::string> ts_source, ts_target, ts_out;
  std::optional<int> ts_epochs;
  auto* ts = app.add_subcommand("train-siamese", "Train the Siamese domain encoder");
  add_common(ts, ts_c, true);
  ts->add_option("--source", ts_source, "Source dataset directory (direct mode)");
  ts->add_option("--target", ts_target, "Target dataset directory (direct mode)");
  ts->add_option("--out", ts_out, "Checkpoint directory (direct mode)");
  ts->add_option("--epochs", ts_epochs, "Training epochs ([filterkit].epochs)");

  // filter
  Common fi_c;
  std::optional<std::string> fi_ckpt, fi_dataset, fi_real, fi_out, fi_rule, fi_embeddings;
  std::optional<double> fi_threshold;
  auto* fi = app.add_subcommand("filter", "Drop samples far from the real-data centroid");
  add_common(fi, fi_c, true);
  fi->add_option("--ckpt", fi_ckpt, "Siamese encoder checkpoint (direct mode)");
  fi->add_option("--dataset", fi_dataset, "Dataset to filter (direct mode)");
  fi->add_option("--real", fi_real, "Real dataset defining the centroid (direct mode)");
  fi->add_option("--out", fi_out, "Filtered dataset directory (direct mode)");
  fi->add_option("--embeddings", fi_embeddings, "Write embeddings CSV here (direct mode)");
  fi->add_option("--threshold", fi_threshold, "Distance threshold ([filterkit].threshold)");
  fi->add_option("--threshold-rule", fi_rule, "fixed or mean ([filterkit].threshold_rule)")
      ->check(CLI::IsMember({"fixed", "mean"}));

  // train-seg
  Common sg_c;
  std::optional<std::string> sg_mode, sg_source, sg_target, sg_out;
  std::optional<int> sg_n, sg_folds, sg_epochs;
  auto* sg = app.add_subcommand("train-seg", "Train and cross-validate the segmenter");
  add_common(sg, sg_c, true);
  sg->add_option("--mode", sg_mode, "ritnet or dann ([segkit].modes)")->check(CLI::IsMember({"ritnet", "dann"}));
  sg->add_option("--source", sg_source, "Training dataset directory (direct mode)");
  sg->add_option("--target", sg_target, "Real dataset directory (direct mode)");
  sg->add_option("--out", sg_out, "Output directory (direct mode)");
  sg->add_option("--n-real", sg_n, "Real images mixed into training ([segkit].n_real)");
  sg->add_option("--folds", sg_folds, "Cross-validation folds ([segkit].folds)");
  sg->add_option("--epochs", sg_epochs, "Fixed epoch count, 0 for the schedule ([segkit].epochs)");

  // evaluate
  Common ev_c;
  std::optional<std::string> ev_ckpt, ev_real, ev_seg, ev_out;
  std::vector<std::string> ev_datasets;
  auto* ev = app.add_subcommand("evaluate", "Distance-to-centroid and segmentation metrics");
  add_common(ev, ev_c, true);
  ev->add_option("--ckpt", ev_ckpt, "Siamese encoder checkpoint (direct mode)");
  ev->add_option("--real", ev_real, "Real dataset (direct mode)");
  ev->add_option("--dataset", ev_datasets, "Dataset to score, repeatable (direct mode)");
  ev->add_option("--seg-ckpt", ev_seg, "Segmenter checkpoint scored on --real (direct mode)");
  ev->add_option("--out", ev_out, "Write the result JSON here (direct mode)");

  // report
  Common rp_c;
  auto* rp = app.add_subcommand("report", "Tables, CSVs and plots from the managed outputs");
  add_common(rp, rp_c, true);

  // run / pipeline
  Common run_c;
  std::string run_stage_name;
  auto* run = app.add_subcommand("run", "Run one managed stage");
  add_common(run, run_c, true);
  run->add_option("stage", run_stage_name, "Stage name")->required()->check(CLI::IsMember(stage_names));

  Common pl_c;
  std::string pl_from = stage_names.front(), pl_to = stage_names.back();
  auto* pl = app.add_subcommand("pipeline", "Run managed stages in order");
  add_common(pl, pl_c, true);
  pl->add_option("--from", pl_from, "First stage")->check(CLI::IsMember(stage_names));
  pl->add_option("--to", pl_to, "Last stage")->check(CLI::IsMember(stage_names));

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << json{{"error", "usage"}, {"exit_code", 2}, {"message", e.what()}}.dump() << '\n';
    return 2;
  }

  try {
    if (*gen) {
      Flags f;
      flag_if(f, "datakit.height", gen_h);
      flag_if(f, "datakit.width", gen_w);
      const auto cfg = build_config(gen_c, f);
      if (!gen_out) return run_managed(Stage::kGenerate, cfg, gen_c.force);
      Timer t;
      const auto style = parse_style(gen_style.value_or("synthetic"));
      const int n = gen_count.value_or(style == Style::kSyntheticLike ? cfg.data.source_count : cfg.data.target_count);
      save_dataset(generate_dataset(n, style, cfg.seed, cfg.data.height, cfg.data.width), *gen_out);
      write_run_manifest(manifest_for(*gen_out), "generate", cfg, fs::current_path(), {}, {*gen_out}, t.seconds());
      return 0;
    }
    if (*tt) {
      Flags f;
      flag_list_if(f, "translate.modes", tt_mode);
      flag_if(f, "translate.epochs", tt_epochs);
      const auto cfg = build_config(tt_c, f);
      if (!tt_out) return run_managed(Stage::kTrainTranslate, cfg, tt_c.force);
      if (!tt_source || !tt_target) throw ConfigError("train-translate --out needs --source and --target");
      Timer t;
      auto tc = cfg.translate;
      tc.mode = cfg.translate_modes.front();
      train_translator(load_dataset(*tt_source), load_dataset(*tt_target), tc, *tt_out);
      write_run_manifest(manifest_for(*tt_out), "train-translate", cfg, fs::current_path(), {*tt_source, *tt_target},
                         {*tt_out}, t.seconds());
      return 0;
    }
    if (*tr) {
      const auto cfg = build_config(tr_c, {});
      if (!tr_out) return run_managed(Stage::kTranslate, cfg, tr_c.force);
      if (!tr_ckpt || !tr_source) throw ConfigError("translate --out needs --ckpt and --source");
      Timer t;
      save_dataset(translate_dataset(fs::path(*tr_ckpt), load_dataset(*tr_source)), *tr_out);
      write_run_manifest(manifest_for(*tr_out), "translate", cfg, fs::current_path(), {*tr_ckpt, *tr_source},
                         {*tr_out}, t.seconds());
      return 0;
    }
    if (*ts) {
      Flags f;
      flag_if(f, "filterkit.epochs", ts_epochs);
      const auto cfg = build_config(ts_c, f);
      if (!ts_out) return run_managed(Stage::kTrainSiamese, cfg, ts_c.force);
      if (!ts_source || !ts_target) throw ConfigError("train-siamese --out needs --source and --target");
      Timer t;
      train_siamese(load_dataset(*ts_source), load_dataset(*ts_target), cfg.filter.siamese, *ts_out);
      write_run_manifest(manifest_for(*ts_out), "train-siamese", cfg, fs::current_path(), {*ts_source, *ts_target},
                         {*ts_out}, t.seconds());
      return 0;
    }
    if (*fi) {
      Flags f;
      flag_if(f, "filterkit.threshold", fi_threshold);
      flag_if(f, "filterkit.threshold_rule", fi_rule);
      const auto cfg = build_config(fi_c, f);
      if (!fi_out) return run_managed(Stage::kFilter, cfg, fi_c.force);
      if (!fi_ckpt || !fi_dataset || !fi_real) throw ConfigError("filter --out needs --ckpt, --dataset and --real");
      Timer t;
      auto enc = load_siamese(*fi_ckpt);
      const auto ds = load_dataset(*fi_dataset);
      const auto centroid = compute_centroid(enc, load_dataset(*fi_real), *fi_ckpt);
      const double threshold =
          cfg.filter.rule == ThresholdRule::kMean ? mean_distance(enc, ds, centroid) : cfg.filter.threshold;
      const auto res = filter_dataset(enc, ds, centroid, threshold);
      save_dataset(res.kept, *fi_out);
      std::vector<fs::path> outputs{*fi_out};
      if (fi_embeddings) {
        write_embeddings_csv(res.embeddings, res.distances, *fi_embeddings);
        outputs.emplace_back(*fi_embeddings);
      }
      for (const auto& w : res.warnings) std::cerr << "warning: " << w << '\n';
      std::cout << json{{"kept", res.kept.size()},
                        {"total", res.total},
                        {"threshold", threshold},
                        {"mu_d_unfiltered", mean_of(res.distances)}}
                       .dump(2)
                << '\n';
      write_run_manifest(manifest_for(*fi_out), "filter", cfg, fs::current_path(), {*fi_ckpt, *fi_dataset, *fi_real},
                         outputs, t.seconds(), res.warnings);
      return 0;
    }
    if (*sg) {
      Flags f;
      flag_list_if(f, "segkit.modes", sg_mode);
      if (sg_n) f.emplace_back("segkit.n_real", std::vector<double>{static_cast<double>(*sg_n)});
      flag_if(f, "segkit.folds", sg_folds);
      flag_if(f, "segkit.epochs", sg_epochs);
      const auto cfg = build_config(sg_c, f);
      if (!sg_out) return run_managed(Stage::kTrainSeg, cfg, sg_c.force);
      if (!sg_source || !sg_target) throw ConfigError("train-seg --out needs --source and --target");
      Timer t;
      auto sc = cfg.seg.base;
      sc.mode = cfg.seg.modes.front();
      sc.n_real = cfg.seg.n_real.front();
      const auto res = train_segmenter(load_dataset(*sg_source), load_dataset(*sg_target), sc, *sg_out);
      std::cout << res.metrics_json(sc).dump(2) << '\n';
      write_run_manifest(manifest_for(*sg_out), "train-seg", cfg, fs::current_path(), {*sg_source, *sg_target},
                         {*sg_out}, t.seconds());
      return 0;
    }
    if (*ev) {
      const auto cfg = build_config(ev_c, {});
      if (!ev_ckpt && !ev_seg) return run_managed(Stage::kEvaluate, cfg, ev_c.force);
      if (!ev_real) throw ConfigError("evaluate needs --real");
      Timer t;
      const auto real = load_dataset(*ev_real);
      json out = json::object();
      std::vector<fs::path> inputs{*ev_real};
      if (ev_ckpt) {
        auto enc = load_siamese(*ev_ckpt);
        const auto centroid = compute_centroid(enc, real, *ev_ckpt);
        json mu = json::object();
        for (const auto& d : ev_datasets) {
          mu[d] = mean_distance(enc, load_dataset(d), centroid);
          inputs.emplace_back(d);
        }
        out["mu_d"] = mu;
        inputs.emplace_back(*ev_ckpt);
      }
      if (ev_seg) {
        auto model = load_segmenter(*ev_seg);
        const auto pred = predict_masks(model, images_to_tensor(real.samples));
        std::vector<double> scores;
        for (std::size_t i = 0; i < real.size(); ++i) scores.push_back(miou(tensor_to_mask(pred[i]), real.samples[i].mask));
        const auto ms = mean_std(scores);
        out["miou_mean"] = ms.mean;
        out["miou_std"] = ms.std ? json(*ms.std) : json();
        inputs.emplace_back(*ev_seg);
      }
      std::cout << out.dump(2) << '\n';
      if (ev_out) {
        std::ofstream(*ev_out) << out.dump(2) << '\n';
        write_run_manifest(manifest_for(*ev_out), "evaluate", cfg, fs::current_path(), inputs, {*ev_out},
                           t.seconds());
      }
      return 0;
    }
    if (*rp) return run_managed(Stage::kReport, build_config(rp_c, {}), rp_c.force);
    if (*run) return run_managed(parse_stage(run_stage_name), build_config(run_c, {}), run_c.force);
    if (*pl) {
      const auto cfg = build_config(pl_c, {});
      print_outcomes(run_pipeline(cfg, parse_stage(pl_from), parse_stage(pl_to), pl_c.force));
      return 0;
    }
  } catch (const Error& e) {
    std::cerr << json{{"error", std::string(to_string(e.kind()))}, {"exit_code", exit_code(e.kind())},
                      {"message", e.what()}}
                     .dump()
              << '\n';
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << json{{"error", "internal"}, {"exit_code", 1}, {"message", e.what()}}.dump() << '\n';
    return 1;
  }
  return 0;
}
