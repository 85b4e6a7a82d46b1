#include "doctest_torch.hpp"

#include <array>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <set>

#include <json.hpp>

#include "eyeadapt/errors.hpp"
#include "eyeadapt/pipeline.hpp"
#include "test_util.hpp"

using namespace eyeadapt;
namespace fs = std::filesystem;

namespace {

const char* kSmoke = R"(
[global]
seed = 3

[datakit]
source_count = 6
target_count = 6
height = 32
width = 32

[translate]
epochs = 1
batch_size = 3

[filterkit]
epochs = 1
pairs_per_epoch = 20
threshold_rule = "mean"

[segkit]
modes = ["ritnet"]
datasets = ["source", "srcgan_s"]
n_real = [0]
epochs = 1
batch_size = 3
)";

PipelineConfig smoke(const fs::path& root) {
  auto doc = ConfigDoc::parse(kSmoke, "smoke");
  doc.set("global", "output_root", root.string());
  return pipeline_config(doc);
}

std::string run_command(const std::string& cmd) {
  std::string out;
  std::unique_ptr<FILE, int (*)(FILE*)> pipe(popen(cmd.c_str(), "r"), pclose);
  REQUIRE(pipe);
  std::array<char, 512> buf{};
  while (fgets(buf.data(), buf.size(), pipe.get())) out += buf.data();
  return out;
}

}  // namespace

TEST_CASE("config parsing") {
  SUBCASE("values of every supported type") {
    const auto doc = ConfigDoc::parse("# c\n[a]\nx = 1.5\ny = \"s\"\nz = true\nw = [1, 2]\nv = [\"p\", \"q\"]\n");
    CHECK(std::get<double>(*doc.find("a", "x")) == 1.5);
    CHECK(std::get<std::string>(*doc.find("a", "y")) == "s");
    CHECK(std::get<bool>(*doc.find("a", "z")));
    CHECK(std::get<std::vector<double>>(*doc.find("a", "w")).size() == 2);
    CHECK(std::get<std::vector<std::string>>(*doc.find("a", "v"))[1] == "q");
  }
  SUBCASE("unknown keys are named in the error") {
    try {
      pipeline_config(ConfigDoc::parse("[segkit]\nepochz = 3\n"));
      FAIL("expected a config error");
    } catch (const ConfigError& e) {
      CHECK(std::string(e.what()).find("segkit.epochz") != std::string::npos);
    }
  }
  SUBCASE("ill-typed values are rejected") {
    CHECK_THROWS_AS(pipeline_config(ConfigDoc::parse("[segkit]\nepochs = \"many\"\n")), ConfigError);
    CHECK_THROWS_AS(ConfigDoc::parse("[a\n"), ConfigError);
  }
  SUBCASE("overrides use file syntax") {
    auto doc = ConfigDoc::parse(kSmoke);
    doc.set_from_text("segkit.lr=0.01");
    CHECK(pipeline_config(doc).seg.base.lr == 0.01);
    CHECK_THROWS_AS(doc.set_from_text("no_dot=1"), ConfigError);
  }
  SUBCASE("environment overrides the output root") {
    setenv("EYEADAPT_OUTPUT_ROOT", "/tmp/elsewhere", 1);
    const auto cfg = pipeline_config(ConfigDoc::parse(kSmoke));
    unsetenv("EYEADAPT_OUTPUT_ROOT");
    CHECK(cfg.output_root == fs::path("/tmp/elsewhere"));
  }
  SUBCASE("stage names") {
    for (auto s : stage_order()) CHECK(parse_stage(to_string(s)) == s);
    CHECK_THROWS_AS(parse_stage("deploy"), ConfigError);
  }
}

TEST_CASE("git blob hash") {
  CHECK(git_blob_sha1("hello\n") == "ce013625030ba8dba906f756967f9e9ca394464a");
  CHECK(git_blob_sha1("") == "e69de29bb2d1d6434b8b29ae775ad8c2e48c5391");
}

TEST_CASE("managed stages") {
  test::TempDir dir;
  const auto cfg = smoke(dir.path);

  SUBCASE("generate writes its manifest and refuses a second run") {
    const auto out = run_stage(Stage::kGenerate, cfg);
    CHECK(fs::exists(dir.path / "runs" / "generate.json"));
    const auto m = nlohmann::json::parse(std::ifstream(dir.path / "runs" / "generate.json"));
    CHECK(m.at("seed").get<int>() == 3);
    CHECK(m.at("outputs").size() > 0);
    CHECK_THROWS_AS(run_stage(Stage::kGenerate, cfg), ConfigError);
    CHECK_NOTHROW(run_stage(Stage::kGenerate, cfg, true));
  }
  SUBCASE("a stage with missing inputs names the producing stage") {
    run_stage(Stage::kGenerate, cfg);
    try {
      run_stage(Stage::kFilter, cfg);
      FAIL("expected a data error");
    } catch (const DataError& e) {
      CHECK(std::string(e.what()).find("dangling artifact") != std::string::npos);
    }
  }
  SUBCASE("a bad stage range is rejected") {
    CHECK_THROWS_AS(run_pipeline(cfg, Stage::kReport, Stage::kGenerate), ConfigError);
  }
  SUBCASE("after a full run every artifact belongs to exactly one manifest") {
    run_pipeline(cfg, Stage::kGenerate, Stage::kReport);
    std::map<std::string, int> owners;
    for (const auto& e : fs::directory_iterator(dir.path / "runs")) {
      const auto m = nlohmann::json::parse(std::ifstream(e.path()));
      for (const auto& [rel, hash] : m.at("outputs").items()) {
        ++owners[rel];
        CHECK(git_blob_sha1_file(dir.path / rel) == hash.get<std::string>());
      }
    }
    for (const auto& e : fs::recursive_directory_iterator(dir.path)) {
      if (!e.is_regular_file()) continue;
      const auto rel = e.path().lexically_relative(dir.path).generic_string();
      if (rel.rfind("runs/", 0) == 0) continue;
      CHECK_MESSAGE(owners[rel] == 1, rel);
    }
    CHECK(fs::exists(dir.path / "report" / "comparison.csv"));
  }
}

TEST_CASE("cli help lists every flag") {
  const std::string help = run_command(std::string(EYEADAPT_CLI_PATH) + " --help 2>&1");
  for (const char* sub : {"generate", "train-translate", "translate", "train-siamese", "filter", "train-seg",
                          "evaluate", "report", "run", "pipeline"}) {
    CHECK_MESSAGE(help.find(sub) != std::string::npos, sub);
  }
  const std::string seg = run_command(std::string(EYEADAPT_CLI_PATH) + " train-seg --help 2>&1");
  for (const char* flag : {"--config", "--set", "--seed", "--output-root", "--force", "--mode", "--n-real", "--epochs", "--folds", "--source", "--target", "--out"}) {
    CHECK_MESSAGE(seg.find(flag) != std::string::npos, flag);
  }
}

TEST_CASE("cli errors are json with the mapped exit code") {
  const std::string out = run_command(std::string(EYEADAPT_CLI_PATH) + " train-seg --set segkit.bogus=1 2>&1; echo rc=$?");
  CHECK(out.find("\"exit_code\":2") != std::string::npos);
  CHECK(out.find("rc=2") != std::string::npos);
}
