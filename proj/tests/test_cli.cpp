// Integration tests exercising the command-line surface end to end.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "gamekd/data.hpp"
#include "helpers.hpp"

using namespace gamekd;
using namespace gamekd::testing;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct CliResult {
  int exit_code = -1;
  std::string output;
};

CliResult run_cli(const std::string& args, const fs::path& workdir) {
  const fs::path log = workdir / "cli_output.log";
  std::ostringstream cmd;
  cmd << "cd " << workdir << " && " << GAMEKD_CLI_PATH << " " << args << " > " << log
      << " 2>&1";
  const int raw = std::system(cmd.str().c_str());
  CliResult r;
  r.exit_code = WEXITSTATUS(raw);
  std::ifstream is(log);
  r.output.assign(std::istreambuf_iterator<char>(is), {});
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(f)), {});
}

json tiny_config() {
  return {
      {"data",
       {{"dir", "corpus"},
        {"seed", 11},
        {"n_train", 24},
        {"n_test", 8},
        {"window_seconds", 10.0},
        {"mel_bins", 8},
        {"frame_rate", 0.8}}},
      {"model",
       {{"teacher_layers", 2},
        {"student_layers", 1},
        {"hidden_dim", 16},
        {"num_heads", 2},
        {"ffn_dim", 32},
        {"max_seq_len", 64},
        {"pooling", "mean"},
        {"dropout", 0.1}}},
      {"train",
       {{"epochs", 2},
        {"batch_size", 8},
        {"seed", 5},
        {"lr_low", 1e-4},
        {"lr_high", 3e-3}}},
      {"distill", {{"epochs", 2}, {"batch_size", 8}, {"lr_low", 1e-4}, {"lr_high", 3e-3}}},
      {"eval", {{"mode", "other_included"}, {"split", "test"}}}};
}

void write_config(const fs::path& path, const json& j) {
  std::ofstream os(path);
  os << j.dump(2) << "\n";
}

} // namespace

TEST_CASE("verify subcommand passes on a fresh build") {
  TempDir dir("cli_verify");
  CliResult r = run_cli("verify --out out", dir.path);
  CHECK(r.exit_code == 0);
  CHECK(r.output.find("all passed") != std::string::npos);
  CHECK(fs::exists(dir.path / "out" / "run_record.json"));
}

TEST_CASE("gen-data is reproducible and records the run") {
  TempDir dir("cli_gen");
  write_config(dir.path / "config.json", tiny_config());

  CliResult r1 = run_cli("gen-data --config config.json --out out", dir.path);
  REQUIRE(r1.exit_code == 0);
  const std::string train1 = slurp(dir.path / "corpus" / "train.jsonl");

  fs::remove_all(dir.path / "corpus");
  CliResult r2 = run_cli("gen-data --config config.json --out out", dir.path);
  REQUIRE(r2.exit_code == 0);
  CHECK(slurp(dir.path / "corpus" / "train.jsonl") == train1);

  json record = json::parse(slurp(dir.path / "out" / "run_record.json"));
  CHECK(record.at("command") == "gen-data");
  CHECK(record.at("exit_status") == 0);
  CHECK(record.at("input_hashes").size() == 1);
}

TEST_CASE("unknown config keys are rejected with the config exit code") {
  TempDir dir("cli_badkey");
  json cfg = tiny_config();
  cfg["train"]["learning_rate"] = 0.1; // not a key
  write_config(dir.path / "config.json", cfg);
  CliResult r = run_cli("gen-data --config config.json --out out", dir.path);
  CHECK(r.exit_code == 2);
  CHECK(r.output.find("E_CONFIG") != std::string::npos);
  CHECK(r.output.find("learning_rate") != std::string::npos);
}

TEST_CASE("missing config file is a config error") {
  TempDir dir("cli_noconfig");
  CliResult r = run_cli("distill --config nope.json --out out", dir.path);
  CHECK(r.exit_code == 2);
}

TEST_CASE("distill with an empty teacher subset fails fast without outputs") {
  TempDir dir("cli_empty_subset");
  json cfg = tiny_config();
  cfg["distill"]["teachers"] = json::array();
  write_config(dir.path / "config.json", cfg);
  run_cli("gen-data --config config.json --out out", dir.path);

  CliResult r = run_cli("distill --config config.json --out out", dir.path);
  CHECK(r.exit_code == 2);
  CHECK_FALSE(fs::exists(dir.path / "out" / "student.ckpt"));
  CHECK_FALSE(fs::exists(dir.path / "out" / "loss_history.csv"));
}

TEST_CASE("segment subcommand reproduces the library result") {
  TempDir dir("cli_segment");

  StreamBundle s;
  s.transcript_windows = {{0, 10, {1, 2}, {}}, {10, 20, {3}, {}}};
  s.chat_log = {{4.0, {5, 6}, {}}, {15.5, {7}, {}}};
  s.audio.frame_rate = 1.0;
  s.audio.mels = 2;
  s.audio.frame_count = 20;
  s.audio.values.assign(40, 0.5);
  s.events = {{12.0, EventLabel::TOWER}};
  save_streams(dir.path / "streams", s);

  CliResult r = run_cli("segment --streams streams --out out", dir.path);
  REQUIRE(r.exit_code == 0);

  std::vector<Instance> via_cli = load_corpus(dir.path / "out" / "instances.jsonl");
  std::vector<Instance> direct =
      segment(s.transcript_windows, s.chat_log, s.audio, s.events);
  REQUIRE(via_cli.size() == direct.size());
  for (std::size_t i = 0; i < direct.size(); ++i) {
    CHECK(via_cli[i].label == direct[i].label);
    CHECK(via_cli[i].chat_tokens == direct[i].chat_tokens);
    CHECK(via_cli[i].audio.frames == direct[i].audio.frames);
  }
  CHECK(direct[1].label == EventLabel::TOWER);
}

TEST_CASE("full pipeline smoke: gen-data, teachers, distill, evaluate") {
  TempDir dir("cli_pipeline");
  write_config(dir.path / "config.json", tiny_config());

  REQUIRE(run_cli("gen-data --config config.json --out out", dir.path).exit_code == 0);
  for (const char* m : {"audio", "chat", "transcript"}) {
    CliResult r = run_cli(std::string("train-teacher --modality ") + m +
                              " --config config.json --out out",
                          dir.path);
    REQUIRE(r.exit_code == 0);
  }
  REQUIRE(run_cli("distill --config config.json --out out", dir.path).exit_code == 0);
  CHECK(fs::exists(dir.path / "out" / "student.ckpt"));
  CHECK(fs::exists(dir.path / "out" / "projections.ckpt"));
  CHECK(fs::exists(dir.path / "out" / "heads.ckpt"));
  CHECK(fs::exists(dir.path / "out" / "loss_history.csv"));

  CliResult ev = run_cli("evaluate --config config.json --out out", dir.path);
  REQUIRE(ev.exit_code == 0);
  json metrics = json::parse(slurp(dir.path / "out" / "metrics.json"));
  CHECK(metrics.at("per_label").size() == 4);
  CHECK(metrics.at("mode") == "other_included");

  // evaluating twice gives identical reports
  const std::string first = slurp(dir.path / "out" / "metrics.json");
  REQUIRE(run_cli("evaluate --config config.json --out out", dir.path).exit_code == 0);
  CHECK(slurp(dir.path / "out" / "metrics.json") == first);
}

TEST_CASE("baseline distillation mode trains without teacher losses") {
  TempDir dir("cli_baseline");
  json cfg = tiny_config();
  cfg["distill"]["baseline"] = true;
  write_config(dir.path / "config.json", cfg);

  REQUIRE(run_cli("gen-data --config config.json --out out", dir.path).exit_code == 0);
  REQUIRE(run_cli("train-teacher --modality transcript --config config.json --out out",
                  dir.path)
              .exit_code == 0);
  CliResult r = run_cli("distill --config config.json --out out", dir.path);
  REQUIRE(r.exit_code == 0);
  CHECK(fs::exists(dir.path / "out" / "student.ckpt"));
  CHECK_FALSE(fs::exists(dir.path / "out" / "projections.ckpt"));
}

TEST_CASE("OTHER-excluded mode runs the 3-class pipeline end to end") {
  TempDir dir("cli_excluded");
  json cfg = tiny_config();
  cfg["data"]["n_train"] = 32; // enough non-OTHER windows after filtering
  cfg["eval"]["mode"] = "other_excluded";
  write_config(dir.path / "config.json", cfg);

  REQUIRE(run_cli("gen-data --config config.json --out out", dir.path).exit_code == 0);
  for (const char* m : {"audio", "chat", "transcript"})
    REQUIRE(run_cli(std::string("train-teacher --modality ") + m +
                        " --config config.json --out out",
                    dir.path)
                .exit_code == 0);
  REQUIRE(run_cli("distill --config config.json --out out", dir.path).exit_code == 0);
  REQUIRE(run_cli("evaluate --config config.json --out out", dir.path).exit_code == 0);

  json metrics = json::parse(slurp(dir.path / "out" / "metrics.json"));
  CHECK(metrics.at("per_label").size() == 3);
  CHECK(metrics.at("mode") == "other_excluded");
  for (const auto& row : metrics.at("per_label")) CHECK(row.at("label") != "OTHER");
}

TEST_CASE("inverse-frequency class weights are accepted across the pipeline") {
  TempDir dir("cli_weights");
  json cfg = tiny_config();
  cfg["train"]["class_weights"] = "inverse_frequency";
  cfg["distill"]["class_weights"] = "inverse_frequency";
  write_config(dir.path / "config.json", cfg);

  REQUIRE(run_cli("gen-data --config config.json --out out", dir.path).exit_code == 0);
  for (const char* m : {"audio", "transcript", "chat"})
    REQUIRE(run_cli(std::string("train-teacher --modality ") + m +
                        " --config config.json --out out",
                    dir.path)
                .exit_code == 0);
  CHECK(run_cli("distill --config config.json --out out", dir.path).exit_code == 0);
}

TEST_CASE("seed override flows into generation") {
  TempDir dir("cli_seed");
  write_config(dir.path / "config.json", tiny_config());
  REQUIRE(run_cli("gen-data --config config.json --out out --seed 99", dir.path)
              .exit_code == 0);
  const std::string a = slurp(dir.path / "corpus" / "train.jsonl");
  REQUIRE(run_cli("gen-data --config config.json --out out --seed 100", dir.path)
              .exit_code == 0);
  CHECK(slurp(dir.path / "corpus" / "train.jsonl") != a);
}
