#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "gamekd/data.hpp"
#include "gamekd/distill.hpp"
#include "gamekd/eval.hpp"
#include "gamekd/train.hpp"

namespace gamekd {

// Parsed run configuration. Unknown keys anywhere in the document are
// rejected; referenced paths are validated by the commands before work
// starts.
struct RunConfigFile {
  nlohmann::json raw; // snapshot for the run record

  // data
  GenConfig gen;
  std::filesystem::path data_dir = "corpus";

  // model
  EncoderConfig token_encoder;   // transcript/chat/student template (vocab set per use)
  EncoderConfig audio_encoder;   // patch variant
  int student_layers = 2;
  Pooling pooling = Pooling::Mean;

  // train (teacher fine-tuning)
  TrainConfig train;

  // distill
  std::vector<Modality> teacher_subset = {Modality::Audio, Modality::Chat,
                                          Modality::Transcript};
  std::map<Modality, std::filesystem::path> teacher_ckpts;
  TrainConfig distill_train;
  bool baseline = false;
  double distill_temperature = 1.0;

  // eval
  EvalMode eval_mode = EvalMode::OtherIncluded;
  std::filesystem::path eval_checkpoint;
  std::string eval_split = "test";
};

RunConfigFile parse_config(const std::filesystem::path& path);
RunConfigFile parse_config_json(const nlohmann::json& j);

// Git-style blob hash (sha1 over "blob <len>\0<content>") of a file.
std::string git_blob_sha1(const std::filesystem::path& path);

struct RunRecord {
  std::string command;
  nlohmann::json config_snapshot;
  std::map<std::string, std::string> input_hashes;
  std::string started_at;
  double wall_seconds = 0.0;
  std::vector<std::string> outputs;
  int exit_status = 0;
};

void write_run_record(const std::filesystem::path& path, const RunRecord& record);

} // namespace gamekd
