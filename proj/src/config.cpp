#include "gamekd/config.hpp"

#include <fstream>
#include <sstream>

#include <openssl/evp.h>

#include "gamekd/errors.hpp"

namespace gamekd {

using nlohmann::json;

namespace {

void reject_unknown_keys(const json& j, const std::string& section,
                         std::initializer_list<const char*> allowed) {
  if (!j.is_object())
    throw ConfigError("config: section '" + section + "' must be an object");
  for (const auto& [key, _] : j.items()) {
    bool ok = false;
    for (const char* a : allowed)
      if (key == a) ok = true;
    if (!ok) throw ConfigError("config: unknown key '" + section + "." + key + "'");
  }
}

TrainConfig parse_train_section(const json& j, const std::string& section,
                                const TrainConfig& defaults) {
  reject_unknown_keys(j, section,
                      {"epochs", "batch_size", "seed", "dropout", "lr_low", "lr_high",
                       "cycle_epochs", "weight_decay", "clip_norm", "class_weights"});
  TrainConfig cfg = defaults;
  cfg.epochs = j.value("epochs", cfg.epochs);
  cfg.batch_size = j.value("batch_size", cfg.batch_size);
  cfg.seed = j.value("seed", cfg.seed);
  cfg.dropout = j.value("dropout", cfg.dropout);
  cfg.lr_low = j.value("lr_low", cfg.lr_low);
  cfg.lr_high = j.value("lr_high", cfg.lr_high);
  cfg.cycle_epochs = j.value("cycle_epochs", cfg.cycle_epochs);
  cfg.weight_decay = j.value("weight_decay", cfg.weight_decay);
  cfg.clip_norm = j.value("clip_norm", cfg.clip_norm);
  if (j.contains("class_weights")) {
    const std::string cw = j.at("class_weights").get<std::string>();
    if (cw == "inverse_frequency") {
      // resolved against the corpus by the command; marker vector
      cfg.class_weights = std::vector<double>{};
    } else if (cw != "none") {
      throw ConfigError("config: class_weights must be 'none' or 'inverse_frequency'");
    }
  }
  cfg.validate();
  return cfg;
}

} // namespace

RunConfigFile parse_config_json(const json& j) {
  if (!j.is_object()) throw ConfigError("config: document must be a JSON object");
  for (const auto& [key, _] : j.items())
    if (key != "data" && key != "model" && key != "train" && key != "distill" &&
        key != "eval")
      throw ConfigError("config: unknown section '" + key + "'");

  RunConfigFile cfg;
  cfg.raw = j;

  if (j.contains("data")) {
    const json& d = j.at("data");
    reject_unknown_keys(d, "data",
                        {"dir", "seed", "n_train", "n_test", "label_probs",
                         "window_seconds", "mel_bins", "frame_rate", "difficulty"});
    cfg.data_dir = d.value("dir", cfg.data_dir.string());
    cfg.gen.seed = d.value("seed", cfg.gen.seed);
    cfg.gen.n_train = d.value("n_train", cfg.gen.n_train);
    cfg.gen.n_test = d.value("n_test", cfg.gen.n_test);
    cfg.gen.window_seconds = d.value("window_seconds", cfg.gen.window_seconds);
    cfg.gen.mel_bins = d.value("mel_bins", cfg.gen.mel_bins);
    cfg.gen.frame_rate = d.value("frame_rate", cfg.gen.frame_rate);
    if (d.contains("label_probs")) {
      const json& p = d.at("label_probs");
      reject_unknown_keys(p, "data.label_probs", {"KILL", "DRAGON", "TOWER", "OTHER"});
      for (EventLabel l : kAllLabels)
        cfg.gen.label_probs[static_cast<int>(l)] = p.at(to_string(l)).get<double>();
    }
    if (d.contains("difficulty")) {
      const json& k = d.at("difficulty");
      reject_unknown_keys(k, "data.difficulty",
                          {"kill_transcript", "kill_chat", "kill_audio",
                           "dragon_transcript", "dragon_chat", "dragon_audio",
                           "tower_transcript", "tower_chat", "tower_audio",
                           "false_signal", "audio_noise"});
      DifficultyKnobs& dk = cfg.gen.difficulty;
      dk.kill_transcript = k.value("kill_transcript", dk.kill_transcript);
      dk.kill_chat = k.value("kill_chat", dk.kill_chat);
      dk.kill_audio = k.value("kill_audio", dk.kill_audio);
      dk.dragon_transcript = k.value("dragon_transcript", dk.dragon_transcript);
      dk.dragon_chat = k.value("dragon_chat", dk.dragon_chat);
      dk.dragon_audio = k.value("dragon_audio", dk.dragon_audio);
      dk.tower_transcript = k.value("tower_transcript", dk.tower_transcript);
      dk.tower_chat = k.value("tower_chat", dk.tower_chat);
      dk.tower_audio = k.value("tower_audio", dk.tower_audio);
      dk.false_signal = k.value("false_signal", dk.false_signal);
      dk.audio_noise = k.value("audio_noise", dk.audio_noise);
    }
  }

  // model defaults track the desk-scale configuration
  cfg.token_encoder.num_layers = 4;
  cfg.token_encoder.hidden_dim = 32;
  cfg.token_encoder.num_heads = 2;
  cfg.token_encoder.ffn_dim = 64;
  cfg.token_encoder.max_seq_len = 64;
  cfg.token_encoder.vocab_size = 1; // replaced per use
  cfg.audio_encoder = cfg.token_encoder;
  cfg.audio_encoder.vocab_size = 0;
  cfg.audio_encoder.mel_bins = cfg.gen.mel_bins;
  cfg.audio_encoder.patch_frames = 2;
  cfg.audio_encoder.patch_mels = 2;

  if (j.contains("model")) {
    const json& m = j.at("model");
    reject_unknown_keys(m, "model",
                        {"teacher_layers", "student_layers", "hidden_dim", "num_heads",
                         "ffn_dim", "max_seq_len", "pooling", "dropout", "audio_patch"});
    cfg.token_encoder.num_layers = m.value("teacher_layers", cfg.token_encoder.num_layers);
    cfg.student_layers = m.value("student_layers", cfg.student_layers);
    cfg.token_encoder.hidden_dim = m.value("hidden_dim", cfg.token_encoder.hidden_dim);
    cfg.token_encoder.num_heads = m.value("num_heads", cfg.token_encoder.num_heads);
    cfg.token_encoder.ffn_dim = m.value("ffn_dim", cfg.token_encoder.ffn_dim);
    cfg.token_encoder.max_seq_len = m.value("max_seq_len", cfg.token_encoder.max_seq_len);
    cfg.token_encoder.dropout = m.value("dropout", cfg.token_encoder.dropout);
    if (m.contains("pooling"))
      cfg.pooling = pooling_from_string(m.at("pooling").get<std::string>());
    cfg.audio_encoder.num_layers = cfg.token_encoder.num_layers;
    cfg.audio_encoder.hidden_dim = cfg.token_encoder.hidden_dim;
    cfg.audio_encoder.num_heads = cfg.token_encoder.num_heads;
    cfg.audio_encoder.ffn_dim = cfg.token_encoder.ffn_dim;
    cfg.audio_encoder.max_seq_len = cfg.token_encoder.max_seq_len;
    cfg.audio_encoder.dropout = cfg.token_encoder.dropout;
    if (m.contains("audio_patch")) {
      const json& ap = m.at("audio_patch");
      reject_unknown_keys(ap, "model.audio_patch", {"frames", "mels"});
      cfg.audio_encoder.patch_frames = ap.value("frames", cfg.audio_encoder.patch_frames);
      cfg.audio_encoder.patch_mels = ap.value("mels", cfg.audio_encoder.patch_mels);
    }
    cfg.audio_encoder.mel_bins = cfg.gen.mel_bins;
  }

  if (cfg.student_layers < 1 || cfg.student_layers > cfg.token_encoder.num_layers)
    throw ConfigError("config: student_layers must be in [1, teacher_layers]");

  TrainConfig train_defaults;
  if (j.contains("train"))
    cfg.train = parse_train_section(j.at("train"), "train", train_defaults);
  else
    cfg.train = train_defaults;

  TrainConfig distill_defaults = cfg.train;
  distill_defaults.lr_high = 1e-4; // distillation bound
  if (j.contains("distill")) {
    const json& d = j.at("distill");
    reject_unknown_keys(d, "distill",
                        {"teachers", "teacher_ckpts", "baseline", "temperature", "epochs",
                         "batch_size", "seed", "dropout", "lr_low", "lr_high",
                         "cycle_epochs", "weight_decay", "clip_norm", "class_weights"});
    if (d.contains("teachers")) {
      cfg.teacher_subset.clear();
      for (const auto& name : d.at("teachers"))
        cfg.teacher_subset.push_back(modality_from_string(name.get<std::string>()));
    }
    if (d.contains("teacher_ckpts")) {
      const json& t = d.at("teacher_ckpts");
      reject_unknown_keys(t, "distill.teacher_ckpts", {"audio", "chat", "transcript"});
      for (const auto& [key, value] : t.items())
        cfg.teacher_ckpts[modality_from_string(key)] = value.get<std::string>();
    }
    cfg.baseline = d.value("baseline", false);
    cfg.distill_temperature = d.value("temperature", 1.0);
    json train_keys = d;
    train_keys.erase("teachers");
    train_keys.erase("teacher_ckpts");
    train_keys.erase("baseline");
    train_keys.erase("temperature");
    cfg.distill_train = parse_train_section(train_keys, "distill", distill_defaults);
  } else {
    cfg.distill_train = distill_defaults;
  }

  if (j.contains("eval")) {
    const json& e = j.at("eval");
    reject_unknown_keys(e, "eval", {"mode", "checkpoint", "split"});
    if (e.contains("mode"))
      cfg.eval_mode = eval_mode_from_string(e.at("mode").get<std::string>());
    cfg.eval_checkpoint = e.value("checkpoint", cfg.eval_checkpoint.string());
    cfg.eval_split = e.value("split", cfg.eval_split);
    if (cfg.eval_split != "train" && cfg.eval_split != "test")
      throw ConfigError("config: eval.split must be 'train' or 'test'");
  }

  return cfg;
}

RunConfigFile parse_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("config: cannot open '" + path.string() + "'");
  json j;
  try {
    is >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config: parse error in '" + path.string() + "': " + e.what());
  }
  return parse_config_json(j);
}

std::string git_blob_sha1(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("hash: cannot open '" + path.string() + "'");
  std::ostringstream buf;
  buf << is.rdbuf();
  const std::string content = buf.str();
  const std::string header = "blob " + std::to_string(content.size());

  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int digest_len = 0;
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha1(), nullptr);
  EVP_DigestUpdate(ctx, header.data(), header.size() + 1); // includes the NUL
  EVP_DigestUpdate(ctx, content.data(), content.size());
  EVP_DigestFinal_ex(ctx, digest, &digest_len);
  EVP_MD_CTX_free(ctx);

  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < digest_len; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 0xf]);
  }
  return out;
}

void write_run_record(const std::filesystem::path& path, const RunRecord& record) {
  json j = {{"command", record.command},
            {"config", record.config_snapshot},
            {"input_hashes", record.input_hashes},
            {"started_at", record.started_at},
            {"wall_seconds", record.wall_seconds},
            {"outputs", record.outputs},
            {"exit_status", record.exit_status}};
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw DataError("run record: cannot write '" + path.string() + "'");
  os << j.dump(2) << '\n';
}

} // namespace gamekd
