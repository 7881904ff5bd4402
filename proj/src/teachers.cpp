#include "gamekd/teachers.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "gamekd/checkpoint.hpp"
#include "gamekd/errors.hpp"

namespace gamekd {

using nlohmann::json;

std::string to_string(Modality m) {
  switch (m) {
    case Modality::Audio: return "audio";
    case Modality::Chat: return "chat";
    case Modality::Transcript: return "transcript";
  }
  throw InputError("unknown modality enum value");
}

Modality modality_from_string(const std::string& s) {
  if (s == "audio") return Modality::Audio;
  if (s == "chat") return Modality::Chat;
  if (s == "transcript") return Modality::Transcript;
  throw ConfigError("unknown modality '" + s + "'");
}

TaskKind task_for(Modality m) {
  return m == Modality::Audio ? TaskKind::SequenceClassification
                              : TaskKind::TokenTagging;
}

std::vector<NamedParam> TaskHead::parameters(const std::string& prefix) const {
  return {{prefix + ".w", w, true}, {prefix + ".b", b, false}};
}

TaskHead init_task_head(TaskKind kind, int hidden_dim, int num_classes, Rng& rng) {
  if (num_classes < 2) throw ConfigError("task head: num_classes must be >= 2");
  TaskHead head;
  head.kind = kind;
  const double limit = 1.0 / std::sqrt(static_cast<double>(hidden_dim));
  std::vector<double> w(static_cast<std::size_t>(hidden_dim) * num_classes);
  for (double& x : w) x = rng.uniform(-limit, limit);
  head.w = Tensor::from({hidden_dim, num_classes}, std::move(w), true);
  head.b = Tensor::zeros({num_classes}, true);
  return head;
}

std::vector<NamedParam> TeacherBundle::parameters() const {
  std::vector<NamedParam> out = encoder.parameters();
  for (NamedParam& p : head.parameters("head")) out.push_back(std::move(p));
  return out;
}

HiddenStack teacher_encode(const TeacherBundle& teacher, const Instance& inst,
                           bool train_mode, Rng* dropout_rng) {
  switch (teacher.spec.modality) {
    case Modality::Audio:
      return teacher.encoder.encode(inst.audio.frames, inst.audio.mels,
                                    inst.audio.values, train_mode, dropout_rng);
    case Modality::Chat:
      return teacher.encoder.encode(inst.chat_tokens, train_mode, dropout_rng);
    case Modality::Transcript:
      return teacher.encoder.encode(inst.transcript_tokens, train_mode, dropout_rng);
  }
  throw InputError("unknown modality enum value");
}

Tensor teacher_forward(const TeacherBundle& teacher, const Instance& inst,
                       bool train_mode, Rng* dropout_rng, Pooling pooling) {
  HiddenStack stack = teacher_encode(teacher, inst, train_mode, dropout_rng);
  const Tensor& last = stack.back();
  if (teacher.head.kind == TaskKind::SequenceClassification) {
    Tensor pooled = pool(last, pooling);
    return add(matmul(pooled, teacher.head.w), teacher.head.b);
  }
  return add_row(matmul(last, teacher.head.w), teacher.head.b);
}

std::vector<int> taggable_positions(const std::vector<int>& tokens) {
  std::vector<int> out;
  for (std::size_t i = 0; i < tokens.size(); ++i)
    if (tokens[i] != kPadToken) out.push_back(static_cast<int>(i));
  return out;
}

namespace {

const std::vector<int>& tag_targets(const TeacherSpec& spec, const Instance& inst) {
  return spec.modality == Modality::Chat ? inst.chat_tags : inst.transcript_tags;
}

// Per-instance loss plus (correct, total) counts for the train metric.
Tensor instance_loss(const TeacherBundle& teacher, const Instance& inst, bool train_mode,
                     Rng* rng, Pooling pooling, std::pair<double, double>& metric) {
  if (teacher.head.kind == TaskKind::SequenceClassification) {
    Tensor logits = teacher_forward(teacher, inst, train_mode, rng, pooling);
    const int c = static_cast<int>(logits.size());
    const int gold = static_cast<int>(inst.label);
    int pred = 0;
    for (int j = 1; j < c; ++j)
      if (logits[static_cast<std::size_t>(j)] > logits[static_cast<std::size_t>(pred)])
        pred = j;
    metric.first += pred == gold ? 1.0 : 0.0;
    metric.second += 1.0;
    return cross_entropy(logits, one_hot(gold, c));
  }

  const std::vector<int>& tokens =
      teacher.spec.modality == Modality::Chat ? inst.chat_tokens : inst.transcript_tokens;
  const std::vector<int>& tags = tag_targets(teacher.spec, inst);
  const std::vector<int> positions = taggable_positions(tokens);
  if (positions.empty()) return Tensor(); // PAD-only window: nothing to tag

  Tensor logits = teacher_forward(teacher, inst, train_mode, rng, pooling);
  const int num_tags = logits.cols();
  Tensor selected = take_rows(logits, positions);
  std::vector<double> targets(positions.size() * static_cast<std::size_t>(num_tags), 0.0);
  for (std::size_t i = 0; i < positions.size(); ++i) {
    const int tag = tags[static_cast<std::size_t>(positions[i])];
    if (tag < 0 || tag >= num_tags)
      throw DataError("instance " + inst.id + ": tag id " + std::to_string(tag) +
                      " out of range for " + std::to_string(num_tags) + " tags");
    targets[i * static_cast<std::size_t>(num_tags) + tag] = 1.0;
    int pred = 0;
    for (int j = 1; j < num_tags; ++j)
      if (selected.at(static_cast<int>(i), j) > selected.at(static_cast<int>(i), pred))
        pred = j;
    metric.first += pred == tag ? 1.0 : 0.0;
    metric.second += 1.0;
  }
  return cross_entropy(selected,
                       Tensor::from({static_cast<int>(positions.size()), num_tags},
                                    std::move(targets)));
}

} // namespace

Tensor teacher_instance_loss(const TeacherBundle& teacher, const Instance& inst,
                             Pooling pooling) {
  std::pair<double, double> metric{0.0, 0.0};
  return instance_loss(teacher, inst, false, nullptr, pooling, metric);
}

FinetuneResult finetune_teacher(const TeacherSpec& spec,
                                const std::vector<Instance>& corpus,
                                const TrainConfig& cfg, Pooling pooling) {
  if (spec.num_classes < 2)
    throw ConfigError("finetune_teacher: num_classes must be >= 2");
  if (cfg.class_weights && task_for(spec.modality) == TaskKind::SequenceClassification &&
      static_cast<int>(cfg.class_weights->size()) != spec.num_classes)
    throw ConfigError("finetune_teacher: class_weights length must match num_classes");

  EncoderConfig enc_cfg = spec.encoder;
  enc_cfg.dropout = cfg.dropout;
  Rng init_rng(Rng::derive(cfg.seed, "teacher-init-" + to_string(spec.modality)));
  FinetuneResult result;
  result.teacher.spec = spec;
  result.teacher.spec.encoder = enc_cfg;
  result.teacher.encoder = EncoderModel::init(enc_cfg, init_rng);
  result.teacher.head =
      init_task_head(task_for(spec.modality), enc_cfg.hidden_dim, spec.num_classes, init_rng);

  std::vector<NamedParam> params = result.teacher.parameters();
  AdamW optimizer(params, {.weight_decay = cfg.weight_decay});

  // Class weights apply to the sequence task only; taggers have their own
  // token-level targets.
  const bool weighted = cfg.class_weights.has_value() &&
                        task_for(spec.modality) == TaskKind::SequenceClassification;

  Rng dropout_rng(Rng::derive(cfg.seed, "teacher-dropout-" + to_string(spec.modality)));
  auto loss_fn = [&](std::span<const long> batch, Rng&, std::map<std::string, double>&,
                     std::pair<double, double>& metric) -> Tensor {
    Tensor total;
    double denom = 0.0;
    for (long idx : batch) {
      const Instance& inst = corpus[static_cast<std::size_t>(idx)];
      Tensor li = instance_loss(result.teacher, inst, true, &dropout_rng, pooling, metric);
      if (!li.defined()) continue;
      if (weighted) {
        const double w = cfg.class_weights->at(static_cast<std::size_t>(inst.label));
        li = scale(li, w);
        denom += w;
      } else {
        denom += 1.0;
      }
      total = total.defined() ? add(total, li) : li;
    }
    if (denom == 0.0) return Tensor::scalar(0.0);
    return scale(total, 1.0 / denom);
  };

  TrainResult tr = run_training(optimizer, params, static_cast<long>(corpus.size()),
                                loss_fn, cfg);
  result.history = std::move(tr.history);
  return result;
}

double teacher_accuracy(const TeacherBundle& teacher, const std::vector<Instance>& corpus,
                        Pooling pooling) {
  std::pair<double, double> metric{0.0, 0.0};
  for (const Instance& inst : corpus) {
    if (teacher.head.kind == TaskKind::SequenceClassification) {
      Tensor logits = teacher_forward(teacher, inst, false, nullptr, pooling);
      int pred = 0;
      for (std::size_t j = 1; j < logits.size(); ++j)
        if (logits[j] > logits[static_cast<std::size_t>(pred)]) pred = static_cast<int>(j);
      metric.first += pred == static_cast<int>(inst.label) ? 1.0 : 0.0;
      metric.second += 1.0;
    } else {
      const std::vector<int>& tokens = teacher.spec.modality == Modality::Chat
                                           ? inst.chat_tokens
                                           : inst.transcript_tokens;
      const std::vector<int>& tags = tag_targets(teacher.spec, inst);
      const std::vector<int> positions = taggable_positions(tokens);
      if (positions.empty()) continue;
      Tensor logits = teacher_forward(teacher, inst, false, nullptr, pooling);
      for (int pos : positions) {
        int pred = 0;
        for (int j = 1; j < logits.cols(); ++j)
          if (logits.at(pos, j) > logits.at(pos, pred)) pred = j;
        metric.first += pred == tags[static_cast<std::size_t>(pos)] ? 1.0 : 0.0;
        metric.second += 1.0;
      }
    }
  }
  return metric.second > 0 ? metric.first / metric.second : 0.0;
}

void save_teacher(const std::filesystem::path& dir, const TeacherBundle& teacher) {
  std::filesystem::create_directories(dir);
  save_encoder(dir / "encoder.ckpt", teacher.encoder);
  save_checkpoint(dir / "head.ckpt", {{"kind", "task_head"}},
                  teacher.head.parameters("head"));
  json task = {{"modality", to_string(teacher.spec.modality)},
               {"task", teacher.head.kind == TaskKind::SequenceClassification
                            ? "sequence_classification"
                            : "token_tagging"},
               {"num_classes", teacher.spec.num_classes},
               {"vocab", teacher.spec.modality == Modality::Chat ? "vocab_chat.txt"
                         : teacher.spec.modality == Modality::Transcript
                             ? "vocab_transcript.txt"
                             : ""},
               {"tags", teacher.spec.modality == Modality::Chat        ? "tags_chat.txt"
                        : teacher.spec.modality == Modality::Transcript ? "tags_transcript.txt"
                                                                        : ""}};
  std::ofstream os(dir / "task.json", std::ios::trunc);
  if (!os) throw DataError("teacher: cannot write task.json in '" + dir.string() + "'");
  os << task.dump(2) << '\n';
}

TeacherBundle load_teacher(const std::filesystem::path& dir) {
  TeacherBundle t;
  t.encoder = load_encoder(dir / "encoder.ckpt");

  std::ifstream is(dir / "task.json");
  if (!is) throw DataError("teacher: cannot open task.json in '" + dir.string() + "'");
  json task;
  try {
    is >> task;
  } catch (const json::exception& e) {
    throw DataError("teacher: task.json parse error: " + std::string(e.what()));
  }
  t.spec.modality = modality_from_string(task.at("modality").get<std::string>());
  t.spec.num_classes = task.at("num_classes").get<int>();
  t.spec.encoder = t.encoder.config();

  Checkpoint head_ckpt = load_checkpoint(dir / "head.ckpt");
  t.head.kind = task_for(t.spec.modality);
  t.head.w = head_ckpt.find("head.w").clone(true);
  t.head.b = head_ckpt.find("head.b").clone(true);
  return t;
}

} // namespace gamekd
