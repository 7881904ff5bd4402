#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "gamekd/data.hpp"
#include "gamekd/model.hpp"
#include "gamekd/train.hpp"

namespace gamekd {

enum class Modality { Audio, Chat, Transcript };
constexpr std::array<Modality, 3> kAllModalities = {Modality::Audio, Modality::Chat,
                                                    Modality::Transcript};

std::string to_string(Modality m);
Modality modality_from_string(const std::string& s);

enum class TaskKind { SequenceClassification, TokenTagging };

// The modality/task pairing is fixed: audio -> 4-class action detection,
// chat -> emote/emotion tagging, transcript -> game entity tagging.
TaskKind task_for(Modality m);

struct TaskHead {
  TaskKind kind = TaskKind::SequenceClassification;
  Tensor w; // [hidden_dim x num_classes]
  Tensor b; // [num_classes]

  int num_classes() const { return w.cols(); }
  std::vector<NamedParam> parameters(const std::string& prefix) const;
};

TaskHead init_task_head(TaskKind kind, int hidden_dim, int num_classes, Rng& rng);

struct TeacherSpec {
  Modality modality = Modality::Transcript;
  EncoderConfig encoder;
  int num_classes = 0; // event classes (audio) or tag inventory size (taggers)
};

// A fine-tuned encoder with its task head. During distillation the encoder
// is frozen and the head is replaced by a trainable output layer owned by
// the distillation run.
struct TeacherBundle {
  TeacherSpec spec;
  EncoderModel encoder;
  TaskHead head;

  std::vector<NamedParam> parameters() const;
};

// Runs the teacher's modality slice of the instance through its encoder.
HiddenStack teacher_encode(const TeacherBundle& teacher, const Instance& inst,
                           bool train_mode, Rng* dropout_rng = nullptr);

// Sequence classification -> [num_classes]; token tagging -> [seq x num_tags].
Tensor teacher_forward(const TeacherBundle& teacher, const Instance& inst,
                       bool train_mode = false, Rng* dropout_rng = nullptr,
                       Pooling pooling = Pooling::Mean);

// Positions entering a tagger's loss: every non-PAD token index.
std::vector<int> taggable_positions(const std::vector<int>& tokens);

// The teacher's training loss on one instance (eval mode): sequence CE for
// audio, mean of per-position CEs over non-PAD tokens for taggers. Undefined
// tensor for PAD-only tagger windows.
Tensor teacher_instance_loss(const TeacherBundle& teacher, const Instance& inst,
                             Pooling pooling = Pooling::Mean);

struct FinetuneResult {
  TeacherBundle teacher;
  std::vector<EpochStats> history;
};

// Cross-entropy fine-tuning: sequence-level for audio, mean over non-PAD
// positions for the taggers. Train metric is (token) accuracy.
FinetuneResult finetune_teacher(const TeacherSpec& spec,
                                const std::vector<Instance>& corpus,
                                const TrainConfig& cfg, Pooling pooling = Pooling::Mean);

// Accuracy of a teacher over a corpus slice: sequence accuracy for audio,
// non-PAD token accuracy for taggers. Eval mode, deterministic.
double teacher_accuracy(const TeacherBundle& teacher, const std::vector<Instance>& corpus,
                        Pooling pooling = Pooling::Mean);

void save_teacher(const std::filesystem::path& dir, const TeacherBundle& teacher);
TeacherBundle load_teacher(const std::filesystem::path& dir);

} // namespace gamekd
