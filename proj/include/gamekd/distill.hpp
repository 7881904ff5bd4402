#pragma once

#include <optional>
#include <span>
#include <vector>

#include "gamekd/data.hpp"
#include "gamekd/teachers.hpp"
#include "gamekd/train.hpp"

namespace gamekd {

// One (teacher layer, student layer) alignment pair, 1-based as in the
// K-layer teacher / M-layer student numbering.
struct LayerPair {
  int teacher_layer = 0;
  int student_layer = 0;
  bool operator==(const LayerPair&) const = default;
};
using LayerMap = std::vector<LayerPair>;

// Identity pairs (i, i) up to the student depth M, with the remaining
// teacher layers M+1..K collapsed onto the final student layer M. Requires
// K >= M >= 1.
LayerMap build_layer_map(int K, int M);

// Trainable projection W_ti per (teacher, teacher layer): [d_teacher x d_student].
struct ProjectionBank {
  // w[t][i-1] holds the projection for teacher t's layer i.
  std::vector<std::vector<Tensor>> w;

  const Tensor& at(int teacher, int teacher_layer) const;
  std::vector<NamedParam> parameters(std::span<const TeacherBundle> teachers) const;
};

ProjectionBank init_projection_bank(std::span<const TeacherBundle> teachers,
                                    const std::vector<LayerMap>& maps, int d_student,
                                    Rng& rng);

// Trainable output layers replacing each teacher's task head during
// distillation: [d_teacher x C] where C is the student's class count.
std::vector<Tensor> init_replaced_heads(std::span<const TeacherBundle> teachers,
                                        int num_classes, Rng& rng);

// The four loss scalars for one batch plus per-teacher sub-terms. Tensors
// stay on the tape so callers can backprop through l_total.
struct LossBreakdown {
  Tensor l_hid, l_dis, l_task, l_total;
  std::vector<double> teacher_hid; // batch-mean hidden sub-term per teacher
  std::vector<double> teacher_dis; // batch-mean distillation sub-term per teacher
  std::vector<int> predictions;    // student argmax per batch element
};

// Eq-style hidden alignment over pooled per-layer vectors: sum over teachers
// and mapped pairs of MSE(pool(H_s), pool(H_t)·W).
Tensor hidden_loss(const HiddenStack& student_stack,
                   std::span<const HiddenStack> teacher_stacks,
                   const ProjectionBank& bank, const std::vector<LayerMap>& maps,
                   Pooling pooling, std::vector<Tensor>* per_teacher = nullptr);

// Pooled-vector variant used by the training loop (teacher vectors are
// precomputed constants for frozen teachers).
Tensor hidden_loss_pooled(std::span<const Tensor> student_pooled,
                          std::span<const std::vector<Tensor>> teacher_pooled,
                          const ProjectionBank& bank, const std::vector<LayerMap>& maps,
                          std::vector<Tensor>* per_teacher = nullptr);

// Correctness-weighted soft-label loss: sum over teachers of
// CE(y_i, y_s) / (1 + CE(y, y_i)) with the teacher distribution as the CE
// target. Gradients reach student logits and the teacher logits (both the
// numerator target and the denominator), never frozen encoders. The
// temperature scales the teacher soft-label softmax only; 1 disables it.
Tensor distillation_loss(std::span<const Tensor> teacher_logits,
                         const Tensor& student_logits, int ground_truth,
                         std::vector<Tensor>* per_teacher = nullptr,
                         double temperature = 1.0);

// CE of the student prediction against the one-hot ground truth.
Tensor task_loss(const Tensor& student_logits, int ground_truth);

// Pooled per-layer teacher vectors for every corpus instance, computed once
// in eval mode; valid while the teacher encoders stay frozen.
struct TeacherCache {
  // pooled[instance][teacher][layer 0..K-1], each a detached [d_t] constant.
  std::vector<std::vector<std::vector<Tensor>>> pooled;
};

TeacherCache build_teacher_cache(const std::vector<Instance>& corpus,
                                 std::span<const TeacherBundle> teachers,
                                 Pooling pooling);

// Everything a distillation step needs. Teachers must be frozen before use.
struct DistillModel {
  std::vector<TeacherBundle> teachers;
  std::vector<LayerMap> maps;
  ProjectionBank bank;
  std::vector<Tensor> replaced_heads;
  EncoderModel student;
  TaskHead student_head;
  Pooling pooling = Pooling::Mean;
  double temperature = 1.0; // soft-label temperature, 1 disables

  std::vector<NamedParam> trainable_parameters() const;
};

Tensor student_forward(const EncoderModel& student, const TaskHead& head,
                       const Instance& inst, Pooling pooling, bool train_mode = false,
                       Rng* dropout_rng = nullptr);

// Batch-mean LossBreakdown; l_total = l_hid + l_dis + l_task in exactly that
// accumulation order. The student consumes the transcript modality; each
// teacher consumes its own modality of the same instances.
LossBreakdown total_loss(const std::vector<Instance>& corpus,
                         std::span<const long> batch, DistillModel& model,
                         const TeacherCache* cache, bool train_mode, Rng* dropout_rng,
                         const std::optional<std::vector<double>>& class_weights = {});

struct DistillRunConfig {
  std::vector<Modality> teacher_subset = {Modality::Audio, Modality::Chat,
                                          Modality::Transcript};
  TrainConfig train;
  Pooling pooling = Pooling::Mean;
  int student_layers = 0; // 0: init from the transcript teacher's first half
  int num_classes = kNumLabels; // 3 in the OTHER-excluded mode
  double temperature = 1.0;
};

struct DistillOutcome {
  DistillModel model;
  std::vector<EpochStats> history;
};

// Full distillation run: freezes the teacher subset, builds the student from
// the transcript-teacher donor when available (fresh otherwise), precomputes
// the teacher cache and trains projections + heads + student. A shared cache
// (built over corpus.train with the subset's teachers in canonical order)
// skips the per-run teacher forward pass.
DistillOutcome run_distillation(const Corpus& corpus,
                                std::vector<TeacherBundle> teachers,
                                const DistillRunConfig& cfg,
                                const TeacherCache* shared_cache = nullptr);

// Task-loss-only student with the same architecture and schedule; the
// no-distillation baseline.
DistillOutcome run_student_baseline(const Corpus& corpus, const EncoderModel& donor,
                                    const DistillRunConfig& cfg);

} // namespace gamekd
