#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "gamekd/data.hpp"
#include "gamekd/distill.hpp"

namespace gamekd {

// Whether OTHER participates. Excluded mode matches training without the
// OTHER label (3-class model over a filtered corpus); masked mode evaluates
// a 4-class model but drops OTHER from the macro average only.
enum class EvalMode { OtherIncluded, OtherExcluded, OtherMaskedEvalOnly };

std::string to_string(EvalMode m);
EvalMode eval_mode_from_string(const std::string& s);

struct ConfusionMatrix {
  std::vector<std::string> labels; // class names, index == class id
  std::vector<long> counts;        // C x C row-major, rows gold, cols predicted

  int num_classes() const { return static_cast<int>(labels.size()); }
  long at(int gold, int pred) const {
    return counts[static_cast<std::size_t>(gold) * labels.size() +
                  static_cast<std::size_t>(pred)];
  }
  long& at(int gold, int pred) {
    return counts[static_cast<std::size_t>(gold) * labels.size() +
                  static_cast<std::size_t>(pred)];
  }
  long total() const;
};

ConfusionMatrix make_confusion(const std::vector<std::string>& labels);

struct LabelMetrics {
  std::string label;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  long support = 0;
};

struct MetricsReport {
  std::vector<LabelMetrics> per_label;
  double macro_precision = 0.0;
  double macro_recall = 0.0;
  double macro_f1 = 0.0;
  EvalMode mode = EvalMode::OtherIncluded;

  const LabelMetrics& find(const std::string& label) const;
};

// P = tp/(tp+fp), R = tp/(tp+fn), F1 = 2PR/(P+R); zero denominators give 0.
// The macro average runs over the mode's label set (OTHER dropped unless
// included).
MetricsReport metrics(const ConfusionMatrix& cm, EvalMode mode);

// Argmax evaluation of a student over a corpus slice; eval mode forward,
// deterministic.
struct EvalResult {
  ConfusionMatrix cm;
  MetricsReport report;
};

EvalResult evaluate_student(const EncoderModel& student, const TaskHead& head,
                            const std::vector<Instance>& instances, EvalMode mode,
                            Pooling pooling = Pooling::Mean);

void write_metrics_json(const std::filesystem::path& path, const MetricsReport& report);
void write_confusion_csv(const std::filesystem::path& path, const ConfusionMatrix& cm);

// Drops gold-OTHER instances; used by the OTHER-excluded training mode.
std::vector<Instance> filter_other(const std::vector<Instance>& instances);

struct AblationArm {
  std::vector<Modality> subset;
  MetricsReport report;
};

// Runs distillation + evaluation once per teacher subset with a shared seed
// and corpus. Rows follow the order given in `subsets`.
std::vector<AblationArm> run_ablation(const std::vector<std::vector<Modality>>& subsets,
                                      const Corpus& corpus,
                                      const std::vector<TeacherBundle>& teachers,
                                      const DistillRunConfig& base_cfg, EvalMode mode);

// Table layout: audio/chat/transcript flags, per-label precision, macro P.
void write_ablation_csv(const std::filesystem::path& path,
                        const std::vector<AblationArm>& arms);

// The four canonical teacher combinations, in table order.
std::vector<std::vector<Modality>> canonical_ablation_subsets();

} // namespace gamekd
