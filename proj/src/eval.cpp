#include "gamekd/eval.hpp"

#include <algorithm>
#include <fstream>

#include <json.hpp>

#include "gamekd/errors.hpp"

namespace gamekd {

using nlohmann::json;

std::string to_string(EvalMode m) {
  switch (m) {
    case EvalMode::OtherIncluded: return "other_included";
    case EvalMode::OtherExcluded: return "other_excluded";
    case EvalMode::OtherMaskedEvalOnly: return "other_masked_eval_only";
  }
  throw InputError("unknown eval mode enum value");
}

EvalMode eval_mode_from_string(const std::string& s) {
  if (s == "other_included") return EvalMode::OtherIncluded;
  if (s == "other_excluded") return EvalMode::OtherExcluded;
  if (s == "other_masked_eval_only") return EvalMode::OtherMaskedEvalOnly;
  throw ConfigError("unknown eval mode '" + s + "'");
}

long ConfusionMatrix::total() const {
  long t = 0;
  for (long c : counts) t += c;
  return t;
}

ConfusionMatrix make_confusion(const std::vector<std::string>& labels) {
  ConfusionMatrix cm;
  cm.labels = labels;
  cm.counts.assign(labels.size() * labels.size(), 0);
  return cm;
}

const LabelMetrics& MetricsReport::find(const std::string& label) const {
  for (const LabelMetrics& m : per_label)
    if (m.label == label) return m;
  throw InputError("metrics: no label '" + label + "' in report");
}

MetricsReport metrics(const ConfusionMatrix& cm, EvalMode mode) {
  const int C = cm.num_classes();
  MetricsReport report;
  report.mode = mode;

  for (int k = 0; k < C; ++k) {
    long tp = cm.at(k, k), fp = 0, fn = 0, support = 0;
    for (int j = 0; j < C; ++j) {
      if (j != k) {
        fp += cm.at(j, k);
        fn += cm.at(k, j);
      }
      support += cm.at(k, j);
    }
    LabelMetrics m;
    m.label = cm.labels[static_cast<std::size_t>(k)];
    m.support = support;
    m.precision = tp + fp > 0 ? static_cast<double>(tp) / (tp + fp) : 0.0;
    m.recall = tp + fn > 0 ? static_cast<double>(tp) / (tp + fn) : 0.0;
    m.f1 = m.precision + m.recall > 0.0
               ? 2.0 * m.precision * m.recall / (m.precision + m.recall)
               : 0.0;
    report.per_label.push_back(std::move(m));
  }

  int macro_n = 0;
  for (const LabelMetrics& m : report.per_label) {
    if (mode != EvalMode::OtherIncluded && m.label == "OTHER") continue;
    report.macro_precision += m.precision;
    report.macro_recall += m.recall;
    report.macro_f1 += m.f1;
    ++macro_n;
  }
  if (macro_n > 0) {
    report.macro_precision /= macro_n;
    report.macro_recall /= macro_n;
    report.macro_f1 /= macro_n;
  }
  return report;
}

std::vector<Instance> filter_other(const std::vector<Instance>& instances) {
  std::vector<Instance> out;
  for (const Instance& inst : instances)
    if (inst.label != EventLabel::OTHER) out.push_back(inst);
  return out;
}

EvalResult evaluate_student(const EncoderModel& student, const TaskHead& head,
                            const std::vector<Instance>& instances, EvalMode mode,
                            Pooling pooling) {
  std::vector<std::string> names;
  for (EventLabel l : kAllLabels) names.push_back(to_string(l));
  if (mode == EvalMode::OtherExcluded) names.pop_back();
  if (head.num_classes() != static_cast<int>(names.size()))
    throw ConfigError("evaluate_student: head has " + std::to_string(head.num_classes()) +
                      " classes, mode expects " + std::to_string(names.size()));

  EvalResult result;
  result.cm = make_confusion(names);
  const int C = result.cm.num_classes();
  for (const Instance& inst : instances) {
    const int gold = static_cast<int>(inst.label);
    if (mode == EvalMode::OtherExcluded && inst.label == EventLabel::OTHER)
      throw InputError("evaluate_student: gold OTHER instance '" + inst.id +
                       "' in the excluded mode; filter the corpus first");
    Tensor logits = student_forward(student, head, inst, pooling, false, nullptr);
    int pred = 0;
    for (int j = 1; j < C; ++j)
      if (logits[static_cast<std::size_t>(j)] > logits[static_cast<std::size_t>(pred)])
        pred = j;
    result.cm.at(gold, pred)++;
  }
  result.report = metrics(result.cm, mode);
  return result;
}

void write_metrics_json(const std::filesystem::path& path, const MetricsReport& report) {
  json per_label = json::array();
  for (const LabelMetrics& m : report.per_label)
    per_label.push_back({{"label", m.label},
                         {"precision", m.precision},
                         {"recall", m.recall},
                         {"f1", m.f1},
                         {"support", m.support}});
  json j = {{"per_label", std::move(per_label)},
            {"macro", {{"precision", report.macro_precision},
                       {"recall", report.macro_recall},
                       {"f1", report.macro_f1}}},
            {"mode", to_string(report.mode)}};
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw DataError("metrics: cannot write '" + path.string() + "'");
  os << j.dump(2) << '\n';
}

void write_confusion_csv(const std::filesystem::path& path, const ConfusionMatrix& cm) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw DataError("confusion: cannot write '" + path.string() + "'");
  os << "gold\\pred";
  for (const std::string& l : cm.labels) os << ',' << l;
  os << '\n';
  for (int g = 0; g < cm.num_classes(); ++g) {
    os << cm.labels[static_cast<std::size_t>(g)];
    for (int p = 0; p < cm.num_classes(); ++p) os << ',' << cm.at(g, p);
    os << '\n';
  }
}

std::vector<std::vector<Modality>> canonical_ablation_subsets() {
  return {{Modality::Audio, Modality::Transcript},
          {Modality::Chat, Modality::Transcript},
          {Modality::Audio, Modality::Chat},
          {Modality::Audio, Modality::Chat, Modality::Transcript}};
}

std::vector<AblationArm> run_ablation(const std::vector<std::vector<Modality>>& subsets,
                                      const Corpus& corpus,
                                      const std::vector<TeacherBundle>& teachers,
                                      const DistillRunConfig& base_cfg, EvalMode mode) {
  std::vector<AblationArm> arms;
  for (const std::vector<Modality>& subset : subsets) {
    if (subset.empty()) throw ConfigError("ablation: empty teacher subset");
    DistillRunConfig cfg = base_cfg;
    cfg.teacher_subset = subset;
    DistillOutcome outcome = run_distillation(corpus, teachers, cfg);
    EvalResult eval = evaluate_student(outcome.model.student, outcome.model.student_head,
                                       corpus.test, mode, cfg.pooling);
    arms.push_back({subset, std::move(eval.report)});
  }
  return arms;
}

void write_ablation_csv(const std::filesystem::path& path,
                        const std::vector<AblationArm>& arms) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw DataError("ablation: cannot write '" + path.string() + "'");
  os << "audio,chat,transcript,P_KILL,P_TOWER,P_DRAGON,P_OTHER,macro_P\n";
  os.precision(17);
  for (const AblationArm& arm : arms) {
    auto has = [&](Modality m) {
      return std::find(arm.subset.begin(), arm.subset.end(), m) != arm.subset.end() ? 1 : 0;
    };
    os << has(Modality::Audio) << ',' << has(Modality::Chat) << ','
       << has(Modality::Transcript);
    for (const char* label : {"KILL", "TOWER", "DRAGON", "OTHER"}) {
      double p = 0.0;
      for (const LabelMetrics& m : arm.report.per_label)
        if (m.label == label) p = m.precision;
      os << ',' << p;
    }
    os << ',' << arm.report.macro_precision << '\n';
  }
}

} // namespace gamekd
