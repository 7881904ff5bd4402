#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <fstream>

#include "gamekd/errors.hpp"
#include "gamekd/eval.hpp"
#include "helpers.hpp"

using namespace gamekd;
using namespace gamekd::testing;

namespace {

const std::vector<std::string> kLabels{"KILL", "DRAGON", "TOWER", "OTHER"};

} // namespace

TEST_CASE("reference P/R pairs recompose to the tabulated F1 values") {
  // KILL row of the no-distillation baseline under OTHER-included evaluation
  ConfusionMatrix cm = make_confusion(kLabels);
  auto f1_of = [](double p, double r) {
    LabelMetrics m;
    m.precision = p;
    m.recall = r;
    return p + r > 0 ? 2 * p * r / (p + r) : 0.0;
  };
  CHECK(f1_of(0.740, 1.0) == doctest::Approx(0.851).epsilon(0.0015));
  CHECK(f1_of(0.859, 0.421) == doctest::Approx(0.565).epsilon(0.0015));
  CHECK(f1_of(0.646, 0.498) == doctest::Approx(0.562).epsilon(0.0015));
  (void)cm;
}

TEST_CASE("macro precision of the reference per-label column") {
  const double macro = (0.646 + 0.408 + 0.220 + 0.705) / 4.0;
  CHECK(macro == doctest::Approx(0.495).epsilon(0.0021));
}

TEST_CASE("metrics on a hand-built confusion matrix, zero divisions included") {
  ConfusionMatrix cm = make_confusion(kLabels);
  // gold KILL: 3 predicted KILL, 1 predicted OTHER
  cm.at(0, 0) = 3;
  cm.at(0, 3) = 1;
  // gold DRAGON: never predicted at all
  cm.at(1, 3) = 2;
  // nothing ever predicted TOWER; no gold TOWER either
  cm.at(3, 3) = 4;

  MetricsReport r = metrics(cm, EvalMode::OtherIncluded);
  CHECK(r.per_label[0].precision == 1.0);
  CHECK(r.per_label[0].recall == doctest::Approx(0.75));
  CHECK(r.per_label[1].precision == 0.0); // zero denominator cases
  CHECK(r.per_label[1].recall == 0.0);
  CHECK(r.per_label[1].f1 == 0.0);
  CHECK(r.per_label[2].precision == 0.0);
  CHECK(r.per_label[2].recall == 0.0);
  CHECK(cm.total() == 10);

  // macro averages recompute exactly from the per-label values
  double mp = 0, mr = 0, mf = 0;
  for (const LabelMetrics& m : r.per_label) {
    mp += m.precision;
    mr += m.recall;
    mf += m.f1;
  }
  CHECK(r.macro_precision == mp / 4);
  CHECK(r.macro_recall == mr / 4);
  CHECK(r.macro_f1 == mf / 4);
}

TEST_CASE("all-OTHER predictions reproduce the degenerate baseline pattern") {
  ConfusionMatrix cm = make_confusion(kLabels);
  cm.at(0, 3) = 164;
  cm.at(1, 3) = 76;
  cm.at(2, 3) = 59;
  cm.at(3, 3) = 970;
  MetricsReport r = metrics(cm, EvalMode::OtherIncluded);
  for (int k = 0; k < 3; ++k) {
    CHECK(r.per_label[static_cast<std::size_t>(k)].precision == 0.0);
    CHECK(r.per_label[static_cast<std::size_t>(k)].recall == 0.0);
    CHECK(r.per_label[static_cast<std::size_t>(k)].f1 == 0.0);
  }
  CHECK(r.per_label[3].recall == 1.0);
  CHECK(r.per_label[3].precision == doctest::Approx(970.0 / 1269.0));
}

TEST_CASE("per-row F1 is always the harmonic mean of that row's P and R") {
  Rng rng(17);
  for (int trial = 0; trial < 100; ++trial) {
    ConfusionMatrix cm = make_confusion(kLabels);
    for (int g = 0; g < 4; ++g)
      for (int p = 0; p < 4; ++p) cm.at(g, p) = static_cast<long>(rng.uniform_int(20));
    MetricsReport r = metrics(cm, EvalMode::OtherIncluded);
    for (const LabelMetrics& m : r.per_label) {
      const double expect =
          m.precision + m.recall > 0
              ? 2 * m.precision * m.recall / (m.precision + m.recall)
              : 0.0;
      CHECK(std::abs(m.f1 - expect) < 1e-9);
    }
  }
}

TEST_CASE("macro label set respects the evaluation mode") {
  ConfusionMatrix cm = make_confusion(kLabels);
  cm.at(0, 0) = 10; // KILL perfect
  cm.at(1, 1) = 10;
  cm.at(2, 2) = 10;
  cm.at(3, 0) = 10; // OTHER always wrong

  MetricsReport inc = metrics(cm, EvalMode::OtherIncluded);
  MetricsReport masked = metrics(cm, EvalMode::OtherMaskedEvalOnly);
  CHECK(masked.macro_recall == doctest::Approx(1.0)); // OTHER row dropped
  CHECK(inc.macro_recall == doctest::Approx(0.75));

  ConfusionMatrix cm3 = make_confusion({"KILL", "DRAGON", "TOWER"});
  cm3.at(0, 0) = 5;
  cm3.at(1, 1) = 5;
  cm3.at(2, 0) = 5;
  MetricsReport exc = metrics(cm3, EvalMode::OtherExcluded);
  CHECK(exc.macro_recall == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("filter_other removes exactly the gold-OTHER instances") {
  Corpus corpus = micro_corpus(60, 0, 41, "eval_filter");
  const std::vector<Instance> filtered = filter_other(corpus.train);
  for (const Instance& inst : filtered) CHECK(inst.label != EventLabel::OTHER);
  long other = 0;
  for (const Instance& inst : corpus.train)
    if (inst.label == EventLabel::OTHER) ++other;
  CHECK(filtered.size() + static_cast<std::size_t>(other) == corpus.train.size());
}

TEST_CASE("evaluate_student is deterministic and counts every instance") {
  Corpus corpus = micro_corpus(10, 0, 42, "eval_student");
  Rng rng(2);
  EncoderModel student =
      EncoderModel::init(micro_token_config(corpus.transcript_vocab.size(), 1), rng);
  TaskHead head = init_task_head(TaskKind::SequenceClassification, 16, kNumLabels, rng);

  EvalResult a = evaluate_student(student, head, corpus.train, EvalMode::OtherIncluded);
  EvalResult b = evaluate_student(student, head, corpus.train, EvalMode::OtherIncluded);
  CHECK(a.cm.counts == b.cm.counts);
  CHECK(a.cm.total() == 10);
  CHECK(a.report.macro_f1 == b.report.macro_f1);

  // excluded mode rejects gold-OTHER instances
  TaskHead head3 = init_task_head(TaskKind::SequenceClassification, 16, 3, rng);
  CHECK_THROWS_AS(
      evaluate_student(student, head3, corpus.train, EvalMode::OtherExcluded),
      InputError);
}

TEST_CASE("a perfectly memorizing student scores F1 = 1.0 on every label") {
  Corpus corpus = micro_corpus(60, 0, 43, "eval_memorize");
  // small balanced slice so each label is present
  std::vector<Instance> slice;
  std::array<int, 4> taken{};
  for (const Instance& inst : corpus.train)
    if (taken[static_cast<int>(inst.label)]++ < 2) slice.push_back(inst);
  REQUIRE(slice.size() == 8);

  Rng rng(3);
  EncoderModel student =
      EncoderModel::init(micro_token_config(corpus.transcript_vocab.size(), 2), rng);
  TaskHead head = init_task_head(TaskKind::SequenceClassification, 16, kNumLabels, rng);

  std::vector<NamedParam> params = student.parameters();
  for (NamedParam& p : head.parameters("head")) params.push_back(std::move(p));
  AdamW opt(params, {});
  TrainConfig cfg;
  cfg.epochs = 120;
  cfg.batch_size = 4;
  cfg.seed = 2;
  cfg.lr_low = 3e-4;
  cfg.lr_high = 5e-3;
  cfg.dropout = 0.0;
  auto loss_fn = [&](std::span<const long> batch, Rng&, std::map<std::string, double>&,
                     std::pair<double, double>& metric) -> Tensor {
    Tensor total;
    for (long idx : batch) {
      const Instance& inst = slice[static_cast<std::size_t>(idx)];
      Tensor logits = student_forward(student, head, inst, Pooling::Mean);
      Tensor li = task_loss(logits, static_cast<int>(inst.label));
      total = total.defined() ? add(total, li) : li;
    }
    metric.second += static_cast<double>(batch.size());
    return scale(total, 1.0 / static_cast<double>(batch.size()));
  };
  run_training(opt, params, static_cast<long>(slice.size()), loss_fn, cfg);

  EvalResult ev = evaluate_student(student, head, slice, EvalMode::OtherIncluded);
  double correct = 0;
  for (int k = 0; k < 4; ++k) correct += ev.cm.at(k, k);
  REQUIRE(correct == 8); // memorized
  for (const LabelMetrics& m : ev.report.per_label) CHECK(m.f1 == 1.0);
  CHECK(ev.report.macro_f1 == 1.0);
}

TEST_CASE("ablation csv carries the four canonical rows with flags") {
  const auto subsets = canonical_ablation_subsets();
  REQUIRE(subsets.size() == 4);

  std::vector<AblationArm> arms;
  for (const auto& subset : subsets) {
    AblationArm arm;
    arm.subset = subset;
    ConfusionMatrix cm = make_confusion(kLabels);
    cm.at(0, 0) = 1;
    cm.at(1, 1) = 1;
    cm.at(2, 2) = 1;
    cm.at(3, 3) = 1;
    arm.report = metrics(cm, EvalMode::OtherIncluded);
    arms.push_back(std::move(arm));
  }

  TempDir dir("eval_ablation");
  const auto path = dir.path / "ablation.csv";
  write_ablation_csv(path, arms);

  std::ifstream is(path);
  std::string header;
  std::getline(is, header);
  CHECK(header == "audio,chat,transcript,P_KILL,P_TOWER,P_DRAGON,P_OTHER,macro_P");
  std::vector<std::string> rows;
  std::string line;
  while (std::getline(is, line))
    if (!line.empty()) rows.push_back(line);
  REQUIRE(rows.size() == 4);
  CHECK(rows[0].rfind("1,0,1,", 0) == 0);
  CHECK(rows[1].rfind("0,1,1,", 0) == 0);
  CHECK(rows[2].rfind("1,1,0,", 0) == 0);
  CHECK(rows[3].rfind("1,1,1,", 0) == 0);
}
