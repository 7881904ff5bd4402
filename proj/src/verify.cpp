#include "gamekd/verify.hpp"

#include <algorithm>
#include <cmath>

#include "gamekd/distill.hpp"
#include "gamekd/errors.hpp"
#include "gamekd/eval.hpp"
#include "gamekd/rng.hpp"
#include "gamekd/tensor.hpp"

namespace gamekd {

namespace {

Tensor random_tensor(std::vector<int> shape, Rng& rng, bool requires_grad = true) {
  std::size_t n = 1;
  for (int d : shape) n *= static_cast<std::size_t>(d);
  std::vector<double> v(n);
  for (double& x : v) x = rng.normal(0.0, 1.0);
  return Tensor::from(std::move(shape), std::move(v), requires_grad);
}

CheckResult check(const std::string& name, double measured, double tolerance,
                  std::string note = "") {
  return {name, measured, tolerance, measured <= tolerance, std::move(note)};
}

CheckResult check_flag(const std::string& name, bool ok, std::string note = "") {
  return {name, ok ? 0.0 : 1.0, 0.0, ok, std::move(note)};
}

// Micro distillation fixture: two K=2, dim-8 token teachers plus a K=2
// patch teacher, an M=1 student, and a handful of handmade instances.
struct MicroFixture {
  std::vector<Instance> corpus;
  DistillModel model;
  TeacherCache cache;

  explicit MicroFixture(std::uint64_t seed) {
    Rng rng(seed);
    for (int i = 0; i < 6; ++i) {
      Instance inst;
      inst.id = "micro-" + std::to_string(i);
      inst.window_start_s = i * 10.0;
      inst.window_end_s = (i + 1) * 10.0;
      inst.label = kAllLabels[static_cast<std::size_t>(i % 4)];
      for (int t = 0; t < 4; ++t)
        inst.transcript_tokens.push_back(1 + static_cast<int>(rng.uniform_int(11)));
      inst.transcript_tags.assign(4, 0);
      for (int t = 0; t < 5; ++t)
        inst.chat_tokens.push_back(1 + static_cast<int>(rng.uniform_int(9)));
      inst.chat_tags.assign(5, 0);
      inst.audio.frames = 4;
      inst.audio.mels = 4;
      for (int v = 0; v < 16; ++v) inst.audio.values.push_back(rng.normal(0.0, 1.0));
      inst.validate();
      corpus.push_back(std::move(inst));
    }

    EncoderConfig token_cfg;
    token_cfg.num_layers = 2;
    token_cfg.hidden_dim = 8;
    token_cfg.num_heads = 2;
    token_cfg.ffn_dim = 16;
    token_cfg.max_seq_len = 8;
    token_cfg.dropout = 0.0;
    token_cfg.vocab_size = 12;

    EncoderConfig audio_cfg = token_cfg;
    audio_cfg.vocab_size = 0;
    audio_cfg.mel_bins = 4;
    audio_cfg.patch_frames = 2;
    audio_cfg.patch_mels = 2;

    auto make_teacher = [&](Modality m, const EncoderConfig& cfg) {
      TeacherBundle t;
      t.spec = {m, cfg, m == Modality::Audio ? kNumLabels : 4};
      t.encoder = EncoderModel::init(cfg, rng);
      t.head = init_task_head(task_for(m), cfg.hidden_dim, t.spec.num_classes, rng);
      t.encoder.freeze();
      return t;
    };
    model.teachers.push_back(make_teacher(Modality::Audio, audio_cfg));
    model.teachers.push_back(make_teacher(Modality::Chat, token_cfg));
    model.teachers.push_back(make_teacher(Modality::Transcript, token_cfg));

    model.student = init_student_from(model.teachers[2].encoder, 1);
    model.student_head =
        init_task_head(TaskKind::SequenceClassification, 8, kNumLabels, rng);
    for (const TeacherBundle& t : model.teachers)
      model.maps.push_back(build_layer_map(t.spec.encoder.num_layers, 1));
    model.bank = init_projection_bank(model.teachers, model.maps, 8, rng);
    model.replaced_heads = init_replaced_heads(model.teachers, kNumLabels, rng);
    model.pooling = Pooling::Mean;

    cache = build_teacher_cache(corpus, model.teachers, model.pooling);
  }

  std::vector<Tensor> trainable_tensors() {
    std::vector<Tensor> out;
    for (const NamedParam& p : model.trainable_parameters()) out.push_back(p.tensor);
    return out;
  }
};

void primitive_checks(std::vector<CheckResult>& results) {
  Rng rng(2024);
  {
    Tensor a = random_tensor({3, 4}, rng), b = random_tensor({4, 2}, rng);
    std::vector<Tensor> in{a, b};
    results.push_back(check("grad matmul vs finite differences",
                            grad_check([&] { return sum(matmul(a, b)); }, in), 1e-6));
  }
  {
    Tensor a = random_tensor({3, 4}, rng), b = random_tensor({3, 4}, rng);
    std::vector<Tensor> in{a, b};
    results.push_back(check("grad mse vs finite differences",
                            grad_check([&] { return mse(a, b); }, in), 1e-6));
    results.push_back(
        check("grad softmax (weighted) vs finite differences",
              grad_check([&] { return sum(mul(softmax(a), b)); }, in), 1e-6));
  }
  {
    Tensor logits = random_tensor({2, 4}, rng), target_logits = random_tensor({2, 4}, rng);
    std::vector<Tensor> in{logits, target_logits};
    results.push_back(
        check("grad cross_entropy (both sides) vs finite differences",
              grad_check([&] { return cross_entropy(logits, softmax(target_logits)); }, in),
              1e-6));
  }
  {
    Tensor x = random_tensor({4, 6}, rng), g = random_tensor({6}, rng),
           b = random_tensor({6}, rng), w = random_tensor({6}, rng, false);
    std::vector<Tensor> in{x, g, b};
    results.push_back(
        check("grad layer_norm vs finite differences",
              grad_check([&] { return sum(mul(layer_norm(x, g, b),
                                              layer_norm(x, g, b))); }, in),
              1e-5));
    results.push_back(check("grad gelu vs finite differences",
                            grad_check([&] { return sum(mul(gelu(x), gelu(x))); }, in),
                            1e-6));
    (void)w;
  }
  {
    // softmax row normalisation at extreme magnitudes
    Rng srng(5);
    double worst = 0.0;
    for (int trial = 0; trial < 50; ++trial) {
      Tensor x = random_tensor({4, 7}, srng, false);
      for (std::size_t i = 0; i < x.size(); ++i) x.data()[i] *= 200.0;
      Tensor y = softmax(x);
      for (int r = 0; r < 4; ++r) {
        double total = 0.0;
        for (int c = 0; c < 7; ++c) total += y.at(r, c);
        worst = std::max(worst, std::abs(total - 1.0));
      }
    }
    results.push_back(check("softmax rows sum to 1", worst, 1e-12));
  }
}

void composed_loss_checks(std::vector<CheckResult>& results) {
  MicroFixture fx(7);
  std::vector<long> batch{0, 1, 2};
  std::vector<Tensor> inputs = fx.trainable_tensors();

  auto breakdown = [&] {
    return total_loss(fx.corpus, batch, fx.model, &fx.cache, false, nullptr);
  };

  results.push_back(check("grad hidden loss (micro model)",
                          grad_check([&] { return breakdown().l_hid; }, inputs), 1e-4));
  results.push_back(check("grad distillation loss (micro model)",
                          grad_check([&] { return breakdown().l_dis; }, inputs), 1e-4));
  results.push_back(check("grad task loss (micro model)",
                          grad_check([&] { return breakdown().l_task; }, inputs), 1e-4));
  results.push_back(check("grad total loss (micro model)",
                          grad_check([&] { return breakdown().l_total; }, inputs), 1e-4));

  // Frozen teachers receive no gradient from a full backward.
  for (Tensor& t : inputs) t.zero_grad();
  Tensor loss = breakdown().l_total;
  loss.backward();
  bool frozen_clean = true;
  for (const TeacherBundle& t : fx.model.teachers)
    for (const NamedParam& p : t.encoder.parameters())
      if (p.tensor.has_grad())
        for (double g : p.tensor.grad())
          if (g != 0.0) frozen_clean = false;
  results.push_back(check_flag("frozen teacher parameters receive zero gradient",
                               frozen_clean));

  bool populated = true;
  for (const Tensor& t : inputs)
    if (!t.has_grad()) populated = false;
  results.push_back(
      check_flag("every trainable parameter has a populated gradient", populated));
}

void layer_map_checks(std::vector<CheckResult>& results) {
  const LayerMap expected = {{1, 1}, {2, 2}, {3, 3},  {4, 4},  {5, 5},  {6, 6},
                             {7, 7}, {8, 8}, {9, 8},  {10, 8}, {11, 8}, {12, 8}};
  results.push_back(
      check_flag("layer map K=12, M=8 matches the reference table",
                 build_layer_map(12, 8) == expected));

  Rng rng(31);
  bool ok = true;
  for (int trial = 0; trial < 200 && ok; ++trial) {
    const int K = 1 + static_cast<int>(rng.uniform_int(12));
    const int M = 1 + static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(K)));
    const LayerMap map = build_layer_map(K, M);
    if (static_cast<int>(map.size()) != K) ok = false;
    int final_count = 0;
    std::vector<int> seen(static_cast<std::size_t>(M + 1), 0);
    for (const LayerPair& p : map) {
      if (p.student_layer == M) ++final_count;
      seen[static_cast<std::size_t>(p.student_layer)]++;
      if (p.teacher_layer <= M && p.student_layer != p.teacher_layer) ok = false;
      if (p.teacher_layer > M && p.student_layer != M) ok = false;
    }
    if (final_count != K - M + 1) ok = false;
    for (int i = 1; i < M; ++i)
      if (seen[static_cast<std::size_t>(i)] != 1) ok = false;
  }
  bool rejects = false;
  try {
    build_layer_map(3, 5);
  } catch (const ConfigError&) {
    rejects = true;
  }
  results.push_back(check_flag("layer map invariants on random K >= M >= 1", ok));
  results.push_back(check_flag("layer map rejects K < M", rejects));
}

void loss_algebra_checks(std::vector<CheckResult>& results) {
  MicroFixture fx(11);
  Rng rng(13);
  bool exact = true;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t b = 1 + rng.uniform_int(4);
    std::vector<long> batch;
    for (std::size_t i = 0; i < b; ++i)
      batch.push_back(static_cast<long>(rng.uniform_int(fx.corpus.size())));
    LossBreakdown bd = total_loss(fx.corpus, batch, fx.model, &fx.cache, false, nullptr);
    const double recomposed = bd.l_hid.value() + bd.l_dis.value() + bd.l_task.value();
    if (bd.l_total.value() != recomposed) exact = false;
    if (!(bd.l_dis.value() >= 0.0) || !(bd.l_task.value() >= 0.0) ||
        !(bd.l_hid.value() >= 0.0))
      exact = false;
    if (!std::isfinite(bd.l_total.value())) exact = false;
  }
  results.push_back(
      check_flag("l_total == l_hid + l_dis + l_task exactly on 100 random batches", exact));

  {
    Tensor teacher = Tensor::from({4}, {0, 0, 0, 0});
    Tensor student = Tensor::from({4}, {0, 0, 0, 0});
    std::vector<Tensor> t_logits{teacher};
    const double term = distillation_loss(t_logits, student, 0).value();
    const double expected = std::log(4.0) / (1.0 + std::log(4.0));
    results.push_back(check("single-teacher uniform closed form ln4/(1+ln4)",
                            std::abs(term - expected), 1e-9,
                            "measured " + std::to_string(term)));
  }

  {
    // term strictly decreasing in CE(y, y_i) with y_i, y_s fixed
    Rng mrng(17);
    bool monotone = true;
    for (int trial = 0; trial < 1000 && monotone; ++trial) {
      Tensor yt = random_tensor({4}, mrng, false);
      Tensor ys = random_tensor({4}, mrng, false);
      std::vector<Tensor> t_logits{yt};
      std::vector<std::pair<double, double>> den_term;
      for (int gold = 0; gold < 4; ++gold) {
        const double den = cross_entropy(yt, one_hot(gold, 4)).value();
        const double term = distillation_loss(t_logits, ys, gold).value();
        den_term.emplace_back(den, term);
      }
      std::sort(den_term.begin(), den_term.end());
      for (std::size_t i = 1; i < den_term.size(); ++i)
        if (den_term[i].first > den_term[i - 1].first + 1e-12 &&
            !(den_term[i].second < den_term[i - 1].second))
          monotone = false;
    }
    results.push_back(check_flag(
        "distillation term strictly decreasing in teacher error (1000 triples)", monotone));
  }

  {
    // removing a teacher does not change the remaining teachers' sub-terms
    MicroFixture full(19);
    std::vector<long> batch{0, 1};
    LossBreakdown all = total_loss(full.corpus, batch, full.model, &full.cache, false,
                                   nullptr);
    DistillModel two;
    two.pooling = full.model.pooling;
    two.teachers = {full.model.teachers[0], full.model.teachers[2]};
    two.maps = {full.model.maps[0], full.model.maps[2]};
    two.bank.w = {full.model.bank.w[0], full.model.bank.w[2]};
    two.replaced_heads = {full.model.replaced_heads[0], full.model.replaced_heads[2]};
    two.student = full.model.student;
    two.student_head = full.model.student_head;
    TeacherCache cache2 = build_teacher_cache(full.corpus, two.teachers, two.pooling);
    LossBreakdown sub = total_loss(full.corpus, batch, two, &cache2, false, nullptr);
    const bool additive = sub.teacher_hid[0] == all.teacher_hid[0] &&
                          sub.teacher_hid[1] == all.teacher_hid[2] &&
                          sub.teacher_dis[0] == all.teacher_dis[0] &&
                          sub.teacher_dis[1] == all.teacher_dis[2];
    results.push_back(check_flag("per-teacher sub-terms additive across subsets", additive));
  }
}

void metric_checks(std::vector<CheckResult>& results) {
  {
    auto f1 = [](double p, double r) { return p + r > 0 ? 2 * p * r / (p + r) : 0.0; };
    const bool row1 = std::abs(f1(0.740, 1.0) - 0.851) <= 0.001;
    const bool row2 = std::abs(f1(0.859, 0.421) - 0.565) <= 0.001;
    const bool row3 = std::abs(f1(0.646, 0.498) - 0.562) <= 0.001;
    results.push_back(check_flag("reference P/R rows recompose to the tabulated F1",
                                 row1 && row2 && row3));
    const double macro = (0.646 + 0.408 + 0.220 + 0.705) / 4.0;
    results.push_back(check("macro precision of the reference per-label values",
                            std::abs(macro - 0.495), 0.001));
  }

  {
    // random gold/pred assignments vs an independent per-instance tally
    Rng rng(23);
    bool agree = true;
    for (int trial = 0; trial < 50 && agree; ++trial) {
      const int n = 30 + static_cast<int>(rng.uniform_int(100));
      std::vector<int> gold(static_cast<std::size_t>(n)), pred(gold.size());
      ConfusionMatrix cm = make_confusion({"KILL", "DRAGON", "TOWER", "OTHER"});
      for (int i = 0; i < n; ++i) {
        gold[static_cast<std::size_t>(i)] = static_cast<int>(rng.uniform_int(4));
        pred[static_cast<std::size_t>(i)] = static_cast<int>(rng.uniform_int(4));
        cm.at(gold[static_cast<std::size_t>(i)], pred[static_cast<std::size_t>(i)])++;
      }
      MetricsReport rep = metrics(cm, EvalMode::OtherIncluded);
      for (int k = 0; k < 4 && agree; ++k) {
        long tp = 0, gold_n = 0, pred_n = 0;
        for (int i = 0; i < n; ++i) {
          const bool g = gold[static_cast<std::size_t>(i)] == k;
          const bool p = pred[static_cast<std::size_t>(i)] == k;
          tp += g && p;
          gold_n += g;
          pred_n += p;
        }
        const double P = pred_n ? static_cast<double>(tp) / pred_n : 0.0;
        const double R = gold_n ? static_cast<double>(tp) / gold_n : 0.0;
        const double F = P + R > 0 ? 2 * P * R / (P + R) : 0.0;
        const LabelMetrics& m = rep.per_label[static_cast<std::size_t>(k)];
        if (std::abs(m.precision - P) > 1e-12 || std::abs(m.recall - R) > 1e-12 ||
            std::abs(m.f1 - F) > 1e-9 || m.support != gold_n)
          agree = false;
      }
    }
    results.push_back(check_flag("metrics match a brute-force per-instance tally", agree));
  }

  {
    // degenerate all-OTHER predictor
    ConfusionMatrix cm = make_confusion({"KILL", "DRAGON", "TOWER", "OTHER"});
    cm.at(0, 3) = 164;
    cm.at(1, 3) = 76;
    cm.at(2, 3) = 59;
    cm.at(3, 3) = 950;
    MetricsReport rep = metrics(cm, EvalMode::OtherIncluded);
    bool ok = true;
    for (int k = 0; k < 3; ++k) {
      const LabelMetrics& m = rep.per_label[static_cast<std::size_t>(k)];
      if (m.precision != 0.0 || m.recall != 0.0 || m.f1 != 0.0) ok = false;
    }
    if (rep.per_label[3].recall != 1.0) ok = false;
    results.push_back(
        check_flag("all-OTHER predictor zeroes every non-OTHER row, OTHER recall 1", ok));
  }
}

} // namespace

std::vector<CheckResult> run_verification() {
  std::vector<CheckResult> results;
  primitive_checks(results);
  composed_loss_checks(results);
  layer_map_checks(results);
  loss_algebra_checks(results);
  metric_checks(results);
  return results;
}

bool all_passed(const std::vector<CheckResult>& results) {
  for (const CheckResult& r : results)
    if (!r.passed) return false;
  return true;
}

} // namespace gamekd
