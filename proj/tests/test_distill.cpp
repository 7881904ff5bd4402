#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "gamekd/distill.hpp"
#include "gamekd/errors.hpp"
#include "helpers.hpp"

using namespace gamekd;
using namespace gamekd::testing;

namespace {

std::vector<TeacherBundle> fresh_teachers(const Corpus& corpus, std::uint64_t seed) {
  std::vector<TeacherBundle> out;
  Rng rng(seed);
  for (Modality m : kAllModalities) {
    TeacherSpec spec = micro_teacher_spec(corpus, m);
    TeacherBundle t;
    t.spec = spec;
    t.encoder = EncoderModel::init(spec.encoder, rng);
    t.head = init_task_head(task_for(m), spec.encoder.hidden_dim, spec.num_classes, rng);
    out.push_back(std::move(t));
  }
  return out;
}

} // namespace

TEST_CASE("layer map matches the reference table for K=12, M=8") {
  const LayerMap map = build_layer_map(12, 8);
  REQUIRE(map.size() == 12);
  for (int i = 1; i <= 8; ++i) {
    CHECK(map[static_cast<std::size_t>(i - 1)].teacher_layer == i);
    CHECK(map[static_cast<std::size_t>(i - 1)].student_layer == i);
  }
  for (int j = 9; j <= 12; ++j) {
    CHECK(map[static_cast<std::size_t>(j - 1)].teacher_layer == j);
    CHECK(map[static_cast<std::size_t>(j - 1)].student_layer == 8);
  }
}

TEST_CASE("layer map edge cases") {
  const LayerMap equal = build_layer_map(4, 4);
  REQUIRE(equal.size() == 4);
  for (int i = 1; i <= 4; ++i)
    CHECK(equal[static_cast<std::size_t>(i - 1)] == LayerPair{i, i});

  CHECK_THROWS_AS(build_layer_map(3, 5), ConfigError);
  CHECK_THROWS_AS(build_layer_map(2, 0), ConfigError);
}

TEST_CASE("layer map invariants over random K >= M") {
  Rng rng(77);
  for (int trial = 0; trial < 300; ++trial) {
    const int K = 1 + static_cast<int>(rng.uniform_int(15));
    const int M = 1 + static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(K)));
    const LayerMap map = build_layer_map(K, M);
    REQUIRE(static_cast<int>(map.size()) == K);
    int final_count = 0;
    std::vector<int> uses(static_cast<std::size_t>(M + 1), 0);
    for (const LayerPair& p : map) {
      uses[static_cast<std::size_t>(p.student_layer)]++;
      if (p.student_layer == M) ++final_count;
    }
    CHECK(final_count == K - M + 1);
    for (int i = 1; i < M; ++i) CHECK(uses[static_cast<std::size_t>(i)] == 1);
  }
}

TEST_CASE("hidden loss: perfect alignment reaches exactly zero") {
  Rng rng(5);
  Tensor teacher_vec = Tensor::from({3}, {0.5, -1.0, 2.0});
  Tensor w = Tensor::from({3, 2}, {0.1, 0.2, 0.3, -0.4, 0.05, 0.8}, true);
  Tensor student_vec = matmul(teacher_vec, w).clone(false);

  ProjectionBank bank;
  bank.w = {{w}};
  std::vector<LayerMap> maps{build_layer_map(1, 1)};
  std::vector<Tensor> student_pooled{student_vec};
  std::vector<std::vector<Tensor>> teacher_pooled{{teacher_vec}};
  Tensor loss = hidden_loss_pooled(student_pooled, teacher_pooled, bank, maps);
  CHECK(loss.value() == 0.0);
}

TEST_CASE("hidden loss single pair equals a direct mse recomputation") {
  Rng rng(6);
  std::vector<double> tv(4), sv(3), wv(12);
  for (double& x : tv) x = rng.normal(0, 1);
  for (double& x : sv) x = rng.normal(0, 1);
  for (double& x : wv) x = rng.normal(0, 1);
  Tensor teacher_vec = Tensor::from({4}, tv);
  Tensor student_vec = Tensor::from({3}, sv);
  Tensor w = Tensor::from({4, 3}, wv, true);

  ProjectionBank bank;
  bank.w = {{w}};
  std::vector<LayerMap> maps{build_layer_map(1, 1)};
  std::vector<Tensor> sp{student_vec};
  std::vector<std::vector<Tensor>> tp{{teacher_vec}};
  const double got = hidden_loss_pooled(sp, tp, bank, maps).value();

  double expected = 0.0;
  for (int j = 0; j < 3; ++j) {
    double proj = 0.0;
    for (int i = 0; i < 4; ++i) proj += tv[static_cast<std::size_t>(i)] * wv[static_cast<std::size_t>(i * 3 + j)];
    const double d = sv[static_cast<std::size_t>(j)] - proj;
    expected += d * d;
  }
  expected /= 3.0;
  CHECK(got == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("hidden loss is invariant to doubling H_t with W halved") {
  Rng rng(7);
  std::vector<double> tv(4), sv(3), wv(12);
  for (double& x : tv) x = rng.normal(0, 1);
  for (double& x : sv) x = rng.normal(0, 1);
  for (double& x : wv) x = rng.normal(0, 1);

  auto loss_for = [&](double t_scale, double w_scale) {
    std::vector<double> tv2 = tv, wv2 = wv;
    for (double& x : tv2) x *= t_scale;
    for (double& x : wv2) x *= w_scale;
    ProjectionBank bank;
    bank.w = {{Tensor::from({4, 3}, wv2, true)}};
    std::vector<LayerMap> maps{build_layer_map(1, 1)};
    std::vector<Tensor> sp{Tensor::from({3}, sv)};
    std::vector<std::vector<Tensor>> tp{{Tensor::from({4}, tv2)}};
    return hidden_loss_pooled(sp, tp, bank, maps).value();
  };
  CHECK(loss_for(1.0, 1.0) == loss_for(2.0, 0.5));
}

TEST_CASE("hidden loss rejects a missing projection") {
  ProjectionBank bank;
  bank.w = {{}}; // teacher present, no W
  std::vector<LayerMap> maps{build_layer_map(1, 1)};
  std::vector<Tensor> sp{Tensor::from({3}, {0, 0, 0})};
  std::vector<std::vector<Tensor>> tp{{Tensor::from({4}, {0, 0, 0, 0})}};
  CHECK_THROWS_AS(hidden_loss_pooled(sp, tp, bank, maps), ConfigError);
}

TEST_CASE("distillation loss closed form and limits") {
  SUBCASE("uniform teacher and student over 4 classes") {
    std::vector<Tensor> t{Tensor::from({4}, {0, 0, 0, 0})};
    Tensor s = Tensor::from({4}, {0, 0, 0, 0});
    const double expected = std::log(4.0) / (1.0 + std::log(4.0));
    CHECK(distillation_loss(t, s, 2).value() == doctest::Approx(expected).epsilon(1e-9));
  }
  SUBCASE("perfect confident agreement drives the term to zero") {
    double prev = 1e9;
    for (double margin : {5.0, 15.0, 40.0}) {
      std::vector<double> logits{margin, 0, 0, 0};
      std::vector<Tensor> t{Tensor::from({4}, logits)};
      Tensor s = Tensor::from({4}, logits);
      const double term = distillation_loss(t, s, 0).value();
      CHECK(term < prev);
      prev = term;
    }
    CHECK(prev < 1e-2);
  }
  SUBCASE("bad ground truth id") {
    std::vector<Tensor> t{Tensor::from({4}, {0, 0, 0, 0})};
    Tensor s = Tensor::from({4}, {0, 0, 0, 0});
    CHECK_THROWS_AS(distillation_loss(t, s, 4), InputError);
  }
  SUBCASE("term strictly decreases as the teacher gets more wrong") {
    Rng rng(8);
    for (int trial = 0; trial < 200; ++trial) {
      std::vector<double> tv(4), sv(4);
      for (double& x : tv) x = rng.normal(0, 2);
      for (double& x : sv) x = rng.normal(0, 2);
      std::vector<Tensor> t{Tensor::from({4}, tv)};
      Tensor s = Tensor::from({4}, sv);
      std::vector<std::pair<double, double>> pairs;
      for (int gold = 0; gold < 4; ++gold) {
        const double den = cross_entropy(Tensor::from({4}, tv), one_hot(gold, 4)).value();
        pairs.emplace_back(den, distillation_loss(t, s, gold).value());
      }
      std::sort(pairs.begin(), pairs.end());
      for (std::size_t i = 1; i < pairs.size(); ++i)
        if (pairs[i].first > pairs[i - 1].first + 1e-12)
          CHECK(pairs[i].second < pairs[i - 1].second);
    }
  }
}

TEST_CASE("soft-label temperature flattens the teacher target") {
  std::vector<Tensor> t{Tensor::from({4}, {6, 0, 0, 0})};
  Tensor s = Tensor::from({4}, {0, 0, 0, 0});
  const double t1 = distillation_loss(t, s, 0, nullptr, 1.0).value();
  const double t_hot = distillation_loss(t, s, 0, nullptr, 100.0).value();
  // at very high temperature the target tends to uniform; the numerator
  // against uniform student logits tends to ln 4
  const double den = 1.0 + cross_entropy(t[0], one_hot(0, 4)).value();
  CHECK(t_hot == doctest::Approx(std::log(4.0) / den).epsilon(1e-3));
  CHECK(t1 != t_hot);
  CHECK_THROWS_AS(distillation_loss(t, s, 0, nullptr, 0.0), ConfigError);
}

TEST_CASE("task loss matches the spec examples") {
  Tensor uniform = Tensor::from({4}, {0, 0, 0, 0});
  CHECK(task_loss(uniform, 1).value() == doctest::Approx(std::log(4.0)).epsilon(1e-12));
  Tensor confident = Tensor::from({4}, {12, 0, 0, 0});
  CHECK(task_loss(confident, 0).value() < 1e-4);
}

TEST_CASE("total loss: breakdown identity and teacher-subset additivity") {
  Corpus corpus = micro_corpus(8, 0, 31, "distill_total");
  std::vector<TeacherBundle> teachers = fresh_teachers(corpus, 3);

  DistillRunConfig cfg;
  cfg.train.epochs = 0;
  cfg.train.seed = 9;
  cfg.student_layers = 1;
  DistillOutcome outcome = run_distillation(corpus, teachers, cfg);
  DistillModel& model = outcome.model;

  TeacherCache cache = build_teacher_cache(corpus.train, model.teachers, model.pooling);
  std::vector<long> batch{0, 1, 2, 3};
  LossBreakdown bd = total_loss(corpus.train, batch, model, &cache, false, nullptr);

  CHECK(bd.l_total.value() == bd.l_hid.value() + bd.l_dis.value() + bd.l_task.value());
  CHECK(bd.l_hid.value() >= 0.0);
  CHECK(bd.l_dis.value() >= 0.0);
  CHECK(bd.l_task.value() >= 0.0);
  REQUIRE(bd.teacher_hid.size() == 3);
  REQUIRE(bd.teacher_dis.size() == 3);

  // two-teacher arm: sub-terms match the 3-teacher run exactly
  DistillRunConfig cfg2 = cfg;
  cfg2.teacher_subset = {Modality::Chat, Modality::Transcript};
  DistillOutcome outcome2 = run_distillation(corpus, teachers, cfg2);
  REQUIRE(outcome2.model.teachers.size() == 2);
  CHECK(outcome2.model.teachers[0].spec.modality == Modality::Chat);

  double hid_sum = 0.0;
  for (double v : bd.teacher_hid) hid_sum += v;
  CHECK(bd.l_hid.value() == doctest::Approx(hid_sum).epsilon(1e-12));
}

TEST_CASE("student consumes the transcript modality only") {
  Corpus corpus = micro_corpus(4, 0, 32, "distill_modality");
  std::vector<TeacherBundle> teachers = fresh_teachers(corpus, 4);
  DistillRunConfig cfg;
  cfg.train.epochs = 0;
  cfg.student_layers = 1;
  DistillOutcome outcome = run_distillation(corpus, teachers, cfg);

  Instance inst = corpus.train[0];
  Tensor base = student_forward(outcome.model.student, outcome.model.student_head, inst,
                                Pooling::Mean);
  Instance chat_changed = inst;
  chat_changed.chat_tokens[0] = (chat_changed.chat_tokens[0] + 1) % 5 + 1;
  Tensor after = student_forward(outcome.model.student, outcome.model.student_head,
                                 chat_changed, Pooling::Mean);
  for (std::size_t i = 0; i < base.size(); ++i) CHECK(base.data()[i] == after.data()[i]);

  Instance transcript_changed = inst;
  transcript_changed.transcript_tokens[0] =
      (transcript_changed.transcript_tokens[0] + 3) % 10 + 1;
  Tensor moved = student_forward(outcome.model.student, outcome.model.student_head,
                                 transcript_changed, Pooling::Mean);
  bool differs = false;
  for (std::size_t i = 0; i < base.size(); ++i)
    if (base.data()[i] != moved.data()[i]) differs = true;
  CHECK(differs);
}

TEST_CASE("empty teacher subset is a configuration error") {
  Corpus corpus = micro_corpus(4, 0, 33, "distill_empty");
  std::vector<TeacherBundle> teachers = fresh_teachers(corpus, 5);
  DistillRunConfig cfg;
  cfg.teacher_subset = {};
  CHECK_THROWS_AS(run_distillation(corpus, teachers, cfg), ConfigError);
}

TEST_CASE("short distillation run: frozen teachers bit-identical, learners move") {
  Corpus corpus = micro_corpus(24, 0, 34, "distill_frozen");
  std::vector<TeacherBundle> teachers = fresh_teachers(corpus, 6);

  std::vector<std::vector<double>> before;
  for (const TeacherBundle& t : teachers)
    for (const NamedParam& p : t.encoder.parameters())
      before.emplace_back(p.tensor.data().begin(), p.tensor.data().end());

  DistillRunConfig cfg;
  cfg.train.epochs = 3;
  cfg.train.batch_size = 4;
  cfg.train.seed = 12;
  cfg.train.lr_low = 1e-4;
  cfg.train.lr_high = 2e-3;
  cfg.train.dropout = 0.0;
  cfg.student_layers = 1;
  DistillOutcome outcome = run_distillation(corpus, teachers, cfg);

  std::size_t row = 0;
  for (const TeacherBundle& t : teachers)
    for (const NamedParam& p : t.encoder.parameters()) {
      CHECK(std::vector<double>(p.tensor.data().begin(), p.tensor.data().end()) ==
            before[row]);
      ++row;
    }

  // learners changed nearly everywhere
  long changed = 0, total = 0;
  DistillOutcome fresh = [&] {
    DistillRunConfig zero = cfg;
    zero.train.epochs = 0;
    return run_distillation(corpus, teachers, zero);
  }();
  auto trained = outcome.model.trainable_parameters();
  auto init = fresh.model.trainable_parameters();
  REQUIRE(trained.size() == init.size());
  for (std::size_t i = 0; i < trained.size(); ++i)
    for (std::size_t k = 0; k < trained[i].tensor.size(); ++k) {
      ++total;
      if (trained[i].tensor.data()[k] != init[i].tensor.data()[k]) ++changed;
    }
  CHECK(static_cast<double>(changed) / static_cast<double>(total) >= 0.99);
}

TEST_CASE("distillation run is seed-deterministic") {
  Corpus corpus = micro_corpus(12, 0, 35, "distill_det");
  std::vector<TeacherBundle> teachers = fresh_teachers(corpus, 7);
  DistillRunConfig cfg;
  cfg.train.epochs = 2;
  cfg.train.batch_size = 4;
  cfg.train.seed = 20;
  cfg.student_layers = 1;

  DistillOutcome a = run_distillation(corpus, teachers, cfg);
  DistillOutcome b = run_distillation(corpus, teachers, cfg);
  auto pa = a.model.trainable_parameters();
  auto pb = b.model.trainable_parameters();
  REQUIRE(pa.size() == pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i)
    CHECK(std::vector<double>(pa[i].tensor.data().begin(), pa[i].tensor.data().end()) ==
          std::vector<double>(pb[i].tensor.data().begin(), pb[i].tensor.data().end()));
  REQUIRE(a.history.size() == b.history.size());
  for (std::size_t e = 0; e < a.history.size(); ++e)
    CHECK(a.history[e].losses == b.history[e].losses);
}
