#include "gamekd/distill.hpp"

#include <algorithm>
#include <cmath>

#include "gamekd/errors.hpp"

namespace gamekd {

LayerMap build_layer_map(int K, int M) {
  if (M < 1 || K < M)
    throw ConfigError("layer map: need K >= M >= 1, got K=" + std::to_string(K) +
                      ", M=" + std::to_string(M));
  LayerMap map;
  map.reserve(static_cast<std::size_t>(K));
  for (int i = 1; i <= M; ++i) map.push_back({i, i});
  for (int j = M + 1; j <= K; ++j) map.push_back({j, M});
  return map;
}

const Tensor& ProjectionBank::at(int teacher, int teacher_layer) const {
  if (teacher < 0 || teacher >= static_cast<int>(w.size()) || teacher_layer < 1 ||
      teacher_layer > static_cast<int>(w[static_cast<std::size_t>(teacher)].size()))
    throw ConfigError("projection bank: missing W for teacher " + std::to_string(teacher) +
                      ", layer " + std::to_string(teacher_layer));
  return w[static_cast<std::size_t>(teacher)][static_cast<std::size_t>(teacher_layer - 1)];
}

std::vector<NamedParam> ProjectionBank::parameters(
    std::span<const TeacherBundle> teachers) const {
  std::vector<NamedParam> out;
  for (std::size_t t = 0; t < w.size(); ++t)
    for (std::size_t i = 0; i < w[t].size(); ++i)
      out.push_back({"proj." + to_string(teachers[t].spec.modality) + "." +
                         std::to_string(i + 1),
                     w[t][i], true});
  return out;
}

namespace {

Tensor small_uniform(int rows, int cols, double scale_dim, Rng& rng) {
  const double limit = 1.0 / std::sqrt(scale_dim);
  std::vector<double> v(static_cast<std::size_t>(rows) * cols);
  for (double& x : v) x = rng.uniform(-limit, limit);
  return Tensor::from({rows, cols}, std::move(v), true);
}

} // namespace

ProjectionBank init_projection_bank(std::span<const TeacherBundle> teachers,
                                    const std::vector<LayerMap>& maps, int d_student,
                                    Rng& rng) {
  if (maps.size() != teachers.size())
    throw ConfigError("projection bank: one layer map per teacher required");
  ProjectionBank bank;
  bank.w.resize(teachers.size());
  for (std::size_t t = 0; t < teachers.size(); ++t) {
    const int d_teacher = teachers[t].spec.encoder.hidden_dim;
    const int K = teachers[t].spec.encoder.num_layers;
    if (static_cast<int>(maps[t].size()) != K)
      throw ConfigError("projection bank: layer map size must equal teacher depth");
    bank.w[t].reserve(static_cast<std::size_t>(K));
    for (int i = 0; i < K; ++i)
      bank.w[t].push_back(small_uniform(d_teacher, d_student, d_teacher, rng));
  }
  return bank;
}

std::vector<Tensor> init_replaced_heads(std::span<const TeacherBundle> teachers,
                                        int num_classes, Rng& rng) {
  std::vector<Tensor> heads;
  heads.reserve(teachers.size());
  for (const TeacherBundle& t : teachers) {
    const int d = t.spec.encoder.hidden_dim;
    heads.push_back(small_uniform(d, num_classes, d, rng));
  }
  return heads;
}

Tensor hidden_loss_pooled(std::span<const Tensor> student_pooled,
                          std::span<const std::vector<Tensor>> teacher_pooled,
                          const ProjectionBank& bank, const std::vector<LayerMap>& maps,
                          std::vector<Tensor>* per_teacher) {
  if (teacher_pooled.size() != maps.size() || bank.w.size() != maps.size())
    throw ConfigError("hidden_loss: teacher stacks, maps and bank must align");
  const int M = static_cast<int>(student_pooled.size());

  Tensor total;
  for (std::size_t t = 0; t < maps.size(); ++t) {
    Tensor teacher_term;
    for (const LayerPair& pair : maps[t]) {
      if (pair.student_layer < 1 || pair.student_layer > M)
        throw ConfigError("hidden_loss: student layer " +
                          std::to_string(pair.student_layer) + " outside stack of depth " +
                          std::to_string(M));
      if (pair.teacher_layer < 1 ||
          pair.teacher_layer > static_cast<int>(teacher_pooled[t].size()))
        throw ConfigError("hidden_loss: teacher layer " +
                          std::to_string(pair.teacher_layer) + " outside stack");
      const Tensor& hs = student_pooled[static_cast<std::size_t>(pair.student_layer - 1)];
      const Tensor& ht = teacher_pooled[t][static_cast<std::size_t>(pair.teacher_layer - 1)];
      Tensor projected = matmul(ht, bank.at(static_cast<int>(t), pair.teacher_layer));
      Tensor term = mse(hs, projected);
      teacher_term = teacher_term.defined() ? add(teacher_term, term) : term;
    }
    if (per_teacher) per_teacher->push_back(teacher_term);
    total = total.defined() ? add(total, teacher_term) : teacher_term;
  }
  return total;
}

namespace {

std::vector<Tensor> pool_stack(const HiddenStack& stack, Pooling pooling) {
  std::vector<Tensor> out;
  out.reserve(stack.size());
  for (const Tensor& layer : stack) out.push_back(pool(layer, pooling));
  return out;
}

} // namespace

Tensor hidden_loss(const HiddenStack& student_stack,
                   std::span<const HiddenStack> teacher_stacks,
                   const ProjectionBank& bank, const std::vector<LayerMap>& maps,
                   Pooling pooling, std::vector<Tensor>* per_teacher) {
  std::vector<Tensor> student_pooled = pool_stack(student_stack, pooling);
  std::vector<std::vector<Tensor>> teacher_pooled;
  teacher_pooled.reserve(teacher_stacks.size());
  for (const HiddenStack& stack : teacher_stacks)
    teacher_pooled.push_back(pool_stack(stack, pooling));
  return hidden_loss_pooled(student_pooled, teacher_pooled, bank, maps, per_teacher);
}

Tensor distillation_loss(std::span<const Tensor> teacher_logits,
                         const Tensor& student_logits, int ground_truth,
                         std::vector<Tensor>* per_teacher, double temperature) {
  const int C = static_cast<int>(student_logits.size());
  if (C < 2) throw InputError("distillation_loss: need at least 2 classes");
  if (ground_truth < 0 || ground_truth >= C)
    throw InputError("distillation_loss: class id " + std::to_string(ground_truth) +
                     " out of range for " + std::to_string(C) + " classes");
  if (temperature <= 0.0)
    throw ConfigError("distillation_loss: temperature must be positive");

  Tensor total;
  const Tensor truth = one_hot(ground_truth, C);
  for (const Tensor& yt : teacher_logits) {
    if (static_cast<int>(yt.size()) != C)
      throw InputError("distillation_loss: teacher logits length " +
                       std::to_string(yt.size()) + " vs " + std::to_string(C));
    Tensor soft = temperature == 1.0 ? softmax(yt) : softmax(scale(yt, 1.0 / temperature));
    Tensor numerator = cross_entropy(student_logits, soft);
    Tensor denominator = add_const(cross_entropy(yt, truth), 1.0);
    Tensor term = div(numerator, denominator);
    if (per_teacher) per_teacher->push_back(term);
    total = total.defined() ? add(total, term) : term;
  }
  if (!total.defined())
    throw ConfigError("distillation_loss: at least one teacher required");
  return total;
}

Tensor task_loss(const Tensor& student_logits, int ground_truth) {
  return cross_entropy(student_logits,
                       one_hot(ground_truth, static_cast<int>(student_logits.size())));
}

TeacherCache build_teacher_cache(const std::vector<Instance>& corpus,
                                 std::span<const TeacherBundle> teachers,
                                 Pooling pooling) {
  TeacherCache cache;
  cache.pooled.resize(corpus.size());
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    cache.pooled[i].resize(teachers.size());
    for (std::size_t t = 0; t < teachers.size(); ++t) {
      HiddenStack stack = teacher_encode(teachers[t], corpus[i], false);
      auto& slot = cache.pooled[i][t];
      slot.reserve(stack.size());
      // Detach: frozen-teacher outputs are constants for the whole run.
      for (const Tensor& layer : stack) slot.push_back(pool(layer, pooling).clone(false));
    }
  }
  return cache;
}

std::vector<NamedParam> DistillModel::trainable_parameters() const {
  std::vector<NamedParam> out;
  for (NamedParam& p : student.parameters())
    out.push_back({"student." + p.name, p.tensor, p.decay});
  for (NamedParam& p : student_head.parameters("student.head"))
    out.push_back(std::move(p));
  for (NamedParam& p : bank.parameters(teachers)) out.push_back(std::move(p));
  for (std::size_t t = 0; t < replaced_heads.size(); ++t)
    out.push_back({"replaced_head." + to_string(teachers[t].spec.modality),
                   replaced_heads[t], true});
  return out;
}

Tensor student_forward(const EncoderModel& student, const TaskHead& head,
                       const Instance& inst, Pooling pooling, bool train_mode,
                       Rng* dropout_rng) {
  HiddenStack stack = student.encode(inst.transcript_tokens, train_mode, dropout_rng);
  Tensor pooled = pool(stack.back(), pooling);
  return add(matmul(pooled, head.w), head.b);
}

LossBreakdown total_loss(const std::vector<Instance>& corpus,
                         std::span<const long> batch, DistillModel& model,
                         const TeacherCache* cache, bool train_mode, Rng* dropout_rng,
                         const std::optional<std::vector<double>>& class_weights) {
  if (model.teachers.empty())
    throw ConfigError("total_loss: at least one teacher required");
  if (batch.empty()) throw InputError("total_loss: empty batch");
  const int C = model.student_head.num_classes();

  Tensor hid_sum, dis_sum, task_sum;
  std::vector<Tensor> hid_terms(model.teachers.size());
  std::vector<Tensor> dis_terms(model.teachers.size());
  std::vector<int> out_predictions;
  double weight_total = 0.0;

  for (long idx : batch) {
    const Instance& inst = corpus.at(static_cast<std::size_t>(idx));
    const int gold = static_cast<int>(inst.label);
    if (gold >= C)
      throw InputError("total_loss: label id " + std::to_string(gold) +
                       " out of range for " + std::to_string(C) + " classes");

    HiddenStack student_stack =
        model.student.encode(inst.transcript_tokens, train_mode, dropout_rng);
    std::vector<Tensor> student_pooled = pool_stack(student_stack, model.pooling);
    Tensor s_logits =
        add(matmul(student_pooled.back(), model.student_head.w), model.student_head.b);

    // Teacher pooled vectors: cached constants, or a fresh frozen forward.
    std::vector<std::vector<Tensor>> computed;
    std::span<const std::vector<Tensor>> teacher_pooled;
    if (cache) {
      teacher_pooled = cache->pooled.at(static_cast<std::size_t>(idx));
    } else {
      computed.reserve(model.teachers.size());
      for (const TeacherBundle& t : model.teachers)
        computed.push_back(pool_stack(teacher_encode(t, inst, false), model.pooling));
      teacher_pooled = computed;
    }

    std::vector<Tensor> t_logits;
    t_logits.reserve(model.teachers.size());
    for (std::size_t t = 0; t < model.teachers.size(); ++t)
      t_logits.push_back(matmul(teacher_pooled[t].back(), model.replaced_heads[t]));

    int pred = 0;
    for (std::size_t j = 1; j < s_logits.size(); ++j)
      if (s_logits[j] > s_logits[static_cast<std::size_t>(pred)])
        pred = static_cast<int>(j);
    out_predictions.push_back(pred);

    std::vector<Tensor> inst_hid, inst_dis;
    Tensor hid = hidden_loss_pooled(student_pooled, teacher_pooled, model.bank,
                                    model.maps, &inst_hid);
    Tensor dis = distillation_loss(t_logits, s_logits, gold, &inst_dis,
                                   model.temperature);
    Tensor task = task_loss(s_logits, gold);
    if (class_weights) {
      const double w = class_weights->at(static_cast<std::size_t>(gold));
      task = scale(task, w);
      weight_total += w;
    } else {
      weight_total += 1.0;
    }

    hid_sum = hid_sum.defined() ? add(hid_sum, hid) : hid;
    dis_sum = dis_sum.defined() ? add(dis_sum, dis) : dis;
    task_sum = task_sum.defined() ? add(task_sum, task) : task;
    for (std::size_t t = 0; t < model.teachers.size(); ++t) {
      hid_terms[t] = hid_terms[t].defined() ? add(hid_terms[t], inst_hid[t]) : inst_hid[t];
      dis_terms[t] = dis_terms[t].defined() ? add(dis_terms[t], inst_dis[t]) : inst_dis[t];
    }
  }

  const double inv_b = 1.0 / static_cast<double>(batch.size());
  LossBreakdown out;
  out.l_hid = scale(hid_sum, inv_b);
  out.l_dis = scale(dis_sum, inv_b);
  out.l_task = scale(task_sum, class_weights ? 1.0 / weight_total : inv_b);
  out.l_total = add(add(out.l_hid, out.l_dis), out.l_task);
  for (std::size_t t = 0; t < model.teachers.size(); ++t) {
    out.teacher_hid.push_back(hid_terms[t].value() * inv_b);
    out.teacher_dis.push_back(dis_terms[t].value() * inv_b);
  }
  out.predictions = std::move(out_predictions);
  return out;
}

namespace {

const TeacherBundle* find_teacher(std::span<const TeacherBundle> teachers, Modality m) {
  for (const TeacherBundle& t : teachers)
    if (t.spec.modality == m) return &t;
  return nullptr;
}

EncoderModel make_student(std::span<const TeacherBundle> available,
                          const DistillRunConfig& cfg) {
  const TeacherBundle* donor = find_teacher(available, Modality::Transcript);
  if (!donor)
    throw ConfigError("distill: no transcript teacher available to donate student layers");
  const int K = donor->spec.encoder.num_layers;
  const int M = cfg.student_layers > 0 ? cfg.student_layers : std::max(1, K / 2);
  EncoderModel student = init_student_from(donor->encoder, M);
  return student;
}

} // namespace

DistillOutcome run_distillation(const Corpus& corpus,
                                std::vector<TeacherBundle> teachers,
                                const DistillRunConfig& cfg,
                                const TeacherCache* shared_cache) {
  if (cfg.teacher_subset.empty())
    throw ConfigError("distill: teacher subset must be non-empty");
  if (corpus.train.empty()) throw DataError("distill: empty training corpus");

  DistillOutcome out;
  DistillModel& model = out.model;
  model.pooling = cfg.pooling;

  EncoderModel student = make_student(teachers, cfg);

  // Canonical teacher order: audio, chat, transcript. The run owns frozen
  // clones so the caller's bundles stay untouched.
  for (Modality m : kAllModalities) {
    if (std::find(cfg.teacher_subset.begin(), cfg.teacher_subset.end(), m) ==
        cfg.teacher_subset.end())
      continue;
    const TeacherBundle* t = find_teacher(teachers, m);
    if (!t)
      throw ConfigError("distill: teacher subset names '" + to_string(m) +
                        "' but no such checkpoint was provided");
    TeacherBundle frozen;
    frozen.spec = t->spec;
    frozen.encoder = t->encoder.clone_trainable();
    frozen.encoder.freeze();
    frozen.head = {t->head.kind, t->head.w.clone(false), t->head.b.clone(false)};
    model.teachers.push_back(std::move(frozen));
  }

  const int M = student.config().num_layers;
  for (const TeacherBundle& t : model.teachers)
    model.maps.push_back(build_layer_map(t.spec.encoder.num_layers, M));

  Rng init_rng(Rng::derive(cfg.train.seed, "distill-init"));
  model.bank = init_projection_bank(model.teachers, model.maps,
                                    student.config().hidden_dim, init_rng);
  model.replaced_heads = init_replaced_heads(model.teachers, cfg.num_classes, init_rng);
  model.student = std::move(student);
  model.student_head = init_task_head(TaskKind::SequenceClassification,
                                      model.student.config().hidden_dim, cfg.num_classes,
                                      init_rng);
  model.temperature = cfg.temperature;

  TeacherCache local_cache;
  const TeacherCache* cache = shared_cache;
  if (cache) {
    if (cache->pooled.size() != corpus.train.size() ||
        (!cache->pooled.empty() && cache->pooled[0].size() != model.teachers.size()))
      throw ConfigError("distill: shared teacher cache does not match corpus/subset");
  } else {
    local_cache = build_teacher_cache(corpus.train, model.teachers, model.pooling);
    cache = &local_cache;
  }

  std::vector<NamedParam> params = model.trainable_parameters();
  AdamW optimizer(params, {.weight_decay = cfg.train.weight_decay});
  Rng dropout_rng(Rng::derive(cfg.train.seed, "distill-dropout"));

  auto loss_fn = [&](std::span<const long> batch, Rng&,
                     std::map<std::string, double>& components,
                     std::pair<double, double>& metric) -> Tensor {
    LossBreakdown breakdown =
        total_loss(corpus.train, batch, model, cache, true, &dropout_rng,
                   cfg.train.class_weights);
    components["l_hid"] += breakdown.l_hid.value();
    components["l_dis"] += breakdown.l_dis.value();
    components["l_task"] += breakdown.l_task.value();
    components["l_total"] += breakdown.l_total.value();
    for (std::size_t i = 0; i < batch.size(); ++i) {
      const Instance& inst = corpus.train[static_cast<std::size_t>(batch[i])];
      metric.first += breakdown.predictions[i] == static_cast<int>(inst.label) ? 1.0 : 0.0;
      metric.second += 1.0;
    }
    return breakdown.l_total;
  };

  TrainResult tr = run_training(optimizer, params,
                                static_cast<long>(corpus.train.size()), loss_fn,
                                cfg.train);
  out.history = std::move(tr.history);
  return out;
}

DistillOutcome run_student_baseline(const Corpus& corpus, const EncoderModel& donor,
                                    const DistillRunConfig& cfg) {
  if (corpus.train.empty()) throw DataError("baseline: empty training corpus");

  DistillOutcome out;
  DistillModel& model = out.model;
  model.pooling = cfg.pooling;

  const int K = donor.config().num_layers;
  const int M = cfg.student_layers > 0 ? cfg.student_layers : std::max(1, K / 2);
  model.student = init_student_from(donor, M);
  Rng init_rng(Rng::derive(cfg.train.seed, "distill-init"));
  model.student_head = init_task_head(TaskKind::SequenceClassification,
                                      model.student.config().hidden_dim, cfg.num_classes,
                                      init_rng);

  std::vector<NamedParam> params;
  for (NamedParam& p : model.student.parameters())
    params.push_back({"student." + p.name, p.tensor, p.decay});
  for (NamedParam& p : model.student_head.parameters("student.head"))
    params.push_back(std::move(p));

  AdamW optimizer(params, {.weight_decay = cfg.train.weight_decay});
  Rng dropout_rng(Rng::derive(cfg.train.seed, "distill-dropout"));

  auto loss_fn = [&](std::span<const long> batch, Rng&,
                     std::map<std::string, double>& components,
                     std::pair<double, double>& metric) -> Tensor {
    Tensor total;
    for (long idx : batch) {
      const Instance& inst = corpus.train[static_cast<std::size_t>(idx)];
      Tensor logits = student_forward(model.student, model.student_head, inst,
                                      model.pooling, true, &dropout_rng);
      int pred = 0;
      for (std::size_t j = 1; j < logits.size(); ++j)
        if (logits[j] > logits[static_cast<std::size_t>(pred)]) pred = static_cast<int>(j);
      metric.first += pred == static_cast<int>(inst.label) ? 1.0 : 0.0;
      metric.second += 1.0;
      Tensor li = task_loss(logits, static_cast<int>(inst.label));
      if (cfg.train.class_weights)
        li = scale(li, cfg.train.class_weights->at(static_cast<std::size_t>(inst.label)));
      total = total.defined() ? add(total, li) : li;
    }
    Tensor mean = scale(total, 1.0 / static_cast<double>(batch.size()));
    components["l_task"] += mean.value();
    return mean;
  };

  TrainResult tr = run_training(optimizer, params,
                                static_cast<long>(corpus.train.size()), loss_fn,
                                cfg.train);
  out.history = std::move(tr.history);
  return out;
}

} // namespace gamekd
