// Command surface for the multi-teacher distillation pipeline: data
// generation, segmentation, teacher fine-tuning, distillation, evaluation,
// ablation and self-verification.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "gamekd/checkpoint.hpp"
#include "gamekd/config.hpp"
#include "gamekd/data.hpp"
#include "gamekd/distill.hpp"
#include "gamekd/errors.hpp"
#include "gamekd/eval.hpp"
#include "gamekd/teachers.hpp"
#include "gamekd/train.hpp"
#include "gamekd/verify.hpp"

namespace fs = std::filesystem;
using namespace gamekd;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;
constexpr int kExitVerify = 5;

// info-level logging; silenced by --verbosity 0
int g_verbosity = 1;
std::ostream& info() {
  static std::ofstream null_sink;
  if (g_verbosity < 1) {
    if (!null_sink.is_open()) null_sink.setstate(std::ios::badbit);
    return null_sink;
  }
  return std::cout;
}

struct CommonArgs {
  std::string config_path;
  std::string out_dir = "out";
  std::uint64_t seed = 0;
  bool seed_set = false;
  int verbosity = 1;
};

std::string timestamp_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

// Shared command wrapper: parses the config, times the body, writes the
// RunRecord on success or failure, and maps errors to exit codes.
class CommandRun {
public:
  CommandRun(const std::string& command, const CommonArgs& args) : args_(args) {
    record_.command = command;
    record_.started_at = timestamp_now();
    start_ = std::chrono::steady_clock::now();
    if (!args.config_path.empty()) {
      cfg_ = parse_config(args.config_path);
      record_.config_snapshot = cfg_.raw;
      record_.input_hashes[args.config_path] = git_blob_sha1(args.config_path);
    }
    if (args.seed_set) {
      cfg_.gen.seed = args.seed;
      cfg_.train.seed = args.seed;
      cfg_.distill_train.seed = args.seed;
    }
  }

  RunConfigFile& config() { return cfg_; }
  const fs::path out_dir() const { return args_.out_dir; }

  void hash_input(const fs::path& p) {
    record_.input_hashes[p.string()] = git_blob_sha1(p);
  }
  void add_output(const fs::path& p) { record_.outputs.push_back(p.string()); }

  void finish(int exit_status) {
    record_.exit_status = exit_status;
    record_.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    fs::create_directories(args_.out_dir);
    write_run_record(fs::path(args_.out_dir) / "run_record.json", record_);
  }

private:
  CommonArgs args_;
  RunConfigFile cfg_;
  RunRecord record_;
  std::chrono::steady_clock::time_point start_;
};

int map_error(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) {
    std::cerr << "E_CONFIG\n" << e.what() << "\n";
    return kExitConfig;
  }
  if (dynamic_cast<const NumericError*>(&e)) {
    std::cerr << "E_NUMERIC\n" << e.what() << "\n";
    return kExitNumeric;
  }
  if (dynamic_cast<const DataError*>(&e) || dynamic_cast<const InputError*>(&e)) {
    std::cerr << "E_DATA\n" << e.what() << "\n";
    return kExitData;
  }
  std::cerr << "E_INTERNAL\n" << e.what() << "\n";
  return kExitData;
}

// Corpus + label-set view for the configured evaluation mode.
struct ModeView {
  Corpus corpus;
  int num_classes = kNumLabels;
};

ModeView load_mode_view(const RunConfigFile& cfg) {
  ModeView view;
  view.corpus = load_corpus_dir(cfg.data_dir);
  if (cfg.eval_mode == EvalMode::OtherExcluded) {
    view.corpus.train = filter_other(view.corpus.train);
    view.corpus.test = filter_other(view.corpus.test);
    view.num_classes = kNumLabels - 1;
  }
  return view;
}

TeacherSpec make_teacher_spec(const RunConfigFile& cfg, const Corpus& corpus,
                              Modality modality, int event_classes) {
  TeacherSpec spec;
  spec.modality = modality;
  switch (modality) {
    case Modality::Audio:
      spec.encoder = cfg.audio_encoder;
      if (!corpus.train.empty())
        spec.encoder.mel_bins = corpus.train.front().audio.mels;
      spec.num_classes = event_classes;
      break;
    case Modality::Chat:
      spec.encoder = cfg.token_encoder;
      spec.encoder.vocab_size = corpus.chat_vocab.size();
      spec.num_classes = corpus.chat_tags.size();
      break;
    case Modality::Transcript:
      spec.encoder = cfg.token_encoder;
      spec.encoder.vocab_size = corpus.transcript_vocab.size();
      spec.num_classes = corpus.transcript_tags.size();
      break;
  }
  return spec;
}

std::optional<std::vector<double>> resolve_class_weights(
    const TrainConfig& train, const std::vector<Instance>& instances, int num_classes) {
  if (!train.class_weights) return std::nullopt;
  // inverse-frequency weights, normalised to mean 1
  std::vector<double> counts(static_cast<std::size_t>(num_classes), 0.0);
  for (const Instance& inst : instances)
    counts[static_cast<std::size_t>(inst.label)] += 1.0;
  std::vector<double> w(counts.size(), 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    w[i] = counts[i] > 0 ? static_cast<double>(instances.size()) / counts[i] : 0.0;
    total += w[i];
  }
  for (double& x : w) x *= w.size() / total;
  return w;
}

fs::path teacher_dir(const RunConfigFile& cfg, const fs::path& out, Modality m) {
  auto it = cfg.teacher_ckpts.find(m);
  if (it != cfg.teacher_ckpts.end()) return it->second;
  return out / ("teacher_" + to_string(m));
}

std::vector<TeacherBundle> load_teachers_for(const RunConfigFile& cfg, const fs::path& out,
                                             CommandRun& run) {
  std::vector<TeacherBundle> teachers;
  for (Modality m : kAllModalities) {
    const fs::path dir = teacher_dir(cfg, out, m);
    if (!fs::exists(dir / "encoder.ckpt")) {
      const bool needed = std::find(cfg.teacher_subset.begin(), cfg.teacher_subset.end(),
                                    m) != cfg.teacher_subset.end();
      if (needed)
        throw ConfigError("distill: teacher checkpoint missing at '" + dir.string() + "'");
      continue;
    }
    run.hash_input(dir / "encoder.ckpt");
    teachers.push_back(load_teacher(dir));
  }
  return teachers;
}

void save_student(const fs::path& path, const EncoderModel& student,
                  const TaskHead& head) {
  std::vector<NamedParam> params = student.parameters();
  for (NamedParam& p : head.parameters("head")) params.push_back(std::move(p));
  json meta = {{"kind", "student"},
               {"config", encoder_config_to_json(student.config())},
               {"num_classes", head.num_classes()}};
  save_checkpoint(path, meta, params);
}

std::pair<EncoderModel, TaskHead> load_student(const fs::path& path) {
  Checkpoint ckpt = load_checkpoint(path);
  EncoderConfig cfg = encoder_config_from_json(ckpt.meta.at("config"));
  Rng unused(0);
  EncoderModel student = EncoderModel::init(cfg, unused);
  student.load_parameters(ckpt.params);
  TaskHead head;
  head.kind = TaskKind::SequenceClassification;
  head.w = ckpt.find("head.w").clone(true);
  head.b = ckpt.find("head.b").clone(true);
  return {std::move(student), std::move(head)};
}

// ---- commands -------------------------------------------------------------

int cmd_gen_data(CommandRun& run) {
  RunConfigFile& cfg = run.config();
  const fs::path dir = cfg.data_dir;
  generate_synthetic(cfg.gen, dir);
  for (const char* f : {"train.jsonl", "test.jsonl", "vocab_transcript.txt",
                        "vocab_chat.txt", "tags_transcript.txt", "tags_chat.txt",
                        "manifest.json"})
    run.add_output(dir / f);
  info() << "corpus written to " << dir.string() << "\n";
  return kExitOk;
}

int cmd_segment(CommandRun& run, const std::string& streams_dir) {
  const fs::path dir(streams_dir);
  for (const char* f : {"transcript.jsonl", "chat.jsonl", "events.jsonl", "audio.json"}) {
    if (!fs::exists(dir / f))
      throw ConfigError("segment: missing stream file '" + (dir / f).string() + "'");
    run.hash_input(dir / f);
  }
  StreamBundle streams = load_streams(dir);
  std::vector<Instance> instances =
      segment(streams.transcript_windows, streams.chat_log, streams.audio, streams.events);
  fs::create_directories(run.out_dir());
  const fs::path out = run.out_dir() / "instances.jsonl";
  save_corpus(out, instances);
  run.add_output(out);
  info() << instances.size() << " windows segmented to " << out.string() << "\n";
  return kExitOk;
}

int cmd_train_teacher(CommandRun& run, const std::string& modality_name) {
  RunConfigFile& cfg = run.config();
  const Modality modality = modality_from_string(modality_name);
  ModeView view = load_mode_view(cfg);

  TrainConfig train = cfg.train;
  train.class_weights =
      resolve_class_weights(train, view.corpus.train, view.num_classes);
  if (train.class_weights && modality != Modality::Audio)
    train.class_weights.reset(); // taggers have their own tag targets

  TeacherSpec spec = make_teacher_spec(cfg, view.corpus, modality, view.num_classes);
  FinetuneResult result = finetune_teacher(spec, view.corpus.train, train, cfg.pooling);

  const fs::path dir = run.out_dir() / ("teacher_" + to_string(modality));
  save_teacher(dir, result.teacher);
  write_history_csv(dir / "loss_history.csv", result.history);
  run.add_output(dir / "encoder.ckpt");
  run.add_output(dir / "loss_history.csv");

  const double train_acc = teacher_accuracy(result.teacher, view.corpus.train, cfg.pooling);
  info() << "teacher " << to_string(modality) << ": train accuracy " << train_acc
            << ", checkpoint " << dir.string() << "\n";
  return kExitOk;
}

int cmd_distill(CommandRun& run) {
  RunConfigFile& cfg = run.config();
  ModeView view = load_mode_view(cfg);

  DistillRunConfig dcfg;
  dcfg.teacher_subset = cfg.teacher_subset;
  dcfg.train = cfg.distill_train;
  dcfg.pooling = cfg.pooling;
  dcfg.student_layers = cfg.student_layers;
  dcfg.num_classes = view.num_classes;
  dcfg.temperature = cfg.distill_temperature;
  dcfg.train.class_weights =
      resolve_class_weights(dcfg.train, view.corpus.train, view.num_classes);

  if (cfg.baseline) cfg.teacher_subset = {Modality::Transcript}; // donor only
  std::vector<TeacherBundle> teachers = load_teachers_for(cfg, run.out_dir(), run);

  DistillOutcome outcome;
  if (cfg.baseline) {
    const TeacherBundle* donor = nullptr;
    for (const TeacherBundle& t : teachers)
      if (t.spec.modality == Modality::Transcript) donor = &t;
    if (!donor) throw ConfigError("baseline: transcript teacher checkpoint required");
    outcome = run_student_baseline(view.corpus, donor->encoder, dcfg);
  } else {
    outcome = run_distillation(view.corpus, teachers, dcfg);
  }

  fs::create_directories(run.out_dir());
  const fs::path student_path = run.out_dir() / "student.ckpt";
  save_student(student_path, outcome.model.student, outcome.model.student_head);
  run.add_output(student_path);
  if (!cfg.baseline) {
    save_checkpoint(run.out_dir() / "projections.ckpt", {{"kind", "projections"}},
                    outcome.model.bank.parameters(outcome.model.teachers));
    std::vector<NamedParam> head_params;
    for (std::size_t t = 0; t < outcome.model.replaced_heads.size(); ++t)
      head_params.push_back(
          {"replaced_head." + to_string(outcome.model.teachers[t].spec.modality),
           outcome.model.replaced_heads[t], true});
    save_checkpoint(run.out_dir() / "heads.ckpt", {{"kind", "replaced_heads"}},
                    head_params);
    run.add_output(run.out_dir() / "projections.ckpt");
    run.add_output(run.out_dir() / "heads.ckpt");
  }
  write_history_csv(run.out_dir() / "loss_history.csv", outcome.history);
  run.add_output(run.out_dir() / "loss_history.csv");

  if (!outcome.history.empty()) {
    const EpochStats& last = outcome.history.back();
    info() << (cfg.baseline ? "baseline" : "distillation") << " finished: ";
    for (const auto& [name, value] : last.losses) info() << name << "=" << value << " ";
    info() << "train_acc=" << last.train_metric << "\n";
  }
  return kExitOk;
}

int cmd_evaluate(CommandRun& run, const std::string& checkpoint_flag) {
  RunConfigFile& cfg = run.config();
  ModeView view = load_mode_view(cfg);

  fs::path ckpt_path =
      checkpoint_flag.empty() ? cfg.eval_checkpoint : fs::path(checkpoint_flag);
  if (ckpt_path.empty()) ckpt_path = run.out_dir() / "student.ckpt";
  if (!fs::exists(ckpt_path))
    throw ConfigError("evaluate: checkpoint '" + ckpt_path.string() + "' not found");
  run.hash_input(ckpt_path);

  auto [student, head] = load_student(ckpt_path);
  if (student.config().vocab_size != view.corpus.transcript_vocab.size())
    throw ConfigError("evaluate: checkpoint vocab " +
                      std::to_string(student.config().vocab_size) +
                      " does not match corpus vocab " +
                      std::to_string(view.corpus.transcript_vocab.size()));

  const std::vector<Instance>& split =
      (cfg.eval_split == "train") ? view.corpus.train : view.corpus.test;
  EvalResult result = evaluate_student(student, head, split, cfg.eval_mode, cfg.pooling);

  fs::create_directories(run.out_dir());
  write_metrics_json(run.out_dir() / "metrics.json", result.report);
  write_confusion_csv(run.out_dir() / "confusion.csv", result.cm);
  run.add_output(run.out_dir() / "metrics.json");
  run.add_output(run.out_dir() / "confusion.csv");

  info() << "macro P/R/F1: " << result.report.macro_precision << " "
            << result.report.macro_recall << " " << result.report.macro_f1 << "\n";
  return kExitOk;
}

int cmd_ablate(CommandRun& run, const std::vector<std::string>& extra_subsets) {
  RunConfigFile& cfg = run.config();
  ModeView view = load_mode_view(cfg);

  std::vector<std::vector<Modality>> subsets = canonical_ablation_subsets();
  for (const std::string& spec : extra_subsets) {
    std::vector<Modality> subset;
    std::string token;
    std::istringstream ss(spec);
    while (std::getline(ss, token, ','))
      if (!token.empty()) subset.push_back(modality_from_string(token));
    if (subset.empty()) throw ConfigError("ablate: empty subset '" + spec + "'");
    subsets.push_back(std::move(subset));
  }

  DistillRunConfig dcfg;
  dcfg.train = cfg.distill_train;
  dcfg.pooling = cfg.pooling;
  dcfg.student_layers = cfg.student_layers;
  dcfg.num_classes = view.num_classes;

  cfg.teacher_subset = {Modality::Audio, Modality::Chat, Modality::Transcript};
  std::vector<TeacherBundle> teachers = load_teachers_for(cfg, run.out_dir(), run);

  std::vector<AblationArm> arms =
      run_ablation(subsets, view.corpus, teachers, dcfg, cfg.eval_mode);

  fs::create_directories(run.out_dir());
  write_ablation_csv(run.out_dir() / "ablation.csv", arms);
  run.add_output(run.out_dir() / "ablation.csv");
  info() << arms.size() << " ablation arms written to "
            << (run.out_dir() / "ablation.csv").string() << "\n";
  return kExitOk;
}

int cmd_verify(CommandRun& run) {
  const std::vector<CheckResult> results = run_verification();
  for (const CheckResult& r : results) {
    std::printf("[%s] %-68s measured %.3e tolerance %.3e%s\n",
                r.passed ? "PASS" : "FAIL", r.name.c_str(), r.measured, r.tolerance,
                r.note.empty() ? "" : (" (" + r.note + ")").c_str());
  }
  const bool ok = all_passed(results);
  std::printf("%zu checks, %s\n", results.size(), ok ? "all passed" : "FAILURES present");
  (void)run;
  return ok ? kExitOk : kExitVerify;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"multi-modal multi-teacher distillation for game event detection"};
  app.require_subcommand(1);
  app.fallthrough();

  CommonArgs common;
  app.add_option("--config", common.config_path, "run configuration JSON");
  app.add_option("--out", common.out_dir, "output directory");
  auto* seed_opt = app.add_option("--seed", common.seed, "seed override");
  app.add_option("-v,--verbosity", common.verbosity, "0 quiet, 1 normal");

  auto* gen = app.add_subcommand("gen-data", "generate the synthetic corpus");
  auto* seg = app.add_subcommand("segment", "segment raw streams into windows");
  std::string streams_dir;
  seg->add_option("--streams", streams_dir, "directory with stream files")->required();
  auto* teach = app.add_subcommand("train-teacher", "fine-tune one modality teacher");
  std::string modality;
  teach->add_option("--modality", modality, "audio|chat|transcript")->required();
  auto* dis = app.add_subcommand("distill", "distill the student from teachers");
  auto* eva = app.add_subcommand("evaluate", "evaluate a student checkpoint");
  std::string ckpt_flag;
  eva->add_option("--checkpoint", ckpt_flag, "student checkpoint path");
  auto* abl = app.add_subcommand("ablate", "run the teacher-combination table");
  std::vector<std::string> extra_subsets;
  abl->add_option("--subset", extra_subsets,
                  "extra comma-separated subset (repeatable)");
  auto* ver = app.add_subcommand("verify", "run the self-check suite");

  CLI11_PARSE(app, argc, argv);
  common.seed_set = seed_opt->count() > 0;
  g_verbosity = common.verbosity;

  // verify and segment run without a config; everything else needs one
  if (common.config_path.empty() && (gen->parsed() || teach->parsed() || dis->parsed() ||
                                     eva->parsed() || abl->parsed())) {
    std::cerr << "E_CONFIG\n--config is required for this command\n";
    return kExitConfig;
  }

  std::string name = gen->parsed()     ? "gen-data"
                     : seg->parsed()   ? "segment"
                     : teach->parsed() ? "train-teacher"
                     : dis->parsed()   ? "distill"
                     : eva->parsed()   ? "evaluate"
                     : abl->parsed()   ? "ablate"
                                       : "verify";

  int status = kExitOk;
  try {
    CommandRun run(name, common);
    try {
      if (gen->parsed()) status = cmd_gen_data(run);
      else if (seg->parsed()) status = cmd_segment(run, streams_dir);
      else if (teach->parsed()) status = cmd_train_teacher(run, modality);
      else if (dis->parsed()) status = cmd_distill(run);
      else if (eva->parsed()) status = cmd_evaluate(run, ckpt_flag);
      else if (abl->parsed()) status = cmd_ablate(run, extra_subsets);
      else if (ver->parsed()) status = cmd_verify(run);
      run.finish(status);
    } catch (const std::exception& e) {
      status = map_error(e);
      run.finish(status);
    }
  } catch (const std::exception& e) {
    // config parsing/record bootstrap failed
    status = map_error(e);
  }
  return status;
}
