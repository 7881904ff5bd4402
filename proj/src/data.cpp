#include "gamekd/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "gamekd/errors.hpp"

namespace gamekd {

using nlohmann::json;

std::string to_string(EventLabel l) {
  switch (l) {
    case EventLabel::KILL: return "KILL";
    case EventLabel::DRAGON: return "DRAGON";
    case EventLabel::TOWER: return "TOWER";
    case EventLabel::OTHER: return "OTHER";
  }
  throw InputError("unknown label enum value");
}

EventLabel label_from_string(const std::string& s) {
  if (s == "KILL") return EventLabel::KILL;
  if (s == "DRAGON") return EventLabel::DRAGON;
  if (s == "TOWER") return EventLabel::TOWER;
  if (s == "OTHER") return EventLabel::OTHER;
  throw DataError("unknown event label '" + s + "'");
}

void Instance::validate() const {
  if (window_start_s >= window_end_s)
    throw DataError("instance " + id + ": window start must precede end");
  if (transcript_tokens.empty() || chat_tokens.empty())
    throw DataError("instance " + id + ": modalities must be non-empty");
  if (transcript_tags.size() != transcript_tokens.size())
    throw DataError("instance " + id + ": transcript tags length " +
                    std::to_string(transcript_tags.size()) + " does not match tokens " +
                    std::to_string(transcript_tokens.size()));
  if (chat_tags.size() != chat_tokens.size())
    throw DataError("instance " + id + ": chat tags length " +
                    std::to_string(chat_tags.size()) + " does not match tokens " +
                    std::to_string(chat_tokens.size()));
  if (audio.frames < 1 || audio.mels < 1)
    throw DataError("instance " + id + ": audio window must be non-empty");
  if (audio.values.size() != static_cast<std::size_t>(audio.frames) * audio.mels)
    throw DataError("instance " + id + ": audio payload size mismatch");
  for (int t : transcript_tokens)
    if (t < 0) throw DataError("instance " + id + ": negative transcript token id");
  for (int t : chat_tokens)
    if (t < 0) throw DataError("instance " + id + ": negative chat token id");
}

// ---- segmentation -----------------------------------------------------------

std::vector<Instance> segment(const std::vector<TranscriptWindow>& transcript_windows,
                              const std::vector<ChatMessage>& chat_log,
                              const AudioStream& audio, const EventLog& events) {
  if (audio.frame_rate <= 0.0) throw InputError("segment: frame_rate must be positive");
  if (audio.mels < 1) throw InputError("segment: audio stream must declare mel bins");
  if (audio.values.size() != static_cast<std::size_t>(audio.frame_count) * audio.mels)
    throw InputError("segment: audio stream payload size mismatch");
  for (std::size_t i = 0; i < transcript_windows.size(); ++i) {
    const auto& w = transcript_windows[i];
    if (w.start_s >= w.end_s)
      throw InputError("segment: window " + std::to_string(i) + " is empty or inverted");
    if (!w.tags.empty() && w.tags.size() != w.tokens.size())
      throw InputError("segment: window " + std::to_string(i) + " tag/token length mismatch");
    if (i > 0 && transcript_windows[i - 1].end_s > w.start_s)
      throw InputError("segment: windows " + std::to_string(i - 1) + " and " +
                       std::to_string(i) + " overlap or are unsorted");
  }
  for (std::size_t i = 0; i < events.size(); ++i) {
    if (events[i].event == EventLabel::OTHER)
      throw InputError("segment: event log entries must be KILL, DRAGON or TOWER");
    if (i > 0 && events[i].t_s < events[i - 1].t_s)
      throw InputError("segment: event timestamps must be non-decreasing");
  }
  for (const ChatMessage& m : chat_log)
    if (!m.tags.empty() && m.tags.size() != m.tokens.size())
      throw InputError("segment: chat message tag/token length mismatch");

  std::vector<Instance> out;
  out.reserve(transcript_windows.size());
  for (std::size_t i = 0; i < transcript_windows.size(); ++i) {
    const auto& w = transcript_windows[i];
    Instance inst;
    {
      std::ostringstream id;
      id << "window-" << i;
      inst.id = id.str();
    }
    inst.window_start_s = w.start_s;
    inst.window_end_s = w.end_s;

    inst.transcript_tokens = w.tokens;
    inst.transcript_tags = w.tags.empty()
                               ? std::vector<int>(w.tokens.size(), 0)
                               : w.tags;
    if (inst.transcript_tokens.empty()) {
      inst.transcript_tokens = {kPadToken};
      inst.transcript_tags = {0};
    }

    for (const ChatMessage& m : chat_log) {
      if (m.t_s >= w.start_s && m.t_s < w.end_s) {
        inst.chat_tokens.insert(inst.chat_tokens.end(), m.tokens.begin(), m.tokens.end());
        if (m.tags.empty())
          inst.chat_tags.insert(inst.chat_tags.end(), m.tokens.size(), 0);
        else
          inst.chat_tags.insert(inst.chat_tags.end(), m.tags.begin(), m.tags.end());
      }
    }
    if (inst.chat_tokens.empty()) {
      inst.chat_tokens = {kPadToken};
      inst.chat_tags = {0};
    }

    inst.audio.mels = audio.mels;
    for (int f = 0; f < audio.frame_count; ++f) {
      const double t = f / audio.frame_rate;
      if (t >= w.start_s && t < w.end_s) {
        inst.audio.values.insert(inst.audio.values.end(),
                                 audio.values.begin() + static_cast<std::size_t>(f) * audio.mels,
                                 audio.values.begin() + static_cast<std::size_t>(f + 1) * audio.mels);
        ++inst.audio.frames;
      }
    }
    if (inst.audio.frames == 0) {
      inst.audio.frames = 1;
      inst.audio.values.assign(static_cast<std::size_t>(audio.mels), 0.0);
    }

    inst.label = EventLabel::OTHER;
    for (const TimedEvent& e : events) {
      if (e.t_s >= w.start_s && e.t_s < w.end_s) {
        inst.label = e.event;
        break; // first event inside the window wins
      }
    }

    inst.validate();
    out.push_back(std::move(inst));
  }
  return out;
}

// ---- vocabularies ------------------------------------------------------------

int Vocab::id_of(const std::string& s) const {
  for (std::size_t i = 0; i < symbols.size(); ++i)
    if (symbols[i] == s) return static_cast<int>(i);
  throw DataError("vocab: unknown symbol '" + s + "'");
}

Vocab load_vocab(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw DataError("vocab: cannot open '" + path.string() + "'");
  Vocab v;
  std::string line;
  while (std::getline(is, line)) v.symbols.push_back(line);
  return v;
}

void save_vocab(const std::filesystem::path& path, const Vocab& v) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw DataError("vocab: cannot write '" + path.string() + "'");
  for (const std::string& s : v.symbols) os << s << '\n';
}

namespace {

const std::vector<std::string> kTranscriptFiller = {
    "the",  "and",  "a",    "to",   "of",   "in",   "on",     "for",  "with", "they",
    "team", "mid",  "bot",  "top",  "lane", "gold", "map",    "wave", "farm", "vision",
    "back", "play", "game", "look", "now",  "big",  "buy",    "into", "one",  "two"};
const std::vector<std::string> kKillTranscript = {"slain", "kill", "doublekill",
                                                  "shutdown", "ace"};
const std::vector<std::string> kDragonTranscript = {"dragon", "drake", "infernal",
                                                    "soul"};
const std::vector<std::string> kTowerTranscript = {"turret", "tower", "plates",
                                                   "destroyed"};

const std::vector<std::string> kChatFiller = {
    "lol",    "wow",  "nice", "game", "chat",  "team", "uh",   "hello",
    "stream", "clip", "mods", "today", "what", "ok",   "good"};
const std::vector<std::string> kKillChat = {"pog",    "pogchamp", "omegalul",
                                            "letsgo", "cracked",  "insane"};
const std::vector<std::string> kDragonChat = {"drakepog", "soon", "objective"};
const std::vector<std::string> kTowerChat = {"ez", "gg", "demolished", "rip"};

Vocab build_transcript_vocab() {
  Vocab v;
  v.symbols.push_back("<pad>");
  for (const auto& s : kTranscriptFiller) v.symbols.push_back(s);
  for (const auto& s : kKillTranscript) v.symbols.push_back(s);
  for (const auto& s : kDragonTranscript) v.symbols.push_back(s);
  for (const auto& s : kTowerTranscript) v.symbols.push_back(s);
  return v;
}

Vocab build_chat_vocab() {
  Vocab v;
  v.symbols.push_back("<pad>");
  for (const auto& s : kChatFiller) v.symbols.push_back(s);
  for (const auto& s : kKillChat) v.symbols.push_back(s);
  for (const auto& s : kDragonChat) v.symbols.push_back(s);
  for (const auto& s : kTowerChat) v.symbols.push_back(s);
  return v;
}

Vocab build_transcript_tags() {
  return Vocab{{"O", "ENT-KILL", "ENT-DRAGON", "ENT-TOWER"}};
}

Vocab build_chat_tags() { return Vocab{{"O", "EMO-HYPE", "EMO-DRAKE", "EMO-GG"}}; }

// Tag id planted for a label's motif tokens; matches the tag vocab order.
int tag_for_label(EventLabel l) {
  switch (l) {
    case EventLabel::KILL: return 1;
    case EventLabel::DRAGON: return 2;
    case EventLabel::TOWER: return 3;
    default: return 0;
  }
}

struct MotifIds {
  std::vector<int> kill, dragon, tower;
  const std::vector<int>& of(EventLabel l) const {
    switch (l) {
      case EventLabel::KILL: return kill;
      case EventLabel::DRAGON: return dragon;
      case EventLabel::TOWER: return tower;
      default: throw InputError("no motif for OTHER");
    }
  }
};

MotifIds motif_ids(const Vocab& v, const std::vector<std::string>& kill,
                   const std::vector<std::string>& dragon,
                   const std::vector<std::string>& tower) {
  MotifIds m;
  for (const auto& s : kill) m.kill.push_back(v.id_of(s));
  for (const auto& s : dragon) m.dragon.push_back(v.id_of(s));
  for (const auto& s : tower) m.tower.push_back(v.id_of(s));
  return m;
}

double signal_rate(const DifficultyKnobs& k, EventLabel label, int modality) {
  // modality: 0 transcript, 1 chat, 2 audio
  switch (label) {
    case EventLabel::KILL:
      return modality == 0 ? k.kill_transcript : modality == 1 ? k.kill_chat : k.kill_audio;
    case EventLabel::DRAGON:
      return modality == 0 ? k.dragon_transcript
                           : modality == 1 ? k.dragon_chat : k.dragon_audio;
    case EventLabel::TOWER:
      return modality == 0 ? k.tower_transcript
                           : modality == 1 ? k.tower_chat : k.tower_audio;
    default:
      return 0.0;
  }
}

EventLabel random_signal_label(Rng& rng) {
  switch (rng.uniform_int(3)) {
    case 0: return EventLabel::KILL;
    case 1: return EventLabel::DRAGON;
    default: return EventLabel::TOWER;
  }
}

// Adds the label's spectrogram motif to one window's frames.
void apply_audio_motif(std::vector<double>& values, int frame0, int frames, int mels,
                       EventLabel label, Rng& rng) {
  auto cell = [&](int f, int m) -> double& {
    return values[static_cast<std::size_t>(frame0 + f) * mels + m];
  };
  switch (label) {
    case EventLabel::TOWER: // narrow mid-band ridge
      for (int f = 2; f < std::min(6, frames); ++f)
        for (int m = 2; m < std::min(6, mels); ++m)
          cell(f, m) += 1.6 + rng.normal(0.0, 0.1);
      break;
    case EventLabel::KILL: // broadband crowd burst
      for (int f = 1; f < std::min(7, frames); ++f)
        for (int m = 0; m < mels; ++m) cell(f, m) += 0.7 + rng.normal(0.0, 0.05);
      break;
    case EventLabel::DRAGON: // low-band hum across the window
      for (int f = 0; f < frames; ++f)
        for (int m = 0; m < std::min(2, mels); ++m)
          cell(f, m) += 1.1 + rng.normal(0.0, 0.05);
      break;
    default:
      break;
  }
}

} // namespace

// ---- synthetic generation ------------------------------------------------------

Corpus generate_synthetic(const GenConfig& cfg, const std::filesystem::path& out_dir) {
  double prob_sum = 0.0;
  for (double p : cfg.label_probs) prob_sum += p;
  if (std::abs(prob_sum - 1.0) > 1e-9)
    throw ConfigError("generate_synthetic: label_probs sum to " +
                      std::to_string(prob_sum) + ", expected 1");
  if (cfg.n_train < 0 || cfg.n_test < 0)
    throw ConfigError("generate_synthetic: negative instance count");

  Corpus corpus;
  corpus.transcript_vocab = build_transcript_vocab();
  corpus.chat_vocab = build_chat_vocab();
  corpus.transcript_tags = build_transcript_tags();
  corpus.chat_tags = build_chat_tags();

  const MotifIds t_motifs = motif_ids(corpus.transcript_vocab, kKillTranscript,
                                      kDragonTranscript, kTowerTranscript);
  const MotifIds c_motifs =
      motif_ids(corpus.chat_vocab, kKillChat, kDragonChat, kTowerChat);
  std::vector<int> t_filler, c_filler;
  for (const auto& s : kTranscriptFiller)
    t_filler.push_back(corpus.transcript_vocab.id_of(s));
  for (const auto& s : kChatFiller) c_filler.push_back(corpus.chat_vocab.id_of(s));

  const long total = cfg.n_train + cfg.n_test;
  const double W = cfg.window_seconds;
  const int frames_per_window =
      std::max(1, static_cast<int>(std::llround(W * cfg.frame_rate)));

  Rng label_rng(Rng::derive(cfg.seed, "labels"));
  Rng text_rng(Rng::derive(cfg.seed, "text"));
  Rng audio_rng(Rng::derive(cfg.seed, "audio"));

  StreamBundle streams;
  streams.audio.frame_rate = cfg.frame_rate;
  streams.audio.mels = cfg.mel_bins;
  streams.audio.frame_count = static_cast<int>(total) * frames_per_window;
  streams.audio.values.resize(static_cast<std::size_t>(streams.audio.frame_count) *
                              cfg.mel_bins);
  for (double& v : streams.audio.values) v = audio_rng.normal(0.0, cfg.difficulty.audio_noise);

  const std::vector<double> probs(cfg.label_probs.begin(), cfg.label_probs.end());

  for (long i = 0; i < total; ++i) {
    const double start = i * W, end = (i + 1) * W;
    const EventLabel label = kAllLabels[label_rng.categorical(probs)];
    if (label != EventLabel::OTHER)
      streams.events.push_back({start + label_rng.uniform() * W, label});

    // transcript
    TranscriptWindow tw;
    tw.start_s = start;
    tw.end_s = end;
    const int n_tok = 6 + static_cast<int>(text_rng.uniform_int(7));
    for (int t = 0; t < n_tok; ++t) {
      tw.tokens.push_back(t_filler[text_rng.uniform_int(t_filler.size())]);
      tw.tags.push_back(0);
    }
    auto plant_transcript = [&](EventLabel motif) {
      const auto& ids = t_motifs.of(motif);
      const int count = 1 + static_cast<int>(text_rng.uniform_int(3));
      for (int c = 0; c < count; ++c) {
        const std::size_t pos = text_rng.uniform_int(tw.tokens.size());
        tw.tokens[pos] = ids[text_rng.uniform_int(ids.size())];
        tw.tags[pos] = tag_for_label(motif);
      }
    };
    if (label != EventLabel::OTHER &&
        text_rng.bernoulli(signal_rate(cfg.difficulty, label, 0)))
      plant_transcript(label);
    if (text_rng.bernoulli(cfg.difficulty.false_signal))
      plant_transcript(random_signal_label(text_rng));
    streams.transcript_windows.push_back(std::move(tw));

    // chat
    const int n_msgs = 1 + static_cast<int>(text_rng.uniform_int(4));
    std::vector<ChatMessage> msgs(n_msgs);
    for (ChatMessage& m : msgs) {
      m.t_s = start + text_rng.uniform() * W;
      const int len = 2 + static_cast<int>(text_rng.uniform_int(5));
      for (int t = 0; t < len; ++t) {
        m.tokens.push_back(c_filler[text_rng.uniform_int(c_filler.size())]);
        m.tags.push_back(0);
      }
    }
    auto plant_chat = [&](EventLabel motif) {
      const auto& ids = c_motifs.of(motif);
      const int count = 2 + static_cast<int>(text_rng.uniform_int(3));
      for (int c = 0; c < count; ++c) {
        ChatMessage& m = msgs[text_rng.uniform_int(msgs.size())];
        const std::size_t pos = text_rng.uniform_int(m.tokens.size());
        m.tokens[pos] = ids[text_rng.uniform_int(ids.size())];
        m.tags[pos] = tag_for_label(motif);
      }
    };
    if (label != EventLabel::OTHER &&
        text_rng.bernoulli(signal_rate(cfg.difficulty, label, 1)))
      plant_chat(label);
    if (text_rng.bernoulli(cfg.difficulty.false_signal))
      plant_chat(random_signal_label(text_rng));
    std::sort(msgs.begin(), msgs.end(),
              [](const ChatMessage& a, const ChatMessage& b) { return a.t_s < b.t_s; });
    for (ChatMessage& m : msgs) streams.chat_log.push_back(std::move(m));

    // audio motifs
    if (label != EventLabel::OTHER &&
        audio_rng.bernoulli(signal_rate(cfg.difficulty, label, 2)))
      apply_audio_motif(streams.audio.values, static_cast<int>(i) * frames_per_window,
                        frames_per_window, cfg.mel_bins, label, audio_rng);
    if (audio_rng.bernoulli(cfg.difficulty.false_signal))
      apply_audio_motif(streams.audio.values, static_cast<int>(i) * frames_per_window,
                        frames_per_window, cfg.mel_bins, random_signal_label(audio_rng),
                        audio_rng);
  }

  std::vector<Instance> all = segment(streams.transcript_windows, streams.chat_log,
                                      streams.audio, streams.events);

  CorpusManifest& mf = corpus.manifest;
  mf.seed = cfg.seed;
  mf.transcript_vocab_size = corpus.transcript_vocab.size();
  mf.chat_vocab_size = corpus.chat_vocab.size();
  mf.transcript_tag_count = corpus.transcript_tags.size();
  mf.chat_tag_count = corpus.chat_tags.size();
  mf.window_count = total;
  mf.window_seconds = W;

  for (long i = 0; i < total; ++i) {
    Instance& inst = all[static_cast<std::size_t>(i)];
    std::ostringstream id;
    const bool is_train = i < cfg.n_train;
    id << (is_train ? "train-" : "test-") << (is_train ? i : i - cfg.n_train);
    inst.id = id.str();
    if (is_train) {
      mf.train_counts[static_cast<int>(inst.label)]++;
      corpus.train.push_back(std::move(inst));
    } else {
      mf.test_counts[static_cast<int>(inst.label)]++;
      corpus.test.push_back(std::move(inst));
    }
  }

  std::filesystem::create_directories(out_dir);
  save_corpus(out_dir / "train.jsonl", corpus.train);
  save_corpus(out_dir / "test.jsonl", corpus.test);
  save_vocab(out_dir / "vocab_transcript.txt", corpus.transcript_vocab);
  save_vocab(out_dir / "vocab_chat.txt", corpus.chat_vocab);
  save_vocab(out_dir / "tags_transcript.txt", corpus.transcript_tags);
  save_vocab(out_dir / "tags_chat.txt", corpus.chat_tags);
  save_manifest(out_dir / "manifest.json", mf);
  return corpus;
}

// ---- corpus I/O ---------------------------------------------------------------

namespace {

json instance_to_json(const Instance& inst) {
  json audio_rows = json::array();
  for (int f = 0; f < inst.audio.frames; ++f) {
    json row = json::array();
    for (int m = 0; m < inst.audio.mels; ++m) row.push_back(inst.audio.at(f, m));
    audio_rows.push_back(std::move(row));
  }
  return {{"id", inst.id},
          {"window_start_s", inst.window_start_s},
          {"window_end_s", inst.window_end_s},
          {"label", to_string(inst.label)},
          {"transcript_tokens", inst.transcript_tokens},
          {"transcript_tags", inst.transcript_tags},
          {"chat_tokens", inst.chat_tokens},
          {"chat_tags", inst.chat_tags},
          {"audio", std::move(audio_rows)}};
}

Instance instance_from_json(const json& j) {
  Instance inst;
  inst.id = j.at("id").get<std::string>();
  inst.window_start_s = j.at("window_start_s").get<double>();
  inst.window_end_s = j.at("window_end_s").get<double>();
  inst.label = label_from_string(j.at("label").get<std::string>());
  inst.transcript_tokens = j.at("transcript_tokens").get<std::vector<int>>();
  inst.transcript_tags = j.at("transcript_tags").get<std::vector<int>>();
  inst.chat_tokens = j.at("chat_tokens").get<std::vector<int>>();
  inst.chat_tags = j.at("chat_tags").get<std::vector<int>>();
  const json& audio = j.at("audio");
  inst.audio.frames = static_cast<int>(audio.size());
  inst.audio.mels = inst.audio.frames > 0 ? static_cast<int>(audio.at(0).size()) : 0;
  for (const auto& row : audio) {
    if (static_cast<int>(row.size()) != inst.audio.mels)
      throw DataError("ragged audio rows");
    for (const auto& v : row) inst.audio.values.push_back(v.get<double>());
  }
  return inst;
}

} // namespace

void save_corpus(const std::filesystem::path& jsonl_path,
                 const std::vector<Instance>& instances) {
  std::ofstream os(jsonl_path, std::ios::trunc);
  if (!os) throw DataError("corpus: cannot write '" + jsonl_path.string() + "'");
  for (const Instance& inst : instances) os << instance_to_json(inst).dump() << '\n';
}

std::vector<Instance> load_corpus(const std::filesystem::path& jsonl_path) {
  std::ifstream is(jsonl_path);
  if (!is) throw DataError("corpus: cannot open '" + jsonl_path.string() + "'");
  std::vector<Instance> out;
  std::string line;
  long line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      Instance inst = instance_from_json(json::parse(line));
      inst.validate();
      out.push_back(std::move(inst));
    } catch (const json::exception& e) {
      throw DataError("corpus: line " + std::to_string(line_no) + " of '" +
                      jsonl_path.string() + "': " + e.what());
    } catch (const DataError& e) {
      throw DataError("corpus: line " + std::to_string(line_no) + " of '" +
                      jsonl_path.string() + "': " + e.what());
    }
  }
  return out;
}

void save_manifest(const std::filesystem::path& path, const CorpusManifest& m) {
  json counts_train, counts_test;
  for (EventLabel l : kAllLabels) {
    counts_train[to_string(l)] = m.train_counts[static_cast<int>(l)];
    counts_test[to_string(l)] = m.test_counts[static_cast<int>(l)];
  }
  json j = {{"train_counts", counts_train},
            {"test_counts", counts_test},
            {"seed", m.seed},
            {"vocab_sizes",
             {{"transcript", m.transcript_vocab_size},
              {"chat", m.chat_vocab_size},
              {"transcript_tags", m.transcript_tag_count},
              {"chat_tags", m.chat_tag_count}}},
            {"window_stats",
             {{"count", m.window_count}, {"window_seconds", m.window_seconds}}}};
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw DataError("manifest: cannot write '" + path.string() + "'");
  os << j.dump(2) << '\n';
}

CorpusManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw DataError("manifest: cannot open '" + path.string() + "'");
  json j;
  try {
    is >> j;
  } catch (const json::exception& e) {
    throw DataError("manifest: parse error in '" + path.string() + "': " + e.what());
  }
  CorpusManifest m;
  for (EventLabel l : kAllLabels) {
    m.train_counts[static_cast<int>(l)] = j.at("train_counts").at(to_string(l)).get<long>();
    m.test_counts[static_cast<int>(l)] = j.at("test_counts").at(to_string(l)).get<long>();
  }
  m.seed = j.at("seed").get<std::uint64_t>();
  m.transcript_vocab_size = j.at("vocab_sizes").at("transcript").get<int>();
  m.chat_vocab_size = j.at("vocab_sizes").at("chat").get<int>();
  m.transcript_tag_count = j.at("vocab_sizes").at("transcript_tags").get<int>();
  m.chat_tag_count = j.at("vocab_sizes").at("chat_tags").get<int>();
  m.window_count = j.at("window_stats").at("count").get<long>();
  m.window_seconds = j.at("window_stats").at("window_seconds").get<double>();
  return m;
}

void save_streams(const std::filesystem::path& dir, const StreamBundle& s) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream os(dir / "transcript.jsonl", std::ios::trunc);
    for (const TranscriptWindow& w : s.transcript_windows)
      os << json{{"start_s", w.start_s},
                 {"end_s", w.end_s},
                 {"tokens", w.tokens},
                 {"tags", w.tags}}
                .dump()
         << '\n';
  }
  {
    std::ofstream os(dir / "chat.jsonl", std::ios::trunc);
    for (const ChatMessage& m : s.chat_log)
      os << json{{"t_s", m.t_s}, {"tokens", m.tokens}, {"tags", m.tags}}.dump() << '\n';
  }
  {
    std::ofstream os(dir / "events.jsonl", std::ios::trunc);
    for (const TimedEvent& e : s.events)
      os << json{{"t_s", e.t_s}, {"event", to_string(e.event)}}.dump() << '\n';
  }
  {
    json rows = json::array();
    for (int f = 0; f < s.audio.frame_count; ++f) {
      json row = json::array();
      for (int m = 0; m < s.audio.mels; ++m)
        row.push_back(s.audio.values[static_cast<std::size_t>(f) * s.audio.mels + m]);
      rows.push_back(std::move(row));
    }
    std::ofstream os(dir / "audio.json", std::ios::trunc);
    os << json{{"frame_rate", s.audio.frame_rate},
               {"mels", s.audio.mels},
               {"frames", std::move(rows)}}
              .dump()
       << '\n';
  }
}

namespace {

// Runs `parse` per JSONL line, rethrowing with the line number attached.
template <typename Fn>
void for_each_jsonl(const std::filesystem::path& path, Fn parse) {
  std::ifstream is(path);
  if (!is) throw DataError("streams: cannot open '" + path.string() + "'");
  std::string line;
  long line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      parse(json::parse(line));
    } catch (const json::exception& e) {
      throw DataError("streams: line " + std::to_string(line_no) + " of '" +
                      path.string() + "': " + e.what());
    }
  }
}

} // namespace

StreamBundle load_streams(const std::filesystem::path& dir) {
  StreamBundle s;
  for_each_jsonl(dir / "transcript.jsonl", [&](const json& j) {
    TranscriptWindow w;
    w.start_s = j.at("start_s").get<double>();
    w.end_s = j.at("end_s").get<double>();
    w.tokens = j.at("tokens").get<std::vector<int>>();
    w.tags = j.value("tags", std::vector<int>{});
    s.transcript_windows.push_back(std::move(w));
  });
  for_each_jsonl(dir / "chat.jsonl", [&](const json& j) {
    ChatMessage m;
    m.t_s = j.at("t_s").get<double>();
    m.tokens = j.at("tokens").get<std::vector<int>>();
    m.tags = j.value("tags", std::vector<int>{});
    s.chat_log.push_back(std::move(m));
  });
  for_each_jsonl(dir / "events.jsonl", [&](const json& j) {
    s.events.push_back(
        {j.at("t_s").get<double>(), label_from_string(j.at("event").get<std::string>())});
  });
  {
    std::ifstream is(dir / "audio.json");
    if (!is) throw DataError("streams: cannot open '" + (dir / "audio.json").string() + "'");
    json j;
    try {
      is >> j;
    } catch (const json::exception& e) {
      throw DataError("streams: audio.json parse error: " + std::string(e.what()));
    }
    s.audio.frame_rate = j.at("frame_rate").get<double>();
    s.audio.mels = j.at("mels").get<int>();
    for (const auto& row : j.at("frames")) {
      if (static_cast<int>(row.size()) != s.audio.mels)
        throw DataError("streams: ragged audio frame in audio.json");
      for (const auto& v : row) s.audio.values.push_back(v.get<double>());
      s.audio.frame_count++;
    }
  }
  return s;
}

Corpus load_corpus_dir(const std::filesystem::path& dir) {
  Corpus c;
  c.train = load_corpus(dir / "train.jsonl");
  c.test = load_corpus(dir / "test.jsonl");
  c.transcript_vocab = load_vocab(dir / "vocab_transcript.txt");
  c.chat_vocab = load_vocab(dir / "vocab_chat.txt");
  c.transcript_tags = load_vocab(dir / "tags_transcript.txt");
  c.chat_tags = load_vocab(dir / "tags_chat.txt");
  c.manifest = load_manifest(dir / "manifest.json");
  return c;
}

} // namespace gamekd
