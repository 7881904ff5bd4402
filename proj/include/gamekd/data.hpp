#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "gamekd/rng.hpp"

namespace gamekd {

enum class EventLabel { KILL, DRAGON, TOWER, OTHER };
constexpr int kNumLabels = 4;
constexpr std::array<EventLabel, 4> kAllLabels = {
    EventLabel::KILL, EventLabel::DRAGON, EventLabel::TOWER, EventLabel::OTHER};

std::string to_string(EventLabel l);
EventLabel label_from_string(const std::string& s);

// Reserved padding id shared by every token vocabulary; windows with an
// empty modality carry a single PAD token (or one zero audio frame).
constexpr int kPadToken = 0;

struct AudioWindow {
  int frames = 0;
  int mels = 0;
  std::vector<double> values; // row-major frames x mels

  double at(int f, int m) const { return values[static_cast<std::size_t>(f) * mels + m]; }
};

// One segmented window X_i with its event label Y_i.
struct Instance {
  std::string id;
  double window_start_s = 0.0;
  double window_end_s = 0.0;
  EventLabel label = EventLabel::OTHER;
  std::vector<int> transcript_tokens;
  std::vector<int> transcript_tags;
  std::vector<int> chat_tokens;
  std::vector<int> chat_tags;
  AudioWindow audio;

  void validate() const; // throws DataError on invariant violations
};

struct TimedEvent {
  double t_s = 0.0;
  EventLabel event = EventLabel::KILL; // never OTHER
};
using EventLog = std::vector<TimedEvent>;

struct TranscriptWindow {
  double start_s = 0.0;
  double end_s = 0.0;
  std::vector<int> tokens;
  std::vector<int> tags; // optional; empty means all background ("O")
};

struct ChatMessage {
  double t_s = 0.0;
  std::vector<int> tokens;
  std::vector<int> tags; // optional
};

struct AudioStream {
  double frame_rate = 1.0; // frames per second; frame f spans t = f / frame_rate
  int mels = 0;
  int frame_count = 0;
  std::vector<double> values; // row-major frame_count x mels
};

// Splits all three modalities on the transcript windows (half-open
// [start, end) intervals). A chat message or audio frame belongs to the
// window containing its timestamp; the label is the first event inside the
// window, else OTHER. Empty modalities become a single PAD token / one zero
// audio frame.
std::vector<Instance> segment(const std::vector<TranscriptWindow>& transcript_windows,
                              const std::vector<ChatMessage>& chat_log,
                              const AudioStream& audio, const EventLog& events);

struct Vocab {
  std::vector<std::string> symbols; // line number == id
  int size() const { return static_cast<int>(symbols.size()); }
  int id_of(const std::string& s) const; // throws DataError if absent
};

Vocab load_vocab(const std::filesystem::path& path);
void save_vocab(const std::filesystem::path& path, const Vocab& v);

struct CorpusManifest {
  std::array<long, 4> train_counts{};
  std::array<long, 4> test_counts{};
  std::uint64_t seed = 0;
  int transcript_vocab_size = 0;
  int chat_vocab_size = 0;
  int transcript_tag_count = 0;
  int chat_tag_count = 0;
  long window_count = 0;
  double window_seconds = 0.0;
};

// Per-label, per-modality planted signal rates plus noise levels. The
// defaults make each modality uniquely good at one label (chat at KILL,
// audio at TOWER, transcript at DRAGON) and keep the transcript weak enough
// that a transcript-only student has headroom below the data ceiling.
struct DifficultyKnobs {
  double kill_transcript = 0.60;
  double kill_chat = 0.95;
  double kill_audio = 0.55;
  double dragon_transcript = 0.80;
  double dragon_chat = 0.35;
  double dragon_audio = 0.50;
  double tower_transcript = 0.45;
  double tower_chat = 0.75;
  double tower_audio = 0.95;
  double false_signal = 0.08; // planted motif appearing under the wrong label
  double audio_noise = 0.25;  // stddev of background spectrogram noise
};

struct GenConfig {
  std::uint64_t seed = 1;
  long n_train = 5000;
  long n_test = 500;
  // Order: KILL, DRAGON, TOWER, OTHER. Must sum to 1 within 1e-9.
  std::array<double, 4> label_probs = {2647.0 / 26896.0, 1659.0 / 26896.0,
                                       1233.0 / 26896.0, 21357.0 / 26896.0};
  DifficultyKnobs difficulty;
  double window_seconds = 10.0;
  int mel_bins = 8;
  double frame_rate = 0.8; // 8 frames per 10 s window
};

struct Corpus {
  std::vector<Instance> train;
  std::vector<Instance> test;
  Vocab transcript_vocab;
  Vocab chat_vocab;
  Vocab transcript_tags;
  Vocab chat_tags;
  CorpusManifest manifest;
};

// Deterministically generates a synthetic corpus and writes train.jsonl,
// test.jsonl, the four vocab files, and manifest.json into out_dir.
Corpus generate_synthetic(const GenConfig& cfg, const std::filesystem::path& out_dir);

std::vector<Instance> load_corpus(const std::filesystem::path& jsonl_path);
void save_corpus(const std::filesystem::path& jsonl_path,
                 const std::vector<Instance>& instances);

Corpus load_corpus_dir(const std::filesystem::path& dir);
CorpusManifest load_manifest(const std::filesystem::path& path);
void save_manifest(const std::filesystem::path& path, const CorpusManifest& m);

// The raw stream bundle consumed by the segmentation command: transcript
// windows, timestamped chat, a continuous audio frame stream, and the match
// event log.
struct StreamBundle {
  std::vector<TranscriptWindow> transcript_windows;
  std::vector<ChatMessage> chat_log;
  AudioStream audio;
  EventLog events;
};

// Stream directory layout: transcript.jsonl, chat.jsonl, events.jsonl,
// audio.json.
StreamBundle load_streams(const std::filesystem::path& dir);
void save_streams(const std::filesystem::path& dir, const StreamBundle& s);

} // namespace gamekd
