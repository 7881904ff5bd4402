// Shared fixtures for the unit suites.
#pragma once

#include <filesystem>
#include <string>

#include "gamekd/data.hpp"
#include "gamekd/model.hpp"
#include "gamekd/teachers.hpp"

namespace gamekd::testing {

struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& tag) {
    path = std::filesystem::temp_directory_path() / ("gamekd_" + tag);
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
};

inline Corpus micro_corpus(long n_train, long n_test, std::uint64_t seed,
                           const std::string& tag) {
  GenConfig cfg;
  cfg.seed = seed;
  cfg.n_train = n_train;
  cfg.n_test = n_test;
  TempDir dir("corpus_" + tag);
  return generate_synthetic(cfg, dir.path);
}

inline EncoderConfig micro_token_config(int vocab, int layers = 2, int dim = 16) {
  EncoderConfig cfg;
  cfg.num_layers = layers;
  cfg.hidden_dim = dim;
  cfg.num_heads = 2;
  cfg.ffn_dim = 2 * dim;
  cfg.max_seq_len = 64;
  cfg.dropout = 0.1;
  cfg.vocab_size = vocab;
  return cfg;
}

inline EncoderConfig micro_audio_config(int mels, int layers = 2, int dim = 16) {
  EncoderConfig cfg = micro_token_config(1, layers, dim);
  cfg.vocab_size = 0;
  cfg.mel_bins = mels;
  cfg.patch_frames = 2;
  cfg.patch_mels = 2;
  return cfg;
}

inline TeacherSpec micro_teacher_spec(const Corpus& corpus, Modality m, int layers = 2,
                                      int dim = 16) {
  TeacherSpec spec;
  spec.modality = m;
  switch (m) {
    case Modality::Audio:
      spec.encoder = micro_audio_config(corpus.train.front().audio.mels, layers, dim);
      spec.num_classes = kNumLabels;
      break;
    case Modality::Chat:
      spec.encoder = micro_token_config(corpus.chat_vocab.size(), layers, dim);
      spec.num_classes = corpus.chat_tags.size();
      break;
    case Modality::Transcript:
      spec.encoder = micro_token_config(corpus.transcript_vocab.size(), layers, dim);
      spec.num_classes = corpus.transcript_tags.size();
      break;
  }
  return spec;
}

} // namespace gamekd::testing
