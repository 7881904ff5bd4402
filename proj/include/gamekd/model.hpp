#pragma once

#include <span>
#include <string>
#include <vector>

#include "gamekd/rng.hpp"
#include "gamekd/tensor.hpp"

namespace gamekd {

enum class Pooling { Mean, FirstToken };

std::string to_string(Pooling p);
Pooling pooling_from_string(const std::string& s);

// Reduces one layer of hidden states [seq x d] to a [d] vector.
Tensor pool(const Tensor& stack_layer, Pooling strategy);

struct EncoderConfig {
  int num_layers = 4;
  int hidden_dim = 32;
  int num_heads = 2;
  int ffn_dim = 64;
  int max_seq_len = 64;
  double dropout = 0.1;

  // Token front-end (chat/transcript/student) when vocab_size > 0.
  int vocab_size = 0;
  // Patch front-end (audio) when mel_bins > 0: non-overlapping
  // patch_frames x patch_mels patches of the frame/mel matrix.
  int mel_bins = 0;
  int patch_frames = 0;
  int patch_mels = 0;

  bool token_input() const { return vocab_size > 0; }
  bool patch_input() const { return mel_bins > 0; }
  void validate() const; // throws ConfigError
};

struct NamedParam {
  std::string name;
  Tensor tensor;
  bool decay = false; // weight decay applies to matrices only
};

// Per-layer hidden states H_1..H_L, each [seq x hidden_dim].
using HiddenStack = std::vector<Tensor>;

// Bidirectional transformer encoder (post-LN blocks, learned positions,
// GELU feed-forward) exposing every layer's hidden states. Copies share
// parameters; `clone_trainable` makes an independent copy.
class EncoderModel {
public:
  EncoderModel() = default;
  static EncoderModel init(const EncoderConfig& cfg, Rng& rng);

  const EncoderConfig& config() const { return cfg_; }

  // Token-variant forward. `dropout_rng` is required in train mode when the
  // configured dropout is non-zero.
  HiddenStack encode(std::span<const int> token_ids, bool train_mode,
                     Rng* dropout_rng = nullptr) const;

  // Patch-variant forward over a frames x mels matrix (row-major). Partial
  // trailing frame blocks are zero-padded to a full patch grid.
  HiddenStack encode(int frames, int mels, std::span<const double> audio,
                     bool train_mode, Rng* dropout_rng = nullptr) const;

  std::vector<NamedParam> parameters() const;
  void freeze();
  bool frozen() const { return frozen_; }

  EncoderModel clone_trainable() const;

  // Loads parameter values by dotted name; shapes must match exactly.
  void load_parameters(const std::vector<NamedParam>& params);

  int patch_count(int frames) const;

private:
  struct LayerParams {
    Tensor wq, bq, wk, wv, bv, wo, bo;
    Tensor ln1_gain, ln1_bias;
    Tensor ffn_w1, ffn_b1, ffn_w2, ffn_b2;
    Tensor ln2_gain, ln2_bias;
  };

  HiddenStack run_layers(Tensor x, bool train_mode, Rng* dropout_rng) const;
  Tensor attention(const Tensor& x, const LayerParams& lp) const;
  Tensor dropout_mask(const Tensor& x, bool train_mode, Rng* rng) const;

  EncoderConfig cfg_;
  Tensor tok_embed_;                // [vocab x d]
  Tensor patch_proj_, patch_bias_;  // [pf*pm x d], [d]
  Tensor pos_embed_;                // [max_seq x d]
  Tensor emb_ln_gain_, emb_ln_bias_;
  std::vector<LayerParams> layers_;
  bool frozen_ = false;
};

// Builds an M-layer student whose embedding front-end and first M layers
// copy the donor's parameters. The student is trainable regardless of the
// donor's frozen state.
EncoderModel init_student_from(const EncoderModel& donor, int M);

// As above but validating a requested configuration against the donor
// (hidden_dim/vocab/head counts must agree).
EncoderModel init_student_from(const EncoderModel& donor, const EncoderConfig& want);

} // namespace gamekd
