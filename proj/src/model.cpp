#include "gamekd/model.hpp"

#include <cmath>
#include <map>

#include "gamekd/errors.hpp"

namespace gamekd {

std::string to_string(Pooling p) {
  return p == Pooling::Mean ? "mean" : "first_token";
}

Pooling pooling_from_string(const std::string& s) {
  if (s == "mean") return Pooling::Mean;
  if (s == "first_token") return Pooling::FirstToken;
  throw ConfigError("unknown pooling strategy '" + s + "'");
}

Tensor pool(const Tensor& stack_layer, Pooling strategy) {
  return strategy == Pooling::Mean ? mean_rows(stack_layer)
                                   : take_row(stack_layer, 0);
}

void EncoderConfig::validate() const {
  if (num_layers < 1) throw ConfigError("encoder: num_layers must be >= 1");
  if (hidden_dim < 1) throw ConfigError("encoder: hidden_dim must be >= 1");
  if (num_heads < 1 || hidden_dim % num_heads != 0)
    throw ConfigError("encoder: num_heads must divide hidden_dim (" +
                      std::to_string(num_heads) + " vs " + std::to_string(hidden_dim) + ")");
  if (ffn_dim < 1) throw ConfigError("encoder: ffn_dim must be >= 1");
  if (max_seq_len < 1) throw ConfigError("encoder: max_seq_len must be >= 1");
  if (dropout < 0.0 || dropout >= 1.0)
    throw ConfigError("encoder: dropout must be in [0, 1)");
  if (token_input() == patch_input())
    throw ConfigError("encoder: exactly one of vocab_size/mel_bins must be set");
  if (patch_input()) {
    if (patch_frames < 1 || patch_mels < 1)
      throw ConfigError("encoder: patch geometry must be positive");
    if (mel_bins % patch_mels != 0)
      throw ConfigError("encoder: patch_mels must divide mel_bins");
  }
}

namespace {

Tensor xavier(int fan_in, int fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / (fan_in + fan_out));
  std::vector<double> v(static_cast<std::size_t>(fan_in) * fan_out);
  for (double& x : v) x = rng.uniform(-limit, limit);
  return Tensor::from({fan_in, fan_out}, std::move(v), true);
}

Tensor normal_matrix(int rows, int cols, double stddev, Rng& rng) {
  std::vector<double> v(static_cast<std::size_t>(rows) * cols);
  for (double& x : v) x = rng.normal(0.0, stddev);
  return Tensor::from({rows, cols}, std::move(v), true);
}

} // namespace

EncoderModel EncoderModel::init(const EncoderConfig& cfg, Rng& rng) {
  cfg.validate();
  EncoderModel m;
  m.cfg_ = cfg;
  const int d = cfg.hidden_dim;

  if (cfg.token_input()) {
    m.tok_embed_ = normal_matrix(cfg.vocab_size, d, 0.05, rng);
  } else {
    const int patch_elems = cfg.patch_frames * cfg.patch_mels;
    m.patch_proj_ = xavier(patch_elems, d, rng);
    m.patch_bias_ = Tensor::zeros({d}, true);
  }
  m.pos_embed_ = normal_matrix(cfg.max_seq_len, d, 0.02, rng);
  m.emb_ln_gain_ = Tensor::full({d}, 1.0, true);
  m.emb_ln_bias_ = Tensor::zeros({d}, true);

  m.layers_.resize(cfg.num_layers);
  for (auto& lp : m.layers_) {
    lp.wq = xavier(d, d, rng);
    lp.bq = Tensor::zeros({d}, true);
    lp.wk = xavier(d, d, rng);
    lp.wv = xavier(d, d, rng);
    lp.bv = Tensor::zeros({d}, true);
    lp.wo = xavier(d, d, rng);
    lp.bo = Tensor::zeros({d}, true);
    lp.ln1_gain = Tensor::full({d}, 1.0, true);
    lp.ln1_bias = Tensor::zeros({d}, true);
    lp.ffn_w1 = xavier(d, cfg.ffn_dim, rng);
    lp.ffn_b1 = Tensor::zeros({cfg.ffn_dim}, true);
    lp.ffn_w2 = xavier(cfg.ffn_dim, d, rng);
    lp.ffn_b2 = Tensor::zeros({d}, true);
    lp.ln2_gain = Tensor::full({d}, 1.0, true);
    lp.ln2_bias = Tensor::zeros({d}, true);
  }
  return m;
}

Tensor EncoderModel::dropout_mask(const Tensor& x, bool train_mode, Rng* rng) const {
  if (!train_mode || cfg_.dropout == 0.0) return x;
  if (!rng)
    throw InputError("encode: train mode with dropout requires an RNG");
  const double keep = 1.0 - cfg_.dropout;
  std::vector<double> mask(x.size());
  for (double& v : mask) v = rng->bernoulli(keep) ? 1.0 / keep : 0.0;
  return mul(x, Tensor::from(x.shape(), std::move(mask)));
}

Tensor EncoderModel::attention(const Tensor& x, const LayerParams& lp) const {
  const int d = cfg_.hidden_dim;
  const int heads = cfg_.num_heads;
  const int dh = d / heads;
  const double inv_scale = 1.0 / std::sqrt(static_cast<double>(dh));

  Tensor q = add_row(matmul(x, lp.wq), lp.bq);
  // no key bias: a per-row constant shift cancels in the softmax
  Tensor k = matmul(x, lp.wk);
  Tensor v = add_row(matmul(x, lp.wv), lp.bv);

  std::vector<Tensor> ctx;
  ctx.reserve(heads);
  for (int h = 0; h < heads; ++h) {
    Tensor qh = slice_cols(q, h * dh, dh);
    Tensor kh = slice_cols(k, h * dh, dh);
    Tensor vh = slice_cols(v, h * dh, dh);
    Tensor scores = scale(matmul(qh, transpose(kh)), inv_scale);
    ctx.push_back(matmul(softmax(scores), vh));
  }
  Tensor merged = heads == 1 ? ctx[0] : concat_cols(ctx);
  return add_row(matmul(merged, lp.wo), lp.bo);
}

HiddenStack EncoderModel::run_layers(Tensor x, bool train_mode, Rng* rng) const {
  x = layer_norm(x, emb_ln_gain_, emb_ln_bias_);
  x = dropout_mask(x, train_mode, rng);

  HiddenStack stack;
  stack.reserve(layers_.size());
  for (const LayerParams& lp : layers_) {
    Tensor attn = dropout_mask(attention(x, lp), train_mode, rng);
    x = layer_norm(add(x, attn), lp.ln1_gain, lp.ln1_bias);
    Tensor hidden = gelu(add_row(matmul(x, lp.ffn_w1), lp.ffn_b1));
    Tensor ffn = add_row(matmul(hidden, lp.ffn_w2), lp.ffn_b2);
    ffn = dropout_mask(ffn, train_mode, rng);
    x = layer_norm(add(x, ffn), lp.ln2_gain, lp.ln2_bias);
    stack.push_back(x);
  }
  return stack;
}

HiddenStack EncoderModel::encode(std::span<const int> token_ids, bool train_mode,
                                 Rng* dropout_rng) const {
  if (!cfg_.token_input())
    throw InputError("encode: token input on a patch-variant encoder");
  if (token_ids.empty()) throw InputError("encode: empty token sequence");
  const int s = static_cast<int>(token_ids.size());
  if (s > cfg_.max_seq_len)
    throw InputError("encode: sequence length " + std::to_string(s) +
                     " exceeds max_seq_len " + std::to_string(cfg_.max_seq_len));
  for (int id : token_ids)
    if (id < 0 || id >= cfg_.vocab_size)
      throw InputError("encode: token id " + std::to_string(id) +
                       " out of vocabulary (size " + std::to_string(cfg_.vocab_size) + ")");

  Tensor x = take_rows(tok_embed_, token_ids);
  x = add(x, slice_rows(pos_embed_, 0, s));
  return run_layers(std::move(x), train_mode, dropout_rng);
}

int EncoderModel::patch_count(int frames) const {
  const int grid_rows = (frames + cfg_.patch_frames - 1) / cfg_.patch_frames;
  const int grid_cols = cfg_.mel_bins / cfg_.patch_mels;
  return grid_rows * grid_cols;
}

HiddenStack EncoderModel::encode(int frames, int mels, std::span<const double> audio,
                                 bool train_mode, Rng* dropout_rng) const {
  if (!cfg_.patch_input())
    throw InputError("encode: patch input on a token-variant encoder");
  if (frames < 1) throw InputError("encode: empty audio window");
  if (mels != cfg_.mel_bins)
    throw InputError("encode: audio has " + std::to_string(mels) +
                     " mel bins, encoder expects " + std::to_string(cfg_.mel_bins));
  if (audio.size() != static_cast<std::size_t>(frames) * mels)
    throw InputError("encode: audio payload size mismatch");

  const int pf = cfg_.patch_frames, pm = cfg_.patch_mels;
  const int grid_rows = (frames + pf - 1) / pf;
  const int grid_cols = mels / pm;
  const int n_patches = grid_rows * grid_cols;
  if (n_patches > cfg_.max_seq_len)
    throw InputError("encode: " + std::to_string(n_patches) +
                     " patches exceed max_seq_len " + std::to_string(cfg_.max_seq_len));

  // Flatten non-overlapping patches row-major; missing frames read as zero.
  std::vector<double> patches(static_cast<std::size_t>(n_patches) * pf * pm, 0.0);
  for (int gr = 0; gr < grid_rows; ++gr)
    for (int gc = 0; gc < grid_cols; ++gc) {
      double* dst = &patches[static_cast<std::size_t>(gr * grid_cols + gc) * pf * pm];
      for (int fi = 0; fi < pf; ++fi) {
        const int frame = gr * pf + fi;
        if (frame >= frames) break;
        for (int mi = 0; mi < pm; ++mi)
          dst[fi * pm + mi] = audio[static_cast<std::size_t>(frame) * mels + gc * pm + mi];
      }
    }

  Tensor x = matmul(Tensor::from({n_patches, pf * pm}, std::move(patches)), patch_proj_);
  x = add_row(x, patch_bias_);
  x = add(x, slice_rows(pos_embed_, 0, n_patches));
  return run_layers(std::move(x), train_mode, dropout_rng);
}

std::vector<NamedParam> EncoderModel::parameters() const {
  std::vector<NamedParam> out;
  if (cfg_.token_input()) {
    out.push_back({"embed.tok", tok_embed_, true});
  } else {
    out.push_back({"embed.patch_proj", patch_proj_, true});
    out.push_back({"embed.patch_bias", patch_bias_, false});
  }
  out.push_back({"embed.pos", pos_embed_, true});
  out.push_back({"embed.ln.gain", emb_ln_gain_, false});
  out.push_back({"embed.ln.bias", emb_ln_bias_, false});
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const std::string p = "layers." + std::to_string(i) + ".";
    const LayerParams& lp = layers_[i];
    out.push_back({p + "attn.wq", lp.wq, true});
    out.push_back({p + "attn.bq", lp.bq, false});
    out.push_back({p + "attn.wk", lp.wk, true});
    out.push_back({p + "attn.wv", lp.wv, true});
    out.push_back({p + "attn.bv", lp.bv, false});
    out.push_back({p + "attn.wo", lp.wo, true});
    out.push_back({p + "attn.bo", lp.bo, false});
    out.push_back({p + "ln1.gain", lp.ln1_gain, false});
    out.push_back({p + "ln1.bias", lp.ln1_bias, false});
    out.push_back({p + "ffn.w1", lp.ffn_w1, true});
    out.push_back({p + "ffn.b1", lp.ffn_b1, false});
    out.push_back({p + "ffn.w2", lp.ffn_w2, true});
    out.push_back({p + "ffn.b2", lp.ffn_b2, false});
    out.push_back({p + "ln2.gain", lp.ln2_gain, false});
    out.push_back({p + "ln2.bias", lp.ln2_bias, false});
  }
  return out;
}

void EncoderModel::freeze() {
  for (NamedParam& p : parameters()) p.tensor.set_requires_grad(false);
  frozen_ = true;
}

EncoderModel EncoderModel::clone_trainable() const {
  EncoderModel m;
  m.cfg_ = cfg_;
  if (cfg_.token_input()) {
    m.tok_embed_ = tok_embed_.clone(true);
  } else {
    m.patch_proj_ = patch_proj_.clone(true);
    m.patch_bias_ = patch_bias_.clone(true);
  }
  m.pos_embed_ = pos_embed_.clone(true);
  m.emb_ln_gain_ = emb_ln_gain_.clone(true);
  m.emb_ln_bias_ = emb_ln_bias_.clone(true);
  m.layers_.reserve(layers_.size());
  for (const LayerParams& lp : layers_) {
    LayerParams c;
    c.wq = lp.wq.clone(true);
    c.bq = lp.bq.clone(true);
    c.wk = lp.wk.clone(true);
    c.wv = lp.wv.clone(true);
    c.bv = lp.bv.clone(true);
    c.wo = lp.wo.clone(true);
    c.bo = lp.bo.clone(true);
    c.ln1_gain = lp.ln1_gain.clone(true);
    c.ln1_bias = lp.ln1_bias.clone(true);
    c.ffn_w1 = lp.ffn_w1.clone(true);
    c.ffn_b1 = lp.ffn_b1.clone(true);
    c.ffn_w2 = lp.ffn_w2.clone(true);
    c.ffn_b2 = lp.ffn_b2.clone(true);
    c.ln2_gain = lp.ln2_gain.clone(true);
    c.ln2_bias = lp.ln2_bias.clone(true);
    m.layers_.push_back(std::move(c));
  }
  return m;
}

void EncoderModel::load_parameters(const std::vector<NamedParam>& params) {
  std::map<std::string, const Tensor*> incoming;
  for (const NamedParam& p : params) incoming[p.name] = &p.tensor;
  for (NamedParam& mine : parameters()) {
    auto it = incoming.find(mine.name);
    if (it == incoming.end())
      throw DataError("checkpoint: missing parameter '" + mine.name + "'");
    if (it->second->shape() != mine.tensor.shape())
      throw DataError("checkpoint: parameter '" + mine.name + "' has shape " +
                      shape_str(it->second->shape()) + ", expected " +
                      shape_str(mine.tensor.shape()));
    std::copy(it->second->data().begin(), it->second->data().end(),
              mine.tensor.data().begin());
  }
}

EncoderModel init_student_from(const EncoderModel& donor, int M) {
  const EncoderConfig& dc = donor.config();
  if (M < 1 || M > dc.num_layers)
    throw ConfigError("init_student_from: M=" + std::to_string(M) +
                      " must be in [1, " + std::to_string(dc.num_layers) + "]");
  EncoderConfig sc = dc;
  sc.num_layers = M;
  Rng unused(0);
  EncoderModel out = EncoderModel::init(sc, unused);
  std::vector<NamedParam> donor_params = donor.parameters();
  std::vector<NamedParam> subset;
  for (const NamedParam& p : donor_params) {
    if (p.name.rfind("layers.", 0) == 0) {
      const int layer = std::stoi(p.name.substr(7, p.name.find('.', 7) - 7));
      if (layer >= M) continue;
    }
    subset.push_back(p);
  }
  out.load_parameters(subset);
  return out;
}

EncoderModel init_student_from(const EncoderModel& donor, const EncoderConfig& want) {
  want.validate();
  const EncoderConfig& dc = donor.config();
  if (want.hidden_dim != dc.hidden_dim)
    throw ConfigError("init_student_from: student hidden_dim " +
                      std::to_string(want.hidden_dim) + " incompatible with donor " +
                      std::to_string(dc.hidden_dim));
  if (want.vocab_size != dc.vocab_size)
    throw ConfigError("init_student_from: student vocab " +
                      std::to_string(want.vocab_size) + " incompatible with donor " +
                      std::to_string(dc.vocab_size));
  if (want.num_heads != dc.num_heads || want.ffn_dim != dc.ffn_dim ||
      want.max_seq_len != dc.max_seq_len)
    throw ConfigError("init_student_from: student geometry incompatible with donor");
  return init_student_from(donor, want.num_layers);
}

} // namespace gamekd
