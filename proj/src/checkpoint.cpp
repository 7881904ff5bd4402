#include "gamekd/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "gamekd/errors.hpp"

namespace gamekd {

static_assert(std::endian::native == std::endian::little,
              "checkpoint payload assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'G', 'K', 'D', 'C'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void write_pod(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  return v;
}

} // namespace

const Tensor& Checkpoint::find(const std::string& name) const {
  for (const NamedParam& p : params)
    if (p.name == name) return p.tensor;
  throw DataError("checkpoint: no parameter named '" + name + "'");
}

void save_checkpoint(const std::filesystem::path& path, const nlohmann::json& meta,
                     std::span<const NamedParam> params) {
  nlohmann::json manifest;
  manifest["meta"] = meta;
  nlohmann::json table = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const NamedParam& p : params) {
    table.push_back({{"name", p.name},
                     {"shape", p.tensor.shape()},
                     {"offset", offset},
                     {"count", p.tensor.size()}});
    offset += p.tensor.size();
  }
  manifest["params"] = std::move(table);
  const std::string blob = manifest.dump();

  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("checkpoint: cannot open '" + path.string() + "' for writing");
  os.write(kMagic, 4);
  write_pod(os, kVersion);
  write_pod(os, static_cast<std::uint64_t>(blob.size()));
  os.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  for (const NamedParam& p : params)
    os.write(reinterpret_cast<const char*>(p.tensor.data().data()),
             static_cast<std::streamsize>(p.tensor.size() * sizeof(double)));
  if (!os) throw DataError("checkpoint: write failed for '" + path.string() + "'");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("checkpoint: cannot open '" + path.string() + "'");
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0)
    throw DataError("checkpoint: bad magic in '" + path.string() + "'");
  const auto version = read_pod<std::uint32_t>(is);
  if (version != kVersion)
    throw DataError("checkpoint: unsupported version " + std::to_string(version));
  const auto blob_len = read_pod<std::uint64_t>(is);
  std::string blob(blob_len, '\0');
  is.read(blob.data(), static_cast<std::streamsize>(blob_len));
  if (!is) throw DataError("checkpoint: truncated manifest in '" + path.string() + "'");

  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(blob);
  } catch (const nlohmann::json::exception& e) {
    throw DataError("checkpoint: corrupt manifest: " + std::string(e.what()));
  }

  Checkpoint ckpt;
  ckpt.meta = manifest.value("meta", nlohmann::json::object());
  for (const auto& entry : manifest.at("params")) {
    const std::string name = entry.at("name").get<std::string>();
    const std::vector<int> shape = entry.at("shape").get<std::vector<int>>();
    const std::uint64_t count = entry.at("count").get<std::uint64_t>();
    std::vector<double> data(count);
    is.read(reinterpret_cast<char*>(data.data()),
            static_cast<std::streamsize>(count * sizeof(double)));
    if (!is)
      throw DataError("checkpoint: truncated payload for '" + name + "' in '" +
                      path.string() + "'");
    ckpt.params.push_back({name, Tensor::from(shape, std::move(data)), false});
  }
  return ckpt;
}

nlohmann::json encoder_config_to_json(const EncoderConfig& cfg) {
  return {{"num_layers", cfg.num_layers},   {"hidden_dim", cfg.hidden_dim},
          {"num_heads", cfg.num_heads},     {"ffn_dim", cfg.ffn_dim},
          {"max_seq_len", cfg.max_seq_len}, {"dropout", cfg.dropout},
          {"vocab_size", cfg.vocab_size},   {"mel_bins", cfg.mel_bins},
          {"patch_frames", cfg.patch_frames}, {"patch_mels", cfg.patch_mels}};
}

EncoderConfig encoder_config_from_json(const nlohmann::json& j) {
  EncoderConfig cfg;
  cfg.num_layers = j.at("num_layers").get<int>();
  cfg.hidden_dim = j.at("hidden_dim").get<int>();
  cfg.num_heads = j.at("num_heads").get<int>();
  cfg.ffn_dim = j.at("ffn_dim").get<int>();
  cfg.max_seq_len = j.at("max_seq_len").get<int>();
  cfg.dropout = j.at("dropout").get<double>();
  cfg.vocab_size = j.at("vocab_size").get<int>();
  cfg.mel_bins = j.at("mel_bins").get<int>();
  cfg.patch_frames = j.at("patch_frames").get<int>();
  cfg.patch_mels = j.at("patch_mels").get<int>();
  cfg.validate();
  return cfg;
}

void save_encoder(const std::filesystem::path& path, const EncoderModel& model,
                  nlohmann::json extra_meta) {
  nlohmann::json meta = std::move(extra_meta);
  meta["kind"] = "encoder";
  meta["config"] = encoder_config_to_json(model.config());
  const auto params = model.parameters();
  save_checkpoint(path, meta, params);
}

EncoderModel load_encoder(const std::filesystem::path& path, nlohmann::json* meta_out) {
  Checkpoint ckpt = load_checkpoint(path);
  const EncoderConfig cfg = encoder_config_from_json(ckpt.meta.at("config"));
  Rng unused(0);
  EncoderModel model = EncoderModel::init(cfg, unused);
  model.load_parameters(ckpt.params);
  if (meta_out) *meta_out = std::move(ckpt.meta);
  return model;
}

} // namespace gamekd
