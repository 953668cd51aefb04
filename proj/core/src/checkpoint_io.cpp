#include "inductlab/checkpoint_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace inductlab {

namespace {

using json = nlohmann::json;

static_assert(std::endian::native == std::endian::little,
              "checkpoint blobs are little-endian; big-endian hosts are not supported");

constexpr std::size_t kMagicLen = 8;

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint64_t get_u64(const std::vector<std::uint8_t>& in, std::size_t at) {
  if (at + 8 > in.size()) throw std::runtime_error("checkpoint truncated while reading header");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(in[at + i]) << (8 * i);
  return v;
}

void append_floats(std::vector<std::uint8_t>& out, std::span<const float> data) {
  const auto* p = reinterpret_cast<const std::uint8_t*>(data.data());
  out.insert(out.end(), p, p + data.size_bytes());
}

json config_json(const ModelConfig& c) {
  return json{{"n_layers", c.n_layers},
              {"n_heads", c.n_heads},
              {"d_model", c.d_model},
              {"d_head", c.d_head},
              {"d_mlp", c.d_mlp},
              {"vocab_size", c.vocab_size},
              {"max_seq", c.max_seq},
              {"positional_kind", to_string(c.positional_kind)},
              {"pos_channel_offset", c.pos_channel_offset},
              {"pos_modulus", c.pos_modulus},
              {"attention_only", c.attention_only},
              {"norm_kind", to_string(c.norm_kind)},
              {"norm_eps", c.norm_eps}};
}

ModelConfig config_from(const json& j) {
  ModelConfig c;
  c.n_layers = j.at("n_layers").get<std::size_t>();
  c.n_heads = j.at("n_heads").get<std::size_t>();
  c.d_model = j.at("d_model").get<std::size_t>();
  c.d_head = j.at("d_head").get<std::size_t>();
  c.d_mlp = j.value("d_mlp", std::size_t{0});
  c.vocab_size = j.at("vocab_size").get<std::size_t>();
  c.max_seq = j.at("max_seq").get<std::size_t>();
  c.positional_kind = parse_positional_kind(j.value("positional_kind", "learned-additive"));
  c.pos_channel_offset = j.value("pos_channel_offset", std::size_t{0});
  c.pos_modulus = j.value("pos_modulus", std::size_t{16});
  c.attention_only = j.value("attention_only", true);
  c.norm_kind = parse_norm_kind(j.value("norm_kind", "none"));
  c.norm_eps = j.value("norm_eps", 1e-5f);
  c.validate();
  return c;
}

struct Entry {
  std::vector<std::size_t> shape;
  std::uint64_t begin = 0;
  std::uint64_t end = 0;
};

// Copies every tensor the config expects out of `entries`, rejecting missing
// names, unexpected names and shape mismatches.
Checkpoint fill(const ModelConfig& config, const std::map<std::string, Entry>& entries,
                const std::uint8_t* blob, std::size_t blob_size) {
  Checkpoint ckpt = Checkpoint::allocate(config);
  auto refs = named_tensors(ckpt);
  if (refs.size() != entries.size()) {
    throw std::runtime_error("checkpoint holds " + std::to_string(entries.size()) +
                             " tensors, config expects " + std::to_string(refs.size()));
  }
  for (auto& ref : refs) {
    auto it = entries.find(ref.name);
    if (it == entries.end()) throw std::runtime_error("checkpoint is missing tensor " + ref.name);
    const Entry& e = it->second;
    if (e.shape != ref.shape) throw std::runtime_error("tensor " + ref.name + " has wrong shape");
    if (e.end < e.begin || e.end > blob_size || e.end - e.begin != ref.data.size_bytes()) {
      throw std::runtime_error("tensor " + ref.name + " has inconsistent byte range");
    }
    std::memcpy(ref.data.data(), blob + e.begin, ref.data.size_bytes());
  }
  ckpt.validate();
  return ckpt;
}

Checkpoint decode_native(const std::vector<std::uint8_t>& bytes) {
  const std::uint64_t len = get_u64(bytes, kMagicLen);
  const std::size_t header_end = kMagicLen + 8 + len;
  if (header_end > bytes.size()) throw std::runtime_error("checkpoint manifest truncated");
  const json manifest =
      json::parse(bytes.begin() + kMagicLen + 8, bytes.begin() + static_cast<long>(header_end));
  if (manifest.value("format", "") != "inductlab-checkpoint") {
    throw std::runtime_error("unrecognized checkpoint manifest format");
  }
  const ModelConfig config = config_from(manifest.at("config"));
  std::map<std::string, Entry> entries;
  for (const auto& [name, t] : manifest.at("tensors").items()) {
    if (t.value("dtype", "") != "f32") throw std::runtime_error("tensor " + name + " is not f32");
    Entry e;
    e.shape = t.at("shape").get<std::vector<std::size_t>>();
    e.begin = t.at("offset").get<std::uint64_t>();
    std::size_t count = 1;
    for (auto d : e.shape) count *= d;
    e.end = e.begin + count * sizeof(float);
    entries.emplace(name, std::move(e));
  }
  return fill(config, entries, bytes.data() + header_end, bytes.size() - header_end);
}

Checkpoint decode_safetensors(const std::vector<std::uint8_t>& bytes) {
  const std::uint64_t len = get_u64(bytes, 0);
  const std::size_t header_end = 8 + len;
  if (header_end > bytes.size()) throw std::runtime_error("safetensors header truncated");
  const json header = json::parse(bytes.begin() + 8, bytes.begin() + static_cast<long>(header_end));
  if (!header.contains("__metadata__") || !header["__metadata__"].contains("inductlab.config")) {
    throw std::runtime_error("safetensors file lacks __metadata__[\"inductlab.config\"]");
  }
  const ModelConfig config =
      config_from(json::parse(header["__metadata__"]["inductlab.config"].get<std::string>()));
  std::map<std::string, Entry> entries;
  for (const auto& [name, t] : header.items()) {
    if (name == "__metadata__") continue;
    if (t.value("dtype", "") != "F32") {
      throw std::runtime_error("safetensors tensor " + name + " is not F32");
    }
    Entry e;
    e.shape = t.at("shape").get<std::vector<std::size_t>>();
    const auto offsets = t.at("data_offsets").get<std::vector<std::uint64_t>>();
    if (offsets.size() != 2) throw std::runtime_error("bad data_offsets for " + name);
    e.begin = offsets[0];
    e.end = offsets[1];
    entries.emplace(name, std::move(e));
  }
  return fill(config, entries, bytes.data() + header_end, bytes.size() - header_end);
}

std::vector<std::uint8_t> read_all(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_all(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("failed writing checkpoint " + path.string());
}

}  // namespace

std::string config_to_json(const ModelConfig& config) { return config_json(config).dump(); }

ModelConfig config_from_json(const std::string& text) { return config_from(json::parse(text)); }

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
  ckpt.validate();
  auto& mut = const_cast<Checkpoint&>(ckpt);
  json tensors = json::object();
  std::vector<std::uint8_t> blob;
  for (const auto& ref : named_tensors(mut)) {
    tensors[ref.name] = {{"offset", blob.size()}, {"shape", ref.shape}, {"dtype", "f32"}};
    append_floats(blob, ref.data);
  }
  const json manifest = {{"format", "inductlab-checkpoint"},
                         {"version", 1},
                         {"config", config_json(ckpt.config)},
                         {"tensors", tensors}};
  const std::string text = manifest.dump();
  std::vector<std::uint8_t> out(kCheckpointMagic, kCheckpointMagic + kMagicLen);
  put_u64(out, text.size());
  out.insert(out.end(), text.begin(), text.end());
  out.insert(out.end(), blob.begin(), blob.end());
  return out;
}

std::vector<std::uint8_t> encode_safetensors(const Checkpoint& ckpt) {
  ckpt.validate();
  auto& mut = const_cast<Checkpoint&>(ckpt);
  json header = json::object();
  std::vector<std::uint8_t> blob;
  for (const auto& ref : named_tensors(mut)) {
    const std::size_t begin = blob.size();
    append_floats(blob, ref.data);
    header[ref.name] = {{"dtype", "F32"}, {"shape", ref.shape}, {"data_offsets", {begin, blob.size()}}};
  }
  header["__metadata__"] = {{"inductlab.config", config_to_json(ckpt.config)}};
  std::string text = header.dump();
  // safetensors pads the header with spaces to an 8-byte boundary.
  while (text.size() % 8 != 0) text.push_back(' ');
  std::vector<std::uint8_t> out;
  put_u64(out, text.size());
  out.insert(out.end(), text.begin(), text.end());
  out.insert(out.end(), blob.begin(), blob.end());
  return out;
}

Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  try {
    if (bytes.size() >= kMagicLen && std::memcmp(bytes.data(), kCheckpointMagic, kMagicLen) == 0) {
      return decode_native(bytes);
    }
    return decode_safetensors(bytes);
  } catch (const json::exception& e) {
    throw std::runtime_error(std::string("malformed checkpoint header: ") + e.what());
  }
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  write_all(path, encode_checkpoint(ckpt));
}

void save_safetensors(const Checkpoint& ckpt, const std::filesystem::path& path) {
  write_all(path, encode_safetensors(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(read_all(path));
}

}  // namespace inductlab
