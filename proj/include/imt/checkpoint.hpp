#pragma once

// Checkpoint file, little-endian:
//   "IMTW" | u32 version | u32 n, config text (key=value lines)
//   | u32 count, parameter entries | u32 count, auxiliary entries | u64 content hash
// entry: u16 name length, name | u8 rank, u32 dims | float32 values
//
// The content hash is 64-bit FNV-1a over the serialized parameter entries
// (not the auxiliary ones, which hold optimizer state).

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "imt/error.hpp"
#include "imt/model.hpp"

namespace imt {

inline constexpr char kCheckpointMagic[4] = {'I', 'M', 'T', 'W'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

using ConfigEcho = std::map<std::string, std::string>;
using NamedTensors = std::vector<std::pair<std::string, Tensor<float>>>;

inline std::uint64_t fnv1a(std::span<const std::uint8_t> bytes, std::uint64_t h = 0xcbf29ce484222325ull) {
  for (auto b : bytes) {
    h ^= b;
    h *= 0x100000001b3ull;
  }
  return h;
}

namespace detail {

class ByteWriter {
 public:
  template <class U>
  void pod(U v) {
    for (std::size_t i = 0; i < sizeof(U); ++i) bytes.push_back(static_cast<std::uint8_t>(std::uint64_t(v) >> (8 * i)));
  }
  void f32(float v) {
    std::uint32_t u;
    std::memcpy(&u, &v, 4);
    pod(u);
  }
  void raw(const std::string& s) { bytes.insert(bytes.end(), s.begin(), s.end()); }
  void entry(const std::string& name, const Tensor<float>& t) {
    if (name.size() > 0xFFFF || t.rank() > 255) throw DataError("checkpoint entry too large: " + name);
    pod(static_cast<std::uint16_t>(name.size()));
    raw(name);
    pod(static_cast<std::uint8_t>(t.rank()));
    for (auto d : t.shape()) pod(static_cast<std::uint32_t>(d));
    for (std::size_t i = 0; i < t.size(); ++i) f32(t[i]);
  }
  std::vector<std::uint8_t> bytes;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> b) : b_(b) {}
  template <class U>
  U pod() {
    need(sizeof(U));
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= std::uint64_t(b_[pos_ + i]) << (8 * i);
    pos_ += sizeof(U);
    return static_cast<U>(v);
  }
  float f32() {
    const auto u = pod<std::uint32_t>();
    float v;
    std::memcpy(&v, &u, 4);
    return v;
  }
  std::string raw(std::size_t n) {
    need(n);
    std::string s(b_.begin() + pos_, b_.begin() + pos_ + n);
    pos_ += n;
    return s;
  }
  std::pair<std::string, Tensor<float>> entry() {
    std::string name = raw(pod<std::uint16_t>());
    const auto rank = pod<std::uint8_t>();
    Shape shape(rank);
    for (auto& d : shape) d = pod<std::uint32_t>();
    const std::size_t n = shape_numel(shape);
    need(n * 4);
    Tensor<float> t(shape);
    for (std::size_t i = 0; i < n; ++i) t[i] = f32();
    return {std::move(name), std::move(t)};
  }
  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return b_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (b_.size() - pos_ < n) throw DataError("checkpoint truncated at byte " + std::to_string(pos_));
  }
  std::span<const std::uint8_t> b_;
  std::size_t pos_ = 0;
};

inline std::string echo_text(const ConfigEcho& echo) {
  std::string s;
  for (const auto& [k, v] : echo) s += k + "=" + v + "\n";
  return s;
}

inline ConfigEcho parse_echo(const std::string& text) {
  ConfigEcho echo;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string::npos) end = text.size();
    const std::string line = text.substr(start, end - start);
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw DataError("checkpoint config line without '=': " + line);
    echo[line.substr(0, eq)] = line.substr(eq + 1);
    start = end + 1;
  }
  return echo;
}

}  // namespace detail

/// Architecture keys every checkpoint carries.
inline void echo_model_config(const ModelConfig& c, ConfigEcho& echo) {
  echo["model.input_size"] = std::to_string(c.input_size);
  echo["model.unet_width"] = std::to_string(c.unet_width);
  echo["model.feature_channels"] = std::to_string(c.feature_channels);
  echo["model.attention_scale"] = c.attention_scale ? "1" : "0";
}

inline ModelConfig model_config_from_echo(const ConfigEcho& echo) {
  auto get = [&](const char* key) -> std::size_t {
    auto it = echo.find(key);
    if (it == echo.end()) throw DataError(std::string("checkpoint lacks ") + key);
    try {
      return std::stoul(it->second);
    } catch (const std::exception&) {
      throw DataError(std::string("checkpoint field ") + key + " is not a number: " + it->second);
    }
  };
  ModelConfig c = reference_config(get("model.input_size"));
  c.unet_width = get("model.unet_width");
  c.feature_channels = get("model.feature_channels");
  c.attention_scale = get("model.attention_scale") != 0;
  return c;
}

inline std::vector<std::uint8_t> serialize_parameters(Model<float>& m) {
  detail::ByteWriter w;
  m.visit("", [&](const std::string& name, Var<float>& v) { w.entry(name, v.value()); });
  return std::move(w.bytes);
}

/// Hash binding bitstreams to the exact parameter values.
inline std::uint64_t model_content_hash(Model<float>& m) { return fnv1a(serialize_parameters(m)); }

struct ModelCheckpoint {
  Model<float> model;
  ConfigEcho echo;
  NamedTensors aux;
  std::uint64_t content_hash = 0;
};

inline std::vector<std::uint8_t> serialize_checkpoint(Model<float>& m, ConfigEcho echo = {},
                                                      const NamedTensors& aux = {}) {
  echo_model_config(m.config, echo);
  detail::ByteWriter w;
  w.raw(std::string(kCheckpointMagic, 4));
  w.pod(kCheckpointVersion);
  const std::string text = detail::echo_text(echo);
  w.pod(static_cast<std::uint32_t>(text.size()));
  w.raw(text);
  std::uint32_t count = 0;
  m.visit("", [&](const std::string&, Var<float>&) { ++count; });
  w.pod(count);
  const auto params = serialize_parameters(m);
  w.bytes.insert(w.bytes.end(), params.begin(), params.end());
  w.pod(static_cast<std::uint32_t>(aux.size()));
  for (const auto& [name, t] : aux) w.entry(name, t);
  w.pod(fnv1a(params));
  return std::move(w.bytes);
}

inline ModelCheckpoint deserialize_checkpoint(std::span<const std::uint8_t> bytes) {
  detail::ByteReader r(bytes);
  if (r.raw(4) != std::string(kCheckpointMagic, 4)) throw DataError("not a checkpoint (bad magic)");
  if (const auto v = r.pod<std::uint32_t>(); v != kCheckpointVersion)
    throw DataError("unsupported checkpoint version " + std::to_string(v));
  ModelCheckpoint ck;
  ck.echo = detail::parse_echo(r.raw(r.pod<std::uint32_t>()));
  ck.model = make_model<float>(model_config_from_echo(ck.echo), 0);

  const auto count = r.pod<std::uint32_t>();
  const std::size_t params_begin = r.pos();
  NamedTensors entries;
  for (std::uint32_t i = 0; i < count; ++i) entries.push_back(r.entry());
  const std::uint64_t computed = fnv1a(bytes.subspan(params_begin, r.pos() - params_begin));

  std::size_t i = 0;
  ck.model.visit("", [&](const std::string& name, Var<float>& v) {
    if (i >= entries.size() || entries[i].first != name)
      throw DataError("checkpoint parameter table mismatch at " + name);
    if (entries[i].second.shape() != v.value().shape())
      throw DataError("checkpoint shape mismatch for " + name + ": " + shape_str(entries[i].second.shape()) +
                      " vs " + shape_str(v.value().shape()));
    v.mutable_value() = std::move(entries[i].second);
    ++i;
  });
  if (i != entries.size()) throw DataError("checkpoint has " + std::to_string(entries.size()) + " parameters, model " +
                                           std::to_string(i));
  const auto aux_count = r.pod<std::uint32_t>();
  for (std::uint32_t k = 0; k < aux_count; ++k) ck.aux.push_back(r.entry());
  ck.content_hash = r.pod<std::uint64_t>();
  if (r.remaining() != 0) throw DataError("trailing bytes after checkpoint");
  if (ck.content_hash != computed) throw DataError("checkpoint content hash mismatch");
  return ck;
}

inline void save_checkpoint(const std::filesystem::path& path, Model<float>& m, const ConfigEcho& echo = {},
                            const NamedTensors& aux = {}) {
  const auto bytes = serialize_checkpoint(m, echo, aux);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) throw DataError("failed writing checkpoint " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

inline ModelCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  const std::vector<std::uint8_t> bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  return deserialize_checkpoint(bytes);
}

}  // namespace imt
