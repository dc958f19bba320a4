#include "srb/harness/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace srb {

namespace {

using json = nlohmann::json;

constexpr std::string_view kMagic = "SPRB1\n";

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

template <class U>
void put_le(std::string& out, U value) {
  static_assert(std::is_trivially_copyable_v<U>);
  unsigned char bytes[sizeof(U)];
  std::memcpy(bytes, &value, sizeof(U));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(U));
  out.append(reinterpret_cast<const char*>(bytes), sizeof(U));
}

template <class U>
U get_le(const char* p) {
  unsigned char bytes[sizeof(U)];
  std::memcpy(bytes, p, sizeof(U));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(U));
  U value;
  std::memcpy(&value, bytes, sizeof(U));
  return value;
}

std::uint64_t payload_checksum(std::string_view payload) { return fnv1a64(payload); }

class PayloadWriter {
 public:
  template <class M>
  void add(const std::string& name, const M& m, const char* dtype) {
    using Scalar = typename M::Scalar;
    const std::size_t offset = payload_.size();
    for (Eigen::Index i = 0; i < m.size(); ++i) put_le<Scalar>(payload_, m.data()[i]);
    json shape = json::array();
    if constexpr (M::ColsAtCompileTime == 1) {
      shape.push_back(m.rows());
    } else {
      shape.push_back(m.rows());
      shape.push_back(m.cols());
    }
    tensors_.push_back({{"name", name},
                        {"shape", shape},
                        {"dtype", dtype},
                        {"byte_offset", offset},
                        {"byte_length", payload_.size() - offset}});
  }
  const std::string& payload() const { return payload_; }
  const json& tensors() const { return tensors_; }

 private:
  std::string payload_;
  json tensors_ = json::array();
};

template <class T>
constexpr const char* dtype_name() {
  return std::is_same_v<T, float> ? "f32" : "f64";
}

struct Parsed {
  json header;
  std::string_view payload;
};

Parsed parse(const std::string& bytes) {
  if (bytes.size() < kMagic.size() || std::string_view(bytes).substr(0, kMagic.size()) != kMagic) {
    throw FormatError("checkpoint: bad magic");
  }
  std::size_t pos = kMagic.size();
  if (bytes.size() < pos + 4) throw FormatError("checkpoint: length mismatch (truncated header length)");
  const auto header_len = get_le<std::uint32_t>(bytes.data() + pos);
  pos += 4;
  if (bytes.size() < pos + header_len) throw FormatError("checkpoint: length mismatch (truncated header)");
  Parsed out;
  try {
    out.header = json::parse(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
                             bytes.begin() + static_cast<std::ptrdiff_t>(pos + header_len));
  } catch (const json::exception& e) {
    throw FormatError(std::string("checkpoint: malformed header: ") + e.what());
  }
  pos += header_len;
  if (!out.header.is_object() || !out.header.contains("format_version")) {
    throw FormatError("checkpoint: header has no format_version");
  }
  if (out.header["format_version"] != kCheckpointFormatVersion) {
    throw FormatError("checkpoint: unsupported format version " + out.header["format_version"].dump());
  }
  std::size_t expected = 0;
  for (const auto& t : out.header.at("tensors")) {
    const std::size_t end = t.at("byte_offset").get<std::size_t>() + t.at("byte_length").get<std::size_t>();
    expected = std::max(expected, end);
  }
  if (bytes.size() != pos + expected + 8) {
    throw FormatError("checkpoint: length mismatch (manifest describes " + std::to_string(expected) +
                      " payload bytes, file holds " +
                      std::to_string(bytes.size() >= pos + 8 ? bytes.size() - pos - 8 : 0) + ")");
  }
  out.payload = std::string_view(bytes).substr(pos, expected);
  const auto stored = get_le<std::uint64_t>(bytes.data() + pos + expected);
  if (stored != payload_checksum(out.payload)) throw FormatError("checkpoint: checksum failure");
  return out;
}

CheckpointInfo info_from(const json& h) {
  CheckpointInfo info;
  try {
    info.format_version = h.at("format_version").get<int>();
    info.precision = parse_precision(h.at("precision").get<std::string>());
    info.spec.base_sizes = h.at("model").at("base_sizes").get<std::vector<std::size_t>>();
    info.spec.width = h.at("model").at("width").get<std::size_t>();
    info.epoch = h.at("epoch").get<std::size_t>();
    info.seed = h.at("seed").get<std::uint64_t>();
    info.rng_counter = h.at("rng_counter").get<std::uint64_t>();
    for (const auto& t : h.at("tensors")) {
      const auto name = t.at("name").get<std::string>();
      if (name.rfind("velocity.", 0) == 0) info.has_velocity = true;
      if (name.rfind("mask.", 0) == 0) info.has_mask = true;
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("checkpoint: bad header field: ") + e.what());
  } catch (const ConfigError& e) {
    throw FormatError(std::string("checkpoint: ") + e.what());
  }
  info.spec.validate();
  return info;
}

class PayloadReader {
 public:
  PayloadReader(const json& tensors, std::string_view payload) : payload_(payload) {
    for (const auto& t : tensors) by_name_[t.at("name").get<std::string>()] = &t;
  }

  template <class M>
  void read(const std::string& name, M& m, const char* dtype) {
    using Scalar = typename M::Scalar;
    auto it = by_name_.find(name);
    if (it == by_name_.end()) throw FormatError("checkpoint: missing tensor " + name);
    const json& t = *it->second;
    if (t.at("dtype") != dtype) throw FormatError("checkpoint: tensor " + name + " has dtype " + t.at("dtype").dump());
    const auto shape = t.at("shape").get<std::vector<std::size_t>>();
    std::size_t count = 1;
    for (auto s : shape) count *= s;
    if (count != static_cast<std::size_t>(m.size())) throw FormatError("checkpoint: tensor " + name + " has the wrong shape");
    const auto offset = t.at("byte_offset").get<std::size_t>();
    const auto length = t.at("byte_length").get<std::size_t>();
    if (length != count * sizeof(Scalar) || offset + length > payload_.size()) {
      throw FormatError("checkpoint: length mismatch for tensor " + name);
    }
    for (std::size_t i = 0; i < count; ++i) m.data()[i] = get_le<Scalar>(payload_.data() + offset + i * sizeof(Scalar));
  }

  bool has(const std::string& name) const { return by_name_.count(name) > 0; }

 private:
  std::string_view payload_;
  std::map<std::string, const json*> by_name_;
};

std::string read_all(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open checkpoint " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

template <class T>
std::string encode_checkpoint(const Checkpoint<T>& checkpoint) {
  const auto& params = checkpoint.params;
  params.check_shapes();
  PayloadWriter w;
  const char* dt = dtype_name<T>();
  for (std::size_t l = 0; l < params.layer_count(); ++l) {
    w.add("weight." + std::to_string(l), params.weights[l], dt);
    w.add("bias." + std::to_string(l), params.biases[l], dt);
  }
  if (checkpoint.velocity) {
    checkpoint.velocity->check_shapes();
    for (std::size_t l = 0; l < params.layer_count(); ++l) {
      w.add("velocity.weight." + std::to_string(l), checkpoint.velocity->weights[l], dt);
      w.add("velocity.bias." + std::to_string(l), checkpoint.velocity->biases[l], dt);
    }
  }
  if (checkpoint.mask) {
    checkpoint.mask->check_compatible(params.spec);
    for (std::size_t l = 0; l < params.layer_count(); ++l) w.add("mask." + std::to_string(l), checkpoint.mask->layers[l], "u8");
  }

  json header = {
      {"format_version", kCheckpointFormatVersion},
      {"precision", std::string(to_string(precision_of<T>()))},
      {"model", {{"base_sizes", params.spec.base_sizes}, {"width", params.spec.width}}},
      {"epoch", checkpoint.epoch},
      {"seed", checkpoint.seed},
      {"rng_counter", checkpoint.rng_counter},
      {"tensors", w.tensors()},
  };
  const std::string text = header.dump();

  std::string out(kMagic);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(text.size()));
  out += text;
  out += w.payload();
  put_le<std::uint64_t>(out, payload_checksum(w.payload()));
  return out;
}

CheckpointInfo inspect_checkpoint(const std::string& bytes) { return info_from(parse(bytes).header); }

template <class T>
Checkpoint<T> decode_checkpoint(const std::string& bytes) {
  const auto parsed = parse(bytes);
  const auto info = info_from(parsed.header);
  if (info.precision != precision_of<T>()) {
    throw FormatError("checkpoint: precision mismatch (file is " + std::string(to_string(info.precision)) +
                      ", run is " + std::string(to_string(precision_of<T>())) + ")");
  }
  PayloadReader r(parsed.header.at("tensors"), parsed.payload);
  const char* dt = dtype_name<T>();

  Checkpoint<T> c;
  c.params = ParamSet<T>::zeros(info.spec);
  c.epoch = info.epoch;
  c.seed = info.seed;
  c.rng_counter = info.rng_counter;
  for (std::size_t l = 0; l < c.params.layer_count(); ++l) {
    r.read("weight." + std::to_string(l), c.params.weights[l], dt);
    r.read("bias." + std::to_string(l), c.params.biases[l], dt);
  }
  if (info.has_velocity) {
    c.velocity = ParamSet<T>::zeros(info.spec);
    for (std::size_t l = 0; l < c.params.layer_count(); ++l) {
      r.read("velocity.weight." + std::to_string(l), c.velocity->weights[l], dt);
      r.read("velocity.bias." + std::to_string(l), c.velocity->biases[l], dt);
    }
  }
  if (info.has_mask) {
    c.mask = Mask::zeros(info.spec);
    for (std::size_t l = 0; l < c.params.layer_count(); ++l) {
      r.read("mask." + std::to_string(l), c.mask->layers[l], "u8");
      const auto& m = c.mask->layers[l];
      if ((m.array() > 1).any()) throw FormatError("checkpoint: mask values must be 0 or 1");
    }
  }
  return c;
}

template <class T>
void save_checkpoint(const Checkpoint<T>& checkpoint, const std::filesystem::path& path) {
  const auto bytes = encode_checkpoint(checkpoint);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write checkpoint " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("failed writing checkpoint " + path.string());
}

template <class T>
Checkpoint<T> load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint<T>(read_all(path));
}

CheckpointInfo inspect_checkpoint_file(const std::filesystem::path& path) { return inspect_checkpoint(read_all(path)); }

template std::string encode_checkpoint<float>(const Checkpoint<float>&);
template std::string encode_checkpoint<double>(const Checkpoint<double>&);
template Checkpoint<float> decode_checkpoint<float>(const std::string&);
template Checkpoint<double> decode_checkpoint<double>(const std::string&);
template void save_checkpoint<float>(const Checkpoint<float>&, const std::filesystem::path&);
template void save_checkpoint<double>(const Checkpoint<double>&, const std::filesystem::path&);
template Checkpoint<float> load_checkpoint<float>(const std::filesystem::path&);
template Checkpoint<double> load_checkpoint<double>(const std::filesystem::path&);

}  // namespace srb
