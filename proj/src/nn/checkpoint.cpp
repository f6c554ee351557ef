#include "prognet/nn/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <unordered_map>

namespace prognet::nn {

namespace {

constexpr char kMagic[8] = {'P', 'G', 'N', 'C', 'K', 'P', 'T', '\0'};

template <typename T>
void put(std::vector<std::uint8_t>& out, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  std::uint8_t bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  out.insert(out.end(), bytes, bytes + sizeof(T));
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    std::uint8_t raw[sizeof(T)];
    std::memcpy(raw, bytes_.data() + pos_, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(raw, raw + sizeof(T));
    pos_ += sizeof(T);
    T value;
    std::memcpy(&value, raw, sizeof(T));
    return value;
  }

  std::string get_string(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }

  [[nodiscard]] bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw CheckpointError("checkpoint truncated");
  }
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

Checkpoint Checkpoint::from_parameters(std::span<const Parameter* const> params, std::uint64_t architecture_hash,
                                       DType dtype) {
  Checkpoint ck;
  ck.architecture_hash = architecture_hash;
  for (const Parameter* p : params) {
    CheckpointEntry e;
    e.name = p->name;
    e.shape = p->value.shape();
    e.dtype = dtype;
    e.frozen = p->frozen;
    e.values.assign(p->value.data().begin(), p->value.data().end());
    if (dtype == DType::f32) {
      for (auto& v : e.values) v = static_cast<double>(static_cast<float>(v));
    }
    ck.entries.push_back(std::move(e));
  }
  return ck;
}

void Checkpoint::apply_to(std::span<Parameter* const> params) const {
  std::unordered_map<std::string, const CheckpointEntry*> by_name;
  for (const auto& e : entries) by_name.emplace(e.name, &e);
  for (Parameter* p : params) {
    auto it = by_name.find(p->name);
    if (it == by_name.end()) throw CheckpointError("checkpoint has no parameter '" + p->name + "'");
    const CheckpointEntry& e = *it->second;
    if (e.shape != p->value.shape()) {
      throw CheckpointError("shape drift for '" + p->name + "': checkpoint " + to_string(e.shape) + " vs model " +
                            to_string(p->value.shape()));
    }
    std::copy(e.values.begin(), e.values.end(), p->value.mutable_data().begin());
  }
}

std::vector<std::uint8_t> Checkpoint::serialize() const {
  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  put<std::uint32_t>(out, kFormatVersion);
  put<std::uint64_t>(out, architecture_hash);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(entries.size()));
  for (const auto& e : entries) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(e.name.size()));
    out.insert(out.end(), e.name.begin(), e.name.end());
    put<std::uint8_t>(out, static_cast<std::uint8_t>(e.dtype));
    put<std::uint8_t>(out, e.frozen ? 1 : 0);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(e.shape.size()));
    for (auto d : e.shape) put<std::uint64_t>(out, d);
    if (numel(e.shape) != e.values.size()) throw CheckpointError("entry '" + e.name + "' has inconsistent size");
    for (double v : e.values) {
      if (e.dtype == DType::f64) {
        put<double>(out, v);
      } else {
        put<float>(out, static_cast<float>(v));
      }
    }
  }
  return out;
}

Checkpoint Checkpoint::deserialize(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  if (r.get_string(sizeof(kMagic)) != std::string(kMagic, sizeof(kMagic))) {
    throw CheckpointError("not a checkpoint file (bad magic)");
  }
  const auto version = r.get<std::uint32_t>();
  if (version != kFormatVersion) {
    throw CheckpointError("unsupported checkpoint format version " + std::to_string(version));
  }
  Checkpoint ck;
  ck.architecture_hash = r.get<std::uint64_t>();
  const auto count = r.get<std::uint32_t>();
  for (std::uint32_t k = 0; k < count; ++k) {
    CheckpointEntry e;
    e.name = r.get_string(r.get<std::uint32_t>());
    const auto tag = r.get<std::uint8_t>();
    if (tag > 1) throw CheckpointError("unknown dtype tag " + std::to_string(tag));
    e.dtype = static_cast<DType>(tag);
    e.frozen = r.get<std::uint8_t>() != 0;
    const auto rank = r.get<std::uint32_t>();
    for (std::uint32_t d = 0; d < rank; ++d) e.shape.push_back(r.get<std::uint64_t>());
    const std::size_t n = numel(e.shape);
    e.values.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      e.values[i] = e.dtype == DType::f64 ? r.get<double>() : static_cast<double>(r.get<float>());
    }
    ck.entries.push_back(std::move(e));
  }
  if (!r.done()) throw CheckpointError("trailing bytes after checkpoint entries");
  return ck;
}

void Checkpoint::save(const std::filesystem::path& path) const {
  auto bytes = serialize();
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw CheckpointError("cannot open '" + path.string() + "' for writing");
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw CheckpointError("write failed for '" + path.string() + "'");
}

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CheckpointError("cannot open '" + path.string() + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return deserialize(bytes);
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes) {
  return fnv1a64(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

}  // namespace prognet::nn
