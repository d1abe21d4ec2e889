#include "fedtrans/model/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>

#include "fedtrans/errors.hpp"

namespace fedtrans::model {

namespace {

constexpr char kMagic[8] = {'F', 'T', 'C', 'K', 'P', 'T', '\0', '\0'};
constexpr std::uint32_t kVersion = 1;

class Writer {
 public:
  void u32(std::uint32_t v) { put(v, 4); }
  void u64(std::uint64_t v) { put(v, 8); }
  void f64(double v) { put(std::bit_cast<std::uint64_t>(v), 8); }
  void bytes(std::string_view s) { out_.append(s); }
  void str(std::string_view s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s);
  }
  std::string take() { return std::move(out_); }

 private:
  void put(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  std::string out_;
};

class Reader {
 public:
  explicit Reader(std::string_view in) : in_(in) {}
  std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
  std::uint64_t u64() { return get(8); }
  double f64() { return std::bit_cast<double>(get(8)); }
  std::string_view bytes(std::size_t n) {
    need(n);
    auto s = in_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::string str() { return std::string(bytes(u32())); }
  bool done() const { return pos_ == in_.size(); }
  std::size_t remaining() const { return in_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (in_.size() - pos_ < n) throw LoadError("checkpoint is truncated");
  }
  std::uint64_t get(int n) {
    need(static_cast<std::size_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) {
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in_[pos_ + i])) << (8 * i);
    }
    pos_ += static_cast<std::size_t>(n);
    return v;
  }
  std::string_view in_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string head_section(std::size_t site) { return "head/" + std::to_string(site); }

std::string encode_checkpoint(const Checkpoint& checkpoint) {
  Writer w;
  w.bytes(std::string_view(kMagic, sizeof(kMagic)));
  w.u32(kVersion);
  const std::string meta = checkpoint.metadata.dump();
  w.u64(meta.size());
  w.bytes(meta);
  w.u32(static_cast<std::uint32_t>(checkpoint.sections.size()));
  for (const auto& [name, params] : checkpoint.sections) {
    w.str(name);
    w.u32(static_cast<std::uint32_t>(params.size()));
    for (const auto& [path, tensor] : params) {
      w.str(path);
      w.u32(static_cast<std::uint32_t>(tensor.rank()));
      for (std::size_t d : tensor.shape()) w.u64(d);
      for (double v : tensor.data()) w.f64(v);
    }
  }
  return w.take();
}

Checkpoint decode_checkpoint(std::string_view bytes) {
  Reader r(bytes);
  if (r.bytes(sizeof(kMagic)) != std::string_view(kMagic, sizeof(kMagic))) {
    throw LoadError("not a checkpoint file (bad magic)");
  }
  const std::uint32_t version = r.u32();
  if (version != kVersion) {
    throw LoadError("unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint ck;
  const std::uint64_t meta_len = r.u64();
  if (meta_len > r.remaining()) throw LoadError("checkpoint is truncated");
  try {
    ck.metadata = nlohmann::json::parse(r.bytes(meta_len));
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(std::string("checkpoint metadata is not valid JSON: ") + e.what());
  }
  const std::uint32_t sections = r.u32();
  for (std::uint32_t s = 0; s < sections; ++s) {
    std::string name = r.str();
    ParameterSet params;
    const std::uint32_t count = r.u32();
    for (std::uint32_t t = 0; t < count; ++t) {
      std::string path = r.str();
      const std::uint32_t rank = r.u32();
      if (rank > 8) throw LoadError("checkpoint tensor " + path + " has implausible rank");
      numerics::Shape shape(rank);
      std::uint64_t total = 1;
      for (auto& d : shape) {
        d = r.u64();
        total *= d;
      }
      if (total > r.remaining() / 8) throw LoadError("checkpoint is truncated");
      std::vector<double> values(total);
      for (auto& v : values) v = r.f64();
      if (!params.emplace(path, Tensor(std::move(shape), std::move(values))).second) {
        throw LoadError("checkpoint section " + name + " repeats tensor " + path);
      }
    }
    if (!ck.sections.emplace(name, std::move(params)).second) {
      throw LoadError("checkpoint repeats section " + name);
    }
  }
  if (!r.done()) throw LoadError("checkpoint has trailing bytes");
  return ck;
}

void write_checkpoint(const std::string& path, const Checkpoint& checkpoint) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path + " for writing");
  const std::string bytes = encode_checkpoint(checkpoint);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("failed writing " + path);
}

Checkpoint read_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open checkpoint " + path);
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return decode_checkpoint(bytes);
  } catch (const LoadError& e) {
    throw LoadError(path + ": " + e.what());
  }
}

std::string serialize_shared(const SharedParameters& shared) {
  Checkpoint ck;
  ck.sections[kSharedSection] = shared.values;
  return encode_checkpoint(ck);
}

SharedParameters deserialize_shared(std::string_view bytes) {
  Checkpoint ck = decode_checkpoint(bytes);
  auto it = ck.sections.find(kSharedSection);
  if (it == ck.sections.end() || ck.sections.size() != 1) {
    throw LoadError("expected a container holding only the shared section");
  }
  return SharedParameters{std::move(it->second)};
}

}  // namespace fedtrans::model
