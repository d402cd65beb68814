#include "dafnet/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>

#include "dafnet/errors.hpp"

namespace dafnet::checkpoint {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

class Writer {
 public:
  explicit Writer(const std::filesystem::path& path) : out_(path, std::ios::binary), path_(path) {
    if (!out_) throw DataError("cannot write checkpoint: " + path.string());
  }
  template <class T>
  void pod(const T& v) { out_.write(reinterpret_cast<const char*>(&v), sizeof v); }
  void bytes(const std::string& s) {
    pod<std::uint64_t>(s.size());
    out_.write(s.data(), static_cast<std::streamsize>(s.size()));
  }
  void finish() {
    out_.flush();
    if (!out_) throw DataError("failed writing checkpoint: " + path_.string());
  }

 private:
  std::ofstream out_;
  std::filesystem::path path_;
};

class Reader {
 public:
  explicit Reader(const std::filesystem::path& path) : in_(path, std::ios::binary), path_(path) {
    if (!in_) throw DataError("cannot read checkpoint: " + path.string());
  }
  template <class T>
  T pod() {
    T v{};
    in_.read(reinterpret_cast<char*>(&v), sizeof v);
    check();
    return v;
  }
  std::string bytes(std::uint64_t limit = 1ULL << 32) {
    const auto n = pod<std::uint64_t>();
    if (n > limit) throw DataError("corrupt checkpoint (oversized field): " + path_.string());
    std::string s(n, '\0');
    in_.read(s.data(), static_cast<std::streamsize>(n));
    check();
    return s;
  }
  void raw(void* dst, std::size_t n) {
    in_.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
    check();
  }

 private:
  void check() {
    if (!in_) throw DataError("truncated checkpoint: " + path_.string());
  }
  std::ifstream in_;
  std::filesystem::path path_;
};

Metadata read_header(Reader& r, const std::filesystem::path& path) {
  char magic[8];
  r.raw(magic, sizeof magic);
  if (std::memcmp(magic, kMagic, sizeof magic) != 0) throw DataError("not a checkpoint file: " + path.string());
  const auto version = r.pod<std::uint32_t>();
  if (version != kVersion) {
    throw DataError("unsupported checkpoint version " + std::to_string(version) + ": " + path.string());
  }
  Metadata meta;
  meta.config = config::parse(r.bytes());
  meta.step = r.pod<std::uint64_t>();
  return meta;
}

}  // namespace

void save(const std::filesystem::path& path, const DafNet& model, const Metadata& meta) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  Writer w(path);
  for (char c : kMagic) w.pod(c);
  w.pod(kVersion);
  w.bytes(config::serialize(meta.config));
  w.pod<std::uint64_t>(meta.step);
  const auto& entries = model.parameters().entries();
  w.pod<std::uint64_t>(entries.size());
  for (const auto& e : entries) {
    w.bytes(e.name);
    w.pod<std::uint32_t>(static_cast<std::uint32_t>(e.tensor.rank()));
    for (int d : e.tensor.shape()) w.pod<std::int32_t>(d);
    for (double v : e.tensor.values()) w.pod(v);
  }
  w.finish();
}

Metadata read_metadata(const std::filesystem::path& path) {
  Reader r(path);
  return read_header(r, path);
}

void load_into(const std::filesystem::path& path, DafNet& model) {
  Reader r(path);
  read_header(r, path);
  const auto count = r.pod<std::uint64_t>();
  std::map<std::string, Tensor> expected;
  for (const auto& e : model.parameters().entries()) expected.emplace(e.name, e.tensor);
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::string name = r.bytes(4096);
    const auto rank = r.pod<std::uint32_t>();
    if (rank > 8) throw DataError("corrupt checkpoint (rank " + std::to_string(rank) + "): " + path.string());
    Shape shape(rank);
    for (auto& d : shape) d = r.pod<std::int32_t>();
    auto it = expected.find(name);
    if (it == expected.end()) throw ConfigError("checkpoint key mismatch: unexpected tensor '" + name + "'");
    Tensor target = it->second;
    if (target.shape() != shape) {
      throw ConfigError("checkpoint key mismatch: '" + name + "' stored as " + shape_string(shape) +
                        ", model expects " + shape_string(target.shape()));
    }
    auto values = target.mutable_values();
    r.raw(values.data(), values.size() * sizeof(double));
    expected.erase(it);
  }
  if (!expected.empty()) {
    throw ConfigError("checkpoint key mismatch: missing tensor '" + expected.begin()->first + "'");
  }
}

DafNet load_model(const std::filesystem::path& path, Metadata* meta) {
  Metadata m = read_metadata(path);
  m.config.validate();
  DafNet model(config::to_model_config(m.config), m.config.seed);
  load_into(path, model);
  if (meta) *meta = std::move(m);
  return model;
}

}  // namespace dafnet::checkpoint
