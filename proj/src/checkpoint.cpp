#include "gate/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "gate/error.hpp"

namespace gate {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

namespace {

class Writer {
 public:
  explicit Writer(const std::filesystem::path& path) : out_(path, std::ios::binary) {
    if (!out_) throw DataError("cannot open checkpoint for writing: " + path.string());
  }
  template <typename T>
  void pod(const T& v) {
    out_.write(reinterpret_cast<const char*>(&v), sizeof(T));
  }
  void str(const std::string& s) {
    pod(static_cast<std::uint32_t>(s.size()));
    out_.write(s.data(), static_cast<std::streamsize>(s.size()));
  }
  void doubles(std::span<const double> d) {
    out_.write(reinterpret_cast<const char*>(d.data()),
               static_cast<std::streamsize>(d.size() * sizeof(double)));
  }
  void finish(const std::filesystem::path& path) {
    out_.flush();
    if (!out_) throw DataError("failed writing checkpoint: " + path.string());
  }

 private:
  std::ofstream out_;
};

class Reader {
 public:
  explicit Reader(const std::filesystem::path& path) : path_(path), in_(path, std::ios::binary) {
    if (!in_) throw DataError("cannot open checkpoint: " + path.string());
  }
  template <typename T>
  T pod() {
    T v{};
    in_.read(reinterpret_cast<char*>(&v), sizeof(T));
    check();
    return v;
  }
  std::string str() {
    const auto n = pod<std::uint32_t>();
    std::string s(n, '\0');
    in_.read(s.data(), n);
    check();
    return s;
  }
  void doubles(std::span<double> d) {
    in_.read(reinterpret_cast<char*>(d.data()), static_cast<std::streamsize>(d.size() * sizeof(double)));
    check();
  }
  void bytes(char* dst, std::size_t n) {
    in_.read(dst, static_cast<std::streamsize>(n));
    check();
  }

 private:
  void check() {
    if (!in_) throw DataError("truncated checkpoint: " + path_.string());
  }
  std::filesystem::path path_;
  std::ifstream in_;
};

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  Writer w(path);
  for (char c : kCheckpointMagic) w.pod(c);
  w.pod(kCheckpointVersion);
  w.pod(static_cast<std::uint32_t>(ckpt.metadata.size()));
  for (const auto& [k, v] : ckpt.metadata) {
    w.str(k);
    w.str(v);
  }
  w.pod(static_cast<std::uint64_t>(ckpt.params.step()));
  w.pod(static_cast<std::uint32_t>(ckpt.params.slots().size()));
  for (const auto& [name, slot] : ckpt.params.slots()) {
    w.str(name);
    w.pod(static_cast<std::uint64_t>(slot.value.rows()));
    w.pod(static_cast<std::uint64_t>(slot.value.cols()));
    w.doubles(slot.value.data());
    w.doubles(slot.first_moment.data());
    w.doubles(slot.second_moment.data());
  }
  w.finish(path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  Reader r(path);
  char magic[sizeof(kCheckpointMagic)];
  r.bytes(magic, sizeof(magic));
  if (std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0) {
    throw DataError("not a GATE checkpoint (bad magic): " + path.string());
  }
  const auto version = r.pod<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw DataError("unsupported checkpoint version " + std::to_string(version) + ": " + path.string());
  }
  Checkpoint ckpt;
  const auto n_meta = r.pod<std::uint32_t>();
  for (std::uint32_t i = 0; i < n_meta; ++i) {
    auto k = r.str();
    ckpt.metadata[k] = r.str();
  }
  const auto step = r.pod<std::uint64_t>();
  const auto n_slots = r.pod<std::uint32_t>();
  for (std::uint32_t i = 0; i < n_slots; ++i) {
    const auto name = r.str();
    const auto rows = r.pod<std::uint64_t>();
    const auto cols = r.pod<std::uint64_t>();
    Matrix value(rows, cols);
    r.doubles(value.data());
    ckpt.params.add(name, std::move(value));
    auto& slot = ckpt.params.slot(name);
    r.doubles(slot.first_moment.data());
    r.doubles(slot.second_moment.data());
  }
  ckpt.params.set_step(step);
  return ckpt;
}

}  // namespace gate
