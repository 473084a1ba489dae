#include "sgce/container.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "sgce/error.hpp"

namespace sgce {

namespace {

constexpr std::uint8_t kMagic[4] = {'S', 'G', 'C', 'E'};

template <typename T>
void put_le(std::vector<std::uint8_t>& out, T value) {
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<std::uint8_t>(value >> (8 * i)));
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  template <typename T>
  T get_le() {
    need(sizeof(T));
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(static_cast<T>(bytes_[pos_ + i]) << (8 * i));
    pos_ += sizeof(T);
    return v;
  }

  std::span<const std::uint8_t> take(std::size_t n) {
    need(n);
    auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
  }

  std::span<const std::uint8_t> rest() { return take(bytes_.size() - pos_); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw Error(ErrorKind::MalformedContainer, "truncated container");
  }
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

std::size_t dtype_size(DType d) { return d == DType::F32 ? 4 : 8; }

}  // namespace

ContainerEntry ContainerEntry::from_tensor(std::string name, const Tensor& t, DType dtype) {
  ContainerEntry e;
  e.name = std::move(name);
  e.dtype = dtype;
  e.shape = t.shape();
  if (dtype == DType::U64) throw Error(ErrorKind::MalformedContainer, "use from_u64 for integer data");
  e.payload.reserve(t.numel() * dtype_size(dtype));
  for (double v : t.data()) {
    if (dtype == DType::F64) {
      put_le(e.payload, std::bit_cast<std::uint64_t>(v));
    } else {
      put_le(e.payload, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
    }
  }
  return e;
}

ContainerEntry ContainerEntry::from_u64(std::string name, std::span<const std::uint64_t> values) {
  ContainerEntry e;
  e.name = std::move(name);
  e.dtype = DType::U64;
  e.shape = {values.size()};
  for (auto v : values) put_le(e.payload, v);
  return e;
}

Tensor ContainerEntry::to_tensor() const {
  if (dtype == DType::U64) throw Error(ErrorKind::MalformedContainer, name + " holds integers");
  Reader r(payload);
  std::vector<double> values(shape_numel(shape));
  for (double& v : values) {
    v = dtype == DType::F64 ? std::bit_cast<double>(r.get_le<std::uint64_t>())
                            : static_cast<double>(std::bit_cast<float>(r.get_le<std::uint32_t>()));
  }
  return Tensor(shape, std::move(values));
}

std::vector<std::uint64_t> ContainerEntry::to_u64() const {
  if (dtype != DType::U64) throw Error(ErrorKind::MalformedContainer, name + " is not u64");
  Reader r(payload);
  std::vector<std::uint64_t> values(shape_numel(shape));
  for (auto& v : values) v = r.get_le<std::uint64_t>();
  return values;
}

const ContainerEntry* Container::find(const std::string& name) const {
  for (const auto& e : entries)
    if (e.name == name) return &e;
  return nullptr;
}

const ContainerEntry& Container::at(const std::string& name) const {
  if (const auto* e = find(name)) return *e;
  throw Error(ErrorKind::MalformedContainer, "missing tensor " + name);
}

std::vector<std::uint8_t> serialize(const Container& c) {
  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  put_le<std::uint32_t>(out, kContainerVersion);
  put_le<std::uint64_t>(out, c.entries.size());
  for (const auto& e : c.entries) {
    if (e.shape.size() > 255) throw Error(ErrorKind::MalformedContainer, "too many dimensions");
    if (e.payload.size() != shape_numel(e.shape) * dtype_size(e.dtype)) {
      throw Error(ErrorKind::MalformedContainer, "payload size mismatch for " + e.name);
    }
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(e.name.size()));
    out.insert(out.end(), e.name.begin(), e.name.end());
    out.push_back(static_cast<std::uint8_t>(e.dtype));
    out.push_back(static_cast<std::uint8_t>(e.shape.size()));
    for (auto d : e.shape) put_le<std::uint64_t>(out, d);
    out.insert(out.end(), e.payload.begin(), e.payload.end());
  }
  put_le<std::uint64_t>(out, c.step);
  out.insert(out.end(), c.rng_state.begin(), c.rng_state.end());
  return out;
}

Container parse_container(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  auto magic = r.take(4);
  if (std::memcmp(magic.data(), kMagic, 4) != 0) {
    throw Error(ErrorKind::MalformedContainer, "bad magic");
  }
  if (const auto version = r.get_le<std::uint32_t>(); version != kContainerVersion) {
    throw Error(ErrorKind::MalformedContainer, "unsupported version " + std::to_string(version));
  }
  Container c;
  const auto count = r.get_le<std::uint64_t>();
  for (std::uint64_t i = 0; i < count; ++i) {
    ContainerEntry e;
    const auto name_len = r.get_le<std::uint32_t>();
    auto name = r.take(name_len);
    e.name.assign(name.begin(), name.end());
    const auto dtype = r.get_le<std::uint8_t>();
    if (dtype > 2) throw Error(ErrorKind::MalformedContainer, "unknown dtype code");
    e.dtype = static_cast<DType>(dtype);
    const auto ndim = r.get_le<std::uint8_t>();
    std::size_t numel = 1;
    for (std::uint8_t d = 0; d < ndim; ++d) {
      e.shape.push_back(r.get_le<std::uint64_t>());
      if (e.shape.back() != 0 && numel > (std::size_t{1} << 40) / e.shape.back()) {
        throw Error(ErrorKind::MalformedContainer, "tensor too large");
      }
      numel *= e.shape.back();
    }
    auto payload = r.take(numel * dtype_size(e.dtype));
    e.payload.assign(payload.begin(), payload.end());
    c.entries.push_back(std::move(e));
  }
  c.step = r.get_le<std::uint64_t>();
  auto rest = r.rest();
  c.rng_state.assign(rest.begin(), rest.end());
  return c;
}

void save_container(const std::filesystem::path& path, const Container& c) {
  const auto bytes = serialize(c);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::UnreadableFile, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

Container load_container(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::UnreadableFile, "cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_container(bytes);
}

}  // namespace sgce
