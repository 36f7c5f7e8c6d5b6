#include "agcl/data/container.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace agcl::data {

static_assert(std::endian::native == std::endian::little,
              "tensor files are written with the host byte order");

namespace {

constexpr std::array<char, 4> kMagic{'A', 'G', 'T', '1'};
constexpr std::uint32_t kMaxRank = 16;

template <typename V>
void put(std::ostream& out, V v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(V));
}

template <typename V>
V get(std::istream& in, const std::string& name, const char* what) {
  V v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(V))) {
    throw CorruptionError(name + ": truncated while reading " + what);
  }
  return v;
}

template <typename T>
Tensor<T> read_payload(std::istream& in, const std::string& name, Shape shape) {
  Tensor<T> t(std::move(shape));
  const auto bytes = static_cast<std::streamsize>(t.numel() * sizeof(T));
  if (!in.read(reinterpret_cast<char*>(t.data()), bytes)) {
    throw CorruptionError(name + ": truncated payload, expected " + std::to_string(bytes) +
                          " bytes for shape " + shape_string(t.shape()));
  }
  return t;
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw StructuralError("missing file " + path.string());
  return in;
}

}  // namespace

std::string dtype_name(DType d) {
  switch (d) {
    case DType::f32: return "f32";
    case DType::f64: return "f64";
    case DType::u8: return "u8";
  }
  return "?";
}

DType dtype_from_name(const std::string& name) {
  if (name == "f32") return DType::f32;
  if (name == "f64") return DType::f64;
  if (name == "u8") return DType::u8;
  throw CorruptionError("unknown dtype name '" + name + "'");
}

template <typename T>
void write_tensor(std::ostream& out, const Tensor<T>& t) {
  out.write(kMagic.data(), kMagic.size());
  put<std::uint32_t>(out, static_cast<std::uint32_t>(dtype_of<T>()));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
  for (auto e : t.shape()) put<std::uint64_t>(out, e);
  out.write(reinterpret_cast<const char*>(t.data()),
            static_cast<std::streamsize>(t.numel() * sizeof(T)));
}

template <typename T>
void write_tensor(const std::filesystem::path& path, const Tensor<T>& t) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw StructuralError("cannot open " + path.string() + " for writing");
  write_tensor(out, t);
  if (!out) throw StructuralError("write failed for " + path.string());
}

AnyTensor read_any_tensor(std::istream& in, const std::string& name) {
  std::array<char, 4> magic{};
  if (!in.read(magic.data(), magic.size())) throw CorruptionError(name + ": truncated header");
  if (magic != kMagic) throw CorruptionError(name + ": bad magic, not an AGT1 tensor file");
  const auto code = get<std::uint32_t>(in, name, "dtype");
  const auto rank = get<std::uint32_t>(in, name, "rank");
  if (rank > kMaxRank) throw CorruptionError(name + ": implausible rank " + std::to_string(rank));
  Shape shape(rank);
  for (auto& e : shape) e = static_cast<std::size_t>(get<std::uint64_t>(in, name, "extents"));
  switch (code) {
    case 1: return read_payload<float>(in, name, std::move(shape));
    case 2: return read_payload<double>(in, name, std::move(shape));
    case 3: return read_payload<std::uint8_t>(in, name, std::move(shape));
    default: throw CorruptionError(name + ": unknown dtype code " + std::to_string(code));
  }
}

AnyTensor read_any_tensor(const std::filesystem::path& path) {
  auto in = open_in(path);
  return read_any_tensor(in, path.string());
}

template <typename T>
Tensor<T> read_tensor(std::istream& in, const std::string& name) {
  AnyTensor any = read_any_tensor(in, name);
  if (auto* t = std::get_if<Tensor<T>>(&any)) return std::move(*t);
  throw CorruptionError(name + ": stored dtype " + dtype_name(header_of(any).dtype) +
                        ", expected " + dtype_name(dtype_of<T>()));
}

template <typename T>
Tensor<T> read_tensor(const std::filesystem::path& path) {
  auto in = open_in(path);
  return read_tensor<T>(in, path.string());
}

TensorHeader header_of(const AnyTensor& t) {
  return std::visit(
      [](const auto& x) {
        using T = typename std::decay_t<decltype(x)>::value_type;
        return TensorHeader{dtype_of<T>(), x.shape()};
      },
      t);
}

std::uint64_t fnv1a64(const void* data, std::size_t n, std::uint64_t h) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t file_checksum(const std::filesystem::path& path) {
  auto in = open_in(path);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  std::array<char, 1 << 16> buf;
  while (in.read(buf.data(), buf.size()) || in.gcount() > 0) {
    h = fnv1a64(buf.data(), static_cast<std::size_t>(in.gcount()), h);
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

#define AGCL_INSTANTIATE(T)                                                    \
  template void write_tensor<T>(std::ostream&, const Tensor<T>&);             \
  template void write_tensor<T>(const std::filesystem::path&, const Tensor<T>&); \
  template Tensor<T> read_tensor<T>(std::istream&, const std::string&);       \
  template Tensor<T> read_tensor<T>(const std::filesystem::path&);

AGCL_INSTANTIATE(float)
AGCL_INSTANTIATE(double)
AGCL_INSTANTIATE(std::uint8_t)
#undef AGCL_INSTANTIATE

}  // namespace agcl::data
