#include "helpd/numerics/checkpoint.h"

#include <bit>
#include <cstring>
#include <fstream>

namespace helpd {
namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

constexpr char kMagic[6] = {'H', 'E', 'L', 'P', 'D', '1'};

template <typename T>
void put(std::ofstream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::ifstream& is, const std::filesystem::path& path) {
  T v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(T))) {
    throw Error("checkpoint: truncated file " + path.string());
  }
  return v;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path,
                     const std::vector<NamedTensor>& tensors) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error("checkpoint: cannot open " + path.string());
  os.write(kMagic, sizeof(kMagic));
  put<std::uint8_t>(os, kDtypeCode);
  put<std::uint32_t>(os, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& nt : tensors) {
    put<std::uint32_t>(os, static_cast<std::uint32_t>(nt.name.size()));
    os.write(nt.name.data(), static_cast<std::streamsize>(nt.name.size()));
    put<std::uint32_t>(os, static_cast<std::uint32_t>(nt.tensor.rank()));
    for (auto d : nt.tensor.shape()) put<std::uint64_t>(os, d);
    os.write(reinterpret_cast<const char*>(nt.tensor.data()),
             static_cast<std::streamsize>(nt.tensor.size() * sizeof(Real)));
  }
  if (!os) throw Error("checkpoint: write failed for " + path.string());
}

std::vector<NamedTensor> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("checkpoint: cannot open " + path.string());
  char magic[6];
  if (!is.read(magic, sizeof(magic)) ||
      std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw Error("checkpoint: bad magic in " + path.string());
  }
  const auto dtype = get<std::uint8_t>(is, path);
  if (dtype != kDtypeF32 && dtype != kDtypeF64) {
    throw Error("checkpoint: unknown dtype code " + std::to_string(dtype));
  }
  const auto count = get<std::uint32_t>(is, path);
  std::vector<NamedTensor> out;
  out.reserve(count);
  for (std::uint32_t t = 0; t < count; ++t) {
    NamedTensor nt;
    nt.name.resize(get<std::uint32_t>(is, path));
    if (!is.read(nt.name.data(), static_cast<std::streamsize>(nt.name.size()))) {
      throw Error("checkpoint: truncated name in " + path.string());
    }
    Shape shape(get<std::uint32_t>(is, path));
    for (auto& d : shape) d = static_cast<std::size_t>(get<std::uint64_t>(is, path));
    std::vector<Real> values(shape_numel(shape));
    for (auto& v : values) {
      v = dtype == kDtypeF64 ? Real(get<double>(is, path))
                             : Real(get<float>(is, path));
    }
    nt.tensor = Tensor(std::move(shape), std::move(values));
    out.push_back(std::move(nt));
  }
  return out;
}

}  // namespace helpd
