#include "concept_canvas/nn/weights_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <unordered_map>

#include "concept_canvas/common/error.hpp"
#include "concept_canvas/common/files.hpp"

namespace canvas::nn {
namespace {

static_assert(std::endian::native == std::endian::little, "weight archives assume a little-endian host");

constexpr char kMagic[8] = {'C', 'C', 'W', 'E', 'I', 'G', 'H', 'T'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::vector<std::uint8_t>& out, T value) {
  const auto* p = reinterpret_cast<const std::uint8_t*>(&value);
  out.insert(out.end(), p, p + sizeof(T));
}

class Reader {
 public:
  Reader(const std::vector<std::uint8_t>& bytes, std::string source) : bytes_(bytes), source_(std::move(source)) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T value;
    std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }
  void read(void* dst, std::size_t n) {
    need(n);
    std::memcpy(dst, bytes_.data() + pos_, n);
    pos_ += n;
  }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) fail(ErrorKind::kDataError, source_ + ": truncated weight archive");
  }
  const std::vector<std::uint8_t>& bytes_;
  std::string source_;
  std::size_t pos_ = 0;
};

std::string dims_str(const std::vector<int>& dims) {
  std::string s = "[";
  for (std::size_t i = 0; i < dims.size(); ++i) s += (i ? "," : "") + std::to_string(dims[i]);
  return s + "]";
}

}  // namespace

void save_arrays(const std::filesystem::path& path, const std::vector<NamedArray>& arrays) {
  std::vector<std::uint8_t> out(kMagic, kMagic + 8);
  put<std::uint32_t>(out, kVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(arrays.size()));
  for (const auto& a : arrays) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(a.name.size()));
    out.insert(out.end(), a.name.begin(), a.name.end());
    put<std::uint32_t>(out, static_cast<std::uint32_t>(a.dims.size()));
    for (int d : a.dims) put<std::int64_t>(out, d);
    const auto* p = reinterpret_cast<const std::uint8_t*>(a.values.data());
    out.insert(out.end(), p, p + a.values.size() * sizeof(double));
  }
  write_bytes_atomic(path, out);
}

std::vector<NamedArray> load_arrays(const std::filesystem::path& path) {
  const auto bytes = read_bytes(path);
  Reader r(bytes, path.string());
  char magic[8];
  r.read(magic, 8);
  if (std::memcmp(magic, kMagic, 8) != 0) fail(ErrorKind::kDataError, path.string() + ": not a weight archive");
  if (r.get<std::uint32_t>() != kVersion) fail(ErrorKind::kDataError, path.string() + ": unsupported archive version");
  const auto count = r.get<std::uint32_t>();
  std::vector<NamedArray> arrays(count);
  for (auto& a : arrays) {
    a.name.resize(r.get<std::uint32_t>());
    r.read(a.name.data(), a.name.size());
    const auto ndim = r.get<std::uint32_t>();
    std::size_t n = 1;
    for (std::uint32_t i = 0; i < ndim; ++i) {
      const auto d = r.get<std::int64_t>();
      if (d < 0) fail(ErrorKind::kDataError, path.string() + ": negative dimension");
      a.dims.push_back(static_cast<int>(d));
      n *= static_cast<std::size_t>(d);
    }
    a.values.resize(n);
    r.read(a.values.data(), n * sizeof(double));
  }
  return arrays;
}

std::vector<NamedArray> export_params(const Sequential& net, const std::string& prefix) {
  std::vector<NamedArray> out;
  for (std::size_t i = 0; i < net.size(); ++i) {
    const std::string base = prefix + (net.name(i).empty() ? "layer" + std::to_string(i) : net.name(i));
    for (const auto& p : net.layer(i).params()) out.push_back({base + "." + p.name, p.dims, p.value});
  }
  return out;
}

void import_params(Sequential& net, const std::vector<NamedArray>& arrays, const std::string& prefix) {
  std::unordered_map<std::string, const NamedArray*> by_name;
  for (const auto& a : arrays) by_name[a.name] = &a;
  for (std::size_t i = 0; i < net.size(); ++i) {
    const std::string base = prefix + (net.name(i).empty() ? "layer" + std::to_string(i) : net.name(i));
    for (auto& p : net.layer(i).params()) {
      const std::string key = base + "." + p.name;
      auto it = by_name.find(key);
      if (it == by_name.end()) fail(ErrorKind::kDataError, "weight archive is missing '" + key + "'");
      if (it->second->dims != p.dims) {
        fail(ErrorKind::kDataError, "shape mismatch for '" + key + "': archive " + dims_str(it->second->dims) +
                                        ", model " + dims_str(p.dims));
      }
      p.value = it->second->values;
    }
  }
}

}  // namespace canvas::nn
