#include "contrinet/param_store.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

#include "binary_io.hpp"
#include "contrinet/errors.hpp"

namespace contrinet {
namespace {

constexpr char kMagic[4] = {'C', 'T', 'N', 'P'};
constexpr std::uint32_t kVersion = 1;

std::uint64_t entry_hash(const std::string& key, bool trainable, const Shape& shape, std::span<const double> data) {
  std::uint64_t h = fnv1a(key.data(), key.size());
  const std::uint8_t t = trainable ? 1 : 0;
  h = fnv1a(&t, 1, h);
  h = fnv1a(shape.data(), sizeof(int) * shape.size(), h);
  return fnv1a(data.data(), data.size() * sizeof(double), h);
}

}  // namespace

std::uint64_t fnv1a(const void* data, std::size_t size, std::uint64_t seed) {
  const auto* bytes = static_cast<const unsigned char*>(data);
  std::uint64_t h = seed;
  for (std::size_t i = 0; i < size; ++i) {
    h ^= bytes[i];
    h *= 1099511628211ULL;
  }
  return h;
}

Var ParamStore::add(const std::string& path, Tensor value, bool trainable) {
  if (path.empty()) throw std::invalid_argument("parameter path must not be empty");
  Var var = Var::leaf(std::move(value), trainable);
  if (!entries_.emplace(path, ParamEntry{var, trainable}).second) {
    throw std::invalid_argument("duplicate parameter path '" + path + "'");
  }
  return var;
}

bool ParamStore::contains(const std::string& path) const { return entries_.count(path) != 0; }

const Var& ParamStore::at(const std::string& path) const {
  auto it = entries_.find(path);
  if (it == entries_.end()) throw std::out_of_range("no parameter '" + path + "'");
  return it->second.var;
}

Tensor& ParamStore::tensor(const std::string& path) {
  Var v = at(path);
  return v.mutable_value();
}

const Tensor& ParamStore::tensor(const std::string& path) const { return at(path).value(); }

std::int64_t ParamStore::trainable_count() const {
  std::int64_t n = 0;
  for (const auto& [_, e] : entries_) {
    if (e.trainable) n += static_cast<std::int64_t>(e.var.value().numel());
  }
  return n;
}

std::vector<std::string> ParamStore::keys() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& [k, _] : entries_) out.push_back(k);
  return out;
}

void ParamStore::zero_grad() {
  for (auto& [_, e] : entries_) {
    if (e.trainable) e.var.zero_grad();
  }
}

void ParamStore::copy_values_from(const ParamStore& other) {
  if (other.size() != size()) throw std::invalid_argument("parameter stores differ in size");
  for (auto& [k, e] : entries_) {
    const Tensor& src = other.tensor(k);
    require_same_shape(e.var.shape(), src.shape(), k.c_str());
    e.var.mutable_value() = src;
  }
}

void write_params(std::ostream& out, const ParamStore& store) {
  if (store.empty()) throw std::invalid_argument("empty parameter store");
  out.write(kMagic, sizeof(kMagic));
  detail::write_pod(out, kVersion);
  detail::write_pod<std::uint64_t>(out, store.size());
  for (const auto& [key, e] : store.entries()) {
    const Tensor& t = e.var.value();
    if (t.is_meta()) throw std::invalid_argument("cannot serialise shape-only parameter '" + key + "'");
    detail::write_string(out, key);
    detail::write_pod<std::uint8_t>(out, e.trainable ? 1 : 0);
    for (int d : t.shape()) detail::write_pod<std::int32_t>(out, d);
    out.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.numel() * sizeof(double)));
    detail::write_pod(out, entry_hash(key, e.trainable, t.shape(), t.storage()));
  }
  if (!out) throw std::runtime_error("failed writing parameter store");
}

ParamStore read_params(std::istream& in) {
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) throw FormatError("not a parameter store (bad magic)");
  const auto version = detail::read_pod<std::uint32_t>(in, "header");
  if (version != kVersion) throw FormatError("unsupported parameter store version " + std::to_string(version));
  const auto count = detail::read_pod<std::uint64_t>(in, "header");
  if (count == 0) throw FormatError("empty parameter store");
  ParamStore store;
  std::string previous = "<start>";
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::string key = detail::read_string(in, "entry after '" + previous + "'", 4096);
    const std::string ctx = "parameter '" + key + "'";
    const bool trainable = detail::read_pod<std::uint8_t>(in, ctx) != 0;
    Shape shape{};
    for (int& d : shape) {
      d = detail::read_pod<std::int32_t>(in, ctx);
      if (d < 0 || d > (1 << 24)) throw FormatError("invalid shape in " + ctx);
    }
    std::vector<double> data(shape_numel(shape));
    if (!in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(data.size() * sizeof(double)))) {
      throw FormatError("truncated data while reading " + ctx);
    }
    const auto stored = detail::read_pod<std::uint64_t>(in, ctx);
    if (stored != entry_hash(key, trainable, shape, data)) throw FormatError("checksum mismatch in " + ctx);
    if (store.contains(key)) throw FormatError("duplicate " + ctx);
    store.add(key, Tensor(shape, std::move(data)), trainable);
    previous = key;
  }
  return store;
}

void save_params(const ParamStore& store, const std::filesystem::path& path) {
  if (store.empty()) throw std::invalid_argument("empty parameter store");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  write_params(out, store);
}

ParamStore load_params(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open parameter file " + path.string());
  return read_params(in);
}

}  // namespace contrinet
