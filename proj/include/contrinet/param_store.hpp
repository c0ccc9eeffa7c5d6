#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "contrinet/autograd.hpp"

namespace contrinet {

struct ParamEntry {
  Var var;
  bool trainable = true;
};

/// Flat, ordered map from hierarchical path ("mfm.level3.se.fc1.weight") to
/// tensor. Trainable entries are autograd leaves; buffers such as batch-norm
/// running statistics are stored with trainable = false.
class ParamStore {
 public:
  /// Registers a new tensor; duplicate paths are an error.
  Var add(const std::string& path, Tensor value, bool trainable = true);

  bool contains(const std::string& path) const;
  const Var& at(const std::string& path) const;
  Tensor& tensor(const std::string& path);
  const Tensor& tensor(const std::string& path) const;

  const std::map<std::string, ParamEntry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }

  /// Number of trainable scalars.
  std::int64_t trainable_count() const;
  std::vector<std::string> keys() const;

  void zero_grad();
  /// Copies every value from `other`; key sets and shapes must agree.
  void copy_values_from(const ParamStore& other);

 private:
  std::map<std::string, ParamEntry> entries_;
};

void write_params(std::ostream& out, const ParamStore& store);
/// Throws FormatError naming the entry at which parsing failed.
ParamStore read_params(std::istream& in);

void save_params(const ParamStore& store, const std::filesystem::path& path);
ParamStore load_params(const std::filesystem::path& path);

/// FNV-1a over raw bytes.
std::uint64_t fnv1a(const void* data, std::size_t size, std::uint64_t seed = 14695981039346656037ULL);

}  // namespace contrinet
