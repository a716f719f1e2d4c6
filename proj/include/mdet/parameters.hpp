#pragma once

#include "mdet/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace mdet {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Learnable weights addressed by slash-separated path, each with a gradient
/// slot of the same shape. Master copies are 64-bit regardless of the
/// precision a model evaluates in. Iteration order is insertion order.
class ParameterStore {
 public:
  struct Entry {
    std::string path;
    Tensor<double> value;
    Tensor<double> grad;
  };

  void add(const std::string& path, Tensor<double> value);

  bool contains(const std::string& path) const { return index_.count(path) != 0; }
  std::size_t size() const { return entries_.size(); }
  Index element_count() const;

  Entry& entry(const std::string& path);
  const Entry& entry(const std::string& path) const;
  std::vector<Entry>& entries() { return entries_; }
  const std::vector<Entry>& entries() const { return entries_; }

  const Tensor<double>& value(const std::string& path) const { return entry(path).value; }
  Tensor<double>& value(const std::string& path) { return entry(path).value; }

  void zero_grad();

  /// Binary checkpoint: version byte, u64 entry count, then per entry a
  /// u32-length-prefixed path, u32 rank and u64 extents, followed by every
  /// value as little-endian IEEE-754 binary64 in table order.
  void write_checkpoint(std::ostream& out) const;
  void save(const std::filesystem::path& file) const;
  /// Loads values into an existing store; every path and shape must match.
  void read_checkpoint(std::istream& in);
  void load(const std::filesystem::path& file);

  static constexpr std::uint8_t kCheckpointVersion = 1;

 private:
  std::vector<Entry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Per-parameter gradient accumulator aligned with a ParameterStore's order.
struct GradientBuffer {
  std::vector<Tensor<double>> grads;

  explicit GradientBuffer(const ParameterStore& store);
  void zero();
  GradientBuffer& operator+=(const GradientBuffer& other);
  double global_norm() const;
};

}  // namespace mdet
