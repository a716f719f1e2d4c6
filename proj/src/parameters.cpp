#include "mdet/parameters.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

namespace mdet {
namespace {

template <typename U>
void put_le(std::ostream& out, U v) {
  unsigned char bytes[sizeof(U)];
  for (std::size_t i = 0; i < sizeof(U); ++i) bytes[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFF);
  out.write(reinterpret_cast<const char*>(bytes), sizeof(U));
}

template <typename U>
U get_le(std::istream& in) {
  unsigned char bytes[sizeof(U)];
  if (!in.read(reinterpret_cast<char*>(bytes), sizeof(U))) throw CheckpointError("checkpoint: truncated file");
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(bytes[i]) << (8 * i);
  return v;
}

}  // namespace

void ParameterStore::add(const std::string& path, Tensor<double> value) {
  if (contains(path)) throw std::invalid_argument("parameter store: duplicate path " + path);
  index_.emplace(path, entries_.size());
  Tensor<double> grad(value.shape());
  entries_.push_back(Entry{path, std::move(value), std::move(grad)});
}

Index ParameterStore::element_count() const {
  Index n = 0;
  for (const auto& e : entries_) n += e.value.size();
  return n;
}

ParameterStore::Entry& ParameterStore::entry(const std::string& path) {
  auto it = index_.find(path);
  if (it == index_.end()) throw std::out_of_range("parameter store: no parameter " + path);
  return entries_[it->second];
}

const ParameterStore::Entry& ParameterStore::entry(const std::string& path) const {
  return const_cast<ParameterStore*>(this)->entry(path);
}

void ParameterStore::zero_grad() {
  for (auto& e : entries_) e.grad.array().setZero();
}

void ParameterStore::write_checkpoint(std::ostream& out) const {
  out.put(static_cast<char>(kCheckpointVersion));
  put_le<std::uint64_t>(out, entries_.size());
  for (const auto& e : entries_) {
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(e.path.size()));
    out.write(e.path.data(), static_cast<std::streamsize>(e.path.size()));
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(e.value.rank()));
    for (Index extent : e.value.shape()) put_le<std::uint64_t>(out, static_cast<std::uint64_t>(extent));
  }
  for (const auto& e : entries_) {
    for (Index k = 0; k < e.value.size(); ++k) put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(e.value[k]));
  }
  if (!out) throw CheckpointError("checkpoint: write failed");
}

void ParameterStore::save(const std::filesystem::path& file) const {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw CheckpointError("checkpoint: cannot open " + file.string() + " for writing");
  write_checkpoint(out);
}

void ParameterStore::read_checkpoint(std::istream& in) {
  const int version = in.get();
  if (version != kCheckpointVersion) {
    throw CheckpointError("checkpoint: unsupported version " + std::to_string(version));
  }
  const auto count = get_le<std::uint64_t>(in);
  if (count != entries_.size()) {
    throw CheckpointError("checkpoint: holds " + std::to_string(count) + " parameters, model expects " +
                          std::to_string(entries_.size()));
  }
  std::vector<std::size_t> order;
  for (std::uint64_t k = 0; k < count; ++k) {
    const auto len = get_le<std::uint32_t>(in);
    std::string path(len, '\0');
    if (!in.read(path.data(), len)) throw CheckpointError("checkpoint: truncated path table");
    const auto rank = get_le<std::uint32_t>(in);
    Shape shape(rank);
    for (auto& extent : shape) extent = static_cast<Index>(get_le<std::uint64_t>(in));
    auto it = index_.find(path);
    if (it == index_.end()) throw CheckpointError("checkpoint: unknown parameter " + path);
    if (entries_[it->second].value.shape() != shape) {
      throw CheckpointError("checkpoint: shape " + shape_string(shape) + " for " + path + ", model expects " +
                            shape_string(entries_[it->second].value.shape()));
    }
    order.push_back(it->second);
  }
  for (std::size_t idx : order) {
    auto& value = entries_[idx].value;
    for (Index k = 0; k < value.size(); ++k) value[k] = std::bit_cast<double>(get_le<std::uint64_t>(in));
  }
}

void ParameterStore::load(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw CheckpointError("checkpoint: cannot open " + file.string());
  read_checkpoint(in);
}

GradientBuffer::GradientBuffer(const ParameterStore& store) {
  grads.reserve(store.size());
  for (const auto& e : store.entries()) grads.emplace_back(e.value.shape());
}

void GradientBuffer::zero() {
  for (auto& g : grads) g.array().setZero();
}

GradientBuffer& GradientBuffer::operator+=(const GradientBuffer& other) {
  for (std::size_t k = 0; k < grads.size(); ++k) grads[k].array() += other.grads[k].array();
  return *this;
}

double GradientBuffer::global_norm() const {
  double sq = 0;
  for (const auto& g : grads) sq += g.array().square().sum();
  return std::sqrt(sq);
}

}  // namespace mdet
