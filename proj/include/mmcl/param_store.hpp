#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "mmcl/error.hpp"
#include "mmcl/matrix.hpp"

namespace mmcl {

// All trainable weights live here, each paired with a gradient buffer of the
// same shape. Iteration follows insertion order, so optimizer sweeps and
// checkpoint layout are deterministic. Gradients accumulate; callers zero
// them between steps.
class ParamStore {
 public:
  struct Entry {
    std::string name;
    Matrix value;
    Matrix grad;
  };

  Matrix& add(const std::string& name, Matrix init) {
    if (index_.count(name)) throw_config("ParamStore: duplicate parameter '" + name + "'");
    index_[name] = entries_.size();
    entries_.push_back({name, std::move(init), Matrix()});
    Entry& e = entries_.back();
    e.grad = Matrix::zeros(e.value.rows(), e.value.cols());
    return e.value;
  }

  bool has(const std::string& name) const { return index_.count(name) != 0; }

  Matrix& value(const std::string& name) { return entry(name).value; }
  const Matrix& value(const std::string& name) const { return entry(name).value; }
  Matrix& grad(const std::string& name) { return entry(name).grad; }
  const Matrix& grad(const std::string& name) const { return entry(name).grad; }

  size_t size() const { return entries_.size(); }
  std::vector<Entry>& entries() { return entries_; }
  const std::vector<Entry>& entries() const { return entries_; }

  void zero_grads() {
    for (Entry& e : entries_)
      std::fill(e.grad.data().begin(), e.grad.data().end(), 0.0);
  }

  size_t num_scalars() const {
    size_t n = 0;
    for (const Entry& e : entries_) n += e.value.size();
    return n;
  }

  // FNV over the raw value bytes; used by tests to assert parameters frozen.
  uint64_t value_checksum() const {
    uint64_t h = 0xcbf29ce484222325ull;
    auto mix = [&h](const void* p, size_t n) {
      const unsigned char* b = static_cast<const unsigned char*>(p);
      for (size_t i = 0; i < n; ++i) {
        h ^= b[i];
        h *= 0x100000001b3ull;
      }
    };
    for (const Entry& e : entries_) {
      mix(e.name.data(), e.name.size());
      mix(e.value.data().data(), e.value.size() * sizeof(double));
    }
    return h;
  }

 private:
  Entry& entry(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw_config("ParamStore: unknown parameter '" + name + "'");
    return entries_[it->second];
  }
  const Entry& entry(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw_config("ParamStore: unknown parameter '" + name + "'");
    return entries_[it->second];
  }

  std::vector<Entry> entries_;
  std::unordered_map<std::string, size_t> index_;
};

}  // namespace mmcl
