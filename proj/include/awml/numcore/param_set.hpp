#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "awml/numcore/tensor.hpp"

namespace awml::num {

// Named, ordered collection of parameter tensors. Iteration order is the
// insertion order, which makes flattening and checkpoints stable.
class ParamSet {
 public:
  struct Entry {
    std::string name;
    Tensor value;
  };

  void add(std::string name, Tensor value);

  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  std::size_t total_len() const;

  const Entry& entry(std::size_t i) const { return entries_[i]; }
  Tensor& tensor(std::size_t i) { return entries_[i].value; }
  const Tensor& tensor(std::size_t i) const { return entries_[i].value; }

  // Index of `name`, or size() when absent.
  std::size_t find(std::string_view name) const;
  Tensor& at(std::string_view name);
  const Tensor& at(std::string_view name) const;

  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

  bool same_schema(const ParamSet& other) const;
  // Throws SchemaError naming `what` when schemas differ.
  void require_same_schema(const ParamSet& other, std::string_view what) const;

  ParamSet zeros_like() const;
  std::vector<double> flatten() const;
  void assign_flat(std::span<const double> flat);

  friend bool operator==(const ParamSet& a, const ParamSet& b);

 private:
  std::vector<Entry> entries_;
};

// gamma * old + (1 - gamma) * fresh, elementwise. gamma must lie in (0, 1).
ParamSet ema_blend(const ParamSet& old, const ParamSet& fresh, double gamma);
void ema_blend_into(ParamSet& old, const ParamSet& fresh, double gamma);

double l2_distance(const ParamSet& a, const ParamSet& b);

// FNV-1a over the raw bytes of every entry; used to detect mutation.
std::uint64_t fingerprint(const ParamSet& params);

}  // namespace awml::num
