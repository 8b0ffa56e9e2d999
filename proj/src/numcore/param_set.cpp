#include "awml/numcore/param_set.hpp"

#include <cmath>
#include <cstring>

#include "awml/common/error.hpp"

namespace awml::num {

void ParamSet::add(std::string name, Tensor value) {
  if (find(name) != entries_.size()) throw SchemaError("duplicate parameter name '" + name + "'");
  entries_.push_back({std::move(name), std::move(value)});
}

std::size_t ParamSet::total_len() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.value.size();
  return n;
}

std::size_t ParamSet::find(std::string_view name) const {
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].name == name) return i;
  }
  return entries_.size();
}

Tensor& ParamSet::at(std::string_view name) {
  const auto i = find(name);
  if (i == entries_.size()) throw SchemaError("no parameter named '" + std::string(name) + "'");
  return entries_[i].value;
}

const Tensor& ParamSet::at(std::string_view name) const {
  const auto i = find(name);
  if (i == entries_.size()) throw SchemaError("no parameter named '" + std::string(name) + "'");
  return entries_[i].value;
}

bool ParamSet::same_schema(const ParamSet& other) const {
  if (entries_.size() != other.entries_.size()) return false;
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].name != other.entries_[i].name) return false;
    if (entries_[i].value.shape() != other.entries_[i].value.shape()) return false;
  }
  return true;
}

void ParamSet::require_same_schema(const ParamSet& other, std::string_view what) const {
  if (!same_schema(other)) {
    throw SchemaError(std::string(what) + ": parameter schemas differ");
  }
}

ParamSet ParamSet::zeros_like() const {
  ParamSet out;
  out.entries_.reserve(entries_.size());
  for (const auto& e : entries_) out.entries_.push_back({e.name, Tensor(e.value.shape(), 0.0)});
  return out;
}

std::vector<double> ParamSet::flatten() const {
  std::vector<double> flat;
  flat.reserve(total_len());
  for (const auto& e : entries_) flat.insert(flat.end(), e.value.values().begin(), e.value.values().end());
  return flat;
}

void ParamSet::assign_flat(std::span<const double> flat) {
  if (flat.size() != total_len()) throw SchemaError("flat vector length does not match ParamSet");
  std::size_t offset = 0;
  for (auto& e : entries_) {
    std::memcpy(e.value.data(), flat.data() + offset, e.value.size() * sizeof(double));
    offset += e.value.size();
  }
}

bool operator==(const ParamSet& a, const ParamSet& b) {
  if (!a.same_schema(b)) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (std::memcmp(a.tensor(i).data(), b.tensor(i).data(), a.tensor(i).size() * sizeof(double)) != 0) {
      return false;
    }
  }
  return true;
}

namespace {

void check_gamma(double gamma) {
  if (!(gamma > 0.0 && gamma < 1.0)) {
    throw ConfigError("ema gamma must lie in (0, 1), got " + std::to_string(gamma));
  }
}

}  // namespace

void ema_blend_into(ParamSet& old, const ParamSet& fresh, double gamma) {
  check_gamma(gamma);
  old.require_same_schema(fresh, "ema_blend");
  const double w = 1.0 - gamma;
  for (std::size_t i = 0; i < old.size(); ++i) {
    double* o = old.tensor(i).data();
    const double* n = fresh.tensor(i).data();
    const auto len = old.tensor(i).size();
    for (std::size_t k = 0; k < len; ++k) o[k] = gamma * o[k] + w * n[k];
  }
}

ParamSet ema_blend(const ParamSet& old, const ParamSet& fresh, double gamma) {
  ParamSet out = old;
  ema_blend_into(out, fresh, gamma);
  return out;
}

double l2_distance(const ParamSet& a, const ParamSet& b) {
  a.require_same_schema(b, "l2_distance");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t k = 0; k < a.tensor(i).size(); ++k) {
      const double d = a.tensor(i)[k] - b.tensor(i)[k];
      acc += d * d;
    }
  }
  return std::sqrt(acc);
}

std::uint64_t fingerprint(const ParamSet& params) {
  std::uint64_t h = 1469598103934665603ULL;
  auto feed = [&h](const void* p, std::size_t n) {
    const auto* bytes = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= bytes[i];
      h *= 1099511628211ULL;
    }
  };
  for (const auto& e : params) {
    feed(e.name.data(), e.name.size());
    feed(e.value.data(), e.value.size() * sizeof(double));
  }
  return h;
}

}  // namespace awml::num
