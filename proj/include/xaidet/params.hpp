#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>

#include "xaidet/tensor.hpp"

namespace xaidet {

/// Named parameter collection. Iteration order is the map order (sorted by
/// name), which keeps checksums and serialization stable.
struct ParamSet {
  std::map<std::string, Tensor> entries;

  bool has(const std::string& name) const { return entries.count(name) != 0; }

  Tensor& at(const std::string& name) {
    auto it = entries.find(name);
    if (it == entries.end()) throw std::out_of_range("no parameter named '" + name + "'");
    return it->second;
  }
  const Tensor& at(const std::string& name) const {
    auto it = entries.find(name);
    if (it == entries.end()) throw std::out_of_range("no parameter named '" + name + "'");
    return it->second;
  }

  void add(const std::string& name, Tensor t) {
    if (!entries.emplace(name, std::move(t)).second)
      throw std::invalid_argument("duplicate parameter name '" + name + "'");
  }

  bool same_shapes(const ParamSet& o) const {
    if (entries.size() != o.entries.size()) return false;
    for (const auto& [name, t] : entries) {
      auto it = o.entries.find(name);
      if (it == o.entries.end() || it->second.shape() != t.shape()) return false;
    }
    return true;
  }

  bool all_finite() const {
    for (const auto& [name, t] : entries)
      if (!t.all_finite()) return false;
    return true;
  }

  std::uint64_t checksum() const {
    Fnv64 f;
    for (const auto& [name, t] : entries) {
      f.update(name);
      std::uint64_t c = t.checksum();
      f.update_pod(c);
    }
    return f.digest();
  }
};

/// Adam moment buffers; shapes mirror the ParamSet they were created from.
struct AdamState {
  ParamSet m;
  ParamSet v;
  std::int64_t t = 0;

  static AdamState zeros_like(const ParamSet& params) {
    AdamState s;
    for (const auto& [name, p] : params.entries) {
      s.m.add(name, Tensor::zeros(p.shape()));
      s.v.add(name, Tensor::zeros(p.shape()));
    }
    s.t = 0;
    return s;
  }
};

struct AdamOptions {
  float lr = 1e-3f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float eps = 1e-8f;
};

/// Bias-corrected Adam update, in place; state.t advances by one.
void adam_step(ParamSet& params, const ParamSet& grads, AdamState& state,
               const AdamOptions& opt = {});

}  // namespace xaidet
