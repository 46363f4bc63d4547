#pragma once

#include <cstdint>
#include <cstddef>
#include <string>
#include <string_view>
#include <type_traits>

namespace xaidet {

// FNV-1a 64-bit, used for corpus/model fingerprints and config hashes.
class Fnv64 {
 public:
  void update(const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h_ ^= p[i];
      h_ *= 1099511628211ULL;
    }
  }
  void update(std::string_view s) { update(s.data(), s.size()); }
  template <typename T>
  void update_pod(const T& v) {
    static_assert(std::is_trivially_copyable_v<T>);
    update(&v, sizeof(T));
  }
  std::uint64_t digest() const { return h_; }

  std::string hex() const {
    static const char* k = "0123456789abcdef";
    std::string out(16, '0');
    std::uint64_t v = h_;
    for (int i = 15; i >= 0; --i) {
      out[static_cast<std::size_t>(i)] = k[v & 0xF];
      v >>= 4;
    }
    return out;
  }

 private:
  std::uint64_t h_ = 1469598103934665603ULL;
};

inline std::uint64_t fnv64(std::string_view s) {
  Fnv64 f;
  f.update(s);
  return f.digest();
}

}  // namespace xaidet
