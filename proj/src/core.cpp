#include "dusa/core.hpp"

namespace dusa {

ParamSet merge(const ParamSet& a, const ParamSet& b) {
  ParamSet out = a;
  for (const auto& [name, value] : b)
    if (!out.emplace(name, value).second) throw std::invalid_argument("merge: duplicate parameter " + name);
  return out;
}

ParamSet subset(const ParamSet& all, const std::string& prefix) {
  ParamSet out;
  for (auto it = all.lower_bound(prefix); it != all.end() && it->first.compare(0, prefix.size(), prefix) == 0; ++it)
    out.emplace(it->first, it->second);
  return out;
}

Index count(const ParamSet& params) {
  Index n = 0;
  for (const auto& [name, value] : params) n += value.size();
  return n;
}

std::uint64_t fnv1a64(const void* data, std::size_t size, std::uint64_t seed) {
  const auto* bytes = static_cast<const unsigned char*>(data);
  std::uint64_t h = seed;
  for (std::size_t i = 0; i < size; ++i) {
    h ^= bytes[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace dusa
