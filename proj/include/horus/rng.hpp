#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace horus {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// Independent stream for (seed, tag...). Streams depend only on the tags, never on which thread
// or in which order they are created.
inline std::mt19937_64 make_stream(std::uint64_t seed, std::initializer_list<std::uint64_t> tags) {
  std::uint64_t h = splitmix64(seed);
  for (std::uint64_t t : tags) h = splitmix64(h ^ splitmix64(t));
  return std::mt19937_64(h);
}

// Stream tags.
enum class StreamTag : std::uint64_t {
  Task = 1,
  Partition,
  Split,
  BackboneInit,
  Warmup,
  LoraInit,
  GlobalInit,
  Participation,
  ParticipationRate,
  Training,
  Attack,
};

inline std::uint64_t tag(StreamTag t) { return static_cast<std::uint64_t>(t); }

}  // namespace horus
