#include "qfl/random.hpp"

namespace qfl {

RandomStream RandomStream::derive(std::uint64_t seed,
                                  std::initializer_list<std::uint64_t> path) {
  std::uint64_t h = mix(seed);
  for (std::uint64_t tag : path) {
    h = mix(h ^ mix(tag + 0x632be59bd9b4e019ULL));
  }
  return RandomStream(h);
}

}  // namespace qfl
