#include "shseed/parallel.hpp"

#include <cstdlib>
#include <string>

namespace shseed {

namespace {
std::atomic<unsigned> override_count{0};
}  // namespace

void set_worker_count(unsigned count) { override_count = count; }

unsigned worker_count() {
  if (const unsigned n = override_count.load(); n > 0) return n;
  static const unsigned count = [] {
    if (const char* env = std::getenv("SHSEED_THREADS")) {
      try {
        const int n = std::stoi(env);
        if (n >= 1) return static_cast<unsigned>(n);
      } catch (const std::exception&) {
      }
    }
    return std::max(1u, std::thread::hardware_concurrency());
  }();
  return count;
}

}  // namespace shseed
