#include "dynlab/parallel.hpp"

#include <cstdlib>
#include <string>

namespace dynlab {

unsigned default_threads() {
  if (const char* env = std::getenv("RNN_DYNLAB_THREADS")) {
    try {
      const int n = std::stoi(env);
      if (n > 0) return static_cast<unsigned>(n);
    } catch (...) {
    }
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : hw;
}

}  // namespace dynlab
