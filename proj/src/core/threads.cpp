#include "font/core/threads.hpp"

#include <atomic>
#include <cstdlib>
#include <string>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace font::kernels {

namespace {

Exec initial_mode() {
  if (const char* env = std::getenv("FONT_THREADS")) {
    if (std::string(env) == "1") return Exec::serial;
  }
  return Exec::parallel;
}

std::atomic<Exec> g_mode{initial_mode()};
std::atomic<int> g_threads{0};

}  // namespace

Exec exec_mode() { return g_mode.load(std::memory_order_relaxed); }

void set_exec_mode(Exec mode) { g_mode.store(mode, std::memory_order_relaxed); }

int num_threads() {
  int n = g_threads.load(std::memory_order_relaxed);
  if (n > 0) return n;
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

void set_num_threads(int n) {
  g_threads.store(n, std::memory_order_relaxed);
#ifdef _OPENMP
  if (n > 0) omp_set_num_threads(n);
#endif
}

}  // namespace font::kernels
