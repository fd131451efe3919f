#pragma once

namespace font::kernels {

enum class Exec { serial, parallel };

// Process-wide kernel execution mode. Defaults to parallel unless
// FONT_THREADS=1 is set in the environment. Serial and parallel variants of
// every kernel compute each output element with the same inner loop order, so
// results are bitwise identical either way; the switch exists for the
// benchmark target and for pinning single-threaded runs.
Exec exec_mode();
void set_exec_mode(Exec mode);

// Thread count the parallel variants use (OpenMP). 0 = library default.
int num_threads();
void set_num_threads(int n);

}  // namespace font::kernels
