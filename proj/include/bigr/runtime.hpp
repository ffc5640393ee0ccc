#pragma once

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace bigr {

// Training allocates and frees many equally sized activation buffers; with
// glibc's default thresholds each one becomes an mmap/munmap pair. Keeping
// them on the heap removes most of the system time.
inline void tune_allocator() {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
  mallopt(M_TOP_PAD, 256 << 20);
#endif
}

}  // namespace bigr
