#include "wtacnn/version.hpp"

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#ifndef WTACNN_BUILD_ID
#define WTACNN_BUILD_ID "unknown"
#endif

namespace wtacnn {

std::string build_id() { return WTACNN_BUILD_ID; }

void tune_allocator() {
#if defined(__GLIBC__)
    mallopt(M_MMAP_THRESHOLD, 1 << 30);
    mallopt(M_TRIM_THRESHOLD, -1);
#endif
}

}  // namespace wtacnn
