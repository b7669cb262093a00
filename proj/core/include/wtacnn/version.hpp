#pragma once

#include <string>

namespace wtacnn {

/// git-describe-style build identifier baked in at configure time.
std::string build_id();

/// Keeps large tensor blocks on the heap instead of per-allocation mmaps.
/// Training loops turn over hundreds of megabytes per iteration; without
/// this, page faults dominate the profile. No-op off glibc.
void tune_allocator();

}  // namespace wtacnn
