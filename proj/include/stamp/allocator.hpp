// Copyright 2026 The STAMP Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


// Process-level allocator settings for training binaries.

#pragma once

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace stamp {

/// Keeps large tensor buffers on the heap instead of fresh mmap pages;
/// without this, glibc returns every freed activation to the kernel and the
/// next step page-faults it back in. No-op off glibc.
inline void tune_allocator() {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
}

}  // namespace stamp
