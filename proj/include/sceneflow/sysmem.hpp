#pragma once

#include <cstddef>

namespace sceneflow {

// Process peak resident set size in bytes (high-water mark). Returns 0 when
// the platform does not expose it.
size_t peak_rss_bytes();

// Best-effort reset of the high-water mark so a later peak_rss_bytes() call
// reflects only the work in between. Returns false when unsupported.
bool reset_peak_rss();

}  // namespace sceneflow
