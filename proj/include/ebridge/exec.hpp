#pragma once

namespace ebridge {

/// Execution policy for the data-parallel kernels. `serial` is the reference
/// path; `parallel` uses OpenMP and must produce bitwise-identical results.
enum class Exec { serial, parallel };

int max_threads();

}  // namespace ebridge
