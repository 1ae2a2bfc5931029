#pragma once

#include <cstddef>
#include <functional>

namespace advamc {

/// Caps worker threads for the whole process (0 = library default).
void set_max_threads(std::size_t n);
std::size_t max_threads();

/// Runs body(i) for i in [0, n). Bodies must write disjoint outputs; results
/// are then independent of scheduling and thread count.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace advamc
