#pragma once

#include <cstddef>
#include <functional>

namespace ulrn {

// Process-wide worker count used by parallel_for. 0 means "all hardware
// threads". Results never depend on this value: callers write into per-index
// slots and reduce in index order.
void set_thread_count(std::size_t threads);
std::size_t thread_count();

// Runs fn(i) for i in [0, count). Exceptions from workers are rethrown on the
// calling thread (the first one by index wins).
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& fn);

}  // namespace ulrn
