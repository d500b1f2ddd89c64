#pragma once

#include <cstddef>
#include <functional>

namespace neuromerge {

// Upper bound on worker threads used by the library. 0 restores the default
// (hardware concurrency). Every parallel loop writes disjoint outputs with a
// fixed per-element order, so results do not depend on this value.
void set_thread_limit(std::size_t threads);
std::size_t thread_limit();

// Runs body(i) for i in [begin, end) across up to thread_limit() threads.
void parallel_for(std::size_t begin, std::size_t end,
                  const std::function<void(std::size_t)>& body);

} // namespace neuromerge
