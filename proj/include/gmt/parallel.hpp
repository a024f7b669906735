#pragma once

#include <cstddef>
#include <functional>

namespace gmt {

// Caps the worker count used by parallel_for for the lifetime of the process.
// jobs <= 0 restores the library default.
void set_jobs(int jobs);
int jobs();

// Runs body(i) for i in [0, count). Callers write results into per-index slots
// and reduce afterwards in index order, so outputs never depend on scheduling.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& body);

}  // namespace gmt
