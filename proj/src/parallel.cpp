#include "gmt/parallel.hpp"

#include <memory>
#include <mutex>

#include <tbb/global_control.h>
#include <tbb/parallel_for.h>

namespace gmt {

namespace {
std::mutex g_mutex;
std::unique_ptr<tbb::global_control> g_control;
int g_jobs = 0;
}  // namespace

void set_jobs(int jobs) {
  std::lock_guard lock(g_mutex);
  g_control.reset();
  g_jobs = jobs > 0 ? jobs : 0;
  if (g_jobs > 0)
    g_control = std::make_unique<tbb::global_control>(tbb::global_control::max_allowed_parallelism,
                                                      static_cast<std::size_t>(g_jobs));
}

int jobs() {
  std::lock_guard lock(g_mutex);
  if (g_jobs > 0) return g_jobs;
  return static_cast<int>(tbb::global_control::active_value(tbb::global_control::max_allowed_parallelism));
}

void parallel_for(std::size_t count, const std::function<void(std::size_t)>& body) {
  if (count == 0) return;
  if (count == 1) {
    body(0);
    return;
  }
  tbb::parallel_for(tbb::blocked_range<std::size_t>(0, count), [&](const tbb::blocked_range<std::size_t>& r) {
    for (std::size_t i = r.begin(); i != r.end(); ++i) body(i);
  });
}

}  // namespace gmt
