#pragma once

#include <cstddef>
#include <functional>

namespace lgs {

/// Worker count used by parallel_for. Resolution order: explicit
/// set_thread_count(), then the LAYERGS_THREADS environment variable,
/// then hardware concurrency.
int thread_count();
void set_thread_count(int n);

/// Runs fn(i) for i in [0, n). Work is split into contiguous ranges, one per
/// worker. Callers that need deterministic results must write to disjoint
/// or index-addressed storage; merge order is the caller's responsibility.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace lgs
