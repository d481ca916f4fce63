#pragma once

#include <cstddef>
#include <functional>
#include <span>

namespace twoscale {

/// Environment variable selecting the worker count for ensemble loops.
inline constexpr const char* kThreadsEnvVar = "TWOSCALE_THREADS";

/// Worker count: TWOSCALE_THREADS if set and positive, else hardware concurrency.
std::size_t thread_count();

/// Runs body(i) for i in [0, n) on a static block partition. Exceptions are
/// rethrown on the caller; the one with the smallest index wins so failures
/// are reproducible.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

/// Fixed-order pairwise summation; result is independent of thread count.
double pairwise_sum(std::span<const double> values);

}  // namespace twoscale
