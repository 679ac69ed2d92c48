#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace fastslow {

/// Resolves a requested thread count; 0 means hardware concurrency.
unsigned resolve_threads(unsigned requested);

/// Runs body(i) for i in [0, n) on up to `threads` workers. Each index is processed
/// exactly once, so results written per index do not depend on the schedule. If any
/// body throws, the exception of the lowest failing index is rethrown.
void parallel_for(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& body);

/// Sum in a fixed binary tree; the result depends only on the input order.
double pairwise_sum(std::span<const double> v);

/// Estimate with one-sigma standard error.
struct Estimate {
    double value = 0.0;
    double std_error = 0.0;
};

/// Sample mean and standard error of the mean.
Estimate mean_se(std::span<const double> v);

/// Least-squares line y = a + b x.
struct LineFit {
    double intercept = 0.0;
    double slope = 0.0;
    double slope_se = 0.0;
};
LineFit fit_line(std::span<const double> x, std::span<const double> y);

}  // namespace fastslow
