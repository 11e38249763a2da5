#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace cardiolens {

// Point estimate with a percentile-bootstrap confidence interval.
struct MetricEstimate {
    double value = 0.0;
    double ci_low = 0.0;
    double ci_high = 0.0;
    int n_boot = 0;
    std::uint64_t seed = 0;
};

// Mean absolute error. Throws std::invalid_argument on length mismatch or
// empty input.
double mae(std::span<const double> predictions, std::span<const double> truths);

// ROC AUC in the Mann-Whitney formulation:
//   (#concordant + 0.5 * #tied) / (n_pos * n_neg)
// computed via midranks. Labels are 0/1. Throws SingleClassError when only
// one class is present.
double roc_auc(std::span<const double> scores, std::span<const int> labels);

// Linear-interpolation percentile (numpy's default) of a sorted vector.
double percentile_sorted(std::span<const double> sorted, double p);

struct BootstrapOptions {
    int n_boot = 1000;
    std::uint64_t seed = 0;
    int max_redraws = 100;  // cap on degenerate-resample redraws per iterate
    // Optional resampling groups (e.g. patient ids). When set, whole groups
    // are resampled with replacement instead of individual samples.
    const std::vector<std::string>* groups = nullptr;
};

// Percentile bootstrap (2.5th / 97.5th) of an arbitrary metric.
//
// `metric` receives the index multiset of one resample (or the identity
// permutation for the point estimate). Each iterate draws from its own
// substream derived from (seed, iterate index), so results are independent
// of evaluation order. A resample is redrawn when the metric throws
// SingleClassError or returns a non-finite value; exceeding max_redraws
// raises NumericError.
MetricEstimate bootstrap_ci(const std::function<double(const std::vector<std::size_t>&)>& metric,
                            std::size_t n_samples,
                            const BootstrapOptions& options);

double mean(std::span<const double> v);

// Sample (n-1) standard deviation; 0.0 for a single sample.
double sample_sd(std::span<const double> v);

}  // namespace cardiolens
