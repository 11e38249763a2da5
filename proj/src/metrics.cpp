#include "cardiolens/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>
#include <unordered_map>

#include "cardiolens/errors.hpp"
#include "cardiolens/rng.hpp"

namespace cardiolens {

double mae(std::span<const double> predictions, std::span<const double> truths) {
    if (predictions.size() != truths.size()) {
        throw std::invalid_argument("mae: length mismatch");
    }
    if (predictions.empty()) throw std::invalid_argument("mae: empty input");
    double acc = 0.0;
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        acc += std::abs(predictions[i] - truths[i]);
    }
    return acc / static_cast<double>(predictions.size());
}

double roc_auc(std::span<const double> scores, std::span<const int> labels) {
    if (scores.size() != labels.size()) {
        throw std::invalid_argument("roc_auc: length mismatch");
    }
    std::size_t n = scores.size();
    std::size_t n_pos = 0;
    for (int l : labels) n_pos += (l != 0);
    std::size_t n_neg = n - n_pos;
    if (n_pos == 0 || n_neg == 0) {
        throw SingleClassError("roc_auc: both classes required");
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    // Midranks: tied scores share the average of their 1-based rank range.
    double pos_rank_sum = 0.0;
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j < n && scores[order[j]] == scores[order[i]]) ++j;
        double avg_rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
        for (std::size_t k = i; k < j; ++k) {
            if (labels[order[k]] != 0) pos_rank_sum += avg_rank;
        }
        i = j;
    }
    double np = static_cast<double>(n_pos);
    double nn = static_cast<double>(n_neg);
    return (pos_rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
}

double percentile_sorted(std::span<const double> sorted, double p) {
    if (sorted.empty()) throw std::invalid_argument("percentile: empty input");
    if (sorted.size() == 1) return sorted[0];
    double h = static_cast<double>(sorted.size() - 1) * p;
    std::size_t lo = static_cast<std::size_t>(std::floor(h));
    if (lo >= sorted.size() - 1) return sorted.back();
    double frac = h - static_cast<double>(lo);
    return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

MetricEstimate bootstrap_ci(const std::function<double(const std::vector<std::size_t>&)>& metric,
                            std::size_t n_samples,
                            const BootstrapOptions& options) {
    if (n_samples < 2) throw std::invalid_argument("bootstrap_ci: need >= 2 samples");
    if (options.n_boot < 1) throw std::invalid_argument("bootstrap_ci: n_boot must be >= 1");

    std::vector<std::size_t> identity(n_samples);
    std::iota(identity.begin(), identity.end(), 0);
    double point = metric(identity);

    // Group members in first-appearance order when clustering is requested.
    std::vector<std::vector<std::size_t>> group_members;
    if (options.groups != nullptr) {
        if (options.groups->size() != n_samples) {
            throw std::invalid_argument("bootstrap_ci: groups size mismatch");
        }
        std::unordered_map<std::string, std::size_t> group_index;
        for (std::size_t i = 0; i < n_samples; ++i) {
            auto [it, inserted] =
                group_index.emplace((*options.groups)[i], group_members.size());
            if (inserted) group_members.emplace_back();
            group_members[it->second].push_back(i);
        }
    }

    Rng root(options.seed);
    std::vector<double> values;
    values.reserve(static_cast<std::size_t>(options.n_boot));
    std::vector<std::size_t> indices;
    for (int b = 0; b < options.n_boot; ++b) {
        Rng rng = root.substream(static_cast<std::uint64_t>(b));
        bool accepted = false;
        for (int attempt = 0; attempt <= options.max_redraws; ++attempt) {
            indices.clear();
            if (group_members.empty()) {
                for (std::size_t i = 0; i < n_samples; ++i) {
                    indices.push_back(static_cast<std::size_t>(rng.below(n_samples)));
                }
            } else {
                std::size_t g = group_members.size();
                for (std::size_t i = 0; i < g; ++i) {
                    const auto& members = group_members[rng.below(g)];
                    indices.insert(indices.end(), members.begin(), members.end());
                }
            }
            double v;
            try {
                v = metric(indices);
            } catch (const SingleClassError&) {
                continue;
            }
            if (!std::isfinite(v)) continue;
            values.push_back(v);
            accepted = true;
            break;
        }
        if (!accepted) {
            throw NumericError("bootstrap_ci: redraw cap exceeded at iterate " +
                               std::to_string(b));
        }
    }

    std::sort(values.begin(), values.end());
    MetricEstimate est;
    est.value = point;
    est.ci_low = percentile_sorted(values, 0.025);
    est.ci_high = percentile_sorted(values, 0.975);
    est.n_boot = options.n_boot;
    est.seed = options.seed;
    return est;
}

double mean(std::span<const double> v) {
    if (v.empty()) throw std::invalid_argument("mean: empty input");
    double acc = 0.0;
    for (double x : v) acc += x;
    return acc / static_cast<double>(v.size());
}

double sample_sd(std::span<const double> v) {
    if (v.empty()) throw std::invalid_argument("sample_sd: empty input");
    if (v.size() == 1) return 0.0;
    double m = mean(v);
    double acc = 0.0;
    for (double x : v) acc += (x - m) * (x - m);
    return std::sqrt(acc / static_cast<double>(v.size() - 1));
}

}  // namespace cardiolens
