#include "cardiolens/corpus_stats.hpp"

#include <stdexcept>

#include "cardiolens/errors.hpp"
#include "cardiolens/metrics.hpp"

namespace cardiolens {

CorpusStats corpus_stats(const std::vector<std::string>& corpus,
                         const TokenCounter& counter) {
    if (corpus.empty()) throw std::invalid_argument("corpus_stats: empty corpus");
    std::vector<double> counts;
    counts.reserve(corpus.size());
    for (const auto& report : corpus) {
        counts.push_back(static_cast<double>(counter(report)));
    }
    CorpusStats stats;
    stats.n = counts.size();
    stats.mean_tokens = mean(counts);
    stats.sd_tokens = sample_sd(counts);
    stats.single_sample = counts.size() == 1;
    return stats;
}

double compression_ratio(const CorpusStats& primary, const CorpusStats& reference) {
    if (primary.mean_tokens <= 0.0) {
        throw NumericError("compression_ratio: primary mean is zero");
    }
    return reference.mean_tokens / primary.mean_tokens;
}

TokenCounter template_counter(const TemplateVocab& vocab) {
    const TemplateVocab* v = &vocab;
    return [v](const std::string& report) {
        TokenSequence seq = tokenize_template(report, *v, kUnlimitedContext);
        return seq.ids.size() - 2;  // strip bos/eos
    };
}

TokenCounter bpe_counter(const BpeVocab& vocab) {
    const BpeVocab* v = &vocab;
    return [v](const std::string& report) {
        TokenSequence seq = tokenize_bpe(report, *v, kUnlimitedContext);
        return seq.ids.size() - 2;
    };
}

}  // namespace cardiolens
