#pragma once

#include <functional>
#include <string>
#include <vector>

#include "cardiolens/bpe_tokenizer.hpp"
#include "cardiolens/template_tokenizer.hpp"

namespace cardiolens {

// Returns the untruncated content token count (bos/eos excluded) of a report.
using TokenCounter = std::function<std::size_t(const std::string&)>;

struct CorpusStats {
    double mean_tokens = 0.0;
    double sd_tokens = 0.0;  // sample (n-1); 0 for a single report
    std::size_t n = 0;
    bool single_sample = false;
};

CorpusStats corpus_stats(const std::vector<std::string>& corpus,
                         const TokenCounter& counter);

// reference mean / primary mean; >1 means the primary tokenizer compresses
// better than the reference.
double compression_ratio(const CorpusStats& primary, const CorpusStats& reference);

// Counters for the two tokenizers. The vocab must outlive the counter.
TokenCounter template_counter(const TemplateVocab& vocab);
TokenCounter bpe_counter(const BpeVocab& vocab);

}  // namespace cardiolens
