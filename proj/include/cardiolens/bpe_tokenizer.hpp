#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "cardiolens/template_tokenizer.hpp"  // TokenSequence

namespace cardiolens {

// Byte-level BPE vocabulary. Token id layout:
//   0..255   single bytes
//   256      bos, 257 eos, 258 pad, 259 unk (reserved)
//   260+i    merge i, in learned order
struct BpeVocab {
    static constexpr int kBos = 256;
    static constexpr int kEos = 257;
    static constexpr int kPad = 258;
    static constexpr int kUnk = 259;
    static constexpr int kMergeBase = 260;

    // Learned merges in order; each side is a byte string.
    std::vector<std::pair<std::string, std::string>> merges;

    std::size_t size() const { return kMergeBase + merges.size(); }
    std::string symbol_of(int id) const;
};

// Greedy most-frequent-adjacent-pair merges over the normalized corpus.
// Pairs are counted at every adjacent position; frequency ties are broken
// by lexicographic order of the (left, right) byte strings. Stops early
// when no pair occurs at least twice.
BpeVocab train_bpe(const std::vector<std::string>& corpus, std::size_t merge_count);

// Applies merges in learned order (left-to-right, non-overlapping passes),
// then wraps with bos/eos and truncates exactly like tokenize_template.
TokenSequence tokenize_bpe(std::string_view text,
                           const BpeVocab& vocab,
                           std::size_t context_length = kDefaultContextLength);

// Inverse of tokenize_bpe for untruncated sequences: concatenation of the
// content symbols reproduces the normalized input text exactly.
std::string bpe_decode(const TokenSequence& seq, const BpeVocab& vocab);

void save_bpe(const BpeVocab& vocab, const std::filesystem::path& path);
BpeVocab load_bpe(const std::filesystem::path& path);

}  // namespace cardiolens
