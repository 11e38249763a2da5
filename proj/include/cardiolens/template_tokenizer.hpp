#pragma once

#include <filesystem>
#include <regex>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

namespace cardiolens {

enum class SlotKind { severity, number, unit };

SlotKind parse_slot_kind(const std::string& s);
std::string to_string(SlotKind kind);

struct SpecialTokens {
    int unk = 0;
    int bos = 1;
    int eos = 2;
    int pad = 3;
};

// One sentence template. `pattern` is a regex whose capture groups line up
// with `slots`; `canonical` is the sentence with '_' at each slot position,
// used by detokenize.
struct TemplateEntry {
    int id = 0;
    std::string pattern;
    std::vector<SlotKind> slots;
    std::string canonical;
    std::regex compiled;
};

// Vocabulary for the regex-template tokenizer. Token ids are unique and
// contiguous from 0. Template list order is the match-priority order.
struct TemplateVocab {
    int version = 1;
    SpecialTokens special;
    std::vector<std::pair<std::string, int>> severity;   // ordered words
    std::vector<std::pair<char, int>> digits;            // '0'-'9', '.', '-'
    std::vector<std::pair<std::string, int>> units;      // %, cm, mmhg, m/s
    std::vector<TemplateEntry> templates;

    std::unordered_map<std::string, int> severity_ids;
    std::unordered_map<char, int> digit_ids;
    std::unordered_map<std::string, int> unit_ids;
    std::unordered_map<int, std::string> severity_words;  // id -> word
    std::unordered_map<int, char> digit_chars;
    std::unordered_map<int, std::string> unit_texts;
    std::unordered_map<int, std::size_t> template_index;  // id -> templates[] index

    std::size_t size() const;  // total number of token ids
};

// Parses and validates a vocabulary document. Errors report the offending
// entry: duplicate or non-contiguous ids, patterns that do not compile, and
// capture-group/slot count mismatches.
TemplateVocab load_vocab(const nlohmann::json& document);
TemplateVocab load_vocab_file(const std::filesystem::path& path);

struct TokenSequence {
    std::vector<int> ids;
    bool truncated = false;
};

struct TokenizerDiag {
    std::size_t unk_sentences = 0;
};

inline constexpr std::size_t kDefaultContextLength = 77;
inline constexpr std::size_t kUnlimitedContext = static_cast<std::size_t>(-1);

// Per sentence the earliest matching template wins and emits its template
// token followed by the slot tokens in capture order (severity word, digit
// sequence, or unit). Unmatched sentences emit one unk token. bos/eos wrap
// the sequence; anything longer than context_length is cut to
// context_length with eos forced as the final token.
TokenSequence tokenize_template(std::string_view text,
                                const TemplateVocab& vocab,
                                std::size_t context_length = kDefaultContextLength,
                                TokenizerDiag* diag = nullptr);

// Canonical text for a token sequence: each template's canonical sentence
// with slots filled, "[unk]" for unk. Sentences are joined with ". " and a
// final '.' is appended unless the last sentence is an unk.
// Throws NumericError-free std::invalid_argument on unknown ids or
// malformed slot structure.
std::string detokenize(const TokenSequence& seq, const TemplateVocab& vocab);

// Histogram of content token ids (bos/eos excluded), for bag-of-tokens
// encoders. Throws std::invalid_argument when an id is out of range.
std::vector<double> token_counts(const TokenSequence& seq,
                                 const SpecialTokens& special,
                                 std::size_t vocab_size);

}  // namespace cardiolens
