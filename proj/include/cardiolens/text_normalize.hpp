#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace cardiolens {

// Lowercases, collapses whitespace runs to single spaces and treats line
// breaks as sentence boundaries (a break after text that does not already
// end in '.' emits ". "). Idempotent; empty input yields empty output.
std::string normalize_text(std::string_view raw);

// Splits normalized text into sentences. A '.' followed by a space or the
// end of the string ends a sentence ('.' inside numbers like "2.5" does
// not). Returned sentences are trimmed and carry no trailing period.
std::vector<std::string> split_sentences(std::string_view normalized);

}  // namespace cardiolens
