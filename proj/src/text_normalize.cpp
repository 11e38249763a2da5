#include "cardiolens/text_normalize.hpp"

#include <cctype>

namespace cardiolens {

std::string normalize_text(std::string_view raw) {
    std::string out;
    out.reserve(raw.size());
    bool pending_space = false;
    bool pending_period = false;
    for (char ch : raw) {
        unsigned char c = static_cast<unsigned char>(ch);
        if (c == '\n' || c == '\r') {
            if (!out.empty() && out.back() != '.') {
                pending_period = true;
            } else {
                pending_space = true;
            }
            continue;
        }
        if (std::isspace(c)) {
            pending_space = true;
            continue;
        }
        if (pending_period) {
            out += ". ";
        } else if (pending_space && !out.empty()) {
            out += ' ';
        }
        pending_period = false;
        pending_space = false;
        out += static_cast<char>(std::tolower(c));
    }
    if (pending_period) out += '.';
    return out;
}

std::vector<std::string> split_sentences(std::string_view normalized) {
    std::vector<std::string> sentences;
    std::string current;
    auto flush = [&] {
        std::size_t b = current.find_first_not_of(' ');
        if (b == std::string::npos) {
            current.clear();
            return;
        }
        std::size_t e = current.find_last_not_of(' ');
        sentences.push_back(current.substr(b, e - b + 1));
        current.clear();
    };
    for (std::size_t i = 0; i < normalized.size(); ++i) {
        char c = normalized[i];
        if (c == '.' && (i + 1 == normalized.size() || normalized[i + 1] == ' ')) {
            flush();
            continue;
        }
        current += c;
    }
    flush();
    return sentences;
}

}  // namespace cardiolens
