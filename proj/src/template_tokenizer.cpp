#include "cardiolens/template_tokenizer.hpp"

#include <algorithm>
#include <fstream>
#include <optional>
#include <set>
#include <stdexcept>

#include "cardiolens/errors.hpp"
#include "cardiolens/text_normalize.hpp"

namespace cardiolens {

using nlohmann::json;

SlotKind parse_slot_kind(const std::string& s) {
    if (s == "severity") return SlotKind::severity;
    if (s == "number") return SlotKind::number;
    if (s == "unit") return SlotKind::unit;
    throw FormatError("unknown slot kind: '" + s + "'");
}

std::string to_string(SlotKind kind) {
    switch (kind) {
        case SlotKind::severity: return "severity";
        case SlotKind::number: return "number";
        case SlotKind::unit: return "unit";
    }
    return "?";
}

std::size_t TemplateVocab::size() const {
    return 4 + severity.size() + digits.size() + units.size() + templates.size();
}

TemplateVocab load_vocab(const json& document) {
    TemplateVocab vocab;
    std::set<int> seen_ids;
    auto claim_id = [&](int id, const std::string& where) {
        if (!seen_ids.insert(id).second) {
            throw FormatError("duplicate token id " + std::to_string(id) + " (" + where + ")");
        }
    };

    try {
        vocab.version = document.at("version").get<int>();
        const json& sp = document.at("special");
        vocab.special.unk = sp.at("unk").get<int>();
        vocab.special.bos = sp.at("bos").get<int>();
        vocab.special.eos = sp.at("eos").get<int>();
        vocab.special.pad = sp.at("pad").get<int>();
        claim_id(vocab.special.unk, "special.unk");
        claim_id(vocab.special.bos, "special.bos");
        claim_id(vocab.special.eos, "special.eos");
        claim_id(vocab.special.pad, "special.pad");

        for (const json& e : document.at("severity")) {
            std::string word = e.at("word").get<std::string>();
            int id = e.at("id").get<int>();
            claim_id(id, "severity '" + word + "'");
            vocab.severity.emplace_back(word, id);
            vocab.severity_ids[word] = id;
            vocab.severity_words[id] = word;
        }
        for (const json& e : document.at("digits")) {
            std::string ch = e.at("ch").get<std::string>();
            if (ch.size() != 1) throw FormatError("digit token '" + ch + "' must be one char");
            int id = e.at("id").get<int>();
            claim_id(id, "digit '" + ch + "'");
            vocab.digits.emplace_back(ch[0], id);
            vocab.digit_ids[ch[0]] = id;
            vocab.digit_chars[id] = ch[0];
        }
        for (const json& e : document.at("units")) {
            std::string text = e.at("text").get<std::string>();
            int id = e.at("id").get<int>();
            claim_id(id, "unit '" + text + "'");
            vocab.units.emplace_back(text, id);
            vocab.unit_ids[text] = id;
            vocab.unit_texts[id] = text;
        }

        std::size_t entry_index = 0;
        for (const json& e : document.at("templates")) {
            TemplateEntry entry;
            entry.id = e.at("id").get<int>();
            entry.pattern = e.at("pattern").get<std::string>();
            entry.canonical = e.at("canonical").get<std::string>();
            for (const json& s : e.at("slots")) {
                entry.slots.push_back(parse_slot_kind(s.get<std::string>()));
            }
            claim_id(entry.id, "template entry " + std::to_string(entry_index));
            try {
                entry.compiled = std::regex(entry.pattern,
                                            std::regex::ECMAScript | std::regex::icase);
            } catch (const std::regex_error& err) {
                throw FormatError("template entry " + std::to_string(entry_index) +
                                  " (id " + std::to_string(entry.id) +
                                  "): pattern does not compile: " + err.what());
            }
            if (entry.compiled.mark_count() != entry.slots.size()) {
                throw FormatError("template entry " + std::to_string(entry_index) +
                                  " (id " + std::to_string(entry.id) + "): pattern has " +
                                  std::to_string(entry.compiled.mark_count()) +
                                  " capture groups but " +
                                  std::to_string(entry.slots.size()) + " slots");
            }
            vocab.template_index[entry.id] = vocab.templates.size();
            vocab.templates.push_back(std::move(entry));
            ++entry_index;
        }
    } catch (const json::exception& e) {
        throw FormatError(std::string("vocab schema violation: ") + e.what());
    }

    // Ids must be contiguous from 0.
    if (!seen_ids.empty() && (*seen_ids.begin() != 0 ||
                              *seen_ids.rbegin() != static_cast<int>(seen_ids.size()) - 1)) {
        throw FormatError("token ids are not contiguous from 0");
    }

    for (const char* word : {"mild", "moderate", "severe"}) {
        if (!vocab.severity_ids.contains(word)) {
            throw FormatError(std::string("severity list missing '") + word + "'");
        }
    }
    return vocab;
}

TemplateVocab load_vocab_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open vocab file '" + path.string() + "'");
    json doc = json::parse(in, nullptr, false);
    if (doc.is_discarded()) throw FormatError("vocab file '" + path.string() + "' is not valid JSON");
    return load_vocab(doc);
}

namespace {

// Slot tokens for one matched template, or nullopt when a captured word is
// not in the vocabulary (the template then does not count as a match).
std::optional<std::vector<int>> resolve_slots(const TemplateEntry& entry,
                                              const std::smatch& m,
                                              const TemplateVocab& vocab) {
    std::vector<int> out;
    for (std::size_t s = 0; s < entry.slots.size(); ++s) {
        std::string captured = m[s + 1].str();
        switch (entry.slots[s]) {
            case SlotKind::severity: {
                auto it = vocab.severity_ids.find(captured);
                if (it == vocab.severity_ids.end()) return std::nullopt;
                out.push_back(it->second);
                break;
            }
            case SlotKind::number: {
                if (captured.empty()) return std::nullopt;
                for (char c : captured) {
                    auto it = vocab.digit_ids.find(c);
                    if (it == vocab.digit_ids.end()) return std::nullopt;
                    out.push_back(it->second);
                }
                break;
            }
            case SlotKind::unit: {
                auto it = vocab.unit_ids.find(captured);
                if (it == vocab.unit_ids.end()) return std::nullopt;
                out.push_back(it->second);
                break;
            }
        }
    }
    return out;
}

}  // namespace

TokenSequence tokenize_template(std::string_view text,
                                const TemplateVocab& vocab,
                                std::size_t context_length,
                                TokenizerDiag* diag) {
    if (context_length < 3) {
        throw std::invalid_argument("tokenize_template: context_length must be >= 3");
    }
    std::string normalized = normalize_text(text);
    TokenSequence seq;
    seq.ids.push_back(vocab.special.bos);
    for (const std::string& sentence : split_sentences(normalized)) {
        bool matched = false;
        for (const TemplateEntry& entry : vocab.templates) {
            std::smatch m;
            if (!std::regex_match(sentence, m, entry.compiled)) continue;
            auto slots = resolve_slots(entry, m, vocab);
            if (!slots.has_value()) continue;
            seq.ids.push_back(entry.id);
            seq.ids.insert(seq.ids.end(), slots->begin(), slots->end());
            matched = true;
            break;
        }
        if (!matched) {
            seq.ids.push_back(vocab.special.unk);
            if (diag != nullptr) ++diag->unk_sentences;
        }
    }
    seq.ids.push_back(vocab.special.eos);
    if (context_length != kUnlimitedContext && seq.ids.size() > context_length) {
        seq.ids.resize(context_length);
        seq.ids.back() = vocab.special.eos;
        seq.truncated = true;
    }
    return seq;
}

std::string detokenize(const TokenSequence& seq, const TemplateVocab& vocab) {
    std::vector<std::string> sentences;
    bool last_is_unk = false;
    std::size_t i = 0;
    auto at_end = [&] { return i >= seq.ids.size(); };
    if (!at_end() && seq.ids[i] == vocab.special.bos) ++i;

    while (!at_end() && seq.ids[i] != vocab.special.eos) {
        int id = seq.ids[i];
        if (id == vocab.special.unk) {
            sentences.push_back("[unk]");
            last_is_unk = true;
            ++i;
            continue;
        }
        auto t = vocab.template_index.find(id);
        if (t == vocab.template_index.end()) {
            throw std::invalid_argument("detokenize: unexpected token id " + std::to_string(id));
        }
        const TemplateEntry& entry = vocab.templates[t->second];
        ++i;
        std::vector<std::string> fills;
        for (SlotKind slot : entry.slots) {
            switch (slot) {
                case SlotKind::severity: {
                    if (at_end()) throw std::invalid_argument("detokenize: sequence ends inside slots");
                    auto w = vocab.severity_words.find(seq.ids[i]);
                    if (w == vocab.severity_words.end()) {
                        throw std::invalid_argument("detokenize: expected severity token, got id " +
                                                    std::to_string(seq.ids[i]));
                    }
                    fills.push_back(w->second);
                    ++i;
                    break;
                }
                case SlotKind::number: {
                    std::string digits;
                    while (!at_end() && vocab.digit_chars.contains(seq.ids[i])) {
                        digits += vocab.digit_chars.at(seq.ids[i]);
                        ++i;
                    }
                    if (digits.empty()) {
                        throw std::invalid_argument("detokenize: expected digit tokens");
                    }
                    fills.push_back(digits);
                    break;
                }
                case SlotKind::unit: {
                    if (at_end()) throw std::invalid_argument("detokenize: sequence ends inside slots");
                    auto u = vocab.unit_texts.find(seq.ids[i]);
                    if (u == vocab.unit_texts.end()) {
                        throw std::invalid_argument("detokenize: expected unit token, got id " +
                                                    std::to_string(seq.ids[i]));
                    }
                    fills.push_back(u->second);
                    ++i;
                    break;
                }
            }
        }
        // Fill '_' placeholders left to right.
        std::string rendered;
        std::size_t fill_idx = 0;
        for (char c : entry.canonical) {
            if (c == '_' && fill_idx < fills.size()) {
                rendered += fills[fill_idx++];
            } else {
                rendered += c;
            }
        }
        sentences.push_back(std::move(rendered));
        last_is_unk = false;
    }

    std::string out;
    for (std::size_t s = 0; s < sentences.size(); ++s) {
        if (s > 0) out += ". ";
        out += sentences[s];
    }
    if (!sentences.empty() && !last_is_unk) out += '.';
    return out;
}

std::vector<double> token_counts(const TokenSequence& seq,
                                 const SpecialTokens& special,
                                 std::size_t vocab_size) {
    std::vector<double> counts(vocab_size, 0.0);
    for (int id : seq.ids) {
        if (id == special.bos || id == special.eos) continue;
        if (id < 0 || static_cast<std::size_t>(id) >= vocab_size) {
            throw std::invalid_argument("token_counts: id out of range: " + std::to_string(id));
        }
        counts[static_cast<std::size_t>(id)] += 1.0;
    }
    return counts;
}

}  // namespace cardiolens
