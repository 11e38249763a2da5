#include "cardiolens/bpe_tokenizer.hpp"

#include <fstream>
#include <stdexcept>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "cardiolens/errors.hpp"
#include "cardiolens/text_normalize.hpp"

namespace cardiolens {

using nlohmann::json;

// Training and merge application use a compact internal id space
// (bytes 0..255, merge i -> 256+i). The public TokenSequence layout keeps a
// gap for the specials: merge i -> kMergeBase+i.
namespace {

constexpr int kInternalMergeBase = 256;

inline int to_public(int internal) {
    return internal < 256 ? internal
                          : internal + (BpeVocab::kMergeBase - kInternalMergeBase);
}

inline std::uint64_t pack_pair(int a, int b) {
    return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(a)) << 32) |
           static_cast<std::uint32_t>(b);
}

// One left-to-right non-overlapping replacement pass.
void apply_merge(std::vector<int>& seq, int left, int right, int merged) {
    std::size_t w = 0;
    for (std::size_t r = 0; r < seq.size();) {
        if (r + 1 < seq.size() && seq[r] == left && seq[r + 1] == right) {
            seq[w++] = merged;
            r += 2;
        } else {
            seq[w++] = seq[r++];
        }
    }
    seq.resize(w);
}

std::vector<int> to_bytes(std::string_view text) {
    std::vector<int> seq;
    seq.reserve(text.size());
    for (char c : text) seq.push_back(static_cast<unsigned char>(c));
    return seq;
}

// Internal ids of each merge's operands, in learned order.
std::vector<std::pair<int, int>> merge_operands(const BpeVocab& vocab) {
    std::unordered_map<std::string, int> symbol_ids;
    symbol_ids.reserve(256 + vocab.merges.size());
    for (int b = 0; b < 256; ++b) {
        symbol_ids[std::string(1, static_cast<char>(b))] = b;
    }
    std::vector<std::pair<int, int>> ops;
    ops.reserve(vocab.merges.size());
    for (std::size_t m = 0; m < vocab.merges.size(); ++m) {
        const auto& [l, r] = vocab.merges[m];
        auto li = symbol_ids.find(l);
        auto ri = symbol_ids.find(r);
        if (li == symbol_ids.end() || ri == symbol_ids.end()) {
            throw FormatError("bpe merge " + std::to_string(m) +
                              " references an unknown symbol");
        }
        ops.emplace_back(li->second, ri->second);
        symbol_ids[l + r] = kInternalMergeBase + static_cast<int>(m);
    }
    return ops;
}

}  // namespace

std::string BpeVocab::symbol_of(int id) const {
    if (id >= 0 && id < 256) return std::string(1, static_cast<char>(id));
    if (id >= kMergeBase && id < static_cast<int>(size())) {
        const auto& m = merges[static_cast<std::size_t>(id - kMergeBase)];
        return m.first + m.second;
    }
    throw std::invalid_argument("BpeVocab::symbol_of: no symbol for id " +
                                std::to_string(id));
}

BpeVocab train_bpe(const std::vector<std::string>& corpus, std::size_t merge_count) {
    if (corpus.empty()) throw std::invalid_argument("train_bpe: empty corpus");

    std::vector<std::vector<int>> seqs;
    seqs.reserve(corpus.size());
    for (const auto& text : corpus) seqs.push_back(to_bytes(normalize_text(text)));

    std::vector<std::string> symbols(256);
    for (int b = 0; b < 256; ++b) {
        symbols[static_cast<std::size_t>(b)] = std::string(1, static_cast<char>(b));
    }

    BpeVocab vocab;
    std::unordered_map<std::uint64_t, std::size_t> counts;
    for (std::size_t m = 0; m < merge_count; ++m) {
        counts.clear();
        for (const auto& seq : seqs) {
            for (std::size_t i = 0; i + 1 < seq.size(); ++i) {
                ++counts[pack_pair(seq[i], seq[i + 1])];
            }
        }
        bool found = false;
        std::size_t best_count = 0;
        int best_l = 0, best_r = 0;
        for (const auto& [key, count] : counts) {
            if (count < 2) continue;
            int l = static_cast<int>(key >> 32);
            int r = static_cast<int>(key & 0xffffffffu);
            if (!found || count > best_count) {
                found = true;
                best_count = count;
                best_l = l;
                best_r = r;
            } else if (count == best_count) {
                const std::string& bl = symbols[static_cast<std::size_t>(best_l)];
                const std::string& br = symbols[static_cast<std::size_t>(best_r)];
                const std::string& cl = symbols[static_cast<std::size_t>(l)];
                const std::string& cr = symbols[static_cast<std::size_t>(r)];
                if (cl < bl || (cl == bl && cr < br)) {
                    best_l = l;
                    best_r = r;
                }
            }
        }
        if (!found) break;

        vocab.merges.emplace_back(symbols[static_cast<std::size_t>(best_l)],
                                  symbols[static_cast<std::size_t>(best_r)]);
        int merged = static_cast<int>(symbols.size());
        symbols.push_back(symbols[static_cast<std::size_t>(best_l)] +
                          symbols[static_cast<std::size_t>(best_r)]);
        for (auto& seq : seqs) apply_merge(seq, best_l, best_r, merged);
    }
    return vocab;
}

TokenSequence tokenize_bpe(std::string_view text,
                           const BpeVocab& vocab,
                           std::size_t context_length) {
    if (context_length < 3) {
        throw std::invalid_argument("tokenize_bpe: context_length must be >= 3");
    }
    std::string normalized = normalize_text(text);
    std::vector<int> seq = to_bytes(normalized);

    auto ops = merge_operands(vocab);
    std::vector<bool> present(256 + vocab.merges.size(), false);
    for (int id : seq) present[static_cast<std::size_t>(id)] = true;
    for (std::size_t m = 0; m < ops.size(); ++m) {
        auto [l, r] = ops[m];
        if (!present[static_cast<std::size_t>(l)] ||
            !present[static_cast<std::size_t>(r)]) {
            continue;
        }
        apply_merge(seq, l, r, kInternalMergeBase + static_cast<int>(m));
        present[static_cast<std::size_t>(kInternalMergeBase) + m] = true;
    }

    TokenSequence out;
    out.ids.reserve(seq.size() + 2);
    out.ids.push_back(BpeVocab::kBos);
    for (int id : seq) out.ids.push_back(to_public(id));
    out.ids.push_back(BpeVocab::kEos);
    if (context_length != kUnlimitedContext && out.ids.size() > context_length) {
        out.ids.resize(context_length);
        out.ids.back() = BpeVocab::kEos;
        out.truncated = true;
    }
    return out;
}

std::string bpe_decode(const TokenSequence& seq, const BpeVocab& vocab) {
    std::string out;
    for (int id : seq.ids) {
        if (id == BpeVocab::kBos || id == BpeVocab::kEos || id == BpeVocab::kPad) continue;
        if (id == BpeVocab::kUnk) {
            throw std::invalid_argument("bpe_decode: unk token in sequence");
        }
        out += vocab.symbol_of(id);
    }
    return out;
}

void save_bpe(const BpeVocab& vocab, const std::filesystem::path& path) {
    json merges = json::array();
    for (const auto& [l, r] : vocab.merges) {
        json left = json::array();
        for (unsigned char c : l) left.push_back(static_cast<int>(c));
        json right = json::array();
        for (unsigned char c : r) right.push_back(static_cast<int>(c));
        merges.push_back(json::array({left, right}));
    }
    json doc{{"version", 1}, {"merges", merges}};
    std::ofstream out(path);
    if (!out) throw FormatError("cannot open '" + path.string() + "' for writing");
    out << doc.dump() << '\n';
}

BpeVocab load_bpe(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open '" + path.string() + "'");
    json doc = json::parse(in, nullptr, false);
    if (doc.is_discarded()) {
        throw FormatError("bpe file '" + path.string() + "' is not valid JSON");
    }
    BpeVocab vocab;
    try {
        if (doc.at("version").get<int>() != 1) {
            throw FormatError("unsupported bpe file version");
        }
        for (const json& m : doc.at("merges")) {
            std::string l, r;
            for (const json& c : m.at(0)) l += static_cast<char>(c.get<int>());
            for (const json& c : m.at(1)) r += static_cast<char>(c.get<int>());
            vocab.merges.emplace_back(std::move(l), std::move(r));
        }
    } catch (const json::exception& e) {
        throw FormatError(std::string("bpe file schema violation: ") + e.what());
    }
    return vocab;
}

}  // namespace cardiolens
