#include <doctest.h>

#include <nlohmann/json.hpp>

#include "cardiolens/errors.hpp"
#include "cardiolens/rng.hpp"
#include "cardiolens/template_tokenizer.hpp"
#include "cardiolens/text_normalize.hpp"

using namespace cardiolens;
using nlohmann::json;

namespace {

const char* kDataDir = CARDIOLENS_DATA_DIR;

TemplateVocab shipped_vocab() {
    return load_vocab_file(std::string(kDataDir) + "/vocab.json");
}

json tiny_vocab_doc() {
    return json::parse(R"json({
      "version": 1,
      "special": {"unk": 0, "bos": 1, "eos": 2, "pad": 3},
      "severity": [{"word":"mild","id":4},{"word":"moderate","id":5},{"word":"severe","id":6}],
      "digits": [{"ch":"0","id":7},{"ch":"1","id":8},{"ch":"2","id":9},{"ch":"3","id":10},
                 {"ch":"4","id":11},{"ch":"5","id":12},{"ch":"6","id":13},{"ch":"7","id":14},
                 {"ch":"8","id":15},{"ch":"9","id":16},{"ch":".","id":17},{"ch":"-","id":18}],
      "units": [{"text":"%","id":19},{"text":"cm","id":20}],
      "templates": [
        {"id":21,"pattern":"(mild|moderate|severe) lvh","slots":["severity"],"canonical":"_ lvh"},
        {"id":22,"pattern":"ef is (\\d+(?:\\.\\d+)?)%","slots":["number"],"canonical":"ef is _%"},
        {"id":23,"pattern":"la size is (\\d+(?:\\.\\d+)?) (cm)","slots":["number","unit"],
         "canonical":"la size is _ _"}
      ]
    })json");
}

}  // namespace

TEST_SUITE("normalize_text") {
    TEST_CASE("whitespace and casing") {
        CHECK(normalize_text("Moderate  LVH.\n") == "moderate lvh.");
        CHECK(normalize_text("") == "");
        CHECK(normalize_text("EF  is 60%") == "ef is 60%");
    }

    TEST_CASE("line breaks become sentence boundaries") {
        CHECK(normalize_text("abc\ndef") == "abc. def");
        CHECK(normalize_text("abc.\ndef") == "abc. def");
        CHECK(normalize_text("abc\n") == "abc.");
    }

    TEST_CASE("idempotent") {
        for (const char* s : {"Moderate  LVH.\n", "a\nb\n\nc", "EF  is 60%", "x.  y."}) {
            std::string once = normalize_text(s);
            CHECK(normalize_text(once) == once);
        }
    }

    TEST_CASE("sentence split keeps decimals intact") {
        auto sentences = split_sentences("la size is 2.5 cm. ef is 60%");
        REQUIRE(sentences.size() == 2);
        CHECK(sentences[0] == "la size is 2.5 cm");
        CHECK(sentences[1] == "ef is 60%");
    }
}

TEST_SUITE("load_vocab") {
    TEST_CASE("valid document loads with compiled templates") {
        TemplateVocab vocab = load_vocab(tiny_vocab_doc());
        CHECK(vocab.templates.size() == 3);
        CHECK(vocab.size() == 24);
        CHECK(vocab.severity_ids.at("moderate") == 5);
    }

    TEST_CASE("duplicate id reported with the id") {
        json doc = tiny_vocab_doc();
        doc["templates"][1]["id"] = 21;
        CHECK_THROWS_WITH_AS(load_vocab(doc), doctest::Contains("duplicate token id 21"),
                             FormatError);
    }

    TEST_CASE("slot and capture group count mismatch names the entry") {
        json doc = tiny_vocab_doc();
        doc["templates"][2]["slots"] = {"number"};  // pattern has 2 groups
        CHECK_THROWS_WITH_AS(load_vocab(doc), doctest::Contains("template entry 2"),
                             FormatError);
    }

    TEST_CASE("bad regex reported") {
        json doc = tiny_vocab_doc();
        doc["templates"][0]["pattern"] = "(unclosed";
        CHECK_THROWS_AS(load_vocab(doc), FormatError);
    }

    TEST_CASE("non-contiguous ids rejected") {
        json doc = tiny_vocab_doc();
        doc["templates"][2]["id"] = 40;
        CHECK_THROWS_AS(load_vocab(doc), FormatError);
    }

    TEST_CASE("missing severity word rejected") {
        json doc = tiny_vocab_doc();
        doc["severity"] = {{{"word", "mild"}, {"id", 4}},
                           {{"word", "moderate"}, {"id", 5}},
                           {{"word", "marked"}, {"id", 6}}};
        CHECK_THROWS_AS(load_vocab(doc), FormatError);
    }
}

TEST_SUITE("tokenize_template") {
    TEST_CASE("paper example sentence") {
        TemplateVocab vocab = shipped_vocab();
        TokenSequence seq = tokenize_template(
            "Moderate left ventricular hypertrophy. Left ventricular ejection "
            "fraction is 60%",
            vocab);

        int lvh_id = -1, ef_id = -1;
        for (const auto& t : vocab.templates) {
            if (t.canonical == "_ left ventricular hypertrophy") lvh_id = t.id;
            if (t.canonical == "left ventricular ejection fraction is _%") ef_id = t.id;
        }
        REQUIRE(lvh_id >= 0);
        REQUIRE(ef_id >= 0);
        std::vector<int> expected{vocab.special.bos,
                                  lvh_id,
                                  vocab.severity_ids.at("moderate"),
                                  ef_id,
                                  vocab.digit_ids.at('6'),
                                  vocab.digit_ids.at('0'),
                                  vocab.special.eos};
        CHECK(seq.ids == expected);
        CHECK_FALSE(seq.truncated);
    }

    TEST_CASE("empty and unmatched input") {
        TemplateVocab vocab = load_vocab(tiny_vocab_doc());
        TokenSequence empty = tokenize_template("", vocab);
        CHECK(empty.ids == std::vector<int>{1, 2});

        TokenizerDiag diag;
        TokenSequence unk = tokenize_template("qqq zzz unrelated.", vocab, 77, &diag);
        CHECK(unk.ids == std::vector<int>{1, 0, 2});
        CHECK(diag.unk_sentences == 1);
    }

    TEST_CASE("unit slots tokenize") {
        TemplateVocab vocab = load_vocab(tiny_vocab_doc());
        TokenSequence seq = tokenize_template("la size is 2.5 cm", vocab);
        std::vector<int> expected{1, 23, 9, 17, 12, 20, 2};  // 2 . 5, cm
        CHECK(seq.ids == expected);
    }

    TEST_CASE("priority: earlier template wins and reordering flips the winner") {
        json doc = tiny_vocab_doc();
        doc["templates"] = json::array(
            {{{"id", 21}, {"pattern", "(mild|moderate|severe) lvh"},
              {"slots", {"severity"}}, {"canonical", "_ lvh"}},
             {{"id", 22}, {"pattern", "(mild|moderate|severe) (?:lvh|rvh)"},
              {"slots", {"severity"}}, {"canonical", "_ lvh or rvh"}},
             {{"id", 23}, {"pattern", "x(\\d+)y"}, {"slots", {"number"}},
              {"canonical", "x_y"}}});
        TemplateVocab vocab = load_vocab(doc);
        CHECK(tokenize_template("mild lvh", vocab).ids == std::vector<int>{1, 21, 4, 2});

        std::swap(doc["templates"][0], doc["templates"][1]);
        TemplateVocab reordered = load_vocab(doc);
        CHECK(tokenize_template("mild lvh", reordered).ids == std::vector<int>{1, 22, 4, 2});
    }

    TEST_CASE("truncation forces eos and flag") {
        TemplateVocab vocab = load_vocab(tiny_vocab_doc());
        std::string text;
        for (int i = 0; i < 50; ++i) text += "ef is 60%. ";
        TokenSequence seq = tokenize_template(text, vocab, 10);
        CHECK(seq.truncated);
        CHECK(seq.ids.size() == 10);
        CHECK(seq.ids.back() == vocab.special.eos);
        CHECK(seq.ids.front() == vocab.special.bos);
    }

    TEST_CASE("context_length precondition") {
        TemplateVocab vocab = load_vocab(tiny_vocab_doc());
        CHECK_THROWS_AS(tokenize_template("x", vocab, 2), std::invalid_argument);
    }

    TEST_CASE("determinism") {
        TemplateVocab vocab = shipped_vocab();
        std::string text = "severe dilation of the left atrium. lv ejection fraction is 45%";
        CHECK(tokenize_template(text, vocab).ids == tokenize_template(text, vocab).ids);
    }
}

TEST_SUITE("detokenize") {
    TEST_CASE("paper example round trip") {
        TemplateVocab vocab = shipped_vocab();
        std::string input =
            "Moderate left ventricular hypertrophy. Left ventricular ejection "
            "fraction is 60%";
        TokenSequence seq = tokenize_template(input, vocab);
        std::string text = detokenize(seq, vocab);
        CHECK(text ==
              "moderate left ventricular hypertrophy. left ventricular ejection "
              "fraction is 60%.");
        CHECK(tokenize_template(text, vocab).ids == seq.ids);
    }

    TEST_CASE("trivial sequences") {
        TemplateVocab vocab = load_vocab(tiny_vocab_doc());
        CHECK(detokenize(TokenSequence{{1, 2}, false}, vocab) == "");
        CHECK(detokenize(TokenSequence{{1, 0, 2}, false}, vocab) == "[unk]");
    }

    TEST_CASE("unknown id rejected") {
        TemplateVocab vocab = load_vocab(tiny_vocab_doc());
        CHECK_THROWS_AS(detokenize(TokenSequence{{1, 99, 2}, false}, vocab),
                        std::invalid_argument);
    }

    TEST_CASE("round trip is a fixed point for mixed inputs") {
        TemplateVocab vocab = shipped_vocab();
        for (const char* input :
             {"unmatched junk. lv ejection fraction is 60%",
              "mild aortic stenosis. garbage here. the interatrial septum is intact",
              "no pericardial effusion is seen"}) {
            TokenSequence first = tokenize_template(input, vocab);
            std::string text = detokenize(first, vocab);
            CHECK(tokenize_template(text, vocab).ids == first.ids);
        }
    }

    TEST_CASE("every shipped canonical form re-tokenizes to itself") {
        TemplateVocab vocab = shipped_vocab();
        for (const auto& entry : vocab.templates) {
            std::vector<std::string> fills;
            for (SlotKind slot : entry.slots) {
                if (slot == SlotKind::severity) fills.push_back("moderate");
                if (slot == SlotKind::number) fills.push_back("42");
                if (slot == SlotKind::unit) {
                    // Pick the unit the pattern accepts.
                    for (const auto& [text, id] : vocab.units) {
                        (void)id;
                        if (entry.pattern.find(text) != std::string::npos) {
                            fills.push_back(text);
                            break;
                        }
                    }
                }
            }
            std::string sentence;
            std::size_t fill_idx = 0;
            for (char c : entry.canonical) {
                if (c == '_' && fill_idx < fills.size()) sentence += fills[fill_idx++];
                else sentence += c;
            }
            TokenSequence seq = tokenize_template(sentence, vocab);
            REQUIRE(seq.ids.size() >= 3);
            CHECK_MESSAGE(seq.ids[1] == entry.id,
                          "canonical of template ", entry.id, " ('", sentence,
                          "') matched template ", seq.ids[1]);
        }
    }
}

TEST_SUITE("token_counts") {
    TEST_CASE("excludes bos and eos") {
        TemplateVocab vocab = load_vocab(tiny_vocab_doc());
        TokenSequence seq = tokenize_template("ef is 60%", vocab);
        auto counts = token_counts(seq, vocab.special, vocab.size());
        double total = 0.0;
        for (double c : counts) total += c;
        CHECK(total == doctest::Approx(3.0));  // template + two digits
        CHECK(counts[22] == 1.0);
        CHECK(counts[13] == 1.0);
        CHECK(counts[7] == 1.0);
    }
}
