#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "cardiolens/errors.hpp"
#include "cardiolens/rng.hpp"
#include "cardiolens/store.hpp"
#include "oracles.hpp"

using namespace cardiolens;

namespace {

EmbeddingRecord make_record(std::string id, RecordKind kind, Embedding emb,
                            std::string patient = "p1", std::string study = "s1",
                            std::string report = "r1") {
    EmbeddingRecord rec;
    rec.id = std::move(id);
    rec.kind = kind;
    rec.patient_id = std::move(patient);
    rec.study_id = std::move(study);
    rec.report_id = std::move(report);
    rec.acquired = Date{2020, 1, 1};
    if (kind == RecordKind::image) rec.frame_index = 0;
    rec.embedding = std::move(emb);
    return rec;
}

}  // namespace

TEST_SUITE("embedding") {
    TEST_CASE("normalize examples") {
        Embedding e = normalize(std::vector<float>{3.0f, 4.0f});
        CHECK(e[0] == doctest::Approx(0.6).epsilon(1e-7));
        CHECK(e[1] == doctest::Approx(0.8).epsilon(1e-7));

        Embedding unit{1.0f, 0.0f};
        CHECK(normalize(unit) == unit);

        CHECK_THROWS_AS(normalize(std::vector<float>{0.0f, 0.0f}), NumericError);
    }

    TEST_CASE("normalized vectors have unit norm within 1e-5") {
        Rng rng(11);
        for (int i = 0; i < 50; ++i) {
            std::vector<float> v(8);
            for (auto& x : v) x = static_cast<float>(rng.normal() * 100.0);
            CHECK(l2_norm(normalize(v)) == doctest::Approx(1.0).epsilon(1e-5));
        }
    }

    TEST_CASE("cosine similarity examples") {
        Embedding a{1.0f, 0.0f}, b{0.0f, 1.0f};
        CHECK(cosine_similarity(a, a) == doctest::Approx(1.0));
        CHECK(cosine_similarity(a, b) == doctest::Approx(0.0));

        Embedding c = normalize(std::vector<float>{3.0f, 4.0f});
        Embedding d = normalize(std::vector<float>{4.0f, 3.0f});
        CHECK(cosine_similarity(c, d) == doctest::Approx(24.0 / 25.0).epsilon(1e-6));

        CHECK_THROWS_AS(cosine_similarity(a, Embedding{1.0f, 0.0f, 0.0f}),
                        std::invalid_argument);
    }

    TEST_CASE("cosine similarity is symmetric and bounded") {
        Rng rng(7);
        for (int i = 0; i < 40; ++i) {
            Embedding a = oracles::random_unit(rng, 16);
            Embedding b = oracles::random_unit(rng, 16);
            float ab = cosine_similarity(a, b);
            CHECK(ab == cosine_similarity(b, a));
            CHECK(std::abs(ab) <= 1.0f);
        }
    }
}

TEST_SUITE("store") {
    TEST_CASE("invariants enforced on add") {
        Store store(2);
        store.add(make_record("a", RecordKind::image, {1.0f, 0.0f}));
        CHECK_THROWS_AS(store.add(make_record("a", RecordKind::image, {0.0f, 1.0f})),
                        FormatError);
        EmbeddingRecord no_frame = make_record("b", RecordKind::image, {0.0f, 1.0f});
        no_frame.frame_index.reset();
        CHECK_THROWS_AS(store.add(no_frame), FormatError);
        EmbeddingRecord text_frame = make_record("c", RecordKind::text, {0.0f, 1.0f});
        text_frame.frame_index = 1;
        CHECK_THROWS_AS(store.add(text_frame), FormatError);
        CHECK_THROWS_AS(store.add(make_record("d", RecordKind::text, {1.0f})),
                        std::invalid_argument);
    }

    TEST_CASE("top_k examples") {
        Store store(3);
        store.add(make_record("m", RecordKind::image, {1.0f, 0.0f, 0.0f}));
        store.add(make_record("n", RecordKind::image, {0.0f, 1.0f, 0.0f}));
        store.add(make_record("o", RecordKind::image, {0.0f, 0.0f, 1.0f}));

        auto hits = top_k({1.0f, 0.0f, 0.0f}, store, RecordKind::image, 2);
        REQUIRE(hits.size() == 2);
        CHECK(hits[0].first == "m");
        CHECK(hits[0].second == doctest::Approx(1.0));

        auto all = top_k({1.0f, 0.0f, 0.0f}, store, RecordKind::image, 99);
        CHECK(all.size() == 3);  // k larger than store -> full ranking

        CHECK_THROWS_AS(top_k({1.0f, 0.0f, 0.0f}, store, RecordKind::text, 1),
                        std::invalid_argument);
    }

    TEST_CASE("top_k matches brute-force sort on a random store") {
        Rng rng(42);
        Store store(8);
        std::vector<std::pair<std::string, Embedding>> reference;
        for (int i = 0; i < 20; ++i) {
            Embedding e = oracles::random_unit(rng, 8);
            std::string id = "rec" + std::to_string(i);
            reference.emplace_back(id, e);
            store.add(make_record(id, RecordKind::image, e));
        }
        Embedding query = oracles::random_unit(rng, 8);
        auto expected = oracles::brute_force_ranking(query, reference);
        auto got = top_k(query, store, RecordKind::image, 20);
        REQUIRE(got.size() == expected.size());
        for (std::size_t i = 0; i < got.size(); ++i) {
            CHECK(got[i].first == expected[i].first);
            CHECK(got[i].second == expected[i].second);
        }
    }

    TEST_CASE("top_k with k = store size returns a permutation of all ids") {
        Rng rng(5);
        Store store(4);
        for (int i = 0; i < 12; ++i) {
            store.add(make_record("x" + std::to_string(i), RecordKind::image,
                                  oracles::random_unit(rng, 4)));
        }
        auto all = top_k(oracles::random_unit(rng, 4), store, RecordKind::image, 12);
        std::set<std::string> ids;
        for (const auto& [id, sim] : all) ids.insert(id);
        CHECK(ids.size() == 12);
    }
}

TEST_SUITE("emb1 format") {
    TEST_CASE("file size formula: dim 512, count 3 -> 6164 bytes") {
        auto path = std::filesystem::temp_directory_path() / "cardiolens_size_test.emb";
        EmbBlob blob;
        blob.dimension = 512;
        blob.vectors.assign(3, std::vector<float>(512, 0.25f));
        write_emb_blob(path, blob);
        CHECK(std::filesystem::file_size(path) == 20 + 3 * 512 * 4);
        std::filesystem::remove(path);
    }

    TEST_CASE("export then import is bit-exact") {
        Rng rng(99);
        Store store(16);
        for (int i = 0; i < 10; ++i) {
            store.add(make_record("img" + std::to_string(i), RecordKind::image,
                                  oracles::random_unit(rng, 16)));
        }
        auto dir = std::filesystem::temp_directory_path() / "cardiolens_store_test";
        std::filesystem::create_directories(dir);
        export_embeddings(store, dir / "manifest.jsonl", dir / "vectors.emb");
        ImportResult imported = import_embeddings(dir / "manifest.jsonl", dir / "vectors.emb");
        CHECK(imported.report.renormalized == 0);
        REQUIRE(imported.store.size() == store.size());
        for (std::size_t i = 0; i < store.size(); ++i) {
            CHECK(imported.store.record(i).id == store.record(i).id);
            CHECK(imported.store.record(i).embedding == store.record(i).embedding);
        }
        std::filesystem::remove_all(dir);
    }

    TEST_CASE("import validation errors") {
        auto dir = std::filesystem::temp_directory_path() / "cardiolens_import_test";
        std::filesystem::create_directories(dir);
        auto blob_path = dir / "v.emb";
        auto manifest_path = dir / "m.jsonl";

        EmbBlob blob;
        blob.dimension = 2;
        blob.vectors.assign(3, std::vector<float>{1.0f, 0.0f});
        write_emb_blob(blob_path, blob);

        {
            std::ofstream m(manifest_path);
            m << R"({"id":"a","kind":"image","patient_id":"p","study_id":"s","report_id":"r","acquired":"2020-01-01","frame_index":0})" << "\n";
            m << R"({"id":"b","kind":"image","patient_id":"p","study_id":"s","report_id":"r","acquired":"2020-01-01","frame_index":1})" << "\n";
        }
        CHECK_THROWS_WITH_AS(import_embeddings(manifest_path, blob_path),
                             doctest::Contains("count mismatch"), FormatError);

        {
            std::ofstream bad(blob_path, std::ios::binary);
            bad << "NOPE";
        }
        CHECK_THROWS_WITH_AS(import_embeddings(manifest_path, blob_path),
                             doctest::Contains("bad magic"), FormatError);
        std::filesystem::remove_all(dir);
    }

    TEST_CASE("non-unit vectors are normalized on import and flagged") {
        auto dir = std::filesystem::temp_directory_path() / "cardiolens_norm_test";
        std::filesystem::create_directories(dir);
        EmbBlob blob;
        blob.dimension = 2;
        blob.vectors = {{3.0f, 4.0f}, {1.0f, 0.0f}};
        write_emb_blob(dir / "v.emb", blob);
        {
            std::ofstream m(dir / "m.jsonl");
            m << R"({"id":"a","kind":"image","patient_id":"p","study_id":"s","report_id":"r","acquired":"2020-01-01","frame_index":0})" << "\n";
            m << R"({"id":"b","kind":"text","patient_id":"p","study_id":"s","report_id":"r","acquired":"2020-01-01","frame_index":null})" << "\n";
        }
        ImportResult result = import_embeddings(dir / "m.jsonl", dir / "v.emb");
        CHECK(result.report.renormalized == 1);
        CHECK(result.store.record(0).embedding[0] == doctest::Approx(0.6f));
        std::filesystem::remove_all(dir);
    }

    TEST_CASE("non-finite payload rejected") {
        auto dir = std::filesystem::temp_directory_path() / "cardiolens_nan_test";
        std::filesystem::create_directories(dir);
        EmbBlob blob;
        blob.dimension = 2;
        blob.vectors = {{std::numeric_limits<float>::quiet_NaN(), 1.0f}};
        write_emb_blob(dir / "v.emb", blob);
        {
            std::ofstream m(dir / "m.jsonl");
            m << R"({"id":"a","kind":"image","patient_id":"p","study_id":"s","report_id":"r","acquired":"2020-01-01","frame_index":0})" << "\n";
        }
        CHECK_THROWS_WITH_AS(import_embeddings(dir / "m.jsonl", dir / "v.emb"),
                             doctest::Contains("non-finite"), FormatError);
        std::filesystem::remove_all(dir);
    }
}
