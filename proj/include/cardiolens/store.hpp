#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "cardiolens/date.hpp"
#include "cardiolens/embedding.hpp"

namespace cardiolens {

enum class RecordKind { image, text };

std::string to_string(RecordKind kind);
RecordKind parse_record_kind(const std::string& s);

// One embedding plus the identity metadata needed for retrieval and cohort
// analysis. Image records carry a frame index, text records do not.
struct EmbeddingRecord {
    std::string id;
    RecordKind kind = RecordKind::image;
    std::string patient_id;
    std::string study_id;
    std::string report_id;
    Date acquired;
    std::optional<int> frame_index;
    Embedding embedding;
};

// Immutable-after-build collection of unit-norm embeddings with metadata
// indexes. Single writer during construction; queries are read-only.
class Store {
public:
    explicit Store(std::size_t dimension);

    std::size_t dimension() const { return dimension_; }
    std::size_t size() const { return records_.size(); }

    // Validates dimension, id uniqueness and the kind/frame_index invariant.
    void add(EmbeddingRecord record);

    const std::vector<EmbeddingRecord>& records() const { return records_; }
    const EmbeddingRecord& record(std::size_t idx) const { return records_[idx]; }
    const EmbeddingRecord* find(const std::string& id) const;

    const std::vector<std::size_t>& images() const { return images_; }
    const std::vector<std::size_t>& texts() const { return texts_; }
    const std::vector<std::size_t>& of_kind(RecordKind kind) const;

    const std::unordered_map<std::string, std::vector<std::size_t>>& by_patient() const {
        return by_patient_;
    }
    const std::unordered_map<std::string, std::vector<std::size_t>>& by_study() const {
        return by_study_;
    }
    const std::unordered_map<std::string, std::vector<std::size_t>>& by_report() const {
        return by_report_;
    }

private:
    std::size_t dimension_;
    std::vector<EmbeddingRecord> records_;
    std::unordered_map<std::string, std::size_t> by_id_;
    std::unordered_map<std::string, std::vector<std::size_t>> by_patient_;
    std::unordered_map<std::string, std::vector<std::size_t>> by_study_;
    std::unordered_map<std::string, std::vector<std::size_t>> by_report_;
    std::vector<std::size_t> images_;
    std::vector<std::size_t> texts_;
};

// Raw "EMB1" blob layout (header is exactly 20 bytes):
//   bytes 0-3   magic 'E' 'M' 'B' '1'
//   bytes 4-7   u32 little-endian version = 1
//   bytes 8-11  u32 little-endian dimension
//   bytes 12-19 u64 little-endian count
//   then count * dimension float32 little-endian values in manifest order.
struct EmbBlob {
    std::uint32_t dimension = 0;
    std::vector<std::vector<float>> vectors;
};

void write_emb_blob(const std::filesystem::path& path, const EmbBlob& blob);
EmbBlob read_emb_blob(const std::filesystem::path& path);

struct LoadReport {
    std::size_t records = 0;
    std::size_t renormalized = 0;  // vectors that were not unit-norm on load
};

struct ImportResult {
    Store store;
    LoadReport report;
};

// Manifest: JSON Lines; one object per record:
//   {"id":str,"kind":"image"|"text","patient_id":str,"study_id":str,
//    "report_id":str,"acquired":"YYYY-MM-DD","frame_index":int|null}
ImportResult import_embeddings(const std::filesystem::path& manifest_path,
                               const std::filesystem::path& blob_path);

void export_embeddings(const Store& store,
                       const std::filesystem::path& manifest_path,
                       const std::filesystem::path& blob_path);

// Brute-force ranked similarity query over records of one kind.
// Descending similarity, ties broken by ascending id; length min(k, candidates).
std::vector<std::pair<std::string, float>> top_k(const Embedding& query,
                                                 const Store& store,
                                                 RecordKind kind,
                                                 std::size_t k);

}  // namespace cardiolens
