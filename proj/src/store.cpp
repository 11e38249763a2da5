#include "cardiolens/store.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "cardiolens/errors.hpp"

namespace cardiolens {

using nlohmann::json;

std::string to_string(RecordKind kind) {
    return kind == RecordKind::image ? "image" : "text";
}

RecordKind parse_record_kind(const std::string& s) {
    if (s == "image") return RecordKind::image;
    if (s == "text") return RecordKind::text;
    throw FormatError("unknown record kind: '" + s + "'");
}

Store::Store(std::size_t dimension) : dimension_(dimension) {
    if (dimension == 0) throw std::invalid_argument("Store: dimension must be > 0");
}

void Store::add(EmbeddingRecord record) {
    if (record.embedding.size() != dimension_) {
        throw std::invalid_argument("Store::add: dimension mismatch for record '" +
                                    record.id + "'");
    }
    if (by_id_.contains(record.id)) {
        throw FormatError("duplicate record id '" + record.id + "'");
    }
    if (record.kind == RecordKind::image && !record.frame_index.has_value()) {
        throw FormatError("image record '" + record.id + "' missing frame_index");
    }
    if (record.kind == RecordKind::text && record.frame_index.has_value()) {
        throw FormatError("text record '" + record.id + "' must not carry frame_index");
    }
    std::size_t idx = records_.size();
    by_id_.emplace(record.id, idx);
    by_patient_[record.patient_id].push_back(idx);
    by_study_[record.study_id].push_back(idx);
    by_report_[record.report_id].push_back(idx);
    (record.kind == RecordKind::image ? images_ : texts_).push_back(idx);
    records_.push_back(std::move(record));
}

const EmbeddingRecord* Store::find(const std::string& id) const {
    auto it = by_id_.find(id);
    return it == by_id_.end() ? nullptr : &records_[it->second];
}

const std::vector<std::size_t>& Store::of_kind(RecordKind kind) const {
    return kind == RecordKind::image ? images_ : texts_;
}

namespace {

constexpr char kMagic[4] = {'E', 'M', 'B', '1'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ofstream& out, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v),
                          static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ofstream& out, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    out.write(reinterpret_cast<const char*>(b), 8);
}

std::uint32_t get_u32(std::istream& in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) |
           (static_cast<std::uint32_t>(b[3]) << 24);
}

std::uint64_t get_u64(std::istream& in) {
    unsigned char b[8];
    in.read(reinterpret_cast<char*>(b), 8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

}  // namespace

void write_emb_blob(const std::filesystem::path& path, const EmbBlob& blob) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot open '" + path.string() + "' for writing");
    out.write(kMagic, 4);
    put_u32(out, kVersion);
    put_u32(out, blob.dimension);
    put_u64(out, blob.vectors.size());
    for (const auto& v : blob.vectors) {
        if (v.size() != blob.dimension) {
            throw std::invalid_argument("write_emb_blob: vector dimension mismatch");
        }
        for (float x : v) {
            std::uint32_t bits;
            std::memcpy(&bits, &x, 4);
            put_u32(out, bits);
        }
    }
    if (!out) throw FormatError("write failed for '" + path.string() + "'");
}

EmbBlob read_emb_blob(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open '" + path.string() + "'");
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kMagic, 4) != 0) {
        throw FormatError("bad magic in '" + path.string() + "'");
    }
    std::uint32_t version = get_u32(in);
    if (version != kVersion) {
        throw FormatError("unsupported blob version " + std::to_string(version) +
                          " in '" + path.string() + "'");
    }
    EmbBlob blob;
    blob.dimension = get_u32(in);
    std::uint64_t count = get_u64(in);
    if (!in) throw FormatError("truncated header in '" + path.string() + "'");
    if (blob.dimension == 0) throw FormatError("zero dimension in '" + path.string() + "'");
    blob.vectors.resize(count);
    for (auto& v : blob.vectors) {
        v.resize(blob.dimension);
        for (auto& x : v) {
            std::uint32_t bits = get_u32(in);
            std::memcpy(&x, &bits, 4);
        }
        if (!in) throw FormatError("truncated payload in '" + path.string() + "'");
    }
    return blob;
}

ImportResult import_embeddings(const std::filesystem::path& manifest_path,
                               const std::filesystem::path& blob_path) {
    EmbBlob blob = read_emb_blob(blob_path);

    std::ifstream in(manifest_path);
    if (!in) throw FormatError("cannot open '" + manifest_path.string() + "'");
    std::vector<json> lines;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        json j = json::parse(line, nullptr, false);
        if (j.is_discarded()) {
            throw FormatError("manifest line " + std::to_string(lineno) +
                              ": invalid JSON");
        }
        lines.push_back(std::move(j));
    }
    if (lines.size() != blob.vectors.size()) {
        throw FormatError("count mismatch: blob header says " +
                          std::to_string(blob.vectors.size()) + ", manifest has " +
                          std::to_string(lines.size()) + " records");
    }

    ImportResult result{Store(blob.dimension), {}};
    for (std::size_t i = 0; i < lines.size(); ++i) {
        const json& j = lines[i];
        EmbeddingRecord rec;
        try {
            rec.id = j.at("id").get<std::string>();
            rec.kind = parse_record_kind(j.at("kind").get<std::string>());
            rec.patient_id = j.at("patient_id").get<std::string>();
            rec.study_id = j.at("study_id").get<std::string>();
            rec.report_id = j.at("report_id").get<std::string>();
            rec.acquired = parse_date(j.at("acquired").get<std::string>());
            if (j.contains("frame_index") && !j.at("frame_index").is_null()) {
                rec.frame_index = j.at("frame_index").get<int>();
            }
        } catch (const json::exception& e) {
            throw FormatError("manifest record " + std::to_string(i + 1) + ": " +
                              e.what());
        }

        const auto& v = blob.vectors[i];
        for (float x : v) {
            if (!std::isfinite(x)) {
                throw FormatError("non-finite value in vector for record '" + rec.id + "'");
            }
        }
        double n = l2_norm(v);
        if (n == 0.0) {
            throw FormatError("zero vector for record '" + rec.id + "'");
        }
        if (std::abs(n - 1.0) > 1e-5) {
            rec.embedding = normalize(v);
            ++result.report.renormalized;
        } else {
            rec.embedding = v;
        }
        result.store.add(std::move(rec));
    }
    result.report.records = result.store.size();
    return result;
}

void export_embeddings(const Store& store,
                       const std::filesystem::path& manifest_path,
                       const std::filesystem::path& blob_path) {
    std::ofstream out(manifest_path);
    if (!out) throw FormatError("cannot open '" + manifest_path.string() + "' for writing");
    EmbBlob blob;
    blob.dimension = static_cast<std::uint32_t>(store.dimension());
    blob.vectors.reserve(store.size());
    for (const auto& rec : store.records()) {
        json j{{"id", rec.id},
               {"kind", to_string(rec.kind)},
               {"patient_id", rec.patient_id},
               {"study_id", rec.study_id},
               {"report_id", rec.report_id},
               {"acquired", to_string(rec.acquired)}};
        if (rec.frame_index.has_value()) {
            j["frame_index"] = *rec.frame_index;
        } else {
            j["frame_index"] = nullptr;
        }
        out << j.dump() << '\n';
        blob.vectors.push_back(rec.embedding);
    }
    if (!out) throw FormatError("write failed for '" + manifest_path.string() + "'");
    out.close();
    write_emb_blob(blob_path, blob);
}

std::vector<std::pair<std::string, float>> top_k(const Embedding& query,
                                                 const Store& store,
                                                 RecordKind kind,
                                                 std::size_t k) {
    if (k < 1) throw std::invalid_argument("top_k: k must be >= 1");
    const auto& candidates = store.of_kind(kind);
    if (candidates.empty()) throw std::invalid_argument("top_k: empty candidate set");

    std::vector<std::pair<std::string, float>> scored;
    scored.reserve(candidates.size());
    for (std::size_t idx : candidates) {
        const auto& rec = store.record(idx);
        scored.emplace_back(rec.id, cosine_similarity(query, rec.embedding));
    }
    std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    if (scored.size() > k) scored.resize(k);
    return scored;
}

}  // namespace cardiolens
