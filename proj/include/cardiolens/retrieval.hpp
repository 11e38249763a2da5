#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cardiolens/embedding.hpp"
#include "cardiolens/store.hpp"

namespace cardiolens {

// One deduplicated image-text pair per report.
struct CrossModalPair {
    std::string report_id;
    std::string image_id;
    std::string text_id;
    Embedding image_embedding;
    Embedding text_embedding;
};

enum class ImageChoice {
    first_frame,    // the report's frame-0 record (lexicographically smallest id)
    mean_first_10,  // renormalized mean over the report's frames 0..9
};

struct DedupResult {
    std::vector<CrossModalPair> pairs;  // sorted by report_id
    std::size_t excluded_reports = 0;   // reports missing either modality
};

// Exactly one pair per report_id; reports lacking either modality are
// excluded and counted. Throws FormatError when nothing remains.
DedupResult dedup_pairs(const Store& store, ImageChoice choice = ImageChoice::first_frame);

struct Candidate {
    std::string id;
    const Embedding* embedding = nullptr;
};

// 1-based position of true_id in descending-similarity order, ties broken by
// ascending id. true_id must be among the candidates.
std::size_t rank_of_match(const Embedding& query,
                          const std::string& true_id,
                          const std::vector<Candidate>& candidates);

enum class Direction { image_to_text, text_to_image };

std::string to_string(Direction direction);

struct RetrievalResult {
    Direction direction = Direction::image_to_text;
    std::vector<std::size_t> ranks;     // per query, 1-based
    double mean_rank = 0.0;
    std::map<int, double> recall_at;    // K -> fraction of ranks <= K
    std::uint64_t pair_fingerprint = 0; // FNV-1a over the ordered report ids
};

RetrievalResult retrieval_metrics(const std::vector<CrossModalPair>& pairs,
                                  Direction direction,
                                  const std::vector<int>& ks = {10});

// (i2t.mean_rank + t2i.mean_rank) / 2. Both results must come from the same
// pair set.
double mcmrr(const RetrievalResult& i2t, const RetrievalResult& t2i);

// EvalReport JSON:
//   {"direction":str,"n":int,"mean_rank":float,"recall":{"10":...},"mcmrr":float|null}
nlohmann::json eval_report(const RetrievalResult& result,
                           std::optional<double> mcmrr_value = std::nullopt);

}  // namespace cardiolens
