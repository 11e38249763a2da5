#include "cardiolens/retrieval.hpp"

#include <algorithm>
#include <stdexcept>

#include "cardiolens/errors.hpp"
#include "cardiolens/threads.hpp"

namespace cardiolens {

using nlohmann::json;

std::string to_string(Direction direction) {
    return direction == Direction::image_to_text ? "image_to_text" : "text_to_image";
}

namespace {

std::uint64_t fnv1a(std::uint64_t h, const std::string& s) {
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

constexpr std::uint64_t kFnvOffset = 14695981039346656037ULL;

}  // namespace

DedupResult dedup_pairs(const Store& store, ImageChoice choice) {
    std::vector<std::string> report_ids;
    report_ids.reserve(store.by_report().size());
    for (const auto& [report_id, _] : store.by_report()) report_ids.push_back(report_id);
    std::sort(report_ids.begin(), report_ids.end());

    DedupResult result;
    for (const auto& report_id : report_ids) {
        const auto& members = store.by_report().at(report_id);
        std::vector<std::size_t> images, texts;
        for (std::size_t idx : members) {
            (store.record(idx).kind == RecordKind::image ? images : texts).push_back(idx);
        }
        if (images.empty() || texts.empty()) {
            ++result.excluded_reports;
            continue;
        }

        auto min_id = [&](const std::vector<std::size_t>& candidates) {
            std::size_t best = candidates.front();
            for (std::size_t idx : candidates) {
                if (store.record(idx).id < store.record(best).id) best = idx;
            }
            return best;
        };

        CrossModalPair pair;
        pair.report_id = report_id;
        std::size_t text_idx = min_id(texts);
        pair.text_id = store.record(text_idx).id;
        pair.text_embedding = store.record(text_idx).embedding;

        if (choice == ImageChoice::first_frame) {
            // Prefer frame-0 records; fall back to all images.
            std::vector<std::size_t> frame0;
            for (std::size_t idx : images) {
                if (store.record(idx).frame_index.value_or(-1) == 0) frame0.push_back(idx);
            }
            std::size_t image_idx = min_id(frame0.empty() ? images : frame0);
            pair.image_id = store.record(image_idx).id;
            pair.image_embedding = store.record(image_idx).embedding;
        } else {
            std::vector<std::size_t> pool;
            for (std::size_t idx : images) {
                int f = store.record(idx).frame_index.value_or(0);
                if (f >= 0 && f < 10) pool.push_back(idx);
            }
            if (pool.empty()) pool = images;
            std::vector<float> acc(store.dimension(), 0.0f);
            for (std::size_t idx : pool) {
                const auto& e = store.record(idx).embedding;
                for (std::size_t d = 0; d < acc.size(); ++d) acc[d] += e[d];
            }
            pair.image_id = store.record(min_id(pool)).id;
            pair.image_embedding = normalize(acc);
        }
        result.pairs.push_back(std::move(pair));
    }

    if (result.pairs.empty()) {
        throw FormatError("dedup_pairs: no report has both an image and a text record");
    }
    return result;
}

std::size_t rank_of_match(const Embedding& query,
                          const std::string& true_id,
                          const std::vector<Candidate>& candidates) {
    const Candidate* truth = nullptr;
    for (const auto& c : candidates) {
        if (c.id == true_id) {
            truth = &c;
            break;
        }
    }
    if (truth == nullptr) {
        throw std::invalid_argument("rank_of_match: true_id '" + true_id +
                                    "' not among candidates");
    }
    float true_sim = cosine_similarity(query, *truth->embedding);
    std::size_t better = 0;
    for (const auto& c : candidates) {
        if (&c == truth) continue;
        float sim = cosine_similarity(query, *c.embedding);
        if (sim > true_sim || (sim == true_sim && c.id < true_id)) ++better;
    }
    return better + 1;
}

RetrievalResult retrieval_metrics(const std::vector<CrossModalPair>& pairs,
                                  Direction direction,
                                  const std::vector<int>& ks) {
    if (pairs.empty()) throw std::invalid_argument("retrieval_metrics: no pairs");

    const bool i2t = direction == Direction::image_to_text;
    std::vector<Candidate> candidates;
    candidates.reserve(pairs.size());
    for (const auto& p : pairs) {
        candidates.push_back(i2t ? Candidate{p.text_id, &p.text_embedding}
                                 : Candidate{p.image_id, &p.image_embedding});
    }

    RetrievalResult result;
    result.direction = direction;
    result.ranks.resize(pairs.size());
    parallel_for(pairs.size(), [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            const auto& p = pairs[i];
            result.ranks[i] = rank_of_match(i2t ? p.image_embedding : p.text_embedding,
                                            i2t ? p.text_id : p.image_id, candidates);
        }
    });

    double sum = 0.0;
    for (std::size_t r : result.ranks) sum += static_cast<double>(r);
    result.mean_rank = sum / static_cast<double>(result.ranks.size());

    for (int k : ks) {
        std::size_t hits = 0;
        for (std::size_t r : result.ranks) hits += (r <= static_cast<std::size_t>(k));
        result.recall_at[k] = static_cast<double>(hits) / static_cast<double>(result.ranks.size());
    }

    result.pair_fingerprint = kFnvOffset;
    for (const auto& p : pairs) result.pair_fingerprint = fnv1a(result.pair_fingerprint, p.report_id);
    return result;
}

double mcmrr(const RetrievalResult& i2t, const RetrievalResult& t2i) {
    if (i2t.ranks.size() != t2i.ranks.size() ||
        i2t.pair_fingerprint != t2i.pair_fingerprint) {
        throw std::invalid_argument("mcmrr: directions were computed on different pair sets");
    }
    return (i2t.mean_rank + t2i.mean_rank) / 2.0;
}

json eval_report(const RetrievalResult& result, std::optional<double> mcmrr_value) {
    json recall = json::object();
    for (const auto& [k, v] : result.recall_at) recall[std::to_string(k)] = v;
    json out{{"direction", to_string(result.direction)},
             {"n", result.ranks.size()},
             {"mean_rank", result.mean_rank},
             {"recall", recall}};
    if (mcmrr_value.has_value()) {
        out["mcmrr"] = *mcmrr_value;
    } else {
        out["mcmrr"] = nullptr;
    }
    return out;
}

}  // namespace cardiolens
