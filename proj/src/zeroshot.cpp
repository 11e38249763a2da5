#include "cardiolens/zeroshot.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "cardiolens/errors.hpp"

namespace cardiolens {

using nlohmann::json;

PromptGrid build_prompt_grid(std::vector<std::string> phrasings, int lo, int hi) {
    if (phrasings.empty()) throw std::invalid_argument("build_prompt_grid: no phrasings");
    if (lo > hi) throw std::invalid_argument("build_prompt_grid: lo > hi");
    for (const auto& p : phrasings) {
        std::size_t placeholders = 0;
        for (char c : p) {
            if (c == 'X') ++placeholders;
            if (std::isdigit(static_cast<unsigned char>(c))) {
                throw std::invalid_argument("build_prompt_grid: phrasing must not contain digits: '" + p + "'");
            }
        }
        if (placeholders != 1) {
            throw std::invalid_argument("build_prompt_grid: phrasing must contain exactly one 'X': '" + p + "'");
        }
    }
    PromptGrid grid;
    grid.phrasings = std::move(phrasings);
    grid.lo = lo;
    grid.hi = hi;
    grid.prompts.reserve(grid.phrasings.size() * static_cast<std::size_t>(hi - lo + 1));
    for (std::size_t p = 0; p < grid.phrasings.size(); ++p) {
        const std::string& phrasing = grid.phrasings[p];
        std::size_t x = phrasing.find('X');
        for (int v = lo; v <= hi; ++v) {
            PromptGrid::Prompt prompt;
            prompt.phrasing = static_cast<int>(p);
            prompt.value = v;
            prompt.text = phrasing.substr(0, x) + std::to_string(v) + phrasing.substr(x + 1);
            grid.prompts.push_back(std::move(prompt));
        }
    }
    return grid;
}

double zeroshot_classify(std::span<const Embedding> frame_embeddings,
                         std::span<const Embedding> prompt_embeddings,
                         std::size_t frame_limit) {
    if (frame_embeddings.empty()) throw std::invalid_argument("zeroshot_classify: no frames");
    if (prompt_embeddings.empty()) throw std::invalid_argument("zeroshot_classify: no prompts");
    if (frame_limit < 1) throw std::invalid_argument("zeroshot_classify: frame_limit must be >= 1");

    std::size_t frames = std::min(frame_limit, frame_embeddings.size());
    double frame_acc = 0.0;
    for (std::size_t f = 0; f < frames; ++f) {
        double prompt_acc = 0.0;
        for (const Embedding& p : prompt_embeddings) {
            prompt_acc += cosine_similarity(frame_embeddings[f], p);
        }
        frame_acc += prompt_acc / static_cast<double>(prompt_embeddings.size());
    }
    return frame_acc / static_cast<double>(frames);
}

namespace {

double median_of_values(std::vector<int> values) {
    std::sort(values.begin(), values.end());
    std::size_t n = values.size();
    if (n % 2 == 1) return static_cast<double>(values[n / 2]);
    return (static_cast<double>(values[n / 2 - 1]) + static_cast<double>(values[n / 2])) / 2.0;
}

struct Scored {
    float similarity;
    int value;
    int phrasing;
};

}  // namespace

double zeroshot_regress_frame(const Embedding& frame_embedding,
                              std::span<const EmbeddedPrompt> prompts,
                              double top_fraction,
                              GridPooling pooling) {
    if (prompts.empty()) throw std::invalid_argument("zeroshot_regress_frame: empty grid");
    if (top_fraction <= 0.0 || top_fraction > 1.0) {
        throw std::invalid_argument("zeroshot_regress_frame: top_fraction must be in (0, 1]");
    }

    std::vector<Scored> scored;
    if (pooling == GridPooling::pooled) {
        scored.reserve(prompts.size());
        for (const auto& p : prompts) {
            scored.push_back({cosine_similarity(frame_embedding, p.embedding),
                              p.value, p.phrasing});
        }
    } else {
        // Average similarities across phrasings per value, then rank values.
        std::map<int, std::pair<double, std::size_t>> by_value;
        for (const auto& p : prompts) {
            auto& acc = by_value[p.value];
            acc.first += cosine_similarity(frame_embedding, p.embedding);
            acc.second += 1;
        }
        scored.reserve(by_value.size());
        for (const auto& [value, acc] : by_value) {
            scored.push_back({static_cast<float>(acc.first / static_cast<double>(acc.second)),
                              value, 0});
        }
    }

    std::sort(scored.begin(), scored.end(), [](const Scored& a, const Scored& b) {
        if (a.similarity != b.similarity) return a.similarity > b.similarity;
        if (a.value != b.value) return a.value < b.value;
        return a.phrasing < b.phrasing;
    });

    std::size_t k = static_cast<std::size_t>(
        std::ceil(top_fraction * static_cast<double>(scored.size())));
    k = std::max<std::size_t>(1, std::min(k, scored.size()));

    std::vector<int> selected;
    selected.reserve(k);
    for (std::size_t i = 0; i < k; ++i) selected.push_back(scored[i].value);
    return median_of_values(std::move(selected));
}

double zeroshot_regress_video(std::span<const Embedding> frame_embeddings,
                              std::span<const EmbeddedPrompt> prompts,
                              double top_fraction,
                              std::size_t frame_limit,
                              GridPooling pooling) {
    if (frame_embeddings.empty()) throw std::invalid_argument("zeroshot_regress_video: no frames");
    if (frame_limit < 1) throw std::invalid_argument("zeroshot_regress_video: frame_limit must be >= 1");
    std::size_t frames = std::min(frame_limit, frame_embeddings.size());
    double acc = 0.0;
    for (std::size_t f = 0; f < frames; ++f) {
        acc += zeroshot_regress_frame(frame_embeddings[f], prompts, top_fraction, pooling);
    }
    return acc / static_cast<double>(frames);
}

TaskSpec load_task_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open task file '" + path.string() + "'");
    json doc = json::parse(in, nullptr, false);
    if (doc.is_discarded()) throw FormatError("task file '" + path.string() + "' is not valid JSON");

    TaskSpec spec;
    try {
        spec.task = doc.at("task").get<std::string>();
        std::string type = doc.at("type").get<std::string>();
        if (type == "binary") {
            spec.type = TaskSpec::Type::binary;
        } else if (type == "regression") {
            spec.type = TaskSpec::Type::regression;
        } else {
            throw FormatError("task file: unknown type '" + type + "'");
        }
        for (const json& p : doc.at("phrasings")) {
            spec.phrasings.push_back(p.get<std::string>());
        }
        if (spec.phrasings.empty()) throw FormatError("task file: empty phrasings");
        if (spec.type == TaskSpec::Type::regression) {
            spec.lo = doc.at("lo").get<int>();
            spec.hi = doc.at("hi").get<int>();
            spec.unit = doc.value("unit", std::string{});
        }
    } catch (const json::exception& e) {
        throw FormatError("task file '" + path.string() + "' schema violation: " + e.what());
    }
    return spec;
}

}  // namespace cardiolens
