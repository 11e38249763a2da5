#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "cardiolens/embedding.hpp"

namespace cardiolens {

// Materialized ensemble of numeric prompts: every phrasing instantiated at
// every integer value in [lo, hi], phrasing-major, values ascending.
struct PromptGrid {
    struct Prompt {
        int phrasing = 0;
        int value = 0;
        std::string text;
    };
    std::vector<std::string> phrasings;
    int lo = 0;
    int hi = 0;
    std::vector<Prompt> prompts;
};

// Each phrasing must contain the placeholder 'X' exactly once and no digits.
PromptGrid build_prompt_grid(std::vector<std::string> phrasings, int lo, int hi);

struct EmbeddedPrompt {
    int phrasing = 0;
    int value = 0;
    Embedding embedding;
};

enum class GridPooling {
    pooled,    // one candidate per prompt; top-k over the pooled set
    averaged,  // similarities averaged across phrasings per value first
};

// Mean over the first min(frame_limit, n) frames of the mean cosine
// similarity against the positive prompts.
double zeroshot_classify(std::span<const Embedding> frame_embeddings,
                         std::span<const Embedding> prompt_embeddings,
                         std::size_t frame_limit = 10);

// Ranks prompts by similarity (ties: ascending value, then phrasing index),
// keeps the top ceil(top_fraction * N) and returns the median of their
// values (mean of the two middles when the count is even).
double zeroshot_regress_frame(const Embedding& frame_embedding,
                              std::span<const EmbeddedPrompt> prompts,
                              double top_fraction = 0.2,
                              GridPooling pooling = GridPooling::pooled);

// Arithmetic mean of per-frame predictions over the first
// min(frame_limit, available) frames.
double zeroshot_regress_video(std::span<const Embedding> frame_embeddings,
                              std::span<const EmbeddedPrompt> prompts,
                              double top_fraction = 0.2,
                              std::size_t frame_limit = 10,
                              GridPooling pooling = GridPooling::pooled);

// Prompt-set definition file:
//   {"task":str, "type":"binary"|"regression", "phrasings":[str...],
//    "lo":int, "hi":int, "unit":str}
// lo/hi/unit may be omitted for binary tasks.
struct TaskSpec {
    enum class Type { binary, regression };
    std::string task;
    Type type = Type::binary;
    std::vector<std::string> phrasings;
    int lo = 0;
    int hi = 0;
    std::string unit;
};

TaskSpec load_task_file(const std::filesystem::path& path);

}  // namespace cardiolens
