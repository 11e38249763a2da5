#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cardiolens/cohort.hpp"
#include "cardiolens/dual_encoder.hpp"
#include "cardiolens/metrics.hpp"
#include "cardiolens/retrieval.hpp"
#include "cardiolens/store.hpp"
#include "cardiolens/synth.hpp"
#include "cardiolens/template_tokenizer.hpp"
#include "cardiolens/zeroshot.hpp"

namespace cardiolens {

// Tokenize each study's report into bag-of-token counts for the trainer.
std::vector<TrainPair> to_train_pairs(std::span<const SyntheticStudy> studies,
                                      const TemplateVocab& vocab,
                                      std::size_t context_length = kDefaultContextLength);

// Store of raw frame features as pseudo-embeddings (normalized on insert);
// no encoder involved. Image records only.
Store feature_store(std::span<const SyntheticStudy> studies);

// Store of encoded embeddings: one image record per frame plus one text
// record per report.
Store encode_corpus_store(std::span<const SyntheticStudy> studies,
                          const TemplateVocab& vocab,
                          const DualEncoderParams& params,
                          std::size_t context_length = kDefaultContextLength);

std::vector<EmbeddedPrompt> embed_prompt_grid(const PromptGrid& grid,
                                              const TemplateVocab& vocab,
                                              const DualEncoderParams& params,
                                              std::size_t context_length = kDefaultContextLength);

std::vector<Embedding> embed_class_prompts(std::span<const std::string> phrasings,
                                           const TemplateVocab& vocab,
                                           const DualEncoderParams& params,
                                           std::size_t context_length = kDefaultContextLength);

// Ground truth extracted from a study's latent state for a shipped task name.
double regression_truth(const SyntheticStudy& study, const std::string& task);
int binary_truth(const SyntheticStudy& study, const std::string& task);

struct ZeroshotOptions {
    double top_fraction = 0.2;
    std::size_t frame_limit = 10;
    GridPooling pooling = GridPooling::pooled;
    std::size_t context_length = kDefaultContextLength;
    int n_boot = 1000;
    std::uint64_t seed = 0;
    bool by_patient = false;
};

struct RegressionRow {
    std::string study_id;
    double truth = 0.0;
    double prediction = 0.0;
    double frame_min = 0.0;  // per-frame prediction range (scatter whiskers)
    double frame_max = 0.0;
};

struct RegressionEval {
    std::vector<RegressionRow> rows;
    MetricEstimate mae;  // bootstrap over per-study absolute errors
};

RegressionEval zeroshot_regression_eval(std::span<const SyntheticStudy> studies,
                                        const TemplateVocab& vocab,
                                        const DualEncoderParams& params,
                                        const TaskSpec& task,
                                        const ZeroshotOptions& options = {});

struct BinaryRow {
    std::string study_id;
    int label = 0;
    double score = 0.0;
};

struct BinaryEval {
    std::vector<BinaryRow> rows;
    MetricEstimate auc;
};

BinaryEval zeroshot_binary_eval(std::span<const SyntheticStudy> studies,
                                const TemplateVocab& vocab,
                                const DualEncoderParams& params,
                                const TaskSpec& task,
                                const ZeroshotOptions& options = {});

void write_scatter_csv(std::ostream& out, std::span<const RegressionRow> rows);
void write_scores_csv(std::ostream& out, std::span<const BinaryRow> rows);

}  // namespace cardiolens
