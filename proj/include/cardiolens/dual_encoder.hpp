#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "cardiolens/embedding.hpp"
#include "cardiolens/template_tokenizer.hpp"

namespace cardiolens {

// Minimal row-major double matrix; training math stays in 64-bit.
struct Mat {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> a;

    Mat() = default;
    Mat(std::size_t r, std::size_t c) : rows(r), cols(c), a(r * c, 0.0) {}

    double& operator()(std::size_t r, std::size_t c) { return a[r * cols + c]; }
    double operator()(std::size_t r, std::size_t c) const { return a[r * cols + c]; }
};

// Two linear projections into a shared d-dimensional space plus the
// learnable log-temperature of the contrastive loss.
struct DualEncoderParams {
    Mat w_img;  // d_img x d
    Mat w_txt;  // d_txt x d
    double log_temp = 0.0;
};

// Gaussian init scaled by 1/sqrt(fan_in); log_temp = ln(1/0.07).
DualEncoderParams init_params(std::size_t d_img, std::size_t d_txt, std::size_t d,
                              std::uint64_t seed);

// normalize(features . W_img). Throws NumericError when the projection is
// the zero vector (degenerate params).
Embedding encode_image_toy(std::span<const float> features,
                           const DualEncoderParams& params);

// Bag-of-tokens text encoder: histogram of content token ids (bos/eos
// excluded) projected by W_txt and normalized. Throws NumericError when the
// sequence has no content tokens.
Embedding encode_text_toy(const TokenSequence& seq,
                          const SpecialTokens& special,
                          const DualEncoderParams& params);

struct ClipLossResult {
    double loss = 0.0;
    Mat d_img_embeddings;  // N x d
    Mat d_txt_embeddings;  // N x d
    double d_log_temp = 0.0;
};

// Symmetric contrastive loss over a batch of N matched pairs:
//   logits L = exp(log_temp) * (img . txt^T)
//   loss = 1/2 [CE over rows + CE over columns], averaged over N,
// with matched pairs on the diagonal. Rows must be unit-norm; N >= 2.
// Throws NumericError on non-finite logits.
ClipLossResult clip_loss(const Mat& img_embeddings, const Mat& txt_embeddings,
                         double log_temp);

// Warmup then cosine decay:
//   step <= warmup: lr_max * step / warmup
//   else:           lr_max * (1 + cos(pi*(step-warmup)/(total-warmup))) / 2
// valid for 0 <= step <= total.
double lr_schedule(std::size_t step, std::size_t warmup_steps,
                   std::size_t total_steps, double lr_max);

// One training example: per-frame image feature vectors plus the report's
// token counts.
struct TrainPair {
    std::string pair_id;
    std::string patient_id;
    std::vector<std::vector<float>> frames;
    std::vector<double> text_counts;  // length d_txt
};

struct TrainConfig {
    double lr_max = 5e-5;
    std::size_t warmup_steps = 2000;
    std::size_t epochs = 50;
    std::size_t batch_size = 1024;
    std::uint64_t seed = 0;
    std::size_t d = 512;
    std::size_t val_every = 5;      // epochs between validation evaluations
    double val_fraction = 0.2;      // fraction of patients held out
    double temp_clamp = 100.0;      // exp(log_temp) ceiling during training
};

// Small-scale profile used throughout the synthetic evaluations.
TrainConfig desk_profile();

struct BatchGradients {
    double loss = 0.0;
    Mat d_w_img;
    Mat d_w_txt;
    double d_log_temp = 0.0;
};

// Full forward/backward for one batch of raw features and token counts;
// used by the training loop and by the finite-difference checks.
BatchGradients batch_gradients(const DualEncoderParams& params,
                               const Mat& features, const Mat& counts);

struct Checkpoint {
    DualEncoderParams params;
    std::size_t epoch = 0;
    double val_mcmrr = 0.0;
};

struct TrainResult {
    Checkpoint best;                 // minimum validation MCMRR
    double initial_val_mcmrr = 0.0;  // randomly initialized params
    std::vector<double> epoch_losses;
    std::vector<std::pair<std::size_t, double>> val_history;  // (epoch, mcmrr)
    std::vector<std::size_t> train_indices;
    std::vector<std::size_t> val_indices;
    bool aborted_non_finite = false;
};

// Full-batch-sweep gradient descent with per-epoch seeded shuffling and
// random-frame resampling; validation split is disjoint by patient.
TrainResult train(const std::vector<TrainPair>& pairs, const TrainConfig& config);

// Mean cross-modal retrieval rank over the given pairs (frame 0 for images).
double validation_mcmrr(const DualEncoderParams& params,
                        const std::vector<TrainPair>& pairs,
                        std::span<const std::size_t> indices);

// Checkpoint directory: checkpoint.json plus one EMB1 blob per matrix.
void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& dir);
Checkpoint load_checkpoint(const std::filesystem::path& dir);

}  // namespace cardiolens
