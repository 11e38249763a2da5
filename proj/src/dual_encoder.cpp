#include "cardiolens/dual_encoder.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "cardiolens/errors.hpp"
#include "cardiolens/retrieval.hpp"
#include "cardiolens/rng.hpp"
#include "cardiolens/store.hpp"

namespace cardiolens {

using nlohmann::json;

DualEncoderParams init_params(std::size_t d_img, std::size_t d_txt, std::size_t d,
                              std::uint64_t seed) {
    if (d_img == 0 || d_txt == 0 || d == 0) {
        throw std::invalid_argument("init_params: dimensions must be > 0");
    }
    Rng rng(seed);
    DualEncoderParams params;
    params.w_img = Mat(d_img, d);
    params.w_txt = Mat(d_txt, d);
    double img_scale = 1.0 / std::sqrt(static_cast<double>(d_img));
    double txt_scale = 1.0 / std::sqrt(static_cast<double>(d_txt));
    for (auto& x : params.w_img.a) x = rng.normal() * img_scale;
    for (auto& x : params.w_txt.a) x = rng.normal() * txt_scale;
    params.log_temp = std::log(1.0 / 0.07);
    return params;
}

namespace {

// u = x . W (x length W.rows, u length W.cols)
std::vector<double> project(std::span<const double> x, const Mat& w) {
    std::vector<double> u(w.cols, 0.0);
    for (std::size_t r = 0; r < w.rows; ++r) {
        double xv = x[r];
        if (xv == 0.0) continue;
        const double* row = &w.a[r * w.cols];
        for (std::size_t c = 0; c < w.cols; ++c) u[c] += xv * row[c];
    }
    return u;
}

double vec_norm(std::span<const double> v) {
    double acc = 0.0;
    for (double x : v) acc += x * x;
    return std::sqrt(acc);
}

Embedding to_unit_embedding(std::span<const double> u, const char* who) {
    double n = vec_norm(u);
    if (n == 0.0 || !std::isfinite(n)) {
        throw NumericError(std::string(who) + ": degenerate (zero) projection");
    }
    Embedding out(u.size());
    for (std::size_t i = 0; i < u.size(); ++i) {
        out[i] = static_cast<float>(u[i] / n);
    }
    return out;
}

}  // namespace

Embedding encode_image_toy(std::span<const float> features,
                           const DualEncoderParams& params) {
    if (features.size() != params.w_img.rows) {
        throw std::invalid_argument("encode_image_toy: feature dimension mismatch");
    }
    std::vector<double> x(features.size());
    for (std::size_t i = 0; i < features.size(); ++i) {
        if (!std::isfinite(features[i])) {
            throw NumericError("encode_image_toy: non-finite feature");
        }
        x[i] = static_cast<double>(features[i]);
    }
    return to_unit_embedding(project(x, params.w_img), "encode_image_toy");
}

Embedding encode_text_toy(const TokenSequence& seq,
                          const SpecialTokens& special,
                          const DualEncoderParams& params) {
    std::vector<double> counts = token_counts(seq, special, params.w_txt.rows);
    bool any = false;
    for (double c : counts) any = any || c != 0.0;
    if (!any) {
        throw NumericError("encode_text_toy: sequence has no content tokens");
    }
    return to_unit_embedding(project(counts, params.w_txt), "encode_text_toy");
}

ClipLossResult clip_loss(const Mat& img_embeddings, const Mat& txt_embeddings,
                         double log_temp) {
    std::size_t n = img_embeddings.rows;
    std::size_t d = img_embeddings.cols;
    if (n < 2) throw std::invalid_argument("clip_loss: batch size must be >= 2");
    if (txt_embeddings.rows != n || txt_embeddings.cols != d) {
        throw std::invalid_argument("clip_loss: batch shape mismatch");
    }
    for (const Mat* m : {&img_embeddings, &txt_embeddings}) {
        for (std::size_t r = 0; r < n; ++r) {
            double norm = 0.0;
            for (std::size_t c = 0; c < d; ++c) norm += (*m)(r, c) * (*m)(r, c);
            if (std::abs(std::sqrt(norm) - 1.0) > 1e-3) {
                throw std::invalid_argument("clip_loss: embeddings must be unit-norm");
            }
        }
    }

    double t = std::exp(log_temp);
    Mat logits(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            double dot = 0.0;
            for (std::size_t c = 0; c < d; ++c) {
                dot += img_embeddings(i, c) * txt_embeddings(j, c);
            }
            double l = t * dot;
            if (!std::isfinite(l)) throw NumericError("clip_loss: non-finite logit");
            logits(i, j) = l;
        }
    }

    // Row softmax P (image -> text) and column softmax Q (text -> image),
    // both with max subtraction.
    Mat p(n, n), q(n, n);
    double loss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double mx = logits(i, 0);
        for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, logits(i, j));
        double z = 0.0;
        for (std::size_t j = 0; j < n; ++j) z += std::exp(logits(i, j) - mx);
        for (std::size_t j = 0; j < n; ++j) p(i, j) = std::exp(logits(i, j) - mx) / z;
        loss -= logits(i, i) - mx - std::log(z);
    }
    for (std::size_t j = 0; j < n; ++j) {
        double mx = logits(0, j);
        for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, logits(i, j));
        double z = 0.0;
        for (std::size_t i = 0; i < n; ++i) z += std::exp(logits(i, j) - mx);
        for (std::size_t i = 0; i < n; ++i) q(i, j) = std::exp(logits(i, j) - mx) / z;
        loss -= logits(j, j) - mx - std::log(z);
    }
    loss /= 2.0 * static_cast<double>(n);

    // dLoss/dL_ij = (P_ij - d_ij + Q_ij - d_ij) / (2N) =: G_ij
    // dLoss/dimg = t G txt, dLoss/dtxt = t G^T img, dLoss/dtau = sum G o L.
    Mat g(n, n);
    double inv = 1.0 / (2.0 * static_cast<double>(n));
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            double delta = i == j ? 2.0 : 0.0;
            g(i, j) = (p(i, j) + q(i, j) - delta) * inv;
        }
    }

    ClipLossResult result;
    result.loss = loss;
    result.d_img_embeddings = Mat(n, d);
    result.d_txt_embeddings = Mat(n, d);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            double gij = g(i, j);
            if (gij == 0.0) continue;
            for (std::size_t c = 0; c < d; ++c) {
                result.d_img_embeddings(i, c) += t * gij * txt_embeddings(j, c);
                result.d_txt_embeddings(j, c) += t * gij * img_embeddings(i, c);
            }
            result.d_log_temp += gij * logits(i, j);
        }
    }
    return result;
}

double lr_schedule(std::size_t step, std::size_t warmup_steps,
                   std::size_t total_steps, double lr_max) {
    if (step > total_steps) throw std::invalid_argument("lr_schedule: step out of range");
    if (warmup_steps >= total_steps) {
        throw std::invalid_argument("lr_schedule: warmup must be < total steps");
    }
    if (step <= warmup_steps && warmup_steps > 0) {
        return lr_max * static_cast<double>(step) / static_cast<double>(warmup_steps);
    }
    double progress = static_cast<double>(step - warmup_steps) /
                      static_cast<double>(total_steps - warmup_steps);
    return lr_max * 0.5 * (1.0 + std::cos(M_PI * progress));
}

TrainConfig desk_profile() {
    TrainConfig config;
    config.lr_max = 0.5;
    config.warmup_steps = 100;
    config.epochs = 120;
    config.batch_size = 64;
    config.d = 32;
    config.val_every = 5;
    config.val_fraction = 0.2;
    return config;
}

namespace {

struct EncodedBatch {
    Mat raw;         // pre-normalization projections, N x d
    Mat unit;        // normalized rows, N x d
    std::vector<double> norms;
};

EncodedBatch encode_batch(const Mat& inputs, const Mat& w, const char* who) {
    EncodedBatch batch;
    std::size_t n = inputs.rows;
    batch.raw = Mat(n, w.cols);
    batch.unit = Mat(n, w.cols);
    batch.norms.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> u =
            project(std::span<const double>(&inputs.a[i * inputs.cols], inputs.cols), w);
        double norm = vec_norm(u);
        if (norm == 0.0 || !std::isfinite(norm)) {
            throw NumericError(std::string(who) + ": degenerate projection in batch");
        }
        batch.norms[i] = norm;
        for (std::size_t c = 0; c < w.cols; ++c) {
            batch.raw(i, c) = u[c];
            batch.unit(i, c) = u[c] / norm;
        }
    }
    return batch;
}

// Backprop through row normalization and the projection:
//   du = (da - (da . a) a) / ||u||,   dW += x^T du
void accumulate_param_grads(const Mat& inputs, const EncodedBatch& batch,
                            const Mat& d_unit, Mat& d_w) {
    std::size_t n = inputs.rows;
    std::size_t d = batch.unit.cols;
    for (std::size_t i = 0; i < n; ++i) {
        double dot = 0.0;
        for (std::size_t c = 0; c < d; ++c) dot += d_unit(i, c) * batch.unit(i, c);
        std::vector<double> du(d);
        for (std::size_t c = 0; c < d; ++c) {
            du[c] = (d_unit(i, c) - dot * batch.unit(i, c)) / batch.norms[i];
        }
        for (std::size_t r = 0; r < inputs.cols; ++r) {
            double xv = inputs(i, r);
            if (xv == 0.0) continue;
            for (std::size_t c = 0; c < d; ++c) d_w(r, c) += xv * du[c];
        }
    }
}

}  // namespace

BatchGradients batch_gradients(const DualEncoderParams& params,
                               const Mat& features, const Mat& counts) {
    if (features.rows != counts.rows) {
        throw std::invalid_argument("batch_gradients: batch size mismatch");
    }
    EncodedBatch img = encode_batch(features, params.w_img, "image encoder");
    EncodedBatch txt = encode_batch(counts, params.w_txt, "text encoder");
    ClipLossResult loss = clip_loss(img.unit, txt.unit, params.log_temp);

    BatchGradients grads;
    grads.loss = loss.loss;
    grads.d_log_temp = loss.d_log_temp;
    grads.d_w_img = Mat(params.w_img.rows, params.w_img.cols);
    grads.d_w_txt = Mat(params.w_txt.rows, params.w_txt.cols);
    accumulate_param_grads(features, img, loss.d_img_embeddings, grads.d_w_img);
    accumulate_param_grads(counts, txt, loss.d_txt_embeddings, grads.d_w_txt);
    return grads;
}

double validation_mcmrr(const DualEncoderParams& params,
                        const std::vector<TrainPair>& pairs,
                        std::span<const std::size_t> indices) {
    if (indices.empty()) throw std::invalid_argument("validation_mcmrr: no pairs");

    std::vector<Embedding> img_embs, txt_embs;
    std::vector<std::string> ids;
    img_embs.reserve(indices.size());
    txt_embs.reserve(indices.size());
    for (std::size_t idx : indices) {
        const TrainPair& pair = pairs[idx];
        img_embs.push_back(encode_image_toy(pair.frames.at(0), params));
        txt_embs.push_back(to_unit_embedding(project(pair.text_counts, params.w_txt),
                                             "validation text encoder"));
        ids.push_back(pair.pair_id);
    }

    std::vector<Candidate> img_candidates(indices.size()), txt_candidates(indices.size());
    for (std::size_t i = 0; i < indices.size(); ++i) {
        img_candidates[i] = {ids[i], &img_embs[i]};
        txt_candidates[i] = {ids[i], &txt_embs[i]};
    }
    double i2t_sum = 0.0, t2i_sum = 0.0;
    for (std::size_t i = 0; i < indices.size(); ++i) {
        i2t_sum += static_cast<double>(rank_of_match(img_embs[i], ids[i], txt_candidates));
        t2i_sum += static_cast<double>(rank_of_match(txt_embs[i], ids[i], img_candidates));
    }
    double n = static_cast<double>(indices.size());
    return (i2t_sum / n + t2i_sum / n) / 2.0;
}

TrainResult train(const std::vector<TrainPair>& pairs, const TrainConfig& config) {
    if (config.batch_size < 2) throw std::invalid_argument("train: batch_size must be >= 2");
    if (pairs.size() < config.batch_size) {
        throw std::invalid_argument("train: need at least batch_size pairs");
    }
    if (config.epochs < 1) throw std::invalid_argument("train: epochs must be >= 1");
    std::size_t d_img = pairs.front().frames.at(0).size();
    std::size_t d_txt = pairs.front().text_counts.size();

    Rng root(config.seed);

    // Patient-disjoint split: sorted unique patients, seeded shuffle, the
    // first val_fraction share becomes validation.
    std::vector<std::string> patients;
    for (const auto& p : pairs) patients.push_back(p.patient_id);
    std::sort(patients.begin(), patients.end());
    patients.erase(std::unique(patients.begin(), patients.end()), patients.end());
    Rng split_rng = root.substream(0);
    split_rng.shuffle(patients);
    std::size_t n_val_patients = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::llround(config.val_fraction *
                                                 static_cast<double>(patients.size()))));
    if (n_val_patients >= patients.size()) n_val_patients = patients.size() - 1;
    std::unordered_map<std::string, bool> is_val;
    for (std::size_t i = 0; i < patients.size(); ++i) is_val[patients[i]] = i < n_val_patients;

    TrainResult result;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        (is_val.at(pairs[i].patient_id) ? result.val_indices : result.train_indices)
            .push_back(i);
    }
    if (result.train_indices.size() < config.batch_size) {
        throw std::invalid_argument("train: training split smaller than batch_size");
    }
    if (result.val_indices.empty()) {
        throw std::invalid_argument("train: empty validation split");
    }

    std::size_t steps_per_epoch = result.train_indices.size() / config.batch_size;
    std::size_t total_steps = config.epochs * steps_per_epoch;
    if (config.warmup_steps >= total_steps) {
        throw std::invalid_argument("train: warmup_steps must be < total steps (" +
                                    std::to_string(total_steps) + ")");
    }

    DualEncoderParams params = init_params(d_img, d_txt, config.d, root.substream(1).seed());
    result.initial_val_mcmrr = validation_mcmrr(params, pairs, result.val_indices);
    result.best = {params, 0, result.initial_val_mcmrr};

    double log_temp_max = std::log(config.temp_clamp);
    std::size_t global_step = 0;
    Mat features(config.batch_size, d_img);
    Mat counts(config.batch_size, d_txt);

    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        Rng epoch_rng = root.substream(1000 + epoch);

        // Fresh random frame per pair each epoch, then a full shuffle.
        std::vector<std::size_t> frame_choice(pairs.size(), 0);
        for (std::size_t idx : result.train_indices) {
            frame_choice[idx] = static_cast<std::size_t>(epoch_rng.below(pairs[idx].frames.size()));
        }
        std::vector<std::size_t> order = result.train_indices;
        epoch_rng.shuffle(order);

        double epoch_loss = 0.0;
        for (std::size_t b = 0; b < steps_per_epoch; ++b) {
            for (std::size_t k = 0; k < config.batch_size; ++k) {
                const TrainPair& pair = pairs[order[b * config.batch_size + k]];
                const auto& frame = pair.frames[frame_choice[order[b * config.batch_size + k]]];
                for (std::size_t c = 0; c < d_img; ++c) {
                    features(k, c) = static_cast<double>(frame[c]);
                }
                for (std::size_t c = 0; c < d_txt; ++c) counts(k, c) = pair.text_counts[c];
            }

            BatchGradients grads;
            try {
                grads = batch_gradients(params, features, counts);
            } catch (const NumericError&) {
                result.aborted_non_finite = true;
                return result;
            }
            if (!std::isfinite(grads.loss)) {
                result.aborted_non_finite = true;
                return result;
            }

            double lr = lr_schedule(++global_step, config.warmup_steps, total_steps,
                                    config.lr_max);
            for (std::size_t i = 0; i < params.w_img.a.size(); ++i) {
                params.w_img.a[i] -= lr * grads.d_w_img.a[i];
            }
            for (std::size_t i = 0; i < params.w_txt.a.size(); ++i) {
                params.w_txt.a[i] -= lr * grads.d_w_txt.a[i];
            }
            params.log_temp = std::min(params.log_temp - lr * grads.d_log_temp, log_temp_max);
            epoch_loss += grads.loss;
        }
        result.epoch_losses.push_back(epoch_loss / static_cast<double>(steps_per_epoch));

        if (epoch % config.val_every == 0 || epoch == config.epochs) {
            double mcmrr_value = validation_mcmrr(params, pairs, result.val_indices);
            result.val_history.emplace_back(epoch, mcmrr_value);
            if (mcmrr_value < result.best.val_mcmrr) {
                result.best = {params, epoch, mcmrr_value};
            }
        }
    }
    return result;
}

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    auto write_matrix = [&](const Mat& m, const std::filesystem::path& path) {
        EmbBlob blob;
        blob.dimension = static_cast<std::uint32_t>(m.cols);
        blob.vectors.resize(m.rows);
        for (std::size_t r = 0; r < m.rows; ++r) {
            blob.vectors[r].resize(m.cols);
            for (std::size_t c = 0; c < m.cols; ++c) {
                blob.vectors[r][c] = static_cast<float>(m(r, c));
            }
        }
        write_emb_blob(path, blob);
    };
    write_matrix(checkpoint.params.w_img, dir / "w_img.emb");
    write_matrix(checkpoint.params.w_txt, dir / "w_txt.emb");

    json meta{{"d_img", checkpoint.params.w_img.rows},
              {"d_txt", checkpoint.params.w_txt.rows},
              {"d", checkpoint.params.w_img.cols},
              {"log_temp", checkpoint.params.log_temp},
              {"epoch", checkpoint.epoch},
              {"val_mcmrr", checkpoint.val_mcmrr}};
    std::ofstream out(dir / "checkpoint.json");
    if (!out) throw FormatError("cannot write checkpoint to '" + dir.string() + "'");
    out << meta.dump(2) << '\n';
}

Checkpoint load_checkpoint(const std::filesystem::path& dir) {
    std::ifstream in(dir / "checkpoint.json");
    if (!in) throw FormatError("cannot open checkpoint in '" + dir.string() + "'");
    json meta = json::parse(in, nullptr, false);
    if (meta.is_discarded()) throw FormatError("checkpoint.json is not valid JSON");

    Checkpoint checkpoint;
    std::size_t d_img, d_txt, d;
    try {
        d_img = meta.at("d_img").get<std::size_t>();
        d_txt = meta.at("d_txt").get<std::size_t>();
        d = meta.at("d").get<std::size_t>();
        checkpoint.params.log_temp = meta.at("log_temp").get<double>();
        checkpoint.epoch = meta.at("epoch").get<std::size_t>();
        checkpoint.val_mcmrr = meta.at("val_mcmrr").get<double>();
    } catch (const json::exception& e) {
        throw FormatError(std::string("checkpoint.json schema violation: ") + e.what());
    }

    auto read_matrix = [&](const std::filesystem::path& path, std::size_t rows,
                           std::size_t cols) {
        EmbBlob blob = read_emb_blob(path);
        if (blob.dimension != cols || blob.vectors.size() != rows) {
            throw FormatError("checkpoint matrix shape mismatch in '" + path.string() + "'");
        }
        Mat m(rows, cols);
        for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t c = 0; c < cols; ++c) {
                m(r, c) = static_cast<double>(blob.vectors[r][c]);
            }
        }
        return m;
    };
    checkpoint.params.w_img = read_matrix(dir / "w_img.emb", d_img, d);
    checkpoint.params.w_txt = read_matrix(dir / "w_txt.emb", d_txt, d);
    return checkpoint;
}

}  // namespace cardiolens
