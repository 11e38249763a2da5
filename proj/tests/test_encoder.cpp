#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <set>

#include "cardiolens/dual_encoder.hpp"
#include "cardiolens/pipeline.hpp"
#include "cardiolens/errors.hpp"
#include "cardiolens/rng.hpp"
#include "oracles.hpp"

using namespace cardiolens;

namespace {

const SpecialTokens kSpecials{};  // unk 0, bos 1, eos 2, pad 3

DualEncoderParams identity_params(std::size_t d) {
    DualEncoderParams params;
    params.w_img = Mat(d, d);
    params.w_txt = Mat(d, d);
    for (std::size_t i = 0; i < d; ++i) {
        params.w_img(i, i) = 1.0;
        params.w_txt(i, i) = 1.0;
    }
    params.log_temp = 0.0;
    return params;
}

Mat random_unit_rows(Rng& rng, std::size_t n, std::size_t d) {
    Mat m(n, d);
    for (std::size_t i = 0; i < n; ++i) {
        double norm = 0.0;
        for (std::size_t c = 0; c < d; ++c) {
            m(i, c) = rng.normal();
            norm += m(i, c) * m(i, c);
        }
        norm = std::sqrt(norm);
        for (std::size_t c = 0; c < d; ++c) m(i, c) /= norm;
    }
    return m;
}

}  // namespace

TEST_SUITE("encode_image_toy") {
    TEST_CASE("identity block maps e1 to e1") {
        DualEncoderParams params = identity_params(4);
        std::vector<float> e1{1.0f, 0.0f, 0.0f, 0.0f};
        CHECK(encode_image_toy(e1, params) == Embedding{1.0f, 0.0f, 0.0f, 0.0f});
    }

    TEST_CASE("scaling features leaves the embedding unchanged") {
        Rng rng(100);
        DualEncoderParams params = init_params(6, 4, 3, 1);
        std::vector<float> x(6), x2(6);
        for (std::size_t i = 0; i < 6; ++i) {
            x[i] = static_cast<float>(rng.normal());
            x2[i] = 2.0f * x[i];
        }
        Embedding a = encode_image_toy(x, params);
        Embedding b = encode_image_toy(x2, params);
        for (std::size_t i = 0; i < a.size(); ++i) {
            CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-6));
        }
    }

    TEST_CASE("matches the matrix-multiply-then-normalize oracle") {
        Rng rng(101);
        DualEncoderParams params = init_params(5, 4, 3, 2);
        std::vector<float> x(5);
        for (auto& v : x) v = static_cast<float>(rng.normal());
        Embedding got = encode_image_toy(x, params);

        std::vector<double> u(3, 0.0);
        for (std::size_t r = 0; r < 5; ++r) {
            for (std::size_t c = 0; c < 3; ++c) u[c] += x[r] * params.w_img(r, c);
        }
        double norm = std::sqrt(u[0] * u[0] + u[1] * u[1] + u[2] * u[2]);
        for (std::size_t c = 0; c < 3; ++c) {
            CHECK(got[c] == doctest::Approx(u[c] / norm).epsilon(1e-6));
        }
    }

    TEST_CASE("zero projection raises") {
        DualEncoderParams params;
        params.w_img = Mat(2, 2);  // all zeros
        params.w_txt = Mat(2, 2);
        std::vector<float> x{1.0f, 2.0f};
        CHECK_THROWS_AS(encode_image_toy(x, params), NumericError);
    }
}

TEST_SUITE("encode_text_toy") {
    TEST_CASE("single token selects its row") {
        DualEncoderParams params = identity_params(8);
        TokenSequence seq{{1, 5, 2}, false};  // bos, token 5, eos
        Embedding e = encode_text_toy(seq, kSpecials, params);
        CHECK(e[5] == doctest::Approx(1.0));
    }

    TEST_CASE("bag model ignores token order") {
        DualEncoderParams params = init_params(4, 10, 4, 3);
        TokenSequence a{{1, 5, 7, 7, 9, 2}, false};
        TokenSequence b{{1, 9, 7, 5, 7, 2}, false};
        CHECK(encode_text_toy(a, kSpecials, params) == encode_text_toy(b, kSpecials, params));
    }

    TEST_CASE("matches the count-project-normalize oracle") {
        Rng rng(102);
        DualEncoderParams params = init_params(4, 10, 4, 4);
        TokenSequence seq{{1, 4, 6, 6, 2}, false};
        Embedding got = encode_text_toy(seq, kSpecials, params);
        std::vector<double> u(4, 0.0);
        for (std::size_t c = 0; c < 4; ++c) {
            u[c] = params.w_txt(4, c) + 2.0 * params.w_txt(6, c);
        }
        double norm = 0.0;
        for (double v : u) norm += v * v;
        norm = std::sqrt(norm);
        for (std::size_t c = 0; c < 4; ++c) {
            CHECK(got[c] == doctest::Approx(u[c] / norm).epsilon(1e-6));
        }
    }

    TEST_CASE("bos/eos only is an error") {
        DualEncoderParams params = identity_params(4);
        TokenSequence empty{{1, 2}, false};
        CHECK_THROWS_AS(encode_text_toy(empty, kSpecials, params), NumericError);
    }
}

TEST_SUITE("clip_loss") {
    TEST_CASE("mutually orthonormal pairs at tau=0 give ln 2") {
        Mat img(2, 4), txt(2, 4);
        img(0, 0) = 1.0;
        img(1, 1) = 1.0;
        txt(0, 2) = 1.0;
        txt(1, 3) = 1.0;
        ClipLossResult r = clip_loss(img, txt, 0.0);
        CHECK(r.loss == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    }

    TEST_CASE("perfectly matched pairs: loss decreases in tau toward zero") {
        Mat img(3, 3), txt(3, 3);
        for (std::size_t i = 0; i < 3; ++i) {
            img(i, i) = 1.0;
            txt(i, i) = 1.0;
        }
        double prev = clip_loss(img, txt, 0.0).loss;
        for (double tau : {1.0, 2.0, 3.0, 4.0}) {
            double loss = clip_loss(img, txt, tau).loss;
            CHECK(loss < prev);
            prev = loss;
        }
        CHECK(clip_loss(img, txt, 10.0).loss < 1e-4);
        CHECK(clip_loss(img, txt, 10.0).loss >= 0.0);
    }

    TEST_CASE("swapping image and text batches leaves the loss unchanged") {
        Rng rng(200);
        Mat img = random_unit_rows(rng, 6, 8);
        Mat txt = random_unit_rows(rng, 6, 8);
        ClipLossResult a = clip_loss(img, txt, 1.3);
        ClipLossResult b = clip_loss(txt, img, 1.3);
        CHECK(a.loss == doctest::Approx(b.loss).epsilon(1e-12));
    }

    TEST_CASE("random embeddings at tau=0 give about ln N") {
        Rng rng(201);
        Mat img = random_unit_rows(rng, 64, 64);
        Mat txt = random_unit_rows(rng, 64, 64);
        double loss = clip_loss(img, txt, 0.0).loss;
        CHECK(loss == doctest::Approx(std::log(64.0)).epsilon(0.10));
    }

    TEST_CASE("analytic gradients match central finite differences") {
        // 20 seeded batches, N=4, d=8, eps=1e-5, max relative error < 1e-4.
        double eps = 1e-5;
        double worst = 0.0;
        for (std::uint64_t seed = 0; seed < 20; ++seed) {
            Rng rng(7000 + seed);
            Mat img = random_unit_rows(rng, 4, 8);
            Mat txt = random_unit_rows(rng, 4, 8);
            double tau = rng.uniform() * 2.0;
            ClipLossResult r = clip_loss(img, txt, tau);

            auto check_grad = [&](double analytic, double numeric) {
                double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
                worst = std::max(worst, std::abs(analytic - numeric) / denom);
            };
            for (std::size_t i = 0; i < 4; ++i) {
                for (std::size_t c = 0; c < 8; ++c) {
                    Mat plus = img, minus = img;
                    plus(i, c) += eps;
                    minus(i, c) -= eps;
                    double numeric = (clip_loss(plus, txt, tau).loss -
                                      clip_loss(minus, txt, tau).loss) / (2.0 * eps);
                    check_grad(r.d_img_embeddings(i, c), numeric);

                    Mat tplus = txt, tminus = txt;
                    tplus(i, c) += eps;
                    tminus(i, c) -= eps;
                    numeric = (clip_loss(img, tplus, tau).loss -
                               clip_loss(img, tminus, tau).loss) / (2.0 * eps);
                    check_grad(r.d_txt_embeddings(i, c), numeric);
                }
            }
            double numeric_tau = (clip_loss(img, txt, tau + eps).loss -
                                  clip_loss(img, txt, tau - eps).loss) / (2.0 * eps);
            check_grad(r.d_log_temp, numeric_tau);
        }
        CHECK(worst < 1e-4);
    }

    TEST_CASE("shape and norm preconditions") {
        Mat img(1, 4), txt(1, 4);
        CHECK_THROWS_AS(clip_loss(img, txt, 0.0), std::invalid_argument);
        Mat img2(2, 4), txt2(2, 4);
        img2(0, 0) = 5.0;  // not unit norm
        img2(1, 1) = 1.0;
        txt2(0, 0) = 1.0;
        txt2(1, 1) = 1.0;
        CHECK_THROWS_AS(clip_loss(img2, txt2, 0.0), std::invalid_argument);
    }
}

TEST_SUITE("batch_gradients") {
    TEST_CASE("parameter gradients match finite differences through the encoders") {
        for (std::uint64_t seed = 0; seed < 5; ++seed) {
            Rng rng(8800 + seed);
            std::size_t n = 4, d_img = 6, d_txt = 7, d = 5;
            DualEncoderParams params = init_params(d_img, d_txt, d, 50 + seed);
            Mat features(n, d_img), counts(n, d_txt);
            for (auto& v : features.a) v = rng.normal();
            for (auto& v : counts.a) v = static_cast<double>(rng.below(3));
            for (std::size_t i = 0; i < n; ++i) counts(i, rng.below(d_txt)) += 1.0;

            BatchGradients grads = batch_gradients(params, features, counts);
            double eps = 1e-6;
            double worst = 0.0;
            auto fd = [&](DualEncoderParams& p, double* slot, double analytic) {
                double saved = *slot;
                *slot = saved + eps;
                double up = batch_gradients(p, features, counts).loss;
                *slot = saved - eps;
                double down = batch_gradients(p, features, counts).loss;
                *slot = saved;
                double numeric = (up - down) / (2.0 * eps);
                double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
                worst = std::max(worst, std::abs(analytic - numeric) / denom);
            };
            for (std::size_t i = 0; i < params.w_img.a.size(); i += 7) {
                fd(params, &params.w_img.a[i], grads.d_w_img.a[i]);
            }
            for (std::size_t i = 0; i < params.w_txt.a.size(); i += 7) {
                fd(params, &params.w_txt.a[i], grads.d_w_txt.a[i]);
            }
            fd(params, &params.log_temp, grads.d_log_temp);
            CHECK(worst < 1e-4);
        }
    }
}

TEST_SUITE("lr_schedule") {
    TEST_CASE("published schedule values") {
        double lr_max = 5e-5;
        std::size_t warmup = 2000, total = 10000;
        CHECK(std::abs(lr_schedule(2000, warmup, total, lr_max) - 5e-5) < 1e-12);
        CHECK(std::abs(lr_schedule(total, warmup, total, lr_max)) < 1e-12);
        CHECK(std::abs(lr_schedule(6000, warmup, total, lr_max) - lr_max / 2.0) < 1e-12);
    }

    TEST_CASE("warmup is linear and the range is validated") {
        CHECK(lr_schedule(0, 100, 1000, 1.0) == 0.0);
        CHECK(lr_schedule(50, 100, 1000, 1.0) == doctest::Approx(0.5));
        CHECK_THROWS_AS(lr_schedule(1001, 100, 1000, 1.0), std::invalid_argument);
        CHECK_THROWS_AS(lr_schedule(5, 1000, 1000, 1.0), std::invalid_argument);
    }

    TEST_CASE("monotone decreasing after warmup") {
        double prev = lr_schedule(100, 100, 1000, 1.0);
        for (std::size_t s = 101; s <= 1000; s += 10) {
            double lr = lr_schedule(s, 100, 1000, 1.0);
            CHECK(lr <= prev);
            prev = lr;
        }
    }
}

TEST_SUITE("train") {
    namespace {
    std::vector<TrainPair> toy_pairs(std::size_t n_patients, std::size_t per_patient,
                                     std::size_t d_img, std::size_t d_txt,
                                     std::uint64_t seed) {
        // Images and texts share a planted low-rank structure so the pairing
        // is learnable; patients get their own signature direction.
        Rng rng(seed);
        std::vector<TrainPair> pairs;
        for (std::size_t p = 0; p < n_patients; ++p) {
            std::vector<double> sig = rng.normal_vector(d_img);
            for (std::size_t s = 0; s < per_patient; ++s) {
                TrainPair pair;
                pair.pair_id = "p" + std::to_string(p) + "_s" + std::to_string(s);
                pair.patient_id = "p" + std::to_string(p);
                std::size_t token = rng.below(d_txt - 4) + 4;
                double level = rng.uniform() * 2.0 - 1.0;
                pair.text_counts.assign(d_txt, 0.0);
                pair.text_counts[token] = 1.0;
                pair.text_counts[4] = level > 0 ? 1.0 : 0.0;
                for (int f = 0; f < 3; ++f) {
                    std::vector<float> frame(d_img);
                    for (std::size_t c = 0; c < d_img; ++c) {
                        double structured = (c == token % d_img ? 1.0 : 0.0) + 0.3 * level;
                        frame[c] = static_cast<float>(structured + 0.25 * sig[c] +
                                                      rng.normal() * 0.05);
                    }
                    pair.frames.push_back(std::move(frame));
                }
                pairs.push_back(std::move(pair));
            }
        }
        return pairs;
    }
    }  // namespace

    TEST_CASE("same seed reproduces the loss trajectory bit for bit") {
        auto pairs = toy_pairs(20, 2, 10, 12, 5);
        TrainConfig config = desk_profile();
        config.epochs = 8;
        config.batch_size = 8;
        config.warmup_steps = 4;
        config.d = 8;
        config.seed = 42;
        TrainResult a = train(pairs, config);
        TrainResult b = train(pairs, config);
        REQUIRE(a.epoch_losses.size() == b.epoch_losses.size());
        for (std::size_t i = 0; i < a.epoch_losses.size(); ++i) {
            CHECK(a.epoch_losses[i] == b.epoch_losses[i]);
        }
        CHECK(a.best.val_mcmrr == b.best.val_mcmrr);
    }

    TEST_CASE("lr_max = 0 leaves parameters and MCMRR unchanged") {
        auto pairs = toy_pairs(12, 2, 8, 10, 6);
        TrainConfig config = desk_profile();
        config.epochs = 3;
        config.batch_size = 4;
        config.warmup_steps = 2;
        config.d = 6;
        config.lr_max = 0.0;
        config.seed = 9;
        TrainResult result = train(pairs, config);
        CHECK(result.best.val_mcmrr == result.initial_val_mcmrr);
        DualEncoderParams fresh =
            init_params(8, 10, 6, Rng(config.seed).substream(1).seed());
        CHECK(result.best.params.w_img.a == fresh.w_img.a);
        CHECK(result.best.params.w_txt.a == fresh.w_txt.a);
    }

    TEST_CASE("validation split is disjoint by patient") {
        auto pairs = toy_pairs(15, 2, 8, 10, 7);
        TrainConfig config = desk_profile();
        config.epochs = 2;
        config.batch_size = 4;
        config.warmup_steps = 2;
        config.d = 6;
        config.seed = 1;
        TrainResult result = train(pairs, config);
        std::set<std::string> train_patients, val_patients;
        for (std::size_t i : result.train_indices) train_patients.insert(pairs[i].patient_id);
        for (std::size_t i : result.val_indices) val_patients.insert(pairs[i].patient_id);
        for (const auto& p : val_patients) CHECK(train_patients.count(p) == 0);
        CHECK_FALSE(val_patients.empty());
    }

    TEST_CASE("trained MCMRR beats the random baseline by 5x on 200 pairs") {
        TemplateVocab vocab =
            load_vocab_file(std::string(CARDIOLENS_DATA_DIR) + "/vocab.json");
        GeneratorConfig gc;
        gc.n_patients = 100;
        gc.studies_per_patient = 2;
        gc.seed = 11;
        SyntheticCorpus corpus = generate_corpus(gc);
        auto pairs = to_train_pairs(corpus.studies, vocab);
        TrainConfig config = desk_profile();
        config.epochs = 30;
        config.batch_size = 32;
        config.warmup_steps = 20;
        config.seed = 3;
        TrainResult result = train(pairs, config);
        CHECK(result.best.val_mcmrr * 5.0 <= result.initial_val_mcmrr);
    }
}

TEST_SUITE("checkpoint io") {
    TEST_CASE("save and load round trip") {
        DualEncoderParams params = init_params(6, 8, 4, 77);
        Checkpoint checkpoint{params, 12, 3.5};
        auto dir = std::filesystem::temp_directory_path() / "cardiolens_ckpt_test";
        save_checkpoint(checkpoint, dir);
        Checkpoint loaded = load_checkpoint(dir);
        CHECK(loaded.epoch == 12);
        CHECK(loaded.val_mcmrr == 3.5);
        CHECK(loaded.params.w_img.rows == 6);
        CHECK(loaded.params.w_txt.rows == 8);
        CHECK(loaded.params.log_temp == doctest::Approx(params.log_temp));
        // float32 storage: values match to float precision
        for (std::size_t i = 0; i < params.w_img.a.size(); ++i) {
            CHECK(loaded.params.w_img.a[i] ==
                  doctest::Approx(params.w_img.a[i]).epsilon(1e-6));
        }
        std::filesystem::remove_all(dir);
    }
}
