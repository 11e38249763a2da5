#include "cardiolens/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "cardiolens/errors.hpp"

namespace cardiolens {

std::vector<TrainPair> to_train_pairs(std::span<const SyntheticStudy> studies,
                                      const TemplateVocab& vocab,
                                      std::size_t context_length) {
    std::vector<TrainPair> pairs;
    pairs.reserve(studies.size());
    for (const auto& study : studies) {
        TrainPair pair;
        pair.pair_id = study.study_id;
        pair.patient_id = study.patient_id;
        pair.frames = study.frames;
        TokenSequence seq = tokenize_template(study.report_text, vocab, context_length);
        pair.text_counts = token_counts(seq, vocab.special, vocab.size());
        pairs.push_back(std::move(pair));
    }
    return pairs;
}

Store feature_store(std::span<const SyntheticStudy> studies) {
    if (studies.empty()) throw std::invalid_argument("feature_store: no studies");
    Store store(studies.front().frames.at(0).size());
    char buf[32];
    for (const auto& study : studies) {
        for (std::size_t f = 0; f < study.frames.size(); ++f) {
            std::snprintf(buf, sizeof(buf), "_f%02zu", f);
            EmbeddingRecord rec;
            rec.id = "img_" + study.study_id + buf;
            rec.kind = RecordKind::image;
            rec.patient_id = study.patient_id;
            rec.study_id = study.study_id;
            rec.report_id = study.report_id;
            rec.acquired = study.acquired;
            rec.frame_index = static_cast<int>(f);
            rec.embedding = normalize(study.frames[f]);
            store.add(std::move(rec));
        }
    }
    return store;
}

Store encode_corpus_store(std::span<const SyntheticStudy> studies,
                          const TemplateVocab& vocab,
                          const DualEncoderParams& params,
                          std::size_t context_length) {
    if (studies.empty()) throw std::invalid_argument("encode_corpus_store: no studies");
    Store store(params.w_img.cols);
    char buf[32];
    for (const auto& study : studies) {
        for (std::size_t f = 0; f < study.frames.size(); ++f) {
            std::snprintf(buf, sizeof(buf), "_f%02zu", f);
            EmbeddingRecord rec;
            rec.id = "img_" + study.study_id + buf;
            rec.kind = RecordKind::image;
            rec.patient_id = study.patient_id;
            rec.study_id = study.study_id;
            rec.report_id = study.report_id;
            rec.acquired = study.acquired;
            rec.frame_index = static_cast<int>(f);
            rec.embedding = encode_image_toy(study.frames[f], params);
            store.add(std::move(rec));
        }
        EmbeddingRecord rec;
        rec.id = "txt_" + study.study_id;
        rec.kind = RecordKind::text;
        rec.patient_id = study.patient_id;
        rec.study_id = study.study_id;
        rec.report_id = study.report_id;
        rec.acquired = study.acquired;
        TokenSequence seq = tokenize_template(study.report_text, vocab, context_length);
        rec.embedding = encode_text_toy(seq, vocab.special, params);
        store.add(std::move(rec));
    }
    return store;
}

std::vector<EmbeddedPrompt> embed_prompt_grid(const PromptGrid& grid,
                                              const TemplateVocab& vocab,
                                              const DualEncoderParams& params,
                                              std::size_t context_length) {
    std::vector<EmbeddedPrompt> out;
    out.reserve(grid.prompts.size());
    for (const auto& prompt : grid.prompts) {
        TokenSequence seq = tokenize_template(prompt.text, vocab, context_length);
        out.push_back({prompt.phrasing, prompt.value,
                       encode_text_toy(seq, vocab.special, params)});
    }
    return out;
}

std::vector<Embedding> embed_class_prompts(std::span<const std::string> phrasings,
                                           const TemplateVocab& vocab,
                                           const DualEncoderParams& params,
                                           std::size_t context_length) {
    std::vector<Embedding> out;
    out.reserve(phrasings.size());
    for (const auto& phrasing : phrasings) {
        TokenSequence seq = tokenize_template(phrasing, vocab, context_length);
        out.push_back(encode_text_toy(seq, vocab.special, params));
    }
    return out;
}

double regression_truth(const SyntheticStudy& study, const std::string& task) {
    if (task == "lvef") return static_cast<double>(study.latent.ef);
    if (task == "pap") return static_cast<double>(study.latent.pap);
    throw FormatError("no regression ground truth for task '" + task + "'");
}

int binary_truth(const SyntheticStudy& study, const std::string& task) {
    if (task == "pacemaker") return study.latent.pacemaker ? 1 : 0;
    if (task == "tavr") return study.latent.tavr ? 1 : 0;
    if (task == "mitraclip") return study.latent.mitraclip ? 1 : 0;
    if (task == "impella") return study.latent.impella ? 1 : 0;
    for (std::size_t i = 0; i < 4; ++i) {
        if (task == std::string("severe_") + kChamberKeys[i] + "_dilation") {
            return study.latent.chamber[i] == 3 ? 1 : 0;
        }
    }
    throw FormatError("no binary ground truth for task '" + task + "'");
}

RegressionEval zeroshot_regression_eval(std::span<const SyntheticStudy> studies,
                                        const TemplateVocab& vocab,
                                        const DualEncoderParams& params,
                                        const TaskSpec& task,
                                        const ZeroshotOptions& options) {
    if (task.type != TaskSpec::Type::regression) {
        throw std::invalid_argument("zeroshot_regression_eval: task is not a regression");
    }
    if (studies.empty()) throw std::invalid_argument("zeroshot_regression_eval: no studies");

    PromptGrid grid = build_prompt_grid(task.phrasings, task.lo, task.hi);
    std::vector<EmbeddedPrompt> prompts =
        embed_prompt_grid(grid, vocab, params, options.context_length);

    RegressionEval eval;
    std::vector<double> abs_errors;
    std::vector<std::string> patient_groups;
    for (const auto& study : studies) {
        std::vector<Embedding> frames;
        std::size_t frames_used = std::min(options.frame_limit, study.frames.size());
        frames.reserve(frames_used);
        for (std::size_t f = 0; f < frames_used; ++f) {
            frames.push_back(encode_image_toy(study.frames[f], params));
        }
        RegressionRow row;
        row.study_id = study.study_id;
        row.truth = regression_truth(study, task.task);
        double acc = 0.0;
        row.frame_min = 0.0;
        row.frame_max = 0.0;
        for (std::size_t f = 0; f < frames.size(); ++f) {
            double pred = zeroshot_regress_frame(frames[f], prompts, options.top_fraction,
                                                 options.pooling);
            acc += pred;
            if (f == 0) {
                row.frame_min = row.frame_max = pred;
            } else {
                row.frame_min = std::min(row.frame_min, pred);
                row.frame_max = std::max(row.frame_max, pred);
            }
        }
        row.prediction = acc / static_cast<double>(frames.size());
        abs_errors.push_back(std::abs(row.prediction - row.truth));
        patient_groups.push_back(study.patient_id);
        eval.rows.push_back(std::move(row));
    }

    BootstrapOptions opts;
    opts.n_boot = options.n_boot;
    opts.seed = options.seed;
    if (options.by_patient) opts.groups = &patient_groups;
    if (abs_errors.size() >= 2) {
        eval.mae = bootstrap_ci(
            [&abs_errors](const std::vector<std::size_t>& idx) {
                double acc = 0.0;
                for (std::size_t i : idx) acc += abs_errors[i];
                return acc / static_cast<double>(idx.size());
            },
            abs_errors.size(), opts);
    } else {
        eval.mae.value = abs_errors.front();
        eval.mae.ci_low = eval.mae.ci_high = eval.mae.value;
    }
    return eval;
}

BinaryEval zeroshot_binary_eval(std::span<const SyntheticStudy> studies,
                                const TemplateVocab& vocab,
                                const DualEncoderParams& params,
                                const TaskSpec& task,
                                const ZeroshotOptions& options) {
    if (task.type != TaskSpec::Type::binary) {
        throw std::invalid_argument("zeroshot_binary_eval: task is not binary");
    }
    if (studies.empty()) throw std::invalid_argument("zeroshot_binary_eval: no studies");

    std::vector<Embedding> prompt_embs =
        embed_class_prompts(task.phrasings, vocab, params, options.context_length);

    BinaryEval eval;
    std::vector<double> scores;
    std::vector<int> labels;
    std::vector<std::string> patient_groups;
    for (const auto& study : studies) {
        std::vector<Embedding> frames;
        std::size_t frames_used = std::min(options.frame_limit, study.frames.size());
        for (std::size_t f = 0; f < frames_used; ++f) {
            frames.push_back(encode_image_toy(study.frames[f], params));
        }
        BinaryRow row;
        row.study_id = study.study_id;
        row.label = binary_truth(study, task.task);
        row.score = zeroshot_classify(frames, prompt_embs, options.frame_limit);
        scores.push_back(row.score);
        labels.push_back(row.label);
        patient_groups.push_back(study.patient_id);
        eval.rows.push_back(std::move(row));
    }

    BootstrapOptions opts;
    opts.n_boot = options.n_boot;
    opts.seed = options.seed;
    if (options.by_patient) opts.groups = &patient_groups;
    eval.auc = bootstrap_ci(
        [&](const std::vector<std::size_t>& idx) {
            std::vector<double> s(idx.size());
            std::vector<int> l(idx.size());
            for (std::size_t k = 0; k < idx.size(); ++k) {
                s[k] = scores[idx[k]];
                l[k] = labels[idx[k]];
            }
            return roc_auc(s, l);
        },
        scores.size(), opts);
    return eval;
}

void write_scatter_csv(std::ostream& out, std::span<const RegressionRow> rows) {
    out << "study_id,truth,prediction,frame_min,frame_max\n";
    char buf[160];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof(buf), "%s,%.9g,%.9g,%.9g,%.9g", r.study_id.c_str(),
                      r.truth, r.prediction, r.frame_min, r.frame_max);
        out << buf << '\n';
    }
}

void write_scores_csv(std::ostream& out, std::span<const BinaryRow> rows) {
    out << "study_id,label,score\n";
    char buf[128];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof(buf), "%s,%d,%.9g", r.study_id.c_str(), r.label, r.score);
        out << buf << '\n';
    }
}

}  // namespace cardiolens
