// cardiolens: generate corpora, train the toy dual encoder, import
// embeddings, and run the tokenizer, zero-shot, retrieval and cohort
// evaluations.
//
// Exit codes: 0 ok, 1 usage, 2 input format, 3 numeric failure.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "cardiolens/bpe_tokenizer.hpp"
#include "cardiolens/cohort.hpp"
#include "cardiolens/corpus_stats.hpp"
#include "cardiolens/dual_encoder.hpp"
#include "cardiolens/errors.hpp"
#include "cardiolens/pipeline.hpp"
#include "cardiolens/retrieval.hpp"
#include "cardiolens/store.hpp"
#include "cardiolens/synth.hpp"
#include "cardiolens/template_tokenizer.hpp"
#include "cardiolens/version.hpp"
#include "cardiolens/zeroshot.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace cardiolens;

namespace {

// Expands "--config file.json" (a flat JSON object of long option names)
// into synthetic arguments placed right after the subcommand, so values
// given explicitly on the command line override the file.
std::vector<std::string> expand_config_args(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    std::size_t sub = 0;
    while (sub < args.size() && !args[sub].empty() && args[sub][0] == '-') ++sub;
    if (sub >= args.size()) return args;

    std::string config_file;
    for (std::size_t i = sub + 1; i < args.size(); ++i) {
        if (args[i] == "--config") {
            if (i + 1 >= args.size()) throw FormatError("--config needs a file argument");
            config_file = args[i + 1];
            args.erase(args.begin() + static_cast<std::ptrdiff_t>(i),
                       args.begin() + static_cast<std::ptrdiff_t>(i) + 2);
            break;
        }
        if (args[i].rfind("--config=", 0) == 0) {
            config_file = args[i].substr(9);
            args.erase(args.begin() + static_cast<std::ptrdiff_t>(i));
            break;
        }
    }
    if (config_file.empty()) return args;

    std::ifstream in(config_file);
    if (!in) throw FormatError("cannot open config file '" + config_file + "'");
    json j = json::parse(in, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
        throw FormatError("config file '" + config_file + "' is not a JSON object");
    }
    std::vector<std::string> expanded;
    for (const auto& [key, value] : j.items()) {
        if (value.is_boolean()) {
            if (value.get<bool>()) expanded.push_back("--" + key);
        } else if (value.is_array()) {
            for (const auto& v : value) {
                expanded.push_back("--" + key + "=" +
                                   (v.is_string() ? v.get<std::string>() : v.dump()));
            }
        } else {
            expanded.push_back("--" + key + "=" +
                               (value.is_string() ? value.get<std::string>() : value.dump()));
        }
    }
    args.insert(args.begin() + static_cast<std::ptrdiff_t>(sub) + 1, expanded.begin(),
                expanded.end());
    return args;
}

// Removes every tracked output unless the run commits.
class OutputGuard {
public:
    ~OutputGuard() {
        if (committed_) return;
        for (const auto& path : paths_) {
            std::error_code ec;
            fs::remove(path, ec);
        }
    }
    fs::path track(const fs::path& path) {
        paths_.push_back(path);
        return path;
    }
    void commit() { committed_ = true; }

private:
    std::vector<fs::path> paths_;
    bool committed_ = false;
};

std::uint64_t fnv1a_hash(const std::string& s) {
    std::uint64_t h = 14695981039346656037ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

std::string timestamp_utc() {
    auto now = std::chrono::system_clock::now();
    std::time_t t = std::chrono::system_clock::to_time_t(now);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
    return buf;
}

// Every run records its config hash, seed and tool version. Timestamps live
// only here so the data outputs stay byte-reproducible.
void write_run_manifest(const fs::path& dir, const std::string& subcommand,
                        const json& config, std::uint64_t seed) {
    json manifest{{"tool_version", kVersion},
                  {"subcommand", subcommand},
                  {"seed", seed},
                  {"config_hash", fnv1a_hash(config.dump())},
                  {"created", timestamp_utc()}};
    std::ofstream out(dir / "run_manifest.json");
    if (!out) throw FormatError("cannot write run manifest in '" + dir.string() + "'");
    out << manifest.dump(2) << '\n';
}

void write_json_file(const fs::path& path, const json& j) {
    std::ofstream out(path);
    if (!out) throw FormatError("cannot open '" + path.string() + "' for writing");
    out << j.dump(2) << '\n';
}

fs::path ensure_dir(const std::string& dir) {
    fs::path path(dir);
    fs::create_directories(path);
    return path;
}

std::vector<std::string> read_report_texts(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open input '" + path.string() + "'");
    std::vector<std::string> texts;
    std::string line;
    bool jsonl = path.extension() == ".jsonl";
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        if (jsonl) {
            json j = json::parse(line, nullptr, false);
            if (j.is_discarded() || !j.contains("text")) {
                throw FormatError(path.string() + " line " + std::to_string(lineno) +
                                  ": expected a JSON object with a \"text\" field");
            }
            texts.push_back(j.at("text").get<std::string>());
        } else {
            texts.push_back(line);
        }
    }
    return texts;
}

json metric_report(const std::string& task, const std::string& metric,
                   const MetricEstimate& est, std::size_t n) {
    return json{{"task", task},           {"metric", metric},
                {"value", est.value},     {"ci_low", est.ci_low},
                {"ci_high", est.ci_high}, {"n_boot", est.n_boot},
                {"seed", est.seed},       {"n", n}};
}

// ------------------------------------------------------------------ tokenize

struct TokenizeArgs {
    std::string input, vocab, out;
    std::string tokenizer = "template";
    std::string bpe_train;
    std::size_t bpe_merges = 1000;
    std::size_t context_length = kDefaultContextLength;
    bool stats = false;
    std::uint64_t seed = 0;
};

int cmd_tokenize(const TokenizeArgs& args) {
    std::vector<std::string> texts = read_report_texts(args.input);
    TemplateVocab vocab = load_vocab_file(args.vocab);

    std::optional<BpeVocab> bpe;
    if (args.tokenizer == "bpe" || args.stats) {
        if (args.bpe_train.empty()) {
            throw FormatError("--bpe-train is required for the bpe tokenizer and --stats");
        }
        bpe = train_bpe(read_report_texts(args.bpe_train), args.bpe_merges);
    }

    fs::path out_path(args.out);
    fs::path out_dir = out_path.parent_path().empty() ? fs::path(".") : out_path.parent_path();
    fs::create_directories(out_dir);
    OutputGuard guard;

    if (args.stats) {
        if (texts.empty()) throw FormatError("empty corpus: '" + args.input + "'");
        CorpusStats template_stats = corpus_stats(texts, template_counter(vocab));
        CorpusStats bpe_stats = corpus_stats(texts, bpe_counter(*bpe));
        json report{
            {"template",
             {{"mean_tokens", template_stats.mean_tokens},
              {"sd_tokens", template_stats.sd_tokens},
              {"n", template_stats.n},
              {"single_sample", template_stats.single_sample}}},
            {"bpe",
             {{"mean_tokens", bpe_stats.mean_tokens},
              {"sd_tokens", bpe_stats.sd_tokens},
              {"n", bpe_stats.n},
              {"merges", bpe->merges.size()}}},
            {"compression_ratio_vs_reference", compression_ratio(template_stats, bpe_stats)}};
        write_json_file(guard.track(out_path), report);
    } else {
        std::ofstream out(guard.track(out_path));
        if (!out) throw FormatError("cannot open '" + args.out + "' for writing");
        TokenizerDiag diag;
        for (std::size_t i = 0; i < texts.size(); ++i) {
            TokenSequence seq =
                args.tokenizer == "bpe"
                    ? tokenize_bpe(texts[i], *bpe, args.context_length)
                    : tokenize_template(texts[i], vocab, args.context_length, &diag);
            json j{{"index", i}, {"ids", seq.ids}, {"truncated", seq.truncated}};
            out << j.dump() << '\n';
        }
        if (args.tokenizer == "template" && diag.unk_sentences > 0) {
            std::cerr << "note: " << diag.unk_sentences
                      << " sentence(s) matched no template and became unk\n";
        }
    }

    json config{{"input", args.input},
                {"vocab", args.vocab},
                {"tokenizer", args.tokenizer},
                {"bpe_train", args.bpe_train},
                {"bpe_merges", args.bpe_merges},
                {"context_length", args.context_length},
                {"stats", args.stats}};
    write_run_manifest(out_dir, "tokenize", config, args.seed);
    guard.commit();
    return 0;
}

// ----------------------------------------------------------------------- gen

struct GenArgs {
    GeneratorConfig config;
    std::string out;
};

int cmd_gen(const GenArgs& args) {
    SyntheticCorpus corpus = generate_corpus(args.config);
    fs::path out_dir = ensure_dir(args.out);
    OutputGuard guard;
    guard.track(out_dir / "reports.jsonl");
    guard.track(out_dir / "features.emb");
    guard.track(out_dir / "features_manifest.jsonl");
    guard.track(out_dir / "events.json");
    export_corpus(corpus, out_dir);

    json config{{"patients", args.config.n_patients},
                {"studies_per_patient", args.config.studies_per_patient},
                {"frames_per_study", args.config.frames_per_study},
                {"feature_dim", args.config.feature_dim},
                {"noise_sigma", args.config.noise_sigma},
                {"latent_scale", args.config.latent_scale},
                {"signature_scale", args.config.signature_scale},
                {"orthogonal_signatures", args.config.orthogonal_signatures},
                {"event_fraction", args.config.event_fraction},
                {"event_shift", args.config.event_shift},
                {"device_prevalence", args.config.device_prevalence},
                {"numeric_pap", args.config.numeric_pap}};
    write_run_manifest(out_dir, "gen", config, args.config.seed);
    guard.commit();
    std::cout << "generated " << corpus.studies.size() << " studies ("
              << corpus.events.size() << " with events) in " << args.out << "\n";
    return 0;
}

// --------------------------------------------------------------------- train

struct TrainArgs {
    std::string corpus, vocab, out;
    std::string profile = "desk";
    TrainConfig config;  // populated after profile selection
    std::optional<double> lr_max;
    std::optional<std::size_t> epochs, batch_size, warmup_steps, d, val_every;
    std::optional<double> val_fraction;
    std::uint64_t seed = 0;
};

int cmd_train(const TrainArgs& args) {
    SyntheticCorpus corpus = load_corpus(args.corpus);
    TemplateVocab vocab = load_vocab_file(args.vocab);

    TrainConfig config = args.profile == "paper" ? TrainConfig{} : desk_profile();
    if (args.lr_max) config.lr_max = *args.lr_max;
    if (args.epochs) config.epochs = *args.epochs;
    if (args.batch_size) config.batch_size = *args.batch_size;
    if (args.warmup_steps) config.warmup_steps = *args.warmup_steps;
    if (args.d) config.d = *args.d;
    if (args.val_every) config.val_every = *args.val_every;
    if (args.val_fraction) config.val_fraction = *args.val_fraction;
    config.seed = args.seed;

    if (config.lr_max == 0.0) {
        std::cerr << "warning: --lr-max is 0; parameters will not change\n";
    }

    std::vector<TrainPair> pairs = to_train_pairs(corpus.studies, vocab);
    TrainResult result = train(pairs, config);
    if (result.aborted_non_finite) {
        throw NumericError("training aborted on a non-finite loss; last finite "
                           "checkpoint from epoch " +
                           std::to_string(result.best.epoch) + " kept");
    }

    fs::path out_dir = ensure_dir(args.out);
    OutputGuard guard;
    guard.track(out_dir / "checkpoint.json");
    guard.track(out_dir / "w_img.emb");
    guard.track(out_dir / "w_txt.emb");
    save_checkpoint(result.best, out_dir);

    json split{{"train", json::array()}, {"val", json::array()}};
    for (std::size_t i : result.train_indices) split["train"].push_back(pairs[i].pair_id);
    for (std::size_t i : result.val_indices) split["val"].push_back(pairs[i].pair_id);
    write_json_file(guard.track(out_dir / "split.json"), split);

    json log{{"initial_val_mcmrr", result.initial_val_mcmrr},
             {"epoch_losses", result.epoch_losses},
             {"val_history", json::array()}};
    for (const auto& [epoch, mcmrr_value] : result.val_history) {
        log["val_history"].push_back({{"epoch", epoch}, {"val_mcmrr", mcmrr_value}});
    }
    write_json_file(guard.track(out_dir / "train_log.json"), log);

    json config_json{{"corpus", args.corpus},
                     {"vocab", args.vocab},
                     {"profile", args.profile},
                     {"lr_max", config.lr_max},
                     {"epochs", config.epochs},
                     {"batch_size", config.batch_size},
                     {"warmup_steps", config.warmup_steps},
                     {"d", config.d},
                     {"val_every", config.val_every},
                     {"val_fraction", config.val_fraction}};
    write_run_manifest(out_dir, "train", config_json, args.seed);
    guard.commit();
    std::cout << "best checkpoint: epoch " << result.best.epoch << ", val MCMRR "
              << result.best.val_mcmrr << " (initial " << result.initial_val_mcmrr
              << ")\n";
    return 0;
}

// -------------------------------------------------------------------- import

struct ImportArgs {
    std::string manifest, blob, out;
    std::uint64_t seed = 0;
};

int cmd_import(const ImportArgs& args) {
    ImportResult result = import_embeddings(args.manifest, args.blob);
    fs::path out_dir = ensure_dir(args.out);
    OutputGuard guard;
    export_embeddings(result.store, guard.track(out_dir / "store_manifest.jsonl"),
                      guard.track(out_dir / "store.emb"));
    json report{{"records", result.report.records},
                {"renormalized", result.report.renormalized},
                {"dimension", result.store.dimension()}};
    write_json_file(guard.track(out_dir / "load_report.json"), report);
    write_run_manifest(out_dir, "import",
                       json{{"manifest", args.manifest}, {"blob", args.blob}}, args.seed);
    guard.commit();
    if (result.report.renormalized > 0) {
        std::cerr << "warning: " << result.report.renormalized
                  << " vector(s) were not unit-norm and were normalized\n";
    }
    std::cout << "imported " << result.report.records << " records\n";
    return 0;
}

// ------------------------------------------------------------------ zeroshot

struct ZeroshotArgs {
    std::string corpus, checkpoint, vocab, task, out;
    std::string split = "all";  // all | train | val (needs checkpoint split.json)
    ZeroshotOptions options;
    std::uint64_t seed = 0;
};

std::vector<SyntheticStudy> select_split(const SyntheticCorpus& corpus,
                                         const fs::path& checkpoint_dir,
                                         const std::string& split) {
    if (split == "all") return corpus.studies;
    std::ifstream in(checkpoint_dir / "split.json");
    if (!in) {
        throw FormatError("--split " + split + " needs split.json in the checkpoint dir");
    }
    json j = json::parse(in, nullptr, false);
    if (j.is_discarded()) throw FormatError("split.json is not valid JSON");
    std::set<std::string> wanted;
    for (const auto& id : j.at(split)) wanted.insert(id.get<std::string>());
    std::vector<SyntheticStudy> out;
    for (const auto& study : corpus.studies) {
        if (wanted.contains(study.study_id)) out.push_back(study);
    }
    if (out.empty()) throw FormatError("split '" + split + "' selected no studies");
    return out;
}

int cmd_zeroshot(const ZeroshotArgs& args) {
    SyntheticCorpus corpus = load_corpus(args.corpus);
    TemplateVocab vocab = load_vocab_file(args.vocab);
    Checkpoint checkpoint = load_checkpoint(args.checkpoint);
    TaskSpec task = load_task_file(args.task);
    std::vector<SyntheticStudy> studies =
        select_split(corpus, args.checkpoint, args.split);

    ZeroshotOptions options = args.options;
    options.seed = args.seed;

    fs::path out_dir = ensure_dir(args.out);
    OutputGuard guard;
    json config{{"corpus", args.corpus},   {"checkpoint", args.checkpoint},
                {"vocab", args.vocab},     {"task", args.task},
                {"split", args.split},     {"top_fraction", options.top_fraction},
                {"frame_limit", options.frame_limit},
                {"pooling", options.pooling == GridPooling::pooled ? "pooled" : "averaged"},
                {"n_boot", options.n_boot},{"by_patient", options.by_patient}};

    if (task.type == TaskSpec::Type::regression) {
        RegressionEval eval =
            zeroshot_regression_eval(studies, vocab, checkpoint.params, task, options);
        write_json_file(guard.track(out_dir / "report.json"),
                        metric_report(task.task, "mae", eval.mae, eval.rows.size()));
        std::ofstream csv(guard.track(out_dir / "scatter.csv"));
        write_scatter_csv(csv, eval.rows);
        std::cout << task.task << " MAE " << eval.mae.value << " [" << eval.mae.ci_low
                  << ", " << eval.mae.ci_high << "] over " << eval.rows.size()
                  << " studies\n";
    } else {
        BinaryEval eval =
            zeroshot_binary_eval(studies, vocab, checkpoint.params, task, options);
        write_json_file(guard.track(out_dir / "report.json"),
                        metric_report(task.task, "auc", eval.auc, eval.rows.size()));
        std::ofstream csv(guard.track(out_dir / "scores.csv"));
        write_scores_csv(csv, eval.rows);
        std::cout << task.task << " AUC " << eval.auc.value << " [" << eval.auc.ci_low
                  << ", " << eval.auc.ci_high << "] over " << eval.rows.size()
                  << " studies\n";
    }
    write_run_manifest(out_dir, "zeroshot", config, args.seed);
    guard.commit();
    return 0;
}

// ----------------------------------------------------------------- retrieval

struct RetrievalArgs {
    std::string corpus, checkpoint, vocab;  // encoded-store route
    std::string manifest, blob;             // pre-embedded route
    std::string image_frames = "first";     // first | mean10
    std::vector<int> ks{10};
    std::string out;
    std::uint64_t seed = 0;
};

Store retrieval_store(const RetrievalArgs& args) {
    if (!args.manifest.empty()) {
        return import_embeddings(args.manifest, args.blob).store;
    }
    SyntheticCorpus corpus = load_corpus(args.corpus);
    TemplateVocab vocab = load_vocab_file(args.vocab);
    Checkpoint checkpoint = load_checkpoint(args.checkpoint);
    return encode_corpus_store(corpus.studies, vocab, checkpoint.params);
}

int cmd_retrieval(const RetrievalArgs& args) {
    Store store = retrieval_store(args);
    ImageChoice choice = args.image_frames == "mean10" ? ImageChoice::mean_first_10
                                                       : ImageChoice::first_frame;
    DedupResult dedup = dedup_pairs(store, choice);
    RetrievalResult i2t = retrieval_metrics(dedup.pairs, Direction::image_to_text, args.ks);
    RetrievalResult t2i = retrieval_metrics(dedup.pairs, Direction::text_to_image, args.ks);
    double mcmrr_value = mcmrr(i2t, t2i);

    fs::path out_dir = ensure_dir(args.out);
    OutputGuard guard;
    json report{{"pairs", dedup.pairs.size()},
                {"excluded_reports", dedup.excluded_reports},
                {"image_frames", args.image_frames},
                {"image_to_text", eval_report(i2t, mcmrr_value)},
                {"text_to_image", eval_report(t2i, mcmrr_value)}};
    write_json_file(guard.track(out_dir / "retrieval.json"), report);

    json config{{"corpus", args.corpus},     {"checkpoint", args.checkpoint},
                {"manifest", args.manifest}, {"blob", args.blob},
                {"image_frames", args.image_frames}};
    write_run_manifest(out_dir, "retrieval", config, args.seed);
    guard.commit();
    std::cout << "n=" << dedup.pairs.size() << "  mean rank i2t " << i2t.mean_rank
              << ", t2i " << t2i.mean_rank << ", MCMRR " << mcmrr_value << "\n";
    return 0;
}

// -------------------------------------------------------------------- cohort

struct CohortArgs {
    std::string corpus, checkpoint, vocab;  // encoded route (checkpoint optional)
    std::string manifest, blob;             // pre-embedded route
    std::string events;                     // defaults to corpus/events.json
    std::size_t pairs_per_relation = 500;
    int window_days = 200;
    bool cross_study_only = false;
    bool by_patient = false;
    int n_boot = 1000;
    std::string out;
    std::uint64_t seed = 0;
};

int cmd_cohort(const CohortArgs& args) {
    std::optional<SyntheticCorpus> corpus;
    std::optional<Store> store;
    if (!args.manifest.empty()) {
        store = import_embeddings(args.manifest, args.blob).store;
    } else {
        corpus = load_corpus(args.corpus);
        if (!args.checkpoint.empty()) {
            TemplateVocab vocab = load_vocab_file(args.vocab);
            Checkpoint checkpoint = load_checkpoint(args.checkpoint);
            store = encode_corpus_store(corpus->studies, vocab, checkpoint.params);
        } else {
            store = feature_store(corpus->studies);  // raw features as embeddings
        }
    }

    PairSampleReport pair_report = sample_pairs(*store, args.pairs_per_relation, args.seed);
    SamePatientAucOptions auc_options;
    auc_options.include_same_study = !args.cross_study_only;
    auc_options.n_boot = args.n_boot;
    auc_options.seed = args.seed;
    MetricEstimate auc = same_patient_auc(pair_report.samples, auc_options);

    fs::path out_dir = ensure_dir(args.out);
    OutputGuard guard;
    {
        std::ofstream csv(guard.track(out_dir / "pairs.csv"));
        write_pairs_csv(csv, pair_report.samples);
    }
    json summary = json::array();
    for (const auto& s : pair_report.summaries) {
        summary.push_back({{"relation", to_string(s.relation)},
                           {"n", s.n},
                           {"mean", s.mean_similarity.value},
                           {"ci_low", s.mean_similarity.ci_low},
                           {"ci_high", s.mean_similarity.ci_high}});
    }
    json report{{"relations", summary},
                {"same_patient_auc",
                 metric_report("same_patient", "auc", auc, pair_report.samples.size())},
                {"include_same_study", !args.cross_study_only}};

    // Timelines need event dates; take them from --events or the corpus.
    std::map<std::string, Date> events;
    if (!args.events.empty()) {
        std::ifstream in(args.events);
        if (!in) throw FormatError("cannot open events file '" + args.events + "'");
        json j = json::parse(in, nullptr, false);
        if (j.is_discarded()) throw FormatError("events file is not valid JSON");
        for (const auto& [patient, date] : j.items()) {
            events[patient] = parse_date(date.get<std::string>());
        }
    } else if (corpus.has_value()) {
        events = corpus->events;
    }

    if (!events.empty()) {
        std::vector<ProcedureTimeline> timelines;
        for (const auto& [patient, date] : events) {
            timelines.push_back(procedure_timeline(*store, patient, date, args.window_days));
        }
        std::ofstream csv(guard.track(out_dir / "timelines.csv"));
        write_timeline_csv(csv, timelines);
        PrePostAucOptions pp_options;
        pp_options.n_boot = args.n_boot;
        pp_options.seed = args.seed;
        pp_options.by_patient = args.by_patient;
        MetricEstimate pp = pre_post_auc(timelines, pp_options);
        report["pre_post_auc"] = metric_report("pre_post", "auc", pp, timelines.size());
    }

    write_json_file(guard.track(out_dir / "cohort.json"), report);
    json config{{"corpus", args.corpus},
                {"checkpoint", args.checkpoint},
                {"manifest", args.manifest},
                {"pairs_per_relation", args.pairs_per_relation},
                {"window_days", args.window_days},
                {"cross_study_only", args.cross_study_only},
                {"n_boot", args.n_boot}};
    write_run_manifest(out_dir, "cohort", config, args.seed);
    guard.commit();
    std::cout << "same-patient AUC " << auc.value << " over "
              << pair_report.samples.size() << " pairs\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"cardiolens: echocardiography report and embedding toolkit"};
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1);
    app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

    // Shared by every subcommand; expanded before parsing so explicit flags win.
    std::string config_doc;
    auto add_config_doc = [&config_doc](CLI::App* sub) {
        sub->add_option("--config", config_doc, "JSON config file (flags override it)");
    };

    TokenizeArgs tok;
    CLI::App* tokenize = app.add_subcommand("tokenize", "Tokenize reports (template or BPE)");
    add_config_doc(tokenize);
    tokenize->add_option("--input", tok.input, "Report file (.jsonl with text field, or one report per line)")->required();
    tokenize->add_option("--vocab", tok.vocab, "Template vocabulary JSON")->required();
    tokenize->add_option("--tokenizer", tok.tokenizer, "template or bpe")
        ->check(CLI::IsMember({"template", "bpe"}));
    tokenize->add_option("--bpe-train", tok.bpe_train, "Training corpus for the BPE baseline");
    tokenize->add_option("--bpe-merges", tok.bpe_merges, "Number of BPE merges");
    tokenize->add_option("--context-length", tok.context_length, "Sequence budget incl. bos/eos");
    tokenize->add_flag("--stats", tok.stats, "Emit corpus statistics for both tokenizers");
    tokenize->add_option("--seed", tok.seed, "Run seed (recorded in the manifest)");
    tokenize->add_option("--out", tok.out, "Output file (tokens JSONL or stats JSON)")->required();

    GenArgs gen;
    CLI::App* gen_cmd = app.add_subcommand("gen", "Generate a synthetic paired corpus");
    add_config_doc(gen_cmd);
    gen_cmd->add_option("--patients", gen.config.n_patients, "Number of patients")->required();
    gen_cmd->add_option("--studies-per-patient", gen.config.studies_per_patient, "Studies per patient");
    gen_cmd->add_option("--frames", gen.config.frames_per_study, "Frames per study");
    gen_cmd->add_option("--dim", gen.config.feature_dim, "Image feature dimension");
    gen_cmd->add_option("--noise-sigma", gen.config.noise_sigma, "Per-frame feature noise");
    gen_cmd->add_option("--latent-scale", gen.config.latent_scale, "Latent coordinate scale");
    gen_cmd->add_option("--signature-scale", gen.config.signature_scale, "Patient signature scale");
    gen_cmd->add_flag("--orthogonal-signatures", gen.config.orthogonal_signatures,
                      "One basis coordinate per patient");
    gen_cmd->add_option("--event-fraction", gen.config.event_fraction, "Share of patients with a procedure");
    gen_cmd->add_option("--event-shift", gen.config.event_shift, "Post-event signature shift in [0,1]");
    gen_cmd->add_option("--device-prevalence", gen.config.device_prevalence, "Per-device prevalence");
    gen_cmd->add_flag("--numeric-pap", gen.config.numeric_pap, "Render PAP as a number");
    gen_cmd->add_option("--seed", gen.config.seed, "Generator seed");
    gen_cmd->add_option("--out", gen.out, "Output corpus directory")->required();

    TrainArgs tr;
    CLI::App* train_cmd = app.add_subcommand("train", "Train the toy dual encoder");
    add_config_doc(train_cmd);
    train_cmd->add_option("--corpus", tr.corpus, "Corpus directory from gen")->required();
    train_cmd->add_option("--vocab", tr.vocab, "Template vocabulary JSON")->required();
    train_cmd->add_option("--profile", tr.profile, "desk (default) or paper")
        ->check(CLI::IsMember({"desk", "paper"}));
    train_cmd->add_option("--lr-max", [&tr](const std::vector<std::string>& v) {
        tr.lr_max = std::stod(v.at(0)); return true; }, "Peak learning rate");
    train_cmd->add_option("--epochs", [&tr](const std::vector<std::string>& v) {
        tr.epochs = std::stoull(v.at(0)); return true; }, "Training epochs");
    train_cmd->add_option("--batch-size", [&tr](const std::vector<std::string>& v) {
        tr.batch_size = std::stoull(v.at(0)); return true; }, "Batch size");
    train_cmd->add_option("--warmup-steps", [&tr](const std::vector<std::string>& v) {
        tr.warmup_steps = std::stoull(v.at(0)); return true; }, "Warmup steps");
    train_cmd->add_option("--d", [&tr](const std::vector<std::string>& v) {
        tr.d = std::stoull(v.at(0)); return true; }, "Embedding dimension");
    train_cmd->add_option("--val-every", [&tr](const std::vector<std::string>& v) {
        tr.val_every = std::stoull(v.at(0)); return true; }, "Epochs between validations");
    train_cmd->add_option("--val-fraction", [&tr](const std::vector<std::string>& v) {
        tr.val_fraction = std::stod(v.at(0)); return true; }, "Held-out patient fraction");
    train_cmd->add_option("--seed", tr.seed, "Training seed");
    train_cmd->add_option("--out", tr.out, "Checkpoint directory")->required();

    ImportArgs imp;
    CLI::App* import_cmd = app.add_subcommand("import", "Validate and import an embedding store");
    add_config_doc(import_cmd);
    import_cmd->add_option("--manifest", imp.manifest, "Manifest JSONL")->required();
    import_cmd->add_option("--blob", imp.blob, "EMB1 vector blob")->required();
    import_cmd->add_option("--seed", imp.seed, "Run seed (recorded in the manifest)");
    import_cmd->add_option("--out", imp.out, "Output store directory")->required();

    ZeroshotArgs zs;
    CLI::App* zeroshot_cmd = app.add_subcommand("zeroshot", "Zero-shot classification/regression");
    add_config_doc(zeroshot_cmd);
    zeroshot_cmd->add_option("--corpus", zs.corpus, "Corpus directory")->required();
    zeroshot_cmd->add_option("--checkpoint", zs.checkpoint, "Checkpoint directory")->required();
    zeroshot_cmd->add_option("--vocab", zs.vocab, "Template vocabulary JSON")->required();
    zeroshot_cmd->add_option("--task", zs.task, "Task definition JSON")->required();
    zeroshot_cmd->add_option("--split", zs.split, "all, train or val")
        ->check(CLI::IsMember({"all", "train", "val"}));
    zeroshot_cmd->add_option("--top-fraction", zs.options.top_fraction, "Top prompt fraction");
    zeroshot_cmd->add_option("--frame-limit", zs.options.frame_limit, "Frames per video");
    std::string pooling = "pooled";
    zeroshot_cmd->add_option("--pooling", pooling, "pooled or averaged")
        ->check(CLI::IsMember({"pooled", "averaged"}));
    zeroshot_cmd->add_option("--n-boot", zs.options.n_boot, "Bootstrap resamples");
    zeroshot_cmd->add_flag("--by-patient", zs.options.by_patient, "Bootstrap whole patients");
    zeroshot_cmd->add_option("--seed", zs.seed, "Bootstrap seed");
    zeroshot_cmd->add_option("--out", zs.out, "Output directory")->required();

    RetrievalArgs ret;
    CLI::App* retrieval_cmd = app.add_subcommand("retrieval", "Cross-modal retrieval metrics");
    add_config_doc(retrieval_cmd);
    retrieval_cmd->add_option("--corpus", ret.corpus, "Corpus directory (with --checkpoint)");
    retrieval_cmd->add_option("--checkpoint", ret.checkpoint, "Checkpoint directory");
    retrieval_cmd->add_option("--vocab", ret.vocab, "Template vocabulary JSON");
    retrieval_cmd->add_option("--manifest", ret.manifest, "Pre-embedded store manifest");
    retrieval_cmd->add_option("--blob", ret.blob, "Pre-embedded store blob");
    retrieval_cmd->add_option("--image-frames", ret.image_frames, "first or mean10")
        ->check(CLI::IsMember({"first", "mean10"}));
    retrieval_cmd->add_option("--ks", ret.ks, "Recall@K cutoffs");
    retrieval_cmd->add_option("--seed", ret.seed, "Run seed (recorded in the manifest)");
    retrieval_cmd->add_option("--out", ret.out, "Output directory")->required();

    CohortArgs co;
    CLI::App* cohort_cmd = app.add_subcommand("cohort", "Similarity cohort analytics");
    add_config_doc(cohort_cmd);
    cohort_cmd->add_option("--corpus", co.corpus, "Corpus directory");
    cohort_cmd->add_option("--checkpoint", co.checkpoint, "Optional checkpoint (encode corpus)");
    cohort_cmd->add_option("--vocab", co.vocab, "Template vocabulary JSON (with --checkpoint)");
    cohort_cmd->add_option("--manifest", co.manifest, "Pre-embedded store manifest");
    cohort_cmd->add_option("--blob", co.blob, "Pre-embedded store blob");
    cohort_cmd->add_option("--events", co.events, "Events JSON (patient -> date)");
    cohort_cmd->add_option("--pairs", co.pairs_per_relation, "Pairs per relation class");
    cohort_cmd->add_option("--window-days", co.window_days, "Timeline half-window in days");
    cohort_cmd->add_flag("--cross-study-only", co.cross_study_only,
                         "Exclude same-study pairs from the AUC positives");
    cohort_cmd->add_flag("--by-patient", co.by_patient, "Bootstrap whole patients");
    cohort_cmd->add_option("--n-boot", co.n_boot, "Bootstrap resamples");
    cohort_cmd->add_option("--seed", co.seed, "Sampling and bootstrap seed");
    cohort_cmd->add_option("--out", co.out, "Output directory")->required();

    try {
        std::vector<std::string> args = expand_config_args(argc, argv);
        std::reverse(args.begin(), args.end());
        app.parse(std::move(args));
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 1;
    } catch (const FormatError& e) {
        std::cerr << "input error: " << e.what() << "\n";
        return 2;
    }

    try {
        if (tokenize->parsed()) return cmd_tokenize(tok);
        if (gen_cmd->parsed()) return cmd_gen(gen);
        if (train_cmd->parsed()) {
            zs.options.pooling = GridPooling::pooled;
            return cmd_train(tr);
        }
        if (import_cmd->parsed()) return cmd_import(imp);
        if (zeroshot_cmd->parsed()) {
            zs.options.pooling =
                pooling == "averaged" ? GridPooling::averaged : GridPooling::pooled;
            return cmd_zeroshot(zs);
        }
        if (retrieval_cmd->parsed()) {
            bool corpus_route = !ret.corpus.empty();
            bool store_route = !ret.manifest.empty();
            if (corpus_route == store_route) {
                std::cerr << "usage error: retrieval needs either --corpus/--checkpoint/"
                             "--vocab or --manifest/--blob\n";
                return 1;
            }
            if (corpus_route && (ret.checkpoint.empty() || ret.vocab.empty())) {
                std::cerr << "usage error: --corpus requires --checkpoint and --vocab\n";
                return 1;
            }
            if (store_route && ret.blob.empty()) {
                std::cerr << "usage error: --manifest requires --blob\n";
                return 1;
            }
            return cmd_retrieval(ret);
        }
        if (cohort_cmd->parsed()) {
            bool corpus_route = !co.corpus.empty();
            bool store_route = !co.manifest.empty();
            if (corpus_route == store_route) {
                std::cerr << "usage error: cohort needs either --corpus or --manifest/--blob\n";
                return 1;
            }
            if (!co.checkpoint.empty() && co.vocab.empty()) {
                std::cerr << "usage error: --checkpoint requires --vocab\n";
                return 1;
            }
            if (store_route && co.blob.empty()) {
                std::cerr << "usage error: --manifest requires --blob\n";
                return 1;
            }
            return cmd_cohort(co);
        }
    } catch (const FormatError& e) {
        std::cerr << "input error: " << e.what() << "\n";
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "input error: " << e.what() << "\n";
        return 2;
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
    return 0;
}
