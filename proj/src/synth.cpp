#include "cardiolens/synth.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "cardiolens/errors.hpp"
#include "cardiolens/rng.hpp"
#include "cardiolens/store.hpp"

namespace cardiolens {

using nlohmann::json;

namespace {

constexpr std::size_t kStructuredDims = 10;
constexpr int kStudySpacingDays = 60;
const Date kCorpusEpoch{2018, 1, 1};

std::string severity_word(int level) {
    switch (level) {
        case 1: return "mild";
        case 2: return "moderate";
        case 3: return "severe";
    }
    throw std::invalid_argument("severity_word: level must be 1..3");
}

int chamber_severity(Rng& rng) {
    double u = rng.uniform();
    if (u < 0.55) return 0;
    if (u < 0.75) return 1;
    if (u < 0.90) return 2;
    return 3;
}

LatentState sample_latent(Rng& rng, double device_prevalence) {
    LatentState latent;
    latent.ef = 10 + 5 * static_cast<int>(rng.below(15));    // {10, 15, .., 80}
    latent.pap = 15 + 5 * static_cast<int>(rng.below(16));   // {15, 20, .., 90}
    latent.pacemaker = rng.uniform() < device_prevalence;
    latent.tavr = rng.uniform() < device_prevalence;
    latent.mitraclip = rng.uniform() < device_prevalence;
    latent.impella = rng.uniform() < device_prevalence;
    for (auto& sev : latent.chamber) sev = chamber_severity(rng);
    return latent;
}

std::vector<double> base_features(const LatentState& latent,
                                  const std::vector<double>& signature,
                                  const GeneratorConfig& config) {
    std::vector<double> x(config.feature_dim, 0.0);
    x[0] = (static_cast<double>(latent.ef) - 45.0) / 35.0 * 0.5 * config.latent_scale;
    x[1] = (static_cast<double>(latent.pap) - 52.5) / 37.5 * config.latent_scale;
    const bool flags[4] = {latent.pacemaker, latent.tavr, latent.mitraclip, latent.impella};
    for (std::size_t i = 0; i < 4; ++i) {
        x[2 + i] = (flags[i] ? 0.5 : -0.5) * config.latent_scale;
    }
    for (std::size_t i = 0; i < 4; ++i) {
        x[6 + i] = (static_cast<double>(latent.chamber[i]) / 3.0 * 2.0 - 1.0) * 0.5 *
                   config.latent_scale;
    }
    for (std::size_t i = 0; i < signature.size(); ++i) {
        x[kStructuredDims + i] += signature[i] * config.signature_scale;
    }
    return x;
}

std::vector<double> unit_direction(Rng& rng, std::size_t dim) {
    std::vector<double> v = rng.normal_vector(dim);
    double norm = 0.0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    for (double& x : v) x /= norm;
    return v;
}

}  // namespace

std::string render_report(const LatentState& latent, bool numeric_pap) {
    std::string out;
    auto add = [&](const std::string& sentence) {
        if (!out.empty()) out += ' ';
        out += sentence;
    };

    // Alternate the two report phrasings so both template tokens get trained.
    if ((latent.ef / 5) % 2 == 0) {
        add("the left ventricular ejection fraction is estimated to be " +
            std::to_string(latent.ef) + "%.");
    } else {
        add("lv ejection fraction is " + std::to_string(latent.ef) + "%.");
    }

    if (numeric_pap) {
        add("pulmonary artery systolic pressure is estimated to be " +
            std::to_string(latent.pap) + " mmhg.");
    } else if (latent.pap < 35) {
        add("pulmonary artery systolic pressure is normal.");
    } else {
        int level = latent.pap < 50 ? 1 : latent.pap < 65 ? 2 : 3;
        add("pulmonary artery systolic pressure is " + severity_word(level) +
            "ly elevated.");
    }

    for (std::size_t i = 0; i < 4; ++i) {
        if (latent.chamber[i] > 0) {
            add(severity_word(latent.chamber[i]) + " dilation of the " +
                kChamberNames[i] + ".");
        }
    }

    bool any_device = false;
    if (latent.pacemaker) {
        add("a pacemaker or defibrillator lead is present in the right heart.");
        any_device = true;
    }
    if (latent.tavr) {
        add("a transcatheter aortic valve prosthesis is in place.");
        any_device = true;
    }
    if (latent.mitraclip) {
        add("a mitraclip device is present on the mitral valve.");
        any_device = true;
    }
    if (latent.impella) {
        add("an impella device is present in the left ventricle.");
        any_device = true;
    }
    if (!any_device) add("no intracardiac device is present.");
    return out;
}

SyntheticCorpus generate_corpus(const GeneratorConfig& config) {
    if (config.n_patients < 2) {
        throw std::invalid_argument("generate_corpus: need at least 2 patients");
    }
    if (config.studies_per_patient < 1 || config.frames_per_study < 1) {
        throw std::invalid_argument("generate_corpus: studies and frames must be >= 1");
    }
    if (config.feature_dim < kStructuredDims + 1) {
        throw std::invalid_argument("generate_corpus: feature_dim must be >= 11");
    }
    std::size_t signature_dims = config.feature_dim - kStructuredDims;
    if (config.orthogonal_signatures) {
        std::size_t needed = config.event_fraction > 0.0 ? 2 * config.n_patients
                                                         : config.n_patients;
        if (signature_dims < needed) {
            throw std::invalid_argument(
                "generate_corpus: orthogonal signatures need feature_dim >= 10 + " +
                std::to_string(needed));
        }
    }

    Rng root(config.seed);
    SyntheticCorpus corpus;
    char buf[64];
    for (std::size_t p = 0; p < config.n_patients; ++p) {
        Rng patient_rng = root.substream(p);
        std::snprintf(buf, sizeof(buf), "p%04zu", p);
        std::string patient_id(buf);

        std::vector<double> pre_dir, post_dir;
        if (config.orthogonal_signatures) {
            pre_dir.assign(signature_dims, 0.0);
            pre_dir[p] = 1.0;
        } else {
            pre_dir = unit_direction(patient_rng, signature_dims);
        }

        bool has_event = patient_rng.uniform() < config.event_fraction;
        Date event_date = kCorpusEpoch;
        if (has_event) {
            std::vector<double> alt;
            if (config.orthogonal_signatures) {
                alt.assign(signature_dims, 0.0);
                alt[config.n_patients + p] = 1.0;
            } else {
                alt = unit_direction(patient_rng, signature_dims);
            }
            post_dir.resize(signature_dims);
            double norm = 0.0;
            for (std::size_t i = 0; i < signature_dims; ++i) {
                post_dir[i] = (1.0 - config.event_shift) * pre_dir[i] +
                              config.event_shift * alt[i];
                norm += post_dir[i] * post_dir[i];
            }
            norm = std::sqrt(norm);
            if (norm == 0.0) throw NumericError("generate_corpus: degenerate post signature");
            for (double& x : post_dir) x /= norm;

            int event_day = static_cast<int>(config.studies_per_patient - 1) *
                            kStudySpacingDays / 2;
            event_date = add_days(kCorpusEpoch, static_cast<int>(p) * 13 + event_day);
            corpus.events[patient_id] = event_date;
        }

        for (std::size_t s = 0; s < config.studies_per_patient; ++s) {
            Rng study_rng = root.substream(1000003ULL * (p + 1) + s);
            SyntheticStudy study;
            study.patient_id = patient_id;
            std::snprintf(buf, sizeof(buf), "%s_s%02zu", patient_id.c_str(), s);
            study.study_id = buf;
            study.report_id = "r_" + study.study_id;
            study.acquired = add_days(kCorpusEpoch, static_cast<int>(p) * 13 +
                                                        static_cast<int>(s) * kStudySpacingDays);
            study.latent = sample_latent(study_rng, config.device_prevalence);
            study.report_text = render_report(study.latent, config.numeric_pap);
            study.post_event = has_event && !(study.acquired < event_date);

            const std::vector<double>& dir = study.post_event ? post_dir : pre_dir;
            std::vector<double> base = base_features(study.latent, dir, config);
            study.frames.reserve(config.frames_per_study);
            for (std::size_t f = 0; f < config.frames_per_study; ++f) {
                std::vector<float> frame(config.feature_dim);
                for (std::size_t i = 0; i < config.feature_dim; ++i) {
                    frame[i] = static_cast<float>(
                        base[i] + study_rng.normal() * config.noise_sigma);
                }
                study.frames.push_back(std::move(frame));
            }
            corpus.studies.push_back(std::move(study));
        }
    }
    return corpus;
}

namespace {

json latent_to_json(const LatentState& latent) {
    json j{{"ef", latent.ef},
           {"pap", latent.pap},
           {"pacemaker", latent.pacemaker},
           {"tavr", latent.tavr},
           {"mitraclip", latent.mitraclip},
           {"impella", latent.impella}};
    const char* words[4] = {"none", "mild", "moderate", "severe"};
    for (std::size_t i = 0; i < 4; ++i) j[kChamberKeys[i]] = words[latent.chamber[i]];
    return j;
}

LatentState latent_from_json(const json& j) {
    LatentState latent;
    latent.ef = j.at("ef").get<int>();
    latent.pap = j.at("pap").get<int>();
    latent.pacemaker = j.at("pacemaker").get<bool>();
    latent.tavr = j.at("tavr").get<bool>();
    latent.mitraclip = j.at("mitraclip").get<bool>();
    latent.impella = j.at("impella").get<bool>();
    for (std::size_t i = 0; i < 4; ++i) {
        std::string word = j.at(kChamberKeys[i]).get<std::string>();
        if (word == "none") latent.chamber[i] = 0;
        else if (word == "mild") latent.chamber[i] = 1;
        else if (word == "moderate") latent.chamber[i] = 2;
        else if (word == "severe") latent.chamber[i] = 3;
        else throw FormatError("unknown chamber severity '" + word + "'");
    }
    return latent;
}

}  // namespace

void export_corpus(const SyntheticCorpus& corpus, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);

    std::ofstream reports(dir / "reports.jsonl");
    if (!reports) throw FormatError("cannot write reports.jsonl in '" + dir.string() + "'");
    std::ofstream manifest(dir / "features_manifest.jsonl");
    if (!manifest) throw FormatError("cannot write features_manifest.jsonl");

    EmbBlob blob;
    char buf[32];
    for (const auto& study : corpus.studies) {
        if (blob.dimension == 0) {
            blob.dimension = static_cast<std::uint32_t>(study.frames.at(0).size());
        }
        json r{{"report_id", study.report_id},
               {"patient_id", study.patient_id},
               {"study_id", study.study_id},
               {"acquired", to_string(study.acquired)},
               {"text", study.report_text},
               {"latent", latent_to_json(study.latent)}};
        reports << r.dump() << '\n';

        for (std::size_t f = 0; f < study.frames.size(); ++f) {
            std::snprintf(buf, sizeof(buf), "_f%02zu", f);
            json m{{"id", "img_" + study.study_id + buf},
                   {"kind", "image"},
                   {"patient_id", study.patient_id},
                   {"study_id", study.study_id},
                   {"report_id", study.report_id},
                   {"acquired", to_string(study.acquired)},
                   {"frame_index", f}};
            manifest << m.dump() << '\n';
            blob.vectors.push_back(study.frames[f]);
        }
    }
    write_emb_blob(dir / "features.emb", blob);

    if (!corpus.events.empty()) {
        json events = json::object();
        for (const auto& [patient, date] : corpus.events) {
            events[patient] = to_string(date);
        }
        std::ofstream out(dir / "events.json");
        out << events.dump(2) << '\n';
    }
}

SyntheticCorpus load_corpus(const std::filesystem::path& dir) {
    SyntheticCorpus corpus;

    std::ifstream reports(dir / "reports.jsonl");
    if (!reports) throw FormatError("cannot open reports.jsonl in '" + dir.string() + "'");
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(reports, line)) {
        ++lineno;
        if (line.empty()) continue;
        json j = json::parse(line, nullptr, false);
        if (j.is_discarded()) {
            throw FormatError("reports.jsonl line " + std::to_string(lineno) +
                              ": invalid JSON");
        }
        SyntheticStudy study;
        try {
            study.report_id = j.at("report_id").get<std::string>();
            study.patient_id = j.at("patient_id").get<std::string>();
            study.study_id = j.at("study_id").get<std::string>();
            study.acquired = parse_date(j.at("acquired").get<std::string>());
            study.report_text = j.at("text").get<std::string>();
            study.latent = latent_from_json(j.at("latent"));
        } catch (const json::exception& e) {
            throw FormatError("reports.jsonl line " + std::to_string(lineno) + ": " +
                              e.what());
        }
        corpus.studies.push_back(std::move(study));
    }
    if (corpus.studies.empty()) throw FormatError("reports.jsonl is empty");

    EmbBlob blob = read_emb_blob(dir / "features.emb");
    std::ifstream manifest(dir / "features_manifest.jsonl");
    if (!manifest) throw FormatError("cannot open features_manifest.jsonl");
    std::map<std::string, std::size_t> study_index;
    for (std::size_t i = 0; i < corpus.studies.size(); ++i) {
        study_index[corpus.studies[i].study_id] = i;
    }
    lineno = 0;
    std::size_t vec_idx = 0;
    while (std::getline(manifest, line)) {
        ++lineno;
        if (line.empty()) continue;
        json j = json::parse(line, nullptr, false);
        if (j.is_discarded()) {
            throw FormatError("features_manifest.jsonl line " + std::to_string(lineno) +
                              ": invalid JSON");
        }
        if (vec_idx >= blob.vectors.size()) {
            throw FormatError("features manifest has more records than the blob");
        }
        std::string study_id = j.at("study_id").get<std::string>();
        auto it = study_index.find(study_id);
        if (it == study_index.end()) {
            throw FormatError("features manifest references unknown study '" + study_id + "'");
        }
        corpus.studies[it->second].frames.push_back(blob.vectors[vec_idx++]);
    }
    if (vec_idx != blob.vectors.size()) {
        throw FormatError("features manifest has fewer records than the blob");
    }
    for (const auto& study : corpus.studies) {
        if (study.frames.empty()) {
            throw FormatError("study '" + study.study_id + "' has no frames");
        }
    }

    auto events_path = dir / "events.json";
    if (std::filesystem::exists(events_path)) {
        std::ifstream in(events_path);
        json events = json::parse(in, nullptr, false);
        if (events.is_discarded()) throw FormatError("events.json is not valid JSON");
        for (const auto& [patient, date] : events.items()) {
            corpus.events[patient] = parse_date(date.get<std::string>());
        }
        for (auto& study : corpus.studies) {
            auto it = corpus.events.find(study.patient_id);
            if (it != corpus.events.end()) {
                study.post_event = !(study.acquired < it->second);
            }
        }
    }
    return corpus;
}

}  // namespace cardiolens
