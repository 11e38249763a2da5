#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cardiolens/date.hpp"

namespace cardiolens {

// Latent cardiac state behind one synthetic study. Chamber severities are
// 0=none, 1=mild, 2=moderate, 3=severe for lv, rv, la, ra.
struct LatentState {
    int ef = 60;   // percent, multiples of 5 in [10, 80]
    int pap = 25;  // mmHg, multiples of 5 in [15, 90]
    bool pacemaker = false;
    bool tavr = false;
    bool mitraclip = false;
    bool impella = false;
    std::array<int, 4> chamber{0, 0, 0, 0};
};

inline constexpr std::array<const char*, 4> kChamberNames{
    "left ventricle", "right ventricle", "left atrium", "right atrium"};
inline constexpr std::array<const char*, 4> kChamberKeys{"lv", "rv", "la", "ra"};

struct SyntheticStudy {
    std::string patient_id;
    std::string study_id;
    std::string report_id;
    Date acquired;
    LatentState latent;
    std::string report_text;
    std::vector<std::vector<float>> frames;  // frames_per_study x feature_dim
    bool post_event = false;
};

// Image feature layout (feature_dim >= 11):
//   0        ef, scaled to [-2, 2] over [10, 80]
//   1        pap, scaled to [-1, 1] over [15, 90]
//   2..5     device flags as +-0.5 (pacemaker, tavr, mitraclip, impella)
//   6..9     chamber severities mapped to [-0.5, 0.5]
//   10..     patient signature direction times signature_scale
// plus N(0, noise_sigma) per coordinate per frame.
struct GeneratorConfig {
    std::size_t n_patients = 2;
    std::size_t studies_per_patient = 2;
    std::size_t frames_per_study = 16;
    std::size_t feature_dim = 48;
    std::uint64_t seed = 0;
    double noise_sigma = 0.05;
    double latent_scale = 1.0;
    double signature_scale = 1.0;
    // Assign each patient its own basis coordinate instead of a random
    // direction; diff-patient signature similarity becomes exactly 0.
    bool orthogonal_signatures = false;
    double event_fraction = 0.0;  // share of patients with a procedure event
    double event_shift = 0.8;     // 0 = no change, 1 = fully new signature
    double device_prevalence = 0.25;
    bool numeric_pap = false;  // render PAP as a number instead of a severity
};

struct SyntheticCorpus {
    std::vector<SyntheticStudy> studies;
    std::map<std::string, Date> events;  // patient_id -> procedure date
};

// Deterministic given the seed; per-study draws use substreams so study
// generation order never matters.
SyntheticCorpus generate_corpus(const GeneratorConfig& config);

// The template grammar's rendering of a latent state; every sentence matches
// a starter-vocabulary template.
std::string render_report(const LatentState& latent, bool numeric_pap = false);

// Corpus directory layout:
//   reports.jsonl          {"report_id","patient_id","study_id","acquired",
//                           "text","latent":{...}}
//   features.emb           raw frame features (EMB1 blob)
//   features_manifest.jsonl image records, one per frame
//   events.json            patient_id -> event date (only when events exist)
void export_corpus(const SyntheticCorpus& corpus, const std::filesystem::path& dir);
SyntheticCorpus load_corpus(const std::filesystem::path& dir);

}  // namespace cardiolens
