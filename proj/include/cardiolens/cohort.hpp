#pragma once

#include <cstdint>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "cardiolens/date.hpp"
#include "cardiolens/metrics.hpp"
#include "cardiolens/store.hpp"

namespace cardiolens {

enum class PairRelation { same_study, same_patient_diff_study, diff_patient };

std::string to_string(PairRelation relation);

// Unordered pair of image embeddings with the relation derived purely from
// record metadata.
struct PairSample {
    std::string id_a;
    std::string id_b;
    PairRelation relation = PairRelation::diff_patient;
    float similarity = 0.0f;
};

struct RelationSummary {
    PairRelation relation = PairRelation::diff_patient;
    std::size_t n = 0;
    MetricEstimate mean_similarity;  // 95% bootstrap CI of the class mean
};

struct PairSampleReport {
    std::vector<PairSample> samples;
    std::vector<RelationSummary> summaries;  // same_study, same_patient, diff_patient
};

// Seeded uniform sampling of image-record pairs per relation class, without
// replacement where the class is large enough. Throws SingleClassError when
// a relation class has no candidate pairs.
PairSampleReport sample_pairs(const Store& store,
                              std::size_t n_per_relation,
                              std::uint64_t seed);

struct SamePatientAucOptions {
    bool include_same_study = true;  // count same-study pairs as positives
    int n_boot = 1000;
    std::uint64_t seed = 0;
};

// ROC AUC of similarity as a same-patient score (positives: same patient;
// negatives: different patients), with a bootstrap CI over the pair samples.
MetricEstimate same_patient_auc(const std::vector<PairSample>& samples,
                                const SamePatientAucOptions& options = {});

struct TimelinePoint {
    std::string record_id;
    int day_offset = 0;       // days from the event date
    float similarity = 0.0f;  // cosine similarity to the anchor embedding
    bool is_anchor = false;
};

// Similarity timeline around a procedure. The anchor is the earliest
// in-window acquisition (ties broken by ascending record id) and its own
// point has similarity exactly 1.
struct ProcedureTimeline {
    std::string patient_id;
    Date event_date;
    std::string anchor_id;
    std::vector<TimelinePoint> points;  // sorted by (day_offset, record_id)
};

ProcedureTimeline procedure_timeline(const Store& store,
                                     const std::string& patient_id,
                                     const Date& event_date,
                                     int window_days = 200);

struct PrePostAucOptions {
    int n_boot = 1000;
    std::uint64_t seed = 0;
    bool by_patient = false;  // bootstrap whole patients instead of points
};

// Pooled ROC AUC over all timeline points except the anchors; label
// post = (offset >= 0), score = 1 - similarity.
MetricEstimate pre_post_auc(std::span<const ProcedureTimeline> timelines,
                            const PrePostAucOptions& options = {});

// CSV: patient_id,event_date,day_offset,similarity,is_anchor
void write_timeline_csv(std::ostream& out, std::span<const ProcedureTimeline> timelines);

// CSV: relation,id_a,id_b,similarity (box-plot input)
void write_pairs_csv(std::ostream& out, std::span<const PairSample> samples);

}  // namespace cardiolens
