#include "cardiolens/cohort.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <map>
#include <stdexcept>
#include <unordered_set>

#include "cardiolens/errors.hpp"
#include "cardiolens/rng.hpp"

namespace cardiolens {

std::string to_string(PairRelation relation) {
    switch (relation) {
        case PairRelation::same_study: return "same_study";
        case PairRelation::same_patient_diff_study: return "same_patient_diff_study";
        case PairRelation::diff_patient: return "diff_patient";
    }
    return "?";
}

namespace {

PairRelation relation_of(const EmbeddingRecord& a, const EmbeddingRecord& b) {
    if (a.patient_id != b.patient_id) return PairRelation::diff_patient;
    if (a.study_id != b.study_id) return PairRelation::same_patient_diff_study;
    return PairRelation::same_study;
}

std::size_t choose2(std::size_t n) { return n * (n - 1) / 2; }

// Pair enumeration limit; larger classes fall back to rejection sampling.
constexpr std::size_t kEnumerationLimit = 500000;

}  // namespace

PairSampleReport sample_pairs(const Store& store,
                              std::size_t n_per_relation,
                              std::uint64_t seed) {
    if (n_per_relation < 1) {
        throw std::invalid_argument("sample_pairs: n_per_relation must be >= 1");
    }

    // Image records sorted by id so sampling is independent of insert order.
    std::vector<std::size_t> images = store.images();
    std::sort(images.begin(), images.end(), [&](std::size_t a, std::size_t b) {
        return store.record(a).id < store.record(b).id;
    });
    std::size_t m = images.size();

    std::map<std::string, std::vector<std::size_t>> by_patient;  // positions in `images`
    std::map<std::string, std::vector<std::size_t>> by_study;
    for (std::size_t pos = 0; pos < m; ++pos) {
        const auto& rec = store.record(images[pos]);
        by_patient[rec.patient_id].push_back(pos);
        by_study[rec.study_id].push_back(pos);
    }

    std::size_t total = choose2(m);
    std::size_t same_study_size = 0;
    for (const auto& [_, v] : by_study) same_study_size += choose2(v.size());
    std::size_t same_patient_total = 0;
    for (const auto& [_, v] : by_patient) same_patient_total += choose2(v.size());
    std::size_t cross_study_size = same_patient_total - same_study_size;
    std::size_t diff_patient_size = total - same_patient_total;

    std::array<std::size_t, 3> class_sizes{same_study_size, cross_study_size,
                                           diff_patient_size};
    std::array<PairRelation, 3> relations{PairRelation::same_study,
                                          PairRelation::same_patient_diff_study,
                                          PairRelation::diff_patient};

    Rng root(seed);
    PairSampleReport report;
    for (std::size_t cls = 0; cls < 3; ++cls) {
        if (class_sizes[cls] == 0) {
            throw SingleClassError("sample_pairs: relation class '" +
                                   to_string(relations[cls]) + "' has no candidate pairs");
        }
        std::size_t want = std::min(n_per_relation, class_sizes[cls]);
        Rng rng = root.substream(cls);

        std::vector<std::pair<std::size_t, std::size_t>> chosen;
        if (class_sizes[cls] <= kEnumerationLimit) {
            std::vector<std::pair<std::size_t, std::size_t>> all;
            all.reserve(class_sizes[cls]);
            if (relations[cls] == PairRelation::diff_patient) {
                for (std::size_t i = 0; i < m; ++i) {
                    for (std::size_t j = i + 1; j < m; ++j) {
                        if (store.record(images[i]).patient_id !=
                            store.record(images[j]).patient_id) {
                            all.emplace_back(i, j);
                        }
                    }
                }
            } else {
                for (const auto& [_, members] : by_patient) {
                    for (std::size_t a = 0; a < members.size(); ++a) {
                        for (std::size_t b = a + 1; b < members.size(); ++b) {
                            bool same_study =
                                store.record(images[members[a]]).study_id ==
                                store.record(images[members[b]]).study_id;
                            if (same_study == (relations[cls] == PairRelation::same_study)) {
                                all.emplace_back(members[a], members[b]);
                            }
                        }
                    }
                }
            }
            rng.shuffle(all);
            chosen.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(want));
        } else {
            std::unordered_set<std::uint64_t> seen;
            std::size_t attempts = 0;
            std::size_t max_attempts = 200 * want + 10000;
            while (chosen.size() < want) {
                if (++attempts > max_attempts) {
                    throw NumericError("sample_pairs: rejection sampling stalled for class '" +
                                       to_string(relations[cls]) + "'");
                }
                std::size_t i = static_cast<std::size_t>(rng.below(m));
                std::size_t j = static_cast<std::size_t>(rng.below(m));
                if (i == j) continue;
                if (i > j) std::swap(i, j);
                if (relation_of(store.record(images[i]), store.record(images[j])) !=
                    relations[cls]) {
                    continue;
                }
                std::uint64_t key = (static_cast<std::uint64_t>(i) << 32) | j;
                if (!seen.insert(key).second) continue;
                chosen.emplace_back(i, j);
            }
        }

        std::vector<double> sims;
        sims.reserve(chosen.size());
        for (auto [i, j] : chosen) {
            const auto& a = store.record(images[i]);
            const auto& b = store.record(images[j]);
            PairSample sample;
            sample.id_a = a.id;
            sample.id_b = b.id;
            sample.relation = relations[cls];
            sample.similarity = cosine_similarity(a.embedding, b.embedding);
            sims.push_back(static_cast<double>(sample.similarity));
            report.samples.push_back(std::move(sample));
        }

        RelationSummary summary;
        summary.relation = relations[cls];
        summary.n = sims.size();
        if (sims.size() >= 2) {
            BootstrapOptions opts;
            opts.seed = root.substream(100 + cls).seed();
            summary.mean_similarity = bootstrap_ci(
                [&sims](const std::vector<std::size_t>& idx) {
                    double acc = 0.0;
                    for (std::size_t i : idx) acc += sims[i];
                    return acc / static_cast<double>(idx.size());
                },
                sims.size(), opts);
        } else {
            summary.mean_similarity.value = sims.empty() ? 0.0 : sims.front();
            summary.mean_similarity.ci_low = summary.mean_similarity.value;
            summary.mean_similarity.ci_high = summary.mean_similarity.value;
        }
        report.summaries.push_back(summary);
    }
    return report;
}

MetricEstimate same_patient_auc(const std::vector<PairSample>& samples,
                                const SamePatientAucOptions& options) {
    std::vector<double> scores;
    std::vector<int> labels;
    for (const auto& s : samples) {
        if (!options.include_same_study && s.relation == PairRelation::same_study) continue;
        scores.push_back(static_cast<double>(s.similarity));
        labels.push_back(s.relation == PairRelation::diff_patient ? 0 : 1);
    }
    if (scores.size() < 2) {
        throw std::invalid_argument("same_patient_auc: need at least 2 pair samples");
    }

    BootstrapOptions opts;
    opts.n_boot = options.n_boot;
    opts.seed = options.seed;
    auto metric = [&](const std::vector<std::size_t>& idx) {
        std::vector<double> s(idx.size());
        std::vector<int> l(idx.size());
        for (std::size_t k = 0; k < idx.size(); ++k) {
            s[k] = scores[idx[k]];
            l[k] = labels[idx[k]];
        }
        return roc_auc(s, l);
    };
    return bootstrap_ci(metric, scores.size(), opts);
}

ProcedureTimeline procedure_timeline(const Store& store,
                                     const std::string& patient_id,
                                     const Date& event_date,
                                     int window_days) {
    auto it = store.by_patient().find(patient_id);
    if (it == store.by_patient().end()) {
        throw std::invalid_argument("procedure_timeline: unknown patient '" + patient_id + "'");
    }

    std::vector<std::size_t> in_window;
    for (std::size_t idx : it->second) {
        const auto& rec = store.record(idx);
        if (rec.kind != RecordKind::image) continue;
        auto offset = day_offset(rec.acquired, event_date);
        if (std::abs(offset) <= window_days) in_window.push_back(idx);
    }
    if (in_window.empty()) {
        throw std::invalid_argument("procedure_timeline: no acquisitions within " +
                                    std::to_string(window_days) + " days for patient '" +
                                    patient_id + "'");
    }

    // Anchor: earliest acquisition, ties broken by ascending record id.
    std::size_t anchor = in_window.front();
    for (std::size_t idx : in_window) {
        const auto& a = store.record(anchor);
        const auto& c = store.record(idx);
        auto da = days_from_civil(a.acquired);
        auto dc = days_from_civil(c.acquired);
        if (dc < da || (dc == da && c.id < a.id)) anchor = idx;
    }

    ProcedureTimeline timeline;
    timeline.patient_id = patient_id;
    timeline.event_date = event_date;
    timeline.anchor_id = store.record(anchor).id;
    const Embedding& anchor_emb = store.record(anchor).embedding;
    for (std::size_t idx : in_window) {
        const auto& rec = store.record(idx);
        TimelinePoint point;
        point.record_id = rec.id;
        point.day_offset = static_cast<int>(day_offset(rec.acquired, event_date));
        point.is_anchor = idx == anchor;
        point.similarity =
            point.is_anchor ? 1.0f : cosine_similarity(rec.embedding, anchor_emb);
        timeline.points.push_back(std::move(point));
    }
    std::sort(timeline.points.begin(), timeline.points.end(),
              [](const TimelinePoint& a, const TimelinePoint& b) {
                  if (a.day_offset != b.day_offset) return a.day_offset < b.day_offset;
                  return a.record_id < b.record_id;
              });
    return timeline;
}

MetricEstimate pre_post_auc(std::span<const ProcedureTimeline> timelines,
                            const PrePostAucOptions& options) {
    struct Pooled {
        std::string patient_id;
        int day_offset;
        std::string record_id;
        double score;
        int label;
    };
    std::vector<Pooled> pooled;
    for (const auto& t : timelines) {
        for (const auto& p : t.points) {
            if (p.is_anchor) continue;
            pooled.push_back({t.patient_id, p.day_offset, p.record_id,
                              1.0 - static_cast<double>(p.similarity),
                              p.day_offset >= 0 ? 1 : 0});
        }
    }
    std::sort(pooled.begin(), pooled.end(), [](const Pooled& a, const Pooled& b) {
        if (a.patient_id != b.patient_id) return a.patient_id < b.patient_id;
        if (a.day_offset != b.day_offset) return a.day_offset < b.day_offset;
        return a.record_id < b.record_id;
    });
    if (pooled.size() < 2) {
        throw std::invalid_argument("pre_post_auc: need at least 2 non-anchor points");
    }

    std::vector<double> scores(pooled.size());
    std::vector<int> labels(pooled.size());
    std::vector<std::string> groups(pooled.size());
    for (std::size_t i = 0; i < pooled.size(); ++i) {
        scores[i] = pooled[i].score;
        labels[i] = pooled[i].label;
        groups[i] = pooled[i].patient_id;
    }

    BootstrapOptions opts;
    opts.n_boot = options.n_boot;
    opts.seed = options.seed;
    if (options.by_patient) opts.groups = &groups;
    auto metric = [&](const std::vector<std::size_t>& idx) {
        std::vector<double> s(idx.size());
        std::vector<int> l(idx.size());
        for (std::size_t k = 0; k < idx.size(); ++k) {
            s[k] = scores[idx[k]];
            l[k] = labels[idx[k]];
        }
        return roc_auc(s, l);
    };
    return bootstrap_ci(metric, pooled.size(), opts);
}

void write_timeline_csv(std::ostream& out, std::span<const ProcedureTimeline> timelines) {
    out << "patient_id,event_date,day_offset,similarity,is_anchor\n";
    char buf[64];
    for (const auto& t : timelines) {
        for (const auto& p : t.points) {
            std::snprintf(buf, sizeof(buf), "%.9g", static_cast<double>(p.similarity));
            out << t.patient_id << ',' << to_string(t.event_date) << ',' << p.day_offset
                << ',' << buf << ',' << (p.is_anchor ? 1 : 0) << '\n';
        }
    }
}

void write_pairs_csv(std::ostream& out, std::span<const PairSample> samples) {
    out << "relation,id_a,id_b,similarity\n";
    char buf[64];
    for (const auto& s : samples) {
        std::snprintf(buf, sizeof(buf), "%.9g", static_cast<double>(s.similarity));
        out << to_string(s.relation) << ',' << s.id_a << ',' << s.id_b << ',' << buf << '\n';
    }
}

}  // namespace cardiolens
