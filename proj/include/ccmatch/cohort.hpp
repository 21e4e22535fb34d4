#ifndef CCMATCH_COHORT_HPP
#define CCMATCH_COHORT_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "ccmatch/data_model.hpp"
#include "ccmatch/rng.hpp"

namespace ccmatch {

struct CohortSpec {
    int n_cases = 200;
    std::string hospital;
    int year = 0;
    std::uint64_t seed = 1;
};

struct SynthConfig {
    int n_patients = 50000;
    int n_hospitals = 2;
    int year_min = 2006;
    int year_max = 2008;
    int vocab_size = 30;
    int n_synonym_clusters = 6;  // groups of interchangeable codes
    int codes_min = 2;
    int codes_max = 5;
    // missing / readmitted-other / readmitted-same / not-readmitted
    std::array<double, 4> readmission_marginals{0.0001, 0.0407, 0.2303, 0.7289};
    double male_fraction = 0.582;
    int median_age_target = 71;
    double outcome_coupling = 0.0;  // 0 = outcomes ignore codes, 1 = leading cluster decides
    std::uint64_t seed = 1;
};

/// Admissions sharing one (hospital, year), one admission per patient.
struct HYPool {
    std::string hospital;
    int year = 0;
    std::vector<Admission> admissions;
};

class PoolTooSmallError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Uniform draw over the distinct (hospital, year) combinations present.
inline std::pair<std::string, int> sample_hospital_year(std::span<const Admission> admissions,
                                                        Rng& rng) {
    if (admissions.empty()) throw std::runtime_error("cannot sample (hospital, year): empty dataset");
    std::map<std::pair<std::string, int>, bool> combos;
    for (const Admission& a : admissions) combos[{a.hospital, a.admission_year}] = true;
    std::vector<const std::pair<std::string, int>*> keys;
    keys.reserve(combos.size());
    for (const auto& [key, _] : combos) keys.push_back(&key);
    return *keys[rng.uniform_index(keys.size())];
}

/// All admissions with the given hospital and year, collapsed to one per
/// patient: the earliest discharge wins, ties by smallest admission_id.
inline HYPool build_hy_pool(std::span<const Admission> admissions, const std::string& hospital,
                            int year) {
    std::unordered_map<std::string, std::size_t> best;  // patient -> index into admissions
    std::vector<std::size_t> order;
    for (std::size_t i = 0; i < admissions.size(); ++i) {
        const Admission& a = admissions[i];
        if (a.hospital != hospital || a.admission_year != year) continue;
        auto [it, inserted] = best.emplace(a.patient_id, i);
        if (inserted) {
            order.push_back(i);
            continue;
        }
        const Admission& current = admissions[it->second];
        if (a.discharge_date < current.discharge_date ||
            (a.discharge_date == current.discharge_date && a.admission_id < current.admission_id))
            it->second = i;
    }
    HYPool pool{hospital, year, {}};
    pool.admissions.reserve(order.size());
    for (std::size_t i : order) pool.admissions.push_back(admissions[best.at(admissions[i].patient_id)]);
    if (pool.admissions.empty())
        throw std::runtime_error("no admissions for hospital " + hospital + " year " +
                                 std::to_string(year));
    return pool;
}

/// Uniform sample of n_cases without replacement; everything else becomes the
/// control group. The two sides are patient-disjoint by pool construction.
inline std::pair<std::vector<Admission>, std::vector<Admission>> split_case_control(
    const HYPool& pool, const CohortSpec& spec, Rng& rng) {
    if (spec.n_cases < 1) throw std::invalid_argument("n_cases must be >= 1");
    const std::size_t n = pool.admissions.size();
    const std::size_t want = static_cast<std::size_t>(spec.n_cases);
    if (n < want + 1)
        throw PoolTooSmallError("pool of " + std::to_string(n) + " admissions cannot supply " +
                                std::to_string(want) + " cases plus controls; resample (H, Y)");

    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    for (std::size_t i = 0; i < want; ++i) {
        const std::size_t j = i + rng.uniform_index(n - i);
        std::swap(idx[i], idx[j]);
    }
    std::vector<Admission> cases;
    cases.reserve(want);
    for (std::size_t i = 0; i < want; ++i) cases.push_back(pool.admissions[idx[i]]);
    std::sort(idx.begin() + static_cast<long>(want), idx.end());
    std::vector<Admission> controls;
    controls.reserve(n - want);
    for (std::size_t i = want; i < n; ++i) controls.push_back(pool.admissions[idx[i]]);
    return {std::move(cases), std::move(controls)};
}

namespace synth {

// Generator internals. Codes are partitioned into synonym clusters; an
// admission picks a lead theme and an independent secondary theme, draws its
// first code from the lead, its second from the secondary, and later codes
// mostly from the two themes, so cluster members co-occur corpus-wide.
// Outcomes hang off the clusters of the two leading codes: the cluster pair
// fixes a mortality score that sets both the death probability and how fast
// death arrives, so sequence-aware matching has something real to track.
inline constexpr double kThemeConcentration = 0.7;
inline constexpr double kBaseDeathProbability = 0.35;
inline constexpr double kSecondCodeModulation = 0.5;  // how much the second code scales the lead
inline constexpr double kDeathGapSlowDays = 400.0;
inline constexpr double kDeathGapFastDays = 60.0;
inline constexpr Date kCensorDate{2008, 12, 31};

inline std::string code_name(int i) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%c%03d", 'A' + i % 26, i);
    return buf;
}

inline int cluster_of(int code_index, const SynthConfig& cfg) {
    return static_cast<int>(static_cast<long>(code_index) * cfg.n_synonym_clusters /
                            cfg.vocab_size);
}

inline std::vector<std::vector<int>> cluster_members(const SynthConfig& cfg) {
    std::vector<std::vector<int>> members(static_cast<std::size_t>(cfg.n_synonym_clusters));
    for (int i = 0; i < cfg.vocab_size; ++i)
        members[static_cast<std::size_t>(cluster_of(i, cfg))].push_back(i);
    return members;
}

inline ReadmissionStatus cluster_status(int cluster) {
    return static_cast<ReadmissionStatus>(cluster % kReadmissionStatusCount);
}

/// Half the clusters are high-mortality, half low.
inline double cluster_mortality(int cluster) { return (cluster % 2) ? 0.98 : 0.02; }

/// Mortality score of a code sequence: the leading cluster sets the scale
/// and the second cluster compounds it, so the severity of the pair is what
/// matters, in order.
inline double mortality_score(int lead_cluster, int second_cluster) {
    const double lead = cluster_mortality(lead_cluster);
    const double second =
        second_cluster >= 0 ? cluster_mortality(second_cluster) : cluster_mortality(lead_cluster);
    return lead * (1.0 - kSecondCodeModulation + kSecondCodeModulation * second);
}

/// Expected days from discharge to death; high-mortality scores die fast.
inline double death_gap_mean(double score) {
    return kDeathGapSlowDays - (kDeathGapSlowDays - kDeathGapFastDays) * score;
}

/// Triangular distribution over [lo, hi] whose median lands on `median`.
inline double triangular_with_median(double lo, double hi, double median, Rng& rng) {
    const double span = hi - lo;
    double mode = lo + 2.0 * (median - lo) * (median - lo) / span;
    mode = std::clamp(mode, lo, hi);
    const double u = rng.next_double();
    const double cut = (mode - lo) / span;
    if (u < cut) return lo + std::sqrt(u * span * (mode - lo));
    return hi - std::sqrt((1.0 - u) * span * (hi - mode));
}

inline ReadmissionStatus sample_marginal_status(const std::array<double, 4>& marginals, Rng& rng) {
    const double u = rng.next_double();
    double acc = 0.0;
    for (int s = 0; s < kReadmissionStatusCount; ++s) {
        acc += marginals[static_cast<std::size_t>(s)];
        if (u < acc) return static_cast<ReadmissionStatus>(s);
    }
    return ReadmissionStatus::not_readmitted;
}

}  // namespace synth

inline void validate(const SynthConfig& cfg) {
    auto reject = [](const std::string& what) {
        throw std::invalid_argument("invalid synthetic-data config: " + what);
    };
    if (cfg.n_patients < 1) reject("n_patients must be >= 1");
    if (cfg.n_hospitals < 1) reject("n_hospitals must be >= 1");
    if (cfg.year_min > cfg.year_max) reject("year_min exceeds year_max");
    if (cfg.vocab_size < 1) reject("vocab_size must be >= 1");
    if (cfg.n_synonym_clusters < 1 || cfg.n_synonym_clusters > cfg.vocab_size)
        reject("n_synonym_clusters must be in [1, vocab_size]");
    if (cfg.codes_min < 1 || cfg.codes_min > cfg.codes_max)
        reject("codes_per_admission range is empty or starts below 1");
    double total = 0.0;
    for (double p : cfg.readmission_marginals) {
        if (!std::isfinite(p) || p < 0.0) reject("readmission marginal outside [0, 1]");
        total += p;
    }
    if (std::abs(total - 1.0) > 1e-9) reject("readmission marginals must sum to 1");
    if (!(cfg.male_fraction >= 0.0 && cfg.male_fraction <= 1.0))
        reject("male_fraction must be in [0, 1]");
    if (cfg.median_age_target < 18 || cfg.median_age_target > 100)
        reject("median_age_target must be in [18, 100]");
    if (!(cfg.outcome_coupling >= 0.0 && cfg.outcome_coupling <= 1.0))
        reject("outcome_coupling must be in [0, 1]");
}

/// Synthetic admissions, one per patient. Each patient's draws come from a
/// seed derived from the patient index, so generation can be sharded without
/// changing the output.
inline std::vector<Admission> generate_synthetic_cohort(const SynthConfig& cfg) {
    validate(cfg);
    const auto members = synth::cluster_members(cfg);

    std::vector<Admission> out;
    out.reserve(static_cast<std::size_t>(cfg.n_patients));
    char buf[32];
    for (int p = 0; p < cfg.n_patients; ++p) {
        Rng rng(derive_seed(cfg.seed, 0x5EEDu + static_cast<std::uint64_t>(p)));
        Admission a;
        std::snprintf(buf, sizeof buf, "A%07d", p);
        a.admission_id = buf;
        std::snprintf(buf, sizeof buf, "P%07d", p);
        a.patient_id = buf;
        std::snprintf(buf, sizeof buf, "H%02d", 1 + static_cast<int>(rng.uniform_index(
                                                        static_cast<std::size_t>(cfg.n_hospitals))));
        a.hospital = buf;

        a.admission_year = rng.uniform_int(cfg.year_min, cfg.year_max);
        const Date year_start{a.admission_year, 1, 1};
        const int year_days = Date::is_leap(a.admission_year) ? 366 : 365;
        a.discharge_date =
            add_days(year_start, static_cast<long>(rng.uniform_index(static_cast<std::size_t>(year_days))));

        a.gender = rng.bernoulli(cfg.male_fraction) ? Gender::male : Gender::female;
        a.age_years = static_cast<int>(
            synth::triangular_with_median(18.0, 101.0, cfg.median_age_target + 0.5, rng));
        a.age_years = std::min(a.age_years, 100);

        const int length = rng.uniform_int(cfg.codes_min, cfg.codes_max);
        const int lead_theme = static_cast<int>(rng.uniform_index(members.size()));
        const int second_theme = static_cast<int>(rng.uniform_index(members.size()));
        auto theme_code = [&](int theme) {
            const auto& codes = members[static_cast<std::size_t>(theme)];
            return codes[rng.uniform_index(codes.size())];
        };
        a.codes.reserve(static_cast<std::size_t>(length));
        std::vector<int> drawn;
        drawn.reserve(static_cast<std::size_t>(length));
        for (int k = 0; k < length; ++k) {
            int code_index;
            if (k == 0)
                code_index = theme_code(lead_theme);
            else if (k == 1)
                code_index = theme_code(second_theme);
            else if (rng.bernoulli(synth::kThemeConcentration))
                code_index = theme_code(rng.bernoulli(0.5) ? lead_theme : second_theme);
            else
                code_index = static_cast<int>(rng.uniform_index(static_cast<std::size_t>(cfg.vocab_size)));
            drawn.push_back(code_index);
            a.codes.emplace_back(synth::code_name(code_index));
        }

        const int lead_cluster = synth::cluster_of(drawn.front(), cfg);
        const int second_cluster = drawn.size() > 1 ? synth::cluster_of(drawn[1], cfg) : -1;

        if (rng.bernoulli(cfg.outcome_coupling))
            a.readmission = synth::cluster_status(lead_cluster);
        else if (rng.bernoulli(cfg.outcome_coupling) && second_cluster >= 0)
            a.readmission = synth::cluster_status(second_cluster);
        else
            a.readmission = synth::sample_marginal_status(cfg.readmission_marginals, rng);

        const double score = synth::mortality_score(lead_cluster, second_cluster);
        const double p_death = cfg.outcome_coupling * score +
                               (1.0 - cfg.outcome_coupling) * synth::kBaseDeathProbability;
        if (rng.bernoulli(p_death)) {
            const long gap = static_cast<long>(rng.exponential(synth::death_gap_mean(score)));
            const Date death = add_days(a.discharge_date, gap);
            if (death <= synth::kCensorDate) a.death_date = death;  // later deaths are censored away
        }

        out.push_back(std::move(a));
    }
    return out;
}

}  // namespace ccmatch

#endif
