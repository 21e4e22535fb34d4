#ifndef CCMATCH_MATCHING_HPP
#define CCMATCH_MATCHING_HPP

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "ccmatch/data_model.hpp"
#include "ccmatch/embedding.hpp"
#include "ccmatch/rng.hpp"

namespace ccmatch {

enum class MatchMethod { wvm, pcm, hdm, csm };

inline std::string_view to_token(MatchMethod m) {
    switch (m) {
        case MatchMethod::wvm: return "WVM";
        case MatchMethod::pcm: return "PCM";
        case MatchMethod::hdm: return "HDM";
        case MatchMethod::csm: return "CSM";
    }
    return "WVM";
}

inline std::optional<MatchMethod> method_from_token(std::string_view t) {
    std::string up;
    up.reserve(t.size());
    for (char c : t) up.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
    if (up == "WVM") return MatchMethod::wvm;
    if (up == "PCM") return MatchMethod::pcm;
    if (up == "HDM") return MatchMethod::hdm;
    if (up == "CSM") return MatchMethod::csm;
    return std::nullopt;
}

inline bool method_needs_model(MatchMethod m) {
    return m == MatchMethod::wvm || m == MatchMethod::csm;
}

enum class MatchScenario {
    exact_full,            // a control matches every case code
    partial_embedding,     // deepest prefix matched, next code chosen by embedding
    first_code_embedding,  // no prefix matched, first code chosen by embedding
    primary_code,
    hamming,
    code_sum,
};

inline std::string_view to_token(MatchScenario s) {
    switch (s) {
        case MatchScenario::exact_full: return "exact_full";
        case MatchScenario::partial_embedding: return "partial_embedding";
        case MatchScenario::first_code_embedding: return "first_code_embedding";
        case MatchScenario::primary_code: return "primary_code";
        case MatchScenario::hamming: return "hamming";
        case MatchScenario::code_sum: return "code_sum";
    }
    return "exact_full";
}

struct MatcherConfig {
    MatchMethod method = MatchMethod::wvm;
    int age_bin_width_years = 5;  // ages 85+ share one bin
    bool with_replacement = false;
    std::uint64_t seed = 1;
};

struct MatchResult {
    std::string case_id;
    std::string control_id;
    MatchMethod method = MatchMethod::wvm;
    MatchScenario scenario = MatchScenario::exact_full;
    std::optional<double> distance;  // present iff an embedding comparison occurred
    std::size_t matched_prefix_len = 0;
    bool random_fallback = false;  // scenario 2 with no candidate owning the next code
};

/// Raised when a case has no admissible control; cohort matching records it
/// and moves on.
class NoMatchError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline int age_bin(int age_years, int width) {
    return std::min(age_years, 85) / width;
}

/// Position-wise mismatch count; the shorter sequence is padded with a
/// sentinel, each pad position counting as a mismatch.
inline std::size_t hamming_distance(std::span<const CodeId> a, std::span<const CodeId> b) {
    const std::size_t common = std::min(a.size(), b.size());
    std::size_t mismatches = std::max(a.size(), b.size()) - common;
    for (std::size_t i = 0; i < common; ++i)
        if (a[i] != b[i]) ++mismatches;
    return mismatches;
}

inline std::size_t common_prefix_len(std::span<const CodeId> a, std::span<const CodeId> b) {
    const std::size_t common = std::min(a.size(), b.size());
    std::size_t n = 0;
    while (n < common && a[n] == b[n]) ++n;
    return n;
}

namespace detail {

inline std::vector<std::size_t> identity_indices(std::size_t n) {
    std::vector<std::size_t> live(n);
    std::iota(live.begin(), live.end(), std::size_t{0});
    return live;
}

inline std::vector<std::size_t> validation_filter(const Admission& case_adm,
                                                  std::span<const Admission> pool,
                                                  std::span<const std::size_t> live, int width) {
    const int want_bin = age_bin(case_adm.age_years, width);
    std::vector<std::size_t> group;
    for (std::size_t i : live) {
        const Admission& c = pool[i];
        if (c.gender == case_adm.gender && age_bin(c.age_years, width) == want_bin)
            group.push_back(i);
    }
    return group;
}

}  // namespace detail

/// Controls sharing the case's gender and age group, as indices into
/// `controls` in their original order.
inline std::vector<std::size_t> validation_group(const Admission& case_adm,
                                                 std::span<const Admission> controls,
                                                 const MatcherConfig& cfg) {
    const auto live = detail::identity_indices(controls.size());
    return detail::validation_filter(case_adm, controls, live, cfg.age_bin_width_years);
}

/// levels[t] holds the group members whose first t codes equal the case's
/// first t codes; depth is the largest non-empty level and levels[n] is the
/// full-sequence set.
struct PrefixMatchIndex {
    std::vector<std::vector<std::size_t>> levels;
    std::size_t depth = 0;
    std::size_t case_code_count = 0;

    const std::vector<std::size_t>& full_set() const { return levels[case_code_count]; }
};

inline PrefixMatchIndex prefix_match_levels(const Admission& case_adm,
                                            std::span<const Admission> pool,
                                            std::span<const std::size_t> group) {
    if (case_adm.codes.empty()) throw std::invalid_argument("case admission has no codes");
    PrefixMatchIndex idx;
    idx.case_code_count = case_adm.codes.size();
    idx.levels.resize(idx.case_code_count + 1);
    idx.levels[0].assign(group.begin(), group.end());
    for (std::size_t t = 1; t <= idx.case_code_count; ++t) {
        for (std::size_t i : idx.levels[t - 1]) {
            const auto& codes = pool[i].codes;
            if (codes.size() >= t && codes[t - 1] == case_adm.codes[t - 1])
                idx.levels[t].push_back(i);
        }
        if (!idx.levels[t].empty()) idx.depth = t;
    }
    return idx;
}

inline PrefixMatchIndex prefix_match_levels(const Admission& case_adm,
                                            std::span<const Admission> validation_set) {
    const auto all = detail::identity_indices(validation_set.size());
    return prefix_match_levels(case_adm, validation_set, all);
}

namespace detail {

struct CaseMatch {
    std::size_t pool_index = 0;
    MatchResult result;
};

inline MatchResult base_result(const Admission& case_adm, const Admission& control,
                               MatchMethod method, MatchScenario scenario) {
    MatchResult r;
    r.case_id = case_adm.admission_id;
    r.control_id = control.admission_id;
    r.method = method;
    r.scenario = scenario;
    return r;
}

// Distances closer than this are one tie class: candidates with equal
// distance in exact arithmetic can differ by a few ulp once rounding enters
// (for example proportional code-vector sums), and the id rule must still
// decide those deterministically.
inline constexpr double kDistanceTieTolerance = 1e-12;

/// Smallest-distance candidate; distance ties go to the smaller admission_id
/// so runs reproduce across RNG implementations.
template <typename DistanceFn>
inline std::optional<std::pair<std::size_t, double>> argmin_by_distance(
    std::span<const Admission> pool, std::span<const std::size_t> candidates, DistanceFn&& dist) {
    std::optional<std::pair<std::size_t, double>> best;
    for (std::size_t i : candidates) {
        const auto d = dist(i);
        if (!d) continue;
        if (!best || *d < best->second - kDistanceTieTolerance ||
            (*d <= best->second + kDistanceTieTolerance &&
             pool[i].admission_id < pool[best->first].admission_id))
            best = {i, *d};
    }
    return best;
}

inline std::optional<CaseMatch> match_wvm_core(const Admission& case_adm,
                                               std::span<const Admission> pool,
                                               std::span<const std::size_t> group,
                                               const EmbeddingModel& model, Rng& rng,
                                               std::string& reason) {
    if (group.empty()) {
        reason = "empty validation group";
        return std::nullopt;
    }
    const PrefixMatchIndex idx = prefix_match_levels(case_adm, pool, group);
    const std::size_t n = idx.case_code_count;

    if (!idx.full_set().empty()) {
        const std::size_t pick = idx.full_set()[rng.uniform_index(idx.full_set().size())];
        CaseMatch m{pick, base_result(case_adm, pool[pick], MatchMethod::wvm,
                                      MatchScenario::exact_full)};
        m.result.matched_prefix_len = n;
        return m;
    }

    if (idx.depth >= 1) {
        const auto& level = idx.levels[idx.depth];
        std::vector<std::size_t> candidates;
        for (std::size_t i : level)
            if (pool[i].codes.size() > idx.depth) candidates.push_back(i);

        if (candidates.empty()) {
            // Nothing to compare at the next position: uniform fallback.
            const std::size_t pick = level[rng.uniform_index(level.size())];
            CaseMatch m{pick, base_result(case_adm, pool[pick], MatchMethod::wvm,
                                          MatchScenario::partial_embedding)};
            m.result.matched_prefix_len = idx.depth;
            m.result.random_fallback = true;
            return m;
        }

        const auto case_vec = model.input_vector(case_adm.codes[idx.depth]);
        const auto best = argmin_by_distance(pool, candidates, [&](std::size_t i) {
            return std::optional<double>(
                cosine_distance(case_vec, model.input_vector(pool[i].codes[idx.depth])));
        });
        CaseMatch m{best->first, base_result(case_adm, pool[best->first], MatchMethod::wvm,
                                             MatchScenario::partial_embedding)};
        m.result.matched_prefix_len = idx.depth;
        m.result.distance = best->second;
        return m;
    }

    const auto case_vec = model.input_vector(case_adm.codes[0]);
    const auto best = argmin_by_distance(pool, group, [&](std::size_t i) {
        return std::optional<double>(
            cosine_distance(case_vec, model.input_vector(pool[i].codes[0])));
    });
    CaseMatch m{best->first, base_result(case_adm, pool[best->first], MatchMethod::wvm,
                                         MatchScenario::first_code_embedding)};
    m.result.matched_prefix_len = 0;
    m.result.distance = best->second;
    return m;
}

inline std::optional<CaseMatch> match_pcm_core(const Admission& case_adm,
                                               std::span<const Admission> pool,
                                               std::span<const std::size_t> group, Rng& rng,
                                               std::string& reason) {
    if (group.empty()) {
        reason = "empty validation group";
        return std::nullopt;
    }
    std::vector<std::size_t> candidates;
    for (std::size_t i : group)
        if (pool[i].codes.front() == case_adm.codes.front()) candidates.push_back(i);
    if (candidates.empty()) {
        reason = "no control shares the primary code";
        return std::nullopt;
    }
    const std::size_t pick = candidates[rng.uniform_index(candidates.size())];
    CaseMatch m{pick,
                base_result(case_adm, pool[pick], MatchMethod::pcm, MatchScenario::primary_code)};
    m.result.matched_prefix_len = common_prefix_len(case_adm.codes, pool[pick].codes);
    return m;
}

inline std::optional<CaseMatch> match_hdm_core(const Admission& case_adm,
                                               std::span<const Admission> pool,
                                               std::span<const std::size_t> group,
                                               std::string& reason) {
    if (group.empty()) {
        reason = "empty validation group";
        return std::nullopt;
    }
    const auto best = argmin_by_distance(pool, group, [&](std::size_t i) {
        return std::optional<double>(
            static_cast<double>(hamming_distance(case_adm.codes, pool[i].codes)));
    });
    CaseMatch m{best->first,
                base_result(case_adm, pool[best->first], MatchMethod::hdm, MatchScenario::hamming)};
    m.result.matched_prefix_len = common_prefix_len(case_adm.codes, pool[best->first].codes);
    return m;
}

inline std::optional<std::vector<double>> summed_code_vector(const EmbeddingModel& model,
                                                             std::span<const CodeId> codes) {
    std::vector<double> sum(static_cast<std::size_t>(model.dim()), 0.0);
    for (const CodeId& c : codes) {
        const auto v = model.input_vector(c);
        for (std::size_t d = 0; d < sum.size(); ++d) sum[d] += v[d];
    }
    for (double x : sum)
        if (x != 0.0) return sum;
    return std::nullopt;
}

inline std::optional<CaseMatch> match_csm_core(const Admission& case_adm,
                                               std::span<const Admission> pool,
                                               std::span<const std::size_t> group,
                                               const EmbeddingModel& model, std::string& reason) {
    if (group.empty()) {
        reason = "empty validation group";
        return std::nullopt;
    }
    const auto case_sum = summed_code_vector(model, case_adm.codes);
    if (!case_sum) {
        reason = "case code vectors sum to zero";
        return std::nullopt;
    }
    const auto best = argmin_by_distance(pool, group, [&](std::size_t i) -> std::optional<double> {
        const auto sum = summed_code_vector(model, pool[i].codes);
        if (!sum) return std::nullopt;  // zero sum: candidate excluded
        return cosine_distance(*case_sum, *sum);
    });
    if (!best) {
        reason = "every candidate code-vector sum is zero";
        return std::nullopt;
    }
    CaseMatch m{best->first, base_result(case_adm, pool[best->first], MatchMethod::csm,
                                         MatchScenario::code_sum)};
    m.result.matched_prefix_len = common_prefix_len(case_adm.codes, pool[best->first].codes);
    m.result.distance = best->second;
    return m;
}

inline std::optional<CaseMatch> match_case(const Admission& case_adm,
                                           std::span<const Admission> pool,
                                           std::span<const std::size_t> live,
                                           const EmbeddingModel* model, const MatcherConfig& cfg,
                                           Rng& rng, std::string& reason) {
    if (case_adm.codes.empty()) throw std::invalid_argument("case admission has no codes");
    if (method_needs_model(cfg.method) && !model)
        throw std::invalid_argument(std::string(to_token(cfg.method)) +
                                    " matching requires an embedding model");
    const auto group = validation_filter(case_adm, pool, live, cfg.age_bin_width_years);
    switch (cfg.method) {
        case MatchMethod::wvm: return match_wvm_core(case_adm, pool, group, *model, rng, reason);
        case MatchMethod::pcm: return match_pcm_core(case_adm, pool, group, rng, reason);
        case MatchMethod::hdm: return match_hdm_core(case_adm, pool, group, reason);
        case MatchMethod::csm: return match_csm_core(case_adm, pool, group, *model, reason);
    }
    throw std::logic_error("unreachable match method");
}

inline CaseMatch match_case_or_throw(const Admission& case_adm, std::span<const Admission> pool,
                                     const EmbeddingModel* model, const MatcherConfig& cfg,
                                     Rng& rng) {
    const auto live = identity_indices(pool.size());
    std::string reason;
    auto m = match_case(case_adm, pool, live, model, cfg, rng, reason);
    if (!m) throw NoMatchError("case " + case_adm.admission_id + ": " + reason);
    return std::move(*m);
}

}  // namespace detail

inline MatchResult match_wvm(const Admission& case_adm, std::span<const Admission> controls,
                             const EmbeddingModel& model, const MatcherConfig& cfg, Rng& rng) {
    MatcherConfig c = cfg;
    c.method = MatchMethod::wvm;
    return detail::match_case_or_throw(case_adm, controls, &model, c, rng).result;
}

inline MatchResult match_pcm(const Admission& case_adm, std::span<const Admission> controls,
                             const MatcherConfig& cfg, Rng& rng) {
    MatcherConfig c = cfg;
    c.method = MatchMethod::pcm;
    return detail::match_case_or_throw(case_adm, controls, nullptr, c, rng).result;
}

inline MatchResult match_hdm(const Admission& case_adm, std::span<const Admission> controls,
                             const MatcherConfig& cfg, Rng& rng) {
    MatcherConfig c = cfg;
    c.method = MatchMethod::hdm;
    return detail::match_case_or_throw(case_adm, controls, nullptr, c, rng).result;
}

inline MatchResult match_csm(const Admission& case_adm, std::span<const Admission> controls,
                             const EmbeddingModel& model, const MatcherConfig& cfg, Rng& rng) {
    MatcherConfig c = cfg;
    c.method = MatchMethod::csm;
    return detail::match_case_or_throw(case_adm, controls, &model, c, rng).result;
}

struct SkippedCase {
    std::string case_id;
    std::string reason;
};

struct CohortMatchResult {
    std::vector<MatchResult> matches;
    std::vector<SkippedCase> skipped;
};

/// 1:1 matching of every case, in order. Without replacement (the default)
/// each chosen control leaves the pool before the next case is matched.
/// Per-case failures land in `skipped`; the cohort never aborts.
inline CohortMatchResult match_cohort(std::span<const Admission> cases,
                                      std::span<const Admission> controls,
                                      const EmbeddingModel* model, const MatcherConfig& cfg,
                                      Rng& rng) {
    if (method_needs_model(cfg.method) && !model)
        throw std::invalid_argument(std::string(to_token(cfg.method)) +
                                    " matching requires an embedding model");
    CohortMatchResult out;
    auto live = detail::identity_indices(controls.size());
    for (const Admission& case_adm : cases) {
        std::string reason;
        auto m = detail::match_case(case_adm, controls, live, model, cfg, rng, reason);
        if (!m) {
            out.skipped.push_back({case_adm.admission_id, std::move(reason)});
            continue;
        }
        if (!cfg.with_replacement) {
            const auto it = std::lower_bound(live.begin(), live.end(), m->pool_index);
            live.erase(it);
        }
        out.matches.push_back(std::move(m->result));
    }
    return out;
}

inline void write_matches_csv(std::ostream& out, std::span<const MatchResult> matches) {
    out << "case_id,control_id,method,scenario,matched_prefix_len,distance\n";
    char buf[32];
    for (const MatchResult& m : matches) {
        out << m.case_id << ',' << m.control_id << ',' << to_token(m.method) << ','
            << to_token(m.scenario) << ',' << m.matched_prefix_len << ',';
        if (m.distance) {
            std::snprintf(buf, sizeof buf, "%.9g", *m.distance);
            out << buf;
        }
        out << '\n';
    }
}

}  // namespace ccmatch

#endif
