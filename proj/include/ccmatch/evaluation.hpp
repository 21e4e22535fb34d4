#ifndef CCMATCH_EVALUATION_HPP
#define CCMATCH_EVALUATION_HPP

#include <cmath>
#include <cstdio>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <unordered_map>
#include <utility>
#include <vector>

#include "ccmatch/cohort.hpp"
#include "ccmatch/data_model.hpp"
#include "ccmatch/date.hpp"
#include "ccmatch/embedding.hpp"
#include "ccmatch/matching.hpp"
#include "ccmatch/rng.hpp"

namespace ccmatch {

/// Fraction of positions where the r-th control carries the same readmission
/// status as the r-th case.
inline double readmission_accuracy(std::span<const ReadmissionStatus> case_statuses,
                                   std::span<const ReadmissionStatus> control_statuses) {
    if (case_statuses.size() != control_statuses.size())
        throw std::invalid_argument("readmission_accuracy: status lists differ in length");
    if (case_statuses.empty())
        throw std::invalid_argument("readmission_accuracy: empty status lists");
    std::size_t agree = 0;
    for (std::size_t r = 0; r < case_statuses.size(); ++r)
        if (case_statuses[r] == control_statuses[r]) ++agree;
    return static_cast<double>(agree) / static_cast<double>(case_statuses.size());
}

struct IncidenceRecord {
    Date discharge;
    std::optional<Date> death;
};

struct IncidenceRateDetail {
    double rate = 0.0;  // deaths per person-day
    long deaths = 0;
    long person_days = 0;
    long deaths_after_censor = 0;  // recorded deaths beyond the censor date, treated as alive
};

/// Deaths divided by accumulated person-days. A death recorded after the
/// censor date is treated as alive at the censor date and counted in
/// deaths_after_censor.
inline IncidenceRateDetail incidence_rate_detail(std::span<const IncidenceRecord> records,
                                                 Date censor_date) {
    IncidenceRateDetail out;
    for (const IncidenceRecord& r : records) {
        if (r.discharge > censor_date)
            throw std::invalid_argument("incidence_rate: discharge after censor date");
        if (r.death && *r.death < r.discharge)
            throw std::invalid_argument("incidence_rate: death precedes discharge");
        if (r.death && *r.death <= censor_date) {
            ++out.deaths;
            out.person_days += days_between(r.discharge, *r.death);
        } else {
            if (r.death) ++out.deaths_after_censor;
            out.person_days += days_between(r.discharge, censor_date);
        }
    }
    if (out.person_days == 0)
        throw std::domain_error("incidence_rate: zero person-time, rate undefined");
    out.rate = static_cast<double>(out.deaths) / static_cast<double>(out.person_days);
    return out;
}

inline double incidence_rate(std::span<const IncidenceRecord> records, Date censor_date) {
    return incidence_rate_detail(records, censor_date).rate;
}

inline double ir_error(double ir_case, double ir_control) {
    return std::abs(ir_case - ir_control);
}

struct TrialOutcome {
    int iteration = 0;
    std::string hospital;
    int year = 0;
    int n_matched = 0;
    int n_skipped = 0;
    double readmission_accuracy = 0.0;
    double ir_case = 0.0;
    double ir_control = 0.0;
    double ir_error = 0.0;
};

struct MetricSummary {
    double mean = 0.0;
    double stddev = 0.0;  // sample standard deviation; 0 with degenerate=true when n < 2
    double stderror = 0.0;
    std::size_t n = 0;
    bool degenerate = false;
};

struct AbortedIteration {
    int iteration = 0;
    std::string reason;
};

struct ExperimentReport {
    MatchMethod method = MatchMethod::wvm;
    std::vector<TrialOutcome> trials;
    std::vector<AbortedIteration> aborted;
    MetricSummary accuracy;
    MetricSummary ir_case;
    MetricSummary ir_control;
    MetricSummary ir_err;
};

struct ExperimentConfig {
    int n_iterations = 150;
    int n_cases = 200;
    Date censor_date{2008, 12, 31};
    int age_bin_width_years = 5;
    bool with_replacement = false;
    std::uint64_t seed = 1;
    int max_pool_retries = 25;
    int workers = 1;  // iterations run concurrently; the report never depends on this
};

namespace detail {

template <typename Get>
inline MetricSummary summarize(const std::vector<TrialOutcome>& trials, Get&& get) {
    MetricSummary s;
    s.n = trials.size();
    if (s.n == 0) {
        s.degenerate = true;
        return s;
    }
    double total = 0.0;
    for (const TrialOutcome& t : trials) total += get(t);
    s.mean = total / static_cast<double>(s.n);
    if (s.n < 2) {
        s.degenerate = true;
        return s;
    }
    double ss = 0.0;
    for (const TrialOutcome& t : trials) {
        const double d = get(t) - s.mean;
        ss += d * d;
    }
    s.stddev = std::sqrt(ss / static_cast<double>(s.n - 1));
    s.stderror = s.stddev / std::sqrt(static_cast<double>(s.n));
    return s;
}

struct MethodTrial {
    bool ok = false;
    TrialOutcome outcome;
    std::string abort_reason;
};

struct IterationResult {
    bool cohort_ok = false;
    std::string cohort_abort;
    std::vector<MethodTrial> methods;
};

inline IterationResult run_iteration(std::span<const Admission> admissions,
                                     std::span<const MatchMethod> methods,
                                     const EmbeddingModel* model, const ExperimentConfig& cfg,
                                     int iteration) {
    IterationResult result;
    result.methods.resize(methods.size());

    Rng cohort_rng(derive_seed(cfg.seed, 0xC0011ECCu + static_cast<std::uint64_t>(iteration)));
    std::string hospital;
    int year = 0;
    std::vector<Admission> cases, controls;
    bool have_cohort = false;
    for (int attempt = 0; attempt < cfg.max_pool_retries && !have_cohort; ++attempt) {
        auto [h, y] = sample_hospital_year(admissions, cohort_rng);
        HYPool pool = build_hy_pool(admissions, h, y);
        try {
            CohortSpec spec;
            spec.n_cases = cfg.n_cases;
            spec.hospital = h;
            spec.year = y;
            std::tie(cases, controls) = split_case_control(pool, spec, cohort_rng);
            hospital = h;
            year = y;
            have_cohort = true;
        } catch (const PoolTooSmallError&) {
            // try another (hospital, year)
        }
    }
    if (!have_cohort) {
        result.cohort_abort = "no (hospital, year) pool could supply " +
                              std::to_string(cfg.n_cases) + " cases plus controls after " +
                              std::to_string(cfg.max_pool_retries) + " attempts";
        return result;
    }
    result.cohort_ok = true;

    std::unordered_map<std::string, const Admission*> case_by_id, control_by_id;
    case_by_id.reserve(cases.size());
    for (const Admission& a : cases) case_by_id.emplace(a.admission_id, &a);
    control_by_id.reserve(controls.size());
    for (const Admission& a : controls) control_by_id.emplace(a.admission_id, &a);

    for (std::size_t j = 0; j < methods.size(); ++j) {
        MethodTrial& trial = result.methods[j];
        const MatchMethod method = methods[j];
        Rng match_rng(derive_seed(derive_seed(cfg.seed, 0x3A7C4EDu + static_cast<std::uint64_t>(iteration)),
                                  static_cast<std::uint64_t>(j)));
        MatcherConfig mc;
        mc.method = method;
        mc.age_bin_width_years = cfg.age_bin_width_years;
        mc.with_replacement = cfg.with_replacement;
        const EmbeddingModel* m = method_needs_model(method) ? model : nullptr;
        const CohortMatchResult matched = match_cohort(cases, controls, m, mc, match_rng);
        if (matched.matches.empty()) {
            trial.abort_reason = "no cases could be matched";
            continue;
        }

        std::vector<ReadmissionStatus> case_statuses, control_statuses;
        std::vector<IncidenceRecord> case_records, control_records;
        case_statuses.reserve(matched.matches.size());
        for (const MatchResult& mr : matched.matches) {
            const Admission* c = case_by_id.at(mr.case_id);
            const Admission* v = control_by_id.at(mr.control_id);
            case_statuses.push_back(c->readmission);
            control_statuses.push_back(v->readmission);
            case_records.push_back({c->discharge_date, c->death_date});
            control_records.push_back({v->discharge_date, v->death_date});
        }

        try {
            TrialOutcome& o = trial.outcome;
            o.iteration = iteration;
            o.hospital = hospital;
            o.year = year;
            o.n_matched = static_cast<int>(matched.matches.size());
            o.n_skipped = static_cast<int>(matched.skipped.size());
            o.readmission_accuracy = readmission_accuracy(case_statuses, control_statuses);
            o.ir_case = incidence_rate(case_records, cfg.censor_date);
            o.ir_control = incidence_rate(control_records, cfg.censor_date);
            o.ir_error = ir_error(o.ir_case, o.ir_control);
            trial.ok = true;
        } catch (const std::domain_error& e) {
            trial.abort_reason = e.what();
        }
    }
    return result;
}

}  // namespace detail

/// Repeated-trial evaluation. Every method sees the same per-iteration
/// cohort draw so the comparison is paired; per-method RNG streams are
/// derived from (seed, iteration, method) and aggregation runs in iteration
/// order, so the worker count never changes the report.
inline std::vector<ExperimentReport> run_paired_experiment(std::span<const Admission> admissions,
                                                           std::span<const MatchMethod> methods,
                                                           const EmbeddingModel* model,
                                                           const ExperimentConfig& cfg) {
    if (cfg.n_iterations < 1) throw std::invalid_argument("n_iterations must be >= 1");
    if (methods.empty()) throw std::invalid_argument("no matching methods requested");
    for (MatchMethod m : methods)
        if (method_needs_model(m) && !model)
            throw std::invalid_argument(std::string(to_token(m)) +
                                        " evaluation requires an embedding model");

    std::vector<detail::IterationResult> results(static_cast<std::size_t>(cfg.n_iterations));
    const int workers = std::max(1, std::min(cfg.workers, cfg.n_iterations));
    if (workers == 1) {
        for (int i = 0; i < cfg.n_iterations; ++i)
            results[static_cast<std::size_t>(i)] =
                detail::run_iteration(admissions, methods, model, cfg, i);
    } else {
        std::vector<std::thread> threads;
        threads.reserve(static_cast<std::size_t>(workers));
        for (int w = 0; w < workers; ++w) {
            threads.emplace_back([&, w] {
                for (int i = w; i < cfg.n_iterations; i += workers)
                    results[static_cast<std::size_t>(i)] =
                        detail::run_iteration(admissions, methods, model, cfg, i);
            });
        }
        for (auto& t : threads) t.join();
    }

    std::vector<ExperimentReport> reports(methods.size());
    for (std::size_t j = 0; j < methods.size(); ++j) reports[j].method = methods[j];
    for (int i = 0; i < cfg.n_iterations; ++i) {
        const auto& r = results[static_cast<std::size_t>(i)];
        for (std::size_t j = 0; j < methods.size(); ++j) {
            if (!r.cohort_ok) {
                reports[j].aborted.push_back({i, r.cohort_abort});
            } else if (!r.methods[j].ok) {
                reports[j].aborted.push_back({i, r.methods[j].abort_reason});
            } else {
                reports[j].trials.push_back(r.methods[j].outcome);
            }
        }
    }
    for (ExperimentReport& rep : reports) {
        rep.accuracy = detail::summarize(rep.trials, [](const TrialOutcome& t) {
            return t.readmission_accuracy;
        });
        rep.ir_case = detail::summarize(rep.trials, [](const TrialOutcome& t) { return t.ir_case; });
        rep.ir_control =
            detail::summarize(rep.trials, [](const TrialOutcome& t) { return t.ir_control; });
        rep.ir_err = detail::summarize(rep.trials, [](const TrialOutcome& t) { return t.ir_error; });
    }
    return reports;
}

inline ExperimentReport run_experiment(std::span<const Admission> admissions, MatchMethod method,
                                       const EmbeddingModel* model, const ExperimentConfig& cfg) {
    const MatchMethod methods[] = {method};
    return std::move(run_paired_experiment(admissions, methods, model, cfg).front());
}

namespace detail {

inline std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

inline void write_metric_row(std::ostream& out, std::string_view method, std::string_view metric,
                             const MetricSummary& s) {
    out << method << ',' << metric << ',' << fmt_double(s.mean) << ',' << fmt_double(s.stddev)
        << ',' << fmt_double(s.stderror) << ',' << s.n << '\n';
}

}  // namespace detail

/// Structured text stanzas per method, then a delimited summary table, then
/// (optionally) the per-iteration table.
inline void write_report(std::ostream& out, std::span<const ExperimentReport> reports,
                         std::span<const std::pair<std::string, std::string>> config_echo,
                         bool per_trial) {
    out << "# ccmatch evaluation report\n";
    if (!config_echo.empty()) {
        out << "# config\n";
        for (const auto& [k, v] : config_echo) out << k << '=' << v << '\n';
    }
    for (const ExperimentReport& r : reports) {
        out << "\n== " << to_token(r.method) << " ==\n";
        out << "iterations: " << r.trials.size() << " completed, " << r.aborted.size()
            << " aborted\n";
        auto stanza = [&](std::string_view name, const MetricSummary& s) {
            out << name << ": mean=" << detail::fmt_double(s.mean)
                << " stddev=" << detail::fmt_double(s.stddev)
                << " stderr=" << detail::fmt_double(s.stderror) << " n=" << s.n;
            if (s.degenerate) out << " (fewer than two iterations; spread undefined)";
            out << '\n';
        };
        stanza("accuracy", r.accuracy);
        stanza("ir_case", r.ir_case);
        stanza("ir_control", r.ir_control);
        stanza("ir_error", r.ir_err);
        for (const AbortedIteration& a : r.aborted)
            out << "aborted iteration " << a.iteration << ": " << a.reason << '\n';
    }
    out << "\n# summary\n";
    out << "method,metric,mean,stddev,stderr,n_iterations\n";
    for (const ExperimentReport& r : reports) {
        detail::write_metric_row(out, to_token(r.method), "accuracy", r.accuracy);
        detail::write_metric_row(out, to_token(r.method), "ir_case", r.ir_case);
        detail::write_metric_row(out, to_token(r.method), "ir_control", r.ir_control);
        detail::write_metric_row(out, to_token(r.method), "ir_error", r.ir_err);
    }
    if (per_trial) {
        out << "\n# trials\n";
        out << "method,iteration,hospital,year,n_matched,n_skipped,accuracy,ir_case,ir_control,"
               "ir_error\n";
        for (const ExperimentReport& r : reports) {
            for (const TrialOutcome& t : r.trials) {
                out << to_token(r.method) << ',' << t.iteration << ',' << t.hospital << ','
                    << t.year << ',' << t.n_matched << ',' << t.n_skipped << ','
                    << detail::fmt_double(t.readmission_accuracy) << ','
                    << detail::fmt_double(t.ir_case) << ',' << detail::fmt_double(t.ir_control)
                    << ',' << detail::fmt_double(t.ir_error) << '\n';
            }
        }
    }
}

}  // namespace ccmatch

#endif
