#ifndef CCMATCH_CLI_HPP
#define CCMATCH_CLI_HPP

#include <array>
#include <fstream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

#include "ccmatch/config.hpp"

namespace ccmatch::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;
inline constexpr int kExitInternal = 3;

/// Bad flags or configuration; exits with kExitUsage.
class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Unreadable, unwritable, or semantically broken input data; exits with
/// kExitData.
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

namespace detail {

inline void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write file: " + path);
    out << content;
    if (!out.flush()) throw DataError("short write: " + path);
}

/// Every output artifact gets a `<path>.config` sidecar with the effective
/// configuration, loadable again via --config.
inline void write_config_sidecar(const std::string& path, const RunConfig& cfg) {
    std::ostringstream ss;
    write_config_kv(ss, cfg);
    write_text_file(path + ".config", ss.str());
}

inline std::vector<Admission> load_admissions(const std::string& path, const RunConfig& cfg,
                                              std::ostream& log) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open admissions file: " + path);
    ParseResult parsed;
    try {
        parsed = parse_admissions(in);
    } catch (const std::runtime_error& e) {
        throw DataError(e.what());
    }
    if (!parsed.errors.empty()) {
        std::ostringstream ss;
        ss << parsed.errors.size() << " malformed row(s) in " << path;
        for (std::size_t i = 0; i < parsed.errors.size() && i < 10; ++i)
            ss << "\n  line " << parsed.errors[i].line << ": " << parsed.errors[i].message;
        if (parsed.errors.size() > 10) ss << "\n  ...";
        if (cfg.strict) throw DataError(ss.str());
        log << "warning: " << ss.str() << " (rows skipped)\n";
    }
    const std::size_t before = parsed.admissions.size();
    auto filtered = apply_filters(std::move(parsed.admissions), cfg.filter);
    log << "loaded " << before << " admissions from " << path << ", " << filtered.size()
        << " after filters\n";
    return filtered;
}

inline EmbeddingModel load_model_file(const std::string& path) {
    if (path.empty()) throw UsageError("an embedding model is required; pass --model PATH");
    try {
        return load_model(path);
    } catch (const std::runtime_error& e) {
        throw DataError(e.what());
    }
}

/// WVM/CSM require a vector for every code they might compare.
inline void check_model_coverage(const EmbeddingModel& model,
                                 std::span<const Admission> admissions) {
    std::unordered_set<std::string> missing;
    for (const Admission& a : admissions)
        for (const CodeId& c : a.codes)
            if (!model.contains(c)) missing.insert(c.str());
    if (missing.empty()) return;
    std::ostringstream ss;
    ss << "embedding model does not cover " << missing.size() << " code(s) in the data:";
    std::size_t shown = 0;
    for (const auto& c : missing) {
        ss << ' ' << c;
        if (++shown == 8) break;
    }
    if (missing.size() > shown) ss << " ...";
    throw DataError(ss.str());
}

}  // namespace detail

/// Generates a synthetic admissions CSV plus its config sidecar.
inline void cmd_synth(const RunConfig& cfg, const std::string& out_path, std::ostream& log) {
    SynthConfig synth_cfg = cfg.synth;
    synth_cfg.seed = cfg.seed;
    try {
        validate(synth_cfg);
    } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
    }

    const auto admissions = generate_synthetic_cohort(synth_cfg);
    std::ostringstream ss;
    write_admissions_csv(ss, admissions);
    detail::write_text_file(out_path, ss.str());
    detail::write_config_sidecar(out_path, cfg);

    std::array<long, 4> status_counts{};
    long males = 0, deaths = 0;
    for (const Admission& a : admissions) {
        ++status_counts[static_cast<std::size_t>(a.readmission)];
        if (a.gender == Gender::male) ++males;
        if (a.death_date) ++deaths;
    }
    const double n = static_cast<double>(admissions.size());
    log << "wrote " << admissions.size() << " admissions to " << out_path << '\n';
    log << "readmission marginals: missing=" << status_counts[0] / n
        << " other=" << status_counts[1] / n << " same=" << status_counts[2] / n
        << " none=" << status_counts[3] / n << '\n';
    log << "male fraction: " << males / n << ", deaths: " << deaths << '\n';
}

/// Trains code vectors on a filtered admissions file and writes the model
/// (and its .out sibling).
inline void cmd_train(const RunConfig& cfg, const std::string& admissions_path,
                      const std::string& model_path, std::ostream& log) {
    const auto admissions = detail::load_admissions(admissions_path, cfg, log);
    if (admissions.empty()) throw DataError("no admissions survive the filters; nothing to train on");

    TrainingConfig tc = cfg.training;
    tc.seed = cfg.seed;
    tc.workers = cfg.workers;
    TrainingStats stats;
    EmbeddingModel model;
    try {
        model = train_skipgram(admissions, tc, &stats);
    } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
    }
    try {
        save_model(model, model_path);
    } catch (const std::runtime_error& e) {
        throw DataError(e.what());
    }
    detail::write_config_sidecar(model_path, cfg);
    log << "trained " << stats.vocab_size << " code vectors (dim " << tc.dim << ") on "
        << stats.pair_count << " pairs; final epoch mean loss " << stats.final_epoch_mean_loss
        << '\n';
    log << "wrote " << model_path << " and " << model_path << ".out\n";
}

/// Matches one sampled (or fixed) cohort and dumps the pairing.
inline void cmd_match(const RunConfig& cfg, const std::string& admissions_path,
                      const std::string& model_path, const std::string& out_path,
                      std::ostream& log) {
    const auto admissions = detail::load_admissions(admissions_path, cfg, log);
    if (admissions.empty()) throw DataError("no admissions survive the filters");

    std::string hospital = cfg.cohort.hospital;
    int year = cfg.cohort.year;
    if (hospital.empty() != (year == 0))
        throw UsageError("pass both --hospital and --year to fix the cohort, or neither");
    Rng cohort_rng(derive_seed(cfg.seed, 0xC0407Fu));
    if (hospital.empty()) {
        auto [h, y] = sample_hospital_year(admissions, cohort_rng);
        hospital = h;
        year = y;
        log << "sampled cohort (" << hospital << ", " << year << ")\n";
    }

    std::vector<Admission> cases, controls;
    try {
        const HYPool pool = build_hy_pool(admissions, hospital, year);
        CohortSpec spec = cfg.cohort;
        spec.hospital = hospital;
        spec.year = year;
        std::tie(cases, controls) = split_case_control(pool, spec, cohort_rng);
    } catch (const std::runtime_error& e) {
        throw DataError(e.what());
    }

    MatcherConfig mc = cfg.matcher;
    EmbeddingModel model;
    const EmbeddingModel* model_ptr = nullptr;
    if (method_needs_model(mc.method)) {
        model = detail::load_model_file(model_path);
        detail::check_model_coverage(model, cases);
        detail::check_model_coverage(model, controls);
        model_ptr = &model;
    }

    Rng match_rng(derive_seed(cfg.seed, 0x3A7C40u));
    const CohortMatchResult result = match_cohort(cases, controls, model_ptr, mc, match_rng);

    std::ostringstream ss;
    write_matches_csv(ss, result.matches);
    detail::write_text_file(out_path, ss.str());
    detail::write_config_sidecar(out_path, cfg);
    log << to_token(mc.method) << " matched " << result.matches.size() << " of " << cases.size()
        << " cases (" << result.skipped.size() << " skipped) against " << controls.size()
        << " controls\n";
    for (std::size_t i = 0; i < result.skipped.size() && i < 5; ++i)
        log << "  skipped " << result.skipped[i].case_id << ": " << result.skipped[i].reason
            << '\n';
}

/// Paired repeated-trial evaluation of the requested methods.
inline void cmd_evaluate(const RunConfig& cfg, const std::string& admissions_path,
                         const std::string& model_path, const std::string& out_path,
                         std::ostream& log) {
    if (cfg.methods.empty()) throw UsageError("no methods requested");
    const auto admissions = detail::load_admissions(admissions_path, cfg, log);
    if (admissions.empty()) throw DataError("no admissions survive the filters");

    bool needs_model = false;
    for (MatchMethod m : cfg.methods) needs_model = needs_model || method_needs_model(m);
    EmbeddingModel model;
    const EmbeddingModel* model_ptr = nullptr;
    if (needs_model) {
        model = detail::load_model_file(model_path);
        detail::check_model_coverage(model, admissions);
        model_ptr = &model;
    }

    ExperimentConfig ec;
    ec.n_iterations = cfg.iterations;
    ec.n_cases = cfg.cohort.n_cases;
    ec.censor_date = cfg.filter.censor_date;
    ec.age_bin_width_years = cfg.matcher.age_bin_width_years;
    ec.with_replacement = cfg.matcher.with_replacement;
    ec.seed = cfg.seed;
    ec.max_pool_retries = cfg.max_pool_retries;
    ec.workers = cfg.workers;

    std::vector<ExperimentReport> reports;
    try {
        reports = run_paired_experiment(admissions, cfg.methods, model_ptr, ec);
    } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
    }

    std::ostringstream ss;
    write_report(ss, reports, config_key_values(cfg), cfg.per_trial);
    detail::write_text_file(out_path, ss.str());
    detail::write_config_sidecar(out_path, cfg);

    for (const ExperimentReport& r : reports)
        log << to_token(r.method) << ": accuracy " << r.accuracy.mean << " (stderr "
            << r.accuracy.stderror << "), ir_error " << r.ir_err.mean << " (stderr "
            << r.ir_err.stderror << "), " << r.trials.size() << " iterations\n";
    log << "wrote " << out_path << '\n';
}

}  // namespace ccmatch::cli

#endif
