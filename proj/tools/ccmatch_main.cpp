// ccmatch command-line tool: synthetic cohorts, code-vector training,
// case-control matching, and repeated-trial evaluation.

#include <functional>
#include <iostream>
#include <memory>
#include <string>

#include <CLI11.hpp>

#include "ccmatch/cli.hpp"

namespace {

using ccmatch::RunConfig;

template <typename T>
struct Bound {
    T value{};
    CLI::Option* opt = nullptr;

    CLI::Option* attach(CLI::App* cmd, const std::string& name, const std::string& desc) {
        opt = cmd->add_option(name, value, desc)->capture_default_str();
        return opt;
    }

    template <typename U>
    void apply(U& target) const {
        if (opt && opt->count()) target = static_cast<U>(value);
    }
};

struct BoundFlag {
    bool value = false;
    CLI::Option* opt = nullptr;

    CLI::Option* attach(CLI::App* cmd, const std::string& name, const std::string& desc) {
        opt = cmd->add_flag(name, value, desc);
        return opt;
    }

    void apply(bool& target) const {
        if (opt && opt->count()) target = value;
    }
};

/// Flags shared by every subcommand. The config file is applied first, then
/// any flag given on the command line wins.
struct CommonArgs {
    std::string config_path;
    Bound<std::uint64_t> seed;
    Bound<int> workers;
    BoundFlag strict;
    CLI::Option* config_opt = nullptr;

    void attach(CLI::App* cmd) {
        const RunConfig defaults;
        config_opt = cmd->add_option("--config", config_path,
                                     "Flat key=value config file applied before flags");
        seed.value = defaults.seed;
        seed.attach(cmd, "--seed", "Global RNG seed");
        workers.value = defaults.workers;
        workers.attach(cmd, "--workers", "Worker threads (1 = fully deterministic)");
        strict.attach(cmd, "--strict", "Treat malformed admission rows as fatal");
    }

    RunConfig resolve() const {
        RunConfig cfg;
        if (config_opt->count()) ccmatch::load_config_file(cfg, config_path);
        seed.apply(cfg.seed);
        workers.apply(cfg.workers);
        strict.apply(cfg.strict);
        return cfg;
    }
};

struct FilterArgs {
    Bound<int> min_code_count;
    Bound<std::string> censor_date;

    void attach(CLI::App* cmd) {
        const RunConfig defaults;
        min_code_count.value = defaults.filter.min_code_count;
        min_code_count.attach(cmd, "--min-code-count",
                              "Drop codes occurring fewer than this many times");
        censor_date.value = defaults.filter.censor_date.to_string();
        censor_date.attach(cmd, "--censor-date", "Study end date (YYYY-MM-DD)");
    }

    void apply(RunConfig& cfg) const {
        min_code_count.apply(cfg.filter.min_code_count);
        if (censor_date.opt->count())
            cfg.filter.censor_date =
                ccmatch::config_detail::parse_date_value("censor_date", censor_date.value);
    }
};

struct SynthArgs {
    CommonArgs common;
    FilterArgs filter;  // echoed for provenance even though synth does not filter
    Bound<int> patients, hospitals, year_min, year_max, vocab, clusters, codes_min, codes_max,
        median_age;
    Bound<double> p_missing, p_other, p_same, p_none, male_fraction, coupling;
    std::string output;

    void attach(CLI::App* cmd) {
        const RunConfig d;
        common.attach(cmd);
        filter.attach(cmd);
        patients.value = d.synth.n_patients;
        patients.attach(cmd, "--patients", "Number of patients (one admission each)");
        hospitals.value = d.synth.n_hospitals;
        hospitals.attach(cmd, "--hospitals", "Number of hospitals");
        year_min.value = d.synth.year_min;
        year_min.attach(cmd, "--year-min", "First admission year");
        year_max.value = d.synth.year_max;
        year_max.attach(cmd, "--year-max", "Last admission year");
        vocab.value = d.synth.vocab_size;
        vocab.attach(cmd, "--vocab-size", "Number of distinct codes");
        clusters.value = d.synth.n_synonym_clusters;
        clusters.attach(cmd, "--clusters", "Number of synonym clusters");
        codes_min.value = d.synth.codes_min;
        codes_min.attach(cmd, "--codes-min", "Minimum codes per admission");
        codes_max.value = d.synth.codes_max;
        codes_max.attach(cmd, "--codes-max", "Maximum codes per admission");
        p_missing.value = d.synth.readmission_marginals[0];
        p_missing.attach(cmd, "--p-missing", "Marginal probability of status `missing`");
        p_other.value = d.synth.readmission_marginals[1];
        p_other.attach(cmd, "--p-other", "Marginal probability of status `other`");
        p_same.value = d.synth.readmission_marginals[2];
        p_same.attach(cmd, "--p-same", "Marginal probability of status `same`");
        p_none.value = d.synth.readmission_marginals[3];
        p_none.attach(cmd, "--p-none", "Marginal probability of status `none`");
        male_fraction.value = d.synth.male_fraction;
        male_fraction.attach(cmd, "--male-fraction", "Fraction of male patients");
        median_age.value = d.synth.median_age_target;
        median_age.attach(cmd, "--median-age", "Target median age");
        coupling.value = d.synth.outcome_coupling;
        coupling.attach(cmd, "--outcome-coupling",
                        "How strongly outcomes follow the leading code clusters (0..1)");
        cmd->add_option("-o,--output", output, "Admissions CSV to write")->required();
    }

    RunConfig resolve() const {
        RunConfig cfg = common.resolve();
        filter.apply(cfg);
        patients.apply(cfg.synth.n_patients);
        hospitals.apply(cfg.synth.n_hospitals);
        year_min.apply(cfg.synth.year_min);
        year_max.apply(cfg.synth.year_max);
        vocab.apply(cfg.synth.vocab_size);
        clusters.apply(cfg.synth.n_synonym_clusters);
        codes_min.apply(cfg.synth.codes_min);
        codes_max.apply(cfg.synth.codes_max);
        p_missing.apply(cfg.synth.readmission_marginals[0]);
        p_other.apply(cfg.synth.readmission_marginals[1]);
        p_same.apply(cfg.synth.readmission_marginals[2]);
        p_none.apply(cfg.synth.readmission_marginals[3]);
        male_fraction.apply(cfg.synth.male_fraction);
        median_age.apply(cfg.synth.median_age_target);
        coupling.apply(cfg.synth.outcome_coupling);
        return cfg;
    }
};

struct TrainArgs {
    CommonArgs common;
    FilterArgs filter;
    Bound<int> dim, window, negatives, epochs;
    Bound<double> learning_rate, min_learning_rate, smoothing;
    std::string admissions, output;

    void attach(CLI::App* cmd) {
        const RunConfig d;
        common.attach(cmd);
        filter.attach(cmd);
        cmd->add_option("admissions", admissions, "Admissions CSV to train on")->required();
        dim.value = d.training.dim;
        dim.attach(cmd, "--dim", "Vector dimensionality");
        window.value = d.training.window;
        window.attach(cmd, "--window", "Context window within an admission");
        negatives.value = d.training.negatives_per_positive;
        negatives.attach(cmd, "--negatives", "Negative samples per positive pair");
        epochs.value = d.training.epochs;
        epochs.attach(cmd, "--epochs", "Training epochs");
        learning_rate.value = d.training.initial_learning_rate;
        learning_rate.attach(cmd, "--learning-rate", "Initial learning rate");
        min_learning_rate.value = d.training.min_learning_rate;
        min_learning_rate.attach(cmd, "--min-learning-rate", "Linear decay endpoint");
        smoothing.value = d.training.unigram_smoothing_exponent;
        smoothing.attach(cmd, "--smoothing-exponent", "Unigram smoothing exponent");
        cmd->add_option("-o,--output", output, "Model file to write (plus .out sibling)")
            ->required();
    }

    RunConfig resolve() const {
        RunConfig cfg = common.resolve();
        filter.apply(cfg);
        dim.apply(cfg.training.dim);
        window.apply(cfg.training.window);
        negatives.apply(cfg.training.negatives_per_positive);
        epochs.apply(cfg.training.epochs);
        learning_rate.apply(cfg.training.initial_learning_rate);
        min_learning_rate.apply(cfg.training.min_learning_rate);
        smoothing.apply(cfg.training.unigram_smoothing_exponent);
        return cfg;
    }
};

struct MatchArgs {
    CommonArgs common;
    FilterArgs filter;
    Bound<std::string> method, hospital;
    Bound<int> year, n_cases, age_bin_width;
    BoundFlag with_replacement;
    std::string admissions, model, output;

    void attach(CLI::App* cmd) {
        const RunConfig d;
        common.attach(cmd);
        filter.attach(cmd);
        cmd->add_option("admissions", admissions, "Admissions CSV")->required();
        cmd->add_option("--model", model, "Embedding model file (required for WVM and CSM)");
        method.value = std::string(ccmatch::to_token(d.matcher.method));
        method.attach(cmd, "-m,--method", "Matching method: WVM, PCM, HDM or CSM");
        hospital.attach(cmd, "--hospital", "Fix the cohort hospital (default: sampled)");
        year.attach(cmd, "--year", "Fix the cohort admission year (default: sampled)");
        n_cases.value = d.cohort.n_cases;
        n_cases.attach(cmd, "--n-cases", "Cases per cohort");
        age_bin_width.value = d.matcher.age_bin_width_years;
        age_bin_width.attach(cmd, "--age-bin-width", "Age group width in years (85+ pooled)");
        with_replacement.attach(cmd, "--with-replacement",
                                "Allow one control to match several cases");
        cmd->add_option("-o,--output", output, "Match CSV to write")->required();
    }

    RunConfig resolve() const {
        RunConfig cfg = common.resolve();
        filter.apply(cfg);
        if (method.opt->count()) cfg.matcher.method = ccmatch::parse_method(method.value);
        hospital.apply(cfg.cohort.hospital);
        year.apply(cfg.cohort.year);
        n_cases.apply(cfg.cohort.n_cases);
        age_bin_width.apply(cfg.matcher.age_bin_width_years);
        with_replacement.apply(cfg.matcher.with_replacement);
        return cfg;
    }
};

struct EvaluateArgs {
    CommonArgs common;
    FilterArgs filter;
    Bound<std::string> methods;
    Bound<int> iterations, n_cases, age_bin_width, max_pool_retries;
    BoundFlag with_replacement, per_trial;
    std::string admissions, model, output;

    void attach(CLI::App* cmd) {
        const RunConfig d;
        common.attach(cmd);
        filter.attach(cmd);
        cmd->add_option("admissions", admissions, "Admissions CSV")->required();
        cmd->add_option("--model", model, "Embedding model file (required for WVM and CSM)");
        methods.value = ccmatch::format_method_list(d.methods);
        methods.attach(cmd, "-m,--methods", "Comma-separated methods to compare");
        iterations.value = d.iterations;
        iterations.attach(cmd, "-n,--iterations", "Number of cohort iterations");
        n_cases.value = d.cohort.n_cases;
        n_cases.attach(cmd, "--n-cases", "Cases per cohort");
        age_bin_width.value = d.matcher.age_bin_width_years;
        age_bin_width.attach(cmd, "--age-bin-width", "Age group width in years (85+ pooled)");
        max_pool_retries.value = d.max_pool_retries;
        max_pool_retries.attach(cmd, "--max-pool-retries",
                                "(hospital, year) resamples before aborting an iteration");
        with_replacement.attach(cmd, "--with-replacement",
                                "Allow one control to match several cases");
        per_trial.attach(cmd, "--per-trial", "Emit the per-iteration table in the report");
        cmd->add_option("-o,--output", output, "Report file to write")->required();
    }

    RunConfig resolve() const {
        RunConfig cfg = common.resolve();
        filter.apply(cfg);
        if (methods.opt->count()) cfg.methods = ccmatch::parse_method_list(methods.value);
        iterations.apply(cfg.iterations);
        n_cases.apply(cfg.cohort.n_cases);
        age_bin_width.apply(cfg.matcher.age_bin_width_years);
        max_pool_retries.apply(cfg.max_pool_retries);
        with_replacement.apply(cfg.matcher.with_replacement);
        per_trial.apply(cfg.per_trial);
        return cfg;
    }
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Case-control matching over diagnosis-code sequences"};
    app.require_subcommand(1);

    auto synth_args = std::make_shared<SynthArgs>();
    CLI::App* synth = app.add_subcommand("synth", "Generate a synthetic admissions CSV");
    synth_args->attach(synth);
    synth->callback([synth_args] {
        ccmatch::cli::cmd_synth(synth_args->resolve(), synth_args->output, std::cout);
    });

    auto train_args = std::make_shared<TrainArgs>();
    CLI::App* train = app.add_subcommand("train", "Train code vectors from admissions");
    train_args->attach(train);
    train->callback([train_args] {
        ccmatch::cli::cmd_train(train_args->resolve(), train_args->admissions, train_args->output,
                                std::cout);
    });

    auto match_args = std::make_shared<MatchArgs>();
    CLI::App* match = app.add_subcommand("match", "Match one cohort and dump the pairing");
    match_args->attach(match);
    match->callback([match_args] {
        ccmatch::cli::cmd_match(match_args->resolve(), match_args->admissions, match_args->model,
                                match_args->output, std::cout);
    });

    auto eval_args = std::make_shared<EvaluateArgs>();
    CLI::App* evaluate = app.add_subcommand("evaluate", "Repeated-trial method comparison");
    eval_args->attach(evaluate);
    evaluate->callback([eval_args] {
        ccmatch::cli::cmd_evaluate(eval_args->resolve(), eval_args->admissions, eval_args->model,
                                   eval_args->output, std::cout);
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? ccmatch::cli::kExitOk : ccmatch::cli::kExitUsage;
    } catch (const ccmatch::cli::UsageError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return ccmatch::cli::kExitUsage;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << '\n';
        return ccmatch::cli::kExitUsage;
    } catch (const ccmatch::cli::DataError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return ccmatch::cli::kExitData;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << '\n';
        return ccmatch::cli::kExitInternal;
    }
    return ccmatch::cli::kExitOk;
}
