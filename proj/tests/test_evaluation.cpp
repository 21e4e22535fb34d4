#include <doctest.h>

#include <algorithm>
#include <sstream>
#include <string>
#include <vector>

#include "ccmatch/evaluation.hpp"

using namespace ccmatch;

namespace {

std::vector<ReadmissionStatus> statuses(std::initializer_list<int> xs) {
    std::vector<ReadmissionStatus> out;
    for (int x : xs) out.push_back(static_cast<ReadmissionStatus>(x));
    return out;
}

Admission twin_admission(std::string id, std::string patient) {
    Admission a;
    a.admission_id = id;
    a.patient_id = patient;
    a.hospital = "H01";
    a.admission_year = 2005;
    a.discharge_date = Date{2005, 6, 1};
    a.gender = Gender::male;
    a.age_years = 70;
    a.codes = {CodeId("AAA"), CodeId("BBB")};
    a.readmission = ReadmissionStatus::readmitted_same_facility;
    a.death_date = Date{2006, 6, 1};
    return a;
}

}  // namespace

TEST_CASE("readmission accuracy on the reference lists") {
    const auto same = statuses({0, 1, 2, 3, 2});
    CHECK(readmission_accuracy(same, same) == 1.0);
    const auto a = statuses({0, 1, 2, 3});
    const auto b = statuses({1, 2, 3, 0});
    CHECK(readmission_accuracy(a, b) == 0.0);
}

TEST_CASE("readmission accuracy equals the brute-force agreement count") {
    Rng rng(64);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = 1 + rng.uniform_index(300);
        std::vector<ReadmissionStatus> cases, controls;
        for (std::size_t i = 0; i < n; ++i) {
            cases.push_back(static_cast<ReadmissionStatus>(rng.uniform_index(4)));
            controls.push_back(static_cast<ReadmissionStatus>(rng.uniform_index(4)));
        }
        long agree = 0;
        for (std::size_t i = 0; i < n; ++i)
            if (cases[i] == controls[i]) ++agree;
        CHECK(readmission_accuracy(cases, controls) ==
              static_cast<double>(agree) / static_cast<double>(n));
    }
}

TEST_CASE("150 agreements out of 200 gives 0.75") {
    std::vector<ReadmissionStatus> cases(200, ReadmissionStatus::not_readmitted);
    std::vector<ReadmissionStatus> controls(200, ReadmissionStatus::not_readmitted);
    for (int i = 0; i < 50; ++i) controls[static_cast<std::size_t>(i)] = ReadmissionStatus::missing;
    CHECK(readmission_accuracy(cases, controls) == 0.75);
}

TEST_CASE("mismatched or empty status lists are rejected") {
    const auto a = statuses({0, 1});
    const auto b = statuses({0});
    CHECK_THROWS_AS(readmission_accuracy(a, b), std::invalid_argument);
    const std::vector<ReadmissionStatus> empty;
    CHECK_THROWS_AS(readmission_accuracy(empty, empty), std::invalid_argument);
}

TEST_CASE("accuracy is one minus the normalized hamming distance of status lists") {
    Rng rng(65);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t n = 1 + rng.uniform_index(100);
        std::vector<ReadmissionStatus> cases, controls;
        std::vector<CodeId> case_codes, control_codes;
        for (std::size_t i = 0; i < n; ++i) {
            cases.push_back(static_cast<ReadmissionStatus>(rng.uniform_index(4)));
            controls.push_back(static_cast<ReadmissionStatus>(rng.uniform_index(4)));
            case_codes.emplace_back("S" + std::to_string(static_cast<int>(cases.back())));
            control_codes.emplace_back("S" + std::to_string(static_cast<int>(controls.back())));
        }
        const double acc = readmission_accuracy(cases, controls);
        const double mismatch_frac =
            static_cast<double>(hamming_distance(case_codes, control_codes)) /
            static_cast<double>(n);
        CHECK(acc == doctest::Approx(1.0 - mismatch_frac).epsilon(1e-15));
    }
}

TEST_CASE("incidence rate reproduces the two-record worked example exactly") {
    const std::vector<IncidenceRecord> records = {
        {Date{2005, 7, 11}, Date{2008, 5, 12}},
        {Date{2005, 10, 27}, std::nullopt},
    };
    const auto detail = incidence_rate_detail(records, Date{2008, 12, 31});
    CHECK(detail.deaths == 1);
    CHECK(detail.person_days == 1036 + 1161);
    CHECK(detail.person_days == 2197);
    CHECK(detail.rate == 1.0 / 2197.0);
    CHECK(incidence_rate(records, Date{2008, 12, 31}) == 1.0 / 2197.0);
}

TEST_CASE("no deaths means a zero rate") {
    const std::vector<IncidenceRecord> records = {
        {Date{2005, 1, 1}, std::nullopt},
        {Date{2006, 2, 2}, std::nullopt},
    };
    CHECK(incidence_rate(records, Date{2008, 12, 31}) == 0.0);
}

TEST_CASE("zero person-time is an error") {
    const std::vector<IncidenceRecord> records = {{Date{2005, 1, 1}, Date{2005, 1, 1}}};
    CHECK_THROWS_AS(incidence_rate(records, Date{2008, 12, 31}), std::domain_error);
}

TEST_CASE("precondition violations are rejected") {
    const std::vector<IncidenceRecord> late_discharge = {{Date{2009, 1, 1}, std::nullopt}};
    CHECK_THROWS_AS(incidence_rate(late_discharge, Date{2008, 12, 31}), std::invalid_argument);
    const std::vector<IncidenceRecord> backwards = {{Date{2005, 1, 2}, Date{2005, 1, 1}}};
    CHECK_THROWS_AS(incidence_rate(backwards, Date{2008, 12, 31}), std::invalid_argument);
}

TEST_CASE("a death beyond the censor date is treated as alive and flagged") {
    const std::vector<IncidenceRecord> records = {
        {Date{2008, 1, 1}, Date{2009, 6, 1}},  // dies after the study end
        {Date{2008, 1, 1}, std::nullopt},
    };
    const auto detail = incidence_rate_detail(records, Date{2008, 12, 31});
    CHECK(detail.deaths == 0);
    CHECK(detail.deaths_after_censor == 1);
    CHECK(detail.person_days == 2 * days_between(Date{2008, 1, 1}, Date{2008, 12, 31}));
    CHECK(detail.rate == 0.0);
}

TEST_CASE("incidence rate ignores record order") {
    std::vector<IncidenceRecord> records = {
        {Date{2005, 7, 11}, Date{2008, 5, 12}},
        {Date{2005, 10, 27}, std::nullopt},
        {Date{2006, 3, 3}, Date{2006, 9, 9}},
    };
    const double base = incidence_rate(records, Date{2008, 12, 31});
    std::reverse(records.begin(), records.end());
    CHECK(incidence_rate(records, Date{2008, 12, 31}) == base);
}

TEST_CASE("adding a no-death record strictly lowers a positive rate") {
    std::vector<IncidenceRecord> records = {{Date{2005, 7, 11}, Date{2008, 5, 12}}};
    const double before = incidence_rate(records, Date{2008, 12, 31});
    records.push_back({Date{2006, 1, 1}, std::nullopt});
    const double after = incidence_rate(records, Date{2008, 12, 31});
    CHECK(before > 0.0);
    CHECK(after < before);
}

TEST_CASE("ir_error is the absolute difference and is symmetric") {
    CHECK(ir_error(0.5, 0.3) == doctest::Approx(0.2).epsilon(1e-15));
    CHECK(ir_error(0.125, 0.125) == 0.0);
    Rng rng(2);
    for (int i = 0; i < 100; ++i) {
        const double a = rng.uniform_real(0.0, 1.0), b = rng.uniform_real(0.0, 1.0);
        CHECK(ir_error(a, b) == ir_error(b, a));
    }
}

TEST_CASE("a one-iteration experiment is degenerate but well-defined") {
    std::vector<Admission> data;
    for (int i = 0; i < 80; ++i)
        data.push_back(twin_admission("A" + std::to_string(i), "P" + std::to_string(i)));
    ExperimentConfig cfg;
    cfg.n_iterations = 1;
    cfg.n_cases = 20;
    cfg.seed = 6;
    const auto report = run_experiment(data, MatchMethod::hdm, nullptr, cfg);
    REQUIRE(report.trials.size() == 1);
    CHECK(report.accuracy.mean == report.trials[0].readmission_accuracy);
    CHECK(report.accuracy.degenerate);
    CHECK(report.accuracy.stddev == 0.0);
    CHECK(report.ir_err.degenerate);
}

TEST_CASE("identical twins give perfect accuracy and zero ir error") {
    std::vector<Admission> data;
    for (int i = 0; i < 100; ++i)
        data.push_back(twin_admission("A" + std::to_string(i), "P" + std::to_string(i)));
    const auto model = EmbeddingModel::from_vectors(
        2, {{CodeId("AAA"), {1.0, 0.0}}, {CodeId("BBB"), {0.0, 1.0}}});
    ExperimentConfig cfg;
    cfg.n_iterations = 5;
    cfg.n_cases = 30;
    cfg.seed = 44;
    const auto report = run_experiment(data, MatchMethod::wvm, &model, cfg);
    REQUIRE(report.trials.size() == 5);
    for (const auto& t : report.trials) {
        CHECK(t.readmission_accuracy == 1.0);
        CHECK(t.ir_error == 0.0);
        CHECK(t.n_matched == 30);
        CHECK(t.n_skipped == 0);
    }
    CHECK(report.accuracy.mean == 1.0);
    CHECK(report.ir_err.mean == 0.0);
}

TEST_CASE("report means equal the arithmetic mean of the trials") {
    SynthConfig synth_cfg;
    synth_cfg.n_patients = 3000;
    synth_cfg.n_hospitals = 1;
    synth_cfg.year_min = synth_cfg.year_max = 2005;
    synth_cfg.seed = 10;
    const auto data = generate_synthetic_cohort(synth_cfg);
    ExperimentConfig cfg;
    cfg.n_iterations = 8;
    cfg.n_cases = 50;
    cfg.seed = 3;
    const auto report = run_experiment(data, MatchMethod::hdm, nullptr, cfg);
    REQUIRE(report.trials.size() == 8);
    double total = 0.0;
    for (const auto& t : report.trials) total += t.readmission_accuracy;
    CHECK(report.accuracy.mean == doctest::Approx(total / 8.0).epsilon(1e-12));
    double ssq = 0.0;
    for (const auto& t : report.trials) {
        const double d = t.readmission_accuracy - report.accuracy.mean;
        ssq += d * d;
    }
    CHECK(report.accuracy.stddev == doctest::Approx(std::sqrt(ssq / 7.0)).epsilon(1e-12));
    CHECK(report.accuracy.stderror ==
          doctest::Approx(report.accuracy.stddev / std::sqrt(8.0)).epsilon(1e-12));
}

TEST_CASE("paired evaluation shares the cohort draw across methods") {
    SynthConfig synth_cfg;
    synth_cfg.n_patients = 4000;
    synth_cfg.n_hospitals = 2;
    synth_cfg.seed = 21;
    const auto data = generate_synthetic_cohort(synth_cfg);
    ExperimentConfig cfg;
    cfg.n_iterations = 4;
    cfg.n_cases = 40;
    cfg.seed = 77;
    const MatchMethod methods[] = {MatchMethod::pcm, MatchMethod::hdm};
    const auto reports = run_paired_experiment(data, methods, nullptr, cfg);
    REQUIRE(reports.size() == 2);
    REQUIRE(reports[0].trials.size() == reports[1].trials.size());
    for (std::size_t i = 0; i < reports[0].trials.size(); ++i) {
        CHECK(reports[0].trials[i].hospital == reports[1].trials[i].hospital);
        CHECK(reports[0].trials[i].year == reports[1].trials[i].year);
        CHECK(reports[0].trials[i].iteration == reports[1].trials[i].iteration);
    }
}

TEST_CASE("experiments are reproducible and worker-count independent") {
    SynthConfig synth_cfg;
    synth_cfg.n_patients = 4000;
    synth_cfg.seed = 2;
    const auto data = generate_synthetic_cohort(synth_cfg);
    ExperimentConfig cfg;
    cfg.n_iterations = 6;
    cfg.n_cases = 30;
    cfg.seed = 15;
    const MatchMethod methods[] = {MatchMethod::pcm, MatchMethod::hdm};

    auto render = [&](int workers) {
        ExperimentConfig c = cfg;
        c.workers = workers;
        const auto reports = run_paired_experiment(data, methods, nullptr, c);
        std::ostringstream out;
        write_report(out, reports, {}, true);
        return out.str();
    };
    const auto base = render(1);
    CHECK(base == render(1));
    CHECK(base == render(3));
}

TEST_CASE("evaluation without a model rejects model-backed methods") {
    std::vector<Admission> data = {twin_admission("A1", "P1")};
    ExperimentConfig cfg;
    const MatchMethod methods[] = {MatchMethod::wvm};
    CHECK_THROWS_AS(run_paired_experiment(data, methods, nullptr, cfg), std::invalid_argument);
}

TEST_CASE("pool-starved iterations are aborted with a reason") {
    std::vector<Admission> data;
    for (int i = 0; i < 30; ++i)
        data.push_back(twin_admission("A" + std::to_string(i), "P" + std::to_string(i)));
    ExperimentConfig cfg;
    cfg.n_iterations = 3;
    cfg.n_cases = 200;  // far more than the single pool can supply
    cfg.max_pool_retries = 4;
    const auto report = run_experiment(data, MatchMethod::hdm, nullptr, cfg);
    CHECK(report.trials.empty());
    REQUIRE(report.aborted.size() == 3);
    CHECK(report.aborted[0].reason.find("attempts") != std::string::npos);
    CHECK(report.accuracy.degenerate);
}

TEST_CASE("the report contains stanzas, a summary table and optional trials") {
    std::vector<Admission> data;
    for (int i = 0; i < 80; ++i)
        data.push_back(twin_admission("A" + std::to_string(i), "P" + std::to_string(i)));
    ExperimentConfig cfg;
    cfg.n_iterations = 2;
    cfg.n_cases = 10;
    const MatchMethod methods[] = {MatchMethod::pcm, MatchMethod::hdm};
    const auto reports = run_paired_experiment(data, methods, nullptr, cfg);

    std::ostringstream out;
    const std::vector<std::pair<std::string, std::string>> echo = {{"seed", "1"}};
    write_report(out, reports, echo, true);
    const std::string text = out.str();
    CHECK(text.find("# config\nseed=1\n") != std::string::npos);
    CHECK(text.find("== PCM ==") != std::string::npos);
    CHECK(text.find("== HDM ==") != std::string::npos);
    CHECK(text.find("method,metric,mean,stddev,stderr,n_iterations") != std::string::npos);
    CHECK(text.find("PCM,accuracy,") != std::string::npos);
    CHECK(text.find("HDM,ir_error,") != std::string::npos);
    CHECK(text.find("# trials") != std::string::npos);
    CHECK(text.find("method,iteration,hospital,year,n_matched,n_skipped,accuracy,ir_case,"
                    "ir_control,ir_error") != std::string::npos);

    std::ostringstream no_trials;
    write_report(no_trials, reports, echo, false);
    CHECK(no_trials.str().find("# trials") == std::string::npos);
}
