#ifndef CCMATCH_CONFIG_HPP
#define CCMATCH_CONFIG_HPP

#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "ccmatch/cohort.hpp"
#include "ccmatch/data_model.hpp"
#include "ccmatch/embedding.hpp"
#include "ccmatch/evaluation.hpp"
#include "ccmatch/matching.hpp"

namespace ccmatch {

/// Merged view of every tunable. Sources: built-in defaults, then a flat
/// key=value config file, then command-line flags; later sources win.
struct RunConfig {
    std::uint64_t seed = 1;
    int workers = 1;
    bool strict = false;  // promote row-level parse errors to failure
    DatasetFilterConfig filter;
    TrainingConfig training;
    SynthConfig synth;
    CohortSpec cohort;      // n_cases; optional fixed (hospital, year) for `match`
    MatcherConfig matcher;  // method used by `match`
    std::vector<MatchMethod> methods = {MatchMethod::wvm, MatchMethod::pcm, MatchMethod::hdm,
                                        MatchMethod::csm};
    int iterations = 150;
    bool per_trial = false;
    int max_pool_retries = 25;
};

namespace config_detail {

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

inline long long parse_int(std::string_view key, std::string_view value) {
    const std::string v(value);
    char* end = nullptr;
    const long long out = std::strtoll(v.c_str(), &end, 10);
    if (v.empty() || end != v.c_str() + v.size())
        throw std::invalid_argument("config key " + std::string(key) + ": not an integer: \"" +
                                    v + "\"");
    return out;
}

inline std::uint64_t parse_u64(std::string_view key, std::string_view value) {
    const std::string v(value);
    char* end = nullptr;
    const unsigned long long out = std::strtoull(v.c_str(), &end, 10);
    if (v.empty() || end != v.c_str() + v.size())
        throw std::invalid_argument("config key " + std::string(key) +
                                    ": not an unsigned integer: \"" + v + "\"");
    return out;
}

inline double parse_double(std::string_view key, std::string_view value) {
    const std::string v(value);
    char* end = nullptr;
    const double out = std::strtod(v.c_str(), &end);
    if (v.empty() || end != v.c_str() + v.size() || !std::isfinite(out))
        throw std::invalid_argument("config key " + std::string(key) + ": not a finite number: \"" +
                                    v + "\"");
    return out;
}

inline bool parse_bool(std::string_view key, std::string_view value) {
    if (value == "true" || value == "1") return true;
    if (value == "false" || value == "0") return false;
    throw std::invalid_argument("config key " + std::string(key) + ": expected true/false, got \"" +
                                std::string(value) + "\"");
}

inline Date parse_date_value(std::string_view key, std::string_view value) {
    auto d = Date::parse(value);
    if (!d)
        throw std::invalid_argument("config key " + std::string(key) + ": malformed date \"" +
                                    std::string(value) + "\"");
    return *d;
}

inline std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace config_detail

inline MatchMethod parse_method(std::string_view token) {
    auto m = method_from_token(config_detail::trim(token));
    if (!m)
        throw std::invalid_argument("unknown method \"" + std::string(config_detail::trim(token)) +
                                    "\"; valid methods: WVM, PCM, HDM, CSM");
    return *m;
}

inline std::vector<MatchMethod> parse_method_list(std::string_view value) {
    std::vector<MatchMethod> methods;
    std::size_t start = 0;
    while (start <= value.size()) {
        const std::size_t pos = value.find(',', start);
        const std::string_view tok =
            value.substr(start, pos == std::string_view::npos ? value.size() - start : pos - start);
        if (!config_detail::trim(tok).empty()) methods.push_back(parse_method(tok));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    if (methods.empty()) throw std::invalid_argument("empty method list");
    return methods;
}

inline std::string format_method_list(const std::vector<MatchMethod>& methods) {
    std::string out;
    for (std::size_t i = 0; i < methods.size(); ++i) {
        if (i) out.push_back(',');
        out += to_token(methods[i]);
    }
    return out;
}

/// Sets one configuration key. Unknown keys and unparsable values throw.
inline void apply_config_key(RunConfig& cfg, std::string_view key, std::string_view value) {
    using namespace config_detail;
    const auto as_int = [&] { return static_cast<int>(parse_int(key, value)); };
    const auto as_double = [&] { return parse_double(key, value); };

    if (key == "seed") cfg.seed = parse_u64(key, value);
    else if (key == "workers") cfg.workers = as_int();
    else if (key == "strict") cfg.strict = parse_bool(key, value);
    else if (key == "min_code_count") cfg.filter.min_code_count = as_int();
    else if (key == "censor_date") cfg.filter.censor_date = parse_date_value(key, value);
    else if (key == "dim") cfg.training.dim = as_int();
    else if (key == "window") cfg.training.window = as_int();
    else if (key == "negatives") cfg.training.negatives_per_positive = as_int();
    else if (key == "epochs") cfg.training.epochs = as_int();
    else if (key == "learning_rate") cfg.training.initial_learning_rate = as_double();
    else if (key == "min_learning_rate") cfg.training.min_learning_rate = as_double();
    else if (key == "smoothing_exponent") cfg.training.unigram_smoothing_exponent = as_double();
    else if (key == "n_patients") cfg.synth.n_patients = as_int();
    else if (key == "n_hospitals") cfg.synth.n_hospitals = as_int();
    else if (key == "year_min") cfg.synth.year_min = as_int();
    else if (key == "year_max") cfg.synth.year_max = as_int();
    else if (key == "vocab_size") cfg.synth.vocab_size = as_int();
    else if (key == "n_synonym_clusters") cfg.synth.n_synonym_clusters = as_int();
    else if (key == "codes_min") cfg.synth.codes_min = as_int();
    else if (key == "codes_max") cfg.synth.codes_max = as_int();
    else if (key == "p_readmit_missing") cfg.synth.readmission_marginals[0] = as_double();
    else if (key == "p_readmit_other") cfg.synth.readmission_marginals[1] = as_double();
    else if (key == "p_readmit_same") cfg.synth.readmission_marginals[2] = as_double();
    else if (key == "p_readmit_none") cfg.synth.readmission_marginals[3] = as_double();
    else if (key == "male_fraction") cfg.synth.male_fraction = as_double();
    else if (key == "median_age") cfg.synth.median_age_target = as_int();
    else if (key == "outcome_coupling") cfg.synth.outcome_coupling = as_double();
    else if (key == "n_cases") cfg.cohort.n_cases = as_int();
    else if (key == "hospital") cfg.cohort.hospital = std::string(value);
    else if (key == "year") cfg.cohort.year = as_int();
    else if (key == "method") cfg.matcher.method = parse_method(value);
    else if (key == "age_bin_width") cfg.matcher.age_bin_width_years = as_int();
    else if (key == "with_replacement") cfg.matcher.with_replacement = parse_bool(key, value);
    else if (key == "methods") cfg.methods = parse_method_list(value);
    else if (key == "iterations") cfg.iterations = as_int();
    else if (key == "per_trial") cfg.per_trial = parse_bool(key, value);
    else if (key == "max_pool_retries") cfg.max_pool_retries = as_int();
    else throw std::invalid_argument("unknown config key \"" + std::string(key) + "\"");
}

/// The full effective configuration in canonical key order. Echoing this
/// into an output and loading it back reproduces the run.
inline std::vector<std::pair<std::string, std::string>> config_key_values(const RunConfig& cfg) {
    using namespace config_detail;
    std::vector<std::pair<std::string, std::string>> kv;
    auto add = [&](std::string k, std::string v) { kv.emplace_back(std::move(k), std::move(v)); };
    add("seed", std::to_string(cfg.seed));
    add("workers", std::to_string(cfg.workers));
    add("strict", cfg.strict ? "true" : "false");
    add("min_code_count", std::to_string(cfg.filter.min_code_count));
    add("censor_date", cfg.filter.censor_date.to_string());
    add("dim", std::to_string(cfg.training.dim));
    add("window", std::to_string(cfg.training.window));
    add("negatives", std::to_string(cfg.training.negatives_per_positive));
    add("epochs", std::to_string(cfg.training.epochs));
    add("learning_rate", fmt_double(cfg.training.initial_learning_rate));
    add("min_learning_rate", fmt_double(cfg.training.min_learning_rate));
    add("smoothing_exponent", fmt_double(cfg.training.unigram_smoothing_exponent));
    add("n_patients", std::to_string(cfg.synth.n_patients));
    add("n_hospitals", std::to_string(cfg.synth.n_hospitals));
    add("year_min", std::to_string(cfg.synth.year_min));
    add("year_max", std::to_string(cfg.synth.year_max));
    add("vocab_size", std::to_string(cfg.synth.vocab_size));
    add("n_synonym_clusters", std::to_string(cfg.synth.n_synonym_clusters));
    add("codes_min", std::to_string(cfg.synth.codes_min));
    add("codes_max", std::to_string(cfg.synth.codes_max));
    add("p_readmit_missing", fmt_double(cfg.synth.readmission_marginals[0]));
    add("p_readmit_other", fmt_double(cfg.synth.readmission_marginals[1]));
    add("p_readmit_same", fmt_double(cfg.synth.readmission_marginals[2]));
    add("p_readmit_none", fmt_double(cfg.synth.readmission_marginals[3]));
    add("male_fraction", fmt_double(cfg.synth.male_fraction));
    add("median_age", std::to_string(cfg.synth.median_age_target));
    add("outcome_coupling", fmt_double(cfg.synth.outcome_coupling));
    add("n_cases", std::to_string(cfg.cohort.n_cases));
    add("hospital", cfg.cohort.hospital);
    add("year", std::to_string(cfg.cohort.year));
    add("method", std::string(to_token(cfg.matcher.method)));
    add("age_bin_width", std::to_string(cfg.matcher.age_bin_width_years));
    add("with_replacement", cfg.matcher.with_replacement ? "true" : "false");
    add("methods", format_method_list(cfg.methods));
    add("iterations", std::to_string(cfg.iterations));
    add("per_trial", cfg.per_trial ? "true" : "false");
    add("max_pool_retries", std::to_string(cfg.max_pool_retries));
    return kv;
}

inline void load_config_stream(RunConfig& cfg, std::istream& in, const std::string& origin) {
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string_view stripped = config_detail::trim(line);
        if (stripped.empty() || stripped.front() == '#') continue;
        const std::size_t eq = stripped.find('=');
        if (eq == std::string_view::npos)
            throw std::invalid_argument(origin + " line " + std::to_string(line_no) +
                                        ": expected key=value");
        try {
            apply_config_key(cfg, config_detail::trim(stripped.substr(0, eq)),
                             config_detail::trim(stripped.substr(eq + 1)));
        } catch (const std::invalid_argument& e) {
            throw std::invalid_argument(origin + " line " + std::to_string(line_no) + ": " +
                                        e.what());
        }
    }
}

inline void load_config_file(RunConfig& cfg, const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open config file: " + path);
    load_config_stream(cfg, in, path);
}

inline void write_config_kv(std::ostream& out, const RunConfig& cfg) {
    for (const auto& [k, v] : config_key_values(cfg)) out << k << '=' << v << '\n';
}

}  // namespace ccmatch

#endif
