#ifndef CCMATCH_EMBEDDING_HPP
#define CCMATCH_EMBEDDING_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <unordered_map>
#include <utility>
#include <vector>

#include "ccmatch/data_model.hpp"
#include "ccmatch/rng.hpp"

namespace ccmatch {

struct TrainingConfig {
    int dim = 100;
    int window = 5;
    int negatives_per_positive = 5;
    int epochs = 5;
    double initial_learning_rate = 0.025;
    double min_learning_rate = 1e-4;  // linear decay endpoint
    double unigram_smoothing_exponent = 0.75;
    std::uint64_t seed = 1;
    int workers = 1;  // 1 = deterministic; >1 = lock-free shared updates
};

struct TrainingPair {
    CodeId center;
    CodeId context;
    friend bool operator==(const TrainingPair&, const TrainingPair&) = default;
};

/// Emits (codes[p], codes[q]) for every q != p with |p-q| <= window, admission
/// by admission. Pairs never cross admission boundaries.
inline std::vector<TrainingPair> build_training_pairs(std::span<const Admission> admissions,
                                                      int window) {
    if (window < 1) throw std::invalid_argument("window must be >= 1");
    std::vector<TrainingPair> pairs;
    for (const Admission& a : admissions) {
        const long n = static_cast<long>(a.codes.size());
        for (long p = 0; p < n; ++p) {
            const long lo = std::max(0L, p - window);
            const long hi = std::min(n - 1, p + window);
            for (long q = lo; q <= hi; ++q) {
                if (q == p) continue;
                pairs.push_back({a.codes[p], a.codes[q]});
            }
        }
    }
    return pairs;
}

inline double sigmoid(double x) {
    if (x >= 0) {
        const double e = std::exp(-x);
        return 1.0 / (1.0 + e);
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

/// log(sigmoid(x)) without overflow for large |x|.
inline double log_sigmoid(double x) {
    if (x >= 0) return -std::log1p(std::exp(-x));
    return x - std::log1p(std::exp(x));
}

struct SgnsGradients {
    double loss = 0.0;
    std::vector<double> center;
    std::vector<double> context;
    std::vector<std::vector<double>> negatives;
};

/// Loss and exact analytic gradients of the negative-sampling objective
///   loss = -log s(c.x) - sum_k log s(-c.n_k)
/// with respect to every supplied vector.
inline SgnsGradients sgns_loss_and_gradient(std::span<const double> center_vec,
                                            std::span<const double> context_vec,
                                            const std::vector<std::vector<double>>& negative_vecs) {
    const std::size_t dim = center_vec.size();
    if (context_vec.size() != dim) throw std::invalid_argument("context vector length mismatch");
    for (const auto& n : negative_vecs)
        if (n.size() != dim) throw std::invalid_argument("negative vector length mismatch");
    auto check_finite = [](std::span<const double> v) {
        for (double x : v)
            if (!std::isfinite(x)) throw std::invalid_argument("non-finite vector entry");
    };
    check_finite(center_vec);
    check_finite(context_vec);
    for (const auto& n : negative_vecs) check_finite(n);

    SgnsGradients g;
    g.center.assign(dim, 0.0);
    g.context.assign(dim, 0.0);
    g.negatives.assign(negative_vecs.size(), std::vector<double>(dim, 0.0));

    double dot = 0.0;
    for (std::size_t d = 0; d < dim; ++d) dot += center_vec[d] * context_vec[d];
    g.loss = -log_sigmoid(dot);
    const double gpos = sigmoid(dot) - 1.0;
    for (std::size_t d = 0; d < dim; ++d) {
        g.center[d] += gpos * context_vec[d];
        g.context[d] = gpos * center_vec[d];
    }

    for (std::size_t k = 0; k < negative_vecs.size(); ++k) {
        const auto& neg = negative_vecs[k];
        double ndot = 0.0;
        for (std::size_t d = 0; d < dim; ++d) ndot += center_vec[d] * neg[d];
        g.loss += -log_sigmoid(-ndot);
        const double gneg = sigmoid(ndot);
        for (std::size_t d = 0; d < dim; ++d) {
            g.center[d] += gneg * neg[d];
            g.negatives[k][d] = gneg * center_vec[d];
        }
    }
    return g;
}

/// 1 - cos(a, b). Throws on length mismatch or a zero vector.
inline double cosine_distance(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw std::invalid_argument("cosine_distance: length mismatch");
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0) throw std::domain_error("cosine_distance: zero vector");
    return 1.0 - dot / (std::sqrt(na) * std::sqrt(nb));
}

struct VocabEntry {
    CodeId code;
    std::uint64_t count = 0;
};

/// Dense code vectors. Input vectors are the canonical representation used
/// for all distance computations; output vectors are training-side weights.
class EmbeddingModel {
public:
    EmbeddingModel() = default;

    EmbeddingModel(int dim, std::vector<VocabEntry> vocab)
        : dim_(dim), vocab_(std::move(vocab)) {
        if (dim_ < 1) throw std::invalid_argument("embedding dim must be >= 1");
        for (std::size_t i = 0; i < vocab_.size(); ++i) {
            if (vocab_[i].code.empty()) throw std::invalid_argument("empty code in vocabulary");
            if (!index_.emplace(vocab_[i].code, i).second)
                throw std::invalid_argument("duplicate code in vocabulary: " + vocab_[i].code.str());
        }
        input_.assign(vocab_.size() * static_cast<std::size_t>(dim_), 0.0);
        output_.assign(vocab_.size() * static_cast<std::size_t>(dim_), 0.0);
    }

    static EmbeddingModel from_vectors(
        int dim, const std::vector<std::pair<CodeId, std::vector<double>>>& rows) {
        std::vector<VocabEntry> vocab;
        vocab.reserve(rows.size());
        for (const auto& [code, vec] : rows) vocab.push_back({code, 0});
        EmbeddingModel m(dim, std::move(vocab));
        for (std::size_t i = 0; i < rows.size(); ++i) {
            if (rows[i].second.size() != static_cast<std::size_t>(dim))
                throw std::invalid_argument("vector length mismatch for " + rows[i].first.str());
            std::copy(rows[i].second.begin(), rows[i].second.end(), m.mutable_input(i).begin());
        }
        return m;
    }

    int dim() const { return dim_; }
    std::size_t size() const { return vocab_.size(); }
    const std::vector<VocabEntry>& vocab() const { return vocab_; }

    bool contains(const CodeId& code) const { return index_.count(code) != 0; }

    std::size_t index_of(const CodeId& code) const {
        auto it = index_.find(code);
        if (it == index_.end())
            throw std::out_of_range("code not in embedding vocabulary: " + code.str());
        return it->second;
    }

    std::span<const double> input_vector(std::size_t i) const {
        return {input_.data() + i * dim_, static_cast<std::size_t>(dim_)};
    }
    std::span<const double> output_vector(std::size_t i) const {
        return {output_.data() + i * dim_, static_cast<std::size_t>(dim_)};
    }
    std::span<const double> input_vector(const CodeId& code) const {
        return input_vector(index_of(code));
    }
    std::span<const double> output_vector(const CodeId& code) const {
        return output_vector(index_of(code));
    }

    std::span<double> mutable_input(std::size_t i) {
        return {input_.data() + i * dim_, static_cast<std::size_t>(dim_)};
    }
    std::span<double> mutable_output(std::size_t i) {
        return {output_.data() + i * dim_, static_cast<std::size_t>(dim_)};
    }

private:
    int dim_ = 0;
    std::vector<VocabEntry> vocab_;
    std::unordered_map<CodeId, std::size_t> index_;
    std::vector<double> input_;
    std::vector<double> output_;
};

/// Draws vocabulary indices with probability proportional to count^alpha.
class NegativeSampler {
public:
    NegativeSampler(const std::vector<VocabEntry>& vocab, double alpha) {
        cdf_.reserve(vocab.size());
        double total = 0.0;
        for (const VocabEntry& e : vocab) {
            total += std::pow(static_cast<double>(e.count), alpha);
            cdf_.push_back(total);
        }
        if (cdf_.empty() || total <= 0.0)
            throw std::invalid_argument("negative sampler needs a vocabulary with positive counts");
    }

    std::size_t sample(Rng& rng) const {
        const double u = rng.next_double() * cdf_.back();
        auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
        if (it == cdf_.end()) --it;
        return static_cast<std::size_t>(it - cdf_.begin());
    }

private:
    std::vector<double> cdf_;
};

namespace detail {

/// One fused SGD step on (center, context) with presampled negative output
/// rows. Output rows are updated in place, then the center row. Returns the
/// pair loss at the pre-update weights.
inline double sgns_step(std::span<double> center, std::span<double> context,
                        std::span<double* const> negatives, double lr,
                        std::span<double> scratch) {
    const std::size_t dim = center.size();
    for (std::size_t d = 0; d < dim; ++d) scratch[d] = 0.0;

    double dot = 0.0;
    for (std::size_t d = 0; d < dim; ++d) dot += center[d] * context[d];
    double loss = -log_sigmoid(dot);
    const double gpos = sigmoid(dot) - 1.0;
    for (std::size_t d = 0; d < dim; ++d) {
        scratch[d] += gpos * context[d];
        context[d] -= lr * gpos * center[d];
    }

    for (double* neg : negatives) {
        double ndot = 0.0;
        for (std::size_t d = 0; d < dim; ++d) ndot += center[d] * neg[d];
        loss += -log_sigmoid(-ndot);
        const double gneg = sigmoid(ndot);
        for (std::size_t d = 0; d < dim; ++d) {
            scratch[d] += gneg * neg[d];
            neg[d] -= lr * gneg * center[d];
        }
    }

    for (std::size_t d = 0; d < dim; ++d) center[d] -= lr * scratch[d];
    return loss;
}

}  // namespace detail

struct TrainingStats {
    std::size_t vocab_size = 0;
    std::size_t pair_count = 0;
    double final_epoch_mean_loss = 0.0;
};

/// Skip-gram with negative sampling over admission-level contexts. Vocabulary
/// order is first occurrence in the corpus. Single-worker runs are bit
/// reproducible for a fixed seed; multi-worker runs share weights without
/// locks and are only seed-approximate.
inline EmbeddingModel train_skipgram(std::span<const Admission> admissions,
                                     const TrainingConfig& cfg, TrainingStats* stats = nullptr) {
    if (cfg.dim < 1 || cfg.window < 1 || cfg.negatives_per_positive < 1 || cfg.epochs < 0 ||
        cfg.initial_learning_rate <= 0.0 || cfg.min_learning_rate <= 0.0 ||
        cfg.unigram_smoothing_exponent < 0.0 || cfg.workers < 1)
        throw std::invalid_argument("invalid training configuration");

    std::vector<VocabEntry> vocab;
    std::unordered_map<CodeId, std::uint32_t> index;
    for (const Admission& a : admissions) {
        for (const CodeId& c : a.codes) {
            auto [it, inserted] = index.emplace(c, static_cast<std::uint32_t>(vocab.size()));
            if (inserted) vocab.push_back({c, 0});
            ++vocab[it->second].count;
        }
    }
    if (vocab.empty()) throw std::runtime_error("empty training corpus: no codes to embed");

    std::vector<std::pair<std::uint32_t, std::uint32_t>> pairs;
    for (const Admission& a : admissions) {
        const long n = static_cast<long>(a.codes.size());
        for (long p = 0; p < n; ++p) {
            const long lo = std::max(0L, p - static_cast<long>(cfg.window));
            const long hi = std::min(n - 1, p + static_cast<long>(cfg.window));
            for (long q = lo; q <= hi; ++q) {
                if (q == p) continue;
                pairs.emplace_back(index.at(a.codes[p]), index.at(a.codes[q]));
            }
        }
    }

    EmbeddingModel model(cfg.dim, std::move(vocab));
    const std::size_t dim = static_cast<std::size_t>(cfg.dim);

    Rng init_rng(derive_seed(cfg.seed, 0xA11CEu));
    for (std::size_t i = 0; i < model.size(); ++i) {
        auto row = model.mutable_input(i);
        for (std::size_t d = 0; d < dim; ++d)
            row[d] = (init_rng.next_double() - 0.5) / static_cast<double>(cfg.dim);
    }

    if (stats) {
        stats->vocab_size = model.size();
        stats->pair_count = pairs.size();
        stats->final_epoch_mean_loss = 0.0;
    }
    if (pairs.empty() || cfg.epochs == 0) return model;

    NegativeSampler sampler(model.vocab(), cfg.unigram_smoothing_exponent);
    const bool can_sample_negatives = model.size() > 1;

    auto run_range = [&](std::size_t begin, std::size_t end, std::uint64_t seed_salt,
                         double* final_epoch_loss) {
        Rng rng(derive_seed(cfg.seed, seed_salt));
        std::vector<double> scratch(dim);
        std::vector<double*> negatives;
        negatives.reserve(static_cast<std::size_t>(cfg.negatives_per_positive));
        const double total_steps =
            static_cast<double>(end - begin) * static_cast<double>(cfg.epochs);
        double step = 0.0;
        double epoch_loss = 0.0;
        for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
            epoch_loss = 0.0;
            for (std::size_t p = begin; p < end; ++p, step += 1.0) {
                const double progress = step / total_steps;
                const double lr = std::max(
                    cfg.min_learning_rate,
                    cfg.initial_learning_rate +
                        (cfg.min_learning_rate - cfg.initial_learning_rate) * progress);
                const auto [center_idx, context_idx] = pairs[p];
                negatives.clear();
                if (can_sample_negatives) {
                    for (int k = 0; k < cfg.negatives_per_positive; ++k) {
                        const std::size_t n = sampler.sample(rng);
                        if (n == context_idx) continue;  // never use the positive as a negative
                        negatives.push_back(model.mutable_output(n).data());
                    }
                }
                epoch_loss += detail::sgns_step(model.mutable_input(center_idx),
                                                model.mutable_output(context_idx), negatives, lr,
                                                scratch);
            }
        }
        if (final_epoch_loss) *final_epoch_loss = epoch_loss;
    };

    const int workers = std::min<int>(cfg.workers, static_cast<int>(pairs.size()));
    if (workers <= 1) {
        double loss = 0.0;
        run_range(0, pairs.size(), 0x7EA1u, &loss);
        if (stats) stats->final_epoch_mean_loss = loss / static_cast<double>(pairs.size());
    } else {
        std::vector<std::thread> threads;
        std::vector<double> losses(static_cast<std::size_t>(workers), 0.0);
        const std::size_t chunk = (pairs.size() + workers - 1) / workers;
        for (int w = 0; w < workers; ++w) {
            const std::size_t begin = std::min(pairs.size(), chunk * static_cast<std::size_t>(w));
            const std::size_t end = std::min(pairs.size(), begin + chunk);
            threads.emplace_back(run_range, begin, end, 0x7EA1u + 31u * (w + 1),
                                 &losses[static_cast<std::size_t>(w)]);
        }
        for (auto& t : threads) t.join();
        if (stats) {
            double total = 0.0;
            for (double l : losses) total += l;
            stats->final_epoch_mean_loss = total / static_cast<double>(pairs.size());
        }
    }
    return model;
}

namespace detail {

inline void write_vectors(std::ostream& out, const EmbeddingModel& model, bool input_side) {
    out << model.size() << ' ' << model.dim() << '\n';
    char buf[32];
    for (std::size_t i = 0; i < model.size(); ++i) {
        out << model.vocab()[i].code.str();
        auto row = input_side ? model.input_vector(i) : model.output_vector(i);
        for (double x : row) {
            std::snprintf(buf, sizeof buf, "%.17g", x);
            out << ' ' << buf;
        }
        out << '\n';
    }
}

struct VectorFile {
    std::size_t vocab_size = 0;
    int dim = 0;
    std::vector<std::pair<CodeId, std::vector<double>>> rows;
};

inline VectorFile read_vectors(std::istream& in, const char* what) {
    VectorFile file;
    std::string line;
    std::size_t line_no = 0;
    auto fail = [&](const std::string& msg) {
        throw std::runtime_error(std::string(what) + " line " + std::to_string(line_no) + ": " + msg);
    };

    if (!std::getline(in, line)) {
        ++line_no;
        fail("missing header");
    }
    ++line_no;
    {
        long vs = -1, d = -1;
        if (std::sscanf(line.c_str(), "%ld %ld", &vs, &d) != 2 || vs < 0 || d < 1)
            fail("malformed header \"" + line + "\"");
        file.vocab_size = static_cast<std::size_t>(vs);
        file.dim = static_cast<int>(d);
    }

    while (file.rows.size() < file.vocab_size) {
        if (!std::getline(in, line)) {
            ++line_no;
            fail("unexpected end of file, expected " + std::to_string(file.vocab_size) + " rows");
        }
        ++line_no;
        const char* p = line.c_str();
        const char* end = p + line.size();
        const char* sp = p;
        while (sp < end && *sp != ' ') ++sp;
        CodeId code(std::string_view(p, static_cast<std::size_t>(sp - p)));
        if (code.empty()) fail("empty code");
        std::vector<double> vec;
        vec.reserve(static_cast<std::size_t>(file.dim));
        while (sp < end) {
            char* next = nullptr;
            const double v = std::strtod(sp, &next);
            if (next == sp) break;
            if (!std::isfinite(v)) fail("non-finite component for code " + code.str());
            vec.push_back(v);
            sp = next;
        }
        if (vec.size() != static_cast<std::size_t>(file.dim))
            fail("expected " + std::to_string(file.dim) + " components for code " + code.str() +
                 ", got " + std::to_string(vec.size()));
        file.rows.emplace_back(std::move(code), std::move(vec));
    }
    return file;
}

}  // namespace detail

inline void save_model(const EmbeddingModel& model, std::ostream& input_sink,
                       std::ostream& output_sink) {
    detail::write_vectors(input_sink, model, true);
    detail::write_vectors(output_sink, model, false);
}

/// Writes `path` (input vectors) and `path.out` (output vectors).
inline void save_model(const EmbeddingModel& model, const std::string& path) {
    std::ofstream main(path);
    if (!main) throw std::runtime_error("cannot write model file: " + path);
    std::ofstream out(path + ".out");
    if (!out) throw std::runtime_error("cannot write model file: " + path + ".out");
    save_model(model, main, out);
    if (!main.flush() || !out.flush()) throw std::runtime_error("short write saving model " + path);
}

inline EmbeddingModel load_model(std::istream& input_src, std::istream* output_src = nullptr) {
    auto main = detail::read_vectors(input_src, "model");
    std::vector<VocabEntry> vocab;
    vocab.reserve(main.rows.size());
    for (const auto& [code, vec] : main.rows) vocab.push_back({code, 0});
    EmbeddingModel model(main.dim, std::move(vocab));
    for (std::size_t i = 0; i < main.rows.size(); ++i)
        std::copy(main.rows[i].second.begin(), main.rows[i].second.end(),
                  model.mutable_input(i).begin());

    if (output_src) {
        auto out = detail::read_vectors(*output_src, "model output weights");
        if (out.dim != main.dim || out.vocab_size != main.vocab_size)
            throw std::runtime_error("model output weights disagree with main file header");
        for (std::size_t i = 0; i < out.rows.size(); ++i) {
            const std::size_t at = model.index_of(out.rows[i].first);
            std::copy(out.rows[i].second.begin(), out.rows[i].second.end(),
                      model.mutable_output(at).begin());
        }
    }
    return model;
}

/// Reads `path`; picks up `path.out` as well when present.
inline EmbeddingModel load_model(const std::string& path) {
    std::ifstream main(path);
    if (!main) throw std::runtime_error("cannot open model file: " + path);
    const std::string out_path = path + ".out";
    if (std::filesystem::exists(out_path)) {
        std::ifstream out(out_path);
        if (!out) throw std::runtime_error("cannot open model file: " + out_path);
        return load_model(main, &out);
    }
    return load_model(main);
}

}  // namespace ccmatch

#endif
