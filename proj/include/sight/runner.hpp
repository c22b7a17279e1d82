#pragma once

// Whole-stream orchestration: method dispatch, single runs, and the
// chronological / block / shuffle permutation study.

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <thread>
#include <variant>
#include <vector>

#include "sight/adapter.hpp"
#include "sight/baselines.hpp"
#include "sight/config.hpp"
#include "sight/error.hpp"
#include "sight/matrix.hpp"
#include "sight/metrics.hpp"
#include "sight/record.hpp"
#include "sight/simulator.hpp"

namespace sight {

enum class Method { Sight, SourceOnly, Persistence, Markov };

constexpr std::string_view to_string(Method m) noexcept {
    switch (m) {
        case Method::Sight: return "sight";
        case Method::SourceOnly: return "source-only";
        case Method::Persistence: return "persistence";
        case Method::Markov: return "markov";
    }
    return "?";
}

inline std::optional<Method> parse_method(std::string_view s) {
    for (auto m : {Method::Sight, Method::SourceOnly, Method::Persistence, Method::Markov}) {
        if (to_string(m) == s) return m;
    }
    return std::nullopt;
}

inline constexpr double kDefaultPersistenceAlpha = 0.9;

struct MethodConfig {
    Method method = Method::Sight;
    SightConfig sight;
    double persistence_alpha = kDefaultPersistenceAlpha;
    double markov_smoothing = 1.0;

    /// Display name; SIGHT variants list their ablations.
    std::string label() const {
        std::string s(to_string(method));
        if (method == Method::Sight) {
            for (Ablation a : sight.ablations.to_vector()) {
                s += "+";
                s += to_string(a);
            }
        }
        return s;
    }
};

struct RunOptions {
    bool snapshot_prototypes = false;
};

struct RunResult {
    std::vector<StepTrace> traces;
    metrics::EvalReport report;

    std::vector<int> predictions() const {
        std::vector<int> out;
        out.reserve(traces.size());
        for (const auto& t : traces) out.push_back(static_cast<int>(t.predicted()));
        return out;
    }
};

inline void check_stream_against_weights(std::span<const StreamRecord> records, const Matrix& weights) {
    for (const auto& r : records) {
        if (r.feature.size() != weights.cols() || r.scores.size() != weights.rows()) {
            fail(ErrorKind::StreamContract,
                 "record " + std::to_string(r.index) + " has d=" + std::to_string(r.feature.size()) +
                     ", K=" + std::to_string(r.scores.size()) + " but weights are K=" +
                     std::to_string(weights.rows()) + ", d=" + std::to_string(weights.cols()));
        }
    }
}

template <StreamMethod M>
RunResult run_method(M& method, std::span<const StreamRecord> records, std::size_t num_classes) {
    RunResult res;
    res.traces.reserve(records.size());
    for (const auto& r : records) res.traces.push_back(method.step(r));
    res.report = metrics::evaluate(res.traces, num_classes);
    return res;
}

inline RunResult run_stream(std::span<const StreamRecord> records, const Matrix& weights,
                            const MethodConfig& cfg, RunOptions options = {}) {
    check_stream_against_weights(records, weights);
    const std::size_t k = weights.rows();
    switch (cfg.method) {
        case Method::Sight: {
            SightAdapter a(PrototypeBank::from_weights(weights, cfg.sight.epsilon), cfg.sight,
                           AdapterOptions{options.snapshot_prototypes});
            return run_method(a, records, k);
        }
        case Method::SourceOnly: {
            SourceOnly a(k);
            return run_method(a, records, k);
        }
        case Method::Persistence: {
            Persistence a(k, cfg.persistence_alpha);
            return run_method(a, records, k);
        }
        case Method::Markov: {
            MarkovPrior a(k, cfg.markov_smoothing);
            return run_method(a, records, k);
        }
    }
    fail(ErrorKind::Invariant, "unknown method");
}

// ---------------------------------------------------------------------------

/// Worker count: SIGHT_WORKERS if set and positive, else hardware concurrency.
inline std::size_t worker_count() {
    if (const char* env = std::getenv("SIGHT_WORKERS")) {
        const long v = std::strtol(env, nullptr, 10);
        if (v > 0) return static_cast<std::size_t>(v);
    }
    return std::max<std::size_t>(1, std::thread::hardware_concurrency());
}

/// Runs `task(i)` for i in [0, n) across `workers` threads.
template <typename F>
void parallel_for(std::size_t n, std::size_t workers, F&& task) {
    workers = std::clamp<std::size_t>(workers, 1, std::max<std::size_t>(1, n));
    if (workers == 1) {
        for (std::size_t i = 0; i < n; ++i) task(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(workers);
    {
        std::vector<std::jthread> pool;
        pool.reserve(workers);
        for (std::size_t w = 0; w < workers; ++w) {
            pool.emplace_back([&, w] {
                try {
                    for (std::size_t i = next++; i < n; i = next++) task(i);
                } catch (...) {
                    errors[w] = std::current_exception();
                }
            });
        }
    }
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

struct PermCell {
    std::string method;
    sim::PermutationMode mode = sim::PermutationMode::Chronological;
    std::vector<double> per_seed;  // macro-F1 per seed, in seed order
    double mean = 0.0;
    double sd = 0.0;
};

struct PermTable {
    std::vector<std::uint64_t> seeds;
    std::vector<PermCell> cells;  // method-major, then chronological, block32, shuffle

    const PermCell& at(std::string_view method, sim::PermutationMode mode) const {
        for (const auto& c : cells) {
            if (c.method == method && c.mode == mode) return c;
        }
        fail(ErrorKind::Invariant, "no perm-test cell for " + std::string(method));
    }
};

inline constexpr std::array<sim::PermutationMode, 3> kPermutationModes = {
    sim::PermutationMode::Chronological, sim::PermutationMode::Block32, sim::PermutationMode::Shuffle};

/// Macro-F1 of every method under each ordering, one permutation per seed.
inline PermTable perm_test(std::span<const StreamRecord> records, const Matrix& weights,
                           std::span<const MethodConfig> methods, std::span<const std::uint64_t> seeds,
                           std::size_t workers = worker_count()) {
    if (seeds.empty()) fail(ErrorKind::Config, "perm-test needs at least one seed");
    for (const auto& r : records) {
        if (!r.label) fail(ErrorKind::InsufficientData, "perm-test needs a labeled stream");
    }
    check_stream_against_weights(records, weights);
    const std::size_t n_modes = kPermutationModes.size();
    const std::size_t n_seeds = seeds.size();
    std::vector<double> scores(methods.size() * n_modes * n_seeds);
    parallel_for(scores.size(), workers, [&](std::size_t idx) {
        const std::size_t m = idx / (n_modes * n_seeds);
        const std::size_t mode = (idx / n_seeds) % n_modes;
        const std::size_t s = idx % n_seeds;
        const auto permuted = sim::permute_stream(records, kPermutationModes[mode], seeds[s]);
        scores[idx] = run_stream(permuted, weights, methods[m]).report.macro_f1.value_or(0.0);
    });

    PermTable table;
    table.seeds.assign(seeds.begin(), seeds.end());
    for (std::size_t m = 0; m < methods.size(); ++m) {
        for (std::size_t mode = 0; mode < n_modes; ++mode) {
            PermCell cell;
            cell.method = methods[m].label();
            cell.mode = kPermutationModes[mode];
            const auto* first = scores.data() + (m * n_modes + mode) * n_seeds;
            cell.per_seed.assign(first, first + n_seeds);
            double s = 0.0;
            for (double v : cell.per_seed) s += v;
            cell.mean = s / static_cast<double>(n_seeds);
            double ss = 0.0;
            for (double v : cell.per_seed) ss += (v - cell.mean) * (v - cell.mean);
            cell.sd = n_seeds > 1 ? std::sqrt(ss / static_cast<double>(n_seeds - 1)) : 0.0;
            table.cells.push_back(std::move(cell));
        }
    }
    return table;
}

}  // namespace sight
