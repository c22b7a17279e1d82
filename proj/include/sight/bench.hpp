#pragma once

// Adapter cost model: exact state footprint over a (K, d) grid, its fit to
// c1*K*d + c2*K + c3, and per-step latency percentiles. Timing covers
// SightAdapter::step only; records are materialized beforehand.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "sight/adapter.hpp"
#include "sight/error.hpp"
#include "sight/matrix.hpp"
#include "sight/record.hpp"
#include "sight/rng.hpp"

namespace sight::bench {

struct StateSizeSample {
    std::size_t num_classes = 0;
    std::size_t feature_dim = 0;
    std::size_t bytes = 0;
};

struct StateSizeFit {
    double c_kd = 0.0;  // bytes per K*d
    double c_k = 0.0;   // bytes per K
    double c_0 = 0.0;   // fixed bytes
    double max_relative_residual = 0.0;
    std::vector<StateSizeSample> samples;

    double predict(std::size_t k, std::size_t d) const {
        return c_kd * static_cast<double>(k * d) + c_k * static_cast<double>(k) + c_0;
    }
};

inline std::vector<std::size_t> default_class_grid() {
    std::vector<std::size_t> ks;
    for (std::size_t k = 2; k <= 20; ++k) ks.push_back(k);
    return ks;
}

inline std::vector<std::size_t> default_dim_grid() { return {8, 16, 32, 64, 128, 256}; }

namespace detail {

inline Matrix random_weights(std::size_t k, std::size_t d, std::uint64_t seed) {
    auto rng = SplitMix64::derive(seed, "bench-weights");
    Matrix w(k, d);
    for (double& x : w.data()) x = rng.gaussian();
    return w;
}

inline std::vector<StreamRecord> random_records(std::size_t n, std::size_t k, std::size_t d, std::uint64_t seed) {
    auto rng = SplitMix64::derive(seed, "bench-records");
    std::vector<StreamRecord> out(n);
    for (std::size_t t = 0; t < n; ++t) {
        auto& r = out[t];
        r.index = t;
        r.feature.resize(d);
        r.scores.resize(k);
        for (double& x : r.feature) x = rng.gaussian();
        for (double& x : r.scores) x = rng.gaussian();
    }
    return out;
}

}  // namespace detail

/// Byte size of the adapter state after one step (so the previous belief is held).
inline std::size_t state_bytes(std::size_t k, std::size_t d, std::uint64_t seed = 0) {
    SightAdapter a(PrototypeBank::from_weights(detail::random_weights(k, d, seed)), SightConfig{});
    const auto records = detail::random_records(1, k, d, seed);
    a.step(records.front());
    return a.state().byte_size();
}

inline StateSizeFit fit_state_size(std::vector<StateSizeSample> samples) {
    if (samples.size() < 3) fail(ErrorKind::InsufficientData, "state-size fit needs at least 3 samples");
    Eigen::MatrixXd x(static_cast<Eigen::Index>(samples.size()), 3);
    Eigen::VectorXd y(static_cast<Eigen::Index>(samples.size()));
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const auto r = static_cast<Eigen::Index>(i);
        x(r, 0) = static_cast<double>(samples[i].num_classes * samples[i].feature_dim);
        x(r, 1) = static_cast<double>(samples[i].num_classes);
        x(r, 2) = 1.0;
        y(r) = static_cast<double>(samples[i].bytes);
    }
    const Eigen::Vector3d c = x.colPivHouseholderQr().solve(y);
    StateSizeFit fit;
    fit.c_kd = c(0);
    fit.c_k = c(1);
    fit.c_0 = c(2);
    for (const auto& s : samples) {
        const double b = static_cast<double>(s.bytes);
        fit.max_relative_residual = std::max(fit.max_relative_residual,
                                             std::abs(fit.predict(s.num_classes, s.feature_dim) - b) / b);
    }
    fit.samples = std::move(samples);
    return fit;
}

inline StateSizeFit state_size_sweep(std::span<const std::size_t> ks, std::span<const std::size_t> ds) {
    std::vector<StateSizeSample> samples;
    for (std::size_t k : ks) {
        for (std::size_t d : ds) samples.push_back({k, d, state_bytes(k, d)});
    }
    return fit_state_size(std::move(samples));
}

inline StateSizeFit state_size_sweep() {
    const auto ks = default_class_grid();
    const auto ds = default_dim_grid();
    return state_size_sweep(ks, ds);
}

// ---------------------------------------------------------------------------

struct LatencyReport {
    std::size_t num_classes = 0;
    std::size_t feature_dim = 0;
    std::size_t steps = 0;
    double mean_ms = 0.0;
    double p50_ms = 0.0;
    double p95_ms = 0.0;
    double p99_ms = 0.0;
    std::vector<double> samples_ms;
};

/// Nearest-rank percentile of an ascending sample, q in [0, 1].
inline double percentile(std::span<const double> sorted, double q) {
    if (sorted.empty()) fail(ErrorKind::InsufficientData, "percentile of an empty sample");
    const auto rank = static_cast<std::size_t>(std::ceil(q * static_cast<double>(sorted.size())));
    return sorted[std::clamp<std::size_t>(rank, 1, sorted.size()) - 1];
}

/// Times every step after `warmup` untimed steps. The stream is cycled if it
/// is shorter than warmup + steps.
inline LatencyReport measure_latency(std::span<const StreamRecord> records, const Matrix& weights,
                                     const SightConfig& cfg, std::size_t steps, std::size_t warmup = 200) {
    if (records.empty()) fail(ErrorKind::InsufficientData, "latency bench needs at least one record");
    if (steps == 0) fail(ErrorKind::Config, "latency bench needs steps >= 1");
    SightAdapter a(PrototypeBank::from_weights(weights, cfg.epsilon), cfg);
    std::size_t i = 0;
    for (std::size_t w = 0; w < warmup; ++w, ++i) a.step(records[i % records.size()]);
    LatencyReport rep;
    rep.num_classes = weights.rows();
    rep.feature_dim = weights.cols();
    rep.steps = steps;
    rep.samples_ms.reserve(steps);
    using clock = std::chrono::steady_clock;
    for (std::size_t s = 0; s < steps; ++s, ++i) {
        const auto& r = records[i % records.size()];
        const auto t0 = clock::now();
        a.step(r);
        const auto t1 = clock::now();
        rep.samples_ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
    }
    std::vector<double> sorted = rep.samples_ms;
    std::sort(sorted.begin(), sorted.end());
    double sum = 0.0;
    for (double v : sorted) sum += v;
    rep.mean_ms = sum / static_cast<double>(sorted.size());
    rep.p50_ms = percentile(sorted, 0.50);
    rep.p95_ms = percentile(sorted, 0.95);
    rep.p99_ms = percentile(sorted, 0.99);
    return rep;
}

/// Latency on a synthetic Gaussian stream of the given shape.
inline LatencyReport measure_latency(std::size_t k, std::size_t d, std::size_t steps, std::uint64_t seed = 0) {
    const auto weights = detail::random_weights(k, d, seed);
    const auto records = detail::random_records(std::min<std::size_t>(steps, 4096), k, d, seed);
    return measure_latency(records, weights, SightConfig{}, steps);
}

}  // namespace sight::bench
