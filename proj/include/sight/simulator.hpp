#pragma once

// Synthetic activity streams with known ground truth.
//
// A latent activity process emits contiguous segments (geometric or fixed
// length); the next activity is drawn from the off-diagonal part of the
// transition row, reweighted by the class prior skew. Each step emits
//     feature = class_mean[s] + feature_offset + sigma * N(0, I)
//     logits  = logit_scale * W feature + b
// where the planted head W is built from source-domain centroids
// (class_mean - class_offset), normalized and then perturbed. The gap between
// the head's geometry and the target centroids is the cross-subject shift.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sight/error.hpp"
#include "sight/geometry.hpp"
#include "sight/matrix.hpp"
#include "sight/record.hpp"
#include "sight/rng.hpp"

namespace sight::sim {

enum class SegmentMode { Geometric, Fixed };

struct ShiftConfig {
    std::vector<double> feature_offset;  // d; added to every target feature
    Matrix class_offsets;                // K x d; target centroid minus source centroid
    double class_offset_scale = 0.0;     // norm of random class offsets when not explicit
    Matrix head_perturbation;            // K x d; added to the normalized source rows
    double head_rotation_scale = 0.0;    // expected row norm of random perturbation
    std::vector<double> head_bias;       // K
    double head_bias_scale = 0.0;        // sd of random bias when not explicit

    friend bool operator==(const ShiftConfig&, const ShiftConfig&) = default;
};

struct SimConfig {
    std::size_t num_classes = 5;
    std::size_t feature_dim = 16;
    double mean_segment_length = 25.0;
    SegmentMode segment_mode = SegmentMode::Geometric;
    Matrix transition_matrix;              // K x K row-stochastic; empty = uniform off-diagonal
    Matrix class_means;                    // K x d target centroids; empty = generated
    double mean_norm = 1.0;                // norm of generated centroids
    double mean_overlap = 0.0;             // shared component mixed into generated centroids
    double noise_sigma = 0.1;
    ShiftConfig shift;
    double logit_scale = 1.0;
    std::vector<double> class_prior_skew;  // K positive weights; empty = all ones
    std::uint64_t seed = 0;
    std::optional<std::uint64_t> structure_seed;  // centroids and head; defaults to seed

    std::uint64_t effective_structure_seed() const noexcept { return structure_seed.value_or(seed); }

    void validate() const {
        auto bad = [](const std::string& field, const std::string& why) {
            fail(ErrorKind::Config, field + ": " + why);
        };
        const std::size_t k = num_classes;
        const std::size_t d = feature_dim;
        if (k < 2) bad("num_classes", "must be >= 2");
        if (d < 1) bad("feature_dim", "must be >= 1");
        if (!(mean_segment_length >= 1.0) || !std::isfinite(mean_segment_length)) {
            bad("mean_segment_length", "must be a finite value >= 1");
        }
        if (!(noise_sigma > 0.0) || !std::isfinite(noise_sigma)) bad("noise_sigma", "must be positive");
        if (!(logit_scale > 0.0) || !std::isfinite(logit_scale)) bad("logit_scale", "must be positive");
        if (!(mean_norm > 0.0)) bad("mean_norm", "must be positive");
        if (!transition_matrix.empty()) {
            if (transition_matrix.rows() != k || transition_matrix.cols() != k) {
                bad("transition_matrix", "must be K x K");
            }
            for (std::size_t r = 0; r < k; ++r) {
                double s = 0.0, off = 0.0;
                for (std::size_t c = 0; c < k; ++c) {
                    const double v = transition_matrix(r, c);
                    if (!(v >= 0.0) || !std::isfinite(v)) {
                        bad("transition_matrix[" + std::to_string(r) + "]", "entries must be non-negative");
                    }
                    s += v;
                    if (c != r) off += v;
                }
                if (std::abs(s - 1.0) > 1e-9) {
                    bad("transition_matrix[" + std::to_string(r) + "]", "row must sum to 1");
                }
                if (!(off > 0.0)) {
                    bad("transition_matrix[" + std::to_string(r) + "]", "needs off-diagonal mass");
                }
            }
        }
        if (!class_means.empty() && (class_means.rows() != k || class_means.cols() != d)) {
            bad("class_means", "must be K x d");
        }
        if (!shift.feature_offset.empty() && shift.feature_offset.size() != d) {
            bad("shift.feature_offset", "must have d entries");
        }
        if (!shift.class_offsets.empty() && (shift.class_offsets.rows() != k || shift.class_offsets.cols() != d)) {
            bad("shift.class_offsets", "must be K x d");
        }
        if (!shift.head_perturbation.empty() &&
            (shift.head_perturbation.rows() != k || shift.head_perturbation.cols() != d)) {
            bad("shift.head_perturbation", "must be K x d");
        }
        if (!shift.head_bias.empty() && shift.head_bias.size() != k) bad("shift.head_bias", "must have K entries");
        if (shift.class_offset_scale < 0.0) bad("shift.class_offset_scale", "must be >= 0");
        if (shift.head_rotation_scale < 0.0) bad("shift.head_rotation_scale", "must be >= 0");
        if (shift.head_bias_scale < 0.0) bad("shift.head_bias_scale", "must be >= 0");
        if (!class_prior_skew.empty()) {
            if (class_prior_skew.size() != k) bad("class_prior_skew", "must have K entries");
            for (double w : class_prior_skew) {
                if (!(w > 0.0) || !std::isfinite(w)) bad("class_prior_skew", "entries must be positive");
            }
        }
    }

    friend bool operator==(const SimConfig&, const SimConfig&) = default;
};

/// Linear head exported to the adapter: logits = W z + b.
struct PlantedHead {
    Matrix weights;
    std::vector<double> bias;
};

/// Everything the structure seed determines.
struct World {
    Matrix target_centroids;  // ground-truth feature centroids of the stream
    Matrix source_centroids;
    PlantedHead head;
    Matrix next_state;        // K x K, zero diagonal, rows sum to 1
    std::vector<double> initial_state;
};

/// The pinned synthetic benchmark: K=5, d=16, fixed 20-step segments,
/// strongly overlapping class means and a shifted, biased source head. One
/// world (structure seed 10) is shared by every stream seed.
/// configs/default_benchmark.json holds the same values.
inline constexpr std::size_t kDefaultBenchmarkLength = 5000;
inline constexpr std::array<std::uint64_t, 5> kDefaultBenchmarkSeeds = {1, 2, 3, 4, 5};

inline SimConfig default_benchmark_config(std::uint64_t seed = kDefaultBenchmarkSeeds[0]) {
    SimConfig c;
    c.num_classes = 5;
    c.feature_dim = 16;
    c.mean_segment_length = 20.0;
    c.segment_mode = SegmentMode::Fixed;
    c.mean_norm = 1.0;
    c.mean_overlap = 0.9;
    c.noise_sigma = 0.1;
    c.shift.class_offset_scale = 0.3;
    c.shift.head_rotation_scale = 0.45;
    c.shift.head_bias_scale = 0.4;
    c.logit_scale = 1.5;
    c.seed = seed;
    c.structure_seed = 10;
    return c;
}

namespace detail {

inline std::vector<double> gaussian_vector(SplitMix64& rng, std::size_t n) {
    std::vector<double> v(n);
    for (double& x : v) x = rng.gaussian();
    return v;
}

inline std::vector<double> random_direction(SplitMix64& rng, std::size_t n) {
    auto v = gaussian_vector(rng, n);
    const double norm = kernel::norm2(v);
    for (double& x : v) x /= norm;
    return v;
}

}  // namespace detail

inline World build_world(const SimConfig& cfg) {
    cfg.validate();
    const std::size_t k = cfg.num_classes;
    const std::size_t d = cfg.feature_dim;
    const std::uint64_t seed = cfg.effective_structure_seed();
    World w;

    if (!cfg.class_means.empty()) {
        w.target_centroids = cfg.class_means;
    } else {
        auto rng = SplitMix64::derive(seed, "centroids");
        const auto common = detail::random_direction(rng, d);
        // Gram-Schmidt while K <= d so every class pair is equally separated.
        std::vector<std::vector<double>> basis;
        w.target_centroids = Matrix(k, d);
        for (std::size_t c = 0; c < k; ++c) {
            auto dir = detail::random_direction(rng, d);
            if (k <= d) {
                for (const auto& b : basis) {
                    const double proj = kernel::dot(dir, b);
                    for (std::size_t i = 0; i < d; ++i) dir[i] -= proj * b[i];
                }
                const double n0 = kernel::norm2(dir);
                for (double& x : dir) x /= n0;
                basis.push_back(dir);
            }
            for (std::size_t i = 0; i < d; ++i) dir[i] += cfg.mean_overlap * common[i];
            const double n = kernel::norm2(dir);
            for (std::size_t i = 0; i < d; ++i) w.target_centroids(c, i) = cfg.mean_norm * dir[i] / n;
        }
    }
    if (!cfg.shift.feature_offset.empty()) {
        for (std::size_t c = 0; c < k; ++c) {
            for (std::size_t i = 0; i < d; ++i) w.target_centroids(c, i) += cfg.shift.feature_offset[i];
        }
    }

    Matrix offsets = cfg.shift.class_offsets;
    if (offsets.empty()) {
        auto rng = SplitMix64::derive(seed, "class-offsets");
        offsets = Matrix(k, d);
        for (std::size_t c = 0; c < k; ++c) {
            const auto dir = detail::random_direction(rng, d);
            for (std::size_t i = 0; i < d; ++i) offsets(c, i) = cfg.shift.class_offset_scale * dir[i];
        }
    }
    w.source_centroids = Matrix(k, d);
    for (std::size_t c = 0; c < k; ++c) {
        for (std::size_t i = 0; i < d; ++i) {
            w.source_centroids(c, i) = w.target_centroids(c, i) - offsets(c, i);
        }
    }

    Matrix perturbation = cfg.shift.head_perturbation;
    if (perturbation.empty()) {
        auto rng = SplitMix64::derive(seed, "head-perturbation");
        perturbation = Matrix(k, d);
        const double scale = cfg.shift.head_rotation_scale / std::sqrt(static_cast<double>(d));
        for (double& x : perturbation.data()) x = scale * rng.gaussian();
    }
    w.head.weights = Matrix(k, d);
    for (std::size_t c = 0; c < k; ++c) {
        const double n = kernel::norm2(w.source_centroids.row(c));
        if (n == 0.0) fail(ErrorKind::Config, "source centroid " + std::to_string(c) + " is zero");
        for (std::size_t i = 0; i < d; ++i) {
            w.head.weights(c, i) = w.source_centroids(c, i) / n + perturbation(c, i);
        }
    }
    if (!cfg.shift.head_bias.empty()) {
        w.head.bias = cfg.shift.head_bias;
    } else {
        auto rng = SplitMix64::derive(seed, "head-bias");
        w.head.bias.resize(k);
        for (double& b : w.head.bias) b = cfg.shift.head_bias_scale * rng.gaussian();
    }

    std::vector<double> skew = cfg.class_prior_skew.empty() ? std::vector<double>(k, 1.0) : cfg.class_prior_skew;
    w.next_state = Matrix(k, k);
    for (std::size_t r = 0; r < k; ++r) {
        double s = 0.0;
        for (std::size_t c = 0; c < k; ++c) {
            if (c == r) continue;
            const double t = cfg.transition_matrix.empty() ? 1.0 : cfg.transition_matrix(r, c);
            w.next_state(r, c) = t * skew[c];
            s += w.next_state(r, c);
        }
        if (!(s > 0.0)) fail(ErrorKind::Config, "transition row " + std::to_string(r) + " has no reachable state");
        for (std::size_t c = 0; c < k; ++c) w.next_state(r, c) /= s;
    }
    const double skew_total = std::accumulate(skew.begin(), skew.end(), 0.0);
    w.initial_state.resize(k);
    for (std::size_t c = 0; c < k; ++c) w.initial_state[c] = skew[c] / skew_total;
    return w;
}

namespace detail {

inline std::size_t draw_categorical(SplitMix64& rng, std::span<const double> probs) {
    const double u = rng.uniform();
    double acc = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        acc += probs[i];
        if (u < acc) return i;
    }
    // Round-off: last class with positive mass.
    for (std::size_t i = probs.size(); i-- > 0;) {
        if (probs[i] > 0.0) return i;
    }
    return 0;
}

inline std::uint64_t draw_segment_length(SplitMix64& rng, const SimConfig& cfg) {
    if (cfg.segment_mode == SegmentMode::Fixed) {
        return static_cast<std::uint64_t>(std::max(1.0, std::round(cfg.mean_segment_length)));
    }
    // Geometric on {1, 2, ...} with mean L: P(n) = (1 - p)^(n - 1) p, p = 1 / L.
    const double p = 1.0 / cfg.mean_segment_length;
    if (p >= 1.0) return 1;
    const double u = rng.uniform_open_zero();
    return 1 + static_cast<std::uint64_t>(std::floor(std::log(u) / std::log1p(-p)));
}

}  // namespace detail

struct Simulation {
    World world;
    std::vector<StreamRecord> records;
};

/// Generates `length` records; a pure function of (cfg, length).
inline Simulation simulate(const SimConfig& cfg, std::size_t length) {
    if (length < 1) fail(ErrorKind::Config, "length must be >= 1");
    Simulation sim{build_world(cfg), {}};
    const World& w = sim.world;
    const std::size_t k = cfg.num_classes;
    const std::size_t d = cfg.feature_dim;

    auto latent = SplitMix64::derive(cfg.seed, "latent");
    auto noise = SplitMix64::derive(cfg.seed, "noise");

    sim.records.reserve(length);
    std::size_t state = detail::draw_categorical(latent, w.initial_state);
    std::uint64_t remaining = detail::draw_segment_length(latent, cfg);
    std::int64_t segment = 0;
    bool boundary = false;
    for (std::size_t t = 0; t < length; ++t) {
        if (remaining == 0) {
            state = detail::draw_categorical(latent, w.next_state.row(state));
            remaining = detail::draw_segment_length(latent, cfg);
            ++segment;
            boundary = true;
        }
        StreamRecord r;
        r.index = t;
        r.kind = ScoreKind::Logits;
        r.label = static_cast<int>(state);
        r.feature.resize(d);
        for (std::size_t i = 0; i < d; ++i) {
            r.feature[i] = w.target_centroids(state, i) + cfg.noise_sigma * noise.gaussian();
        }
        r.scores.resize(k);
        for (std::size_t c = 0; c < k; ++c) {
            r.scores[c] = cfg.logit_scale * kernel::dot(w.head.weights.row(c), r.feature) + w.head.bias[c];
        }
        r.meta = {{"segment", segment}, {"is_boundary", boundary}};
        sim.records.push_back(std::move(r));
        boundary = false;
        --remaining;
    }
    return sim;
}

inline std::vector<StreamRecord> generate_stream(const SimConfig& cfg, std::size_t length) {
    return simulate(cfg, length).records;
}

// ---------------------------------------------------------------------------

struct GeometryReport {
    std::vector<double> within_similarities;
    std::vector<double> boundary_similarities;
    double within_mean = 0.0;
    double within_sd = 0.0;
    double boundary_mean = 0.0;
    double boundary_sd = 0.0;
    double pooled_sd = 0.0;
    double separability = 0.0;  // (within_mean - boundary_mean) / pooled_sd
    std::size_t boundaries = 0;
    std::size_t directional_hits = 0;
    double directional_top1 = 0.0;  // boundary top-1 accuracy of displacement alignment
    double random_baseline = 0.0;   // 1 / (K - 1)
};

namespace detail {

inline std::pair<double, double> mean_sd(std::span<const double> xs) {
    const double n = static_cast<double>(xs.size());
    const double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
    double ss = 0.0;
    for (double x : xs) ss += (x - mean) * (x - mean);
    return {mean, xs.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0};
}

}  // namespace detail

/// Compares each normalized feature with the feature expected if the previous
/// label persisted (its prototype from the head), split by whether the label
/// actually changed. At every true boundary also ranks candidate classes by
/// alignment of the observed displacement with their prototype direction.
inline GeometryReport validate_transition_geometry(std::span<const StreamRecord> stream,
                                                   const Matrix& head_weights,
                                                   double eps = kDefaultEpsilon) {
    const std::size_t k = head_weights.rows();
    const std::size_t d = head_weights.cols();
    if (k < 2) fail(ErrorKind::Dimension, "head needs K >= 2");
    Matrix protos(k, d);
    for (std::size_t c = 0; c < k; ++c) kernel::normalize(head_weights.row(c), protos.row(c), eps);

    GeometryReport rep;
    rep.random_baseline = 1.0 / static_cast<double>(k - 1);
    std::vector<double> z(d), disp(d), dir(d);
    for (std::size_t t = 0; t < stream.size(); ++t) {
        const auto& r = stream[t];
        if (!r.label) fail(ErrorKind::InsufficientData, "record " + std::to_string(t) + " has no label");
        if (r.feature.size() != d) {
            fail(ErrorKind::StreamContract, "record " + std::to_string(t) + " feature dimension differs from head");
        }
        if (*r.label < 0 || static_cast<std::size_t>(*r.label) >= k) {
            fail(ErrorKind::Validation, "record " + std::to_string(t) + " label out of range");
        }
        if (t == 0) continue;
        const auto prev = static_cast<std::size_t>(*stream[t - 1].label);
        const auto cur = static_cast<std::size_t>(*r.label);
        kernel::normalize(r.feature, z, eps);
        const auto expected = protos.row(prev);
        const double sim = kernel::dot(z, expected);
        if (cur == prev) {
            rep.within_similarities.push_back(sim);
            continue;
        }
        rep.boundary_similarities.push_back(sim);
        ++rep.boundaries;
        for (std::size_t i = 0; i < d; ++i) disp[i] = z[i] - expected[i];
        kernel::normalize(disp, disp, eps);
        std::size_t best = k;
        double best_score = 0.0;
        for (std::size_t c = 0; c < k; ++c) {
            if (c == prev) continue;
            for (std::size_t i = 0; i < d; ++i) dir[i] = protos(c, i) - expected[i];
            kernel::normalize(dir, dir, eps);
            const double a = kernel::dot(disp, dir);
            if (best == k || a > best_score) {
                best = c;
                best_score = a;
            }
        }
        if (best == cur) ++rep.directional_hits;
    }
    if (rep.boundary_similarities.empty()) {
        fail(ErrorKind::InsufficientData, "stream has a single segment; no boundaries to compare");
    }
    if (rep.within_similarities.size() < 2) {
        fail(ErrorKind::InsufficientData, "fewer than two within-segment steps");
    }
    std::tie(rep.within_mean, rep.within_sd) = detail::mean_sd(rep.within_similarities);
    std::tie(rep.boundary_mean, rep.boundary_sd) = detail::mean_sd(rep.boundary_similarities);
    const double n1 = static_cast<double>(rep.within_similarities.size());
    const double n2 = static_cast<double>(rep.boundary_similarities.size());
    const double pooled_var =
        ((n1 - 1.0) * rep.within_sd * rep.within_sd + (n2 - 1.0) * rep.boundary_sd * rep.boundary_sd) /
        std::max(1.0, n1 + n2 - 2.0);
    rep.pooled_sd = std::sqrt(pooled_var);
    const double gap = rep.within_mean - rep.boundary_mean;
    rep.separability = rep.pooled_sd > 0.0 ? gap / rep.pooled_sd : (gap == 0.0 ? 0.0 : gap * 1e300);
    rep.directional_top1 = static_cast<double>(rep.directional_hits) / n2;
    return rep;
}

// ---------------------------------------------------------------------------

enum class PermutationMode { Chronological, Block32, Shuffle };

constexpr std::string_view to_string(PermutationMode m) noexcept {
    switch (m) {
        case PermutationMode::Chronological: return "chronological";
        case PermutationMode::Block32: return "block32";
        case PermutationMode::Shuffle: return "shuffle";
    }
    return "?";
}

inline std::optional<PermutationMode> parse_permutation_mode(std::string_view s) {
    for (auto m : {PermutationMode::Chronological, PermutationMode::Block32, PermutationMode::Shuffle}) {
        if (to_string(m) == s) return m;
    }
    return std::nullopt;
}

inline constexpr std::size_t kBlockSize = 32;

/// Reorders a stream. Block32 keeps runs of 32 consecutive records and
/// permutes their order; Shuffle permutes every record. Indices are
/// re-sequenced and the original index kept in meta["original_index"].
inline std::vector<StreamRecord> permute_stream(std::span<const StreamRecord> stream,
                                                PermutationMode mode, std::uint64_t seed) {
    std::vector<StreamRecord> out(stream.begin(), stream.end());
    if (mode == PermutationMode::Chronological) return out;

    auto rng = SplitMix64::derive(seed, to_string(mode));
    std::vector<std::size_t> order;
    if (mode == PermutationMode::Shuffle) {
        order.resize(stream.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    } else {
        const std::size_t blocks = (stream.size() + kBlockSize - 1) / kBlockSize;
        std::vector<std::size_t> block_order(blocks);
        std::iota(block_order.begin(), block_order.end(), std::size_t{0});
        for (std::size_t i = blocks; i > 1; --i) std::swap(block_order[i - 1], block_order[rng.below(i)]);
        order.reserve(stream.size());
        for (std::size_t b : block_order) {
            for (std::size_t i = b * kBlockSize; i < std::min(stream.size(), (b + 1) * kBlockSize); ++i) {
                order.push_back(i);
            }
        }
    }
    for (std::size_t pos = 0; pos < order.size(); ++pos) {
        StreamRecord r = stream[order[pos]];
        if (!r.meta.is_object()) r.meta = nlohmann::json::object();
        r.meta["original_index"] = r.index;
        r.index = pos;
        out[pos] = std::move(r);
    }
    return out;
}

}  // namespace sight::sim
