#pragma once

// Prototype-anchored streaming refinement of classifier outputs.
//
// One SightAdapter per stream. Each step:
//   1. project the previous refined belief onto the prototype bank to get the
//      feature expected under persistence,
//   2. turn the cosine gap between expectation and observation into a bounded
//      surprise lambda in [0, 1],
//   3. route toward classes whose prototype direction (seen from the
//      expectation) aligns with the observed displacement, calibrated by a
//      square-root-flattened habit prior,
//   4. fuse prior = (1 - lambda) * q_prev + lambda * rho and refine
//      q = normalize(p * prior),
//   5. update the habit by exponential averaging and pull every prototype
//      toward the observation (weighted by q) and back toward its source anchor.
//
// Every public value-returning operation is a thin wrapper over the span
// kernels in `sight::detail`; SightAdapter drives the same kernels on
// preallocated buffers, so a reused StepTrace gives an allocation-free step.

#include <cmath>
#include <concepts>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "sight/config.hpp"
#include "sight/error.hpp"
#include "sight/geometry.hpp"
#include "sight/matrix.hpp"
#include "sight/record.hpp"

namespace sight {

/// Tolerance for probability rows supplied by a producer instead of logits.
inline constexpr double kProducerSimplexTolerance = 1e-4;

/// K unit prototypes and their frozen source-side anchors.
class PrototypeBank {
public:
    PrototypeBank() = default;

    /// Row-wise eps-normalization of classifier weights. Bias terms never enter.
    static PrototypeBank from_weights(const Matrix& weights, double eps = kDefaultEpsilon) {
        if (weights.rows() < 2) {
            fail(ErrorKind::Dimension, "classifier weights need K >= 2 rows, got " +
                                           std::to_string(weights.rows()));
        }
        if (weights.cols() < 1) fail(ErrorKind::Dimension, "classifier weights need d >= 1");
        PrototypeBank bank;
        bank.anchors_ = Matrix(weights.rows(), weights.cols());
        for (std::size_t k = 0; k < weights.rows(); ++k) {
            auto w = weights.row(k);
            for (std::size_t i = 0; i < w.size(); ++i) {
                if (!std::isfinite(w[i])) {
                    fail(ErrorKind::InvalidInput, "classifier weight (" + std::to_string(k) + ", " +
                                                      std::to_string(i) + ") is not finite");
                }
            }
            if (kernel::norm2(w) == 0.0) {
                fail(ErrorKind::DegenerateClass,
                     "classifier weight row for class " + std::to_string(k) + " is all zero");
            }
            kernel::normalize(w, bank.anchors_.row(k), eps);
        }
        bank.current_ = bank.anchors_;
        return bank;
    }

    std::size_t num_classes() const noexcept { return current_.rows(); }
    std::size_t dim() const noexcept { return current_.cols(); }

    std::span<const double> prototype(std::size_t k) const { return current_.row(k); }
    std::span<const double> anchor(std::size_t k) const { return anchors_.row(k); }
    const Matrix& prototypes() const noexcept { return current_; }
    const Matrix& anchors() const noexcept { return anchors_; }

    std::size_t heap_bytes() const noexcept { return current_.heap_bytes() + anchors_.heap_bytes(); }

    friend bool operator==(const PrototypeBank&, const PrototypeBank&) = default;

private:
    friend void update_prototypes_inplace(PrototypeBank&, std::span<const double>,
                                          std::span<const double>, const SightConfig&,
                                          std::span<double>);
    Matrix current_;
    Matrix anchors_;
};

inline PrototypeBank initialize_prototypes(const Matrix& weights, double eps = kDefaultEpsilon) {
    return PrototypeBank::from_weights(weights, eps);
}

/// Complete mutable state of one stream.
struct AdapterState {
    PrototypeBank bank;
    ProbVector habit;
    std::optional<ProbVector> prev_belief;  // absent iff step == 0
    std::uint64_t step = 0;
    SightConfig config;

    static AdapterState initial(PrototypeBank bank, SightConfig config) {
        config.validate();
        AdapterState s;
        s.habit = ProbVector::uniform(bank.num_classes());
        s.bank = std::move(bank);
        s.config = config;
        return s;
    }

    std::size_t num_classes() const noexcept { return bank.num_classes(); }
    std::size_t dim() const noexcept { return bank.dim(); }

    /// Exact footprint: the object itself plus every owned heap buffer.
    std::size_t byte_size() const noexcept {
        std::size_t bytes = sizeof(AdapterState) + bank.heap_bytes() +
                            habit.values().capacity() * sizeof(double);
        if (prev_belief) bytes += prev_belief->values().capacity() * sizeof(double);
        return bytes;
    }

    friend bool operator==(const AdapterState&, const AdapterState&) = default;
};

/// Every intermediate quantity of one step. Vector fields hold UnitVector
/// (expected_state) or simplex (all others) values.
struct StepTrace {
    std::uint64_t step = 0;
    std::optional<int> label;
    std::vector<double> raw;               // p_t
    std::vector<double> expected_state;    // z_{t|t-1}
    double discrepancy = 0.0;              // D_t
    double surprise = 0.0;                 // lambda_t
    std::vector<double> routing;           // r_t
    std::vector<double> calibrated_prior;  // rho_t
    std::vector<double> temporal_prior;    // pi_t
    std::vector<double> refined;           // q_t
    bool annihilated = false;              // p * pi had no mass; q fell back to uniform
    bool degenerate_expectation = false;   // sum_k q_k mu_k vanished
    std::optional<Matrix> prototypes;      // post-update bank, when snapshots are enabled

    std::size_t predicted() const { return argmax(refined); }

    friend bool operator==(const StepTrace&, const StepTrace&) = default;
};

/// Any per-stream method sharing the adapter's step interface.
template <typename A>
concept StreamMethod = requires(A a, const StreamRecord& r) {
    { a.step(r) } -> std::convertible_to<const StepTrace&>;
    { a.name() } -> std::convertible_to<std::string_view>;
};

// ---------------------------------------------------------------------------
// Span kernels. Buffers must be pre-sized by the caller.
namespace detail {

inline void require_record_shape(const StreamRecord& r, std::size_t d, std::size_t k,
                                 std::uint64_t step) {
    if (r.feature.size() != d || r.scores.size() != k) {
        fail(ErrorKind::StreamContract,
             "step " + std::to_string(step) + ": record has d=" + std::to_string(r.feature.size()) +
                 ", K=" + std::to_string(r.scores.size()) + " but the stream is d=" +
                 std::to_string(d) + ", K=" + std::to_string(k));
    }
}

/// p_t from a record: softmax(logits) or the supplied probabilities renormalized.
inline void raw_prediction(const StreamRecord& r, std::span<double> out, double eps) {
    kernel::require_finite(r.scores, "record scores");
    if (r.kind == ScoreKind::Logits) {
        kernel::softmax(r.scores, 1.0, out);
        return;
    }
    double s = 0.0;
    for (std::size_t i = 0; i < r.scores.size(); ++i) {
        if (r.scores[i] < 0.0) {
            fail(ErrorKind::Validation, "record " + std::to_string(r.index) +
                                            ": negative probability at class " + std::to_string(i));
        }
        s += r.scores[i];
    }
    if (std::abs(s - 1.0) > kProducerSimplexTolerance) {
        fail(ErrorKind::Validation,
             "record " + std::to_string(r.index) + ": probabilities sum to " + std::to_string(s));
    }
    kernel::simplex_project(r.scores, out, eps);
}

/// out = normalize(sum_k q_k mu_k), summed in ascending k. Returns false when
/// the weighted sum has (near-)zero norm.
inline bool expected_state(const PrototypeBank& bank, std::span<const double> belief, double eps,
                           std::span<double> out) {
    std::fill(out.begin(), out.end(), 0.0);
    for (std::size_t k = 0; k < bank.num_classes(); ++k) {
        const double w = belief[k];
        auto mu = bank.prototype(k);
        for (std::size_t i = 0; i < out.size(); ++i) out[i] += w * mu[i];
    }
    const double n = kernel::normalize(out, out, eps);
    return n > eps;
}

struct Surprise {
    double discrepancy = 0.0;
    double lambda = 0.0;
};

inline Surprise surprise(std::span<const double> observed, std::span<const double> expected,
                         const SightConfig& cfg) {
    Surprise s;
    if (cfg.has(Ablation::SurpriseFeatureDistance)) {
        double acc = 0.0;
        for (std::size_t i = 0; i < observed.size(); ++i) {
            const double diff = observed[i] - expected[i];
            acc += diff * diff;
        }
        s.discrepancy = std::sqrt(acc);
    } else {
        s.discrepancy = kernel::cosine_distance(observed, expected);
    }
    if (cfg.has(Ablation::NoSurprise)) {
        s.lambda = cfg.no_surprise_lambda;
    } else {
        s.lambda = -std::expm1(-cfg.beta * s.discrepancy * s.discrepancy);
    }
    return s;
}

/// Routing over classes by alignment of the observed displacement with each
/// prototype's direction from the expectation. Zero displacement gives
/// uniform routing; a zero prototype direction scores 0.
inline void geometric_routing(std::span<const double> observed, std::span<const double> expected,
                              const PrototypeBank& bank, const SightConfig& cfg,
                              std::span<double> displacement, std::span<double> direction,
                              std::span<double> scores, std::span<double> out) {
    const std::size_t k_count = bank.num_classes();
    const double uniform = 1.0 / static_cast<double>(k_count);
    if (cfg.has(Ablation::NoGeometricRouting)) {
        std::fill(out.begin(), out.end(), uniform);
        return;
    }
    for (std::size_t i = 0; i < observed.size(); ++i) displacement[i] = observed[i] - expected[i];
    if (kernel::normalize(displacement, displacement, cfg.epsilon) == 0.0) {
        std::fill(out.begin(), out.end(), uniform);
        return;
    }
    for (std::size_t k = 0; k < k_count; ++k) {
        auto mu = bank.prototype(k);
        for (std::size_t i = 0; i < mu.size(); ++i) direction[i] = mu[i] - expected[i];
        kernel::normalize(direction, direction, cfg.epsilon);
        scores[k] = kernel::dot(displacement, direction);
    }
    kernel::softmax(scores, cfg.tau, out);
}

/// rho = normalize(r * flatten(h)), flatten(h) = normalize(sqrt(h + eps)).
inline void calibrate_prior(std::span<const double> routing, std::span<const double> habit,
                            const SightConfig& cfg, std::span<double> flattened,
                            std::span<double> out) {
    if (cfg.has(Ablation::NoHabitPrior)) {
        std::copy(routing.begin(), routing.end(), out.begin());
        return;
    }
    if (cfg.has(Ablation::HabitRaw)) {
        std::copy(habit.begin(), habit.end(), flattened.begin());
    } else {
        for (std::size_t k = 0; k < habit.size(); ++k) flattened[k] = std::sqrt(habit[k] + cfg.epsilon);
        kernel::simplex_project(flattened, flattened, cfg.epsilon);
    }
    for (std::size_t k = 0; k < routing.size(); ++k) out[k] = routing[k] * flattened[k];
    kernel::simplex_project(out, out, cfg.epsilon);
}

/// pi = (1 - lambda) q_prev + lambda rho; q = normalize(p * pi). Returns true
/// when p * pi had no mass and q fell back to uniform.
inline bool refine(std::span<const double> raw, std::span<const double> prev_belief, double lambda,
                   std::span<const double> rho, double eps, std::span<double> prior_out,
                   std::span<double> refined_out) {
    for (std::size_t k = 0; k < raw.size(); ++k) {
        prior_out[k] = (1.0 - lambda) * prev_belief[k] + lambda * rho[k];
        refined_out[k] = raw[k] * prior_out[k];
    }
    return !kernel::simplex_project(refined_out, refined_out, eps);
}

inline void update_habit(std::span<double> habit, std::span<const double> refined,
                         const SightConfig& cfg) {
    for (std::size_t k = 0; k < habit.size(); ++k) {
        habit[k] = (1.0 - cfg.eta_h) * habit[k] + cfg.eta_h * refined[k];
    }
}

}  // namespace detail

/// mu_k <- normalize((1 - w) mu_k + w z), w = eta_mu q_k; then
/// mu_k <- normalize((1 - omega) mu_k + omega mu_k^(0)).
inline void update_prototypes_inplace(PrototypeBank& bank, std::span<const double> observed,
                                      std::span<const double> refined, const SightConfig& cfg,
                                      std::span<double> scratch) {
    if (cfg.has(Ablation::NoPrototypeUpdate)) return;
    const std::size_t hard = cfg.has(Ablation::AssignmentHard) ? argmax(refined) : 0;
    const double omega = cfg.has(Ablation::NoSourceAnchor) ? 0.0 : cfg.omega_mu;
    for (std::size_t k = 0; k < bank.num_classes(); ++k) {
        double assignment = refined[k];
        if (cfg.has(Ablation::AssignmentHard)) assignment = (k == hard) ? 1.0 : 0.0;
        const double w = cfg.eta_mu * assignment;
        auto mu = bank.current_.row(k);
        auto anchor = bank.anchors_.row(k);
        for (std::size_t i = 0; i < mu.size(); ++i) scratch[i] = (1.0 - w) * mu[i] + w * observed[i];
        kernel::normalize(scratch, scratch, cfg.epsilon);
        for (std::size_t i = 0; i < mu.size(); ++i) {
            scratch[i] = (1.0 - omega) * scratch[i] + omega * anchor[i];
        }
        kernel::normalize(scratch, mu, cfg.epsilon);
    }
}

// ---------------------------------------------------------------------------
// Value-returning operations.

inline UnitVector expected_state(const PrototypeBank& bank, const ProbVector& prev_belief,
                                 double eps = kDefaultEpsilon) {
    kernel::require_same_size(prev_belief.size(), bank.num_classes(), "expected_state");
    std::vector<double> out(bank.dim());
    detail::expected_state(bank, prev_belief.span(), eps, out);
    return UnitVector::trusted(std::move(out));
}

struct SurpriseResult {
    double discrepancy = 0.0;
    double lambda = 0.0;
};

inline SurpriseResult surprise(const UnitVector& observed, const UnitVector& expected,
                               const SightConfig& cfg) {
    kernel::require_same_size(observed.size(), expected.size(), "surprise");
    const auto s = detail::surprise(observed.span(), expected.span(), cfg);
    return {s.discrepancy, s.lambda};
}

inline ProbVector geometric_routing(const UnitVector& observed, const UnitVector& expected,
                                    const PrototypeBank& bank, const SightConfig& cfg) {
    kernel::require_same_size(observed.size(), bank.dim(), "geometric_routing");
    kernel::require_same_size(expected.size(), bank.dim(), "geometric_routing");
    std::vector<double> disp(bank.dim()), dir(bank.dim()), scores(bank.num_classes()),
        out(bank.num_classes());
    detail::geometric_routing(observed.span(), expected.span(), bank, cfg, disp, dir, scores, out);
    return ProbVector::trusted(std::move(out));
}

inline ProbVector calibrate_prior(const ProbVector& routing, const ProbVector& habit,
                                  const SightConfig& cfg) {
    kernel::require_same_size(routing.size(), habit.size(), "calibrate_prior");
    std::vector<double> flat(habit.size()), out(habit.size());
    detail::calibrate_prior(routing.span(), habit.span(), cfg, flat, out);
    return ProbVector::trusted(std::move(out));
}

struct RefineResult {
    ProbVector prior;    // pi_t
    ProbVector refined;  // q_t
    bool annihilated = false;
};

inline RefineResult refine(const ProbVector& raw, const ProbVector& prev_belief, double lambda,
                           const ProbVector& rho, double eps = kDefaultEpsilon) {
    if (!(lambda >= 0.0 && lambda <= 1.0)) {
        fail(ErrorKind::Parameter, "refine: lambda must lie in [0, 1]");
    }
    kernel::require_same_size(raw.size(), prev_belief.size(), "refine");
    kernel::require_same_size(raw.size(), rho.size(), "refine");
    std::vector<double> pi(raw.size()), q(raw.size());
    const bool annihilated = detail::refine(raw.span(), prev_belief.span(), lambda, rho.span(), eps, pi, q);
    return {ProbVector::trusted(std::move(pi)), ProbVector::trusted(std::move(q)), annihilated};
}

inline ProbVector update_habit(const ProbVector& habit, const ProbVector& refined,
                               const SightConfig& cfg) {
    kernel::require_same_size(habit.size(), refined.size(), "update_habit");
    std::vector<double> h = habit.values();
    detail::update_habit(h, refined.span(), cfg);
    return ProbVector::trusted(std::move(h));
}

inline PrototypeBank update_prototypes(PrototypeBank bank, const UnitVector& observed,
                                       const ProbVector& refined, const SightConfig& cfg) {
    kernel::require_same_size(observed.size(), bank.dim(), "update_prototypes");
    kernel::require_same_size(refined.size(), bank.num_classes(), "update_prototypes");
    std::vector<double> scratch(bank.dim());
    update_prototypes_inplace(bank, observed.span(), refined.span(), cfg, scratch);
    return bank;
}

// ---------------------------------------------------------------------------

struct AdapterOptions {
    bool snapshot_prototypes = false;
};

/// Streaming adapter owning one AdapterState. Copyable and movable; never
/// shared between threads.
class SightAdapter {
public:
    SightAdapter(PrototypeBank bank, SightConfig config, AdapterOptions options = {})
        : SightAdapter(AdapterState::initial(std::move(bank), config), options) {}

    explicit SightAdapter(AdapterState state, AdapterOptions options = {})
        : state_(std::move(state)), options_(options) {
        state_.config.validate();
        const std::size_t d = state_.dim();
        const std::size_t k = state_.num_classes();
        observed_.resize(d);
        scratch_d_.resize(d);
        direction_.resize(d);
        scores_.resize(k);
        scratch_k_.resize(k);
        if (state_.prev_belief) prev_.assign(state_.prev_belief->values().begin(), state_.prev_belief->values().end());
        habit_ = state_.habit.values();
        prev_.resize(k);
    }

    static constexpr std::string_view name() noexcept { return "sight"; }

    /// Advances the stream by one record. The returned reference stays valid
    /// until the next call.
    const StepTrace& step(const StreamRecord& record) {
        step_into(record, trace_);
        return trace_;
    }

    /// Same as step() but writes into a caller-owned trace, reusing its buffers.
    void step_into(const StreamRecord& record, StepTrace& trace) {
        const SightConfig& cfg = state_.config;
        const std::size_t d = state_.dim();
        const std::size_t k = state_.num_classes();
        detail::require_record_shape(record, d, k, state_.step);
        kernel::require_finite(record.feature, "record feature");

        trace.step = state_.step;
        trace.label = record.label;
        trace.raw.resize(k);
        trace.expected_state.resize(d);
        trace.routing.resize(k);
        trace.calibrated_prior.resize(k);
        trace.temporal_prior.resize(k);
        trace.refined.resize(k);
        trace.annihilated = false;
        trace.degenerate_expectation = false;

        kernel::normalize(record.feature, observed_, cfg.epsilon);
        detail::raw_prediction(record, trace.raw, cfg.epsilon);

        if (state_.step == 0) {
            const double u = 1.0 / static_cast<double>(k);
            std::copy(observed_.begin(), observed_.end(), trace.expected_state.begin());
            trace.discrepancy = 0.0;
            trace.surprise = 0.0;
            std::fill(trace.routing.begin(), trace.routing.end(), u);
            std::fill(trace.calibrated_prior.begin(), trace.calibrated_prior.end(), u);
            std::fill(trace.temporal_prior.begin(), trace.temporal_prior.end(), u);
            std::copy(trace.raw.begin(), trace.raw.end(), trace.refined.begin());
        } else {
            trace.degenerate_expectation =
                !detail::expected_state(state_.bank, prev_, cfg.epsilon, trace.expected_state);
            const auto s = detail::surprise(observed_, trace.expected_state, cfg);
            trace.discrepancy = s.discrepancy;
            trace.surprise = s.lambda;
            detail::geometric_routing(observed_, trace.expected_state, state_.bank, cfg, scratch_d_,
                                      direction_, scores_, trace.routing);
            detail::calibrate_prior(trace.routing, habit_, cfg, scratch_k_, trace.calibrated_prior);
            trace.annihilated = detail::refine(trace.raw, prev_, s.lambda, trace.calibrated_prior,
                                               cfg.epsilon, trace.temporal_prior, trace.refined);
        }

        detail::update_habit(habit_, trace.refined, cfg);
        update_prototypes_inplace(state_.bank, observed_, trace.refined, cfg, scratch_d_);
        std::copy(trace.refined.begin(), trace.refined.end(), prev_.begin());
        ++state_.step;

        if (options_.snapshot_prototypes) {
            trace.prototypes = state_.bank.prototypes();
        } else {
            trace.prototypes.reset();
        }
    }

    /// Snapshot of the current state (habit and belief synced from the hot buffers).
    AdapterState state() const {
        AdapterState s = state_;
        s.habit = ProbVector::trusted(habit_);
        if (s.step > 0) s.prev_belief = ProbVector::trusted(prev_);
        return s;
    }

    const PrototypeBank& bank() const noexcept { return state_.bank; }
    std::uint64_t steps() const noexcept { return state_.step; }
    const SightConfig& config() const noexcept { return state_.config; }

private:
    AdapterState state_;
    AdapterOptions options_;
    std::vector<double> habit_;
    std::vector<double> prev_;
    std::vector<double> observed_;
    std::vector<double> scratch_d_;
    std::vector<double> direction_;
    std::vector<double> scores_;
    std::vector<double> scratch_k_;
    StepTrace trace_;
};

struct StepOutcome {
    ProbVector refined;
    StepTrace trace;
    AdapterState state;
};

/// Pure transition (state, record) -> (q_t, trace, state'). The input state is
/// consumed; state' is its only successor.
inline StepOutcome step(AdapterState state, const StreamRecord& record) {
    SightAdapter adapter(std::move(state));
    StepTrace trace;
    adapter.step_into(record, trace);
    ProbVector refined = ProbVector::trusted(trace.refined);
    return {std::move(refined), std::move(trace), adapter.state()};
}

}  // namespace sight
