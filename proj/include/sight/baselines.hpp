#pragma once

// Backpropagation-free reference methods sharing SightAdapter's step
// interface. Only `raw`, `temporal_prior` and `refined` carry information in
// their traces; the geometric fields hold neutral sentinels.

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "sight/adapter.hpp"
#include "sight/error.hpp"
#include "sight/geometry.hpp"
#include "sight/matrix.hpp"
#include "sight/record.hpp"

namespace sight {

namespace detail {

inline void begin_baseline_trace(StepTrace& trace, const StreamRecord& record, std::uint64_t step,
                                 std::size_t k) {
    const double u = 1.0 / static_cast<double>(k);
    trace.step = step;
    trace.label = record.label;
    trace.raw.resize(k);
    trace.expected_state.clear();
    trace.discrepancy = 0.0;
    trace.surprise = 0.0;
    trace.routing.assign(k, u);
    trace.calibrated_prior.assign(k, u);
    trace.temporal_prior.assign(k, u);
    trace.refined.resize(k);
    trace.annihilated = false;
    trace.degenerate_expectation = false;
    trace.prototypes.reset();
}

inline void require_scores(const StreamRecord& record, std::size_t k, std::uint64_t step) {
    if (record.scores.size() != k) {
        fail(ErrorKind::StreamContract, "step " + std::to_string(step) + ": record has K=" +
                                            std::to_string(record.scores.size()) +
                                            " but the stream is K=" + std::to_string(k));
    }
}

}  // namespace detail

/// Stateless softmax of the record's logits.
inline ProbVector source_only_step(const StreamRecord& record) {
    if (record.scores.size() < 2) fail(ErrorKind::Dimension, "source_only_step: K must be >= 2");
    std::vector<double> out(record.scores.size());
    detail::raw_prediction(record, out, kDefaultEpsilon);
    return ProbVector::trusted(std::move(out));
}

class SourceOnly {
public:
    explicit SourceOnly(std::size_t num_classes) : k_(num_classes) {}

    static constexpr std::string_view name() noexcept { return "source-only"; }

    const StepTrace& step(const StreamRecord& record) {
        detail::require_scores(record, k_, step_);
        detail::begin_baseline_trace(trace_, record, step_, k_);
        detail::raw_prediction(record, trace_.raw, kDefaultEpsilon);
        trace_.refined = trace_.raw;
        ++step_;
        return trace_;
    }

private:
    std::size_t k_;
    std::uint64_t step_ = 0;
    StepTrace trace_;
};

/// Fixed-inertia smoothing: q_t = normalize(p_t * (alpha q_{t-1} + (1 - alpha) / K)).
struct PersistenceState {
    std::optional<ProbVector> prev_belief;
    std::uint64_t step = 0;
};

inline std::pair<ProbVector, PersistenceState> persistence_step(PersistenceState state,
                                                                const StreamRecord& record,
                                                                double alpha) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) fail(ErrorKind::Parameter, "persistence alpha must lie in [0, 1]");
    const std::size_t k = record.scores.size();
    std::vector<double> p(k);
    detail::raw_prediction(record, p, kDefaultEpsilon);
    if (!state.prev_belief) {
        state.prev_belief = ProbVector::trusted(p);
        ++state.step;
        return {ProbVector::trusted(std::move(p)), std::move(state)};
    }
    detail::require_scores(record, state.prev_belief->size(), state.step);
    const double u = 1.0 / static_cast<double>(k);
    std::vector<double> q(k);
    for (std::size_t i = 0; i < k; ++i) {
        q[i] = p[i] * (alpha * (*state.prev_belief)[i] + (1.0 - alpha) * u);
    }
    kernel::simplex_project(q, q, kDefaultEpsilon);
    state.prev_belief = ProbVector::trusted(q);
    ++state.step;
    return {ProbVector::trusted(std::move(q)), std::move(state)};
}

class Persistence {
public:
    Persistence(std::size_t num_classes, double alpha) : k_(num_classes), alpha_(alpha) {
        if (!(alpha >= 0.0 && alpha <= 1.0)) fail(ErrorKind::Parameter, "persistence alpha must lie in [0, 1]");
        prev_.resize(k_);
    }

    static constexpr std::string_view name() noexcept { return "persistence"; }

    const StepTrace& step(const StreamRecord& record) {
        detail::require_scores(record, k_, step_);
        detail::begin_baseline_trace(trace_, record, step_, k_);
        detail::raw_prediction(record, trace_.raw, kDefaultEpsilon);
        if (step_ == 0) {
            trace_.refined = trace_.raw;
        } else {
            const double u = 1.0 / static_cast<double>(k_);
            for (std::size_t i = 0; i < k_; ++i) {
                trace_.temporal_prior[i] = alpha_ * prev_[i] + (1.0 - alpha_) * u;
                trace_.refined[i] = trace_.raw[i] * trace_.temporal_prior[i];
            }
            trace_.annihilated = !kernel::simplex_project(trace_.refined, trace_.refined, kDefaultEpsilon);
        }
        prev_ = trace_.refined;
        ++step_;
        return trace_;
    }

private:
    std::size_t k_;
    double alpha_;
    std::uint64_t step_ = 0;
    std::vector<double> prev_;
    StepTrace trace_;
};

/// First-order output-space transition prior estimated from the method's own
/// hard decisions (Dirichlet pseudo-count `smoothing_alpha` per cell).
struct MarkovPriorState {
    Matrix transition_counts;
    std::optional<std::size_t> prev_hard_label;
    double smoothing_alpha = 1.0;
    std::uint64_t step = 0;

    static MarkovPriorState initial(std::size_t num_classes, double smoothing_alpha = 1.0) {
        if (!(smoothing_alpha > 0.0)) fail(ErrorKind::Parameter, "markov smoothing must be positive");
        MarkovPriorState s;
        s.transition_counts = Matrix(num_classes, num_classes, smoothing_alpha);
        s.smoothing_alpha = smoothing_alpha;
        return s;
    }

    /// Row-normalized transition estimate.
    Matrix transition_matrix() const {
        Matrix m = transition_counts;
        for (std::size_t r = 0; r < m.rows(); ++r) {
            auto row = m.row(r);
            double s = 0.0;
            for (double x : row) s += x;
            for (double& x : row) x /= s;
        }
        return m;
    }
};

namespace detail {

inline bool markov_refine(MarkovPriorState& state, std::span<const double> raw,
                          std::span<double> prior, std::span<double> refined) {
    const std::size_t k = raw.size();
    if (state.prev_hard_label) {
        auto row = state.transition_counts.row(*state.prev_hard_label);
        double s = 0.0;
        for (double x : row) s += x;
        for (std::size_t i = 0; i < k; ++i) prior[i] = row[i] / s;
    } else {
        std::fill(prior.begin(), prior.end(), 1.0 / static_cast<double>(k));
    }
    for (std::size_t i = 0; i < k; ++i) refined[i] = raw[i] * prior[i];
    const bool annihilated = !kernel::simplex_project(refined, refined, kDefaultEpsilon);
    const std::size_t hard = argmax(refined);
    if (state.prev_hard_label) state.transition_counts(*state.prev_hard_label, hard) += 1.0;
    state.prev_hard_label = hard;
    ++state.step;
    return annihilated;
}

}  // namespace detail

inline std::pair<ProbVector, MarkovPriorState> markov_prior_step(MarkovPriorState state,
                                                                 const StreamRecord& record) {
    const std::size_t k = state.transition_counts.rows();
    detail::require_scores(record, k, state.step);
    std::vector<double> p(k), prior(k), q(k);
    detail::raw_prediction(record, p, kDefaultEpsilon);
    detail::markov_refine(state, p, prior, q);
    return {ProbVector::trusted(std::move(q)), std::move(state)};
}

class MarkovPrior {
public:
    MarkovPrior(std::size_t num_classes, double smoothing_alpha = 1.0)
        : state_(MarkovPriorState::initial(num_classes, smoothing_alpha)) {}

    static constexpr std::string_view name() noexcept { return "markov"; }

    const StepTrace& step(const StreamRecord& record) {
        const std::size_t k = state_.transition_counts.rows();
        detail::require_scores(record, k, state_.step);
        detail::begin_baseline_trace(trace_, record, state_.step, k);
        detail::raw_prediction(record, trace_.raw, kDefaultEpsilon);
        trace_.annihilated = detail::markov_refine(state_, trace_.raw, trace_.temporal_prior, trace_.refined);
        return trace_;
    }

    const MarkovPriorState& state() const noexcept { return state_; }

private:
    MarkovPriorState state_;
    StepTrace trace_;
};

}  // namespace sight
