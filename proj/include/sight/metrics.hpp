#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sight/adapter.hpp"
#include "sight/error.hpp"
#include "sight/geometry.hpp"
#include "sight/matrix.hpp"

namespace sight::metrics {

/// K x K counts, rows = ground truth, columns = prediction. Merging adds.
class ConfusionMatrix {
public:
    explicit ConfusionMatrix(std::size_t num_classes = 0)
        : k_(num_classes), counts_(num_classes * num_classes, 0) {}

    void add(std::size_t label, std::size_t predicted) {
        if (label >= k_ || predicted >= k_) {
            fail(ErrorKind::Validation, "class index out of range for K=" + std::to_string(k_));
        }
        ++counts_[label * k_ + predicted];
    }

    ConfusionMatrix& operator+=(const ConfusionMatrix& other) {
        kernel::require_same_size(k_, other.k_, "confusion merge");
        for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
        return *this;
    }

    std::size_t num_classes() const noexcept { return k_; }
    std::uint64_t operator()(std::size_t label, std::size_t predicted) const { return counts_[label * k_ + predicted]; }

    std::uint64_t label_count(std::size_t c) const {
        std::uint64_t s = 0;
        for (std::size_t j = 0; j < k_; ++j) s += (*this)(c, j);
        return s;
    }
    std::uint64_t predicted_count(std::size_t c) const {
        std::uint64_t s = 0;
        for (std::size_t i = 0; i < k_; ++i) s += (*this)(i, c);
        return s;
    }
    std::uint64_t total() const {
        std::uint64_t s = 0;
        for (auto c : counts_) s += c;
        return s;
    }

    /// F1 of class c; 0 when it has neither true nor predicted positives.
    double f1(std::size_t c) const {
        const double tp = static_cast<double>((*this)(c, c));
        const double denom = static_cast<double>(label_count(c) + predicted_count(c));
        return denom == 0.0 ? 0.0 : 2.0 * tp / denom;
    }

    /// Per-class F1; classes absent from the ground truth are nullopt.
    std::vector<std::optional<double>> per_class_f1() const {
        std::vector<std::optional<double>> out(k_);
        for (std::size_t c = 0; c < k_; ++c) {
            if (label_count(c) > 0) out[c] = f1(c);
        }
        return out;
    }

    /// Unweighted mean of F1 over classes present in the ground truth.
    double macro_f1() const {
        double s = 0.0;
        std::size_t n = 0;
        for (std::size_t c = 0; c < k_; ++c) {
            if (label_count(c) == 0) continue;
            s += f1(c);
            ++n;
        }
        return n == 0 ? 0.0 : s / static_cast<double>(n);
    }

    double accuracy() const {
        const auto n = total();
        if (n == 0) return 0.0;
        std::uint64_t hits = 0;
        for (std::size_t c = 0; c < k_; ++c) hits += (*this)(c, c);
        return static_cast<double>(hits) / static_cast<double>(n);
    }

    std::vector<std::vector<std::uint64_t>> to_rows() const {
        std::vector<std::vector<std::uint64_t>> rows(k_, std::vector<std::uint64_t>(k_));
        for (std::size_t i = 0; i < k_; ++i) {
            for (std::size_t j = 0; j < k_; ++j) rows[i][j] = (*this)(i, j);
        }
        return rows;
    }

    friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;

private:
    std::size_t k_;
    std::vector<std::uint64_t> counts_;
};

inline ConfusionMatrix confusion(std::span<const int> predictions, std::span<const int> labels,
                                 std::size_t num_classes) {
    if (predictions.size() != labels.size()) {
        fail(ErrorKind::Dimension, "predictions and labels differ in length: " +
                                       std::to_string(predictions.size()) + " vs " +
                                       std::to_string(labels.size()));
    }
    ConfusionMatrix cm(num_classes);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0 || predictions[i] < 0) fail(ErrorKind::Validation, "negative class index");
        cm.add(static_cast<std::size_t>(labels[i]), static_cast<std::size_t>(predictions[i]));
    }
    return cm;
}

inline double macro_f1(std::span<const int> predictions, std::span<const int> labels,
                       std::size_t num_classes) {
    if (labels.empty()) fail(ErrorKind::Dimension, "macro_f1 needs at least one labeled step");
    return confusion(predictions, labels, num_classes).macro_f1();
}

// ---------------------------------------------------------------------------

struct GateDiagnostics {
    std::optional<double> lambda_within;    // mean lambda where label_t == label_{t-1}
    std::optional<double> lambda_boundary;  // mean lambda where the label changed
    std::size_t within_steps = 0;
    std::size_t boundary_steps = 0;
};

/// Splits lambda by whether the ground-truth label changed. The first step
/// has no predecessor and is counted in neither set.
inline GateDiagnostics gate_diagnostics(std::span<const StepTrace> traces, std::span<const int> labels) {
    kernel::require_same_size(traces.size(), labels.size(), "gate_diagnostics");
    GateDiagnostics g;
    double within = 0.0, boundary = 0.0;
    for (std::size_t t = 1; t < traces.size(); ++t) {
        if (labels[t] == labels[t - 1]) {
            within += traces[t].surprise;
            ++g.within_steps;
        } else {
            boundary += traces[t].surprise;
            ++g.boundary_steps;
        }
    }
    if (g.within_steps > 0) g.lambda_within = within / static_cast<double>(g.within_steps);
    if (g.boundary_steps > 0) g.lambda_boundary = boundary / static_cast<double>(g.boundary_steps);
    return g;
}

// ---------------------------------------------------------------------------

struct ClassAlignment {
    std::size_t class_index = 0;
    std::size_t segments = 0;
    double first_segment_mean_cos = 0.0;
    double last_segment_mean_cos = 0.0;
};

struct AlignmentReport {
    std::vector<ClassAlignment> classes;  // only classes with >= 2 segments
    std::vector<std::string> notes;       // skipped classes
};

/// Mean cosine between each class prototype (post-step snapshot) and its
/// normalized ground-truth centroid, over the first and last segment of that
/// class. Requires traces recorded with prototype snapshots.
inline AlignmentReport prototype_alignment(std::span<const StepTrace> traces, std::span<const int> labels,
                                           const Matrix& class_means, double eps = kDefaultEpsilon) {
    kernel::require_same_size(traces.size(), labels.size(), "prototype_alignment");
    const std::size_t k = class_means.rows();
    Matrix centroids(k, class_means.cols());
    for (std::size_t c = 0; c < k; ++c) kernel::normalize(class_means.row(c), centroids.row(c), eps);

    struct Segment {
        std::size_t begin, end;
    };
    std::vector<std::vector<Segment>> segments(k);
    for (std::size_t t = 0; t < labels.size();) {
        std::size_t e = t + 1;
        while (e < labels.size() && labels[e] == labels[t]) ++e;
        if (labels[t] < 0 || static_cast<std::size_t>(labels[t]) >= k) {
            fail(ErrorKind::Validation, "label out of range at step " + std::to_string(t));
        }
        segments[static_cast<std::size_t>(labels[t])].push_back({t, e});
        t = e;
    }

    auto segment_mean = [&](std::size_t c, const Segment& s) {
        double acc = 0.0;
        for (std::size_t t = s.begin; t < s.end; ++t) {
            if (!traces[t].prototypes) {
                fail(ErrorKind::InsufficientData, "trace step " + std::to_string(t) + " has no prototype snapshot");
            }
            acc += kernel::dot(traces[t].prototypes->row(c), centroids.row(c));
        }
        return acc / static_cast<double>(s.end - s.begin);
    };

    AlignmentReport rep;
    for (std::size_t c = 0; c < k; ++c) {
        if (segments[c].size() < 2) {
            rep.notes.push_back("class " + std::to_string(c) + " skipped: " +
                                std::to_string(segments[c].size()) + " segment(s)");
            continue;
        }
        rep.classes.push_back({c, segments[c].size(), segment_mean(c, segments[c].front()),
                               segment_mean(c, segments[c].back())});
    }
    return rep;
}

// ---------------------------------------------------------------------------

struct EvalReport {
    std::optional<double> macro_f1;  // absent for unlabeled streams
    std::vector<std::optional<double>> per_class_f1;
    ConfusionMatrix confusion;
    std::optional<double> accuracy;
    std::size_t n_steps = 0;
    std::size_t n_labeled = 0;
    std::size_t annihilation_count = 0;
    double mean_lambda = 0.0;
    std::optional<double> lambda_at_boundaries;
    std::optional<double> lambda_within_segments;
};

/// Aggregates a run. Labels come from the traces; lambda statistics use only
/// steps after the first. Gate statistics need every step labeled.
inline EvalReport evaluate(std::span<const StepTrace> traces, std::size_t num_classes) {
    EvalReport rep;
    rep.confusion = ConfusionMatrix(num_classes);
    rep.n_steps = traces.size();
    double lambda_sum = 0.0;
    bool all_labeled = !traces.empty();
    std::vector<int> labels;
    labels.reserve(traces.size());
    for (const auto& tr : traces) {
        if (tr.annihilated) ++rep.annihilation_count;
        lambda_sum += tr.surprise;
        if (tr.label) {
            rep.confusion.add(static_cast<std::size_t>(*tr.label), tr.predicted());
            ++rep.n_labeled;
            labels.push_back(*tr.label);
        } else {
            all_labeled = false;
        }
    }
    rep.mean_lambda = traces.size() > 1 ? lambda_sum / static_cast<double>(traces.size() - 1) : 0.0;
    if (rep.n_labeled > 0) {
        rep.macro_f1 = rep.confusion.macro_f1();
        rep.per_class_f1 = rep.confusion.per_class_f1();
        rep.accuracy = rep.confusion.accuracy();
    }
    if (all_labeled) {
        const auto g = gate_diagnostics(traces, labels);
        rep.lambda_at_boundaries = g.lambda_boundary;
        rep.lambda_within_segments = g.lambda_within;
    }
    return rep;
}

}  // namespace sight::metrics
