#pragma once

// JSON and text renderings of evaluation outputs.

#include <cstdio>
#include <optional>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "sight/bench.hpp"
#include "sight/io.hpp"
#include "sight/metrics.hpp"
#include "sight/runner.hpp"
#include "sight/simulator.hpp"

namespace sight::io {

namespace detail {

inline json opt(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

}  // namespace detail

inline json to_json(const metrics::EvalReport& r) {
    json per_class = json::array();
    for (const auto& f : r.per_class_f1) per_class.push_back(detail::opt(f));
    return {{"macro_f1", detail::opt(r.macro_f1)},
            {"per_class_f1", per_class},
            {"confusion", r.confusion.to_rows()},
            {"accuracy", detail::opt(r.accuracy)},
            {"n_steps", r.n_steps},
            {"n_labeled", r.n_labeled},
            {"annihilation_count", r.annihilation_count},
            {"mean_lambda", r.mean_lambda},
            {"lambda_at_boundaries", detail::opt(r.lambda_at_boundaries)},
            {"lambda_within_segments", detail::opt(r.lambda_within_segments)}};
}

inline json to_json(const sim::GeometryReport& g) {
    return {{"within_mean", g.within_mean},
            {"within_sd", g.within_sd},
            {"within_count", g.within_similarities.size()},
            {"boundary_mean", g.boundary_mean},
            {"boundary_sd", g.boundary_sd},
            {"boundary_count", g.boundary_similarities.size()},
            {"pooled_sd", g.pooled_sd},
            {"separability", g.separability},
            {"directional_hits", g.directional_hits},
            {"directional_top1", g.directional_top1},
            {"random_baseline", g.random_baseline}};
}

inline json to_json(const metrics::AlignmentReport& a) {
    json classes = json::array();
    for (const auto& c : a.classes) {
        classes.push_back({{"class", c.class_index},
                           {"segments", c.segments},
                           {"first_segment_mean_cos", c.first_segment_mean_cos},
                           {"last_segment_mean_cos", c.last_segment_mean_cos}});
    }
    return {{"classes", classes}};
}

inline json to_json(const PermTable& t) {
    json cells = json::array();
    for (const auto& c : t.cells) {
        cells.push_back({{"method", c.method},
                         {"order", sim::to_string(c.mode)},
                         {"per_seed", c.per_seed},
                         {"mean", c.mean},
                         {"sd", c.sd}});
    }
    return {{"format_version", kFormatVersion}, {"kind", "perm_test"}, {"seeds", t.seeds}, {"cells", cells}};
}

inline json to_json(const bench::StateSizeFit& f) {
    return {{"c_kd", f.c_kd},
            {"c_k", f.c_k},
            {"c_0", f.c_0},
            {"max_relative_residual", f.max_relative_residual},
            {"samples", f.samples.size()}};
}

inline json to_json(const bench::LatencyReport& r) {
    return {{"num_classes", r.num_classes}, {"feature_dim", r.feature_dim}, {"steps", r.steps},
            {"mean_ms", r.mean_ms},         {"p50_ms", r.p50_ms},           {"p95_ms", r.p95_ms},
            {"p99_ms", r.p99_ms}};
}

/// Method rows by ordering columns, "mean ± sd" in macro-F1 points.
inline std::string format_perm_table(const PermTable& t) {
    std::size_t width = 6;
    for (const auto& c : t.cells) width = std::max(width, c.method.size());
    std::ostringstream out;
    char buf[64];
    out << std::string(width, ' ');
    for (auto mode : kPermutationModes) {
        std::snprintf(buf, sizeof buf, "  %16s", std::string(sim::to_string(mode)).c_str());
        out << buf;
    }
    out << '\n';
    for (std::size_t i = 0; i < t.cells.size(); i += kPermutationModes.size()) {
        out << t.cells[i].method << std::string(width - t.cells[i].method.size(), ' ');
        for (std::size_t m = 0; m < kPermutationModes.size() && i + m < t.cells.size(); ++m) {
            const auto& c = t.cells[i + m];
            std::snprintf(buf, sizeof buf, "  %7.2f ± %6.2f", 100.0 * c.mean, 100.0 * c.sd);
            out << buf;
        }
        out << '\n';
    }
    return out.str();
}

}  // namespace sight::io
