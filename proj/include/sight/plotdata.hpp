#pragma once

// Tidy CSV outputs, one observation per row, for external plotting.

#include <cstddef>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sight/adapter.hpp"
#include "sight/error.hpp"
#include "sight/metrics.hpp"
#include "sight/runner.hpp"
#include "sight/simulator.hpp"

namespace sight::plot {

namespace detail {

inline std::ofstream open(const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) fail(ErrorKind::Format, "cannot write " + path.string());
    return out;
}

inline std::string num(double v) { return nlohmann::json(v).dump(); }

}  // namespace detail

/// step,label,predicted,lambda,discrepancy,annihilated
inline void write_step_series(const std::filesystem::path& path, std::span<const StepTrace> traces) {
    auto out = detail::open(path);
    out << "step,label,predicted,lambda,discrepancy,annihilated\n";
    for (const auto& t : traces) {
        out << t.step << ',';
        if (t.label) out << *t.label;
        out << ',' << t.predicted() << ',' << detail::num(t.surprise) << ',' << detail::num(t.discrepancy) << ','
            << (t.annihilated ? 1 : 0) << '\n';
    }
}

/// step,class,raw,routing,calibrated_prior,temporal_prior,refined
inline void write_class_series(const std::filesystem::path& path, std::span<const StepTrace> traces) {
    auto out = detail::open(path);
    out << "step,class,raw,routing,calibrated_prior,temporal_prior,refined\n";
    for (const auto& t : traces) {
        for (std::size_t k = 0; k < t.refined.size(); ++k) {
            out << t.step << ',' << k << ',' << detail::num(t.raw[k]) << ',' << detail::num(t.routing[k]) << ','
                << detail::num(t.calibrated_prior[k]) << ',' << detail::num(t.temporal_prior[k]) << ','
                << detail::num(t.refined[k]) << '\n';
        }
    }
}

/// set,similarity  (set is "within" or "boundary")
inline void write_geometry(const std::filesystem::path& path, const sim::GeometryReport& g) {
    auto out = detail::open(path);
    out << "set,similarity\n";
    for (double v : g.within_similarities) out << "within," << detail::num(v) << '\n';
    for (double v : g.boundary_similarities) out << "boundary," << detail::num(v) << '\n';
}

/// class,segments,occurrence,mean_cos  (occurrence is "first" or "last")
inline void write_alignment(const std::filesystem::path& path, const metrics::AlignmentReport& a) {
    auto out = detail::open(path);
    out << "class,segments,occurrence,mean_cos\n";
    for (const auto& c : a.classes) {
        out << c.class_index << ',' << c.segments << ",first," << detail::num(c.first_segment_mean_cos) << '\n';
        out << c.class_index << ',' << c.segments << ",last," << detail::num(c.last_segment_mean_cos) << '\n';
    }
}

/// method,order,seed,macro_f1
inline void write_perm_table(const std::filesystem::path& path, const PermTable& table) {
    auto out = detail::open(path);
    out << "method,order,seed,macro_f1\n";
    for (const auto& c : table.cells) {
        for (std::size_t s = 0; s < c.per_seed.size(); ++s) {
            out << c.method << ',' << sim::to_string(c.mode) << ',' << table.seeds[s] << ','
                << detail::num(c.per_seed[s]) << '\n';
        }
    }
}

}  // namespace sight::plot
