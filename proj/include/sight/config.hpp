#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "sight/error.hpp"
#include "sight/geometry.hpp"

namespace sight {

/// Switchable mechanism replacements and removals.
enum class Ablation : std::uint8_t {
    SurpriseFeatureDistance,  // D_t = ||z - z_expected|| instead of cosine distance
    HabitRaw,                 // habit used without square-root flattening
    AssignmentHard,           // prototype update with one-hot argmax assignment
    NoSourceAnchor,           // omega_mu treated as 0
    NoSurprise,               // lambda_t fixed (default 1)
    NoGeometricRouting,       // routing uniform
    NoHabitPrior,             // rho_t = r_t
    NoPrototypeUpdate,        // bank frozen
};

inline constexpr std::array<Ablation, 8> kAllAblations = {
    Ablation::SurpriseFeatureDistance, Ablation::HabitRaw,       Ablation::AssignmentHard,
    Ablation::NoSourceAnchor,          Ablation::NoSurprise,     Ablation::NoGeometricRouting,
    Ablation::NoHabitPrior,            Ablation::NoPrototypeUpdate,
};

constexpr std::string_view to_string(Ablation a) noexcept {
    switch (a) {
        case Ablation::SurpriseFeatureDistance: return "surprise_feature_distance";
        case Ablation::HabitRaw: return "habit_raw";
        case Ablation::AssignmentHard: return "assignment_hard";
        case Ablation::NoSourceAnchor: return "no_source_anchor";
        case Ablation::NoSurprise: return "no_surprise";
        case Ablation::NoGeometricRouting: return "no_geometric_routing";
        case Ablation::NoHabitPrior: return "no_habit_prior";
        case Ablation::NoPrototypeUpdate: return "no_prototype_update";
    }
    return "?";
}

inline std::optional<Ablation> parse_ablation(std::string_view name) {
    for (Ablation a : kAllAblations) {
        if (to_string(a) == name) return a;
    }
    return std::nullopt;
}

class AblationSet {
public:
    AblationSet() = default;
    AblationSet(std::initializer_list<Ablation> flags) {
        for (Ablation a : flags) insert(a);
    }

    void insert(Ablation a) noexcept { bits_ |= bit(a); }
    void erase(Ablation a) noexcept { bits_ &= static_cast<std::uint16_t>(~bit(a)); }
    bool contains(Ablation a) const noexcept { return (bits_ & bit(a)) != 0; }
    bool empty() const noexcept { return bits_ == 0; }

    std::vector<Ablation> to_vector() const {
        std::vector<Ablation> out;
        for (Ablation a : kAllAblations) {
            if (contains(a)) out.push_back(a);
        }
        return out;
    }

    friend bool operator==(const AblationSet&, const AblationSet&) = default;

private:
    static constexpr std::uint16_t bit(Ablation a) noexcept {
        return static_cast<std::uint16_t>(1u << static_cast<unsigned>(a));
    }
    std::uint16_t bits_ = 0;
};

/// Hyperparameters of one adaptation stream.
struct SightConfig {
    double beta = 1.0;      // surprise sensitivity
    double tau = 0.05;      // routing temperature
    double eta_mu = 0.005;  // prototype rate
    double eta_h = 0.05;    // habit rate
    double omega_mu = 0.01; // source anchoring strength
    double epsilon = kDefaultEpsilon;
    AblationSet ablations;
    // Constant lambda used when the NoSurprise ablation is active.
    double no_surprise_lambda = 1.0;

    bool has(Ablation a) const noexcept { return ablations.contains(a); }

    void validate() const {
        auto positive = [](double v, const char* name) {
            if (!(v > 0.0) || !std::isfinite(v)) {
                fail(ErrorKind::Parameter, std::string(name) + " must be positive and finite");
            }
        };
        auto unit = [](double v, const char* name) {
            if (!(v >= 0.0 && v <= 1.0)) {
                fail(ErrorKind::Parameter, std::string(name) + " must lie in [0, 1]");
            }
        };
        positive(beta, "beta");
        positive(tau, "tau");
        positive(epsilon, "epsilon");
        unit(eta_mu, "eta_mu");
        unit(eta_h, "eta_h");
        unit(omega_mu, "omega_mu");
        unit(no_surprise_lambda, "no_surprise_lambda");
    }

    friend bool operator==(const SightConfig&, const SightConfig&) = default;
};

}  // namespace sight
