#pragma once

#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace sight {

/// Whether a stream carries raw head logits or already-normalized probabilities.
enum class ScoreKind { Logits, Probs };

constexpr std::string_view to_string(ScoreKind k) noexcept {
    return k == ScoreKind::Logits ? "logits" : "probs";
}

/// One time step of an exported stream: encoder feature z_t plus the head
/// output for that window.
struct StreamRecord {
    std::uint64_t index = 0;
    std::vector<double> feature;
    std::vector<double> scores;
    ScoreKind kind = ScoreKind::Logits;
    std::optional<int> label;
    nlohmann::json meta = nlohmann::json::object();

    friend bool operator==(const StreamRecord&, const StreamRecord&) = default;
};

}  // namespace sight
