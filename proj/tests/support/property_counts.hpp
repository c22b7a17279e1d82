#pragma once

#include <cstddef>

// Randomized case counts of the property suite, shared with the acceptance runner.
namespace sight::testing {

inline constexpr std::size_t kSimplexCases = 30000;
inline constexpr std::size_t kPrototypeCases = 10000;
inline constexpr std::size_t kGateCases = 20000;
inline constexpr std::size_t kSoftmaxCases = 20000;
inline constexpr std::size_t kNormalizeCases = 20000;
inline constexpr std::size_t kRoundTripCases = 12000;
inline constexpr std::size_t kPropertyCases =
    kSimplexCases + kPrototypeCases + kGateCases + kSoftmaxCases + kNormalizeCases + kRoundTripCases;

}  // namespace sight::testing
