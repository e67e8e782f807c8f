#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

#include <Eigen/Core>

namespace face {

using Rng = std::mt19937_64;

/// Stable 64-bit FNV-1a hash; used to derive per-site streams from ids.
std::uint64_t Fnv1a(std::string_view text);

/// Independent stream for (master seed, label, index). Streams depend only on
/// these three values, never on scheduling order.
Rng MakeStream(std::uint64_t seed, std::string_view label, std::uint64_t index);

/// Bootstrap resample indices of size n.
std::vector<Eigen::Index> ResampleIndices(Eigen::Index n, Rng& rng);

}  // namespace face
