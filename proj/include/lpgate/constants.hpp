#pragma once

#include <numbers>

namespace lpgate {

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

// CODATA 2018 exact / recommended values, SI.
inline constexpr double kElementaryCharge = 1.602176634e-19;  // C
inline constexpr double kCoulombConstant = 8.9875517923e9;    // N m^2 / C^2
inline constexpr double kAtomicMassUnit = 1.66053906660e-27;  // kg

}  // namespace lpgate
