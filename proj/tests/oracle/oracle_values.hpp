#pragma once

// Generated by tests/oracle/oracle.py; do not edit.

#include <array>
#include <cstdint>

namespace oracle {

inline constexpr double kDensityPeak = 0.56418958354775628695;
inline constexpr double kCbar = 0.75;
inline constexpr double kMeanY = 0.5;
inline constexpr double kVarY = 0.5;
inline constexpr double kPhi2At0 = -0.3125;
inline constexpr double kPhi2AtM = -0.125;
inline constexpr double kPhi2Centering = 5.5285603475315048501e-46;
inline constexpr double kQbar1 = 1.0;
inline constexpr double kQbar2 = 1.375;
inline constexpr double kQbar2Rho05 = 1.875;
inline constexpr double kQbar2Gamma10 = 1.015;
inline constexpr double kQbar2Gamma100 = 1.00015;
inline constexpr double kLyapunovT1 = 0.43233235838169365405;
inline constexpr double kExpMinus1 = 0.3678794411714423216;
inline constexpr double kOrbitDecayT1 = 0.3678794411714423216;
inline constexpr double kLdpPredNu1 = 0.6065306597126334236;
inline constexpr double kLdpPredNu15 = 0.3246524673583497298;
inline constexpr double kGaussTailNu1 = 0.15865525393145705141;
inline constexpr double kGaussTailNu15 = 0.066807201268858066004;
inline constexpr double kKs99Threshold5000 = 0.023023396795433987394;
inline constexpr double kKolmogorovSurvival1 = 0.2699996716773545212;

inline constexpr std::array<std::uint32_t, 4> kPhiloxZero{0x6627e8d5u, 0xe169c58du, 0xbc57ac4cu, 0x9b00dbd8u};
inline constexpr std::array<std::uint32_t, 4> kPhiloxOnes{0x408f276du, 0x41c83b0eu, 0xa20bc7c6u, 0x6d5451fdu};
inline constexpr std::array<std::uint32_t, 4> kPhiloxPi{0xd16cfe09u, 0x94fdccebu, 0x5001e420u, 0x24126ea1u};

}  // namespace oracle
