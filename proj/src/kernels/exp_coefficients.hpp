#pragma once

// Shared constants for the vector exp used by the SIMD kernel variants.
// Range reduction y = n ln2 + r with |r| <= ln2 / 2, then a degree-13 Taylor
// polynomial for e^r (truncation error < 1e-17 relative).

namespace mirrorcap::kernels::detail::expc {

inline constexpr double kCutoff = 708.0;
inline constexpr double kLog2e = 1.4426950408889634074;
inline constexpr double kLn2Hi = 6.93145751953125e-1;
inline constexpr double kLn2Lo = 1.42860682030941723212e-6;

// 1/k! for k = 13 down to 0, in Horner order.
inline constexpr double kTaylor[14] = {
    1.0 / 6227020800.0, 1.0 / 479001600.0, 1.0 / 39916800.0, 1.0 / 3628800.0,
    1.0 / 362880.0,     1.0 / 40320.0,     1.0 / 5040.0,      1.0 / 720.0,
    1.0 / 120.0,        1.0 / 24.0,        1.0 / 6.0,         0.5,
    1.0,                1.0,
};

}  // namespace mirrorcap::kernels::detail::expc
