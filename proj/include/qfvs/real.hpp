#pragma once

namespace qfvs {

// One floating-point width for the whole engine. Gradient checks need 64-bit
// and the desk-scale workloads are small enough that float buys little.
using real = double;

namespace tol {
inline constexpr real grad_op = 1e-4;
inline constexpr real grad_composite = 1e-3;
inline constexpr real simplex = 1e-6;
}  // namespace tol

}  // namespace qfvs
