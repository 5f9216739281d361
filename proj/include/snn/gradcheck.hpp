#pragma once

// Central finite-difference verification of every backward formula, plus the
// composed embed -> energy -> contrastive-loss pipeline, for both the 32-bit
// and the 64-bit tape.
//
// Conventions (declared here, asserted by the acceptance suite):
//   - relative error per coordinate = |analytic - fd| / max(|analytic|, |fd|, floor)
//   - floors: 1e-2 when checking 32-bit gradients (5e-2 for the composed
//     pipeline, whose float32 backward accumulates ~1e-5 of absolute
//     rounding per coordinate), 1e-3 for 64-bit
//   - steps h scale with max(1, |x|) and use the actually-representable
//     offset ((x+h) - x) as the divisor
//   - every coordinate is measured on a step ladder (h, 4h, 16h, h/4, h/16,
//     h/64, h/256, h/1024) and scored by its best rung: a genuine gradient
//     bug disagrees at every step size, while a ReLU/maxpool kink inside
//     (x-h, x+h) vanishes as the step moves.
//   - difference quotients are always evaluated on the 64-bit path, also
//     when the gradients under test are 32-bit. Single-precision forward
//     rounding (~1e-7 of the loss) divided by any usable step swamps a 1e-3
//     tolerance, so 32-bit differences cannot referee their own gradients;
//     that is what the 64-bit check mode is for. The 32-bit check builds the
//     same seeded instance in both precisions, anchors the 64-bit twin at
//     the exact float values (float -> double is lossless), and compares the
//     32-bit analytic gradients against the twin's difference quotients. The
//     1e-3 tolerance then covers genuine defects plus float32 rounding; the
//     64-bit check compares like against like at 1e-5.
//
// Op-level check inputs are constructed kink-free (activations bounded away
// from zero, pooling windows with separated values, pair distances clear of
// the margin), so the ladder never has to fire on a correct implementation.
// The composed pipeline keeps its pair distances clear of the hinge corner
// and the zero-distance cusp at the starting point and leans on the ladder
// for the interior kinks its own conv/pool stages introduce.

#include <cstdint>
#include <string>
#include <vector>

namespace snn {

struct GradCheckReport {
  std::string name;        // e.g. "conv2d[float32]"
  double max_rel_err = 0;  // worst coordinate over all instances
  double tolerance = 0;
  int instances = 0;
  bool passed = false;
};

// Run the full suite: every op and the composed pipeline, float32 (tol 1e-3)
// and float64 (tol 1e-5), `instances` seeded random instances each.
std::vector<GradCheckReport> run_gradient_checks(int instances, uint64_t seed);

bool gradient_checks_passed(const std::vector<GradCheckReport>& reports);

}  // namespace snn
