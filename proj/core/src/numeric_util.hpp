#pragma once

// Internal helper: keep a perturbed value inside an infinity-norm ball around
// its start point, judged on the stored doubles. Forming x + delta (or
// clamping to x +- eps) rounds, so the stored difference can land one ulp
// outside the ball even when the intended delta is inside it. Downstream
// audits recompute v - x from the stored values and compare against eps with
// zero tolerance, so the guard below tests exactly that expression and walks
// v toward x until it holds.

#include <cmath>

namespace stackelgrad::detail {

inline double snap_into_ball(double v, double x, double eps) {
    while (v - x > eps) v = std::nextafter(v, x);
    while (x - v > eps) v = std::nextafter(v, x);
    return v;
}

}  // namespace stackelgrad::detail
