#pragma once

#include <algorithm>
#include <cmath>

#include "mvgs/projection.hpp"

namespace mvgs::detail {

struct SplatEval {
    double dx = 0.0;
    double dy = 0.0;
    double g = 0.0;      // exp(power)
    double alpha = 0.0;  // opacity * g
};

inline SplatEval eval_splat(const Projected2D& p, double opacity, double px, double py) {
    SplatEval e;
    e.dx = px - p.mean2d.x;
    e.dy = py - p.mean2d.y;
    const Sym2& a = p.cov2d_inv;
    const double power = -0.5 * (a.xx * e.dx * e.dx + a.yy * e.dy * e.dy) - a.xy * e.dx * e.dy;
    e.g = std::exp(power);
    e.alpha = opacity * e.g;
    return e;
}

inline double clamp_unit(double v) { return std::clamp(v, 0.0, 1.0); }

}  // namespace mvgs::detail
