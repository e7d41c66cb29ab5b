#pragma once

#include <cstdint>
#include <string>

#include "mvgs/losses.hpp"

namespace mvgs {

class ThreadPool;

struct GradcheckOptions {
    std::uint64_t seed = 1;
    int gaussians = 6;  // at most 10
    int size = 12;      // square image side, 8..16
    int views = 2;
    LossMode loss = LossMode::mix;
    double lambda = 0.5;
    double step = 1e-6;
    double rel_tol = 1e-4;
    double abs_tol = 1e-7;
};

struct GradcheckResult {
    int checked = 0;
    int failed = 0;
    double worst_rel = 0.0;  // among entries whose absolute difference exceeds abs_tol
    int worst_gaussian = -1;
    std::string worst_param;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;

    bool passed() const { return failed == 0; }
};

/// Name of flattened parameter k (0..13), e.g. "mean.y" or "quat.w".
std::string param_name(int k);

/// Random small scene and target; compares every analytic parameter gradient
/// of the chosen loss with central differences. Cutoffs (alpha_min, early
/// termination, screen radius) are disabled so the loss is smooth, and the
/// world points of the 3D kernel are frozen at the unperturbed render.
GradcheckResult gradcheck(const GradcheckOptions& opt, ThreadPool* pool = nullptr);

}  // namespace mvgs
