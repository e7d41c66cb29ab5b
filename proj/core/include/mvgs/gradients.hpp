#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "mvgs/rasterizer.hpp"

namespace mvgs {

class ThreadPool;

struct ParamGrads {
    std::vector<Vec3> d_mean;
    std::vector<Vec3> d_log_scale;
    std::vector<Quat> d_quat;
    std::vector<double> d_opacity_logit;
    std::vector<Vec3> d_color;

    ParamGrads() = default;
    explicit ParamGrads(std::size_t n) { resize(n); }

    void resize(std::size_t n);
    std::size_t size() const { return d_mean.size(); }
    /// Flattened in parameter order (mean, log_scale, quat, opacity, color) per gaussian.
    std::vector<double> flatten() const;
    bool all_finite() const;
};

/// NDC positional-gradient statistics from one backward pass.
struct StepGradStats {
    int n_views = 0;
    std::vector<Vec2> vec_sum;        // [gaussian * n_views + slot], sum over that view's pixels
    std::vector<double> norm_sum;     // sum over all pixels of the per-pixel norm
    std::vector<std::uint8_t> visible;  // projected inside the frustum of some view
    std::vector<double> max_radius;   // pixels

    void resize(std::size_t n_gaussians, int views);
    Vec2 view_sum(std::size_t g, int slot) const { return vec_sum[g * static_cast<std::size_t>(n_views) + static_cast<std::size_t>(slot)]; }
    Vec2& view_sum(std::size_t g, int slot) { return vec_sum[g * static_cast<std::size_t>(n_views) + static_cast<std::size_t>(slot)]; }
};

struct DensifyMetrics {
    double e_old = 0.0;
    double e1 = 0.0;
    double e2 = 0.0;
    bool valid = false;  // false when the gaussian was never visible (denom 0)
};

/// Per-step metrics of one gaussian: norm of the all-view sum, per-pixel norm
/// sum, and sum over views of the per-view norm.
DensifyMetrics step_metrics(const StepGradStats& stats, std::size_t g);

/// Running densification accumulators between two ADC events. Each step
/// contributes its own E_old / E1 / E2 terms; the mean over the steps in which
/// the gaussian was visible gives the metrics.
struct GradAccumulator {
    std::vector<double> e_old_sum;
    std::vector<double> e1_sum;
    std::vector<double> e2_sum;
    std::vector<int> denom;
    std::vector<double> max_screen_radius;

    void resize(std::size_t n);
    void reset();
    std::size_t size() const { return denom.size(); }
    void add(const StepGradStats& stats);
};

std::vector<DensifyMetrics> densify_metrics(const GradAccumulator& acc);

/// Loss gradients w.r.t. the rendered outputs, per plan slot.
struct PixelGrads {
    std::vector<std::vector<double>> d_color;  // [slot] width*height*3
    std::vector<std::vector<double>> d_depth;  // [slot] width*height, or empty

    static PixelGrads zeros(const RenderOutput& out, bool with_depth = false);
};

struct BackwardResult {
    ParamGrads grads;
    StepGradStats stats;
};

/// Adjoint of render(). Re-blends each rendered pixel front to back to recover
/// the per-gaussian transmittances, then accumulates back to front.
BackwardResult backward(const RenderPlan& plan, const RenderOutput& forward, const std::vector<Gaussian3D>& gaussians,
                        const std::vector<Camera>& cams, const PixelGrads& pixel_grads,
                        const RenderSettings& settings = {}, ThreadPool* pool = nullptr);

}  // namespace mvgs
