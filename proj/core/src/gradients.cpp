#include "mvgs/gradients.hpp"

#include <algorithm>
#include <cmath>

#include "blend_common.hpp"
#include "mvgs/error.hpp"
#include "mvgs/thread_pool.hpp"

namespace mvgs {

void ParamGrads::resize(std::size_t n) {
    d_mean.assign(n, {});
    d_log_scale.assign(n, {});
    d_quat.assign(n, Quat{0.0, 0.0, 0.0, 0.0});
    d_opacity_logit.assign(n, 0.0);
    d_color.assign(n, {});
}

std::vector<double> ParamGrads::flatten() const {
    std::vector<double> out;
    out.reserve(size() * 14);
    for (std::size_t i = 0; i < size(); ++i) {
        for (int k = 0; k < 3; ++k) out.push_back(d_mean[i][k]);
        for (int k = 0; k < 3; ++k) out.push_back(d_log_scale[i][k]);
        for (int k = 0; k < 4; ++k) out.push_back(d_quat[i][k]);
        out.push_back(d_opacity_logit[i]);
        for (int k = 0; k < 3; ++k) out.push_back(d_color[i][k]);
    }
    return out;
}

bool ParamGrads::all_finite() const {
    for (double v : flatten())
        if (!std::isfinite(v)) return false;
    return true;
}

void StepGradStats::resize(std::size_t n_gaussians, int views) {
    n_views = views;
    vec_sum.assign(n_gaussians * static_cast<std::size_t>(views), {});
    norm_sum.assign(n_gaussians, 0.0);
    visible.assign(n_gaussians, 0);
    max_radius.assign(n_gaussians, 0.0);
}

DensifyMetrics step_metrics(const StepGradStats& stats, std::size_t g) {
    DensifyMetrics m;
    Vec2 total;
    for (int v = 0; v < stats.n_views; ++v) {
        const Vec2 s = stats.view_sum(g, v);
        total += s;
        m.e2 += norm(s);
    }
    m.e_old = norm(total);
    m.e1 = stats.norm_sum[g];
    m.valid = stats.visible[g] != 0;
    return m;
}

void GradAccumulator::resize(std::size_t n) {
    e_old_sum.assign(n, 0.0);
    e1_sum.assign(n, 0.0);
    e2_sum.assign(n, 0.0);
    denom.assign(n, 0);
    max_screen_radius.assign(n, 0.0);
}

void GradAccumulator::reset() { resize(size()); }

void GradAccumulator::add(const StepGradStats& stats) {
    if (stats.norm_sum.size() != size()) throw Error("GradAccumulator::add: gaussian count mismatch");
    for (std::size_t g = 0; g < size(); ++g) {
        if (!stats.visible[g]) continue;
        const DensifyMetrics m = step_metrics(stats, g);
        e_old_sum[g] += m.e_old;
        e1_sum[g] += m.e1;
        e2_sum[g] += m.e2;
        denom[g] += 1;
        max_screen_radius[g] = std::max(max_screen_radius[g], stats.max_radius[g]);
    }
}

std::vector<DensifyMetrics> densify_metrics(const GradAccumulator& acc) {
    std::vector<DensifyMetrics> out(acc.size());
    for (std::size_t g = 0; g < acc.size(); ++g) {
        if (acc.denom[g] == 0) continue;
        const double d = acc.denom[g];
        out[g] = {acc.e_old_sum[g] / d, acc.e1_sum[g] / d, acc.e2_sum[g] / d, true};
    }
    return out;
}

PixelGrads PixelGrads::zeros(const RenderOutput& out, bool with_depth) {
    PixelGrads p;
    for (const ViewRender& v : out.views) {
        p.d_color.emplace_back(v.color.size(), 0.0);
        if (with_depth) p.d_depth.emplace_back(v.depth.size(), 0.0);
    }
    return p;
}

namespace {

// Gradient partials for one bin entry, summed over the lanes of one block.
struct EntryGrad {
    Vec2 d_mean2d;
    Sym2 d_conic;
    double d_depth = 0.0;
    double d_opacity = 0.0;
    Vec3 d_color;
    Vec2 ndc_sum;
    double ndc_norm = 0.0;
};

struct Contributor {
    std::size_t entry;
    detail::SplatEval e;
    double t;  // transmittance in front of this gaussian
};

}  // namespace

BackwardResult backward(const RenderPlan& plan, const RenderOutput& forward, const std::vector<Gaussian3D>& gaussians,
                        const std::vector<Camera>& cams, const PixelGrads& pixel_grads, const RenderSettings& settings,
                        ThreadPool* pool) {
    const std::size_t n_slots = plan.views.size();
    const std::size_t n_g = gaussians.size();
    if (forward.views.size() != n_slots || forward.projected.size() != n_slots ||
        forward.binning.bin_index.size() != n_slots)
        throw Error("backward: forward state does not match the plan");
    for (const auto& p : forward.projected)
        if (p.size() != n_g) throw Error("backward: forward state does not match the gaussian count");
    if (pixel_grads.d_color.size() != n_slots) throw Error("backward: one color gradient buffer per view required");
    const bool with_depth = !pixel_grads.d_depth.empty();
    if (with_depth && pixel_grads.d_depth.size() != n_slots)
        throw Error("backward: one depth gradient buffer per view required");
    for (std::size_t s = 0; s < n_slots; ++s) {
        if (pixel_grads.d_color[s].size() != forward.views[s].color.size())
            throw Error("backward: color gradient buffer has the wrong size");
        if (with_depth && pixel_grads.d_depth[s].size() != forward.views[s].depth.size())
            throw Error("backward: depth gradient buffer has the wrong size");
    }

    std::vector<double> opacity(n_g);
    for (std::size_t i = 0; i < n_g; ++i) opacity[i] = gaussians[i].opacity();

    // per-block, per-entry partials
    std::vector<std::vector<EntryGrad>> partial(plan.blocks.size());
    parallel_for(pool, plan.blocks.size(), [&](std::size_t bi) {
        const RenderBlock& block = plan.blocks[bi];
        const auto slot = static_cast<std::size_t>(block.slot);
        const TileBin* bin = forward.binning.find(block.slot, block.tile);
        if (bin == nullptr) return;
        const auto& entries = bin->entries;
        const Camera& cam = cams[static_cast<std::size_t>(plan.views[slot])];
        const ViewRender& view = forward.views[slot];
        const auto& projected = forward.projected[slot];
        const double half_w = 0.5 * cam.width;
        const double half_h = 0.5 * cam.height;
        auto& acc = partial[bi];
        acc.assign(entries.size(), EntryGrad{});
        std::vector<Contributor> contrib;
        for (int p : block.lanes) {
            if (p < 0) continue;
            const auto pi = static_cast<std::size_t>(p);
            if (!view.rendered[pi]) throw Error("backward: pixel missing from the forward pass");
            const Vec3 gc{pixel_grads.d_color[slot][pi * 3], pixel_grads.d_color[slot][pi * 3 + 1],
                          pixel_grads.d_color[slot][pi * 3 + 2]};
            double gd = 0.0;
            if (with_depth && !(view.transmittance[pi] > settings.background_t)) gd = pixel_grads.d_depth[slot][pi];
            if (gc.x == 0.0 && gc.y == 0.0 && gc.z == 0.0 && gd == 0.0) continue;

            const double px = p % cam.width + 0.5;
            const double py = p / cam.width + 0.5;
            contrib.clear();
            double t = 1.0;
            const auto n = static_cast<std::size_t>(view.n_contrib[pi]);
            for (std::size_t k = 0; k < n; ++k) {
                const auto gi = static_cast<std::size_t>(entries[k].gaussian);
                const detail::SplatEval e = detail::eval_splat(projected[gi], opacity[gi], px, py);
                if (e.alpha < settings.alpha_min) continue;
                contrib.push_back({k, e, t});
                t *= 1.0 - e.alpha;
            }

            // rest = sum over later contributors of w_j alpha_j T_j / T_{i+1}
            double rest = 0.0;
            for (auto it = contrib.rbegin(); it != contrib.rend(); ++it) {
                const std::size_t k = it->entry;
                const auto gi = static_cast<std::size_t>(entries[k].gaussian);
                const Gaussian3D& g = gaussians[gi];
                const Projected2D& pr = projected[gi];
                const detail::SplatEval& e = it->e;
                const Vec3 c{detail::clamp_unit(g.color.x), detail::clamp_unit(g.color.y), detail::clamp_unit(g.color.z)};
                const double w_i = dot(gc, c) + gd * pr.depth;
                const double d_alpha = it->t * (w_i - rest);
                rest = e.alpha * w_i + (1.0 - e.alpha) * rest;

                EntryGrad& eg = acc[k];
                const double at = e.alpha * it->t;
                const Vec3 raw = g.color;
                eg.d_color.x += (raw.x >= 0.0 && raw.x <= 1.0) ? gc.x * at : 0.0;
                eg.d_color.y += (raw.y >= 0.0 && raw.y <= 1.0) ? gc.y * at : 0.0;
                eg.d_color.z += (raw.z >= 0.0 && raw.z <= 1.0) ? gc.z * at : 0.0;
                eg.d_depth += gd * at;
                eg.d_opacity += d_alpha * e.g;
                const double d_power = d_alpha * opacity[gi] * e.g;
                const Sym2& a = pr.cov2d_inv;
                const Vec2 dm{d_power * (a.xx * e.dx + a.xy * e.dy), d_power * (a.xy * e.dx + a.yy * e.dy)};
                eg.d_mean2d += dm;
                eg.d_conic += Sym2{-0.5 * d_power * e.dx * e.dx, -0.5 * d_power * e.dx * e.dy,
                                   -0.5 * d_power * e.dy * e.dy};
                const Vec2 ndc{dm.x * half_w, dm.y * half_h};
                eg.ndc_sum += ndc;
                eg.ndc_norm += norm(ndc);
            }
        }
    });

    // reduce in block order
    std::vector<std::vector<EntryGrad>> per_view(n_slots, std::vector<EntryGrad>(n_g));
    for (std::size_t bi = 0; bi < plan.blocks.size(); ++bi) {
        if (partial[bi].empty()) continue;
        const RenderBlock& block = plan.blocks[bi];
        const auto& entries = forward.binning.find(block.slot, block.tile)->entries;
        auto& dst = per_view[static_cast<std::size_t>(block.slot)];
        for (std::size_t k = 0; k < entries.size(); ++k) {
            const EntryGrad& s = partial[bi][k];
            EntryGrad& d = dst[static_cast<std::size_t>(entries[k].gaussian)];
            d.d_mean2d += s.d_mean2d;
            d.d_conic += s.d_conic;
            d.d_depth += s.d_depth;
            d.d_opacity += s.d_opacity;
            d.d_color += s.d_color;
            d.ndc_sum += s.ndc_sum;
            d.ndc_norm += s.ndc_norm;
        }
    }

    BackwardResult result;
    result.grads.resize(n_g);
    result.stats.resize(n_g, static_cast<int>(n_slots));
    // per gaussian over slots, in slot order
    parallel_for(pool, n_g, [&](std::size_t gi) {
        const Gaussian3D& g = gaussians[gi];
        for (std::size_t slot = 0; slot < n_slots; ++slot) {
            const Projected2D& pr = forward.projected[slot][gi];
            if (!pr.visible) continue;
            result.stats.visible[gi] = 1;
            result.stats.max_radius[gi] = std::max(result.stats.max_radius[gi], pr.radius);
            const EntryGrad& eg = per_view[slot][gi];
            result.stats.view_sum(gi, static_cast<int>(slot)) = eg.ndc_sum;
            result.stats.norm_sum[gi] += eg.ndc_norm;
            result.grads.d_color[gi] += eg.d_color;
            const double o = opacity[gi];
            result.grads.d_opacity_logit[gi] += eg.d_opacity * o * (1.0 - o);
            const ProjectionGrads pg = project_backward(g, cams[static_cast<std::size_t>(plan.views[slot])], pr,
                                                        eg.d_mean2d, eg.d_conic, eg.d_depth);
            result.grads.d_mean[gi] += pg.d_mean;
            result.grads.d_log_scale[gi] += pg.d_log_scale;
            Quat& q = result.grads.d_quat[gi];
            q = {q.w + pg.d_quat.w, q.x + pg.d_quat.x, q.y + pg.d_quat.y, q.z + pg.d_quat.z};
        }
    });
    return result;
}

}  // namespace mvgs
