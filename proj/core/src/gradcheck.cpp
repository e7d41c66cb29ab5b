#include "mvgs/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "mvgs/error.hpp"
#include "mvgs/gradients.hpp"
#include "mvgs/rng.hpp"

namespace mvgs {

std::string param_name(int k) {
    static const char* names[14] = {"mean.x",      "mean.y",      "mean.z", "log_scale.x", "log_scale.y",
                                    "log_scale.z", "quat.w",      "quat.x", "quat.y",      "quat.z",
                                    "opacity",     "color.r",     "color.g", "color.b"};
    if (k < 0 || k >= 14) throw Error(fmt::format("parameter index {} out of range", k));
    return names[k];
}

namespace {

double& param_ref(Gaussian3D& g, int k) {
    if (k < 3) return g.mean[k];
    if (k < 6) return g.log_scale[k - 3];
    if (k < 10) return g.rotation[k - 6];
    if (k == 10) return g.opacity_logit;
    return g.color[k - 11];
}

}  // namespace

GradcheckResult gradcheck(const GradcheckOptions& opt, ThreadPool* pool) {
    if (opt.gaussians < 1 || opt.gaussians > 10) throw Error("gradcheck: --gaussians must lie in [1, 10]");
    if (opt.size < 8 || opt.size > 16) throw Error("gradcheck: --size must lie in [8, 16]");
    if (opt.views < 1 || opt.views > 8) throw Error("gradcheck: --views must lie in [1, 8]");

    Rng rng = Rng::derive(opt.seed, 0x67c);
    SyntheticOptions so;
    so.width = so.height = opt.size;
    SyntheticScene scene = make_synthetic(opt.seed, opt.gaussians, std::max(2, opt.views), CameraLayout::random, so);
    for (Gaussian3D& g : scene.gaussians) {
        g.mean = 0.5 * g.mean;
        g.log_scale = {std::log(rng.uniform(0.2, 0.4)), std::log(rng.uniform(0.2, 0.4)), std::log(rng.uniform(0.2, 0.4))};
        g.rotation = normalized(Quat{1.0 + 0.2 * rng.normal(), 0.3 * rng.normal(), 0.3 * rng.normal(), 0.3 * rng.normal()});
        g.opacity_logit = logit(rng.uniform(0.3, 0.8));
        g.color = {rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9)};
    }
    const std::vector<Camera>& cams = scene.cameras;

    RenderSettings st;
    st.tile_size = 8;
    st.alpha_min = 0.0;
    st.early_termination = false;
    st.projection.radius_sigma = 100.0;

    SsimWindow win;
    win.half_width = std::min(5, (opt.size - 1) / 2 - 1);
    win.sigma2d = 1.5;
    win.sigma3d = win.sigma2d * 3.0 / cams[0].fx;

    std::vector<int> views(static_cast<std::size_t>(opt.views));
    for (int v = 0; v < opt.views; ++v) views[static_cast<std::size_t>(v)] = v;
    const RenderPlan plan = make_full_plan(views, cams, st.tile_size);

    std::vector<Image> targets;
    for (int v = 0; v < opt.views; ++v) {
        Image t(opt.size, opt.size);
        for (double& p : t.pixels) p = rng.uniform();
        targets.push_back(std::move(t));
    }

    const RenderOutput base = render(plan, scene.gaussians, cams, st, pool);
    std::vector<MergedFrame> frozen;
    for (int s = 0; s < opt.views; ++s)
        frozen.push_back(view_frame(base.views[static_cast<std::size_t>(s)], targets[static_cast<std::size_t>(s)],
                                    cams[static_cast<std::size_t>(s)], s, st.background_t));

    auto frames_of = [&](const RenderOutput& out) {
        std::vector<MergedFrame> frames;
        for (int s = 0; s < opt.views; ++s) {
            const auto i = static_cast<std::size_t>(s);
            MergedFrame f = view_frame(out.views[i], targets[i], cams[i], s, st.background_t);
            f.world = frozen[i].world;
            f.background = frozen[i].background;
            frames.push_back(std::move(f));
        }
        return frames;
    };

    PixelGrads pg = PixelGrads::zeros(base);
    {
        const std::vector<MergedFrame> frames = frames_of(base);
        for (const MergedFrame& f : frames) scatter_grad(f, frame_loss(opt.loss, f, win, opt.lambda).grad, pg);
    }
    const BackwardResult br = backward(plan, base, scene.gaussians, cams, pg, st, pool);
    const std::vector<double> analytic = br.grads.flatten();

    auto loss_of = [&](const std::vector<Gaussian3D>& gs) {
        const RenderOutput out = render(plan, gs, cams, st, pool);
        double total = 0.0;
        for (const MergedFrame& f : frames_of(out)) total += frame_loss(opt.loss, f, win, opt.lambda).value;
        return total;
    };

    GradcheckResult res;
    double worst_score = -1.0;
    for (std::size_t g = 0; g < scene.gaussians.size(); ++g) {
        for (int k = 0; k < 14; ++k) {
            std::vector<Gaussian3D> plus = scene.gaussians;
            std::vector<Gaussian3D> minus = scene.gaussians;
            param_ref(plus[g], k) += opt.step;
            param_ref(minus[g], k) -= opt.step;
            const double numeric = (loss_of(plus) - loss_of(minus)) / (2.0 * opt.step);
            const double a = analytic[g * 14 + static_cast<std::size_t>(k)];
            const double diff = std::abs(a - numeric);
            const double scale = std::max(std::abs(a), std::abs(numeric));
            const double rel = scale > 0.0 ? diff / scale : 0.0;
            const bool ok = diff <= opt.abs_tol || rel <= opt.rel_tol;
            ++res.checked;
            if (!ok) ++res.failed;
            const double score = diff > opt.abs_tol ? rel : 0.0;
            if (score > worst_score) {
                worst_score = score;
                res.worst_rel = score;
                res.worst_gaussian = static_cast<int>(g);
                res.worst_param = param_name(k);
                res.worst_analytic = a;
                res.worst_numeric = numeric;
            }
        }
    }
    return res;
}

}  // namespace mvgs
