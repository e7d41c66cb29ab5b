#include <gtest/gtest.h>

#include <cmath>

#include "mvgs/densify.hpp"
#include "mvgs/error.hpp"
#include "mvgs/projection.hpp"
#include "mvgs/rng.hpp"

using namespace mvgs;

namespace {

Gaussian3D blob(double scale, double opacity) {
    Gaussian3D g;
    g.log_scale = {std::log(scale), std::log(scale), std::log(scale)};
    g.opacity_logit = logit(opacity);
    g.color = {0.4, 0.5, 0.6};
    return g;
}

// Accumulator whose single step gives each gaussian the listed per-view NDC sums.
GradAccumulator accumulate(const std::vector<std::vector<Vec2>>& per_gaussian_views) {
    const std::size_t n = per_gaussian_views.size();
    int views = 1;
    for (const auto& v : per_gaussian_views) views = std::max(views, static_cast<int>(v.size()));
    StepGradStats s;
    s.resize(n, views);
    for (std::size_t g = 0; g < n; ++g) {
        for (std::size_t v = 0; v < per_gaussian_views[g].size(); ++v) {
            s.view_sum(g, static_cast<int>(v)) = per_gaussian_views[g][v];
            s.norm_sum[g] += norm(per_gaussian_views[g][v]);
        }
        s.visible[g] = per_gaussian_views[g].empty() ? 0 : 1;
    }
    GradAccumulator acc;
    acc.resize(n);
    acc.add(s);
    return acc;
}

bool same(const Gaussian3D& a, const Gaussian3D& b) {
    return a.mean.x == b.mean.x && a.mean.y == b.mean.y && a.mean.z == b.mean.z && a.log_scale.x == b.log_scale.x &&
           a.log_scale.y == b.log_scale.y && a.log_scale.z == b.log_scale.z && a.rotation.w == b.rotation.w &&
           a.rotation.x == b.rotation.x && a.opacity_logit == b.opacity_logit && a.color.x == b.color.x &&
           a.color.z == b.color.z;
}

}  // namespace

TEST(Adc, ZeroAccumulatorsOnlyPrune) {
    const std::vector<Gaussian3D> gs = {blob(0.01, 0.5), blob(0.2, 0.5), blob(0.01, 0.001), blob(0.9, 0.5)};
    GradAccumulator acc;
    acc.resize(gs.size());
    AdcConfig cfg;
    Rng rng(1);
    const AdcResult r = adc_step(gs, acc, cfg, rng);
    EXPECT_EQ(r.report.split, 0);
    EXPECT_EQ(r.report.cloned, 0);
    EXPECT_EQ(r.report.pruned, 2);
    EXPECT_EQ(r.report.total, 2);
    EXPECT_EQ(r.origin, (std::vector<int>{0, 1}));
}

TEST(Adc, CloneDuplicatesVerbatim) {
    const std::vector<Gaussian3D> gs = {blob(0.01, 0.5)};
    AdcConfig cfg;
    const GradAccumulator acc = accumulate({{{2.0 * cfg.grad_threshold, 0.0}}});
    Rng rng(2);
    const AdcResult r = adc_step(gs, acc, cfg, rng);
    ASSERT_EQ(r.gaussians.size(), 2u);
    EXPECT_EQ(r.report.cloned, 1);
    EXPECT_TRUE(same(r.gaussians[0], gs[0]));
    EXPECT_TRUE(same(r.gaussians[1], gs[0]));
    EXPECT_EQ(r.origin, (std::vector<int>{0, -1}));
}

TEST(Adc, SplitShrinksAndSamplesFromParent) {
    Gaussian3D parent = blob(0.2, 0.5);
    parent.mean = {0.3, -0.1, 0.2};
    AdcConfig cfg;
    cfg.split_count = 3;
    const GradAccumulator acc = accumulate({{{1.0, 0.0}}});
    Rng rng(3);
    const AdcResult r = adc_step({parent}, acc, cfg, rng);
    ASSERT_EQ(r.gaussians.size(), 3u);
    EXPECT_EQ(r.report.split, 1);
    for (const Gaussian3D& c : r.gaussians) {
        EXPECT_NEAR(c.max_scale(), 0.2 / 1.6, 1e-12);
        EXPECT_LT(norm(c.mean - parent.mean), 5 * 0.2);
        EXPECT_EQ(c.opacity_logit, parent.opacity_logit);
    }
}

TEST(Adc, CancellingViewsNeedMultiViewMetrics) {
    const std::vector<Gaussian3D> gs = {blob(0.01, 0.5), blob(0.2, 0.5)};
    const std::vector<std::vector<Vec2>> views = {{{1e-3, 0.0}, {-1e-3, 0.0}}, {{0.0, 1e-3}, {0.0, -1e-3}}};
    AdcConfig cfg;
    cfg.batch_views = 2;
    Rng rng(4);
    const AdcResult old = adc_step(gs, accumulate(views), cfg, rng);
    EXPECT_EQ(old.report.split + old.report.cloned, 0);

    cfg.metric_mode = MetricMode::multi_view;
    cfg.grad_threshold_split = cfg.grad_threshold;
    const AdcResult mv = adc_step(gs, accumulate(views), cfg, rng);
    EXPECT_EQ(mv.report.cloned, 1);
    EXPECT_EQ(mv.report.split, 1);
}

TEST(Adc, MultiViewMatchesEOldForSingleViewBatches) {
    Rng rng(5);
    std::vector<Gaussian3D> gs;
    std::vector<std::vector<Vec2>> grads;
    for (int i = 0; i < 200; ++i) {
        gs.push_back(blob(rng.uniform(0.005, 0.1), rng.uniform(0.1, 0.9)));
        grads.push_back({{rng.normal() * 3e-4, rng.normal() * 3e-4}});
    }
    const GradAccumulator acc = accumulate(grads);
    AdcConfig a;
    AdcConfig b;
    b.metric_mode = MetricMode::multi_view;
    Rng r1(9), r2(9);
    const AdcResult ra = adc_step(gs, acc, a, r1);
    const AdcResult rb = adc_step(gs, acc, b, r2);
    EXPECT_TRUE(rb.report.calibrated);
    EXPECT_EQ(ra.report.cloned, rb.report.cloned);
    EXPECT_EQ(ra.report.split, rb.report.split);
    EXPECT_EQ(ra.origin, rb.origin);
    EXPECT_GT(b.grad_threshold_split, 0.0);
}

TEST(Adc, CountIdentityAndDeterminism) {
    Rng rng(6);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<Gaussian3D> gs;
        std::vector<std::vector<Vec2>> grads;
        const int n = 20 + static_cast<int>(rng.uniform() * 50);
        for (int i = 0; i < n; ++i) {
            gs.push_back(blob(rng.uniform(0.005, 0.6), rng.uniform(0.001, 0.99)));
            grads.push_back({{rng.normal() * 4e-4, 0.0}, {rng.normal() * 4e-4, rng.normal() * 4e-4}});
        }
        AdcConfig cfg;
        cfg.metric_mode = trial % 2 ? MetricMode::multi_view : MetricMode::e_old;
        cfg.split_count = 2 + trial % 3;
        cfg.batch_views = 1 + trial % 4;
        AdcConfig cfg2 = cfg;
        Rng r1(static_cast<std::uint64_t>(trial)), r2(static_cast<std::uint64_t>(trial));
        const GradAccumulator acc = accumulate(grads);
        const AdcResult a = adc_step(gs, acc, cfg, r1);
        const AdcResult b = adc_step(gs, acc, cfg2, r2);
        const AdcReport& rep = a.report;
        EXPECT_EQ(rep.total, n + cfg.split_count * rep.split - rep.split + rep.cloned - rep.pruned);
        EXPECT_EQ(static_cast<int>(a.gaussians.size()), rep.total);
        ASSERT_EQ(a.gaussians.size(), b.gaussians.size());
        for (std::size_t i = 0; i < a.gaussians.size(); ++i) EXPECT_TRUE(same(a.gaussians[i], b.gaussians[i]));
        for (const Gaussian3D& g : a.gaussians) {
            EXPECT_GE(g.opacity(), cfg.prune_opacity * cfg.batch_views);
            EXPECT_LE(g.max_scale(), cfg.prune_scale_max);
        }
    }
}

TEST(Adc, RespectsGaussianCap) {
    std::vector<Gaussian3D> gs(10, blob(0.01, 0.5));
    std::vector<std::vector<Vec2>> grads(10, {{1.0, 0.0}});
    AdcConfig cfg;
    cfg.max_gaussians = 13;
    Rng rng(7);
    const AdcResult r = adc_step(gs, accumulate(grads), cfg, rng);
    EXPECT_EQ(r.gaussians.size(), 13u);
    EXPECT_EQ(r.report.cloned, 3);
}

TEST(Adc, SplitChildrenHaveSmallerFootprint) {
    Rng rng(8);
    Camera cam;
    cam = Camera::look_at({0, 0, -3}, {0, 0, 0}, {0, 1, 0});
    cam.set_intrinsics(64, 64, 0.9);
    for (int trial = 0; trial < 30; ++trial) {
        Gaussian3D parent = blob(0.1, 0.6);
        parent.log_scale = {std::log(rng.uniform(0.06, 0.3)), std::log(rng.uniform(0.01, 0.3)), std::log(rng.uniform(0.01, 0.3))};
        parent.rotation = normalized(Quat{rng.normal(), rng.normal(), rng.normal(), rng.normal()});
        AdcConfig cfg;
        const AdcResult r = adc_step({parent}, accumulate({{{1.0, 1.0}}}), cfg, rng);
        ASSERT_EQ(r.report.split, 1);
        const double parent_radius = project(parent, cam).radius;
        for (Gaussian3D c : r.gaussians) {
            c.mean = parent.mean;
            EXPECT_LE(project(c, cam).radius, parent_radius);
        }
    }
}

TEST(Adc, ValidatesConfig) {
    AdcConfig cfg;
    cfg.split_count = 1;
    EXPECT_THROW(cfg.validate(), Error);
    cfg = {};
    cfg.prune_opacity = 1.0;
    EXPECT_THROW(cfg.validate(), Error);
    cfg = {};
    cfg.interval = 0;
    EXPECT_THROW(cfg.validate(), Error);
    cfg = {};
    EXPECT_TRUE(cfg.due(500));
    EXPECT_FALSE(cfg.due(450));
    EXPECT_FALSE(cfg.due(550));
    EXPECT_FALSE(cfg.due(1600));
}

TEST(OpacityReset, Examples) {
    std::vector<Gaussian3D> gs = {blob(0.1, 0.99), blob(0.1, 0.005)};
    const double low = gs[1].opacity_logit;
    opacity_reset(gs, 0.01);
    EXPECT_NEAR(gs[0].opacity(), 0.01, 1e-15);
    EXPECT_EQ(gs[1].opacity_logit, low);
    const std::vector<Gaussian3D> once = gs;
    opacity_reset(gs, 0.01);
    EXPECT_EQ(gs[0].opacity_logit, once[0].opacity_logit);
    EXPECT_EQ(gs[1].opacity_logit, once[1].opacity_logit);
    EXPECT_THROW(opacity_reset(gs, 0.0), Error);
}
