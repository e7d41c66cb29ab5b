#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <cstring>

#include "mvgs/error.hpp"
#include "mvgs/rasterizer.hpp"
#include "mvgs/rng.hpp"
#include "mvgs/thread_pool.hpp"
#include "oracles.hpp"

using namespace mvgs;

namespace {

Projected2D splat_at(double x, double y, double depth, double sigma = 1.0) {
    Projected2D p;
    p.mean2d = {x, y};
    p.depth = depth;
    p.cov2d = {sigma * sigma, 0.0, sigma * sigma};
    p.cov2d_inv = inverse(p.cov2d);
    p.radius = 3.0 * sigma;
    p.visible = true;
    return p;
}

Gaussian3D colored(double opacity, Vec3 color) {
    Gaussian3D g;
    g.opacity_logit = logit(opacity);
    g.color = color;
    return g;
}

// Random per-tile subsets of each view, fraction `keep` of the tile.
std::vector<std::vector<std::vector<int>>> random_sets(Rng& rng, const std::vector<int>& views,
                                                       const std::vector<Camera>& cams, int tile, double keep) {
    std::vector<std::vector<std::vector<int>>> sets(views.size());
    for (std::size_t s = 0; s < views.size(); ++s) {
        const Camera& cam = cams[static_cast<std::size_t>(views[s])];
        const int n = tile_grid(cam, tile).count();
        for (int t = 0; t < n; ++t) {
            std::vector<int> px;
            for (int p : tile_pixels(cam, tile, t))
                if (rng.uniform() < keep) px.push_back(p);
            sets[s].push_back(px);
        }
    }
    return sets;
}

bool same_bits(double a, double b) { return std::memcmp(&a, &b, sizeof a) == 0; }

struct Fixture {
    SyntheticScene scene = make_synthetic(12, 150, 6, CameraLayout::orbit);
};

}  // namespace

TEST(Binning, SmallSplatLandsInOneTile) {
    Camera cam;
    cam.set_intrinsics(64, 64, 1.0);
    const std::vector<std::vector<Projected2D>> proj = {{splat_at(20.0, 20.0, 2.0, 0.5)}};
    const Binning b = bin_and_sort(proj, {cam}, 16);
    EXPECT_EQ(b.total_entries, 1u);
    ASSERT_EQ(b.bins.size(), 1u);
    EXPECT_EQ(b.bins[0].tx, 1);
    EXPECT_EQ(b.bins[0].ty, 1);
}

TEST(Binning, ViewsNeverMerge) {
    Camera cam;
    cam.set_intrinsics(64, 64, 1.0);
    const std::vector<std::vector<Projected2D>> proj = {{splat_at(20.0, 20.0, 2.0, 0.5)}, {splat_at(20.0, 20.0, 2.0, 0.5)}};
    const Binning b = bin_and_sort(proj, {cam, cam}, 16);
    ASSERT_EQ(b.bins.size(), 2u);
    EXPECT_NE(b.bins[0].view, b.bins[1].view);
    EXPECT_NE(b.find(0, 5), nullptr);
    EXPECT_NE(b.find(1, 5), nullptr);
    EXPECT_NE(b.find(0, 5), b.find(1, 5));
}

TEST(Binning, MatchesBruteForceAndSorted) {
    Fixture f;
    for (int tile : {8, 16, 32}) {
        std::vector<std::vector<Projected2D>> proj;
        for (const Camera& cam : f.scene.cameras) {
            std::vector<Projected2D> v;
            for (const Gaussian3D& g : f.scene.gaussians) v.push_back(project(g, cam));
            proj.push_back(v);
        }
        const Binning b = bin_and_sort(proj, f.scene.cameras, tile);
        std::set<std::tuple<int, int, int>> got;
        for (const TileBin& bin : b.bins) {
            const int tiles_x = tile_grid(f.scene.cameras[static_cast<std::size_t>(bin.view)], tile).tiles_x;
            for (std::size_t i = 0; i < bin.entries.size(); ++i) {
                got.insert({bin.view, bin.ty * tiles_x + bin.tx, bin.entries[i].gaussian});
                if (i > 0) {
                    const auto& a = bin.entries[i - 1];
                    const auto& c = bin.entries[i];
                    EXPECT_TRUE(a.depth < c.depth || (a.depth == c.depth && a.gaussian < c.gaussian));
                }
            }
        }
        EXPECT_EQ(got, oracle::brute_bins(proj, f.scene.cameras, tile));
        EXPECT_EQ(got.size(), b.total_entries);
    }
}

TEST(Binning, RejectsBadTileAndExplosion) {
    Camera cam;
    cam.set_intrinsics(64, 64, 1.0);
    const std::vector<std::vector<Projected2D>> proj = {{splat_at(32.0, 32.0, 2.0, 20.0)}};
    EXPECT_THROW(bin_and_sort(proj, {cam}, 12), Error);
    try {
        bin_and_sort(proj, {cam}, 8, 5);
        FAIL() << "expected binning explosion";
    } catch (const Error& e) {
        EXPECT_NE(std::string(e.what()).find("binning explosion"), std::string::npos);
    }
}

TEST(Blend, SingleCenteredSplat) {
    const std::vector<Gaussian3D> gs = {colored(0.5, {0.2, 0.4, 0.8})};
    const std::vector<Projected2D> proj = {splat_at(5.5, 5.5, 2.0)};
    const BlendResult r = blend_pixel(5.5, 5.5, {{0, 2.0}}, gs, proj, {});
    EXPECT_DOUBLE_EQ(r.color.x, 0.1);
    EXPECT_DOUBLE_EQ(r.color.y, 0.2);
    EXPECT_DOUBLE_EQ(r.color.z, 0.4);
    EXPECT_DOUBLE_EQ(r.transmittance, 0.5);
    EXPECT_DOUBLE_EQ(r.depth, 1.0);
}

TEST(Blend, TwoCoCenteredSplats) {
    Gaussian3D back = colored(0.5, {0.0, 1.0, 0.5});
    back.opacity_logit = 50.0;
    const std::vector<Gaussian3D> gs = {colored(0.5, {1.0, 0.0, 0.5}), back};
    const std::vector<Projected2D> proj = {splat_at(3.5, 3.5, 1.0), splat_at(3.5, 3.5, 2.0)};
    const BlendResult r = blend_pixel(3.5, 3.5, {{0, 1.0}, {1, 2.0}}, gs, proj, {});
    EXPECT_NEAR(r.color.x, 0.5, 1e-15);
    EXPECT_NEAR(r.color.y, 0.5, 1e-15);
    EXPECT_NEAR(r.color.z, 0.5, 1e-15);
    EXPECT_NEAR(r.transmittance, 0.0, 1e-15);
}

TEST(Blend, ClampsColorAndSkipsFaintSplats) {
    const std::vector<Gaussian3D> gs = {colored(0.5, {1.5, -0.3, 0.5}), colored(0.001, {1, 1, 1})};
    const std::vector<Projected2D> proj = {splat_at(0.5, 0.5, 1.0), splat_at(0.5, 0.5, 0.5)};
    const BlendResult r = blend_pixel(0.5, 0.5, {{1, 0.5}, {0, 1.0}}, gs, proj, {});
    EXPECT_DOUBLE_EQ(r.color.x, 0.5);
    EXPECT_DOUBLE_EQ(r.color.y, 0.0);
    EXPECT_DOUBLE_EQ(r.transmittance, 0.5);
}

TEST(Blend, MatchesStraightLineReference) {
    Rng rng(99);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<Gaussian3D> gs;
        std::vector<Projected2D> proj;
        std::vector<TileBinEntry> entries;
        for (int i = 0; i < 20; ++i) {
            gs.push_back(colored(rng.uniform(0.3, 0.99), {rng.uniform(), rng.uniform(), rng.uniform()}));
            proj.push_back(splat_at(rng.uniform(0, 8), rng.uniform(0, 8), rng.uniform(1, 5), rng.uniform(0.5, 3.0)));
        }
        for (int i = 0; i < 20; ++i) entries.push_back({i, proj[static_cast<std::size_t>(i)].depth});
        std::sort(entries.begin(), entries.end(), [](auto& a, auto& b) { return a.depth < b.depth; });
        for (int y = 0; y < 8; ++y) {
            for (int x = 0; x < 8; ++x) {
                const BlendResult r = blend_pixel(x + 0.5, y + 0.5, entries, gs, proj, {});
                const oracle::Blend o = oracle::reference_blend(x + 0.5, y + 0.5, gs, proj);
                EXPECT_NEAR(r.color.x, o.color[0], 2e-3);
                EXPECT_NEAR(r.color.y, o.color[1], 2e-3);
                EXPECT_NEAR(r.color.z, o.color[2], 2e-3);
            }
        }
    }
}

TEST(Render, FullImageMatchesReferenceBlend) {
    Fixture f;
    const RenderPlan plan = make_full_plan({0, 3}, f.scene.cameras, 16);
    RenderSettings st;
    st.early_termination = false;
    st.projection.radius_sigma = 5.0;
    const RenderOutput out = render(plan, f.scene.gaussians, f.scene.cameras, st);
    for (std::size_t s = 0; s < 2; ++s) {
        const Camera& cam = f.scene.cameras[static_cast<std::size_t>(plan.views[s])];
        for (int y = 0; y < cam.height; y += 3) {
            for (int x = 0; x < cam.width; x += 3) {
                const oracle::Blend o = oracle::reference_blend(x + 0.5, y + 0.5, f.scene.gaussians, out.projected[s]);
                const auto i = static_cast<std::size_t>(y * cam.width + x);
                for (int c = 0; c < 3; ++c) EXPECT_NEAR(out.views[s].color[i * 3 + c], o.color[c], 1e-6);
                EXPECT_NEAR(out.views[s].transmittance[i], o.transmittance, 1e-6);
            }
        }
    }
}

TEST(Render, EarlyTerminationIsSound) {
    Fixture f;
    const RenderPlan plan = make_full_plan({0, 1, 2, 3, 4, 5}, f.scene.cameras, 16);
    RenderSettings on, off;
    off.early_termination = false;
    const RenderOutput a = render(plan, f.scene.gaussians, f.scene.cameras, on);
    const RenderOutput b = render(plan, f.scene.gaussians, f.scene.cameras, off);
    double worst = 0.0;
    for (std::size_t s = 0; s < a.views.size(); ++s)
        for (std::size_t i = 0; i < a.views[s].color.size(); ++i)
            worst = std::max(worst, std::abs(a.views[s].color[i] - b.views[s].color[i]));
    EXPECT_LE(worst, 1e-4);
}

TEST(Render, BackgroundDepthSentinel) {
    Camera cam;
    cam.set_intrinsics(16, 16, 1.0);
    Gaussian3D g = colored(0.9, {1, 1, 1});
    g.mean = {0, 0, 3};
    g.log_scale = {std::log(0.05), std::log(0.05), std::log(0.05)};
    const RenderOutput out = render(make_full_plan({0}, {cam}, 16), {g}, {cam});
    EXPECT_EQ(out.views[0].depth[0], cam.zfar);
    EXPECT_EQ(out.views[0].transmittance[0], 1.0);
    const std::size_t center = 8 * 16 + 8;
    EXPECT_LT(out.views[0].transmittance[center], 0.999);
    EXPECT_NEAR(out.views[0].depth[center] / (1.0 - out.views[0].transmittance[center]), 3.0, 1e-9);
}

TEST(Occupancy, FullModeIsOne) {
    Fixture f;
    const RenderOutput out = render(make_full_plan({0}, f.scene.cameras, 16), f.scene.gaussians, f.scene.cameras);
    const OccupancyReport r = occupancy_report(out, 16);
    EXPECT_EQ(r.threads_launched, 64 * 64);
    EXPECT_DOUBLE_EQ(r.occupancy, 1.0);
}

TEST(Occupancy, NaiveMaskedSinglePixel) {
    Camera cam;
    cam.set_intrinsics(16, 16, 1.0);
    std::vector<std::vector<std::vector<int>>> sets = {{{37}}};
    const RenderPlan plan = make_partial_plan(RenderMode::naive_masked, {0}, sets, {cam}, 16);
    const OccupancyReport r = occupancy_report(render(plan, {}, {cam}), 16);
    EXPECT_EQ(r.threads_launched, 256);
    EXPECT_EQ(r.threads_active, 1);
    EXPECT_DOUBLE_EQ(r.occupancy, 1.0 / 256.0);
}

TEST(Occupancy, ThreadEfficientBlocksPerView) {
    Fixture f;
    Rng rng(3);
    const std::vector<int> views = {0, 1, 2, 3};
    std::vector<std::vector<std::vector<int>>> sets(4);
    for (std::size_t s = 0; s < 4; ++s) {
        const Camera& cam = f.scene.cameras[s];
        for (int t = 0; t < tile_grid(cam, 16).count(); ++t) {
            std::vector<int> px = tile_pixels(cam, 16, t);
            rng.shuffle(px);
            px.resize(t == 0 ? 64 : 0);
            sets[s].push_back(px);
        }
    }
    const RenderPlan plan = make_partial_plan(RenderMode::thread_efficient, views, sets, f.scene.cameras, 16);
    ASSERT_EQ(plan.blocks.size(), 4u);
    for (const RenderBlock& b : plan.blocks) EXPECT_EQ(b.lanes.size(), 64u);
    const OccupancyReport r = occupancy_report(render(plan, f.scene.gaussians, f.scene.cameras), 16);
    EXPECT_DOUBLE_EQ(r.occupancy, 1.0);
}

TEST(Occupancy, PaddingToWarp) {
    Camera cam;
    cam.set_intrinsics(16, 16, 1.0);
    std::vector<std::vector<std::vector<int>>> sets = {{{1, 2, 3, 40, 50}}};
    const RenderPlan plan = make_partial_plan(RenderMode::thread_efficient, {0}, sets, {cam}, 16);
    ASSERT_EQ(plan.blocks.size(), 1u);
    EXPECT_EQ(plan.blocks[0].lanes.size(), 32u);
    EXPECT_EQ(plan.block_size, 32);
}

TEST(Occupancy, ThreadEfficientDominatesNaive) {
    Fixture f;
    Rng rng(8);
    for (double keep : {0.05, 0.25, 0.5, 0.9}) {
        const std::vector<int> views = {0, 2, 4};
        const auto sets = random_sets(rng, views, f.scene.cameras, 16, keep);
        const RenderPlan te = make_partial_plan(RenderMode::thread_efficient, views, sets, f.scene.cameras, 16);
        const RenderPlan nm = with_mode(te, RenderMode::naive_masked, f.scene.cameras);
        const double o_te = occupancy_report(render(te, f.scene.gaussians, f.scene.cameras), 16).occupancy;
        const double o_nm = occupancy_report(render(nm, f.scene.gaussians, f.scene.cameras), 16).occupancy;
        EXPECT_GE(o_te, o_nm);
        EXPECT_NEAR(o_nm, keep, 0.05);
    }
}

TEST(Render, ModesAndWorkersAgreeBitwise) {
    Fixture f;
    Rng rng(4);
    const std::vector<int> views = {1, 3, 5, 0};
    const auto sets = random_sets(rng, views, f.scene.cameras, 16, 0.3);
    const RenderPlan te = make_partial_plan(RenderMode::thread_efficient, views, sets, f.scene.cameras, 16);
    const RenderPlan nm = with_mode(te, RenderMode::naive_masked, f.scene.cameras);
    const RenderPlan full = with_mode(te, RenderMode::full, f.scene.cameras);
    const RenderOutput ref = render(full, f.scene.gaussians, f.scene.cameras);
    for (std::size_t workers : {1u, 2u, 8u}) {
        ThreadPool pool(workers);
        for (const RenderPlan* plan : {&te, &nm, &full}) {
            const RenderOutput out = render(*plan, f.scene.gaussians, f.scene.cameras, {}, &pool);
            for (std::size_t s = 0; s < views.size(); ++s) {
                for (std::size_t i = 0; i < out.views[s].rendered.size(); ++i) {
                    if (!out.views[s].rendered[i]) continue;
                    for (int c = 0; c < 3; ++c)
                        ASSERT_TRUE(same_bits(out.views[s].color[i * 3 + c], ref.views[s].color[i * 3 + c]));
                    ASSERT_TRUE(same_bits(out.views[s].depth[i], ref.views[s].depth[i]));
                    ASSERT_TRUE(same_bits(out.views[s].transmittance[i], ref.views[s].transmittance[i]));
                }
            }
        }
    }
}

TEST(Render, RejectsInvalidPlans) {
    Fixture f;
    EXPECT_THROW(make_full_plan({9}, f.scene.cameras, 16), Error);
    std::vector<std::vector<std::vector<int>>> sets(1, std::vector<std::vector<int>>(16));
    sets[0][0] = {64 * 64};
    EXPECT_THROW(make_partial_plan(RenderMode::thread_efficient, {0}, sets, f.scene.cameras, 16), Error);
    sets[0][0] = {20};
    EXPECT_THROW(make_partial_plan(RenderMode::thread_efficient, {0}, sets, f.scene.cameras, 16), Error);
    sets[0][0] = {3, 3};
    EXPECT_THROW(make_partial_plan(RenderMode::thread_efficient, {0}, sets, f.scene.cameras, 16), Error);
    RenderPlan plan = make_full_plan({0}, f.scene.cameras, 16);
    plan.views[0] = 17;
    EXPECT_THROW(render(plan, f.scene.gaussians, f.scene.cameras), Error);
}

TEST(Render, Deterministic) {
    Fixture f;
    const RenderPlan plan = make_full_plan({2}, f.scene.cameras, 8);
    const RenderOutput a = render(plan, f.scene.gaussians, f.scene.cameras);
    const RenderOutput b = render(plan, f.scene.gaussians, f.scene.cameras);
    EXPECT_EQ(a.views[0].color, b.views[0].color);
    EXPECT_EQ(a.views[0].depth, b.views[0].depth);
}
